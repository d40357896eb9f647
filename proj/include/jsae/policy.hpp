#pragma once

// Policy heads, critic, GAE, and the VPG / PPO updates. The updates are
// templates over the head so the Gaussian internal policy (acting in action
// embedding space) and the categorical no-embedding baseline share them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "jsae/errors.hpp"
#include "jsae/nn.hpp"
#include "jsae/rng.hpp"

namespace jsae {

template <class A>
struct PolicySample {
  A action{};
  double logp = 0.0;
};

// ---------------------------------------------------------------------------
// Diagonal Gaussian over the action-embedding space; state-independent,
// learnable log standard deviation.

struct GaussianPolicy {
  using Action = std::vector<double>;

  Mlp actor;  // input -> mean
  std::vector<double> log_std;

  struct Grad {
    Mlp actor;
    std::vector<double> log_std;
  };

  struct Optimizer {
    Adam actor, log_std;
    Optimizer() = default;
    Optimizer(const GaussianPolicy& p, double learning_rate)
        : actor(p.actor, AdamConfig{learning_rate}), log_std(p.log_std.size(), AdamConfig{learning_rate}) {}
    void step(GaussianPolicy& p, const Grad& g) {
      actor.step(p.actor, g.actor);
      log_std.step(p.log_std, g.log_std);
    }
  };

  std::size_t input_dim() const { return actor.input_dim(); }

  Grad zero_grad() const { return {actor.zeros_like(), std::vector<double>(log_std.size(), 0.0)}; }

  std::vector<double> mean(std::span<const double> input) const {
    auto mu = mlp_forward(actor, input);
    for (std::size_t j = 0; j < mu.size(); ++j) {
      if (!std::isfinite(mu[j])) throw NumericalError("gaussian policy: non-finite mean");
    }
    return mu;
  }

  double log_prob(std::span<const double> input, const Action& a) const {
    return gaussian_logprob(mean(input), log_std, a).logp;
  }

  /// Adds coeff * d logp(a | input) / d params into `grad`; returns logp.
  double accumulate_log_prob_grad(std::span<const double> input, const Action& a, double coeff,
                                  Grad& grad) const {
    ForwardCache cache;
    const auto mu = mlp_forward(actor, input, &cache);
    const auto lp = gaussian_logprob(mu, log_std, a);
    std::vector<double> d_mu(lp.d_mean.size());
    for (std::size_t j = 0; j < d_mu.size(); ++j) {
      d_mu[j] = coeff * lp.d_mean[j];
      grad.log_std[j] += coeff * lp.d_log_std[j];
    }
    mlp_backward(actor, cache, d_mu, grad.actor, false);
    return lp.logp;
  }

  /// sum_j (log_std_j + 0.5 ln(2 pi e)); independent of the input.
  double entropy(std::span<const double> /*input*/ = {}) const {
    double h = 0.0;
    for (double s : log_std) h += s + 0.5 * (kLog2Pi + 1.0);
    return h;
  }
};

inline GaussianPolicy make_gaussian_policy(std::size_t input_dim, std::size_t action_dim,
                                           const std::vector<std::size_t>& hidden, double std_init, Rng& rng) {
  if (!(std_init > 0.0)) throw ConfigError("initial policy std must be positive");
  GaussianPolicy p;
  p.actor = make_mlp(input_dim, hidden, action_dim, Activation::identity, rng);
  p.log_std.assign(action_dim, std::log(std_init));
  return p;
}

/// e = mean(x) + std * N(0, I), with its log density.
inline PolicySample<std::vector<double>> sample_action_embedding(const GaussianPolicy& policy,
                                                                 std::span<const double> x, Rng& rng) {
  const auto mu = policy.mean(x);
  PolicySample<std::vector<double>> s;
  s.action.resize(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) s.action[j] = mu[j] + std::exp(policy.log_std[j]) * rng.normal();
  s.logp = gaussian_logprob(mu, policy.log_std, s.action).logp;
  return s;
}

// ---------------------------------------------------------------------------
// Categorical policy over raw actions (no-embedding baseline).

struct CategoricalPolicy {
  using Action = int;

  Mlp actor;  // input -> logits

  struct Grad {
    Mlp actor;
  };

  struct Optimizer {
    Adam actor;
    Optimizer() = default;
    Optimizer(const CategoricalPolicy& p, double learning_rate) : actor(p.actor, AdamConfig{learning_rate}) {}
    void step(CategoricalPolicy& p, const Grad& g) { actor.step(p.actor, g.actor); }
  };

  std::size_t input_dim() const { return actor.input_dim(); }

  Grad zero_grad() const { return {actor.zeros_like()}; }

  std::vector<double> logits(std::span<const double> input) const {
    auto l = mlp_forward(actor, input);
    for (double v : l) {
      if (!std::isfinite(v)) throw NumericalError("categorical policy: non-finite logit");
    }
    return l;
  }

  double log_prob(std::span<const double> input, Action a) const {
    const auto l = logits(input);
    return l.at(static_cast<std::size_t>(a)) - log_sum_exp(l);
  }

  double accumulate_log_prob_grad(std::span<const double> input, Action a, double coeff, Grad& grad) const {
    ForwardCache cache;
    const auto l = mlp_forward(actor, input, &cache);
    // d logp / d logits = one_hot(a) - softmax = -(softmax_nll gradient)
    auto nll = softmax_nll(l, static_cast<std::size_t>(a));
    for (double& v : nll.grad) v *= -coeff;
    mlp_backward(actor, cache, nll.grad, grad.actor, false);
    return -nll.loss;
  }

  double entropy(std::span<const double> input) const {
    const auto p = softmax(logits(input));
    double h = 0.0;
    for (double q : p) {
      if (q > 0.0) h -= q * std::log(q);
    }
    return h;
  }
};

inline CategoricalPolicy make_categorical_policy(std::size_t input_dim, std::size_t action_count,
                                                 const std::vector<std::size_t>& hidden, Rng& rng) {
  CategoricalPolicy p;
  p.actor = make_mlp(input_dim, hidden, action_count, Activation::identity, rng);
  return p;
}

inline PolicySample<int> sample_categorical(const CategoricalPolicy& policy, std::span<const double> input,
                                            Rng& rng) {
  const auto l = policy.logits(input);
  const auto p = softmax(l);
  PolicySample<int> s;
  s.action = static_cast<int>(sample_index(p, rng));
  s.logp = l[static_cast<std::size_t>(s.action)] - log_sum_exp(l);
  return s;
}

// ---------------------------------------------------------------------------
// Critic

inline Mlp make_critic(std::size_t input_dim, const std::vector<std::size_t>& hidden, Rng& rng) {
  return make_mlp(input_dim, hidden, 1, Activation::identity, rng);
}

inline double critic_value(const Mlp& critic, std::span<const double> input) {
  return mlp_forward(critic, input)[0];
}

/// mean over `indices` of (V(input_i) - target_i)^2; gradient added to `grad`.
inline double critic_loss(const Mlp& critic, const std::vector<std::vector<double>>& inputs,
                          std::span<const double> targets, std::span<const std::size_t> indices,
                          Mlp* grad = nullptr) {
  if (indices.empty()) throw ConfigError("critic_loss: empty batch");
  const double scale = 1.0 / static_cast<double>(indices.size());
  ForwardCache cache;
  double total = 0.0;
  for (std::size_t i : indices) {
    const double v = mlp_forward(critic, inputs[i], grad ? &cache : nullptr)[0];
    const double diff = v - targets[i];
    total += diff * diff;
    if (grad) {
      const double g = 2.0 * diff * scale;
      mlp_backward(critic, cache, std::span<const double>(&g, 1), *grad, false);
    }
  }
  return total * scale;
}

// ---------------------------------------------------------------------------
// Advantage estimation

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// GAE over a sequence of segments. `boundary[t]` marks the last step of a
/// segment (episode end or truncation); `terminal[t]` marks a true episode
/// end, where nothing is bootstrapped. At non-terminal boundaries
/// `next_values[t]` holds V(s_{t+1}); elsewhere the successor value is
/// values[t + 1] and next_values is ignored.
///   delta_t = r_t + gamma V(s_{t+1}) (1 - terminal_t) - V(s_t)
///   A_t     = delta_t + gamma lambda A_{t+1} (within the segment)
inline GaeResult compute_gae_segments(std::span<const double> rewards, std::span<const double> values,
                                      std::span<const double> next_values, std::span<const std::uint8_t> terminal,
                                      std::span<const std::uint8_t> boundary, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || next_values.size() != n || terminal.size() != n || boundary.size() != n) {
    throw ConfigError("compute_gae: length mismatch");
  }
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const bool last = boundary[t] || t + 1 == n;
    double next_v = last ? next_values[t] : values[t + 1];
    if (terminal[t]) next_v = 0.0;
    const double delta = rewards[t] + gamma * next_v - values[t];
    running = delta + (last ? 0.0 : gamma * lambda * running);
    r.advantages[t] = running;
    r.returns[t] = running + values[t];
  }
  return r;
}

/// Convenience form: `dones[t]` ends an episode (no bootstrap); the final
/// step, if not done, bootstraps from `last_value`.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                             std::span<const std::uint8_t> dones, double gamma, double lambda,
                             double last_value = 0.0) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ConfigError("compute_gae: length mismatch");
  std::vector<double> next(n, 0.0);
  if (n > 0) next[n - 1] = last_value;
  return compute_gae_segments(rewards, values, next, dones, dones, gamma, lambda);
}

/// Zero mean, unit (population) standard deviation; untouched for size < 2.
inline void normalize_advantages(std::vector<double>& adv) {
  if (adv.size() < 2) return;
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= static_cast<double>(adv.size());
  const double sd = std::sqrt(var);
  if (sd < 1e-12) {
    for (double& a : adv) a -= mean;
    return;
  }
  for (double& a : adv) a = (a - mean) / sd;
}

// ---------------------------------------------------------------------------
// Rollouts

template <class A>
struct RolloutBatch {
  std::vector<std::vector<double>> inputs;  // policy / critic input per step
  std::vector<A> actions;
  std::vector<double> logp_old;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> next_values;  // set at segment ends
  std::vector<std::uint8_t> terminal;
  std::vector<std::uint8_t> boundary;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return rewards.size(); }

  void add(std::vector<double> input, A action, double logp, double reward, double value, bool done) {
    inputs.push_back(std::move(input));
    actions.push_back(std::move(action));
    logp_old.push_back(logp);
    rewards.push_back(reward);
    values.push_back(value);
    next_values.push_back(0.0);
    terminal.push_back(done ? 1 : 0);
    boundary.push_back(done ? 1 : 0);
  }

  // Ends the current segment; `bootstrap` is V(s_{t+1}) for truncated segments.
  void end_segment(double bootstrap) {
    if (rewards.empty()) return;
    boundary.back() = 1;
    next_values.back() = terminal.back() ? 0.0 : bootstrap;
  }

  void compute_advantages(double gamma, double lambda) {
    auto r = compute_gae_segments(rewards, values, next_values, terminal, boundary, gamma, lambda);
    advantages = std::move(r.advantages);
    returns = std::move(r.returns);
  }
};

// ---------------------------------------------------------------------------
// Updates

struct PgConfig {
  double gamma = 0.99;
  double lambda = 0.97;
  double clip = 0.2;
  std::size_t ppo_epochs = 10;
  std::size_t minibatch = 256;
  double target_kl = 0.015;
  std::size_t critic_iters = 80;  // VPG: full-batch critic steps per update
  bool normalize_advantages = true;
};

struct PGStats {
  double mean_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  std::size_t actor_steps = 0;
  std::size_t critic_steps = 0;
};

template <class Policy>
struct ActorCritic {
  Policy policy;
  Mlp critic;
};

template <class Policy>
struct ActorCriticOptimizers {
  typename Policy::Optimizer policy;
  Adam critic;

  ActorCriticOptimizers() = default;
  ActorCriticOptimizers(const ActorCritic<Policy>& ac, double actor_lr, double critic_lr)
      : policy(ac.policy, actor_lr), critic(ac.critic, AdamConfig{critic_lr}) {}
};

/// -mean(logp(a|x) * adv) over `indices`; gradient added to `grad`.
template <class Policy>
double pg_loss(const Policy& policy, const RolloutBatch<typename Policy::Action>& batch,
               std::span<const std::size_t> indices, std::span<const double> adv,
               typename Policy::Grad* grad = nullptr) {
  const double scale = 1.0 / static_cast<double>(indices.size());
  double total = 0.0;
  for (std::size_t i : indices) {
    double logp;
    if (grad) {
      logp = policy.accumulate_log_prob_grad(batch.inputs[i], batch.actions[i], -adv[i] * scale, *grad);
    } else {
      logp = policy.log_prob(batch.inputs[i], batch.actions[i]);
    }
    total -= logp * adv[i];
  }
  return total * scale;
}

struct SurrogateTerms {
  std::size_t clipped = 0;
  double kl_sum = 0.0;  // sum of logp_old - logp
  std::size_t count = 0;
};

/// Clipped surrogate, negated: -mean(min(rho A, clip(rho, 1-eps, 1+eps) A)),
/// rho = exp(logp - logp_old). Samples on the clipped branch contribute no
/// gradient.
template <class Policy>
double ppo_loss(const Policy& policy, const RolloutBatch<typename Policy::Action>& batch,
                std::span<const std::size_t> indices, std::span<const double> adv, double clip,
                typename Policy::Grad* grad = nullptr, SurrogateTerms* terms = nullptr) {
  const double scale = 1.0 / static_cast<double>(indices.size());
  double total = 0.0;
  for (std::size_t i : indices) {
    const double logp = policy.log_prob(batch.inputs[i], batch.actions[i]);
    const double ratio = std::exp(logp - batch.logp_old[i]);
    if (!std::isfinite(ratio)) throw NumericalError("ppo: non-finite probability ratio");
    const double a = adv[i];
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    const double unclipped = ratio * a;
    const double clipped = clipped_ratio * a;
    total -= std::min(unclipped, clipped);
    const bool on_clip = (a > 0.0 && ratio > 1.0 + clip) || (a < 0.0 && ratio < 1.0 - clip);
    if (terms) {
      terms->clipped += std::abs(ratio - 1.0) > clip ? 1 : 0;
      terms->kl_sum += batch.logp_old[i] - logp;
      ++terms->count;
    }
    if (grad && !on_clip) {
      // d(-rho A)/d theta = -rho A d logp / d theta
      policy.accumulate_log_prob_grad(batch.inputs[i], batch.actions[i], -ratio * a * scale, *grad);
    }
  }
  return total * scale;
}

namespace detail {

template <class Policy>
std::vector<double> prepared_advantages(const RolloutBatch<typename Policy::Action>& batch, const PgConfig& c) {
  if (batch.advantages.size() != batch.size()) {
    throw ConfigError("policy update: advantages not computed for this batch");
  }
  std::vector<double> adv = batch.advantages;
  if (c.normalize_advantages) normalize_advantages(adv);
  return adv;
}

template <class Policy>
double mean_entropy(const Policy& policy, const RolloutBatch<typename Policy::Action>& batch) {
  double h = 0.0;
  for (const auto& in : batch.inputs) h += policy.entropy(in);
  return h / static_cast<double>(batch.size());
}

template <class Policy>
double approx_kl(const Policy& policy, const RolloutBatch<typename Policy::Action>& batch) {
  double kl = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    kl += batch.logp_old[i] - policy.log_prob(batch.inputs[i], batch.actions[i]);
  }
  return kl / static_cast<double>(batch.size());
}

}  // namespace detail

/// Vanilla policy gradient: one actor step on -mean(logp * A) with batch-
/// normalized advantages, then `critic_iters` full-batch critic steps on the
/// squared error to the GAE returns.
template <class Policy>
PGStats vpg_update(ActorCritic<Policy>& ac, const RolloutBatch<typename Policy::Action>& batch,
                   const PgConfig& config, ActorCriticOptimizers<Policy>& opt) {
  if (batch.size() == 0) throw ConfigError("vpg_update: empty batch");
  const auto adv = detail::prepared_advantages<Policy>(batch, config);
  std::vector<std::size_t> all(batch.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  PGStats stats;
  stats.entropy = detail::mean_entropy(ac.policy, batch);
  auto grad = ac.policy.zero_grad();
  stats.policy_loss = pg_loss(ac.policy, batch, all, adv, &grad);
  if (!std::isfinite(stats.policy_loss)) throw NumericalError("vpg: non-finite policy loss");
  opt.policy.step(ac.policy, grad);
  stats.actor_steps = 1;
  stats.approx_kl = detail::approx_kl(ac.policy, batch);

  stats.value_loss = critic_loss(ac.critic, batch.inputs, batch.returns, all);
  for (std::size_t k = 0; k < config.critic_iters; ++k) {
    Mlp cg = ac.critic.zeros_like();
    const double l = critic_loss(ac.critic, batch.inputs, batch.returns, all, &cg);
    if (!std::isfinite(l)) throw NumericalError("vpg: non-finite value loss");
    opt.critic.step(ac.critic, cg);
    ++stats.critic_steps;
  }
  return stats;
}

/// PPO-clip: `ppo_epochs` passes over shuffled minibatches. Before each actor
/// step the minibatch KL(old || new) estimate is checked and actor updates
/// stop for the rest of the update once it exceeds `target_kl`. The critic
/// takes one step per minibatch in every epoch.
template <class Policy>
PGStats ppo_update(ActorCritic<Policy>& ac, const RolloutBatch<typename Policy::Action>& batch,
                   const PgConfig& config, ActorCriticOptimizers<Policy>& opt, Rng& rng) {
  if (batch.size() == 0) throw ConfigError("ppo_update: empty batch");
  if (config.minibatch == 0) throw ConfigError("ppo_update: minibatch must be positive");
  const auto adv = detail::prepared_advantages<Policy>(batch, config);
  std::vector<std::size_t> order(batch.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  PGStats stats;
  stats.entropy = detail::mean_entropy(ac.policy, batch);
  stats.value_loss = critic_loss(ac.critic, batch.inputs, batch.returns, order);
  bool actor_active = true;
  bool first = true;
  SurrogateTerms clip_terms;
  for (std::size_t epoch = 0; epoch < config.ppo_epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t begin = 0; begin < order.size(); begin += config.minibatch) {
      const std::size_t end = std::min(order.size(), begin + config.minibatch);
      std::span<const std::size_t> idx(order.data() + begin, end - begin);
      if (actor_active) {
        auto grad = ac.policy.zero_grad();
        SurrogateTerms terms;
        const double loss = ppo_loss(ac.policy, batch, idx, adv, config.clip, &grad, &terms);
        if (!std::isfinite(loss)) throw NumericalError("ppo: non-finite surrogate loss");
        if (first) {
          stats.policy_loss = loss;
          first = false;
        }
        if (terms.kl_sum / static_cast<double>(terms.count) > config.target_kl) {
          actor_active = false;
        } else {
          clip_terms.clipped += terms.clipped;
          clip_terms.count += terms.count;
          opt.policy.step(ac.policy, grad);
          ++stats.actor_steps;
        }
      }
      Mlp cg = ac.critic.zeros_like();
      const double vl = critic_loss(ac.critic, batch.inputs, batch.returns, idx, &cg);
      if (!std::isfinite(vl)) throw NumericalError("ppo: non-finite value loss");
      opt.critic.step(ac.critic, cg);
      ++stats.critic_steps;
    }
  }
  stats.clip_fraction =
      clip_terms.count ? static_cast<double>(clip_terms.clipped) / static_cast<double>(clip_terms.count) : 0.0;
  stats.approx_kl = detail::approx_kl(ac.policy, batch);
  return stats;
}

}  // namespace jsae
