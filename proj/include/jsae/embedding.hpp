#pragma once

// Joint state-action embedding model: state encoder phi, action encoder g,
// transition model T over the concatenated embeddings, and action decoder f.
//
// Training runs in two steps per batch:
//   1. minimize the environment-model loss  -ln T(s' | phi(s), g(a))
//      (mean squared error for continuous next states), updating phi, g, T;
//   2. minimize the reconstruction loss     -ln f(a | g(a))
//      (mean squared error for continuous actions) with g frozen, updating f.
// At decision time discrete actions are decoded by nearest neighbour against
// the table of g outputs; g is used only for training and table refreshes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "jsae/envs/environment.hpp"
#include "jsae/nn.hpp"
#include "jsae/replay_buffer.hpp"

namespace jsae {

struct EmbeddingConfig {
  std::size_t state_dim = 8;   // m
  std::size_t action_dim = 2;  // d
  std::vector<std::size_t> hidden{64, 64};
  std::vector<std::size_t> decoder_hidden{64};
  double learning_rate = 1e-3;
};

// Input/output layout the model is built for; derived from an EnvSpec for
// environments, or written by hand for synthetic problems.
struct ModelShape {
  std::size_t observation_dim = 0;
  bool discrete_actions = true;
  std::size_t action_count = 0;  // discrete actions
  std::size_t action_width = 0;  // continuous actions
  std::size_t next_classes = 0;  // categorical next-state target
  std::size_t next_dim = 0;      // real-valued next-state target
};

inline ModelShape model_shape(const EnvSpec& spec) {
  ModelShape s;
  s.observation_dim = spec.observation_dim;
  s.discrete_actions = true;
  s.action_count = spec.action_count;
  s.next_classes = spec.next_classes;
  s.next_dim = spec.next_dim;
  return s;
}

struct EmbeddingModel {
  Mlp phi;         // observation -> m, tanh-bounded
  Mlp g;           // action representation -> d, tanh-bounded
  Mlp transition;  // (m + d) -> next-state logits or vector
  Mlp decoder;     // d -> action logits or vector
  ModelShape shape;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;

  bool categorical_next() const { return shape.next_classes > 0; }
  std::size_t action_input_dim() const {
    return shape.discrete_actions ? shape.action_count : shape.action_width;
  }
};

inline EmbeddingModel make_embedding_model(const ModelShape& shape, const EmbeddingConfig& config,
                                           Rng& rng) {
  if (config.state_dim == 0 || config.action_dim == 0) {
    throw ConfigError("embedding dims m and d must be positive");
  }
  if ((shape.next_classes == 0) == (shape.next_dim == 0)) {
    throw ConfigError("model shape needs exactly one of next_classes / next_dim");
  }
  if (shape.discrete_actions ? shape.action_count < 2 : shape.action_width == 0) {
    throw ConfigError("model shape needs an action space");
  }
  EmbeddingModel m;
  m.shape = shape;
  m.state_dim = config.state_dim;
  m.action_dim = config.action_dim;
  const std::size_t action_in = m.action_input_dim();
  m.phi = make_mlp(shape.observation_dim, config.hidden, config.state_dim, Activation::tanh, rng);
  m.g = make_mlp(action_in, config.hidden, config.action_dim, Activation::tanh, rng);
  m.transition = make_mlp(config.state_dim + config.action_dim, config.hidden,
                          shape.next_classes > 0 ? shape.next_classes : shape.next_dim,
                          Activation::identity, rng);
  m.decoder = make_mlp(config.action_dim, config.decoder_hidden, action_in, Activation::identity, rng);
  return m;
}

inline EmbeddingModel make_embedding_model(const EnvSpec& spec, const EmbeddingConfig& config, Rng& rng) {
  return make_embedding_model(model_shape(spec), config, rng);
}

inline std::vector<double> one_hot(std::size_t index, std::size_t size) {
  std::vector<double> v(size, 0.0);
  v[index] = 1.0;
  return v;
}

inline std::vector<double> embed_state(const EmbeddingModel& model, std::span<const double> observation) {
  return mlp_forward(model.phi, observation);
}

inline std::vector<double> embed_action(const EmbeddingModel& model, int action) {
  if (!model.shape.discrete_actions) throw UsageError("embed_action: model has continuous actions");
  if (action < 0 || static_cast<std::size_t>(action) >= model.shape.action_count) {
    throw UsageError("embed_action: invalid action id " + std::to_string(action));
  }
  return mlp_forward(model.g, one_hot(static_cast<std::size_t>(action), model.shape.action_count));
}

inline std::vector<double> embed_action_vector(const EmbeddingModel& model, std::span<const double> action) {
  if (model.shape.discrete_actions) throw UsageError("embed_action_vector: model has discrete actions");
  return mlp_forward(model.g, action);
}

inline std::vector<double> predict_next(const EmbeddingModel& model, std::span<const double> x,
                                        std::span<const double> e) {
  if (x.size() != model.state_dim || e.size() != model.action_dim) {
    throw ConfigError("predict_next: embedding dims do not match the model");
  }
  std::vector<double> z(x.begin(), x.end());
  z.insert(z.end(), e.begin(), e.end());
  return mlp_forward(model.transition, z);
}

// ---------------------------------------------------------------------------
// Nearest-neighbour action decoding

struct ActionEmbeddingTable {
  std::size_t dim = 0;
  std::vector<double> values;  // size() x dim, row-major

  std::size_t size() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> row(std::size_t k) const { return {values.data() + k * dim, dim}; }
};

inline ActionEmbeddingTable build_action_table(const EmbeddingModel& model) {
  if (!model.shape.discrete_actions) throw UsageError("action table needs discrete actions");
  ActionEmbeddingTable table;
  table.dim = model.action_dim;
  table.values.reserve(model.shape.action_count * model.action_dim);
  std::vector<double> input(model.shape.action_count, 0.0);
  for (std::size_t a = 0; a < model.shape.action_count; ++a) {
    input[a] = 1.0;
    const auto e = mlp_forward(model.g, input);
    table.values.insert(table.values.end(), e.begin(), e.end());
    input[a] = 0.0;
  }
  return table;
}

/// Index of the row closest to `e` in Euclidean distance; ties go to the
/// lowest index. Partial sums abort a row once they exceed the best so far.
inline int decode_action(const ActionEmbeddingTable& table, std::span<const double> e) {
  const std::size_t n = table.size();
  if (n == 0) throw ConfigError("decode_action: empty action table");
  if (e.size() != table.dim) throw ConfigError("decode_action: query dim does not match table");
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  const double* row = table.values.data();
  for (std::size_t k = 0; k < n; ++k, row += table.dim) {
    double dist = 0.0;
    for (std::size_t j = 0; j < table.dim; ++j) {
      const double diff = row[j] - e[j];
      dist += diff * diff;
      if (dist > best) break;
    }
    if (dist < best) {
      best = dist;
      best_k = k;
    }
  }
  return static_cast<int>(best_k);
}

inline std::vector<double> decode_action_vector(const EmbeddingModel& model, std::span<const double> e) {
  if (model.shape.discrete_actions) throw UsageError("decode_action_vector: model has discrete actions");
  if (e.size() != model.action_dim) throw ConfigError("decode_action_vector: wrong embedding dim");
  return mlp_forward(model.decoder, e);
}

// ---------------------------------------------------------------------------
// Losses

// One supervised example in network-ready form.
struct ModelSample {
  std::vector<double> observation;
  int action = 0;
  std::vector<double> action_values;  // continuous actions only
  std::size_t next_class = 0;
  std::vector<double> next_values;  // continuous next states only
};

inline ModelSample make_model_sample(const Environment& env, const Transition& t) {
  ModelSample s;
  env.observe(t.state, s.observation);
  s.action = t.action;
  if (env.spec().next_classes > 0) {
    s.next_class = env.next_class(t.next_state);
  } else {
    s.next_values = env.next_vector(t.next_state);
  }
  return s;
}

inline std::vector<ModelSample> make_model_samples(const Environment& env, std::span<const Transition> batch) {
  std::vector<ModelSample> out;
  out.reserve(batch.size());
  for (const auto& t : batch) out.push_back(make_model_sample(env, t));
  return out;
}

struct EmbeddingGrads {
  Mlp phi, g, transition, decoder;

  static EmbeddingGrads zeros_like(const EmbeddingModel& m) {
    return {m.phi.zeros_like(), m.g.zeros_like(), m.transition.zeros_like(), m.decoder.zeros_like()};
  }
};

namespace detail {

inline std::vector<double> action_input(const EmbeddingModel& model, const ModelSample& s) {
  if (model.shape.discrete_actions) {
    if (s.action < 0 || static_cast<std::size_t>(s.action) >= model.shape.action_count) {
      throw UsageError("embedding sample has invalid action " + std::to_string(s.action));
    }
    return one_hot(static_cast<std::size_t>(s.action), model.shape.action_count);
  }
  if (s.action_values.size() != model.shape.action_width) {
    throw ConfigError("embedding sample has wrong action width");
  }
  return s.action_values;
}

}  // namespace detail

/// Mean environment-model loss over the batch. When `grads` is given, the
/// gradient of that mean w.r.t. phi, g and T is added into it.
inline double transition_loss(const EmbeddingModel& model, std::span<const ModelSample> batch,
                              EmbeddingGrads* grads = nullptr) {
  if (batch.empty()) throw ConfigError("transition_loss: empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  ForwardCache phi_cache, g_cache, t_cache;
  std::vector<double> z(model.state_dim + model.action_dim);
  double total = 0.0;
  for (const auto& s : batch) {
    const auto a_in = detail::action_input(model, s);
    const auto x = mlp_forward(model.phi, s.observation, grads ? &phi_cache : nullptr);
    const auto e = mlp_forward(model.g, a_in, grads ? &g_cache : nullptr);
    std::copy(x.begin(), x.end(), z.begin());
    std::copy(e.begin(), e.end(), z.begin() + static_cast<std::ptrdiff_t>(model.state_dim));
    const auto out = mlp_forward(model.transition, z, grads ? &t_cache : nullptr);
    LossAndGrad lg = model.categorical_next() ? softmax_nll(out, s.next_class) : mse_loss(out, s.next_values);
    total += lg.loss;
    if (grads) {
      for (double& v : lg.grad) v *= scale;
      const auto dz = mlp_backward(model.transition, t_cache, lg.grad, grads->transition, true);
      std::span<const double> dzs(dz);
      mlp_backward(model.phi, phi_cache, dzs.first(model.state_dim), grads->phi, false);
      mlp_backward(model.g, g_cache, dzs.subspan(model.state_dim), grads->g, false);
    }
  }
  return total * scale;
}

/// Mean action-reconstruction loss of f(g(a)); gradient flows into f only.
inline double reconstruction_loss(const EmbeddingModel& model, std::span<const ModelSample> batch,
                                  EmbeddingGrads* grads = nullptr) {
  if (batch.empty()) throw ConfigError("reconstruction_loss: empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  ForwardCache f_cache;
  double total = 0.0;
  for (const auto& s : batch) {
    const auto a_in = detail::action_input(model, s);
    const auto e = mlp_forward(model.g, a_in);
    const auto out = mlp_forward(model.decoder, e, grads ? &f_cache : nullptr);
    LossAndGrad lg = model.shape.discrete_actions ? softmax_nll(out, static_cast<std::size_t>(s.action))
                                                  : mse_loss(out, s.action_values);
    total += lg.loss;
    if (grads) {
      for (double& v : lg.grad) v *= scale;
      mlp_backward(model.decoder, f_cache, lg.grad, grads->decoder, false);
    }
  }
  return total * scale;
}

// ---------------------------------------------------------------------------
// Training

struct EmbeddingOptimizers {
  Adam phi, g, transition, decoder;
  // Frozen components keep their parameters (used after transfer).
  bool train_phi = true, train_g = true, train_transition = true, train_decoder = true;

  EmbeddingOptimizers() = default;
  EmbeddingOptimizers(const EmbeddingModel& m, double learning_rate) {
    const AdamConfig c{learning_rate};
    phi = Adam(m.phi, c);
    g = Adam(m.g, c);
    transition = Adam(m.transition, c);
    decoder = Adam(m.decoder, c);
  }
};

struct EmbeddingLosses {
  double transition = 0.0;
  double reconstruction = 0.0;
};

/// One two-step update on `batch`. Returns the pre-update losses and, when
/// `table` is given, refreshes it from the updated g.
inline EmbeddingLosses embedding_train_step(EmbeddingModel& model, std::span<const ModelSample> batch,
                                            EmbeddingOptimizers& opt, ActionEmbeddingTable* table = nullptr) {
  if (batch.empty()) throw ConfigError("embedding_train_step: empty batch");
  EmbeddingLosses losses;
  {
    auto grads = EmbeddingGrads::zeros_like(model);
    losses.transition = transition_loss(model, batch, &grads);
    if (!std::isfinite(losses.transition)) {
      throw NumericalError("embedding_train_step: non-finite environment-model loss");
    }
    if (opt.train_phi) opt.phi.step(model.phi, grads.phi);
    if (opt.train_g) opt.g.step(model.g, grads.g);
    if (opt.train_transition) opt.transition.step(model.transition, grads.transition);
  }
  {
    EmbeddingGrads grads{Mlp{}, Mlp{}, Mlp{}, model.decoder.zeros_like()};
    losses.reconstruction = reconstruction_loss(model, batch, &grads);
    if (!std::isfinite(losses.reconstruction)) {
      throw NumericalError("embedding_train_step: non-finite reconstruction loss");
    }
    if (opt.train_decoder) opt.decoder.step(model.decoder, grads.decoder);
  }
  if (table && model.shape.discrete_actions) *table = build_action_table(model);
  return losses;
}

inline EmbeddingLosses embedding_train_step(EmbeddingModel& model, const Environment& env,
                                            std::span<const Transition> batch, EmbeddingOptimizers& opt,
                                            ActionEmbeddingTable* table = nullptr) {
  const auto samples = make_model_samples(env, batch);
  return embedding_train_step(model, samples, opt, table);
}

/// Transitions from the uniform-random policy; episodes end on termination
/// or at the step limit.
inline std::vector<Transition> collect_random_transitions(const Environment& env, std::size_t count, Rng& rng) {
  std::vector<Transition> out;
  out.reserve(count);
  const auto& spec = env.spec();
  State s = env.reset(rng());
  std::size_t t = 0;
  while (out.size() < count) {
    const int a = static_cast<int>(rng.below(spec.action_count));
    auto r = env.step(s, a, rng);
    out.push_back({s, a, r.reward, r.next_state, r.done});
    ++t;
    if (r.done || t >= spec.step_limit) {
      s = env.reset(rng());
      t = 0;
    } else {
      s = std::move(r.next_state);
    }
  }
  return out;
}

struct PretrainConfig {
  std::size_t samples = 20000;
  std::size_t epochs = 20;
  std::size_t batch = 256;
  std::size_t buffer_capacity = 100000;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  ReplayBuffer buffer;
  std::vector<EmbeddingLosses> epoch_losses;  // mean over the epoch's steps
  std::size_t train_steps = 0;
};

/// Supervised pre-training on uniformly random transitions: `epochs` passes
/// over shuffled minibatches (the last one may be partial). The collected
/// transitions are returned in a replay buffer for continued updates.
inline PretrainResult pretrain(EmbeddingModel& model, const Environment& env, const PretrainConfig& config,
                               EmbeddingOptimizers& opt, ActionEmbeddingTable* table = nullptr) {
  if (config.batch == 0) throw ConfigError("pretrain: batch size must be positive");
  if (config.samples < config.batch) throw ConfigError("pretrain: sample count below batch size");
  Rng rng(derive_seed(config.seed, 0x9E7));
  const auto data = collect_random_transitions(env, config.samples, rng);
  PretrainResult result{ReplayBuffer(std::max(config.buffer_capacity, config.samples)), {}, 0};
  for (const auto& t : data) result.buffer.push(t);

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<Transition> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    EmbeddingLosses sum;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t end = std::min(order.size(), begin + config.batch);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(data[order[i]]);
      const auto l = embedding_train_step(model, env, batch, opt);
      sum.transition += l.transition;
      sum.reconstruction += l.reconstruction;
      ++steps;
      ++result.train_steps;
    }
    result.epoch_losses.push_back({sum.transition / steps, sum.reconstruction / steps});
  }
  if (table && model.shape.discrete_actions) *table = build_action_table(model);
  return result;
}

// ---------------------------------------------------------------------------
// Assumption validation

struct CollisionStats {
  double min_distance = std::numeric_limits<double>::infinity();
  std::size_t collisions = 0;
  std::size_t pairs = 0;
};

/// Pairwise Euclidean distances between `points`. Pairs whose `inputs` are
/// identical (the same state fed twice) are skipped; a collision is a
/// distance below `tolerance`.
inline CollisionStats pairwise_collisions(const std::vector<std::vector<double>>& points,
                                          const std::vector<std::vector<double>>* inputs, double tolerance) {
  CollisionStats stats;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      if (inputs && (*inputs)[i] == (*inputs)[j]) continue;
      double d2 = 0.0;
      for (std::size_t k = 0; k < points[i].size(); ++k) {
        const double diff = points[i][k] - points[j][k];
        d2 += diff * diff;
      }
      const double d = std::sqrt(d2);
      ++stats.pairs;
      stats.min_distance = std::min(stats.min_distance, d);
      if (d < tolerance) ++stats.collisions;
    }
  }
  return stats;
}

struct AssumptionReport {
  double tolerance = 0.0;
  double min_action_distance = std::numeric_limits<double>::infinity();
  double min_state_distance = std::numeric_limits<double>::infinity();
  std::size_t action_collisions = 0;
  std::size_t state_collisions = 0;
  std::size_t actions_checked = 0;
  std::size_t states_checked = 0;
  bool actions_pass = true;
  bool states_pass = true;

  bool pass() const { return actions_pass && states_pass; }

  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "tolerance " << tolerance << '\n'
       << "actions_checked " << actions_checked << '\n'
       << "min_action_distance " << min_action_distance << '\n'
       << "action_collisions " << action_collisions << '\n'
       << "actions_pass " << (actions_pass ? "true" : "false") << '\n'
       << "states_checked " << states_checked << '\n'
       << "min_state_distance " << min_state_distance << '\n'
       << "state_collisions " << state_collisions << '\n'
       << "states_pass " << (states_pass ? "true" : "false") << '\n'
       << "pass " << (pass() ? "true" : "false") << '\n';
    return os.str();
  }
};

/// Distinct states for validation and export: every state when the space is
/// discrete and no larger than `budget`, otherwise up to `budget` distinct
/// states visited by the uniform-random policy.
inline std::vector<State> sample_states(const Environment& env, std::size_t budget, std::uint64_t seed) {
  const auto& spec = env.spec();
  std::vector<State> states;
  if (spec.state_kind == StateKind::discrete && spec.state_count <= budget) {
    states.reserve(spec.state_count);
    for (std::uint64_t i = 0; i < spec.state_count; ++i) states.push_back(env.state_at(i));
    return states;
  }
  Rng rng(derive_seed(seed, 0x5A3));
  std::set<State> seen;
  const std::size_t max_steps = budget * 50 + 1000;
  State s = env.reset(rng());
  std::size_t t = 0;
  for (std::size_t step = 0; step < max_steps && states.size() < budget; ++step) {
    if (seen.insert(s).second) states.push_back(s);
    auto r = env.step(s, static_cast<int>(rng.below(spec.action_count)), rng);
    ++t;
    if (r.done || t >= spec.step_limit) {
      s = env.reset(rng());
      t = 0;
    } else {
      s = std::move(r.next_state);
    }
  }
  return states;
}

inline AssumptionReport validate_embeddings(const std::vector<std::vector<double>>& state_embeddings,
                                            const std::vector<std::vector<double>>& state_inputs,
                                            const ActionEmbeddingTable& table, double tolerance) {
  if (!(tolerance > 0.0)) throw ConfigError("validate_assumptions: tolerance must be positive");
  AssumptionReport report;
  report.tolerance = tolerance;
  std::vector<std::vector<double>> actions;
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto r = table.row(k);
    actions.emplace_back(r.begin(), r.end());
  }
  const auto a = pairwise_collisions(actions, nullptr, tolerance);
  report.actions_checked = actions.size();
  report.min_action_distance = a.min_distance;
  report.action_collisions = a.collisions;
  report.actions_pass = a.collisions == 0;
  const auto s = pairwise_collisions(state_embeddings, &state_inputs, tolerance);
  report.states_checked = state_embeddings.size();
  report.min_state_distance = s.min_distance;
  report.state_collisions = s.collisions;
  report.states_pass = s.collisions == 0;
  return report;
}

/// Checks that no two actions and no two (enumerated or sampled) states share
/// an embedding, up to `tolerance`.
inline AssumptionReport validate_assumptions(const EmbeddingModel& model, const Environment& env,
                                             std::size_t sample_budget, double tolerance,
                                             std::uint64_t seed = 0) {
  const auto states = sample_states(env, sample_budget, seed);
  std::vector<std::vector<double>> inputs, embeddings;
  inputs.reserve(states.size());
  embeddings.reserve(states.size());
  for (const auto& s : states) {
    inputs.push_back(env.observe(s));
    embeddings.push_back(embed_state(model, inputs.back()));
  }
  return validate_embeddings(embeddings, inputs, build_action_table(model), tolerance);
}

// ---------------------------------------------------------------------------
// Export

/// Writes `state_embeddings.tsv` (state id, raw state columns, x0..x{m-1})
/// and `action_embeddings.tsv` (action id, e0..e{d-1}, plus environment
/// action features such as gridworld displacement) into `dir`.
inline void export_embeddings(const EmbeddingModel& model, const Environment& env,
                              const std::filesystem::path& dir, std::size_t sample_budget = 100000,
                              std::uint64_t seed = 0) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write '" + (dir / name).string() + "'");
    out.precision(17);
    return out;
  };
  {
    auto out = open("state_embeddings.tsv");
    out << "state_id";
    for (const auto& n : env.state_feature_names()) out << '\t' << n;
    for (std::size_t k = 0; k < model.state_dim; ++k) out << "\tx" << k;
    out << '\n';
    const auto states = sample_states(env, sample_budget, seed);
    const bool discrete = env.spec().state_kind == StateKind::discrete;
    for (std::size_t i = 0; i < states.size(); ++i) {
      out << (discrete ? env.state_index(states[i]) : i);
      for (double v : states[i]) out << '\t' << v;
      for (double v : embed_state(model, env.observe(states[i]))) out << '\t' << v;
      out << '\n';
    }
    if (!out) throw std::runtime_error("error writing state_embeddings.tsv");
  }
  {
    auto out = open("action_embeddings.tsv");
    out << "action_id";
    for (std::size_t k = 0; k < model.action_dim; ++k) out << "\te" << k;
    for (const auto& n : env.action_feature_names()) out << '\t' << n;
    out << '\n';
    const auto table = build_action_table(model);
    for (std::size_t a = 0; a < table.size(); ++a) {
      out << a;
      for (double v : table.row(a)) out << '\t' << v;
      for (double v : env.action_features(static_cast<int>(a))) out << '\t' << v;
      out << '\n';
    }
    if (!out) throw std::runtime_error("error writing action_embeddings.tsv");
  }
}

}  // namespace jsae
