#pragma once

// Tabular witnesses for the factored-policy results: projecting an internal
// policy over a finite set of embedding points onto the original action
// space, the value identity that projection satisfies, and attainability of
// the optimal value through such a projection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "jsae/errors.hpp"
#include "jsae/rng.hpp"

namespace jsae::theory {

using Table = std::vector<std::vector<double>>;  // [row][column]

struct TabularMdp {
  std::size_t states = 0;
  std::size_t actions = 0;
  std::vector<std::vector<std::vector<double>>> transition;  // P[s][a][s']
  Table reward;                                              // R[s][a]
  double gamma = 0.9;
  std::vector<double> initial;  // d0

  void validate() const {
    if (states == 0 || actions == 0) throw ConfigError("tabular mdp: empty state or action set");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("tabular mdp: gamma must be in [0, 1)");
    if (transition.size() != states || reward.size() != states || initial.size() != states) {
      throw ConfigError("tabular mdp: table sizes do not match state count");
    }
    for (std::size_t s = 0; s < states; ++s) {
      if (transition[s].size() != actions || reward[s].size() != actions) {
        throw ConfigError("tabular mdp: table sizes do not match action count");
      }
      for (std::size_t a = 0; a < actions; ++a) {
        if (transition[s][a].size() != states) throw ConfigError("tabular mdp: bad transition row");
        double total = 0.0;
        for (double p : transition[s][a]) {
          if (p < 0.0) throw ConfigError("tabular mdp: negative transition probability");
          total += p;
        }
        if (std::abs(total - 1.0) > 1e-12) throw ConfigError("tabular mdp: transition row does not sum to 1");
        if (!std::isfinite(reward[s][a])) throw ConfigError("tabular mdp: non-finite reward");
      }
    }
  }
};

/// Internal policy over K embedding points. The state map phi sends state s
/// to point `state_point[s]` (coordinates `state_embedding[s]`), the action
/// map f sends embedding point k to action `point_action[k]`, and
/// internal[x][k] is the probability of point k given embedded state x
/// (indexed like states, since phi is injective).
struct FactoredPolicy {
  Table state_embedding;                // [s] -> R^m
  Table action_points;                  // [k] -> R^d
  std::vector<std::size_t> point_action;  // f: k -> a
  Table internal;                        // pi_i[s][k]

  std::size_t points() const { return action_points.size(); }

  void validate(std::size_t states, std::size_t actions) const {
    if (state_embedding.size() != states || internal.size() != states) {
      throw ConfigError("factored policy: state tables do not match state count");
    }
    if (point_action.size() != action_points.size() || action_points.empty()) {
      throw ConfigError("factored policy: f must be defined on every embedding point");
    }
    for (std::size_t a : point_action) {
      if (a >= actions) throw ConfigError("factored policy: f maps to an unknown action");
    }
    for (std::size_t i = 0; i < states; ++i) {
      for (std::size_t j = i + 1; j < states; ++j) {
        if (state_embedding[i] == state_embedding[j]) {
          throw ConfigError("factored policy: phi is not injective");
        }
      }
      if (internal[i].size() != points()) throw ConfigError("factored policy: bad internal policy row");
      double total = 0.0;
      for (double p : internal[i]) {
        if (p < 0.0) throw ConfigError("factored policy: negative probability");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12) throw ConfigError("factored policy: internal row does not sum to 1");
    }
  }
};

/// pi_o[s][a] = sum over points k with f(k) = a of pi_i[phi(s)][k].
inline Table project_policy(const FactoredPolicy& fp, std::size_t actions) {
  Table out(fp.internal.size(), std::vector<double>(actions, 0.0));
  for (std::size_t s = 0; s < fp.internal.size(); ++s) {
    for (std::size_t k = 0; k < fp.points(); ++k) out[s][fp.point_action[k]] += fp.internal[s][k];
  }
  return out;
}

struct ValueResult {
  std::vector<double> v;
  Table q;
  std::vector<std::size_t> greedy;  // value_iteration only
  std::size_t sweeps = 0;
  double residual = 0.0;
};

namespace detail {

inline double backup(const TabularMdp& mdp, const std::vector<double>& v, std::size_t s, std::size_t a) {
  double q = mdp.reward[s][a];
  const auto& p = mdp.transition[s][a];
  double future = 0.0;
  for (std::size_t t = 0; t < mdp.states; ++t) future += p[t] * v[t];
  return q + mdp.gamma * future;
}

inline Table q_from_v(const TabularMdp& mdp, const std::vector<double>& v) {
  Table q(mdp.states, std::vector<double>(mdp.actions));
  for (std::size_t s = 0; s < mdp.states; ++s) {
    for (std::size_t a = 0; a < mdp.actions; ++a) q[s][a] = backup(mdp, v, s, a);
  }
  return q;
}

}  // namespace detail

/// Bellman optimality iteration until the sup-norm change is below `tol`
/// (at most `max_sweeps`). Greedy ties go to the lowest action index.
inline ValueResult value_iteration(const TabularMdp& mdp, double tol = 1e-12, std::size_t max_sweeps = 1000000) {
  mdp.validate();
  ValueResult r;
  r.v.assign(mdp.states, 0.0);
  std::vector<double> next(mdp.states);
  for (r.sweeps = 0; r.sweeps < max_sweeps; ++r.sweeps) {
    double delta = 0.0;
    for (std::size_t s = 0; s < mdp.states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < mdp.actions; ++a) best = std::max(best, detail::backup(mdp, r.v, s, a));
      next[s] = best;
      delta = std::max(delta, std::abs(best - r.v[s]));
    }
    r.v.swap(next);
    if (delta < tol) {
      ++r.sweeps;
      break;
    }
  }
  r.q = detail::q_from_v(mdp, r.v);
  r.greedy.assign(mdp.states, 0);
  r.residual = 0.0;
  for (std::size_t s = 0; s < mdp.states; ++s) {
    const auto& row = r.q[s];
    r.greedy[s] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    r.residual = std::max(r.residual, std::abs(row[r.greedy[s]] - r.v[s]));
  }
  return r;
}

/// Fixed point of the Bellman expectation operator for a tabular policy.
inline ValueResult policy_evaluation(const TabularMdp& mdp, const Table& policy, double tol = 1e-12,
                                     std::size_t max_sweeps = 1000000) {
  mdp.validate();
  if (policy.size() != mdp.states) throw ConfigError("policy_evaluation: policy has wrong state count");
  for (const auto& row : policy) {
    if (row.size() != mdp.actions) throw ConfigError("policy_evaluation: policy has wrong action count");
    double total = 0.0;
    for (double p : row) total += p;
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("policy_evaluation: policy row does not sum to 1");
  }
  ValueResult r;
  r.v.assign(mdp.states, 0.0);
  std::vector<double> next(mdp.states);
  for (r.sweeps = 0; r.sweeps < max_sweeps; ++r.sweeps) {
    double delta = 0.0;
    for (std::size_t s = 0; s < mdp.states; ++s) {
      double v = 0.0;
      for (std::size_t a = 0; a < mdp.actions; ++a) {
        if (policy[s][a] != 0.0) v += policy[s][a] * detail::backup(mdp, r.v, s, a);
      }
      next[s] = v;
      delta = std::max(delta, std::abs(v - r.v[s]));
    }
    r.v.swap(next);
    if (delta < tol) {
      ++r.sweeps;
      break;
    }
  }
  r.q = detail::q_from_v(mdp, r.v);
  r.residual = 0.0;
  for (std::size_t s = 0; s < mdp.states; ++s) {
    double tv = 0.0;
    for (std::size_t a = 0; a < mdp.actions; ++a) tv += policy[s][a] * r.q[s][a];
    r.residual = std::max(r.residual, std::abs(tv - r.v[s]));
  }
  return r;
}

/// max_s | v^{pi_o}(s) - sum_a sum_{k: f(k)=a} pi_i[phi(s)][k] Q^{pi_o}(s, a) |
/// with pi_o the projection of `fp`.
inline double check_lemma1(const TabularMdp& mdp, const FactoredPolicy& fp) {
  fp.validate(mdp.states, mdp.actions);
  const auto pi_o = project_policy(fp, mdp.actions);
  const auto eval = policy_evaluation(mdp, pi_o);
  double worst = 0.0;
  for (std::size_t s = 0; s < mdp.states; ++s) {
    double rhs = 0.0;
    for (std::size_t k = 0; k < fp.points(); ++k) rhs += fp.internal[s][k] * eval.q[s][fp.point_action[k]];
    worst = std::max(worst, std::abs(eval.v[s] - rhs));
  }
  return worst;
}

struct Theorem1Result {
  double gap = 0.0;  // || v^{pi_o} - v* ||_inf
  FactoredPolicy policy;
  Table projected;
  ValueResult optimal;
};

/// Builds a factored policy with one embedding point per action (f the
/// identity) whose internal policy puts all mass on the greedy optimal
/// action, and measures how far its projected value is from v*.
inline Theorem1Result check_theorem1(const TabularMdp& mdp) {
  Theorem1Result r;
  r.optimal = value_iteration(mdp);
  auto& fp = r.policy;
  for (std::size_t s = 0; s < mdp.states; ++s) {
    fp.state_embedding.push_back({static_cast<double>(s)});
    std::vector<double> row(mdp.actions, 0.0);
    row[r.optimal.greedy[s]] = 1.0;
    fp.internal.push_back(std::move(row));
  }
  for (std::size_t a = 0; a < mdp.actions; ++a) {
    fp.action_points.push_back({static_cast<double>(a)});
    fp.point_action.push_back(a);
  }
  r.projected = project_policy(fp, mdp.actions);
  const auto eval = policy_evaluation(mdp, r.projected);
  for (std::size_t s = 0; s < mdp.states; ++s) r.gap = std::max(r.gap, std::abs(eval.v[s] - r.optimal.v[s]));
  return r;
}

// ---------------------------------------------------------------------------
// Random instances

inline std::vector<double> random_simplex(std::size_t n, Rng& rng) {
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& x : p) {
    x = -std::log(1.0 - rng.uniform());  // Exp(1) -> Dirichlet(1, ..., 1)
    total += x;
  }
  for (auto& x : p) x /= total;
  return p;
}

inline TabularMdp random_mdp(std::size_t states, std::size_t actions, double gamma, Rng& rng) {
  TabularMdp m;
  m.states = states;
  m.actions = actions;
  m.gamma = gamma;
  m.transition.assign(states, std::vector<std::vector<double>>(actions));
  m.reward.assign(states, std::vector<double>(actions));
  for (std::size_t s = 0; s < states; ++s) {
    for (std::size_t a = 0; a < actions; ++a) {
      m.transition[s][a] = random_simplex(states, rng);
      m.reward[s][a] = rng.uniform(-1.0, 1.0);
    }
  }
  m.initial = random_simplex(states, rng);
  return m;
}

inline FactoredPolicy random_factored_policy(std::size_t states, std::size_t actions, std::size_t points,
                                             std::size_t m, std::size_t d, Rng& rng) {
  FactoredPolicy fp;
  for (std::size_t s = 0; s < states; ++s) {
    std::vector<double> x(m);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    fp.state_embedding.push_back(std::move(x));
    fp.internal.push_back(random_simplex(points, rng));
  }
  for (std::size_t k = 0; k < points; ++k) {
    std::vector<double> e(d);
    for (auto& v : e) v = rng.uniform(-1.0, 1.0);
    fp.action_points.push_back(std::move(e));
    fp.point_action.push_back(rng.below(actions));
  }
  return fp;
}

struct TheoryInstanceResult {
  std::size_t states = 0, actions = 0, points = 0;
  double lemma1 = 0.0;
  double theorem1 = 0.0;
};

struct TheorySummary {
  std::vector<TheoryInstanceResult> instances;
  double max_lemma1 = 0.0;
  double max_theorem1 = 0.0;
  double tolerance = 1e-9;

  bool pass() const { return max_lemma1 < tolerance && max_theorem1 < tolerance; }
};

/// `count` random instances with |S| <= 6, |A| <= 4, K <= 8.
inline TheorySummary run_theory_checks(std::size_t count, std::uint64_t seed, double tolerance = 1e-9) {
  TheorySummary summary;
  summary.tolerance = tolerance;
  Rng rng(derive_seed(seed, 0x7E0));
  for (std::size_t i = 0; i < count; ++i) {
    TheoryInstanceResult r;
    r.states = 1 + rng.below(6);
    r.actions = 1 + rng.below(4);
    r.points = 1 + rng.below(8);
    const double gamma = rng.uniform(0.0, 0.95);
    const auto mdp = random_mdp(r.states, r.actions, gamma, rng);
    const auto fp = random_factored_policy(r.states, r.actions, r.points, 3, 2, rng);
    r.lemma1 = check_lemma1(mdp, fp);
    r.theorem1 = check_theorem1(mdp).gap;
    summary.max_lemma1 = std::max(summary.max_lemma1, r.lemma1);
    summary.max_theorem1 = std::max(summary.max_theorem1, r.theorem1);
    summary.instances.push_back(r);
  }
  return summary;
}

}  // namespace jsae::theory
