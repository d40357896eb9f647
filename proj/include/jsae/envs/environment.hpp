#pragma once

#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "jsae/errors.hpp"
#include "jsae/rng.hpp"

namespace jsae {

// Raw environment state. Gridworld: (x, y); slotmachine: reel faces;
// recommender: the last n purchased items.
using State = std::vector<double>;

enum class StateKind { discrete, continuous };

struct EnvSpec {
  StateKind state_kind = StateKind::discrete;
  std::uint64_t state_count = 0;    // |S| for discrete state spaces, 0 otherwise
  std::size_t state_dim = 0;        // length of the raw State vector
  std::size_t observation_dim = 0;  // width of the network input built by observe()
  std::size_t action_count = 0;     // |A|
  std::size_t step_limit = 1;
  double discount = 0.99;
  // What the environment model predicts for the next state: a class index
  // (next_classes > 0) or a real vector (next_dim > 0).
  std::size_t next_classes = 0;
  std::size_t next_dim = 0;
};

struct StepResult {
  State next_state;
  double reward = 0.0;
  bool done = false;  // terminal; time-limit truncation is handled by the caller
};

struct Transition {
  State state;
  int action = 0;
  double reward = 0.0;
  State next_state;
  bool done = false;
};

/// Uniform MDP interface. Environments are immutable after construction:
/// reset and step are const and take all randomness from the caller's Rng
/// (or seed), so one instance can serve many runs.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual const EnvSpec& spec() const = 0;
  virtual State reset(std::uint64_t seed) const = 0;
  virtual StepResult step(const State& state, int action, Rng& rng) const = 0;

  // Network input for a state (one-hot, concatenated one-hots or raw).
  virtual void observe(const State& state, std::vector<double>& out) const = 0;

  std::vector<double> observe(const State& state) const {
    std::vector<double> out;
    observe(state, out);
    return out;
  }

  // Discrete state spaces only.
  virtual std::uint64_t state_index(const State& state) const {
    (void)state;
    throw UsageError(name() + ": state_index on a continuous state space");
  }
  virtual State state_at(std::uint64_t index) const {
    (void)index;
    throw UsageError(name() + ": state_at on a continuous state space");
  }

  // Environment-model target for a successor state.
  virtual std::size_t next_class(const State& next) const {
    return static_cast<std::size_t>(state_index(next));
  }
  virtual std::vector<double> next_vector(const State& next) const { return next; }

  // Extra per-action columns for embedding export (gridworld displacement).
  virtual std::vector<double> action_features(int action) const {
    (void)action;
    return {};
  }
  virtual std::vector<std::string> action_feature_names() const { return {}; }
  virtual std::vector<std::string> state_feature_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < spec().state_dim; ++i) names.push_back("s" + std::to_string(i));
    return names;
  }

  void check_action(int action) const {
    if (action < 0 || static_cast<std::size_t>(action) >= spec().action_count) {
      std::ostringstream os;
      os << name() << ": invalid action " << action << " (action count " << spec().action_count
         << ")";
      throw UsageError(os.str());
    }
  }
};

}  // namespace jsae
