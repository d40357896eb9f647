#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jsae/envs/environment.hpp"

namespace jsae {

struct SlotmachineConfig {
  int reels = 4;
  int values = 6;  // faces per reel
  std::size_t step_limit = 20;
  double pair_reward = 1.0;
  double jackpot_reward = 10.0;
};

/// Reels with `values` faces each. An action picks, per reel, a fraction
/// k/values of a full turn (base-`values` digit k of the action index) and
/// rotates that reel by k faces. Reward: pair_reward per adjacent equal pair
/// plus jackpot_reward when every reel shows the same face. Episodes end at
/// the step limit only.
class Slotmachine final : public Environment {
 public:
  explicit Slotmachine(SlotmachineConfig config) : config_(config) {
    if (config_.reels < 1) throw ConfigError("slotmachine: need at least one reel");
    if (config_.values < 2) throw ConfigError("slotmachine: need at least two values per reel");
    if (config_.step_limit < 1) throw ConfigError("slotmachine: step limit must be >= 1");
    std::uint64_t count = 1;
    for (int r = 0; r < config_.reels; ++r) {
      count *= static_cast<std::uint64_t>(config_.values);
      if (count > (std::uint64_t{1} << 24)) throw ConfigError("slotmachine: state space too large");
    }
    spec_.state_kind = StateKind::discrete;
    spec_.state_count = count;
    spec_.state_dim = static_cast<std::size_t>(config_.reels);
    spec_.observation_dim = static_cast<std::size_t>(count);
    spec_.action_count = static_cast<std::size_t>(count);
    spec_.step_limit = config_.step_limit;
    spec_.next_classes = static_cast<std::size_t>(count);
  }

  std::string name() const override { return "slotmachine"; }
  const EnvSpec& spec() const override { return spec_; }

  State reset(std::uint64_t seed) const override {
    Rng rng(derive_seed(seed, 0x5107));
    State s(config_.reels);
    for (auto& face : s) face = static_cast<double>(rng.below(config_.values));
    return s;
  }

  StepResult step(const State& state, int action, Rng& /*rng*/) const override {
    check_action(action);
    StepResult r;
    r.next_state = state;
    int a = action;
    for (int reel = 0; reel < config_.reels; ++reel) {
      const int turn = a % config_.values;
      a /= config_.values;
      const int face = static_cast<int>(state[reel]);
      r.next_state[reel] = static_cast<double>((face + turn) % config_.values);
    }
    r.reward = payout(r.next_state);
    return r;
  }

  double payout(const State& s) const {
    double reward = 0.0;
    bool all_equal = true;
    for (int reel = 1; reel < config_.reels; ++reel) {
      if (s[reel] == s[reel - 1]) {
        reward += config_.pair_reward;
      } else {
        all_equal = false;
      }
    }
    if (all_equal && config_.reels > 1) reward += config_.jackpot_reward;
    return reward;
  }

  using Environment::observe;
  void observe(const State& state, std::vector<double>& out) const override {
    out.assign(spec_.observation_dim, 0.0);
    out[state_index(state)] = 1.0;
  }

  std::uint64_t state_index(const State& state) const override {
    std::uint64_t index = 0;
    for (int reel = config_.reels; reel-- > 0;) {
      index = index * config_.values + static_cast<std::uint64_t>(state[reel]);
    }
    return index;
  }

  State state_at(std::uint64_t index) const override {
    if (index >= spec_.state_count) throw UsageError("slotmachine: state index out of range");
    State s(config_.reels);
    for (int reel = 0; reel < config_.reels; ++reel) {
      s[reel] = static_cast<double>(index % config_.values);
      index /= config_.values;
    }
    return s;
  }

  std::vector<std::string> state_feature_names() const override {
    std::vector<std::string> names;
    for (int r = 0; r < config_.reels; ++r) names.push_back("reel" + std::to_string(r));
    return names;
  }

 private:
  SlotmachineConfig config_;
  EnvSpec spec_;
};

}  // namespace jsae
