#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "jsae/envs/environment.hpp"

namespace jsae {

struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

// L-shaped obstacle in the middle of the unit arena.
inline std::vector<Box> default_obstacles() {
  return {Box{0.45, 0.30, 0.55, 0.70}, Box{0.55, 0.30, 0.80, 0.40}};
}

struct GridworldConfig {
  double arena = 1.0;  // side of the square arena [0, arena]^2
  int actuators = 6;
  double step_size = 0.05;
  Box goal{0.8, 0.8, 1.0, 1.0};
  std::array<double, 2> start{0.1, 0.1};
  std::vector<Box> obstacles = default_obstacles();
  int grid = 20;  // cells per side; 0 = continuous state
  double step_penalty = -0.05;
  double collision_penalty = -0.5;
  double goal_reward = 100.0;
  bool normalize_displacement = false;
  std::size_t step_limit = 100;
};

/// step_size * sum over set bits k of (cos 2 pi k / n, sin 2 pi k / n).
/// With `normalize`, the sum is rescaled to unit length (zero stays zero).
inline std::array<double, 2> gridworld_displacement(std::uint64_t bitmask, int n, double step_size,
                                                    bool normalize = false) {
  if (n < 1 || n > 30) throw ConfigError("gridworld: actuator count must be in [1, 30]");
  if (bitmask >= (std::uint64_t{1} << n)) {
    throw UsageError("gridworld: actuator bitmask " + std::to_string(bitmask) + " out of range");
  }
  double dx = 0.0, dy = 0.0;
  for (int k = 0; k < n; ++k) {
    if (bitmask & (std::uint64_t{1} << k)) {
      const double angle = 2.0 * std::numbers::pi * k / n;
      dx += std::cos(angle);
      dy += std::sin(angle);
    }
  }
  if (normalize) {
    const double len = std::hypot(dx, dy);
    if (len > 1e-12) {
      dx /= len;
      dy /= len;
    } else {
      dx = dy = 0.0;
    }
  }
  return {step_size * dx, step_size * dy};
}

/// Point agent in a square arena, moved by 2^n actuator combinations.
/// Discrete mode snaps the agent to cell centres after every move and exposes
/// the cell index; continuous mode exposes the raw coordinate.
class Gridworld final : public Environment {
 public:
  explicit Gridworld(GridworldConfig config) : config_(std::move(config)) {
    const auto& c = config_;
    if (c.arena <= 0.0) throw ConfigError("gridworld: arena must be positive");
    if (c.actuators < 1 || c.actuators > 20) throw ConfigError("gridworld: actuators must be in [1, 20]");
    if (c.step_size <= 0.0) throw ConfigError("gridworld: step size must be positive");
    if (c.grid < 0) throw ConfigError("gridworld: grid size must be >= 0");
    if (c.step_limit < 1) throw ConfigError("gridworld: step limit must be >= 1");
    if (c.goal.x0 < 0.0 || c.goal.y0 < 0.0 || c.goal.x1 > c.arena || c.goal.y1 > c.arena ||
        c.goal.x0 > c.goal.x1 || c.goal.y0 > c.goal.y1) {
      throw ConfigError("gridworld: goal region must lie within the arena");
    }
    start_ = snap(c.start[0], c.start[1]);
    if (!inside_arena(start_[0], start_[1]) || blocked(start_[0], start_[1])) {
      throw ConfigError("gridworld: start point lies outside the arena or inside an obstacle");
    }
    spec_.state_kind = c.grid > 0 ? StateKind::discrete : StateKind::continuous;
    spec_.state_count = c.grid > 0 ? static_cast<std::uint64_t>(c.grid) * c.grid : 0;
    spec_.state_dim = 2;
    spec_.observation_dim = c.grid > 0 ? spec_.state_count : 2;
    spec_.action_count = std::size_t{1} << c.actuators;
    spec_.step_limit = c.step_limit;
    spec_.next_classes = c.grid > 0 ? spec_.state_count : 0;
    spec_.next_dim = c.grid > 0 ? 0 : 2;
  }

  std::string name() const override { return config_.grid > 0 ? "gridworld-discrete" : "gridworld"; }
  const EnvSpec& spec() const override { return spec_; }
  const GridworldConfig& config() const { return config_; }

  State reset(std::uint64_t /*seed*/) const override { return {start_[0], start_[1]}; }

  StepResult step(const State& state, int action, Rng& /*rng*/) const override {
    check_action(action);
    const auto disp = gridworld_displacement(static_cast<std::uint64_t>(action), config_.actuators,
                                             config_.step_size, config_.normalize_displacement);
    const double x = state[0], y = state[1];
    bool collided = false;
    // Walk the segment in substeps; stop before the first blocked point.
    constexpr int kSubsteps = 16;
    double nx = x, ny = y;
    for (int s = 1; s <= kSubsteps; ++s) {
      double px = x + disp[0] * s / kSubsteps;
      double py = y + disp[1] * s / kSubsteps;
      const double cx = std::clamp(px, 0.0, config_.arena);
      const double cy = std::clamp(py, 0.0, config_.arena);
      if (cx != px || cy != py) collided = true;
      if (blocked(cx, cy)) {
        collided = true;
        break;
      }
      nx = cx;
      ny = cy;
      if (cx != px || cy != py) {
        // Slide is not modelled: the agent stops at the wall.
        break;
      }
    }
    auto snapped = snap(nx, ny);
    if (blocked(snapped[0], snapped[1])) {
      snapped = {x, y};
      collided = true;
    }
    StepResult r;
    r.next_state = {snapped[0], snapped[1]};
    if (config_.goal.contains(snapped[0], snapped[1])) {
      r.reward = config_.goal_reward;
      r.done = true;
    } else {
      r.reward = config_.step_penalty + (collided ? config_.collision_penalty : 0.0);
    }
    return r;
  }

  using Environment::observe;
  void observe(const State& state, std::vector<double>& out) const override {
    if (config_.grid > 0) {
      out.assign(spec_.observation_dim, 0.0);
      out[state_index(state)] = 1.0;
    } else {
      out.assign(state.begin(), state.end());
    }
  }

  std::uint64_t state_index(const State& state) const override {
    if (config_.grid <= 0) return Environment::state_index(state);
    const auto [i, j] = cell_of(state[0], state[1]);
    return static_cast<std::uint64_t>(j) * config_.grid + i;
  }

  State state_at(std::uint64_t index) const override {
    if (config_.grid <= 0) return Environment::state_at(index);
    if (index >= spec_.state_count) throw UsageError("gridworld: state index out of range");
    const int i = static_cast<int>(index % config_.grid);
    const int j = static_cast<int>(index / config_.grid);
    const double h = cell_size();
    return {(i + 0.5) * h, (j + 0.5) * h};
  }

  std::vector<double> action_features(int action) const override {
    check_action(action);
    const auto d = gridworld_displacement(static_cast<std::uint64_t>(action), config_.actuators,
                                          config_.step_size, config_.normalize_displacement);
    return {d[0], d[1]};
  }
  std::vector<std::string> action_feature_names() const override { return {"dx", "dy"}; }
  std::vector<std::string> state_feature_names() const override { return {"x", "y"}; }

  bool blocked(double x, double y) const {
    for (const auto& b : config_.obstacles) {
      if (b.contains(x, y)) return true;
    }
    return false;
  }

  bool inside_arena(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x <= config_.arena && y <= config_.arena;
  }

 private:
  double cell_size() const { return config_.arena / config_.grid; }

  std::array<int, 2> cell_of(double x, double y) const {
    const double h = cell_size();
    const int i = std::clamp(static_cast<int>(std::floor(x / h)), 0, config_.grid - 1);
    const int j = std::clamp(static_cast<int>(std::floor(y / h)), 0, config_.grid - 1);
    return {i, j};
  }

  std::array<double, 2> snap(double x, double y) const {
    if (config_.grid <= 0) return {x, y};
    const auto [i, j] = cell_of(x, y);
    const double h = cell_size();
    return {(i + 0.5) * h, (j + 0.5) * h};
  }

  GridworldConfig config_;
  EnvSpec spec_;
  std::array<double, 2> start_{};
};

}  // namespace jsae
