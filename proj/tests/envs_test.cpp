#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>

#include "jsae/envs/gridworld.hpp"
#include "jsae/envs/recommender.hpp"
#include "jsae/envs/slotmachine.hpp"
#include "test_util.hpp"

namespace jsae {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("jsae_envs_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// --- gridworld -------------------------------------------------------------

TEST(GridworldDisplacement, SingleActuator) {
  const auto d = gridworld_displacement(0b0001, 4, 0.05);
  EXPECT_NEAR(d[0], 0.05, 1e-15);
  EXPECT_NEAR(d[1], 0.0, 1e-15);
}

TEST(GridworldDisplacement, OppositeActuatorsCancel) {
  const auto d = gridworld_displacement(0b0101, 4, 0.05);
  EXPECT_NEAR(d[0], 0.0, 1e-15);
  EXPECT_NEAR(d[1], 0.0, 1e-15);
  const auto all = gridworld_displacement(0b1111, 4, 0.05);
  EXPECT_NEAR(all[0], 0.0, 1e-15);
  EXPECT_NEAR(all[1], 0.0, 1e-15);
}

TEST(GridworldDisplacement, NineActuatorsTwoBits) {
  const double h = 0.05;
  const auto d = gridworld_displacement(0b11, 9, h);
  const double ex = h * (1.0 + std::cos(2.0 * std::numbers::pi / 9.0));
  const double ey = h * std::sin(2.0 * std::numbers::pi / 9.0);
  EXPECT_NEAR(d[0], ex, 1e-15);
  EXPECT_NEAR(d[1], ey, 1e-15);
  EXPECT_NEAR(d[0] / h, 1.766, 1e-3);
  EXPECT_NEAR(d[1] / h, 0.643, 1e-3);
}

TEST(GridworldDisplacement, NormalizedVariant) {
  const auto d = gridworld_displacement(0b11, 4, 0.1, true);
  EXPECT_NEAR(std::hypot(d[0], d[1]), 0.1, 1e-15);
  const auto zero = gridworld_displacement(0b0101, 4, 0.1, true);
  EXPECT_EQ(zero[0], 0.0);
  EXPECT_EQ(zero[1], 0.0);
}

TEST(GridworldDisplacement, OutOfRangeMaskThrows) {
  EXPECT_THROW(gridworld_displacement(16, 4, 0.05), UsageError);
}

TEST(Gridworld, ActionCountIsTwoToTheN) {
  for (int n : {2, 4, 6, 8}) {
    GridworldConfig c;
    c.actuators = n;
    EXPECT_EQ(Gridworld(c).spec().action_count, std::size_t{1} << n);
  }
}

TEST(Gridworld, EmptyActuatorSetKeepsPositionWithStepPenalty) {
  Gridworld env(GridworldConfig{});
  Rng rng(1);
  const State s = env.reset(0);
  const auto r = env.step(s, 0, rng);
  EXPECT_EQ(r.next_state, s);
  EXPECT_DOUBLE_EQ(r.reward, -0.05);
  EXPECT_FALSE(r.done);
}

TEST(Gridworld, ResetIsDeterministicStartCell) {
  Gridworld env(GridworldConfig{});
  EXPECT_EQ(env.reset(1), env.reset(2));
  const auto s = env.reset(1);
  EXPECT_NEAR(s[0], 0.125, 1e-12);  // centre of the cell containing (0.1, 0.1)
  EXPECT_NEAR(s[1], 0.125, 1e-12);
}

TEST(Gridworld, WallCollisionIsPenalized) {
  GridworldConfig c;
  c.actuators = 4;
  c.grid = 0;
  c.start = {0.01, 0.5};
  Gridworld env(c);
  Rng rng(2);
  const auto r = env.step(env.reset(0), 0b0100, rng);  // actuator 2 points to -x
  EXPECT_DOUBLE_EQ(r.next_state[0], 0.0);
  EXPECT_DOUBLE_EQ(r.reward, -0.05 - 0.5);
}

TEST(Gridworld, ObstacleBlocksMovement) {
  GridworldConfig c;
  c.actuators = 4;
  c.grid = 0;
  c.start = {0.43, 0.5};  // just left of the vertical bar at x = 0.45
  Gridworld env(c);
  Rng rng(3);
  const auto r = env.step(env.reset(0), 0b0001, rng);  // +x
  EXPECT_LT(r.next_state[0], 0.45);
  EXPECT_FALSE(env.blocked(r.next_state[0], r.next_state[1]));
  EXPECT_DOUBLE_EQ(r.reward, -0.55);
}

TEST(Gridworld, GoalEndsEpisodeWithReward) {
  GridworldConfig c;
  c.actuators = 4;
  c.grid = 0;
  c.start = {0.78, 0.9};
  Gridworld env(c);
  Rng rng(4);
  const auto r = env.step(env.reset(0), 0b0001, rng);
  EXPECT_TRUE(r.done);
  EXPECT_DOUBLE_EQ(r.reward, 100.0);
}

TEST(Gridworld, InvalidActionThrows) {
  Gridworld env(GridworldConfig{});
  Rng rng(5);
  EXPECT_THROW(env.step(env.reset(0), 64, rng), UsageError);
  EXPECT_THROW(env.step(env.reset(0), -1, rng), UsageError);
}

TEST(Gridworld, StartInsideObstacleIsRejected) {
  GridworldConfig c;
  c.start = {0.5, 0.5};
  EXPECT_THROW(Gridworld{c}, ConfigError);
}

TEST(Gridworld, StateIndexRoundTrip) {
  Gridworld env(GridworldConfig{});
  for (std::uint64_t i = 0; i < env.spec().state_count; ++i) EXPECT_EQ(env.state_index(env.state_at(i)), i);
  const auto obs = env.observe(env.reset(0));
  EXPECT_EQ(obs.size(), 400u);
  double s = 0.0;
  for (double v : obs) s += v;
  EXPECT_EQ(s, 1.0);
}

// Random walks in both modes never leave the arena or enter an obstacle.
TEST(GridworldProperty, PositionsStayValid) {
  for (int grid : {0, 20}) {
    GridworldConfig c;
    c.grid = grid;
    Gridworld env(c);
    Rng rng(6);
    State s = env.reset(0);
    for (int t = 0; t < 5000; ++t) {
      auto r = env.step(s, static_cast<int>(rng.below(env.spec().action_count)), rng);
      ASSERT_TRUE(env.inside_arena(r.next_state[0], r.next_state[1]));
      ASSERT_FALSE(env.blocked(r.next_state[0], r.next_state[1]));
      s = r.done ? env.reset(0) : r.next_state;
    }
  }
}

// --- slotmachine -------------------------------------------------------------

TEST(Slotmachine, DefaultCardinalities) {
  Slotmachine env(SlotmachineConfig{});
  EXPECT_EQ(env.spec().action_count, 1296u);
  EXPECT_EQ(env.spec().state_count, 1296u);
}

TEST(Slotmachine, SameSeedSameState) {
  Slotmachine env(SlotmachineConfig{});
  EXPECT_EQ(env.reset(11), env.reset(11));
}

TEST(Slotmachine, ZeroTurnIsIdentity) {
  Slotmachine env(SlotmachineConfig{});
  Rng rng(7);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = env.reset(seed);
    EXPECT_EQ(env.step(s, 0, rng).next_state, s);
  }
}

TEST(Slotmachine, ActionDigitsRotateReels) {
  Slotmachine env(SlotmachineConfig{});
  Rng rng(8);
  const State s{0, 5, 2, 3};
  // digits (base 6, reel 0 least significant): 1, 1, 4, 0
  const int action = 1 + 1 * 6 + 4 * 36 + 0 * 216;
  EXPECT_EQ(env.step(s, action, rng).next_state, (State{1, 0, 0, 3}));
}

TEST(Slotmachine, Payout) {
  Slotmachine env(SlotmachineConfig{});
  EXPECT_EQ(env.payout({1, 2, 3, 4}), 0.0);
  EXPECT_EQ(env.payout({1, 1, 3, 3}), 2.0);
  EXPECT_EQ(env.payout({2, 2, 2, 2}), 3.0 + 10.0);
}

TEST(Slotmachine, StateIndexRoundTrip) {
  Slotmachine env(SlotmachineConfig{});
  for (std::uint64_t i = 0; i < 1296; i += 7) EXPECT_EQ(env.state_index(env.state_at(i)), i);
}

// --- recommender -------------------------------------------------------------

TEST(RecommenderBoost, HandComputedRow) {
  const std::vector<double> p{0.2, 0.3, 0.5};
  const auto q = boosted_row(p, 0, 2.0);
  EXPECT_NEAR(q[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(q[1], 0.3 / 1.2, 1e-15);
  EXPECT_NEAR(q[2], 0.5 / 1.2, 1e-15);
}

TEST(RecommenderBoost, ClosedFormOnRandomRows) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    auto p = testing::random_vector(n, rng, 0.0, 1.0);
    double s = 0.0;
    for (double v : p) s += v;
    for (double& v : p) v /= s;
    const std::size_t j = rng.below(n);
    const double beta = 1.0 + rng.uniform(0.01, 5.0);
    const auto q = boosted_row(p, j, beta);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double expected = (i == j ? beta * p[i] : p[i]) / (1.0 + (beta - 1.0) * p[j]);
      EXPECT_NEAR(q[i], expected, 1e-12);
      total += q[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(RecommenderModel, CountsWindowsByHand) {
  std::vector<PurchaseEvent> log;
  for (std::size_t item : {0, 1, 0, 1, 0}) log.push_back({7, item});
  const auto built = build_recommender_model(log, 1, 2, 2.0, 0.0);
  const auto& m = built.model;
  const std::size_t h0[] = {0}, h1[] = {1};
  EXPECT_EQ(m.row(m.encode(h0)), (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(m.row(m.encode(h1)), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(built.rejected, 0u);
}

TEST(RecommenderModel, WindowsDoNotCrossUsers) {
  const std::vector<PurchaseEvent> log{{1, 0}, {1, 1}, {2, 2}, {2, 0}};
  const auto m = build_recommender_model(log, 1, 3, 2.0, 0.0).model;
  const std::size_t h1[] = {1};
  EXPECT_FALSE(m.has_row(m.encode(h1)));  // 1 -> 2 would cross the user boundary
  EXPECT_EQ(m.seen_states(), 2u);
}

TEST(RecommenderModel, SmoothingMakesRowsPositive) {
  SyntheticLogConfig c;
  c.items = 12;
  c.users = 40;
  c.clusters = 3;
  const auto m = build_recommender_model(generate_synthetic_log(c), 2, 12, 2.0, 0.1).model;
  for (const auto& [state, row] : m.rows()) {
    double s = 0.0;
    for (double p : row) {
      EXPECT_GT(p, 0.0);
      s += p;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(RecommenderModel, UnseenStatesUsePopularity) {
  const std::vector<PurchaseEvent> log{{0, 0}, {0, 0}, {0, 0}, {0, 1}};
  const auto m = build_recommender_model(log, 1, 3, 2.0, 0.0).model;
  const std::size_t h2[] = {2};
  EXPECT_EQ(m.row(m.encode(h2)), (std::vector<double>{0.75, 0.25, 0.0}));
}

TEST(RecommenderModel, RejectsUnknownItemsAndEmptyLogs) {
  const std::vector<PurchaseEvent> log{{0, 0}, {0, 5}, {0, 1}};
  const auto built = build_recommender_model(log, 1, 2, 2.0, 0.0);
  EXPECT_EQ(built.rejected, 1u);
  EXPECT_THROW(build_recommender_model(std::vector<PurchaseEvent>{}, 1, 2, 2.0, 0.0), ConfigError);
}

TEST(RecommenderModel, CodecRoundTrip) {
  RecommenderModel m(7, 3, 2.0);
  for (std::uint64_t i = 0; i < m.state_count(); ++i) EXPECT_EQ(m.encode(m.decode(i)), i);
}

TEST(SyntheticLog, SameSeedSameLog) {
  SyntheticLogConfig c;
  c.users = 30;
  const auto a = generate_synthetic_log(c);
  const auto b = generate_synthetic_log(c);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].user, b[i].user);
    EXPECT_EQ(a[i].item, b[i].item);
  }
}

// One cluster: item frequencies pass a chi-square uniformity test at 1%.
TEST(SyntheticLog, SingleClusterIsNearUniform) {
  SyntheticLogConfig c;
  c.items = 20;
  c.users = 200;
  c.events_per_user = 50;
  c.clusters = 1;
  const auto log = generate_synthetic_log(c);
  std::vector<double> counts(c.items, 0.0);
  for (const auto& ev : log) counts[ev.item] += 1.0;
  const double expected = static_cast<double>(log.size()) / c.items;
  double chi2 = 0.0;
  for (double k : counts) chi2 += (k - expected) * (k - expected) / expected;
  EXPECT_LT(chi2, 36.19);  // 99th percentile, 19 degrees of freedom
}

TEST(SyntheticLog, ClustersConcentrateTransitionMass) {
  SyntheticLogConfig c;  // 50 items, 5 clusters
  const auto m = build_recommender_model(generate_synthetic_log(c), 1, c.items, 2.0, 0.0).model;
  auto cluster = [&](std::size_t item) { return item * c.clusters / c.items; };
  double within = 0.0, across = 0.0;
  for (const auto& [state, row] : m.rows()) {
    const std::size_t from = m.decode(state)[0];
    for (std::size_t j = 0; j < row.size(); ++j) (cluster(j) == cluster(from) ? within : across) += row[j];
  }
  EXPECT_GE(within, 2.0 * across);
}

TEST(RecommenderEnv, RewardMatchesPurchaseAndHistoryShifts) {
  SyntheticLogConfig c;
  c.items = 10;
  c.clusters = 2;
  auto model = std::make_shared<const RecommenderModel>(
      build_recommender_model(generate_synthetic_log(c), 2, 10, 2.0, 0.05).model);
  RecommenderEnv env(model, {});
  Rng rng(10);
  State s = env.reset(3);
  EXPECT_EQ(s, env.reset(3));
  for (int t = 0; t < 500; ++t) {
    const int a = static_cast<int>(rng.below(10));
    const auto r = env.step(s, a, rng);
    EXPECT_EQ(r.next_state[0], s[1]);
    EXPECT_EQ(r.reward, r.next_state[1] == a ? 1.0 : 0.0);
    EXPECT_EQ(env.next_class(r.next_state), static_cast<std::size_t>(r.next_state[1]));
    s = r.next_state;
  }
}

// Empirical purchase frequency of the recommended item matches the boosted row.
TEST(RecommenderEnv, PurchaseFollowsBoostedRow) {
  auto base = std::make_shared<RecommenderModel>(3, 1, 2.0);
  base->set_row(0, {0.2, 0.3, 0.5});
  RecommenderEnv env(base, {});
  Rng rng(11);
  const int trials = 60000;
  int hits = 0;
  for (int i = 0; i < trials; ++i) hits += env.step(State{0}, 0, rng).reward > 0 ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(hits) / trials, 1.0 / 3.0, 0.01);
}

TEST(RecommenderEnv, SameSeedSameTrajectory) {
  auto model = std::make_shared<const RecommenderModel>(
      build_recommender_model(generate_synthetic_log(SyntheticLogConfig{}), 2, 50, 2.0, 0.05).model);
  RecommenderEnv env(model, {});
  auto roll = [&] {
    Rng rng(12);
    State s = env.reset(5);
    std::vector<State> traj{s};
    for (int t = 0; t < 50; ++t) {
      s = env.step(s, t % 50, rng).next_state;
      traj.push_back(s);
    }
    return traj;
  };
  EXPECT_EQ(roll(), roll());
}

TEST(PurchaseCsv, RemapsIdsAndSortsByTimestamp) {
  const auto dir = scratch_dir("csv");
  const auto path = (dir / "log.csv").string();
  {
    std::ofstream out(path);
    out << "user_id,item_id,timestamp\n"
        << "u1,apple,3\n"
        << "u2,pear,1\n"
        << "u1,pear,1\n"
        << "u1,fig,2\n";
  }
  const auto log = read_purchase_csv(path);
  EXPECT_EQ(log.item_ids, (std::vector<std::string>{"apple", "pear", "fig"}));
  ASSERT_EQ(log.events.size(), 4u);
  // u1 sorted by time: pear(1) fig(2) apple(0); then u2: pear
  EXPECT_EQ(log.events[0].item, 1u);
  EXPECT_EQ(log.events[1].item, 2u);
  EXPECT_EQ(log.events[2].item, 0u);
  EXPECT_EQ(log.events[3].user, 1u);
  write_items_tsv(log, (dir / "items.tsv").string());
  std::ifstream in(dir / "items.tsv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "index\titem_id");
  std::getline(in, line);
  EXPECT_EQ(line, "0\tapple");
}

TEST(PurchaseCsv, RoundTripsSyntheticLog) {
  const auto dir = scratch_dir("roundtrip");
  SyntheticLogConfig c;
  c.users = 10;
  c.events_per_user = 5;
  const auto log = generate_synthetic_log(c);
  write_purchase_csv(log, (dir / "log.csv").string());
  const auto back = read_purchase_csv((dir / "log.csv").string());
  ASSERT_EQ(back.events.size(), log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(back.item_ids[back.events[i].item], std::to_string(log[i].item));
  }
}

TEST(PurchaseCsv, BadInputsThrow) {
  const auto dir = scratch_dir("bad");
  EXPECT_THROW(read_purchase_csv((dir / "missing.csv").string()), ConfigError);
  {
    std::ofstream out(dir / "hdr.csv");
    out << "user,item\n1,2\n";
  }
  EXPECT_THROW(read_purchase_csv((dir / "hdr.csv").string()), ConfigError);
}

// Determinism across all three environments for a fixed action sequence.
TEST(EnvironmentProperty, IdenticalSeedsGiveIdenticalTrajectories) {
  auto model = std::make_shared<const RecommenderModel>(
      build_recommender_model(generate_synthetic_log(SyntheticLogConfig{}), 2, 50, 2.0, 0.05).model);
  std::vector<std::unique_ptr<Environment>> envs;
  envs.push_back(std::make_unique<Gridworld>(GridworldConfig{}));
  envs.push_back(std::make_unique<Slotmachine>(SlotmachineConfig{}));
  envs.push_back(std::make_unique<RecommenderEnv>(model, RecommenderEnvConfig{}));
  for (const auto& env : envs) {
    auto roll = [&] {
      Rng rng(99);
      Rng actions(5);
      State s = env->reset(17);
      std::vector<double> trace;
      for (int t = 0; t < 300; ++t) {
        auto r = env->step(s, static_cast<int>(actions.below(env->spec().action_count)), rng);
        trace.insert(trace.end(), r.next_state.begin(), r.next_state.end());
        trace.push_back(r.reward);
        s = r.done ? env->reset(17) : r.next_state;
      }
      return trace;
    };
    EXPECT_EQ(roll(), roll()) << env->name();
  }
}

}  // namespace
}  // namespace jsae
