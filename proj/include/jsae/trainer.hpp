#pragma once

// Run orchestration: config parsing, environment construction, pre-training,
// the act/step/update loop for the three agent kinds, metrics output and
// transfer initialization.

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "jsae/autoencoder.hpp"
#include "jsae/checkpoint.hpp"
#include "jsae/config.hpp"
#include "jsae/embedding.hpp"
#include "jsae/envs/gridworld.hpp"
#include "jsae/envs/recommender.hpp"
#include "jsae/envs/slotmachine.hpp"
#include "jsae/policy.hpp"

namespace jsae {

enum class AgentKind { jsae, no_embed, autoencoder };
enum class Algo { ppo, vpg };
enum class EnvKind { gridworld, slotmachine, recommender };
enum class TransferWhat { none, states, actions, both };
enum class Toggle { automatic, on, off };

inline std::string to_string(AgentKind k) {
  switch (k) {
    case AgentKind::jsae: return "jsae";
    case AgentKind::no_embed: return "no-embed";
    case AgentKind::autoencoder: return "autoencoder";
  }
  return "?";
}
inline std::string to_string(Algo a) { return a == Algo::ppo ? "ppo" : "vpg"; }
inline std::string to_string(EnvKind e) {
  switch (e) {
    case EnvKind::gridworld: return "gridworld";
    case EnvKind::slotmachine: return "slotmachine";
    case EnvKind::recommender: return "recommender";
  }
  return "?";
}
inline std::string to_string(TransferWhat w) {
  switch (w) {
    case TransferWhat::none: return "none";
    case TransferWhat::states: return "states";
    case TransferWhat::actions: return "actions";
    case TransferWhat::both: return "both";
  }
  return "?";
}
inline std::string to_string(Toggle t) {
  return t == Toggle::automatic ? "auto" : (t == Toggle::on ? "true" : "false");
}

inline TransferWhat transfer_what_from_string(const std::string& s) {
  if (s == "none" || s.empty()) return TransferWhat::none;
  if (s == "states") return TransferWhat::states;
  if (s == "actions") return TransferWhat::actions;
  if (s == "both") return TransferWhat::both;
  throw ConfigError("transfer.what must be states, actions or both, got '" + s + "'");
}

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct RecommenderSettings {
  std::string log;  // purchase CSV; empty = synthetic log
  SyntheticLogConfig synthetic;
  std::size_t history = 2;
  double boost = 2.0;
  double smoothing = 0.05;
  std::size_t step_limit = 20;
};

struct RunConfig {
  EnvKind env = EnvKind::gridworld;
  GridworldConfig grid;
  SlotmachineConfig slot;
  RecommenderSettings rec;

  AgentKind agent = AgentKind::jsae;
  Algo algo = Algo::ppo;
  std::uint64_t seed = 1;
  std::size_t epochs = 300;
  std::size_t steps_per_epoch = 1000;
  std::string output_dir;
  bool record_time = false;

  std::size_t m = 8, d = 2;
  std::vector<std::size_t> hidden{64, 64};  // actor and critic
  std::vector<std::size_t> embed_hidden{64, 64};
  std::vector<std::size_t> decoder_hidden{64};
  double lr_actor = 3e-4, lr_critic = 1e-3, lr_embed = 1e-3;
  double std_init = 0.6;
  PgConfig pg;

  std::size_t pretrain_samples = 20000;
  std::size_t pretrain_epochs = 20;
  std::size_t embed_batch = 256;
  std::size_t buffer_capacity = 100000;
  Toggle continued_updates = Toggle::automatic;
  std::size_t embed_updates = 1;  // embedding steps per policy rollout
  double assumption_tolerance = 1e-9;
  std::size_t assumption_budget = 5000;

  std::size_t ae_epochs = 200;
  std::size_t ae_batch = 32;
  double ae_lr = 3e-3;

  std::string transfer_from;
  TransferWhat transfer_what = TransferWhat::none;
  bool transfer_freeze = true;

  bool continued_updates_enabled() const {
    if (continued_updates == Toggle::automatic) return env == EnvKind::recommender;
    return continued_updates == Toggle::on;
  }

  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "env", "agent", "algo", "seed", "epochs", "steps_per_epoch", "output_dir", "record_time",
        "m", "d", "hidden", "embed_hidden", "decoder_hidden", "lr_actor", "lr_critic", "lr_embed",
        "std_init", "gamma", "lambda", "clip", "ppo_epochs", "minibatch", "target_kl", "critic_iters",
        "normalize_advantages", "pretrain_samples", "pretrain_epochs", "embed_batch", "buffer_capacity",
        "continued_updates", "embed_updates", "assumption_tolerance", "assumption_budget", "ae_epochs",
        "ae_batch", "ae_lr", "transfer.from", "transfer.what", "transfer.freeze",
        "grid.arena", "grid.actuators", "grid.step_size", "grid.goal", "grid.start", "grid.obstacles",
        "grid.size", "grid.step_penalty", "grid.collision_penalty", "grid.goal_reward",
        "grid.normalize_displacement", "grid.step_limit",
        "slot.reels", "slot.values", "slot.step_limit", "slot.pair_reward", "slot.jackpot_reward",
        "rec.log", "rec.items", "rec.users", "rec.events_per_user", "rec.clusters", "rec.data_seed",
        "rec.stay_probability", "rec.successor_probability", "rec.history", "rec.boost", "rec.smoothing",
        "rec.step_limit"};
    return keys;
  }

  // Keys owned by other tools (gridsearch space, seed lists) pass through.
  static bool passthrough_key(const std::string& key) {
    return key.rfind("search.", 0) == 0 || key == "seeds" || key == "selection";
  }

  static RunConfig from_config(const Config& c) {
    for (const auto& [key, value] : c.values()) {
      if (!known_keys().count(key) && !passthrough_key(key)) {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
    RunConfig r;
    const auto env = c.get("env", "gridworld");
    if (env == "gridworld") r.env = EnvKind::gridworld;
    else if (env == "slotmachine") r.env = EnvKind::slotmachine;
    else if (env == "recommender") r.env = EnvKind::recommender;
    else throw ConfigError("env must be gridworld, slotmachine or recommender, got '" + env + "'");

    const auto agent = c.get("agent", "jsae");
    if (agent == "jsae") r.agent = AgentKind::jsae;
    else if (agent == "no-embed") r.agent = AgentKind::no_embed;
    else if (agent == "autoencoder") r.agent = AgentKind::autoencoder;
    else throw ConfigError("agent must be jsae, no-embed or autoencoder, got '" + agent + "'");

    const auto algo = c.get("algo", "ppo");
    if (algo == "ppo") r.algo = Algo::ppo;
    else if (algo == "vpg") r.algo = Algo::vpg;
    else throw ConfigError("algo must be ppo or vpg, got '" + algo + "'");

    r.seed = static_cast<std::uint64_t>(c.get_size("seed", r.seed));
    r.epochs = c.get_size("epochs", r.epochs);
    r.steps_per_epoch = c.get_size("steps_per_epoch", r.steps_per_epoch);
    r.output_dir = c.get("output_dir", r.output_dir);
    r.record_time = c.get_bool("record_time", r.record_time);

    r.m = c.get_size("m", r.m);
    r.d = c.get_size("d", r.d);
    r.hidden = c.get_sizes("hidden", r.hidden);
    r.embed_hidden = c.get_sizes("embed_hidden", r.embed_hidden);
    r.decoder_hidden = c.get_sizes("decoder_hidden", r.decoder_hidden);
    r.lr_actor = c.get_double("lr_actor", r.lr_actor);
    r.lr_critic = c.get_double("lr_critic", r.lr_critic);
    r.lr_embed = c.get_double("lr_embed", r.lr_embed);
    r.std_init = c.get_double("std_init", r.std_init);
    r.pg.gamma = c.get_double("gamma", r.pg.gamma);
    r.pg.lambda = c.get_double("lambda", r.pg.lambda);
    r.pg.clip = c.get_double("clip", r.pg.clip);
    r.pg.ppo_epochs = c.get_size("ppo_epochs", r.pg.ppo_epochs);
    r.pg.minibatch = c.get_size("minibatch", r.pg.minibatch);
    r.pg.target_kl = c.get_double("target_kl", r.pg.target_kl);
    r.pg.critic_iters = c.get_size("critic_iters", r.pg.critic_iters);
    r.pg.normalize_advantages = c.get_bool("normalize_advantages", r.pg.normalize_advantages);

    r.pretrain_samples = c.get_size("pretrain_samples", r.pretrain_samples);
    r.pretrain_epochs = c.get_size("pretrain_epochs", r.pretrain_epochs);
    r.embed_batch = c.get_size("embed_batch", r.embed_batch);
    r.buffer_capacity = c.get_size("buffer_capacity", r.buffer_capacity);
    const auto cu = c.get("continued_updates", "auto");
    if (cu == "auto") r.continued_updates = Toggle::automatic;
    else r.continued_updates = c.get_bool("continued_updates", false) ? Toggle::on : Toggle::off;
    r.embed_updates = c.get_size("embed_updates", r.embed_updates);
    r.assumption_tolerance = c.get_double("assumption_tolerance", r.assumption_tolerance);
    r.assumption_budget = c.get_size("assumption_budget", r.assumption_budget);

    r.ae_epochs = c.get_size("ae_epochs", r.ae_epochs);
    r.ae_batch = c.get_size("ae_batch", r.ae_batch);
    r.ae_lr = c.get_double("ae_lr", r.ae_lr);

    r.transfer_from = c.get("transfer.from", r.transfer_from);
    r.transfer_what = transfer_what_from_string(c.get("transfer.what", r.transfer_from.empty() ? "none" : "states"));
    r.transfer_freeze = c.get_bool("transfer.freeze", r.transfer_freeze);

    auto& g = r.grid;
    g.arena = c.get_double("grid.arena", g.arena);
    g.actuators = static_cast<int>(c.get_int("grid.actuators", g.actuators));
    g.step_size = c.get_double("grid.step_size", g.step_size);
    g.grid = static_cast<int>(c.get_int("grid.size", g.grid));
    g.step_penalty = c.get_double("grid.step_penalty", g.step_penalty);
    g.collision_penalty = c.get_double("grid.collision_penalty", g.collision_penalty);
    g.goal_reward = c.get_double("grid.goal_reward", g.goal_reward);
    g.normalize_displacement = c.get_bool("grid.normalize_displacement", g.normalize_displacement);
    g.step_limit = c.get_size("grid.step_limit", g.step_limit);
    if (c.has("grid.goal")) {
      const auto v = c.get_doubles("grid.goal", {});
      if (v.size() != 4) throw ConfigError("grid.goal needs x0,y0,x1,y1");
      g.goal = {v[0], v[1], v[2], v[3]};
    }
    if (c.has("grid.start")) {
      const auto v = c.get_doubles("grid.start", {});
      if (v.size() != 2) throw ConfigError("grid.start needs x,y");
      g.start = {v[0], v[1]};
    }
    if (c.has("grid.obstacles")) {
      g.obstacles.clear();
      const auto text = c.get("grid.obstacles", "");
      if (text != "none" && !text.empty()) {
        for (const auto& part : split(text, ';')) {
          Config one;
          one.set("grid.obstacles", part);
          const auto v = one.get_doubles("grid.obstacles", {});
          if (v.size() != 4) throw ConfigError("grid.obstacles entries need x0,y0,x1,y1 (';'-separated)");
          g.obstacles.push_back({v[0], v[1], v[2], v[3]});
        }
      }
    }

    auto& s = r.slot;
    s.reels = static_cast<int>(c.get_int("slot.reels", s.reels));
    s.values = static_cast<int>(c.get_int("slot.values", s.values));
    s.step_limit = c.get_size("slot.step_limit", s.step_limit);
    s.pair_reward = c.get_double("slot.pair_reward", s.pair_reward);
    s.jackpot_reward = c.get_double("slot.jackpot_reward", s.jackpot_reward);

    auto& q = r.rec;
    q.log = c.get("rec.log", q.log);
    q.synthetic.items = c.get_size("rec.items", q.synthetic.items);
    q.synthetic.users = c.get_size("rec.users", q.synthetic.users);
    q.synthetic.events_per_user = c.get_size("rec.events_per_user", q.synthetic.events_per_user);
    q.synthetic.clusters = c.get_size("rec.clusters", q.synthetic.clusters);
    q.synthetic.seed = static_cast<std::uint64_t>(c.get_size("rec.data_seed", q.synthetic.seed));
    q.synthetic.stay_probability = c.get_double("rec.stay_probability", q.synthetic.stay_probability);
    q.synthetic.successor_probability =
        c.get_double("rec.successor_probability", q.synthetic.successor_probability);
    q.history = c.get_size("rec.history", q.history);
    q.boost = c.get_double("rec.boost", q.boost);
    q.smoothing = c.get_double("rec.smoothing", q.smoothing);
    q.step_limit = c.get_size("rec.step_limit", q.step_limit);

    r.validate();
    return r;
  }

  void validate() const {
    auto positive = [](double v, const char* key) {
      if (!(v > 0.0)) throw ConfigError(std::string("config key '") + key + "' must be positive");
    };
    auto at_least_one = [](std::size_t v, const char* key) {
      if (v < 1) throw ConfigError(std::string("config key '") + key + "' must be >= 1");
    };
    at_least_one(steps_per_epoch, "steps_per_epoch");
    at_least_one(m, "m");
    at_least_one(d, "d");
    at_least_one(pg.minibatch, "minibatch");
    at_least_one(embed_batch, "embed_batch");
    at_least_one(buffer_capacity, "buffer_capacity");
    at_least_one(ae_batch, "ae_batch");
    at_least_one(assumption_budget, "assumption_budget");
    // A learning rate of zero is allowed: it freezes that component.
    if (lr_actor < 0.0 || lr_critic < 0.0 || lr_embed < 0.0 || ae_lr < 0.0) {
      throw ConfigError("learning rates must be >= 0");
    }
    positive(std_init, "std_init");
    positive(assumption_tolerance, "assumption_tolerance");
    positive(pg.clip, "clip");
    positive(pg.target_kl, "target_kl");
    if (!(pg.gamma > 0.0 && pg.gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
    if (!(pg.lambda >= 0.0 && pg.lambda <= 1.0)) throw ConfigError("lambda must be in [0, 1]");
    if (agent == AgentKind::jsae && pretrain_samples > 0 && pretrain_samples < embed_batch) {
      throw ConfigError("pretrain_samples must be 0 or >= embed_batch");
    }
    if (agent == AgentKind::autoencoder && pretrain_samples == 0) {
      throw ConfigError("the autoencoder baseline needs pretrain_samples > 0");
    }
    if (agent != AgentKind::jsae && !transfer_from.empty()) {
      throw ConfigError("transfer is only supported for the jsae agent");
    }
    if (!transfer_from.empty() && transfer_what == TransferWhat::none) {
      throw ConfigError("transfer.from is set but transfer.what is none");
    }
    if (env == EnvKind::recommender && rec.log.empty() && rec.synthetic.items < 2) {
      throw ConfigError("rec.items must be >= 2");
    }
  }

  /// Effective configuration, every key spelled out.
  Config to_config() const {
    Config c;
    c.set("env", to_string(env));
    c.set("agent", to_string(agent));
    c.set("algo", to_string(algo));
    c.set("seed", std::to_string(seed));
    c.set("epochs", std::to_string(epochs));
    c.set("steps_per_epoch", std::to_string(steps_per_epoch));
    c.set("output_dir", output_dir);
    c.set("record_time", record_time ? "true" : "false");
    c.set("m", std::to_string(m));
    c.set("d", std::to_string(d));
    c.set("hidden", join_sizes(hidden));
    c.set("embed_hidden", join_sizes(embed_hidden));
    c.set("decoder_hidden", join_sizes(decoder_hidden));
    c.set("lr_actor", format_double(lr_actor));
    c.set("lr_critic", format_double(lr_critic));
    c.set("lr_embed", format_double(lr_embed));
    c.set("std_init", format_double(std_init));
    c.set("gamma", format_double(pg.gamma));
    c.set("lambda", format_double(pg.lambda));
    c.set("clip", format_double(pg.clip));
    c.set("ppo_epochs", std::to_string(pg.ppo_epochs));
    c.set("minibatch", std::to_string(pg.minibatch));
    c.set("target_kl", format_double(pg.target_kl));
    c.set("critic_iters", std::to_string(pg.critic_iters));
    c.set("normalize_advantages", pg.normalize_advantages ? "true" : "false");
    c.set("pretrain_samples", std::to_string(pretrain_samples));
    c.set("pretrain_epochs", std::to_string(pretrain_epochs));
    c.set("embed_batch", std::to_string(embed_batch));
    c.set("buffer_capacity", std::to_string(buffer_capacity));
    c.set("continued_updates", to_string(continued_updates));
    c.set("embed_updates", std::to_string(embed_updates));
    c.set("assumption_tolerance", format_double(assumption_tolerance));
    c.set("assumption_budget", std::to_string(assumption_budget));
    c.set("ae_epochs", std::to_string(ae_epochs));
    c.set("ae_batch", std::to_string(ae_batch));
    c.set("ae_lr", format_double(ae_lr));
    c.set("transfer.from", transfer_from);
    c.set("transfer.what", to_string(transfer_what));
    c.set("transfer.freeze", transfer_freeze ? "true" : "false");
    switch (env) {
      case EnvKind::gridworld: {
        c.set("grid.arena", format_double(grid.arena));
        c.set("grid.actuators", std::to_string(grid.actuators));
        c.set("grid.step_size", format_double(grid.step_size));
        c.set("grid.size", std::to_string(grid.grid));
        c.set("grid.goal", format_double(grid.goal.x0) + "," + format_double(grid.goal.y0) + "," +
                               format_double(grid.goal.x1) + "," + format_double(grid.goal.y1));
        c.set("grid.start", format_double(grid.start[0]) + "," + format_double(grid.start[1]));
        std::string obs;
        for (const auto& b : grid.obstacles) {
          if (!obs.empty()) obs += ";";
          obs += format_double(b.x0) + "," + format_double(b.y0) + "," + format_double(b.x1) + "," +
                 format_double(b.y1);
        }
        c.set("grid.obstacles", obs.empty() ? "none" : obs);
        c.set("grid.step_penalty", format_double(grid.step_penalty));
        c.set("grid.collision_penalty", format_double(grid.collision_penalty));
        c.set("grid.goal_reward", format_double(grid.goal_reward));
        c.set("grid.normalize_displacement", grid.normalize_displacement ? "true" : "false");
        c.set("grid.step_limit", std::to_string(grid.step_limit));
        break;
      }
      case EnvKind::slotmachine:
        c.set("slot.reels", std::to_string(slot.reels));
        c.set("slot.values", std::to_string(slot.values));
        c.set("slot.step_limit", std::to_string(slot.step_limit));
        c.set("slot.pair_reward", format_double(slot.pair_reward));
        c.set("slot.jackpot_reward", format_double(slot.jackpot_reward));
        break;
      case EnvKind::recommender:
        c.set("rec.log", rec.log);
        if (rec.log.empty()) {
          c.set("rec.items", std::to_string(rec.synthetic.items));
          c.set("rec.users", std::to_string(rec.synthetic.users));
          c.set("rec.events_per_user", std::to_string(rec.synthetic.events_per_user));
          c.set("rec.clusters", std::to_string(rec.synthetic.clusters));
          c.set("rec.data_seed", std::to_string(rec.synthetic.seed));
          c.set("rec.stay_probability", format_double(rec.synthetic.stay_probability));
          c.set("rec.successor_probability", format_double(rec.synthetic.successor_probability));
        }
        c.set("rec.history", std::to_string(rec.history));
        c.set("rec.boost", format_double(rec.boost));
        c.set("rec.smoothing", format_double(rec.smoothing));
        c.set("rec.step_limit", std::to_string(rec.step_limit));
        break;
    }
    return c;
  }
};

// ---------------------------------------------------------------------------
// Environment construction

struct EnvironmentBundle {
  std::unique_ptr<Environment> env;
  std::optional<PurchaseLog> log;  // recommender built from a CSV log
};

inline EnvironmentBundle make_environment(const RunConfig& cfg) {
  EnvironmentBundle b;
  switch (cfg.env) {
    case EnvKind::gridworld:
      b.env = std::make_unique<Gridworld>(cfg.grid);
      break;
    case EnvKind::slotmachine:
      b.env = std::make_unique<Slotmachine>(cfg.slot);
      break;
    case EnvKind::recommender: {
      std::vector<PurchaseEvent> events;
      std::size_t items = cfg.rec.synthetic.items;
      if (!cfg.rec.log.empty()) {
        b.log = read_purchase_csv(cfg.rec.log);
        events = b.log->events;
        items = b.log->item_ids.size();
      } else {
        events = generate_synthetic_log(cfg.rec.synthetic);
      }
      auto built = build_recommender_model(events, cfg.rec.history, items, cfg.rec.boost, cfg.rec.smoothing);
      auto model = std::make_shared<const RecommenderModel>(std::move(built.model));
      b.env = std::make_unique<RecommenderEnv>(model, RecommenderEnvConfig{cfg.rec.step_limit});
      break;
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsRow {
  std::size_t epoch = 0;
  std::size_t episodes = 0;   // completed episodes so far
  std::size_t env_steps = 0;  // environment steps so far
  double mean_return_10 = std::nan("");
  double loss_T = std::nan("");  // embedding losses of this epoch's updates
  double loss_f = std::nan("");
  PGStats pg;
  double seconds = 0.0;
};

inline const char* metrics_header() {
  return "epoch,episodes,env_steps,mean_return_10,loss_T,loss_f,policy_loss,value_loss,entropy,approx_kl,"
         "clip_frac,seconds";
}

inline std::string format_metrics_row(const MetricsRow& r) {
  std::string s = std::to_string(r.epoch) + "," + std::to_string(r.episodes) + "," + std::to_string(r.env_steps);
  for (double v : {r.mean_return_10, r.loss_T, r.loss_f, r.pg.policy_loss, r.pg.value_loss, r.pg.entropy,
                   r.pg.approx_kl, r.pg.clip_fraction, r.seconds}) {
    s += "," + format_double(v);
  }
  return s;
}

/// Mean of the last `window` epochs' mean_return_10 (NaN entries skipped).
inline double final_return(const std::vector<MetricsRow>& rows, std::size_t window = 10) {
  double sum = 0.0;
  std::size_t n = 0;
  const std::size_t begin = rows.size() > window ? rows.size() - window : 0;
  for (std::size_t i = begin; i < rows.size(); ++i) {
    if (std::isnan(rows[i].mean_return_10)) continue;
    sum += rows[i].mean_return_10;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

/// Area under the return curve, normalized by the epoch count.
inline double auc_return(const std::vector<MetricsRow>& rows) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (std::isnan(r.mean_return_10)) continue;
    sum += r.mean_return_10;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

/// Mean undiscounted return of the uniform-random policy.
inline double random_policy_return(const Environment& env, std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw ConfigError("random_policy_return: need at least one episode");
  Rng rng(derive_seed(seed, 0x7A0));
  const auto& spec = env.spec();
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    State s = env.reset(rng());
    for (std::size_t t = 0; t < spec.step_limit; ++t) {
      auto r = env.step(s, static_cast<int>(rng.below(spec.action_count)), rng);
      total += r.reward;
      if (r.done) break;
      s = std::move(r.next_state);
    }
  }
  return total / static_cast<double>(episodes);
}

// ---------------------------------------------------------------------------
// Transfer

struct TransferredParts {
  bool phi = false, g = false, transition = false, decoder = false;
  bool actor = false, critic = false;
};

namespace detail {

inline void require_same_shape(const Mlp& have, const Mlp& from, const std::string& name) {
  if (!have.same_shape(from)) {
    throw ConfigError("transfer: component '" + name + "' has incompatible dimensions (source " +
                      std::to_string(from.input_dim()) + "->" + std::to_string(from.output_dim()) + ", target " +
                      std::to_string(have.input_dim()) + "->" + std::to_string(have.output_dim()) + ")");
  }
}

}  // namespace detail

/// Copies the selected components of a jsae checkpoint into `model` (and
/// `ac` when given). "states" takes phi, T, the actor and the critic;
/// "actions" takes g and the decoder; "both" takes every network. All shapes
/// are checked before anything is copied.
inline TransferredParts transfer_init(EmbeddingModel& model, ActorCritic<GaussianPolicy>* ac, const Checkpoint& old,
                                      TransferWhat what) {
  if (what == TransferWhat::none) return {};
  auto it = old.meta.find("agent");
  if (it == old.meta.end() || it->second != "jsae") throw ConfigError("transfer: source checkpoint is not a jsae run");
  TransferredParts parts;
  parts.phi = what == TransferWhat::states || what == TransferWhat::both;
  parts.g = parts.decoder = what == TransferWhat::actions || what == TransferWhat::both;
  // Everything that lives only in the shared embedding spaces travels with
  // phi: T, the internal policy and the critic. With T frozen, a fresh g has
  // to place the new actions where the old policy already points.
  parts.transition = parts.phi;
  parts.critic = ac && parts.phi;
  parts.actor = ac && parts.phi;

  if (parts.phi) detail::require_same_shape(model.phi, old.net("phi"), "phi");
  if (parts.g) detail::require_same_shape(model.g, old.net("g"), "g");
  if (parts.decoder) detail::require_same_shape(model.decoder, old.net("decoder"), "decoder");
  if (parts.transition) detail::require_same_shape(model.transition, old.net("transition"), "transition");
  if (parts.critic) detail::require_same_shape(ac->critic, old.net("critic"), "critic");
  if (parts.actor) {
    detail::require_same_shape(ac->policy.actor, old.net("actor"), "actor");
    auto ls = old.vectors.find("log_std");
    if (ls == old.vectors.end() || ls->second.size() != ac->policy.log_std.size()) {
      throw ConfigError("transfer: component 'log_std' has incompatible dimensions");
    }
  }

  if (parts.phi) model.phi = old.net("phi");
  if (parts.g) model.g = old.net("g");
  if (parts.decoder) model.decoder = old.net("decoder");
  if (parts.transition) model.transition = old.net("transition");
  if (parts.critic) ac->critic = old.net("critic");
  if (parts.actor) {
    ac->policy.actor = old.net("actor");
    ac->policy.log_std = old.vectors.at("log_std");
  }
  return parts;
}

inline EmbeddingConfig embedding_config(const RunConfig& cfg) {
  return {cfg.m, cfg.d, cfg.embed_hidden, cfg.decoder_hidden, cfg.lr_embed};
}

/// Fresh model for `cfg`'s environment with the selected components taken
/// from `old`.
inline EmbeddingModel transfer_init(const RunConfig& cfg, const Checkpoint& old, TransferWhat what) {
  const auto bundle = make_environment(cfg);
  Rng rng(derive_seed(cfg.seed, 1));
  auto model = make_embedding_model(bundle.env->spec(), embedding_config(cfg), rng);
  transfer_init(model, nullptr, old, what);
  return model;
}

// ---------------------------------------------------------------------------
// Runs

struct TrainingResult {
  std::vector<MetricsRow> metrics;
  Checkpoint checkpoint;
  std::optional<AssumptionReport> assumptions;
  std::optional<EmbeddingModel> pretrained;  // jsae: model right after pre-training
  std::optional<EmbeddingModel> model;       // jsae: final model
  std::vector<EmbeddingLosses> pretrain_losses;
  TransferredParts transferred;
  std::vector<double> episode_returns;
  std::vector<std::size_t> episode_lengths;
  std::size_t env_steps = 0;
  std::size_t open_episode_steps = 0;  // steps of the episode still running at the end
  std::size_t policy_updates = 0;
};

namespace detail {

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path) {
    if (path.empty()) return;
    out_.open(path);
    if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
    out_ << metrics_header() << '\n';
    out_.flush();
  }
  void write(const MetricsRow& row) {
    if (!out_.is_open()) return;
    out_ << format_metrics_row(row) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

struct EpisodeTracker {
  std::deque<double> recent;
  double current_return = 0.0;
  std::size_t current_length = 0;

  void finish(TrainingResult& result) {
    result.episode_returns.push_back(current_return);
    result.episode_lengths.push_back(current_length);
    recent.push_back(current_return);
    if (recent.size() > 10) recent.pop_front();
    current_return = 0.0;
    current_length = 0;
  }

  double mean_recent() const {
    if (recent.empty()) return std::nan("");
    double s = 0.0;
    for (double r : recent) s += r;
    return s / static_cast<double>(recent.size());
  }
};

inline PolicySample<std::vector<double>> sample_from(const GaussianPolicy& p, std::span<const double> x, Rng& rng) {
  return sample_action_embedding(p, x, rng);
}
inline PolicySample<int> sample_from(const CategoricalPolicy& p, std::span<const double> x, Rng& rng) {
  return sample_categorical(p, x, rng);
}

// Hooks for the agent-specific pieces of the loop.
//   encode(state) -> policy input
//   decode(action) -> environment action
//   observe(transition) after every step
//   after_update(row) after every policy update (continued embedding updates)
template <class Policy, class Encode, class Decode, class Observe, class AfterUpdate>
void policy_loop(const Environment& env, const RunConfig& cfg, ActorCritic<Policy>& ac, Encode&& encode,
                 Decode&& decode, Observe&& observe, AfterUpdate&& after_update, MetricsWriter& writer,
                 TrainingResult& result) {
  using Action = typename Policy::Action;
  const auto& spec = env.spec();
  ActorCriticOptimizers<Policy> opt(ac, cfg.lr_actor, cfg.lr_critic);
  Rng rollout_rng(derive_seed(cfg.seed, 4));
  Rng update_rng(derive_seed(cfg.seed, 5));
  const auto start = std::chrono::steady_clock::now();

  EpisodeTracker tracker;
  State state = env.reset(rollout_rng());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RolloutBatch<Action> batch;
    for (std::size_t t = 0; t < cfg.steps_per_epoch; ++t) {
      auto input = encode(state);
      const double value = critic_value(ac.critic, input);
      auto sample = sample_from(ac.policy, input, rollout_rng);
      const int a = decode(sample.action);
      auto step = env.step(state, a, rollout_rng);
      ++result.env_steps;
      tracker.current_return += step.reward;
      ++tracker.current_length;
      observe(Transition{state, a, step.reward, step.next_state, step.done});
      batch.add(std::move(input), std::move(sample.action), sample.logp, step.reward, value, step.done);
      if (step.done) {
        tracker.finish(result);
        state = env.reset(rollout_rng());
      } else if (tracker.current_length >= spec.step_limit) {
        // Truncated by the time limit: bootstrap from the value of the cut-off state.
        batch.end_segment(critic_value(ac.critic, encode(step.next_state)));
        tracker.finish(result);
        state = env.reset(rollout_rng());
      } else {
        state = std::move(step.next_state);
      }
    }
    if (!batch.boundary.back()) batch.end_segment(critic_value(ac.critic, encode(state)));
    batch.compute_advantages(cfg.pg.gamma, cfg.pg.lambda);

    MetricsRow row;
    row.epoch = epoch;
    row.pg = cfg.algo == Algo::ppo ? ppo_update(ac, batch, cfg.pg, opt, update_rng)
                                   : vpg_update(ac, batch, cfg.pg, opt);
    ++result.policy_updates;
    after_update(row);
    row.episodes = result.episode_returns.size();
    row.env_steps = result.env_steps;
    row.mean_return_10 = tracker.mean_recent();
    if (cfg.record_time) {
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    writer.write(row);
    result.metrics.push_back(row);
  }
  result.open_episode_steps = tracker.current_length;
}

inline void store_policy(Checkpoint& ckpt, const ActorCritic<GaussianPolicy>& ac) {
  ckpt.nets["actor"] = ac.policy.actor;
  ckpt.nets["critic"] = ac.critic;
  ckpt.vectors["log_std"] = ac.policy.log_std;
}

inline void store_policy(Checkpoint& ckpt, const ActorCritic<CategoricalPolicy>& ac) {
  ckpt.nets["actor"] = ac.policy.actor;
  ckpt.nets["critic"] = ac.critic;
}

inline void store_model(Checkpoint& ckpt, const EmbeddingModel& model) {
  ckpt.nets["phi"] = model.phi;
  ckpt.nets["g"] = model.g;
  ckpt.nets["transition"] = model.transition;
  ckpt.nets["decoder"] = model.decoder;
}

inline Checkpoint base_checkpoint(const RunConfig& cfg, const Environment& env) {
  Checkpoint c;
  c.meta["agent"] = to_string(cfg.agent);
  c.meta["env"] = env.name();
  c.meta["seed"] = std::to_string(cfg.seed);
  c.meta["m"] = std::to_string(cfg.m);
  c.meta["d"] = std::to_string(cfg.d);
  c.meta["observation_dim"] = std::to_string(env.spec().observation_dim);
  c.meta["action_count"] = std::to_string(env.spec().action_count);
  return c;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

struct RunOutputs {
  std::filesystem::path dir;

  explicit RunOutputs(const RunConfig& cfg) : dir(cfg.output_dir) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    cfg.to_config().save(dir / "config.cfg");
  }
  bool enabled() const { return !dir.empty(); }
  std::filesystem::path metrics() const { return enabled() ? dir / "metrics.csv" : std::filesystem::path{}; }
};

template <class Policy>
ActorCritic<Policy> make_actor_critic(Policy policy, std::size_t input_dim, const RunConfig& cfg, Rng& rng) {
  ActorCritic<Policy> ac{std::move(policy), make_critic(input_dim, cfg.hidden, rng)};
  return ac;
}

inline TrainingResult run_jsae(const RunConfig& cfg, const EnvironmentBundle& bundle) {
  const Environment& env = *bundle.env;
  RunOutputs out(cfg);
  if (out.enabled() && bundle.log) write_items_tsv(*bundle.log, (out.dir / "items.tsv").string());
  TrainingResult result;

  Rng model_rng(derive_seed(cfg.seed, 1));
  Rng policy_rng(derive_seed(cfg.seed, 2));
  auto model = make_embedding_model(env.spec(), embedding_config(cfg), model_rng);
  auto ac = make_actor_critic(make_gaussian_policy(cfg.m, cfg.d, cfg.hidden, cfg.std_init, policy_rng), cfg.m, cfg,
                              policy_rng);

  EmbeddingOptimizers eopt(model, cfg.lr_embed);
  if (!cfg.transfer_from.empty()) {
    const auto old = load_checkpoint(cfg.transfer_from);
    result.transferred = transfer_init(model, &ac, old, cfg.transfer_what);
    if (cfg.transfer_freeze) {
      eopt.train_phi = !result.transferred.phi;
      eopt.train_g = !result.transferred.g;
      eopt.train_transition = !result.transferred.transition;
      eopt.train_decoder = !result.transferred.decoder;
    }
  }

  ReplayBuffer buffer(cfg.buffer_capacity);
  if (cfg.pretrain_samples > 0) {
    PretrainConfig pc{cfg.pretrain_samples, cfg.pretrain_epochs, cfg.embed_batch, cfg.buffer_capacity,
                      derive_seed(cfg.seed, 3)};
    auto pre = pretrain(model, env, pc, eopt);
    buffer = std::move(pre.buffer);
    result.pretrain_losses = std::move(pre.epoch_losses);
  }
  result.pretrained = model;

  const auto report =
      validate_assumptions(model, env, cfg.assumption_budget, cfg.assumption_tolerance, derive_seed(cfg.seed, 8));
  result.assumptions = report;
  if (out.enabled()) write_text(out.dir / "assumptions.txt", report.to_text());
  if (!report.pass()) {
    throw AssumptionViolation("embedding assumption check failed: " + std::to_string(report.action_collisions) +
                              " action and " + std::to_string(report.state_collisions) +
                              " state collisions at tolerance " + format_double(report.tolerance));
  }

  auto table = build_action_table(model);
  const bool continued = cfg.continued_updates_enabled();
  Rng embed_rng(derive_seed(cfg.seed, 6));
  MetricsWriter writer(out.metrics());

  auto checkpoint = [&] {
    result.checkpoint = base_checkpoint(cfg, env);
    store_model(result.checkpoint, model);
    store_policy(result.checkpoint, ac);
    if (out.enabled()) save_checkpoint(result.checkpoint, out.dir / "checkpoint.txt");
  };

  policy_loop(
      env, cfg, ac, [&](const State& s) { return embed_state(model, env.observe(s)); },
      [&](const std::vector<double>& e) { return decode_action(table, e); },
      [&](const Transition& t) {
        if (continued) buffer.push(t);
      },
      [&](MetricsRow& row) {
        if (!continued || buffer.empty()) return;
        double lt = 0.0, lf = 0.0;
        for (std::size_t k = 0; k < cfg.embed_updates; ++k) {
          const auto batch = buffer.sample(cfg.embed_batch, embed_rng);
          const auto l = embedding_train_step(model, env, batch, eopt, &table);
          lt += l.transition;
          lf += l.reconstruction;
        }
        if (cfg.embed_updates > 0) {
          row.loss_T = lt / static_cast<double>(cfg.embed_updates);
          row.loss_f = lf / static_cast<double>(cfg.embed_updates);
        }
      },
      writer, result);

  result.model = model;
  checkpoint();
  return result;
}

inline TrainingResult run_no_embed(const RunConfig& cfg, const EnvironmentBundle& bundle) {
  const Environment& env = *bundle.env;
  RunOutputs out(cfg);
  if (out.enabled() && bundle.log) write_items_tsv(*bundle.log, (out.dir / "items.tsv").string());
  TrainingResult result;
  Rng policy_rng(derive_seed(cfg.seed, 2));
  const auto& spec = env.spec();
  auto ac = make_actor_critic(make_categorical_policy(spec.observation_dim, spec.action_count, cfg.hidden, policy_rng),
                              spec.observation_dim, cfg, policy_rng);
  MetricsWriter writer(out.metrics());
  policy_loop(
      env, cfg, ac, [&](const State& s) { return env.observe(s); }, [](int a) { return a; },
      [](const Transition&) {}, [](MetricsRow&) {}, writer, result);
  result.checkpoint = base_checkpoint(cfg, env);
  store_policy(result.checkpoint, ac);
  if (out.enabled()) save_checkpoint(result.checkpoint, out.dir / "checkpoint.txt");
  return result;
}

inline TrainingResult run_autoencoder(const RunConfig& cfg, const EnvironmentBundle& bundle) {
  const Environment& env = *bundle.env;
  const auto& spec = env.spec();
  RunOutputs out(cfg);
  if (out.enabled() && bundle.log) write_items_tsv(*bundle.log, (out.dir / "items.tsv").string());
  TrainingResult result;

  // Same random transitions the jsae agent would pre-train on; every distinct
  // observation and every action is reconstructed.
  Rng data_rng(derive_seed(derive_seed(cfg.seed, 3), 0x9E7));
  const auto data = collect_random_transitions(env, cfg.pretrain_samples, data_rng);
  std::set<std::vector<double>> distinct;
  for (const auto& t : data) distinct.insert(env.observe(t.state));
  const std::vector<std::vector<double>> states(distinct.begin(), distinct.end());
  std::vector<std::vector<double>> actions;
  for (std::size_t a = 0; a < spec.action_count; ++a) actions.push_back(one_hot(a, spec.action_count));

  Rng ae_rng(derive_seed(cfg.seed, 7));
  auto state_ae = make_autoencoder(spec.observation_dim, cfg.m, ae_rng);
  auto action_ae = make_autoencoder(spec.action_count, cfg.d, ae_rng);
  const double state_loss = train_autoencoder(state_ae, states, cfg.ae_epochs, cfg.ae_batch, cfg.ae_lr, ae_rng);
  const double action_loss = train_autoencoder(action_ae, actions, cfg.ae_epochs, cfg.ae_batch, cfg.ae_lr, ae_rng);
  result.pretrain_losses.push_back({state_loss, action_loss});

  ActionEmbeddingTable table;
  table.dim = cfg.d;
  for (const auto& a : actions) {
    const auto e = encode(action_ae, a);
    table.values.insert(table.values.end(), e.begin(), e.end());
  }
  {
    const auto sampled = sample_states(env, cfg.assumption_budget, derive_seed(cfg.seed, 8));
    std::vector<std::vector<double>> inputs, embeddings;
    for (const auto& s : sampled) {
      inputs.push_back(env.observe(s));
      embeddings.push_back(encode(state_ae, inputs.back()));
    }
    result.assumptions = validate_embeddings(embeddings, inputs, table, cfg.assumption_tolerance);
    if (out.enabled()) write_text(out.dir / "assumptions.txt", result.assumptions->to_text());
  }

  Rng policy_rng(derive_seed(cfg.seed, 2));
  auto ac = make_actor_critic(make_gaussian_policy(cfg.m, cfg.d, cfg.hidden, cfg.std_init, policy_rng), cfg.m, cfg,
                              policy_rng);
  MetricsWriter writer(out.metrics());
  policy_loop(
      env, cfg, ac, [&](const State& s) { return encode(state_ae, env.observe(s)); },
      [&](const std::vector<double>& e) { return decode_action(table, e); }, [](const Transition&) {},
      [](MetricsRow&) {}, writer, result);

  result.checkpoint = base_checkpoint(cfg, env);
  result.checkpoint.nets["state_encoder"] = state_ae.encoder;
  result.checkpoint.nets["state_decoder"] = state_ae.decoder;
  result.checkpoint.nets["action_encoder"] = action_ae.encoder;
  result.checkpoint.nets["action_decoder"] = action_ae.decoder;
  store_policy(result.checkpoint, ac);
  if (out.enabled()) save_checkpoint(result.checkpoint, out.dir / "checkpoint.txt");
  return result;
}

}  // namespace detail

/// Pre-training, assumption check, then `epochs` rounds of rollout and
/// policy update (plus embedding updates when continued updates are on).
inline TrainingResult run_training(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.agent != AgentKind::jsae) throw ConfigError("run_training needs agent = jsae; use run_baseline");
  const auto bundle = make_environment(cfg);
  return detail::run_jsae(cfg, bundle);
}

/// The no-embedding and auto-encoder agents.
inline TrainingResult run_baseline(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.agent == AgentKind::jsae) throw ConfigError("run_baseline needs agent = no-embed or autoencoder");
  const auto bundle = make_environment(cfg);
  return cfg.agent == AgentKind::no_embed ? detail::run_no_embed(cfg, bundle) : detail::run_autoencoder(cfg, bundle);
}

inline TrainingResult run_any(const RunConfig& cfg) {
  return cfg.agent == AgentKind::jsae ? run_training(cfg) : run_baseline(cfg);
}

}  // namespace jsae
