#pragma once

// n-gram purchase model and the recommender MDP built on top of it, plus the
// purchase-log ingestion and synthetic-log generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "jsae/envs/environment.hpp"

namespace jsae {

struct PurchaseEvent {
  std::uint64_t user = 0;
  std::size_t item = 0;
};

/// Dense-indexed purchase log. `item_ids[k]` is the original id of item k.
struct PurchaseLog {
  std::vector<PurchaseEvent> events;  // grouped per user, time-ordered within a user
  std::vector<std::string> item_ids;
};

/// Next-item distributions conditioned on the last `history` items.
/// Histories are encoded mixed-radix: index = sum_k item_k * items^k, with
/// item_0 the oldest.
class RecommenderModel {
 public:
  RecommenderModel() = default;
  RecommenderModel(std::size_t items, std::size_t history, double boost)
      : items_(items), history_(history), boost_(boost) {
    if (items < 2) throw ConfigError("recommender: need at least two items");
    if (history < 1) throw ConfigError("recommender: history length must be >= 1");
    if (!(boost > 1.0)) throw ConfigError("recommender: boost factor must be > 1");
    double states = 1.0;
    for (std::size_t k = 0; k < history; ++k) states *= static_cast<double>(items);
    if (states > 1.8e19) throw ConfigError("recommender: state space does not fit in 64 bits");
    popularity_.assign(items, 1.0 / static_cast<double>(items));
  }

  std::size_t items() const { return items_; }
  std::size_t history() const { return history_; }
  double boost() const { return boost_; }

  std::uint64_t state_count() const {
    std::uint64_t n = 1;
    for (std::size_t k = 0; k < history_; ++k) n *= items_;
    return n;
  }

  std::uint64_t encode(std::span<const std::size_t> history) const {
    if (history.size() != history_) throw UsageError("recommender: wrong history length");
    std::uint64_t index = 0;
    for (std::size_t k = history_; k-- > 0;) {
      if (history[k] >= items_) throw UsageError("recommender: item id out of range");
      index = index * items_ + history[k];
    }
    return index;
  }

  std::vector<std::size_t> decode(std::uint64_t index) const {
    std::vector<std::size_t> h(history_);
    for (std::size_t k = 0; k < history_; ++k) {
      h[k] = static_cast<std::size_t>(index % items_);
      index /= items_;
    }
    return h;
  }

  // Probability row for a state; unseen states use global popularity.
  const std::vector<double>& row(std::uint64_t state) const {
    auto it = rows_.find(state);
    return it == rows_.end() ? popularity_ : it->second;
  }

  bool has_row(std::uint64_t state) const { return rows_.count(state) != 0; }
  std::size_t seen_states() const { return rows_.size(); }

  void set_row(std::uint64_t state, std::vector<double> probs) {
    check_row(probs);
    rows_[state] = std::move(probs);
  }

  void set_popularity(std::vector<double> probs) {
    check_row(probs);
    popularity_ = std::move(probs);
  }

  const std::vector<double>& popularity() const { return popularity_; }

  const std::unordered_map<std::uint64_t, std::vector<double>>& rows() const { return rows_; }

 private:
  void check_row(const std::vector<double>& probs) const {
    if (probs.size() != items_) throw ConfigError("recommender: probability row has wrong length");
    double total = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw ConfigError("recommender: negative or NaN probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("recommender: probability row does not sum to 1");
  }

  std::size_t items_ = 0;
  std::size_t history_ = 0;
  double boost_ = 2.0;
  std::unordered_map<std::uint64_t, std::vector<double>> rows_;
  std::vector<double> popularity_;
};

/// Scale p[item] by `boost` and renormalize. Closed form:
/// p'[item] = boost p / (1 + (boost - 1) p), others p / (1 + (boost - 1) p).
inline std::vector<double> boosted_row(std::span<const double> row, std::size_t item, double boost) {
  if (item >= row.size()) throw UsageError("boosted_row: item out of range");
  std::vector<double> out(row.begin(), row.end());
  out[item] *= boost;
  double total = 0.0;
  for (double p : out) total += p;
  for (double& p : out) p /= total;
  return out;
}

struct RecommenderBuild {
  RecommenderModel model;
  std::size_t rejected = 0;  // events dropped for an unknown item id
};

/// Fits the n-gram model: per-user sliding windows of n + 1 events count
/// (i_1..i_n -> j); each seen row is normalized after adding `smoothing` to
/// every count. Unseen states fall back to global item popularity (with the
/// same smoothing).
inline RecommenderBuild build_recommender_model(std::span<const PurchaseEvent> log, std::size_t n,
                                                std::size_t item_count, double boost, double smoothing) {
  if (log.empty()) throw ConfigError("recommender: empty purchase log");
  if (smoothing < 0.0) throw ConfigError("recommender: smoothing must be >= 0");
  RecommenderBuild result{RecommenderModel(item_count, n, boost), 0};
  auto& model = result.model;

  std::map<std::uint64_t, std::vector<double>> counts;  // ordered for deterministic insertion
  std::vector<double> item_counts(item_count, 0.0);
  std::vector<std::size_t> window;
  std::uint64_t current_user = 0;
  bool first = true;
  for (const auto& ev : log) {
    if (first || ev.user != current_user) {
      window.clear();
      current_user = ev.user;
      first = false;
    }
    if (ev.item >= item_count) {
      ++result.rejected;
      continue;
    }
    item_counts[ev.item] += 1.0;
    if (window.size() == n) {
      auto& row = counts[model.encode(window)];
      if (row.empty()) row.assign(item_count, 0.0);
      row[ev.item] += 1.0;
      window.erase(window.begin());
    }
    window.push_back(ev.item);
  }
  if (result.rejected == log.size()) throw ConfigError("recommender: every log row was rejected");

  auto normalize = [&](std::vector<double> c) {
    double total = 0.0;
    for (double& v : c) {
      v += smoothing;
      total += v;
    }
    if (total <= 0.0) {
      c.assign(item_count, 1.0 / static_cast<double>(item_count));
      return c;
    }
    for (double& v : c) v /= total;
    return c;
  };
  model.set_popularity(normalize(item_counts));
  for (auto& [state, row] : counts) model.set_row(state, normalize(std::move(row)));
  return result;
}

struct SyntheticLogConfig {
  std::size_t items = 50;
  std::size_t users = 500;
  std::size_t events_per_user = 40;
  std::size_t clusters = 5;
  std::uint64_t seed = 1;
  double stay_probability = 0.9;       // next purchase from the user's cluster
  double successor_probability = 0.5;  // within the cluster: item after the previous one
};

/// Synthetic stand-in for a real purchase log. Items are split into
/// contiguous preference clusters; each user mostly buys inside one cluster
/// and often buys the cluster successor of the previous item, which gives
/// the log n-gram structure worth learning.
inline std::vector<PurchaseEvent> generate_synthetic_log(const SyntheticLogConfig& c) {
  if (c.items < 1 || c.users < 1 || c.events_per_user < 1 || c.clusters < 1) {
    throw ConfigError("synthetic log: all counts must be >= 1");
  }
  if (c.clusters > c.items) throw ConfigError("synthetic log: more clusters than items");
  Rng rng(derive_seed(c.seed, 0x10C));
  auto cluster_begin = [&](std::size_t k) { return k * c.items / c.clusters; };
  std::vector<PurchaseEvent> log;
  log.reserve(c.users * c.events_per_user);
  for (std::size_t u = 0; u < c.users; ++u) {
    const std::size_t cluster = rng.below(c.clusters);
    const std::size_t lo = cluster_begin(cluster);
    const std::size_t size = cluster_begin(cluster + 1) - lo;
    std::size_t prev = lo + rng.below(size);
    log.push_back({u, prev});
    for (std::size_t e = 1; e < c.events_per_user; ++e) {
      std::size_t item;
      const double r = rng.uniform();
      if (r >= c.stay_probability) {
        item = rng.below(c.items);
      } else if (prev >= lo && prev < lo + size && rng.uniform() < c.successor_probability) {
        item = lo + (prev - lo + 1) % size;
      } else {
        item = lo + rng.below(size);
      }
      log.push_back({u, item});
      prev = item;
    }
  }
  return log;
}

/// Reads `user_id,item_id,timestamp` CSV (header required). Rows are grouped
/// per user (first-appearance order) and stably sorted by numeric timestamp;
/// item ids are remapped to dense indices in first-appearance order.
inline PurchaseLog read_purchase_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open purchase log '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("purchase log '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "user_id,item_id,timestamp") {
    throw ConfigError("purchase log header must be 'user_id,item_id,timestamp', got '" + line + "'");
  }
  struct Row {
    std::size_t user_order;
    double timestamp;
    std::size_t seq;
    std::size_t item;
  };
  std::unordered_map<std::string, std::size_t> users, items;
  PurchaseLog log;
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string user, item, ts;
    if (!std::getline(ss, user, ',') || !std::getline(ss, item, ',') || !std::getline(ss, ts)) {
      throw ConfigError("purchase log line " + std::to_string(line_no) + ": expected 3 fields");
    }
    double t;
    try {
      t = std::stod(ts);
    } catch (const std::exception&) {
      throw ConfigError("purchase log line " + std::to_string(line_no) + ": bad timestamp '" + ts + "'");
    }
    auto [uit, unew] = users.emplace(user, users.size());
    auto [iit, inew] = items.emplace(item, items.size());
    if (inew) log.item_ids.push_back(item);
    rows.push_back({uit->second, t, rows.size(), iit->second});
  }
  if (rows.empty()) throw ConfigError("purchase log '" + path + "' has no rows");
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.user_order != b.user_order) return a.user_order < b.user_order;
    return a.timestamp < b.timestamp;
  });
  log.events.reserve(rows.size());
  for (const auto& r : rows) log.events.push_back({r.user_order, r.item});
  return log;
}

inline void write_purchase_csv(std::span<const PurchaseEvent> events, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "user_id,item_id,timestamp\n";
  std::uint64_t prev_user = 0;
  std::size_t t = 0;
  bool first = true;
  for (const auto& ev : events) {
    if (first || ev.user != prev_user) t = 0;
    first = false;
    prev_user = ev.user;
    out << ev.user << ',' << ev.item << ',' << t++ << '\n';
  }
}

/// `index<TAB>item_id` for every dense item index.
inline void write_items_tsv(const PurchaseLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "index\titem_id\n";
  for (std::size_t k = 0; k < log.item_ids.size(); ++k) out << k << '\t' << log.item_ids[k] << '\n';
}

struct RecommenderEnvConfig {
  std::size_t step_limit = 20;
};

/// One recommendation per step (the action). The purchase is drawn from the
/// history's row with the recommended item boosted; reward 1 on a match.
class RecommenderEnv final : public Environment {
 public:
  RecommenderEnv(std::shared_ptr<const RecommenderModel> model, RecommenderEnvConfig config)
      : model_(std::move(model)), config_(config) {
    if (!model_) throw ConfigError("recommender: null model");
    if (config_.step_limit < 1) throw ConfigError("recommender: step limit must be >= 1");
    spec_.state_kind = StateKind::discrete;
    spec_.state_count = model_->state_count();
    spec_.state_dim = model_->history();
    spec_.observation_dim = model_->history() * model_->items();
    spec_.action_count = model_->items();
    spec_.step_limit = config_.step_limit;
    spec_.next_classes = model_->items();
  }

  std::string name() const override { return "recommender"; }
  const EnvSpec& spec() const override { return spec_; }
  const RecommenderModel& model() const { return *model_; }

  State reset(std::uint64_t seed) const override {
    Rng rng(derive_seed(seed, 0x4EC));
    State s(model_->history());
    for (auto& item : s) item = static_cast<double>(rng.below(model_->items()));
    return s;
  }

  StepResult step(const State& state, int action, Rng& rng) const override {
    check_action(action);
    const auto& row = model_->row(state_index(state));
    const auto probs = boosted_row(row, static_cast<std::size_t>(action), model_->boost());
    const std::size_t bought = sample_index(probs, rng);
    StepResult r;
    r.next_state.assign(state.begin() + 1, state.end());
    r.next_state.push_back(static_cast<double>(bought));
    r.reward = bought == static_cast<std::size_t>(action) ? 1.0 : 0.0;
    return r;
  }

  using Environment::observe;
  void observe(const State& state, std::vector<double>& out) const override {
    out.assign(spec_.observation_dim, 0.0);
    for (std::size_t k = 0; k < state.size(); ++k) {
      out[k * model_->items() + static_cast<std::size_t>(state[k])] = 1.0;
    }
  }

  std::uint64_t state_index(const State& state) const override {
    std::vector<std::size_t> h(state.size());
    for (std::size_t k = 0; k < state.size(); ++k) h[k] = static_cast<std::size_t>(state[k]);
    return model_->encode(h);
  }

  State state_at(std::uint64_t index) const override {
    if (index >= spec_.state_count) throw UsageError("recommender: state index out of range");
    const auto h = model_->decode(index);
    return State(h.begin(), h.end());
  }

  // The environment model predicts the newly purchased item.
  std::size_t next_class(const State& next) const override {
    return static_cast<std::size_t>(next.back());
  }

  std::vector<std::string> state_feature_names() const override {
    std::vector<std::string> names;
    for (std::size_t k = 0; k < model_->history(); ++k) names.push_back("item" + std::to_string(k));
    return names;
  }

 private:
  std::shared_ptr<const RecommenderModel> model_;
  RecommenderEnvConfig config_;
  EnvSpec spec_;
};

}  // namespace jsae
