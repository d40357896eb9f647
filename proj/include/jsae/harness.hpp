#pragma once

// Gridsearch over `search.<key> = v1;v2;...` config entries, multi-seed
// execution and cross-seed aggregation of metrics files.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "jsae/config.hpp"
#include "jsae/trainer.hpp"

namespace jsae {

struct SearchDimension {
  std::string key;
  std::vector<std::string> values;
};

class SearchSpace {
 public:
  SearchSpace() = default;
  explicit SearchSpace(std::vector<SearchDimension> dims) : dims_(std::move(dims)) {
    for (const auto& d : dims_) {
      if (d.values.empty()) throw ConfigError("search space: no values for '" + d.key + "'");
    }
  }

  static SearchSpace from_config(const Config& c) {
    std::vector<SearchDimension> dims;
    for (const auto& [key, value] : c.values()) {
      if (key.rfind("search.", 0) != 0) continue;
      SearchDimension d{key.substr(7), {}};
      if (d.key.empty()) throw ConfigError("search space: empty key in '" + key + "'");
      for (auto& v : split(value, ';')) {
        if (v.empty()) throw ConfigError("search space: empty value in '" + key + "'");
        d.values.push_back(v);
      }
      dims.push_back(std::move(d));
    }
    return SearchSpace(std::move(dims));
  }

  const std::vector<SearchDimension>& dimensions() const { return dims_; }

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& d : dims_) n *= d.values.size();
    return n;
  }

  // Point `index` of the product; the last dimension varies fastest.
  std::vector<std::pair<std::string, std::string>> at(std::size_t index) const {
    if (index >= size()) throw UsageError("search space index out of range");
    std::vector<std::pair<std::string, std::string>> out(dims_.size());
    for (std::size_t k = dims_.size(); k-- > 0;) {
      const auto& d = dims_[k];
      out[k] = {d.key, d.values[index % d.values.size()]};
      index /= d.values.size();
    }
    return out;
  }

 private:
  std::vector<SearchDimension> dims_;
};

enum class Selection { final_return, auc };

inline Selection selection_from_string(const std::string& s) {
  if (s == "final") return Selection::final_return;
  if (s == "auc") return Selection::auc;
  throw UsageError("selection must be final or auc, got '" + s + "'");
}

struct SeedRun {
  std::size_t config_id = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double final_return = std::nan("");
  double auc = std::nan("");
};

struct ConfigSummary {
  std::size_t config_id = 0;
  std::vector<std::pair<std::string, std::string>> assignment;
  std::size_t succeeded = 0;
  double final_mean = std::nan(""), final_std = std::nan("");
  double auc_mean = std::nan(""), auc_std = std::nan("");
};

struct AggregateResult {
  std::vector<SeedRun> runs;  // config-major, then seed order
  std::vector<ConfigSummary> configs;
  std::size_t best = 0;
  Config best_config;
};

/// Mean and population standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

struct GridsearchOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  Selection selection = Selection::final_return;
  std::filesystem::path output_dir;  // empty: no files
  std::size_t jobs = 1;
};

inline std::string gridsearch_table_header(const SearchSpace& space) {
  std::string h = "config_id,seed,status,final_return,auc";
  for (const auto& d : space.dimensions()) h += "," + d.key;
  h += ",error";
  return h;
}

namespace detail {

inline std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace detail

/// Runs every point of `space` over every seed, ranks points by the mean of
/// the selection metric over their successful seeds and returns the table.
/// Failed runs stay in the table with their error. With an output directory,
/// writes table.csv, summary.csv and best.cfg there and gives each run its own
/// config_<id>/seed_<seed> directory.
inline AggregateResult gridsearch(const SearchSpace& space, const Config& base, const GridsearchOptions& opts) {
  if (opts.seeds.empty()) throw ConfigError("gridsearch: empty seed list");
  const std::size_t points = space.size();
  AggregateResult result;
  result.runs.resize(points * opts.seeds.size());
  for (std::size_t p = 0; p < points; ++p) {
    for (std::size_t s = 0; s < opts.seeds.size(); ++s) {
      result.runs[p * opts.seeds.size() + s].config_id = p;
      result.runs[p * opts.seeds.size() + s].seed = opts.seeds[s];
    }
  }
  auto run_config = [&](std::size_t p, std::uint64_t seed) {
    Config c = base;
    for (auto it = c.values().begin(); it != c.values().end();) {
      const auto key = (it++)->first;
      if (RunConfig::passthrough_key(key)) c.erase(key);
    }
    for (const auto& [k, v] : space.at(p)) c.set(k, v);
    c.set("seed", std::to_string(seed));
    c.set("output_dir", opts.output_dir.empty() ? std::string()
                                                : (opts.output_dir / ("config_" + std::to_string(p)) /
                                                   ("seed_" + std::to_string(seed)))
                                                      .string());
    return c;
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < result.runs.size(); i = next++) {
      auto& run = result.runs[i];
      try {
        const auto cfg = RunConfig::from_config(run_config(run.config_id, run.seed));
        const auto r = run_any(cfg);
        run.final_return = final_return(r.metrics);
        run.auc = auc_return(r.metrics);
        run.ok = true;
      } catch (const std::exception& e) {
        run.ok = false;
        run.error = e.what();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, result.runs.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t p = 0; p < points; ++p) {
    ConfigSummary s;
    s.config_id = p;
    s.assignment = space.at(p);
    std::vector<double> finals, aucs;
    for (std::size_t k = 0; k < opts.seeds.size(); ++k) {
      const auto& run = result.runs[p * opts.seeds.size() + k];
      if (!run.ok) continue;
      ++s.succeeded;
      if (!std::isnan(run.final_return)) finals.push_back(run.final_return);
      if (!std::isnan(run.auc)) aucs.push_back(run.auc);
    }
    std::tie(s.final_mean, s.final_std) = mean_std(finals);
    std::tie(s.auc_mean, s.auc_std) = mean_std(aucs);
    result.configs.push_back(std::move(s));
  }
  auto score = [&](const ConfigSummary& s) {
    const double v = opts.selection == Selection::auc ? s.auc_mean : s.final_mean;
    return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
  };
  for (std::size_t p = 1; p < points; ++p) {
    if (score(result.configs[p]) > score(result.configs[result.best])) result.best = p;
  }
  result.best_config = run_config(result.best, opts.seeds.front());
  result.best_config.erase("seed");
  result.best_config.erase("output_dir");

  if (!opts.output_dir.empty()) {
    std::filesystem::create_directories(opts.output_dir);
    std::ofstream table(opts.output_dir / "table.csv");
    if (!table) throw std::runtime_error("cannot write table.csv");
    table << gridsearch_table_header(space) << '\n';
    for (const auto& run : result.runs) {
      table << run.config_id << ',' << run.seed << ',' << (run.ok ? "ok" : "failed") << ','
            << format_double(run.final_return) << ',' << format_double(run.auc);
      for (const auto& kv : space.at(run.config_id)) table << ',' << detail::csv_field(kv.second);
      table << ',' << detail::csv_field(run.error) << '\n';
    }
    std::ofstream summary(opts.output_dir / "summary.csv");
    if (!summary) throw std::runtime_error("cannot write summary.csv");
    summary << "config_id";
    for (const auto& d : space.dimensions()) summary << ',' << d.key;
    summary << ",succeeded,final_mean,final_std,auc_mean,auc_std,best\n";
    for (const auto& s : result.configs) {
      summary << s.config_id;
      for (const auto& kv : s.assignment) summary << ',' << detail::csv_field(kv.second);
      summary << ',' << s.succeeded << ',' << format_double(s.final_mean) << ',' << format_double(s.final_std)
              << ',' << format_double(s.auc_mean) << ',' << format_double(s.auc_std) << ','
              << (s.config_id == result.best ? 1 : 0) << '\n';
    }
    result.best_config.save(opts.output_dir / "best.cfg");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Learning-curve aggregation

struct CurvePoint {
  std::size_t epoch = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

struct Curve {
  std::vector<std::size_t> epochs;
  std::vector<double> values;
};

/// Reads the `epoch` column and `column` from a metrics CSV.
inline Curve read_curve(const std::filesystem::path& path, const std::string& column = "mean_return_10") {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metrics file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("'" + path.string() + "' is empty");
  const auto header = split(line, ',');
  std::size_t epoch_col = header.size(), value_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "epoch") epoch_col = i;
    if (header[i] == column) value_col = i;
  }
  if (epoch_col == header.size() || value_col == header.size()) {
    throw ConfigError("'" + path.string() + "' lacks an 'epoch' or '" + column + "' column");
  }
  Curve c;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != header.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": wrong field count");
    }
    try {
      c.epochs.push_back(static_cast<std::size_t>(std::stoull(f[epoch_col])));
      c.values.push_back(f[value_col] == "nan" ? std::nan("") : std::stod(f[value_col]));
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  return c;
}

/// Per-epoch mean and population std across curves. Epoch axes must match;
/// NaN entries are left out of that epoch's statistics.
inline std::vector<CurvePoint> aggregate(const std::vector<Curve>& curves, const std::vector<std::string>& names = {}) {
  if (curves.empty()) throw ConfigError("aggregate: no input files");
  std::vector<std::string> bad;
  for (std::size_t i = 1; i < curves.size(); ++i) {
    if (curves[i].epochs != curves[0].epochs) bad.push_back(i < names.size() ? names[i] : "#" + std::to_string(i));
  }
  if (!bad.empty()) {
    std::string msg = "aggregate: epoch axes differ from '" + (names.empty() ? std::string("#0") : names[0]) + "' in:";
    for (const auto& b : bad) msg += " " + b;
    throw ConfigError(msg);
  }
  std::vector<CurvePoint> out;
  for (std::size_t t = 0; t < curves[0].epochs.size(); ++t) {
    std::vector<double> v;
    for (const auto& c : curves) {
      if (!std::isnan(c.values[t])) v.push_back(c.values[t]);
    }
    CurvePoint p;
    p.epoch = curves[0].epochs[t];
    p.n = v.size();
    if (!v.empty()) std::tie(p.mean, p.std) = mean_std(v);
    else p.mean = p.std = std::nan("");
    out.push_back(p);
  }
  return out;
}

inline std::vector<CurvePoint> aggregate_files(const std::vector<std::filesystem::path>& files,
                                               const std::string& column = "mean_return_10") {
  std::vector<Curve> curves;
  std::vector<std::string> names;
  for (const auto& f : files) {
    curves.push_back(read_curve(f, column));
    names.push_back(f.string());
  }
  return aggregate(curves, names);
}

inline void write_curve(const std::vector<CurvePoint>& points, std::ostream& out) {
  out << "epoch,mean,std,n\n";
  for (const auto& p : points) {
    out << p.epoch << ',' << format_double(p.mean) << ',' << format_double(p.std) << ',' << p.n << '\n';
  }
}

}  // namespace jsae
