#pragma once

// Command-line front end. run_cli returns the process exit code:
// 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "jsae/harness.hpp"
#include "jsae/theory.hpp"
#include "jsae/trainer.hpp"

namespace jsae {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

namespace detail {

struct RunFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  long long seed = -1;
  std::string output;
};

inline void add_run_flags(CLI::App* cmd, RunFlags& f, bool config_required = true) {
  auto* opt = cmd->add_option("-c,--config", f.config_path, "Config file (key = value lines)");
  if (config_required) opt->required();
  cmd->add_option("-s,--set", f.overrides, "Override a config entry, key=value (repeatable)");
  cmd->add_option("--seed", f.seed, "Random seed (overrides the config)")->check(CLI::NonNegativeNumber);
  cmd->add_option("-o,--output", f.output, "Output directory (overrides output_dir)");
}

inline Config load_with_overrides(const RunFlags& f) {
  Config c = f.config_path.empty() ? Config{} : Config::load(f.config_path);
  for (const auto& o : f.overrides) c.set_assignment(o);
  if (f.seed >= 0) c.set("seed", std::to_string(f.seed));
  if (!f.output.empty()) c.set("output_dir", f.output);
  return c;
}

inline std::string default_output_dir(const RunConfig& cfg) {
  return "runs/" + to_string(cfg.env) + "-" + to_string(cfg.agent) + "-seed" + std::to_string(cfg.seed);
}

// Console numbers; files keep the round-trip format.
inline std::string short_double(double v) {
  std::ostringstream os;
  os << std::setprecision(5) << v;
  return os.str();
}

inline void report_run(const TrainingResult& r, const RunConfig& cfg, std::ostream& out) {
  out << "run finished: " << r.metrics.size() << " epochs, " << r.env_steps << " env steps, "
      << r.episode_returns.size() << " episodes\n";
  if (!r.metrics.empty()) {
    out << "final return (last 10 epochs): " << short_double(final_return(r.metrics)) << '\n'
        << "mean return over training:     " << short_double(auc_return(r.metrics)) << '\n';
  }
  if (r.assumptions) out << "assumption check: " << (r.assumptions->pass() ? "pass" : "FAIL") << '\n';
  out << "outputs in " << cfg.output_dir << '\n';
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split(text, ',')) {
    const auto dash = part.find('-');
    try {
      if (dash != std::string::npos && dash > 0) {
        const auto lo = std::stoull(part.substr(0, dash));
        const auto hi = std::stoull(part.substr(dash + 1));
        if (hi < lo) throw std::invalid_argument("range");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
      } else {
        seeds.push_back(std::stoull(part));
      }
    } catch (const std::exception&) {
      throw UsageError("bad seed list entry '" + part + "'");
    }
  }
  if (seeds.empty()) throw UsageError("empty seed list");
  return seeds;
}

}  // namespace detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Jointly trained state-action embeddings for reinforcement learning", "jsae"};
  app.require_subcommand(1);

  detail::RunFlags train_flags;
  auto* train = app.add_subcommand("train", "Pre-train embeddings and train the internal policy");
  detail::add_run_flags(train, train_flags);

  detail::RunFlags base_flags;
  std::string base_agent;
  auto* baseline = app.add_subcommand("baseline", "Train a no-embedding or auto-encoder baseline");
  detail::add_run_flags(baseline, base_flags);
  baseline->add_option("--agent", base_agent, "no-embed or autoencoder (default: the config's agent)")
      ->check(CLI::IsMember({"no-embed", "autoencoder"}));

  detail::RunFlags gs_flags;
  std::string gs_seeds = "1-10", gs_selection = "final";
  std::size_t gs_jobs = 1;
  auto* gs = app.add_subcommand("gridsearch", "Run every search.* combination over several seeds");
  detail::add_run_flags(gs, gs_flags);
  gs->add_option("--seeds", gs_seeds, "Seed list, e.g. 1,2,3 or 1-10")->capture_default_str();
  gs->add_option("--selection", gs_selection, "Ranking metric: final or auc")
      ->check(CLI::IsMember({"final", "auc"}))
      ->capture_default_str();
  gs->add_option("-j,--jobs", gs_jobs, "Concurrent runs")->check(CLI::PositiveNumber)->capture_default_str();

  detail::RunFlags tr_flags;
  std::string tr_from, tr_what = "states";
  bool tr_no_freeze = false;
  auto* transfer = app.add_subcommand("transfer", "Train with components initialized from another run");
  detail::add_run_flags(transfer, tr_flags);
  transfer->add_option("--from", tr_from, "Source checkpoint")->required();
  transfer->add_option("--what", tr_what, "states, actions or both")
      ->check(CLI::IsMember({"states", "actions", "both"}))
      ->capture_default_str();
  transfer->add_flag("--no-freeze", tr_no_freeze, "Keep training the transferred components");

  detail::RunFlags ex_flags;
  std::string ex_checkpoint;
  std::size_t ex_budget = 100000;
  auto* exp = app.add_subcommand("export-embeddings", "Write state and action embedding TSVs");
  detail::add_run_flags(exp, ex_flags);
  exp->add_option("--checkpoint", ex_checkpoint, "Checkpoint of a jsae run")->required();
  exp->add_option("--budget", ex_budget, "Maximum number of states")->capture_default_str();

  std::size_t th_instances = 50;
  std::uint64_t th_seed = 1;
  double th_tol = 1e-9;
  auto* theory = app.add_subcommand("check-theory", "Numerically check the factored-policy results on random MDPs");
  theory->add_option("--instances", th_instances, "Number of random instances")->capture_default_str();
  theory->add_option("--seed", th_seed, "Seed")->capture_default_str();
  theory->add_option("--tolerance", th_tol, "Maximum allowed error")->capture_default_str();

  SyntheticLogConfig gd;
  std::string gd_output;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic purchase log CSV");
  gen->add_option("-o,--output", gd_output, "Output CSV path")->required();
  gen->add_option("--items", gd.items, "Item count")->capture_default_str();
  gen->add_option("--users", gd.users, "User count")->capture_default_str();
  gen->add_option("--events", gd.events_per_user, "Purchases per user")->capture_default_str();
  gen->add_option("--clusters", gd.clusters, "Preference clusters")->capture_default_str();
  gen->add_option("--stay", gd.stay_probability, "Probability of buying inside the user's cluster")
      ->capture_default_str();
  gen->add_option("--successor", gd.successor_probability, "Probability of buying the next cluster item")
      ->capture_default_str();
  gen->add_option("--seed", gd.seed, "Seed")->capture_default_str();

  std::vector<std::string> ag_files;
  std::string ag_output, ag_column = "mean_return_10";
  auto* agg = app.add_subcommand("aggregate", "Cross-seed mean/std learning curve from metrics files");
  agg->add_option("files", ag_files, "metrics.csv files")->required();
  agg->add_option("-o,--output", ag_output, "Output CSV (default: stdout)");
  agg->add_option("--column", ag_column, "Metrics column to aggregate")->capture_default_str();

  std::vector<const char*> argv;
  argv.push_back("jsae");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train || *baseline || *transfer) {
      auto& flags = *train ? train_flags : (*baseline ? base_flags : tr_flags);
      Config c = detail::load_with_overrides(flags);
      if (*train) {
        if (c.get("agent", "jsae") != "jsae") throw UsageError("train runs the jsae agent; use 'baseline'");
      }
      if (*baseline) {
        if (!base_agent.empty()) c.set("agent", base_agent);
        if (c.get("agent", "jsae") == "jsae") throw UsageError("baseline needs --agent no-embed or autoencoder");
      }
      if (*transfer) {
        if (!std::filesystem::exists(tr_from)) throw UsageError("checkpoint '" + tr_from + "' does not exist");
        c.set("agent", "jsae");
        c.set("transfer.from", tr_from);
        c.set("transfer.what", tr_what);
        if (tr_no_freeze) c.set("transfer.freeze", "false");
      }
      auto cfg = RunConfig::from_config(c);
      if (cfg.output_dir.empty()) cfg.output_dir = detail::default_output_dir(cfg);
      const auto result = run_any(cfg);
      detail::report_run(result, cfg, out);
      return kExitOk;
    }
    if (*gs) {
      Config c = detail::load_with_overrides(gs_flags);
      const auto space = SearchSpace::from_config(c);
      GridsearchOptions opts;
      opts.seeds = detail::parse_seeds(gs_seeds);
      opts.selection = selection_from_string(gs_selection);
      opts.jobs = gs_jobs;
      opts.output_dir = c.get("output_dir", "runs/gridsearch");
      RunConfig::from_config(c);  // validate the base config up front
      const auto result = gridsearch(space, c, opts);
      std::size_t failed = 0;
      for (const auto& r : result.runs) failed += r.ok ? 0 : 1;
      out << "gridsearch: " << space.size() << " configs x " << opts.seeds.size() << " seeds, " << failed
          << " failed runs\n";
      for (const auto& s : result.configs) {
        out << (s.config_id == result.best ? "* " : "  ") << "config " << s.config_id;
        for (const auto& [k, v] : s.assignment) out << ' ' << k << '=' << v;
        out << "  final " << detail::short_double(s.final_mean) << " +- " << detail::short_double(s.final_std)
            << "  auc " << detail::short_double(s.auc_mean) << " +- " << detail::short_double(s.auc_std) << '\n';
      }
      out << "table and best.cfg in " << opts.output_dir.string() << '\n';
      return failed == result.runs.size() ? kExitFailure : kExitOk;
    }
    if (*exp) {
      Config c = detail::load_with_overrides(ex_flags);
      const auto ckpt = load_checkpoint(ex_checkpoint);
      if (ckpt.meta.count("m")) c.set("m", ckpt.meta.at("m"));
      if (ckpt.meta.count("d")) c.set("d", ckpt.meta.at("d"));
      c.set("agent", "jsae");
      auto cfg = RunConfig::from_config(c);
      const auto dir = ex_flags.output.empty() ? std::filesystem::path(ex_checkpoint).parent_path() / "embeddings"
                                               : std::filesystem::path(ex_flags.output);
      const auto model = transfer_init(cfg, ckpt, TransferWhat::both);
      const auto bundle = make_environment(cfg);
      export_embeddings(model, *bundle.env, dir, ex_budget, cfg.seed);
      out << "wrote state_embeddings.tsv and action_embeddings.tsv to " << dir.string() << '\n';
      return kExitOk;
    }
    if (*theory) {
      const auto summary = theory::run_theory_checks(th_instances, th_seed, th_tol);
      char line[160];
      out << "instance  |S| |A|  K   policy-value error   optimality gap   result\n";
      for (std::size_t i = 0; i < summary.instances.size(); ++i) {
        const auto& r = summary.instances[i];
        const bool ok = r.lemma1 < th_tol && r.theorem1 < th_tol;
        std::snprintf(line, sizeof line, "%8zu  %3zu %3zu %2zu   %18.3e   %14.3e   %s\n", i, r.states, r.actions,
                      r.points, r.lemma1, r.theorem1, ok ? "pass" : "FAIL");
        out << line;
      }
      std::snprintf(line, sizeof line, "max policy-value error %.3e, max optimality gap %.3e (tolerance %.1e): %s\n",
                    summary.max_lemma1, summary.max_theorem1, th_tol, summary.pass() ? "PASS" : "FAIL");
      out << line;
      return summary.pass() ? kExitOk : kExitFailure;
    }
    if (*gen) {
      const auto log = generate_synthetic_log(gd);
      write_purchase_csv(log, gd_output);
      out << "wrote " << log.size() << " purchases to " << gd_output << '\n';
      return kExitOk;
    }
    if (*agg) {
      std::vector<std::filesystem::path> files(ag_files.begin(), ag_files.end());
      const auto points = aggregate_files(files, ag_column);
      if (ag_output.empty()) {
        write_curve(points, out);
      } else {
        std::filesystem::path p(ag_output);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        std::ofstream f(p);
        if (!f) throw std::runtime_error("cannot write '" + ag_output + "'");
        write_curve(points, f);
      }
      return kExitOk;
    }
  } catch (const std::invalid_argument& e) {  // ConfigError, UsageError
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args);
}

}  // namespace jsae
