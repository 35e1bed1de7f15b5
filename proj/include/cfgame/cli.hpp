// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfgame/harness.hpp"
#include "cfgame/io.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace cfgame::cli {

enum ExitCode : int { ok = 0, failure = 1, not_converged = 2 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string format = "csv";
  std::optional<std::size_t> threads;
  bool allow_nonconverged = false;
};

namespace detail {

inline harness::ExperimentConfig load(const Options& o) {
  auto cfg = io::load_experiment(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.layout.rng_seed = *o.seed;
  }
  if (o.out) cfg.output_dir = *o.out;
  if (o.threads) cfg.threads = *o.threads;
  cfg.validate();
  return cfg;
}

inline void report_written(const std::vector<std::filesystem::path>& files, std::ostream& log) {
  for (const auto& f : files) log << "wrote " << f.string() << '\n';
}

inline int converged_exit(bool all_converged, const Options& o, std::ostream& err) {
  if (all_converged) return ok;
  if (o.allow_nonconverged) {
    err << "warning: at least one game run did not converge\n";
    return ok;
  }
  err << "error: at least one game run did not converge (use --allow-nonconverged to accept)\n";
  return not_converged;
}

inline int cmd_convergence(const Options& o, std::ostream& log, std::ostream& err) {
  const auto cfg = load(o);
  const auto res = harness::run_convergence(cfg);
  const auto fmt = io::parse_format(o.format);
  auto files = io::emit_report(
      {io::convergence_table(res.runs), io::game_trace_table(res.runs), io::certificate_table(res.runs)}, fmt,
      cfg.output_dir);
  if (res.setup) {
    const auto dir = std::filesystem::path(cfg.output_dir);
    io::write_text(dir / "layout.json", io::layout_json(res.setup->layout, res.setup->large_scale).dump(2) + "\n");
    io::write_text(dir / "assignment.json", io::assignment_json(res.setup->assignment).dump(2) + "\n");
    files.push_back(dir / "layout.json");
    files.push_back(dir / "assignment.json");
  }
  report_written(files, log);
  for (const auto& r : res.runs)
    log << "alpha=" << io::format_real(r.alpha) << " iterations=" << r.state.iteration
        << " converged=" << (r.state.converged ? "yes" : "no")
        << " final_power_mW=" << io::format_real(1e3 * r.state.total_power())
        << " nash=" << (r.certificate.is_epsilon_nash ? "yes" : "no") << '\n';
  return converged_exit(res.all_converged, o, err);
}

inline int cmd_metrics_vs_k(const Options& o, std::ostream& log, std::ostream& err) {
  const auto cfg = load(o);
  const auto results = harness::metrics_vs_k(cfg);
  const auto files = io::emit_report(
      {io::metrics_table(results), io::best_table(results), io::ue_table(results)}, io::parse_format(o.format),
      cfg.output_dir);
  report_written(files, log);
  bool conv = true;
  for (const auto& r : results) {
    conv = conv && r.all_converged;
    log << "K=" << r.num_ues << " greedy_min_se=" << io::format_real(r.greedy.mean_min_se)
        << " game_min_se=" << io::format_real(r.best_game.mean_min_se)
        << " (alpha=" << io::format_real(r.best_alpha.min_se) << ")\n";
  }
  return converged_exit(conv, o, err);
}

inline int cmd_tradeoff(const Options& o, std::ostream& log, std::ostream& err) {
  const auto cfg = load(o);
  harness::ExperimentResult full;
  const auto rows = harness::sweep_alpha(cfg, &full);
  const auto files = io::emit_report({io::tradeoff_table(rows)}, io::parse_format(o.format), cfg.output_dir);
  report_written(files, log);
  for (const auto& r : rows)
    log << "alpha=" << io::format_real(r.alpha) << " total_se=" << io::format_real(r.mean_total_se)
        << " total_ee=" << io::format_real(r.mean_total_ee) << '\n';
  return converged_exit(full.all_converged, o, err);
}

}  // namespace detail

// Returns the process exit code; never calls exit().
inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Uplink power-allocation game simulator"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out", o.out, "override the output directory");
    sub->add_option("--format", o.format, "report format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--threads", o.threads, "worker threads (0 = all cores)");
    sub->add_flag("--allow-nonconverged", o.allow_nonconverged, "exit 0 even if a game run did not converge");
  };
  auto* conv = app.add_subcommand("convergence", "game dynamics trace on one drop or a fixed instance");
  auto* mvk = app.add_subcommand("metrics-vs-k", "SE/EE metrics against the number of UEs");
  auto* trade = app.add_subcommand("tradeoff", "EE-SE trade-off over the alpha grid");
  for (auto* s : {conv, mvk, trade}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, log, err);
  }

  try {
    if (conv->parsed()) return detail::cmd_convergence(o, log, err);
    if (mvk->parsed()) return detail::cmd_metrics_vs_k(o, log, err);
    return detail::cmd_tradeoff(o, log, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return failure;
  }
}

}  // namespace cfgame::cli
