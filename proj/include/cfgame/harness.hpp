// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfgame/association.hpp"
#include "cfgame/channel.hpp"
#include "cfgame/common.hpp"
#include "cfgame/game.hpp"
#include "cfgame/propagation.hpp"
#include "cfgame/receiver.hpp"

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cfgame::harness {

// An explicit game instance that bypasses layout generation (cluster gains
// given directly). Only the game is run for such instances.
struct FixedInstance {
  std::vector<double> cluster_gains;
  std::vector<double> initial_powers;  // optional; empty = use the game's rule
};

struct ExperimentConfig {
  association::Scenario scenario = association::Scenario::cell_free;
  propagation::LayoutConfig layout{};
  channel::FrameConfig frame{};
  game::GameConfig game{};
  double bandwidth = 2e7;  // Hz
  std::vector<double> alpha_grid{0.0, 0.3, 0.6, 1.0, 2.0};
  std::size_t num_drops = 20;
  receiver::Combiner combiner = receiver::Combiner::lp_mmse;
  std::size_t ensemble_size = 10000;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  std::vector<std::size_t> ue_counts;  // metrics-vs-K sweep
  std::optional<FixedInstance> fixed_instance;
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const {
    layout.validate();
    frame.validate();
    game.validate();
    require(bandwidth > 0.0, "experiment: bandwidth must be positive");
    require(!alpha_grid.empty(), "experiment: alpha_grid must not be empty");
    for (double a : alpha_grid)
      require(std::isfinite(a) && a >= 0.0, "experiment: alpha values must be finite and non-negative");
    require(num_drops >= 1, "experiment: num_drops must be at least 1");
    require(ensemble_size >= 1, "experiment: ensemble_size must be at least 1");
    if (fixed_instance) {
      require(fixed_instance->cluster_gains.size() >= 2, "experiment: fixed instance needs at least two UEs");
      for (double g : fixed_instance->cluster_gains) require(g > 0.0, "experiment: fixed instance gains must be positive");
      if (!fixed_instance->initial_powers.empty())
        require(fixed_instance->initial_powers.size() == fixed_instance->cluster_gains.size(),
                "experiment: fixed instance power count mismatch");
    }
  }

  std::size_t thread_count() const { return threads == 0 ? receiver::detail::default_threads() : threads; }
};

enum class Strategy { game_pas, greedy_pas };

inline std::string to_string(Strategy s) { return s == Strategy::game_pas ? "game_pas" : "greedy_pas"; }

// rho_k = P_max for every UE.
inline std::vector<double> greedy_pas(std::size_t num_ues, double p_max) {
  require(num_ues >= 1, "greedy: need at least one UE");
  require(p_max > 0.0, "greedy: P_max must be positive");
  return std::vector<double>(num_ues, p_max);
}

struct UeMetrics {
  std::size_t ue = 0;
  double rho = 0.0;  // W
  double sinr = 0.0;
  double se = 0.0;   // bit/s/Hz
  double ee = 0.0;   // bit/J
  double signal_power = 0.0;
  double interference_power = 0.0;
  double noise_power = 0.0;
};

struct MetricsReport {
  Strategy strategy = Strategy::greedy_pas;
  double alpha = 0.0;
  double total_se = 0.0;
  double min_se = 0.0;
  double total_ee = 0.0;
  double total_power_mw = 0.0;
  std::size_t ensemble_size = 0;
  std::vector<UeMetrics> ues;
};

//   total_se = sum_k SE_k,  min_se = min_k SE_k,  total_ee = sum_k B SE_k / rho_k
inline MetricsReport compute_metrics(const receiver::SinrReport& rep, const std::vector<double>& rho,
                                     double bandwidth, Strategy strategy, double alpha) {
  require(rep.ues.size() == rho.size(), "metrics: power count mismatch");
  require(!rho.empty(), "metrics: no UEs");
  MetricsReport m;
  m.strategy = strategy;
  m.alpha = alpha;
  m.ensemble_size = rep.ensemble_size;
  m.min_se = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rho.size(); ++k) {
    require(rho[k] > 0.0, "metrics: powers must be positive");
    UeMetrics u;
    u.ue = k;
    u.rho = rho[k];
    u.sinr = rep.ues[k].sinr;
    u.se = rep.ues[k].se;
    u.ee = bandwidth * u.se / rho[k];
    u.signal_power = rep.ues[k].signal_power;
    u.interference_power = rep.ues[k].interference_power;
    u.noise_power = rep.ues[k].noise_power;
    m.total_se += u.se;
    m.min_se = std::min(m.min_se, u.se);
    m.total_ee += u.ee;
    m.total_power_mw += 1e3 * rho[k];
    m.ues.push_back(u);
  }
  return m;
}

struct GameRun {
  double alpha = 0.0;
  game::GameState state;
  game::NashCertificate certificate;
};

struct DropResult {
  std::size_t drop = 0;
  std::uint64_t seed = 0;
  std::size_t num_ues = 0;
  MetricsReport greedy;
  std::vector<GameRun> games;         // one per alpha
  std::vector<MetricsReport> game_metrics;  // one per alpha
};

struct AggregateRow {
  Strategy strategy = Strategy::greedy_pas;
  double alpha = 0.0;
  double mean_total_se = 0.0;
  double mean_min_se = 0.0;
  double mean_total_ee = 0.0;
  double mean_total_power_mw = 0.0;
};

struct BestAlpha {
  double total_se = 0.0;
  double min_se = 0.0;
  double total_ee = 0.0;
};

struct ExperimentResult {
  association::Scenario scenario = association::Scenario::cell_free;
  std::size_t num_ues = 0;
  std::vector<DropResult> drops;
  AggregateRow greedy;
  std::vector<AggregateRow> game;  // ordered as alpha_grid
  BestAlpha best_alpha;
  AggregateRow best_game;          // per-metric best over the grid
  bool all_converged = true;
};

inline std::string drop_context(const ExperimentConfig& cfg, std::size_t drop) {
  std::ostringstream os;
  os << "seed " << cfg.seed << ", drop " << drop;
  return os.str();
}

struct DropSetup {
  propagation::Layout layout;
  propagation::LargeScaleState large_scale;
  association::ClusterAssignment assignment;
  std::vector<double> cluster_gains;
  std::uint64_t seed = 0;
};

inline DropSetup setup_drop(const ExperimentConfig& cfg, std::size_t drop) {
  DropSetup d;
  d.seed = mix_seed(cfg.seed, {0xd409ULL, drop});
  Rng layout_rng = make_rng(d.seed, {0x1a70ULL});
  d.layout = propagation::generate_layout(cfg.layout, layout_rng);
  d.large_scale = propagation::large_scale_state(d.layout, cfg.layout, d.seed);
  d.assignment = association::assign_pilots_and_clusters(d.large_scale.beta, cfg.frame.tau_p, cfg.scenario,
                                                         cfg.layout.antennas_per_ap);
  d.cluster_gains = association::cluster_gains(d.large_scale.beta, d.assignment);
  return d;
}

inline GameRun play(const std::vector<double>& gains, const game::GameConfig& base, double alpha) {
  game::GameConfig gc = base;
  gc.alpha = alpha;
  GameRun run;
  run.alpha = alpha;
  run.state = game::run_game(std::span<const double>(gains), gc);
  run.certificate = game::certify_epsilon_nash(run.state, gc);
  return run;
}

inline std::vector<receiver::SinrReport> evaluate_profiles(const ExperimentConfig& cfg, const DropSetup& d,
                                                           const std::vector<std::vector<double>>& profiles) {
  const std::uint64_t ens_seed = mix_seed(d.seed, {0xe75eULL});
  if (cfg.frame.pilot_power_mode == channel::PilotPowerMode::fixed_pmax) {
    const std::vector<double> pilots(d.large_scale.num_ues, cfg.game.p_max);
    channel::ChannelEnsemble ens(d.large_scale, d.assignment, cfg.frame, pilots, cfg.ensemble_size, ens_seed);
    return receiver::monte_carlo_sinr(ens, cfg.combiner, profiles, cfg.thread_count());
  }
  std::vector<receiver::SinrReport> out;
  for (const auto& rho : profiles) {
    channel::ChannelEnsemble ens(d.large_scale, d.assignment, cfg.frame, rho, cfg.ensemble_size, ens_seed);
    out.push_back(receiver::monte_carlo_sinr(ens, cfg.combiner, rho, cfg.thread_count()));
  }
  return out;
}

inline DropResult run_drop(const ExperimentConfig& cfg, std::size_t drop) {
  try {
    const DropSetup d = setup_drop(cfg, drop);
    DropResult r;
    r.drop = drop;
    r.seed = d.seed;
    r.num_ues = d.large_scale.num_ues;
    std::vector<std::vector<double>> profiles{greedy_pas(r.num_ues, cfg.game.p_max)};
    for (double a : cfg.alpha_grid) {
      r.games.push_back(play(d.cluster_gains, cfg.game, a));
      profiles.push_back(r.games.back().state.rho);
    }
    const auto reports = evaluate_profiles(cfg, d, profiles);
    r.greedy = compute_metrics(reports[0], profiles[0], cfg.bandwidth, Strategy::greedy_pas, 0.0);
    for (std::size_t i = 0; i < cfg.alpha_grid.size(); ++i)
      r.game_metrics.push_back(
          compute_metrics(reports[i + 1], profiles[i + 1], cfg.bandwidth, Strategy::game_pas, cfg.alpha_grid[i]));
    return r;
  } catch (const std::exception& e) {
    throw std::runtime_error("drop failed (" + drop_context(cfg, drop) + "): " + e.what());
  }
}

namespace detail {

inline AggregateRow mean_of(const std::vector<const MetricsReport*>& reports, Strategy s, double alpha) {
  AggregateRow row;
  row.strategy = s;
  row.alpha = alpha;
  for (const auto* m : reports) {
    row.mean_total_se += m->total_se;
    row.mean_min_se += m->min_se;
    row.mean_total_ee += m->total_ee;
    row.mean_total_power_mw += m->total_power_mw;
  }
  const double n = static_cast<double>(reports.size());
  row.mean_total_se /= n;
  row.mean_min_se /= n;
  row.mean_total_ee /= n;
  row.mean_total_power_mw /= n;
  return row;
}

template <typename Key>
std::size_t argmax_rows(const std::vector<AggregateRow>& rows, Key key) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (key(rows[i]) > key(rows[best])) best = i;
  return best;
}

}  // namespace detail

// For each drop: layout -> large-scale gains -> clusters -> Game-PAS per alpha
// and Greedy-PAS -> Monte-Carlo SINR on a common channel ensemble -> metrics.
// Aggregates are plain means over drops; the best alpha is picked per metric.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult res;
  res.scenario = cfg.scenario;
  res.num_ues = cfg.layout.num_ues;
  for (std::size_t d = 0; d < cfg.num_drops; ++d) {
    res.drops.push_back(run_drop(cfg, d));
    for (const auto& g : res.drops.back().games) res.all_converged = res.all_converged && g.state.converged;
  }
  std::vector<const MetricsReport*> greedy;
  for (const auto& d : res.drops) greedy.push_back(&d.greedy);
  res.greedy = detail::mean_of(greedy, Strategy::greedy_pas, 0.0);
  for (std::size_t i = 0; i < cfg.alpha_grid.size(); ++i) {
    std::vector<const MetricsReport*> col;
    for (const auto& d : res.drops) col.push_back(&d.game_metrics[i]);
    res.game.push_back(detail::mean_of(col, Strategy::game_pas, cfg.alpha_grid[i]));
  }
  const auto se = detail::argmax_rows(res.game, [](const AggregateRow& r) { return r.mean_total_se; });
  const auto mn = detail::argmax_rows(res.game, [](const AggregateRow& r) { return r.mean_min_se; });
  const auto ee = detail::argmax_rows(res.game, [](const AggregateRow& r) { return r.mean_total_ee; });
  res.best_alpha = {res.game[se].alpha, res.game[mn].alpha, res.game[ee].alpha};
  res.best_game.strategy = Strategy::game_pas;
  res.best_game.mean_total_se = res.game[se].mean_total_se;
  res.best_game.mean_min_se = res.game[mn].mean_min_se;
  res.best_game.mean_total_ee = res.game[ee].mean_total_ee;
  res.best_game.mean_total_power_mw = res.game[ee].mean_total_power_mw;
  return res;
}

struct TradeoffRow {
  double alpha = 0.0;
  double mean_total_se = 0.0;
  double mean_total_ee = 0.0;
  double mean_min_se = 0.0;
  double mean_total_power_mw = 0.0;
};

// One row per alpha, sorted by alpha.
inline std::vector<TradeoffRow> sweep_alpha(const ExperimentConfig& cfg, ExperimentResult* full = nullptr) {
  require(cfg.alpha_grid.size() >= 3, "sweep: alpha_grid needs at least three points");
  ExperimentConfig sorted = cfg;
  std::sort(sorted.alpha_grid.begin(), sorted.alpha_grid.end());
  const ExperimentResult res = run_experiment(sorted);
  std::vector<TradeoffRow> rows;
  for (const auto& g : res.game)
    rows.push_back({g.alpha, g.mean_total_se, g.mean_total_ee, g.mean_min_se, g.mean_total_power_mw});
  if (full != nullptr) *full = res;
  return rows;
}

// One experiment per UE count in cfg.ue_counts (or the layout's K if empty).
inline std::vector<ExperimentResult> metrics_vs_k(const ExperimentConfig& cfg) {
  std::vector<std::size_t> counts = cfg.ue_counts;
  if (counts.empty()) counts.push_back(cfg.layout.num_ues);
  std::vector<ExperimentResult> out;
  for (auto k : counts) {
    ExperimentConfig c = cfg;
    c.layout.num_ues = k;
    out.push_back(run_experiment(c));
  }
  return out;
}

// Relative gain of best-alpha Game-PAS over Greedy-PAS in mean minimum SE.
inline double min_se_gain(const ExperimentResult& r) {
  require(r.greedy.mean_min_se > 0.0, "min-SE gain: greedy baseline has zero minimum SE");
  return (r.best_game.mean_min_se - r.greedy.mean_min_se) / r.greedy.mean_min_se;
}

struct ConvergenceResult {
  std::vector<GameRun> runs;  // one per alpha
  std::optional<DropSetup> setup;  // absent for fixed instances
  bool all_converged = true;
};

// Game dynamics only (no SINR evaluation), on drop 0 or on the fixed instance.
inline ConvergenceResult run_convergence(const ExperimentConfig& cfg) {
  cfg.validate();
  ConvergenceResult out;
  std::vector<double> gains;
  game::GameConfig gc = cfg.game;
  if (cfg.fixed_instance) {
    gains = cfg.fixed_instance->cluster_gains;
    if (!cfg.fixed_instance->initial_powers.empty()) {
      gc.initial_power_rule = game::InitialPowerRule::explicit_powers;
      gc.initial_powers = cfg.fixed_instance->initial_powers;
    }
  } else {
    out.setup = setup_drop(cfg, 0);
    gains = out.setup->cluster_gains;
  }
  for (double a : cfg.alpha_grid) {
    out.runs.push_back(play(gains, gc, a));
    out.all_converged = out.all_converged && out.runs.back().state.converged;
  }
  return out;
}

}  // namespace cfgame::harness
