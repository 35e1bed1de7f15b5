// SPDX-License-Identifier: Apache-2.0
#pragma once

// Config ingestion (JSON) and report emission (CSV / JSON).

#include "cfgame/association.hpp"
#include "cfgame/game.hpp"
#include "cfgame/harness.hpp"
#include "cfgame/propagation.hpp"
#include "cfgame/receiver.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace cfgame::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  require(j.is_object(), where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    require(ok.count(it.key()) == 1, where + ": unknown key '" + it.key() + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace detail

inline propagation::LayoutConfig parse_layout(const json& j) {
  detail::check_keys(j, "layout", {"area_side", "num_aps", "antennas_per_ap", "num_ues", "path_loss",
                                   "correlation", "angular_std_deg", "antenna_spacing"});
  propagation::LayoutConfig c;
  detail::read(j, "area_side", c.area_side);
  detail::read(j, "num_aps", c.num_aps);
  detail::read(j, "antennas_per_ap", c.antennas_per_ap);
  detail::read(j, "num_ues", c.num_ues);
  if (j.contains("path_loss")) {
    const auto& p = j.at("path_loss");
    detail::check_keys(p, "layout.path_loss", {"intercept_db", "slope_db", "shadow_sigma_db", "min_distance_m"});
    detail::read(p, "intercept_db", c.path_loss.intercept_db);
    detail::read(p, "slope_db", c.path_loss.slope_db);
    detail::read(p, "shadow_sigma_db", c.path_loss.shadow_sigma_db);
    detail::read(p, "min_distance_m", c.path_loss.min_distance_m);
  }
  if (j.contains("correlation")) c.correlation = propagation::parse_correlation_model(j.at("correlation").get<std::string>());
  if (j.contains("angular_std_deg")) c.angular_std_rad = j.at("angular_std_deg").get<double>() * std::numbers::pi / 180.0;
  detail::read(j, "antenna_spacing", c.antenna_spacing);
  return c;
}

// noise_power_w wins over the thermal-noise derivation
// sigma^2 = -174 dBm/Hz + 10 log10(B) + noise_figure_db.
inline channel::FrameConfig parse_frame(const json& j, double bandwidth) {
  detail::check_keys(j, "frame", {"tau_c", "tau_p", "tau_u", "tau_d", "noise_power_w", "noise_figure_db",
                                  "pilot_power_mode"});
  channel::FrameConfig f;
  detail::read(j, "tau_c", f.tau_c);
  detail::read(j, "tau_p", f.tau_p);
  detail::read(j, "tau_u", f.tau_u);
  detail::read(j, "tau_d", f.tau_d);
  double nf = 7.0;
  detail::read(j, "noise_figure_db", nf);
  f.noise_power = dbm_to_watt(-174.0 + 10.0 * std::log10(bandwidth) + nf);
  detail::read(j, "noise_power_w", f.noise_power);
  if (j.contains("pilot_power_mode"))
    f.pilot_power_mode = channel::parse_pilot_power_mode(j.at("pilot_power_mode").get<std::string>());
  return f;
}

inline game::GameConfig parse_game(const json& j, double p_max) {
  detail::check_keys(j, "game", {"alpha", "epsilon", "rho_min", "rho_max", "schedule", "max_iterations",
                                 "initial_power_rule", "initial_fraction", "initial_powers"});
  game::GameConfig g;
  g.p_max = p_max;
  g.rho_max = p_max;
  detail::read(j, "alpha", g.alpha);
  detail::read(j, "epsilon", g.epsilon);
  detail::read(j, "rho_min", g.rho_min);
  detail::read(j, "rho_max", g.rho_max);
  detail::read(j, "max_iterations", g.max_iterations);
  if (j.contains("schedule")) g.schedule = game::parse_schedule(j.at("schedule").get<std::string>());
  if (j.contains("initial_power_rule")) {
    const auto rule = j.at("initial_power_rule").get<std::string>();
    if (rule == "full_power") g.initial_power_rule = game::InitialPowerRule::full_power;
    else if (rule == "fraction") g.initial_power_rule = game::InitialPowerRule::fraction;
    else if (rule == "explicit") g.initial_power_rule = game::InitialPowerRule::explicit_powers;
    else throw ValidationError("game: unknown initial_power_rule '" + rule + "'");
  }
  detail::read(j, "initial_fraction", g.initial_fraction);
  detail::read(j, "initial_powers", g.initial_powers);
  return g;
}

inline harness::ExperimentConfig parse_experiment(const json& j) {
  detail::check_keys(j, "config", {"scenario", "layout", "frame", "game", "bandwidth_hz", "p_max_w", "alpha_grid",
                                   "num_drops", "combiner", "ensemble_size", "output_dir", "seed", "ue_counts",
                                   "fixed_instance", "threads"});
  harness::ExperimentConfig c;
  if (j.contains("scenario")) c.scenario = association::parse_scenario(j.at("scenario").get<std::string>());
  detail::read(j, "bandwidth_hz", c.bandwidth);
  double p_max = 0.1;
  detail::read(j, "p_max_w", p_max);
  if (j.contains("layout")) c.layout = parse_layout(j.at("layout"));
  c.frame = parse_frame(j.contains("frame") ? j.at("frame") : json::object(), c.bandwidth);
  c.game = parse_game(j.contains("game") ? j.at("game") : json::object(), p_max);
  detail::read(j, "alpha_grid", c.alpha_grid);
  detail::read(j, "num_drops", c.num_drops);
  if (j.contains("combiner")) c.combiner = receiver::parse_combiner(j.at("combiner").get<std::string>());
  detail::read(j, "ensemble_size", c.ensemble_size);
  detail::read(j, "output_dir", c.output_dir);
  detail::read(j, "seed", c.seed);
  detail::read(j, "ue_counts", c.ue_counts);
  detail::read(j, "threads", c.threads);
  if (j.contains("fixed_instance")) {
    const auto& f = j.at("fixed_instance");
    detail::check_keys(f, "fixed_instance", {"cluster_gains", "initial_powers_w"});
    harness::FixedInstance fi;
    detail::read(f, "cluster_gains", fi.cluster_gains);
    detail::read(f, "initial_powers_w", fi.initial_powers);
    c.fixed_instance = fi;
  }
  c.layout.rng_seed = c.seed;
  c.validate();
  return c;
}

inline harness::ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_experiment(j);
}

// ---------------------------------------------------------------------------
// Tables

// Floats are written with 12 significant digits everywhere.
inline std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

inline double round12(double x) {
  return std::strtod(format_real(x).c_str(), nullptr);
}

using Cell = std::variant<std::string, long long, double>;

struct Table {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    require(row.size() == columns.size(), "table '" + name + "': row width mismatch");
    rows.push_back(std::move(row));
  }
};

enum class Format { csv, json };

inline Format parse_format(std::string_view id) {
  if (id == "csv") return Format::csv;
  if (id == "json") return Format::json;
  throw ValidationError("unknown report format '" + std::string(id) + "'");
}

inline std::string render_csv(const Table& t) {
  std::ostringstream os;
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << ',';
      std::visit(
          [&](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, double>) os << format_real(v);
            else os << v;
          },
          row[i]);
    }
    os << '\n';
  }
  return os.str();
}

inline json table_to_json(const Table& t) {
  json arr = json::array();
  for (const auto& row : t.rows) {
    json obj = json::object();
    for (std::size_t i = 0; i < row.size(); ++i)
      std::visit(
          [&](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, double>) obj[t.columns[i]] = round12(v);
            else obj[t.columns[i]] = v;
          },
          row[i]);
    arr.push_back(std::move(obj));
  }
  return arr;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

// Writes one file per table. Nothing is created for an empty table set.
inline std::vector<std::filesystem::path> emit_report(const std::vector<Table>& tables, Format format,
                                                      const std::filesystem::path& dir) {
  require(!tables.empty(), "emit_report: no reports to write");
  for (const auto& t : tables) require(!t.rows.empty(), "emit_report: table '" + t.name + "' is empty");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw std::runtime_error("cannot create output directory '" + dir.string() + "'");
  std::vector<std::filesystem::path> written;
  for (const auto& t : tables) {
    const auto path = dir / (t.name + (format == Format::csv ? ".csv" : ".json"));
    write_text(path, format == Format::csv ? render_csv(t) : table_to_json(t).dump(2) + "\n");
    written.push_back(path);
  }
  return written;
}

// ---------------------------------------------------------------------------
// Views

// (alpha, iteration, total_power_mW, u, u_excess, accepted_updates, messages)
inline Table convergence_table(const std::vector<harness::GameRun>& runs) {
  Table t{"convergence_trace",
          {"alpha", "iteration", "total_power_mW", "u", "u_excess", "accepted_updates", "messages"},
          {}};
  for (const auto& r : runs)
    for (const auto& rec : r.state.trace)
      t.add({r.alpha, static_cast<long long>(rec.iteration), 1e3 * rec.total_power, rec.potential,
             rec.potential_excess, static_cast<long long>(rec.accepted_updates), static_cast<long long>(rec.messages)});
  return t;
}

// Per-UE trace rows: (alpha, iteration, ue_id, rho, xi, mu, u, total_power_mW, messages).
inline Table game_trace_table(const std::vector<harness::GameRun>& runs) {
  Table t{"game_trace", {"alpha", "iteration", "ue_id", "rho", "xi", "mu", "u", "total_power_mW", "messages"}, {}};
  for (const auto& r : runs)
    for (const auto& rec : r.state.trace)
      for (std::size_t k = 0; k < rec.rho.size(); ++k)
        t.add({r.alpha, static_cast<long long>(rec.iteration), static_cast<long long>(k), rec.rho[k], rec.xi[k],
               rec.mu[k], rec.potential, 1e3 * rec.total_power, static_cast<long long>(rec.messages)});
  return t;
}

inline Table certificate_table(const std::vector<harness::GameRun>& runs) {
  Table t{"certificates",
          {"alpha", "converged", "iterations", "oscillation_period", "is_epsilon_nash", "worst_gain", "worst_ue",
           "probe_count", "final_total_power_mW"},
          {}};
  for (const auto& r : runs)
    t.add({r.alpha, static_cast<long long>(r.state.converged), static_cast<long long>(r.state.iteration),
           static_cast<long long>(r.state.oscillation_period), static_cast<long long>(r.certificate.is_epsilon_nash),
           r.certificate.worst_gain, static_cast<long long>(r.certificate.worst_ue),
           static_cast<long long>(r.certificate.probe_count), 1e3 * r.state.total_power()});
  return t;
}

inline json certificate_json(const game::NashCertificate& c) {
  json j;
  j["is_epsilon_nash"] = c.is_epsilon_nash;
  j["worst_gain"] = round12(c.worst_gain);
  j["worst_ue"] = c.worst_ue;
  j["probe_count"] = c.probe_count;
  return j;
}

inline Table metrics_table(const std::vector<harness::ExperimentResult>& results) {
  Table t{"metrics_vs_k",
          {"scenario", "K", "strategy", "alpha", "mean_total_se", "mean_min_se", "mean_total_ee",
           "mean_total_power_mW"},
          {}};
  auto row = [&](const harness::ExperimentResult& r, const std::string& strategy, const harness::AggregateRow& a) {
    t.add({association::to_string(r.scenario), static_cast<long long>(r.num_ues), strategy, a.alpha, a.mean_total_se,
           a.mean_min_se, a.mean_total_ee, a.mean_total_power_mw});
  };
  for (const auto& r : results) {
    row(r, "greedy_pas", r.greedy);
    for (const auto& g : r.game) row(r, "game_pas", g);
  }
  return t;
}

// Best-alpha Game-PAS per metric against Greedy-PAS.
inline Table best_table(const std::vector<harness::ExperimentResult>& results) {
  Table t{"best_vs_greedy",
          {"scenario", "K", "metric", "greedy", "game_pas_best", "best_alpha", "relative_gain"},
          {}};
  for (const auto& r : results) {
    auto add = [&](const char* metric, double greedy, double best, double alpha) {
      t.add({association::to_string(r.scenario), static_cast<long long>(r.num_ues), std::string(metric), greedy, best,
             alpha, greedy > 0.0 ? (best - greedy) / greedy : 0.0});
    };
    add("total_se", r.greedy.mean_total_se, r.best_game.mean_total_se, r.best_alpha.total_se);
    add("min_se", r.greedy.mean_min_se, r.best_game.mean_min_se, r.best_alpha.min_se);
    add("total_ee", r.greedy.mean_total_ee, r.best_game.mean_total_ee, r.best_alpha.total_ee);
  }
  return t;
}

// SinrReport rows: (K, drop, strategy, alpha, ue_id, rho, sinr, se, ee, signal, interference, noise, ensemble_size).
inline Table ue_table(const std::vector<harness::ExperimentResult>& results) {
  Table t{"ue_metrics",
          {"K", "drop", "strategy", "alpha", "ue_id", "rho", "sinr", "se", "ee", "signal", "interference", "noise",
           "ensemble_size"},
          {}};
  auto emit = [&](const harness::ExperimentResult& r, std::size_t drop, const harness::MetricsReport& m) {
    for (const auto& u : m.ues)
      t.add({static_cast<long long>(r.num_ues), static_cast<long long>(drop), harness::to_string(m.strategy), m.alpha,
             static_cast<long long>(u.ue), u.rho, u.sinr, u.se, u.ee, u.signal_power, u.interference_power,
             u.noise_power, static_cast<long long>(m.ensemble_size)});
  };
  for (const auto& r : results)
    for (const auto& d : r.drops) {
      emit(r, d.drop, d.greedy);
      for (const auto& m : d.game_metrics) emit(r, d.drop, m);
    }
  return t;
}

inline Table tradeoff_table(const std::vector<harness::TradeoffRow>& rows) {
  Table t{"tradeoff", {"alpha", "mean_total_se", "mean_total_ee", "mean_min_se", "mean_total_power_mW"}, {}};
  for (const auto& r : rows) t.add({r.alpha, r.mean_total_se, r.mean_total_ee, r.mean_min_se, r.mean_total_power_mw});
  return t;
}

// ---------------------------------------------------------------------------
// Snapshots

inline json layout_json(const propagation::Layout& layout, const propagation::LargeScaleState& ls) {
  json j;
  j["area_side"] = layout.area_side;
  auto points = [](const std::vector<propagation::Point>& ps) {
    json arr = json::array();
    for (const auto& p : ps) arr.push_back(json::array({round12(p.x), round12(p.y)}));
    return arr;
  };
  j["ap_positions"] = points(layout.ap_positions);
  j["ue_positions"] = points(layout.ue_positions);
  json beta = json::array();
  for (Eigen::Index k = 0; k < ls.beta.rows(); ++k) {
    json row = json::array();
    for (Eigen::Index l = 0; l < ls.beta.cols(); ++l) row.push_back(round12(ls.beta(k, l)));
    beta.push_back(std::move(row));
  }
  j["beta"] = std::move(beta);
  return j;
}

inline json assignment_json(const association::ClusterAssignment& a) {
  json j;
  j["tau_p"] = a.tau_p;
  j["pilot_of"] = a.pilot_of;
  j["master_ap"] = a.master_ap;
  json sel = json::array();
  for (Eigen::Index k = 0; k < a.selection.rows(); ++k) {
    json row = json::array();
    for (Eigen::Index l = 0; l < a.selection.cols(); ++l) row.push_back(a.selection(k, l));
    sel.push_back(std::move(row));
  }
  j["selection"] = std::move(sel);
  return j;
}

inline json sinr_report_json(const receiver::SinrReport& rep) {
  json j;
  j["ensemble_size"] = rep.ensemble_size;
  j["clamped_count"] = rep.clamped_count;
  json ues = json::array();
  for (std::size_t k = 0; k < rep.ues.size(); ++k) {
    const auto& u = rep.ues[k];
    ues.push_back({{"ue_id", k},
                   {"sinr", round12(u.sinr)},
                   {"se", round12(u.se)},
                   {"signal", round12(u.signal_power)},
                   {"interference", round12(u.interference_power)},
                   {"noise", round12(u.noise_power)}});
  }
  j["ues"] = std::move(ues);
  return j;
}

}  // namespace cfgame::io
