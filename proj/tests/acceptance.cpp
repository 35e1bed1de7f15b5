// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one [PASS]/[FAIL] line per criterion, nonzero exit on any failure.
#include "cfgame/cli.hpp"
#include "cfgame/harness.hpp"
#include "cfgame/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

using namespace cfgame;
namespace fs = std::filesystem;
using ld = long double;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double rel_fro(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  const double d = b.norm();
  return d == 0.0 ? a.norm() : (a - b).norm() / d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cfgame_acceptance_" + name);
  fs::remove_all(dir);
  return dir;
}

harness::ExperimentConfig desk_config(std::size_t K, std::uint64_t seed) {
  harness::ExperimentConfig c;
  c.scenario = association::Scenario::cell_free;
  c.layout.num_aps = 25;
  c.layout.antennas_per_ap = 4;
  c.layout.num_ues = K;
  c.seed = seed;
  c.layout.rng_seed = seed;
  c.ensemble_size = 10000;
  c.num_drops = 20;
  c.alpha_grid = {0.0, 0.3, 0.6, 1.0, 2.0};
  return c;
}

struct Instance {
  std::vector<double> rho;
  std::vector<double> gains;
  double alpha = 0.0;
};

Instance random_instance(std::mt19937_64& rng, std::size_t K, double rho_min, double rho_max) {
  std::uniform_real_distribution<double> lg(-13.0, -8.0), lp(std::log10(rho_min), std::log10(rho_max)), a(0.0, 2.0);
  Instance in;
  for (std::size_t k = 0; k < K; ++k) {
    in.gains.push_back(std::pow(10.0, lg(rng)));
    in.rho.push_back(std::pow(10.0, lp(rng)));
  }
  in.alpha = a(rng);
  return in;
}

double golden_section(const Instance& in, std::size_t k, double lo, double hi) {
  std::vector<double> rho = in.rho;
  auto f = [&](ld x) {
    rho[k] = static_cast<double>(std::exp(x));
    return game::payoff_from_powers<ld>(rho, in.gains, in.alpha, k);
  };
  const ld g = (std::sqrt(5.0L) - 1.0L) / 2.0L;
  ld a = std::log(static_cast<ld>(lo)), b = std::log(static_cast<ld>(hi));
  ld c = b - g * (b - a), d = a + g * (b - a);
  ld fc = f(c), fd = f(d);
  for (int i = 0; i < 200 && b - a > 1e-14L; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return static_cast<double>(std::exp((a + b) / 2.0L));
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  std::size_t runs = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cfg = desk_config(10, seed);
    const auto d = harness::setup_drop(cfg, 0);
    game::GameConfig gc = cfg.game;
    gc.alpha = 0.0;
    const auto st = game::run_game(d.cluster_gains, gc);
    double mw = 0.0;
    for (double p : st.trace.front().rho) mw += 1e3 * p;
    if (mw != 1000.0) return {false, "seed " + std::to_string(seed) + ": initial power " + fmt("%.17g mW", mw)};
    if (!st.converged || st.iteration != 1 || !st.updates.empty() || st.trace.size() != 2 ||
        st.trace[1].accepted_updates != 0)
      return {false, "seed " + std::to_string(seed) + ": not immediate"};
    ++runs;
  }
  return {true, std::to_string(runs) + " layouts, 1000 mW, no accepted update in round 1"};
}

Outcome criterion2() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> kdist(2, 20);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto in = random_instance(rng, kdist(rng), 1e-6, 0.1);
    const std::size_t K = in.rho.size();
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, K - 1)(rng);
    std::vector<ld> before(K), after;
    for (std::size_t i = 0; i < K; ++i)
      before[i] = static_cast<ld>(in.rho[i]) * std::pow(static_cast<ld>(in.gains[i]), static_cast<ld>(in.alpha));
    after = before;
    const double new_rho = std::pow(10.0, std::uniform_real_distribution<double>(-6.0, -1.0)(rng));
    after[k] = static_cast<ld>(new_rho) * std::pow(static_cast<ld>(in.gains[k]), static_cast<ld>(in.alpha));
    const ld du = game::potential(after) - game::potential(before);
    const ld dmu = game::payoff(after, k) - game::payoff(before, k);
    const ld err = std::abs(du - dmu);
    if (err > 1e-10L * std::abs(dmu) + 1e-12L)
      return {false, "trial " + std::to_string(trial) + fmt(": |du - dmu| = %.3g", static_cast<double>(err))};
    worst = std::max(worst, static_cast<double>(err / (std::abs(dmu) + 1e-300L)));
  }
  return {true, "1000 deviations, worst relative mismatch " + fmt("%.2g", worst)};
}

Outcome criterion3() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> kdist(2, 20);
  const double rho_min = 1e-6, p_max = 0.1;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_instance(rng, kdist(rng), rho_min, p_max);
    for (std::size_t k = 0; k < in.rho.size(); ++k) {
      const double br = game::best_response(k, in.rho, in.gains, in.alpha, rho_min, p_max).clamped;
      const double gs = golden_section(in, k, rho_min, p_max);
      const double rel = std::abs(br - gs) / br;
      worst = std::max(worst, rel);
      if (rel > 1e-6) return {false, "trial " + std::to_string(trial) + fmt(": relative gap %.3g", rel)};
    }
  }
  return {true, "100 instances, worst relative gap " + fmt("%.2g", worst)};
}

struct DeskRun {
  game::GameConfig config;
  game::GameState state;
};

std::vector<DeskRun> desk_runs() {
  std::vector<DeskRun> runs;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> kdist(2, 20);
  std::uniform_real_distribution<double> adist(0.0, 2.0);
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto cfg = desk_config(kdist(rng), 100 + i);
    const auto d = harness::setup_drop(cfg, 0);
    DeskRun r;
    r.config = cfg.game;
    r.config.alpha = adist(rng);
    r.state = game::run_game(d.cluster_gains, r.config);
    runs.push_back(std::move(r));
  }
  return runs;
}

Outcome criterion4(const std::vector<DeskRun>& runs) {
  std::size_t updates = 0, max_rounds = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& st = runs[i].state;
    const std::string tag = "instance " + std::to_string(i) + " (K=" + std::to_string(st.rho.size()) + ")";
    if (!st.converged || st.iteration > 500) return {false, tag + ": no termination within 500 rounds"};
    for (const auto& ev : st.updates)
      if (!(ev.potential_change < 0.0)) return {false, tag + ": potential did not decrease"};
    for (std::size_t t = 1; t < st.trace.size(); ++t)
      if (st.trace[t].potential_excess > st.trace[t - 1].potential_excess)
        return {false, tag + ": potential rose between rounds"};
    const auto cert = game::certify_epsilon_nash(st, runs[i].config);
    if (!cert.is_epsilon_nash) return {false, tag + fmt(": certificate failed, gain %.3g", cert.worst_gain)};
    updates += st.updates.size();
    max_rounds = std::max(max_rounds, st.iteration);
  }
  return {true, "20 instances, " + std::to_string(updates) + " accepted updates, at most " +
                    std::to_string(max_rounds) + " rounds, all certified"};
}

// Gains within one decade and alpha <= 1 keep every best response inside the
// strategy set, so these runs end on the equalized branch.
std::vector<DeskRun> unclamped_runs() {
  std::vector<DeskRun> runs;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> kdist(2, 20);
  std::uniform_real_distribution<double> lg(-11.0, -10.0), adist(0.0, 1.0);
  for (int i = 0; i < 30; ++i) {
    std::vector<double> gains(kdist(rng));
    for (auto& g : gains) g = std::pow(10.0, lg(rng));
    DeskRun r;
    r.config.alpha = adist(rng);
    r.state = game::run_game(gains, r.config);
    runs.push_back(std::move(r));
  }
  return runs;
}

Outcome criterion5(std::vector<DeskRun> runs) {
  for (auto& r : unclamped_runs()) runs.push_back(std::move(r));
  std::size_t equalized = 0, clamped_runs = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& st = runs[i].state;
    const auto& c = runs[i].config;
    if (!st.converged) return {false, "instance " + std::to_string(i) + ": did not converge"};
    bool clamped = false;
    for (std::size_t k = 0; k < st.rho.size(); ++k) {
      const auto br = game::best_response(k, st.rho, st.cluster_gain, c.alpha, c.rho_min, c.rho_max);
      // A UE resting exactly on a bound is not a binding clamp.
      clamped = clamped || br.unclamped > c.rho_max * (1.0 + 1e-9) || br.unclamped < c.rho_min * (1.0 - 1e-9);
      if (std::abs(st.rho[k] - br.clamped) > 1e-9 * c.p_max)
        return {false, "instance " + std::to_string(i) + ": fixed-point residual too large"};
    }
    if (clamped) {
      ++clamped_runs;
      continue;
    }
    const double mean = std::accumulate(st.xi.begin(), st.xi.end(), 0.0) / static_cast<double>(st.xi.size());
    for (double x : st.xi)
      if (std::abs(x - mean) / mean > 1e-6)
        return {false, "instance " + std::to_string(i) + fmt(": xi spread %.3g", std::abs(x - mean) / mean)};
    ++equalized;
  }
  return {equalized > 0, std::to_string(equalized) + " equalized, " + std::to_string(clamped_runs) + " clamped"};
}

Outcome criterion6() {
  // Two co-pilot UEs, two APs, N=4, both correlation models.
  double worst_cov = 0.0, worst_cross = 0.0, worst_bc = 0.0;
  for (bool correlated : {false, true}) {
    Eigen::MatrixXd beta(2, 2);
    beta << 1e-10, 2e-11, 3e-11, 6e-11;
    auto ls = propagation::from_gains(beta, 4);
    if (correlated) {
      ls.diagonal = false;
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t l = 0; l < 2; ++l)
          ls.corr[k * 2 + l] = propagation::spatial_correlation(
              beta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)),
              propagation::CorrelationModel::local_scattering, 4, 0.3 + 0.7 * static_cast<double>(k + l), 0.25);
    }
    const auto a = association::from_clusters({{0, 1}, {0, 1}}, {0, 0}, 2, 10, 4);
    channel::FrameConfig f;
    f.noise_power = 1e-13;
    channel::ChannelEnsemble ens(ls, a, f, {0.1, 0.1}, 100000, 99);
    const Eigen::Index n = 4;
    std::vector<Eigen::MatrixXcd> cov(4, Eigen::MatrixXcd::Zero(n, n)), cross(4, Eigen::MatrixXcd::Zero(n, n));
    channel::ChannelSample smp;
    for (std::size_t s = 0; s < ens.size(); ++s) {
      ens.sample(s, smp);
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t l = 0; l < 2; ++l) {
          const auto row = static_cast<Eigen::Index>(l) * n;
          const auto col = static_cast<Eigen::Index>(k);
          const Eigen::VectorXcd hh = smp.h_hat.block(row, col, n, 1);
          const Eigen::VectorXcd err = smp.h.block(row, col, n, 1) - hh;
          cov[k * 2 + l] += hh * hh.adjoint();
          cross[k * 2 + l] += hh * err.adjoint();
        }
    }
    const double count = static_cast<double>(ens.size());
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t l = 0; l < 2; ++l) {
        const auto& b = ens.stats().B(k, l);
        worst_cov = std::max(worst_cov, rel_fro(cov[k * 2 + l] / count, b));
        worst_cross = std::max(worst_cross, (cross[k * 2 + l] / count).norm() / b.norm());
      }
  }
  // B + C = R on a desk-scale correlated layout with pilot reuse.
  {
    propagation::LayoutConfig lc;
    lc.num_ues = 15;
    lc.correlation = propagation::CorrelationModel::local_scattering;
    Rng rng = make_rng(6, {});
    const auto ls = propagation::large_scale_state(propagation::generate_layout(lc, rng), lc, 6);
    const auto a = association::assign_pilots_and_clusters(ls.beta, 10, association::Scenario::cell_free, 4);
    channel::FrameConfig f;
    const auto st = channel::estimation_covariances(ls, std::vector<double>(15, 0.1), a, f);
    for (std::size_t k = 0; k < 15; ++k)
      for (std::size_t l = 0; l < 25; ++l)
        worst_bc = std::max(worst_bc, rel_fro(st.B(k, l) + st.C(k, l), ls.R(k, l)));
  }
  const bool ok = worst_cov <= 0.05 && worst_cross <= 0.05 && worst_bc <= 1e-10;
  return {ok, "cov " + fmt("%.3g", worst_cov) + ", cross " + fmt("%.3g", worst_cross) + ", B+C-R " +
                  fmt("%.2g", worst_bc)};
}

Outcome criterion7() {
  // Contamination-free pilots, R = beta I, each UE served by its 4 strongest APs.
  const std::size_t K = 6, L = 10, N = 4, cluster = 4;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> db(-125.0, -95.0);
  Eigen::MatrixXd beta(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(L));
  for (Eigen::Index k = 0; k < beta.rows(); ++k)
    for (Eigen::Index l = 0; l < beta.cols(); ++l) beta(k, l) = db_to_linear(db(rng));
  std::vector<std::vector<std::size_t>> serving(K);
  std::vector<std::size_t> pilots(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<std::size_t> idx(L);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
      return beta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) >
             beta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    });
    serving[k].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cluster));
    pilots[k] = k;
  }
  const auto ls = propagation::from_gains(beta, N);
  const auto a = association::from_clusters(serving, pilots, L, 10, N, &beta);
  channel::FrameConfig f;
  const double p_pilot = 0.1;
  channel::ChannelEnsemble ens(ls, a, f, std::vector<double>(K, p_pilot), 10000, 21);
  const std::vector<double> rho{0.1, 0.03, 0.06, 0.1, 0.01, 0.08};
  const auto rep = receiver::monte_carlo_sinr(ens, receiver::Combiner::mrc, rho);

  const double tau = static_cast<double>(f.tau_p), s2 = f.noise_power, n = static_cast<double>(N);
  double worst = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    double gain = 0.0, interf = 0.0;
    for (auto l : serving[k]) {
      const double bkl = beta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
      const double b = tau * p_pilot * bkl * bkl / (tau * p_pilot * bkl + s2);
      gain += n * b;
      for (std::size_t i = 0; i < K; ++i)
        interf += rho[i] * n * b * beta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l));
    }
    const double want = rho[k] * gain * gain / (interf + s2 * gain);
    worst = std::max(worst, std::abs(rep.ues[k].sinr - want) / want);
  }

  receiver::SinrMoments m(2);
  m.add(Eigen::MatrixXcd::Ones(1, 2), Eigen::MatrixXcd::Ones(1, 2));
  const auto toy = receiver::sinr_from_moments(m, {4.0, 1.0}, 1.0, f);
  const bool ok = worst <= 0.03 && toy.ues[0].sinr == 2.0;
  return {ok, "worst MRC gap " + fmt("%.3g", worst) + ", toy SINR " + fmt("%.17g", toy.ues[0].sinr)};
}

Outcome criterion8() {
  auto cfg = desk_config(15, 8);
  cfg.ue_counts = {8, 15};
  const auto results = harness::metrics_vs_k(cfg);
  std::string detail;
  bool ok = true;
  std::vector<double> gains;
  for (const auto& r : results) {
    const double g = harness::min_se_gain(r);
    gains.push_back(g);
    detail += "K=" + std::to_string(r.num_ues) + fmt(" gain %.1f%%", 100.0 * g) +
              fmt(" (alpha %g), ", r.best_alpha.min_se);
    ok = ok && r.best_game.mean_min_se >= r.greedy.mean_min_se;
  }
  ok = ok && gains.size() == 2 && gains[1] >= gains[0];
  detail += ok ? "non-decreasing" : "trend violated";
  return {ok, detail};
}

Outcome criterion9() {
  auto cfg = desk_config(10, 11);
  cfg.num_drops = 10;
  harness::ExperimentResult full;
  const auto rows = harness::sweep_alpha(cfg, &full);
  const auto again = harness::sweep_alpha(cfg);
  const auto d1 = scratch("tradeoff1"), d2 = scratch("tradeoff2");
  io::emit_report({io::tradeoff_table(rows)}, io::Format::csv, d1);
  io::emit_report({io::tradeoff_table(again)}, io::Format::csv, d2);
  const bool stable = slurp(d1 / "tradeoff.csv") == slurp(d2 / "tradeoff.csv");
  fs::remove_all(d1);
  fs::remove_all(d2);

  bool ordered = rows.size() == 5;
  for (std::size_t i = 1; i < rows.size(); ++i) ordered = ordered && rows[i].alpha > rows[i - 1].alpha;
  bool se_max_at_zero = rows.front().alpha == 0.0;
  double best_ee_ratio = 0.0, best_ee_alpha = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    se_max_at_zero = se_max_at_zero && rows[i].mean_total_se <= rows[0].mean_total_se;
    const double ratio = rows[i].mean_total_ee / rows[0].mean_total_ee;
    if (ratio > best_ee_ratio) {
      best_ee_ratio = ratio;
      best_ee_alpha = rows[i].alpha;
    }
  }
  const bool ok = ordered && stable && se_max_at_zero && best_ee_ratio >= 1.1;
  return {ok, std::string(se_max_at_zero ? "SE max at alpha 0" : "SE not max at alpha 0") +
                  fmt(", EE ratio %.3g", best_ee_ratio) + fmt(" at alpha %g", best_ee_alpha) +
                  (ordered ? ", ordered" : ", unordered") + (stable ? ", byte-stable" : ", unstable")};
}

Outcome criterion10() {
  const auto dir = scratch("oscillation");
  fs::create_directories(dir);
  const auto cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << R"({
  "p_max_w": 0.1,
  "game": {"schedule": "simultaneous", "max_iterations": 50},
  "fixed_instance": {"cluster_gains": [4e-9, 2e-9], "initial_powers_w": [0.05, 0.05]},
  "alpha_grid": [1.0]
})";
  const auto cfg = io::load_experiment(cfg_path.string());
  const auto res = harness::run_convergence(cfg);
  const auto& st = res.runs.front().state;

  const std::vector<std::string> args{"cfgame", "convergence", "--config", cfg_path.string(), "--out",
                                      (dir / "out").string()};
  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  std::ostringstream log, err;
  const int rc = cli::run(static_cast<int>(argv.size()), argv.data(), log, err);
  fs::remove_all(dir);

  const bool ok = !res.all_converged && !st.converged && st.iteration == 50 && rc != 0;
  return {ok, "iterations " + std::to_string(st.iteration) + ", converged " + (st.converged ? "yes" : "no") +
                  ", period " + std::to_string(st.oscillation_period) + ", exit code " + std::to_string(rc)};
}

}  // namespace

// Optional arguments select criteria by number; default runs all of them.
int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failures = 0, ran = 0;
  auto report = [&](int id, const char* title, double limit_s, const std::function<Outcome()>& fn) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) return;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0.0 && secs > limit_s) {
      o.pass = false;
      o.detail += fmt("; exceeded %g s", limit_s);
    }
    if (!o.pass) ++failures;
    std::printf("[%s] criterion %d: %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "alpha=0 full-power start is immediate", 1.0, criterion1);
  report(2, "exact potential identity", 1.0, criterion2);
  report(3, "best response matches golden-section search", 5.0, criterion3);
  std::vector<DeskRun> runs;
  report(4, "sequential convergence and certification", 30.0, [&] {
    runs = desk_runs();
    return criterion4(runs);
  });
  report(5, "equalization or fixed point at termination", 0.0, [&] {
    if (runs.empty()) runs = desk_runs();
    return criterion5(runs);
  });
  report(6, "estimator statistics", 60.0, criterion6);
  report(7, "MRC SINR closed form and toy case", 0.0, criterion7);
  report(8, "min-SE gain over greedy, K=8 and K=15", 600.0, criterion8);
  report(9, "EE-SE trade-off over the alpha grid", 0.0, criterion9);
  report(10, "simultaneous schedule stops at max_iterations", 10.0, criterion10);

  std::printf("%d of %d criteria failed\n", failures, ran);
  return failures == 0 ? 0 : 1;
}
