// SPDX-License-Identifier: Apache-2.0
#pragma once

// Potential-game uplink power control.
//
// Each UE k picks a data power rho_k in [rho_min, rho_max]. With cluster gain
// Lambda_k = sum_{l in M_k} beta_kl and effective gain xi_k = rho_k Lambda_k^alpha,
// the payoff (to be minimized) is
//
//   mu_k(xi) = (sum_{i != k} xi_i) / xi_k + xi_k * sum_{i != k} 1 / xi_i
//
// and the game admits the exact potential
//
//   u(xi) = 1/2 sum_k mu_k(xi) = sum_{k < i} (xi_i / xi_k + xi_k / xi_i)
//         = (sum_k xi_k)(sum_k 1/xi_k) - K.
//
// The unconstrained best response equalizes UE k with the "geometric balance"
// of the others, xi_k* = sqrt(S_{-k} / T_{-k}) with S = sum xi, T = sum 1/xi.
//
// Payoffs and potentials are evaluated in `Real` (templated). run_game plays in
// long double; the per-update payoff and potential changes it records are
// re-evaluated from scratch in audit_real (binary128 where the compiler has it),
// because moves near convergence are far below long double resolution of u.

#include "cfgame/association.hpp"
#include "cfgame/common.hpp"
#include "cfgame/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cfgame::game {

using game_real = long double;

#if defined(__SIZEOF_FLOAT128__)
using audit_real = __float128;
#else
using audit_real = long double;
#endif

template <typename T>
concept game_scalar = std::floating_point<T> || std::same_as<T, audit_real>;

enum class Schedule { sequential, simultaneous };

inline Schedule parse_schedule(std::string_view id) {
  if (id == "sequential") return Schedule::sequential;
  if (id == "simultaneous") return Schedule::simultaneous;
  throw ValidationError("unknown schedule '" + std::string(id) + "'");
}

inline std::string to_string(Schedule s) { return s == Schedule::sequential ? "sequential" : "simultaneous"; }

enum class InitialPowerRule { full_power, fraction, explicit_powers };

struct GameConfig {
  double alpha = 0.0;
  double epsilon = 1e-18;
  double rho_min = 1e-6;  // W
  double rho_max = 0.1;   // W
  double p_max = 0.1;     // W
  Schedule schedule = Schedule::sequential;
  std::size_t max_iterations = 500;
  InitialPowerRule initial_power_rule = InitialPowerRule::full_power;
  double initial_fraction = 1.0;        // n in rho^(0) = P_max / n
  std::vector<double> initial_powers;   // used with explicit_powers

  void validate() const {
    require(std::isfinite(alpha) && alpha >= 0.0, "game: alpha must be finite and non-negative");
    require(epsilon > 0.0, "game: epsilon must be positive");
    require(rho_min > 0.0, "game: rho_min must be positive");
    require(rho_min <= rho_max, "game: rho_min must not exceed rho_max");
    require(rho_max <= p_max, "game: rho_max must not exceed p_max");
    require(max_iterations >= 1, "game: max_iterations must be at least 1");
    if (initial_power_rule == InitialPowerRule::fraction)
      require(initial_fraction > 0.0, "game: initial fraction n must be positive");
  }

  std::vector<double> initial_profile(std::size_t num_ues) const {
    switch (initial_power_rule) {
      case InitialPowerRule::full_power: return std::vector<double>(num_ues, std::clamp(p_max, rho_min, rho_max));
      case InitialPowerRule::fraction:
        return std::vector<double>(num_ues, std::clamp(p_max / initial_fraction, rho_min, rho_max));
      case InitialPowerRule::explicit_powers: {
        require(initial_powers.size() == num_ues, "game: explicit initial power count mismatch");
        for (double p : initial_powers)
          require(p >= rho_min && p <= rho_max, "game: explicit initial power outside strategy set");
        return initial_powers;
      }
    }
    return {};
  }
};

namespace detail {

template <game_scalar Real>
void check_profile(std::span<const Real> xi) {
  require(xi.size() >= 2, "game: need at least two players");
  // x - x is NaN for infinities and NaN.
  for (Real x : xi) require(x > Real(0) && x - x == Real(0), "game: effective gains must be positive");
}

template <game_scalar Real>
Real magnitude(Real x) {
  return x < Real(0) ? -x : x;
}

// Neumaier-compensated sum.
template <game_scalar Real>
struct CompensatedSum {
  Real sum = 0;
  Real c = 0;
  void add(Real x) {
    const Real t = sum + x;
    if (magnitude(sum) >= magnitude(x))
      c += (sum - t) + x;
    else
      c += (x - t) + sum;
    sum = t;
  }
  Real value() const { return sum + c; }
};

// S_{-k} = sum_{i != k} xi_i and T_{-k} = sum_{i != k} 1/xi_i.
template <game_scalar Real>
std::pair<Real, Real> others_sums(std::span<const Real> xi, std::size_t k) {
  CompensatedSum<Real> s, t;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    if (i == k) continue;
    s.add(xi[i]);
    t.add(Real(1) / xi[i]);
  }
  return {s.value(), t.value()};
}

}  // namespace detail

template <std::floating_point Real>
Real effective_gain(Real rho, Real cluster_gain, Real alpha) {
  return rho * std::pow(cluster_gain, alpha);
}

template <std::floating_point Real>
std::vector<Real> effective_gains(std::span<const double> rho, std::span<const double> cluster_gain, double alpha) {
  require(rho.size() == cluster_gain.size(), "game: power and gain counts differ");
  std::vector<Real> xi(rho.size());
  for (std::size_t k = 0; k < rho.size(); ++k) {
    require(rho[k] > 0.0, "game: powers must be positive");
    require(cluster_gain[k] > 0.0, "game: cluster gains must be positive");
    xi[k] = effective_gain<Real>(rho[k], cluster_gain[k], alpha);
  }
  return xi;
}

// mu_k in terms of the effective-gain vector.
template <game_scalar Real>
Real payoff(std::span<const Real> xi, std::size_t k) {
  detail::check_profile(xi);
  require(k < xi.size(), "payoff: UE index out of range");
  const auto [s, t] = detail::others_sums(xi, k);
  return s / xi[k] + xi[k] * t;
}

template <game_scalar Real>
Real payoff(const std::vector<Real>& xi, std::size_t k) {
  return payoff(std::span<const Real>(xi), k);
}

// mu_k written out from powers and cluster gains (gamma_k + lambda_k).
template <std::floating_point Real>
Real payoff_from_powers(std::span<const double> rho, std::span<const double> cluster_gain, double alpha,
                        std::size_t k) {
  require(rho.size() == cluster_gain.size() && rho.size() >= 2, "payoff: need matching sizes and K >= 2");
  require(k < rho.size(), "payoff: UE index out of range");
  const Real a = alpha;
  const Real own = Real(rho[k]) * std::pow(Real(cluster_gain[k]), a);
  Real interference = 0, punishment = 0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (i == k) continue;
    const Real other = Real(rho[i]) * std::pow(Real(cluster_gain[i]), a);
    interference += other;
    punishment += Real(1) / other;
  }
  return interference / own + own * punishment;
}

// mu_k - 2(K-1) = sum_{i != k} (xi_i - xi_k)^2 / (xi_i xi_k), the payoff in
// excess of its global lower bound. Differences of this form stay accurate for
// moves far below the rounding level of mu_k itself.
template <game_scalar Real>
Real payoff_excess(std::span<const Real> xi, std::size_t k) {
  detail::check_profile(xi);
  require(k < xi.size(), "payoff: UE index out of range");
  detail::CompensatedSum<Real> acc;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    if (i == k) continue;
    const Real d = xi[i] - xi[k];
    acc.add(d * d / (xi[i] * xi[k]));
  }
  return acc.value();
}

template <game_scalar Real>
Real potential(std::span<const Real> xi) {
  detail::check_profile(xi);
  detail::CompensatedSum<Real> s, t;
  for (Real x : xi) {
    s.add(x);
    t.add(Real(1) / x);
  }
  return s.value() * t.value() - Real(xi.size());
}

template <game_scalar Real>
Real potential(const std::vector<Real>& xi) {
  return potential(std::span<const Real>(xi));
}

// u - K(K-1) = sum_{k<i} (xi_i - xi_k)^2 / (xi_i xi_k) >= 0, accurate near the
// uniform profile where the plain form cancels.
template <game_scalar Real>
Real potential_excess(std::span<const Real> xi) {
  detail::check_profile(xi);
  detail::CompensatedSum<Real> acc;
  for (std::size_t k = 0; k < xi.size(); ++k)
    for (std::size_t i = k + 1; i < xi.size(); ++i) {
      const Real d = xi[i] - xi[k];
      acc.add(d * d / (xi[i] * xi[k]));
    }
  return acc.value();
}

struct BestResponse {
  double unclamped = 0.0;  // W
  double clamped = 0.0;    // W, within [rho_min, rho_max]
};

// Closed-form minimizer of mu_k over rho_k, clamped to [rho_min, rho_max]:
//   rho_k* = sqrt( sum_{i!=k} rho_i L_i^a / sum_{i!=k} L_k^{2a} / (rho_i L_i^a) )
inline BestResponse best_response(std::size_t k, std::span<const double> rho, std::span<const double> cluster_gain,
                                  double alpha, double rho_min, double rho_max) {
  require(rho.size() >= 2, "best response: need at least two players");
  require(k < rho.size(), "best response: UE index out of range");
  require(rho_min > 0.0 && rho_min <= rho_max, "best response: invalid bounds");
  const auto xi = effective_gains<game_real>(rho, cluster_gain, alpha);
  const auto [s, t] = detail::others_sums(std::span<const game_real>(xi), k);
  const game_real target = std::sqrt(s / t);
  const game_real scale = std::pow(static_cast<game_real>(cluster_gain[k]), static_cast<game_real>(alpha));
  BestResponse br;
  br.unclamped = static_cast<double>(target / scale);
  br.clamped = std::clamp(br.unclamped, rho_min, rho_max);
  return br;
}

// Payoff reduction for UE k moving xi_k -> xi_new with the others fixed,
// mu_k(xi_k) - mu_k(xi_new) = T (xi_k - xi_new) (1 - S / (T xi_k xi_new)),
// written so that it stays accurate when the move is tiny.
template <game_scalar Real>
Real payoff_reduction(Real s_others, Real t_others, Real xi_old, Real xi_new) {
  return t_others * (xi_old - xi_new) * (Real(1) - s_others / (t_others * xi_old * xi_new));
}

struct IterationRecord {
  std::size_t iteration = 0;
  std::vector<double> rho;   // W
  std::vector<double> xi;
  std::vector<double> mu;
  double potential = 0.0;
  double potential_excess = 0.0;
  double total_power = 0.0;  // W
  std::size_t accepted_updates = 0;
  std::size_t messages = 0;  // cumulative
};

struct UpdateEvent {
  std::size_t iteration = 0;
  std::size_t ue = 0;
  double old_rho = 0.0;
  double new_rho = 0.0;
  // Both evaluated directly from the profiles before and after the move (via
  // the excess forms, which differ from mu_k and u by constants).
  double payoff_change = 0.0;     // mu_k(after) - mu_k(before)
  double potential_change = 0.0;  // u(after) - u(before)
  double predicted_reduction = 0.0;
};

struct GameState {
  std::vector<double> rho;
  std::vector<double> xi;
  std::vector<double> cluster_gain;
  double alpha = 0.0;
  double epsilon = 0.0;
  std::size_t iteration = 0;
  bool converged = false;
  std::size_t oscillation_period = 0;  // 0 when no cycle was seen
  std::vector<IterationRecord> trace;
  std::vector<UpdateEvent> updates;

  double total_power() const {
    double s = 0.0;
    for (double p : rho) s += p;
    return s;
  }
};

struct NashCertificate {
  bool is_epsilon_nash = false;
  double worst_gain = 0.0;
  std::size_t worst_ue = 0;
  std::size_t probe_count = 0;
};

namespace detail {

inline IterationRecord snapshot(std::size_t iteration, const std::vector<double>& rho,
                                const std::vector<game_real>& xi, std::size_t accepted, std::size_t messages) {
  IterationRecord r;
  r.iteration = iteration;
  r.rho = rho;
  r.xi.assign(xi.begin(), xi.end());
  r.mu.resize(xi.size());
  const std::span<const game_real> view(xi);
  for (std::size_t k = 0; k < xi.size(); ++k) r.mu[k] = static_cast<double>(payoff(view, k));
  r.potential = static_cast<double>(potential(view));
  r.potential_excess = static_cast<double>(potential_excess(view));
  r.total_power = 0.0;
  for (double p : rho) r.total_power += p;
  r.accepted_updates = accepted;
  r.messages = messages;
  return r;
}

// Fills the payoff and potential changes of a unilateral move xi_k -> moved,
// each evaluated independently before and after in audit precision.
inline void record_changes(UpdateEvent& ev, const std::vector<game_real>& before, std::size_t k, game_real moved) {
  std::vector<audit_real> b(before.begin(), before.end());
  std::vector<audit_real> a = b;
  a[k] = static_cast<audit_real>(moved);
  const std::span<const audit_real> bv(b), av(a);
  ev.payoff_change = static_cast<double>(payoff_excess(av, k) - payoff_excess(bv, k));
  ev.potential_change = static_cast<double>(potential_excess(av) - potential_excess(bv));
}

}  // namespace detail

// Best-response dynamics.
//
// Every iteration, each UE reports its power to its master AP and receives the
// broadcast xi vector (2 messages per UE). A UE moves to its clamped best
// response only if that lowers its payoff by more than epsilon. Under the
// sequential schedule UEs move one at a time in index order and later UEs see
// earlier moves within the same iteration; under the simultaneous schedule all
// UEs respond to the same snapshot. The run stops after an iteration in which
// nobody moved, or after max_iterations (converged = false).
inline GameState run_game(std::span<const double> cluster_gain, const GameConfig& config) {
  config.validate();
  const std::size_t K = cluster_gain.size();
  require(K >= 2, "game: need at least two players");
  for (double g : cluster_gain) require(g > 0.0 && std::isfinite(g), "game: cluster gains must be positive");

  GameState st;
  st.cluster_gain.assign(cluster_gain.begin(), cluster_gain.end());
  st.alpha = config.alpha;
  st.epsilon = config.epsilon;
  st.rho = config.initial_profile(K);

  std::vector<game_real> scale(K);
  for (std::size_t k = 0; k < K; ++k)
    scale[k] = std::pow(static_cast<game_real>(cluster_gain[k]), static_cast<game_real>(config.alpha));
  std::vector<game_real> xi(K);
  for (std::size_t k = 0; k < K; ++k) xi[k] = static_cast<game_real>(st.rho[k]) * scale[k];

  std::size_t messages = 0;
  st.trace.push_back(detail::snapshot(0, st.rho, xi, 0, messages));
  const game_real eps = config.epsilon;
  std::vector<std::vector<double>> history{st.rho};

  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    messages += 2 * K;
    std::size_t accepted = 0;
    const std::vector<game_real> frozen = xi;
    std::vector<double> next_rho = st.rho;
    std::vector<game_real> next_xi = xi;
    for (std::size_t k = 0; k < K; ++k) {
      const std::vector<game_real>& view = config.schedule == Schedule::sequential ? xi : frozen;
      const auto [s, t] = detail::others_sums(std::span<const game_real>(view), k);
      const game_real target = std::sqrt(s / t) / scale[k];
      const double candidate = std::clamp(static_cast<double>(target), config.rho_min, config.rho_max);
      const game_real cand_xi = static_cast<game_real>(candidate) * scale[k];
      const game_real gain = payoff_reduction(s, t, view[k], cand_xi);
      if (!(gain > eps) || candidate == st.rho[k]) continue;

      ++accepted;
      UpdateEvent ev;
      ev.iteration = it;
      ev.ue = k;
      ev.old_rho = st.rho[k];
      ev.new_rho = candidate;
      ev.predicted_reduction = static_cast<double>(gain);
      detail::record_changes(ev, view, k, cand_xi);
      if (config.schedule == Schedule::sequential) {
        xi[k] = cand_xi;
        st.rho[k] = candidate;
      } else {
        next_xi[k] = cand_xi;
        next_rho[k] = candidate;
      }
      st.updates.push_back(ev);
    }
    if (config.schedule == Schedule::simultaneous) {
      xi = next_xi;
      st.rho = next_rho;
    }
    st.iteration = it;
    st.trace.push_back(detail::snapshot(it, st.rho, xi, accepted, messages));
    if (accepted == 0) {
      st.converged = true;
      break;
    }
    history.push_back(st.rho);
    if (st.oscillation_period == 0) {
      for (std::size_t period = 2; period <= 4 && period < history.size(); ++period) {
        if (history[history.size() - 1 - period] == st.rho) {
          st.oscillation_period = period;
          break;
        }
      }
    }
  }
  st.xi.assign(xi.begin(), xi.end());
  return st;
}

inline GameState run_game(const propagation::LargeScaleState& ls, const association::ClusterAssignment& a,
                          const GameConfig& config) {
  const auto gains = association::cluster_gains(ls.beta, a);
  return run_game(std::span<const double>(gains), config);
}

// Probes every UE's payoff over a uniform grid on [rho_min, rho_max] plus its
// closed-form clamped best response, and records the largest payoff reduction
// any UE could obtain by deviating unilaterally.
inline NashCertificate certify_epsilon_nash(const GameState& st, const GameConfig& config,
                                            std::size_t probe_grid_size = 64) {
  const std::size_t K = st.rho.size();
  require(K >= 2, "certify: need at least two players");
  require(probe_grid_size >= 2, "certify: probe grid needs at least two points");
  NashCertificate cert;
  const auto xi_ld = effective_gains<game_real>(st.rho, st.cluster_gain, config.alpha);
  const std::vector<audit_real> current_xi(xi_ld.begin(), xi_ld.end());
  audit_real worst = 0;
  bool any = false;
  std::vector<double> probes;
  probes.reserve(probe_grid_size + 1);
  for (std::size_t k = 0; k < K; ++k) {
    const audit_real current = payoff_excess(std::span<const audit_real>(current_xi), k);
    probes.clear();
    for (std::size_t g = 0; g < probe_grid_size; ++g)
      probes.push_back(config.rho_min + (config.rho_max - config.rho_min) * static_cast<double>(g) /
                                            static_cast<double>(probe_grid_size - 1));
    probes.push_back(best_response(k, st.rho, st.cluster_gain, config.alpha, config.rho_min, config.rho_max).clamped);
    std::vector<audit_real> probe_xi = current_xi;
    for (double p : probes) {
      probe_xi[k] = effective_gain<game_real>(p, st.cluster_gain[k], config.alpha);
      const audit_real gain = current - payoff_excess(std::span<const audit_real>(probe_xi), k);
      ++cert.probe_count;
      if (!any || gain > worst) {
        worst = gain;
        cert.worst_ue = k;
        any = true;
      }
    }
  }
  cert.worst_gain = worst > audit_real(0) ? static_cast<double>(worst) : 0.0;
  cert.is_epsilon_nash = cert.worst_gain <= config.epsilon;
  return cert;
}

}  // namespace cfgame::game
