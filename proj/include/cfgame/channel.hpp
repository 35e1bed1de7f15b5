// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfgame/association.hpp"
#include "cfgame/common.hpp"
#include "cfgame/propagation.hpp"

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cfgame::channel {

enum class PilotPowerMode { fixed_pmax, track_data_power };

inline PilotPowerMode parse_pilot_power_mode(std::string_view id) {
  if (id == "fixed_pmax") return PilotPowerMode::fixed_pmax;
  if (id == "track_data_power") return PilotPowerMode::track_data_power;
  throw ValidationError("unknown pilot power mode '" + std::string(id) + "'");
}

inline std::string to_string(PilotPowerMode m) {
  return m == PilotPowerMode::fixed_pmax ? "fixed_pmax" : "track_data_power";
}

struct FrameConfig {
  std::size_t tau_c = 200;
  std::size_t tau_p = 10;
  std::size_t tau_u = 190;
  std::size_t tau_d = 0;
  double noise_power = 3.98e-13;  // W
  PilotPowerMode pilot_power_mode = PilotPowerMode::fixed_pmax;

  double uplink_fraction() const { return static_cast<double>(tau_u) / static_cast<double>(tau_c); }

  void validate() const {
    require(tau_c == tau_p + tau_u + tau_d, "frame: tau_c must equal tau_p + tau_u + tau_d");
    require(tau_p >= 1, "frame: tau_p must be at least 1");
    require(tau_c >= 1, "frame: tau_c must be positive");
    require(noise_power > 0.0, "frame: noise power must be positive");
  }
};

// Principal square root of a Hermitian PSD matrix. Eigenvalues slightly below
// zero from round-off are clipped; genuinely indefinite input is an error.
inline Eigen::MatrixXcd psd_sqrt(const Eigen::MatrixXcd& r) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hermitian_part(r));
  if (es.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigendecomposition failed");
  const Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  if (ev.minCoeff() < -1e-10 * scale) throw NumericalError("psd_sqrt: matrix is not positive semi-definite");
  const Eigen::VectorXd root = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().adjoint();
}

// Second-order statistics of the MMSE estimator for a given pilot power profile.
struct EstimationStats {
  std::size_t num_ues = 0;
  std::size_t num_aps = 0;
  std::size_t antennas = 0;
  std::size_t tau_p = 0;
  bool diagonal = true;
  std::vector<Eigen::MatrixXcd> psi;        // (t, l), row-major over t
  std::vector<Eigen::MatrixXcd> est_cov;    // B_kl, row-major over k
  std::vector<Eigen::MatrixXcd> err_cov;    // C_kl
  std::vector<Eigen::MatrixXcd> estimator;  // sqrt(tau_p rho_k) R_kl Psi_tl^{-1}
  std::vector<double> pilot_powers;

  const Eigen::MatrixXcd& Psi(std::size_t t, std::size_t l) const { return psi[t * num_aps + l]; }
  const Eigen::MatrixXcd& B(std::size_t k, std::size_t l) const { return est_cov[k * num_aps + l]; }
  const Eigen::MatrixXcd& C(std::size_t k, std::size_t l) const { return err_cov[k * num_aps + l]; }
  const Eigen::MatrixXcd& W(std::size_t k, std::size_t l) const { return estimator[k * num_aps + l]; }
};

//   Psi_tl = sum_{i in S_t} tau_p rho_i R_il + sigma^2 I
//   B_kl   = tau_p rho_k R_kl Psi_tl^{-1} R_kl
//   C_kl   = R_kl - B_kl
// Psi is factorized with a Hermitian (LLT) solve; outputs are symmetrized.
inline EstimationStats estimation_covariances(const propagation::LargeScaleState& ls,
                                              const std::vector<double>& pilot_powers,
                                              const association::ClusterAssignment& a,
                                              const FrameConfig& frame) {
  frame.validate();
  require(pilot_powers.size() == ls.num_ues, "estimation: pilot power count mismatch");
  require(a.num_ues == ls.num_ues && a.num_aps == ls.num_aps, "estimation: assignment size mismatch");
  require(a.tau_p == frame.tau_p, "estimation: assignment and frame disagree on tau_p");
  for (double p : pilot_powers) require(p >= 0.0, "estimation: negative pilot power");
  const auto n = static_cast<Eigen::Index>(ls.antennas);
  const double tau = static_cast<double>(frame.tau_p);
  const std::size_t tp = a.tau_p;

  EstimationStats st;
  st.num_ues = ls.num_ues;
  st.num_aps = ls.num_aps;
  st.antennas = ls.antennas;
  st.tau_p = tp;
  st.diagonal = ls.diagonal;
  st.pilot_powers = pilot_powers;
  st.psi.assign(tp * ls.num_aps, Eigen::MatrixXcd::Identity(n, n) * frame.noise_power);
  for (std::size_t k = 0; k < ls.num_ues; ++k)
    for (std::size_t l = 0; l < ls.num_aps; ++l)
      st.psi[a.pilot_of[k] * ls.num_aps + l] += tau * pilot_powers[k] * ls.R(k, l);

  std::vector<Eigen::LLT<Eigen::MatrixXcd>> chol;
  chol.reserve(st.psi.size());
  for (auto& p : st.psi) {
    p = hermitian_part(p);
    chol.emplace_back(p);
    if (chol.back().info() != Eigen::Success) throw NumericalError("estimation: Psi is not positive definite");
  }

  st.est_cov.reserve(ls.num_ues * ls.num_aps);
  st.err_cov.reserve(ls.num_ues * ls.num_aps);
  st.estimator.reserve(ls.num_ues * ls.num_aps);
  for (std::size_t k = 0; k < ls.num_ues; ++k) {
    for (std::size_t l = 0; l < ls.num_aps; ++l) {
      const auto& r = ls.R(k, l);
      const auto& f = chol[a.pilot_of[k] * ls.num_aps + l];
      // Psi^{-1} R, and R Psi^{-1} = (Psi^{-1} R)^H since both are Hermitian.
      const Eigen::MatrixXcd psi_inv_r = f.solve(r);
      const Eigen::MatrixXcd b = hermitian_part(tau * pilot_powers[k] * r * psi_inv_r);
      st.est_cov.push_back(b);
      st.err_cov.push_back(hermitian_part(r - b));
      st.estimator.push_back(std::sqrt(tau * pilot_powers[k]) * psi_inv_r.adjoint());
    }
  }
  return st;
}

// One Monte-Carlo realization. Column k of each matrix is the collective
// N*L vector of UE k; rows [l*N, (l+1)*N) belong to AP l.
struct ChannelSample {
  Eigen::MatrixXcd h;      // true channels
  Eigen::MatrixXcd h_hat;  // MMSE estimates
};

namespace detail {

inline Eigen::Index block_row(std::size_t l, std::size_t antennas) {
  return static_cast<Eigen::Index>(l * antennas);
}

inline void draw_into(Eigen::MatrixXcd& h, const propagation::LargeScaleState& ls,
                      const std::vector<Eigen::MatrixXcd>& roots, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(ls.antennas);
  h.resize(n * static_cast<Eigen::Index>(ls.num_aps), static_cast<Eigen::Index>(ls.num_ues));
  Eigen::VectorXcd g(n);
  for (std::size_t k = 0; k < ls.num_ues; ++k) {
    for (std::size_t l = 0; l < ls.num_aps; ++l) {
      for (Eigen::Index i = 0; i < n; ++i) g(i) = complex_normal(rng);
      const auto& root = roots[k * ls.num_aps + l];
      auto dst = h.block(block_row(l, ls.antennas), static_cast<Eigen::Index>(k), n, 1);
      if (ls.diagonal) {
        dst = root.diagonal().cwiseProduct(g);
      } else {
        dst = root * g;
      }
    }
  }
}

inline std::vector<Eigen::MatrixXcd> correlation_roots(const propagation::LargeScaleState& ls) {
  std::vector<Eigen::MatrixXcd> roots;
  roots.reserve(ls.corr.size());
  for (const auto& r : ls.corr) {
    if (ls.diagonal) {
      Eigen::VectorXd d = r.diagonal().real();
      if (d.minCoeff() < 0.0) throw NumericalError("draw: negative variance on correlation diagonal");
      roots.push_back(d.cwiseSqrt().cast<cplx>().asDiagonal());
    } else {
      roots.push_back(psd_sqrt(r));
    }
  }
  return roots;
}

}  // namespace detail

// h_kl = R_kl^{1/2} g, g ~ CN(0, I), independent over (k, l) and samples.
inline std::vector<Eigen::MatrixXcd> draw_channels(const propagation::LargeScaleState& ls,
                                                   std::size_t sample_count, Rng& rng) {
  const auto roots = detail::correlation_roots(ls);
  std::vector<Eigen::MatrixXcd> out(sample_count);
  for (auto& h : out) detail::draw_into(h, ls, roots, rng);
  return out;
}

// y_tl = sum_{i in S_t} sqrt(tau_p rho_i) h_il + n_tl. Column t of the result
// is the collective received pilot signal for pilot t.
inline Eigen::MatrixXcd pilot_observation(const Eigen::MatrixXcd& h, const std::vector<double>& pilot_powers,
                                          const association::ClusterAssignment& a,
                                          const FrameConfig& frame, Rng& rng,
                                          Eigen::MatrixXcd* noise_out = nullptr) {
  require(h.cols() == static_cast<Eigen::Index>(a.num_ues), "pilot observation: UE count mismatch");
  require(pilot_powers.size() == a.num_ues, "pilot observation: pilot power count mismatch");
  Eigen::MatrixXcd y(h.rows(), static_cast<Eigen::Index>(a.tau_p));
  const double sigma = std::sqrt(frame.noise_power);
  for (Eigen::Index t = 0; t < y.cols(); ++t)
    for (Eigen::Index r = 0; r < y.rows(); ++r) y(r, t) = sigma * complex_normal(rng);
  if (noise_out != nullptr) *noise_out = y;
  const double tau = static_cast<double>(frame.tau_p);
  for (std::size_t k = 0; k < a.num_ues; ++k) {
    require(pilot_powers[k] >= 0.0, "pilot observation: negative pilot power");
    y.col(static_cast<Eigen::Index>(a.pilot_of[k])) +=
        std::sqrt(tau * pilot_powers[k]) * h.col(static_cast<Eigen::Index>(k));
  }
  return y;
}

// h_hat_kl = sqrt(tau_p rho_k) R_kl Psi_tl^{-1} y_tl, for every (k, l).
inline Eigen::MatrixXcd mmse_estimate(const Eigen::MatrixXcd& y, const EstimationStats& st,
                                      const association::ClusterAssignment& a) {
  const auto n = static_cast<Eigen::Index>(st.antennas);
  require(y.rows() == n * static_cast<Eigen::Index>(st.num_aps), "mmse estimate: row count mismatch");
  require(y.cols() == static_cast<Eigen::Index>(st.tau_p), "mmse estimate: pilot count mismatch");
  require(a.num_ues == st.num_ues, "mmse estimate: UE count mismatch");
  Eigen::MatrixXcd out(y.rows(), static_cast<Eigen::Index>(st.num_ues));
  for (std::size_t k = 0; k < st.num_ues; ++k) {
    const auto t = static_cast<Eigen::Index>(a.pilot_of[k]);
    for (std::size_t l = 0; l < st.num_aps; ++l) {
      const auto row = detail::block_row(l, st.antennas);
      const auto& w = st.W(k, l);
      auto dst = out.block(row, static_cast<Eigen::Index>(k), n, 1);
      if (st.diagonal) {
        dst = w.diagonal().cwiseProduct(y.block(row, t, n, 1));
      } else {
        dst = w * y.block(row, t, n, 1);
      }
    }
  }
  return out;
}

// A reproducible, lazily generated Monte-Carlo ensemble. Sample s is always
// regenerated from its own stream keyed by (seed, s), so the ensemble can be
// replayed any number of times (e.g. once per power profile) without storing it.
class ChannelEnsemble {
 public:
  ChannelEnsemble(propagation::LargeScaleState ls, association::ClusterAssignment assignment,
                  FrameConfig frame, const std::vector<double>& pilot_powers, std::size_t sample_count,
                  std::uint64_t seed)
      : ls_(std::move(ls)),
        assignment_(std::move(assignment)),
        frame_(frame),
        stats_(estimation_covariances(ls_, pilot_powers, assignment_, frame_)),
        roots_(detail::correlation_roots(ls_)),
        size_(sample_count),
        seed_(seed) {
    require(sample_count >= 1, "ensemble: need at least one sample");
  }

  std::size_t size() const { return size_; }
  std::uint64_t seed() const { return seed_; }
  const propagation::LargeScaleState& large_scale() const { return ls_; }
  const association::ClusterAssignment& assignment() const { return assignment_; }
  const FrameConfig& frame() const { return frame_; }
  const EstimationStats& stats() const { return stats_; }

  void sample(std::size_t s, ChannelSample& out) const {
    Rng rng = make_rng(seed_, {0xc4a7ULL, s});
    detail::draw_into(out.h, ls_, roots_, rng);
    const Eigen::MatrixXcd y = pilot_observation(out.h, stats_.pilot_powers, assignment_, frame_, rng);
    out.h_hat = mmse_estimate(y, stats_, assignment_);
  }

  ChannelSample sample(std::size_t s) const {
    ChannelSample out;
    sample(s, out);
    return out;
  }

 private:
  propagation::LargeScaleState ls_;
  association::ClusterAssignment assignment_;
  FrameConfig frame_;
  EstimationStats stats_;
  std::vector<Eigen::MatrixXcd> roots_;
  std::size_t size_;
  std::uint64_t seed_;
};

}  // namespace cfgame::channel
