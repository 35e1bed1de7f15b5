// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfgame/association.hpp"
#include "cfgame/channel.hpp"
#include "cfgame/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace cfgame::receiver {

enum class Combiner { mrc, lp_mmse };

inline Combiner parse_combiner(std::string_view id) {
  if (id == "mrc") return Combiner::mrc;
  if (id == "lp_mmse") return Combiner::lp_mmse;
  throw ValidationError("unknown combiner '" + std::string(id) + "'");
}

inline std::string to_string(Combiner c) { return c == Combiner::mrc ? "mrc" : "lp_mmse"; }

inline double spectral_efficiency(double sinr, const channel::FrameConfig& frame) {
  require(sinr >= 0.0, "spectral efficiency: negative SINR");
  return frame.uplink_fraction() * std::log2(1.0 + sinr);
}

// Sample-independent part of the LP-MMSE system matrix at each AP:
//   sum_{i in D_l} rho_i C_il + sigma^2 I
inline std::vector<Eigen::MatrixXcd> lp_mmse_base(const channel::EstimationStats& st,
                                                  const std::vector<double>& rho,
                                                  const association::ClusterAssignment& a,
                                                  double sigma2) {
  const auto n = static_cast<Eigen::Index>(st.antennas);
  std::vector<Eigen::MatrixXcd> base(a.num_aps, Eigen::MatrixXcd::Identity(n, n) * sigma2);
  for (std::size_t l = 0; l < a.num_aps; ++l)
    for (auto i : a.served_ues[l]) base[l] += rho[i] * st.C(i, l);
  return base;
}

// Collective combining vectors for one sample, column k = D_k v_k (zero
// outside the serving cluster and masked antennas).
//
//   mrc:     v_kl = h_hat_kl
//   lp_mmse: v_kl = rho_k (sum_{i in D_l} rho_i (h_hat_il h_hat_il^H + C_il) + sigma^2 I)^{-1} h_hat_kl
//
// `base` may be passed to reuse lp_mmse_base across samples.
inline Eigen::MatrixXcd build_combiner(Combiner id, const Eigen::MatrixXcd& h_hat,
                                       const std::vector<double>& rho,
                                       const association::ClusterAssignment& a,
                                       const channel::EstimationStats& st, double sigma2,
                                       const std::vector<Eigen::MatrixXcd>* base = nullptr) {
  const auto n = static_cast<Eigen::Index>(a.antennas);
  require(h_hat.rows() == n * static_cast<Eigen::Index>(a.num_aps), "combiner: row count mismatch");
  require(h_hat.cols() == static_cast<Eigen::Index>(a.num_ues), "combiner: UE count mismatch");
  require(rho.size() == a.num_ues, "combiner: power count mismatch");
  require(sigma2 > 0.0, "combiner: noise power must be positive");
  Eigen::MatrixXcd v = Eigen::MatrixXcd::Zero(h_hat.rows(), h_hat.cols());

  std::vector<Eigen::MatrixXcd> own_base;
  if (id == Combiner::lp_mmse && base == nullptr) {
    own_base = lp_mmse_base(st, rho, a, sigma2);
    base = &own_base;
  }

  for (std::size_t l = 0; l < a.num_aps; ++l) {
    const auto& served = a.served_ues[l];
    if (served.empty()) continue;
    const auto row = static_cast<Eigen::Index>(l) * n;
    if (id == Combiner::mrc) {
      for (auto k : served)
        v.block(row, static_cast<Eigen::Index>(k), n, 1) = h_hat.block(row, static_cast<Eigen::Index>(k), n, 1);
    } else {
      Eigen::MatrixXcd z = (*base)[l];
      Eigen::MatrixXcd rhs(n, static_cast<Eigen::Index>(served.size()));
      for (std::size_t j = 0; j < served.size(); ++j) {
        const auto k = served[j];
        const auto hk = h_hat.block(row, static_cast<Eigen::Index>(k), n, 1);
        z.noalias() += rho[k] * (hk * hk.adjoint());
        rhs.col(static_cast<Eigen::Index>(j)) = rho[k] * hk;
      }
      Eigen::LLT<Eigen::MatrixXcd> llt(hermitian_part(z));
      if (llt.info() != Eigen::Success) throw NumericalError("combiner: LP-MMSE system is not positive definite");
      const Eigen::MatrixXcd sol = llt.solve(rhs);
      for (std::size_t j = 0; j < served.size(); ++j)
        v.block(row, static_cast<Eigen::Index>(served[j]), n, 1) = sol.col(static_cast<Eigen::Index>(j));
    }
    for (auto k : served) {
      const auto& mask = a.mask(k, l);
      for (Eigen::Index i = 0; i < n; ++i)
        if (mask(i) == 0) v(row + i, static_cast<Eigen::Index>(k)) = 0.0;
    }
  }
  return v;
}

// Running ensemble sums for the use-and-then-forget SINR. With g_ki = v_k^H D_k h_i:
//   gain_sum(k)      = sum over samples of g_kk
//   second_sum(k, i) = sum of |g_ki|^2
//   norm_sum(k)      = sum of ||D_k v_k||^2
struct SinrMoments {
  Eigen::VectorXcd gain_sum;
  Eigen::MatrixXd second_sum;
  Eigen::VectorXd norm_sum;
  std::size_t count = 0;

  explicit SinrMoments(std::size_t num_ues = 0) { reset(num_ues); }

  void reset(std::size_t num_ues) {
    const auto k = static_cast<Eigen::Index>(num_ues);
    gain_sum = Eigen::VectorXcd::Zero(k);
    second_sum = Eigen::MatrixXd::Zero(k, k);
    norm_sum = Eigen::VectorXd::Zero(k);
    count = 0;
  }

  // `v` must already be masked (columns D_k v_k); `h` holds the true channels.
  void add(const Eigen::MatrixXcd& v, const Eigen::MatrixXcd& h) {
    const Eigen::MatrixXcd g = v.adjoint() * h;  // g(k, i) = v_k^H D_k h_i
    gain_sum += g.diagonal();
    second_sum += g.cwiseAbs2();
    norm_sum += v.colwise().squaredNorm().transpose();
    ++count;
  }

  void merge(const SinrMoments& o) {
    gain_sum += o.gain_sum;
    second_sum += o.second_sum;
    norm_sum += o.norm_sum;
    count += o.count;
  }
};

struct UeSinr {
  double signal_power = 0.0;
  double interference_power = 0.0;  // includes the self-variance term
  double noise_power = 0.0;
  double sinr = 0.0;
  double se = 0.0;
};

struct SinrReport {
  std::vector<UeSinr> ues;
  std::size_t ensemble_size = 0;
  std::size_t clamped_count = 0;  // negative interference estimates clamped to 0
};

//   SINR_k = rho_k |E{g_kk}|^2 /
//            (sum_i rho_i E{|g_ki|^2} - rho_k |E{g_kk}|^2 + sigma^2 E{||D_k v_k||^2})
inline SinrReport sinr_from_moments(const SinrMoments& m, const std::vector<double>& rho, double sigma2,
                                    const channel::FrameConfig& frame) {
  require(m.count >= 1, "SINR: empty ensemble");
  require(rho.size() == static_cast<std::size_t>(m.gain_sum.size()), "SINR: power count mismatch");
  const double inv = 1.0 / static_cast<double>(m.count);
  SinrReport rep;
  rep.ensemble_size = m.count;
  rep.ues.resize(rho.size());
  for (std::size_t k = 0; k < rho.size(); ++k) {
    require(rho[k] >= 0.0, "SINR: negative power");
    const auto kk = static_cast<Eigen::Index>(k);
    UeSinr& u = rep.ues[k];
    const double mean_gain2 = std::norm(m.gain_sum(kk) * inv);
    u.signal_power = rho[k] * mean_gain2;
    double total = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) total += rho[i] * m.second_sum(kk, static_cast<Eigen::Index>(i)) * inv;
    u.interference_power = total - u.signal_power;
    if (u.interference_power < 0.0) {
      u.interference_power = 0.0;
      ++rep.clamped_count;
    }
    u.noise_power = sigma2 * m.norm_sum(kk) * inv;
    const double denom = u.interference_power + u.noise_power;
    u.sinr = denom > 0.0 ? u.signal_power / denom : 0.0;
    u.se = spectral_efficiency(u.sinr, frame);
  }
  return rep;
}

namespace detail {

constexpr std::size_t kChunk = 256;

// Runs fn(chunk_index) for every chunk on up to `threads` workers. Callers
// write into per-chunk slots and reduce in chunk order, so results do not
// depend on the thread count.
template <typename Fn>
void for_each_chunk(std::size_t chunks, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, chunks));
  if (threads == 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < chunks; c += threads) fn(c);
    });
  for (auto& t : pool) t.join();
}

inline std::size_t default_threads() {
  const auto hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace detail

// Accumulates SINR moments for several power profiles in one pass over the
// ensemble; every profile sees the same channel realizations.
inline std::vector<SinrMoments> monte_carlo_moments(const channel::ChannelEnsemble& ens, Combiner id,
                                                    const std::vector<std::vector<double>>& profiles,
                                                    std::size_t threads = detail::default_threads()) {
  const auto& a = ens.assignment();
  const double sigma2 = ens.frame().noise_power;
  for (const auto& rho : profiles) {
    require(rho.size() == a.num_ues, "monte carlo: power count mismatch");
    for (double p : rho) require(p >= 0.0, "monte carlo: negative power");
  }
  std::vector<std::vector<Eigen::MatrixXcd>> bases;
  if (id == Combiner::lp_mmse)
    for (const auto& rho : profiles) bases.push_back(lp_mmse_base(ens.stats(), rho, a, sigma2));

  const std::vector<double> unit_powers(a.num_ues, 1.0);  // MRC ignores powers
  const std::size_t chunks = (ens.size() + detail::kChunk - 1) / detail::kChunk;
  std::vector<std::vector<SinrMoments>> partial(chunks,
                                                std::vector<SinrMoments>(profiles.size(), SinrMoments(a.num_ues)));
  detail::for_each_chunk(chunks, threads, [&](std::size_t c) {
    channel::ChannelSample smp;
    const std::size_t end = std::min(ens.size(), (c + 1) * detail::kChunk);
    Eigen::MatrixXcd mrc;
    for (std::size_t s = c * detail::kChunk; s < end; ++s) {
      ens.sample(s, smp);
      if (id == Combiner::mrc) mrc = build_combiner(Combiner::mrc, smp.h_hat, unit_powers, a, ens.stats(), sigma2);
      for (std::size_t p = 0; p < profiles.size(); ++p) {
        if (id == Combiner::mrc) {
          partial[c][p].add(mrc, smp.h);
        } else {
          partial[c][p].add(build_combiner(id, smp.h_hat, profiles[p], a, ens.stats(), sigma2, &bases[p]), smp.h);
        }
      }
    }
  });
  std::vector<SinrMoments> out(profiles.size(), SinrMoments(a.num_ues));
  for (std::size_t c = 0; c < chunks; ++c)
    for (std::size_t p = 0; p < profiles.size(); ++p) out[p].merge(partial[c][p]);
  return out;
}

inline std::vector<SinrReport> monte_carlo_sinr(const channel::ChannelEnsemble& ens, Combiner id,
                                                const std::vector<std::vector<double>>& profiles,
                                                std::size_t threads = detail::default_threads()) {
  const auto moments = monte_carlo_moments(ens, id, profiles, threads);
  std::vector<SinrReport> out;
  out.reserve(profiles.size());
  for (std::size_t p = 0; p < profiles.size(); ++p)
    out.push_back(sinr_from_moments(moments[p], profiles[p], ens.frame().noise_power, ens.frame()));
  return out;
}

inline SinrReport monte_carlo_sinr(const channel::ChannelEnsemble& ens, Combiner id, const std::vector<double>& rho,
                                   std::size_t threads = detail::default_threads()) {
  return monte_carlo_sinr(ens, id, std::vector<std::vector<double>>{rho}, threads).front();
}

}  // namespace cfgame::receiver
