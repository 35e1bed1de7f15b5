// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfgame/common.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

namespace cfgame::propagation {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

enum class CorrelationModel { uncorrelated, local_scattering };

inline CorrelationModel parse_correlation_model(std::string_view id) {
  if (id == "uncorrelated") return CorrelationModel::uncorrelated;
  if (id == "local_scattering") return CorrelationModel::local_scattering;
  throw ValidationError("unknown correlation model '" + std::string(id) + "'");
}

inline std::string to_string(CorrelationModel m) {
  return m == CorrelationModel::uncorrelated ? "uncorrelated" : "local_scattering";
}

// Log-distance path loss with log-normal shadowing:
//   beta_dB = intercept_db - slope_db * log10(max(d, min_distance)) + z,  z ~ N(0, shadow_sigma_db^2)
struct PathLossModel {
  double intercept_db = -30.5;
  double slope_db = 36.7;
  double shadow_sigma_db = 4.0;
  double min_distance_m = 10.0;
};

struct LayoutConfig {
  double area_side = 2000.0;
  std::size_t num_aps = 25;
  std::size_t antennas_per_ap = 4;
  std::size_t num_ues = 10;
  std::uint64_t rng_seed = 1;
  PathLossModel path_loss{};
  CorrelationModel correlation = CorrelationModel::uncorrelated;
  // Angular standard deviation (radians) for the local-scattering model.
  double angular_std_rad = 10.0 * std::numbers::pi / 180.0;
  // Antenna spacing in wavelengths for the local-scattering model.
  double antenna_spacing = 0.5;

  void validate() const {
    require(area_side > 0.0, "layout: area_side must be positive");
    require(num_aps >= 1, "layout: need at least one AP");
    require(antennas_per_ap >= 1, "layout: need at least one antenna per AP");
    require(num_ues >= 2, "layout: need at least two UEs");
    require(path_loss.min_distance_m > 0.0, "layout: min_distance_m must be positive");
    require(path_loss.shadow_sigma_db >= 0.0, "layout: shadow_sigma_db must be non-negative");
  }
};

struct Layout {
  double area_side = 0.0;
  std::vector<Point> ap_positions;
  std::vector<Point> ue_positions;
};

// APs are drawn first, then UEs, each i.i.d. uniform on [0, side)^2. Because
// UEs are drawn in sequence, the layout for K UEs is a prefix of the layout
// for any K' > K under the same seed.
inline Layout generate_layout(const LayoutConfig& config, Rng& rng) {
  config.validate();
  std::uniform_real_distribution<double> u(0.0, config.area_side);
  auto draw = [&] {
    Point p;
    p.x = u(rng);
    p.y = u(rng);
    // uniform_real_distribution may return the upper bound after rounding
    if (p.x >= config.area_side) p.x = 0.0;
    if (p.y >= config.area_side) p.y = 0.0;
    return p;
  };
  Layout out;
  out.area_side = config.area_side;
  out.ap_positions.reserve(config.num_aps);
  out.ue_positions.reserve(config.num_ues);
  for (std::size_t l = 0; l < config.num_aps; ++l) out.ap_positions.push_back(draw());
  for (std::size_t k = 0; k < config.num_ues; ++k) out.ue_positions.push_back(draw());
  return out;
}

// Offset from p to the nearest torus image of q.
inline Point wrap_offset(Point p, Point q, double side) {
  Point best{q.x - p.x, q.y - p.y};
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int dx = -1; dx <= 1; ++dx) {
    for (int dy = -1; dy <= 1; ++dy) {
      const double ox = q.x + dx * side - p.x;
      const double oy = q.y + dy * side - p.y;
      const double d2 = ox * ox + oy * oy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = {ox, oy};
      }
    }
  }
  return best;
}

inline double wrap_distance(Point p, Point q, double side) {
  const Point o = wrap_offset(p, q, side);
  return std::hypot(o.x, o.y);
}

inline double path_loss_db(double distance, const PathLossModel& model) {
  require(distance >= 0.0, "path loss: negative distance");
  const double d = std::max(distance, model.min_distance_m);
  return model.intercept_db - model.slope_db * std::log10(d);
}

inline double large_scale_gain(double distance, const PathLossModel& model, Rng& rng) {
  double db = path_loss_db(distance, model);
  if (model.shadow_sigma_db > 0.0) {
    std::normal_distribution<double> z(0.0, model.shadow_sigma_db);
    db += z(rng);
  }
  return db_to_linear(db);
}

// N x N spatial correlation with tr(R)/N = beta.
//
// local_scattering uses the Gaussian small-angle approximation for a uniform
// linear array: R(m,n) = beta * exp(j 2 pi d (m-n) sin(phi)) *
// exp(-sigma^2/2 * (2 pi d (m-n) cos(phi))^2). The diagonal is exactly beta.
inline Eigen::MatrixXcd spatial_correlation(double beta, CorrelationModel model, std::size_t n,
                                            double nominal_angle = 0.0,
                                            double angular_std = 0.0,
                                            double antenna_spacing = 0.5) {
  require(beta > 0.0, "spatial correlation: beta must be positive");
  require(n >= 1, "spatial correlation: need at least one antenna");
  const auto N = static_cast<Eigen::Index>(n);
  if (model == CorrelationModel::uncorrelated) {
    return Eigen::MatrixXcd::Identity(N, N) * beta;
  }
  Eigen::MatrixXcd r(N, N);
  const double two_pi_d = 2.0 * std::numbers::pi * antenna_spacing;
  for (Eigen::Index m = 0; m < N; ++m) {
    for (Eigen::Index c = 0; c < N; ++c) {
      const double dist = static_cast<double>(m - c);
      const double phase = two_pi_d * dist * std::sin(nominal_angle);
      const double spread = two_pi_d * dist * std::cos(nominal_angle) * angular_std;
      r(m, c) = beta * std::polar(std::exp(-0.5 * spread * spread), phase);
    }
  }
  return hermitian_part(r);
}

// Large-scale statistics for every (UE k, AP l) pair.
struct LargeScaleState {
  std::size_t num_ues = 0;
  std::size_t num_aps = 0;
  std::size_t antennas = 0;
  Eigen::MatrixXd beta;                 // K x L
  std::vector<Eigen::MatrixXcd> corr;   // row-major over (k, l)
  bool diagonal = true;                 // every R_kl is diagonal

  const Eigen::MatrixXcd& R(std::size_t k, std::size_t l) const { return corr[k * num_aps + l]; }

  // Block-diagonal collective correlation diag(R_k1, ..., R_kL).
  Eigen::MatrixXcd collective(std::size_t k) const {
    const auto n = static_cast<Eigen::Index>(antennas);
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n * static_cast<Eigen::Index>(num_aps),
                                                  n * static_cast<Eigen::Index>(num_aps));
    for (std::size_t l = 0; l < num_aps; ++l) {
      out.block(static_cast<Eigen::Index>(l) * n, static_cast<Eigen::Index>(l) * n, n, n) = R(k, l);
    }
    return out;
  }
};

// Builds beta and R from a layout. Shadowing for link (k, l) is drawn from its
// own stream keyed by (seed, k, l).
inline LargeScaleState large_scale_state(const Layout& layout, const LayoutConfig& config,
                                         std::uint64_t seed) {
  config.validate();
  require(layout.ap_positions.size() == config.num_aps, "large scale: AP count mismatch");
  require(layout.ue_positions.size() == config.num_ues, "large scale: UE count mismatch");
  LargeScaleState s;
  s.num_ues = config.num_ues;
  s.num_aps = config.num_aps;
  s.antennas = config.antennas_per_ap;
  s.beta.resize(static_cast<Eigen::Index>(s.num_ues), static_cast<Eigen::Index>(s.num_aps));
  s.corr.reserve(s.num_ues * s.num_aps);
  s.diagonal = config.correlation == CorrelationModel::uncorrelated;
  for (std::size_t k = 0; k < s.num_ues; ++k) {
    for (std::size_t l = 0; l < s.num_aps; ++l) {
      Rng rng = make_rng(seed, {0x5ad0ULL, k, l});
      const Point off = wrap_offset(layout.ap_positions[l], layout.ue_positions[k], layout.area_side);
      const double d = std::hypot(off.x, off.y);
      const double b = large_scale_gain(d, config.path_loss, rng);
      s.beta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = b;
      s.corr.push_back(spatial_correlation(b, config.correlation, config.antennas_per_ap,
                                           std::atan2(off.y, off.x), config.angular_std_rad,
                                           config.antenna_spacing));
    }
  }
  return s;
}

// Builds a LargeScaleState directly from a gain matrix (uncorrelated model).
inline LargeScaleState from_gains(const Eigen::MatrixXd& beta, std::size_t antennas) {
  require(beta.rows() >= 1 && beta.cols() >= 1, "from_gains: empty gain matrix");
  require((beta.array() > 0.0).all(), "from_gains: gains must be positive");
  LargeScaleState s;
  s.num_ues = static_cast<std::size_t>(beta.rows());
  s.num_aps = static_cast<std::size_t>(beta.cols());
  s.antennas = antennas;
  s.beta = beta;
  s.diagonal = true;
  for (std::size_t k = 0; k < s.num_ues; ++k)
    for (std::size_t l = 0; l < s.num_aps; ++l)
      s.corr.push_back(spatial_correlation(beta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)),
                                           CorrelationModel::uncorrelated, antennas));
  return s;
}

}  // namespace cfgame::propagation
