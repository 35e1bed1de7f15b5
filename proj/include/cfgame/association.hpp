// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfgame/common.hpp"

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

namespace cfgame::association {

enum class Scenario { cell_free, small_cell, massive_mimo };

inline Scenario parse_scenario(std::string_view id) {
  if (id == "cell_free") return Scenario::cell_free;
  if (id == "small_cell") return Scenario::small_cell;
  if (id == "massive_mimo") return Scenario::massive_mimo;
  throw ValidationError("unknown scenario '" + std::string(id) + "'");
}

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::cell_free: return "cell_free";
    case Scenario::small_cell: return "small_cell";
    case Scenario::massive_mimo: return "massive_mimo";
  }
  return "unknown";
}

struct ClusterAssignment {
  std::size_t num_ues = 0;
  std::size_t num_aps = 0;
  std::size_t antennas = 0;
  std::size_t tau_p = 0;
  std::vector<std::size_t> pilot_of;                 // per UE
  std::vector<std::vector<std::size_t>> serving_aps; // M_k, sorted
  std::vector<std::vector<std::size_t>> served_ues;  // D_l, sorted
  Eigen::MatrixXi selection;                         // A, K x L
  std::vector<std::size_t> master_ap;                // per UE
  // Diagonal of D_kl (1 = antenna n of AP l decodes UE k), row-major over (k, l).
  std::vector<Eigen::VectorXi> antenna_masks;

  bool serves(std::size_t k, std::size_t l) const {
    return selection(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) == 1;
  }
  const Eigen::VectorXi& mask(std::size_t k, std::size_t l) const {
    return antenna_masks[k * num_aps + l];
  }
  // Co-pilot set S_t.
  std::vector<std::size_t> copilot_set(std::size_t t) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < num_ues; ++k)
      if (pilot_of[k] == t) out.push_back(k);
    return out;
  }
};

namespace detail {

inline std::size_t argmax_row(const Eigen::MatrixXd& beta, std::size_t k) {
  Eigen::Index best = 0;
  const auto row = beta.row(static_cast<Eigen::Index>(k));
  for (Eigen::Index l = 1; l < row.size(); ++l)
    if (row(l) > row(best)) best = l;
  return static_cast<std::size_t>(best);
}

// Fills D_l, A and the antenna masks from M_k.
inline void finalize(ClusterAssignment& a) {
  a.served_ues.assign(a.num_aps, {});
  a.selection = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(a.num_ues),
                                      static_cast<Eigen::Index>(a.num_aps));
  a.antenna_masks.assign(a.num_ues * a.num_aps,
                         Eigen::VectorXi::Zero(static_cast<Eigen::Index>(a.antennas)));
  for (std::size_t k = 0; k < a.num_ues; ++k) {
    std::sort(a.serving_aps[k].begin(), a.serving_aps[k].end());
    for (auto l : a.serving_aps[k]) {
      a.selection(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = 1;
      a.antenna_masks[k * a.num_aps + l].setOnes();
      a.served_ues[l].push_back(k);
    }
  }
}

}  // namespace detail

// Pilot assignment and cluster formation.
//
//  1. Master AP of UE k is argmax_l beta_kl (lowest index on ties).
//  2. UEs are visited in decreasing order of their master gain. Each picks,
//     among pilots not already used by a UE with the same master AP, the one
//     with least co-pilot gain sum_{i in S_t} beta_{i, master(k)} at its master
//     AP (lowest pilot index on ties). If every pilot is already taken at that
//     master AP, the least-interference pilot overall is used.
//  3. cell_free: every AP l additionally serves, per pilot t, the strongest UE
//     in S_t, unless some UE in S_t already has l as its master. small_cell and
//     massive_mimo keep M_k = {master(k)}.
//
// Visiting UEs in decreasing master gain guarantees that a UE processed later
// never beats an earlier one at that earlier UE's master AP.
inline ClusterAssignment assign_pilots_and_clusters(const Eigen::MatrixXd& beta, std::size_t tau_p,
                                                    Scenario scenario, std::size_t antennas = 1) {
  require(tau_p >= 1, "association: tau_p must be at least 1");
  require(beta.rows() >= 1 && beta.cols() >= 1, "association: empty gain matrix");
  require((beta.array() > 0.0).all(), "association: gains must be strictly positive");
  require(antennas >= 1, "association: need at least one antenna");

  ClusterAssignment a;
  a.num_ues = static_cast<std::size_t>(beta.rows());
  a.num_aps = static_cast<std::size_t>(beta.cols());
  a.antennas = antennas;
  a.tau_p = tau_p;
  a.master_ap.resize(a.num_ues);
  a.pilot_of.assign(a.num_ues, tau_p);  // tau_p marks "unassigned"
  a.serving_aps.assign(a.num_ues, {});

  for (std::size_t k = 0; k < a.num_ues; ++k) a.master_ap[k] = detail::argmax_row(beta, k);

  auto master_gain = [&](std::size_t k) {
    return beta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(a.master_ap[k]));
  };
  std::vector<std::size_t> order(a.num_ues);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return master_gain(i) > master_gain(j); });

  for (auto k : order) {
    const std::size_t m = a.master_ap[k];
    std::vector<double> interference(tau_p, 0.0);
    std::vector<bool> taken_at_master(tau_p, false);
    for (std::size_t i = 0; i < a.num_ues; ++i) {
      if (a.pilot_of[i] == tau_p) continue;
      interference[a.pilot_of[i]] += beta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m));
      if (a.master_ap[i] == m) taken_at_master[a.pilot_of[i]] = true;
    }
    auto pick = [&](bool respect_master) {
      std::size_t best = tau_p;
      for (std::size_t t = 0; t < tau_p; ++t) {
        if (respect_master && taken_at_master[t]) continue;
        if (best == tau_p || interference[t] < interference[best]) best = t;
      }
      return best;
    };
    std::size_t t = pick(true);
    if (t == tau_p) t = pick(false);
    a.pilot_of[k] = t;
    a.serving_aps[k].push_back(m);
  }

  if (scenario == Scenario::cell_free) {
    for (std::size_t l = 0; l < a.num_aps; ++l) {
      for (std::size_t t = 0; t < tau_p; ++t) {
        bool master_here = false;
        std::size_t strongest = a.num_ues;
        for (std::size_t k = 0; k < a.num_ues; ++k) {
          if (a.pilot_of[k] != t) continue;
          if (a.master_ap[k] == l) master_here = true;
          if (strongest == a.num_ues ||
              beta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) >
                  beta(static_cast<Eigen::Index>(strongest), static_cast<Eigen::Index>(l)))
            strongest = k;
        }
        if (master_here || strongest == a.num_ues) continue;
        a.serving_aps[strongest].push_back(l);
      }
    }
  }
  detail::finalize(a);
  return a;
}

// Builds an assignment from explicit serving sets and pilots (tests, custom instances).
inline ClusterAssignment from_clusters(std::vector<std::vector<std::size_t>> serving,
                                       std::vector<std::size_t> pilots, std::size_t num_aps,
                                       std::size_t tau_p, std::size_t antennas,
                                       const Eigen::MatrixXd* beta = nullptr) {
  require(serving.size() == pilots.size(), "from_clusters: size mismatch");
  ClusterAssignment a;
  a.num_ues = serving.size();
  a.num_aps = num_aps;
  a.antennas = antennas;
  a.tau_p = tau_p;
  a.pilot_of = std::move(pilots);
  a.serving_aps = std::move(serving);
  a.master_ap.resize(a.num_ues);
  for (std::size_t k = 0; k < a.num_ues; ++k) {
    require(!a.serving_aps[k].empty(), "from_clusters: empty serving set");
    require(a.pilot_of[k] < tau_p, "from_clusters: pilot index out of range");
    for (auto l : a.serving_aps[k]) require(l < num_aps, "from_clusters: AP index out of range");
    a.master_ap[k] = a.serving_aps[k].front();
    if (beta != nullptr) {
      for (auto l : a.serving_aps[k])
        if ((*beta)(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) >
            (*beta)(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(a.master_ap[k])))
          a.master_ap[k] = l;
    }
  }
  detail::finalize(a);
  return a;
}

// Sum of gains over the serving cluster of UE k.
inline double effective_cluster_gain(const Eigen::MatrixXd& beta, const ClusterAssignment& a,
                                     std::size_t k) {
  require(k < a.num_ues, "cluster gain: UE index out of range");
  require(!a.serving_aps[k].empty(), "cluster gain: empty serving cluster");
  double sum = 0.0;
  for (auto l : a.serving_aps[k]) sum += beta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
  return sum;
}

inline std::vector<double> cluster_gains(const Eigen::MatrixXd& beta, const ClusterAssignment& a) {
  std::vector<double> out(a.num_ues);
  for (std::size_t k = 0; k < a.num_ues; ++k) out[k] = effective_cluster_gain(beta, a, k);
  return out;
}

}  // namespace cfgame::association
