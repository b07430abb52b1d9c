// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic regions with known ground truth and simulated detector output,
// plus brute-force reference computations used to check the fast paths.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "digestmap/detection.hpp"
#include "digestmap/partscore.hpp"

namespace digestmap::sim {

struct BetaLaw {
  double a = 1.0;
  double b = 1.0;
};

struct DetectorModel {
  double site_tpr = 0.95;
  double part_tpr = 0.8;
  double fp_rate_per_km2 = 0.05;
  BetaLaw tp_score{5.0, 2.0};
  BetaLaw fp_score{2.0, 5.0};
  double jitter_sigma_m = 20.0;
};

struct Scenario {
  std::uint64_t seed = 42;
  double origin_x = 700000.0;
  double origin_y = 6800000.0;
  double extent_x_m = 50000.0;
  double extent_y_m = 50000.0;
  std::size_t n_sites = 50;
  double min_separation_m = 500.0;
  double tile_size_m = 1000.0;
  std::string crs = "EPSG:2154";
  /// Part counts of real sites.
  parts::CountPrior count_prior = parts::CountPrior::constant(0.0, 0);
  /// Part counts found inside false site detections.
  parts::CountPrior background_prior = parts::CountPrior::constant(0.0, 0);
  DetectorModel detector;

  /// 50 sites over 50 x 50 km, seed 42, part counts from the training
  /// histograms (empirical prior), default detector model.
  static Scenario standard();
};

/// Independent per-class counts with P(0) = `p_zero` and a geometric tail
/// P(n) = (1 - p_zero) (1 - ratio) ratio^(n-1) for n >= 1.
parts::CountPrior background_count_prior(double p_zero = 0.9, double ratio = 0.5,
                                         int cap = parts::kDefaultCap);

struct Scene {
  std::vector<det::GroundTruthSite> gts;
  std::vector<det::Detection> dets;  // sites, tanks and piles
  /// Real (tanks, piles) per GT site, aligned with `gts`.
  std::vector<std::pair<int, int>> true_counts;
};

/// Deterministic given `sc.seed`. Throws GenerationError when the sites
/// cannot be placed at the required separation.
Scene generate(const Scenario& sc);

/// Literal subset enumeration of the Poisson-binomial pmf; refuses n > 12.
parts::CountDistribution enumerate_poisson_binomial(std::span<const double> p);

inline constexpr std::size_t kMaxEnumeration = 12;

// --- config file ---

std::string scenario_to_text(const Scenario& sc);
Scenario scenario_from_text(const std::string& text);
Scenario read_scenario(const std::filesystem::path& path);

}  // namespace digestmap::sim
