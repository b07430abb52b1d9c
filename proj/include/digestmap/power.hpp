// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

// Site power production from total detected tank area (ordinary least
// squares) and regional aggregation.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "digestmap/detection.hpp"
#include "digestmap/partscore.hpp"

namespace digestmap::power {

struct SiteFeature {
  std::string site_id;
  double tank_area = 0.0;  // m^2
  std::optional<double> power_kw;
};

struct RegressionFit {
  double slope = 0.0;      // kW per m^2
  double intercept = 0.0;  // kW
  double r2 = 0.0;
  std::size_t n = 0;
  bool with_intercept = true;

  double predict(double tank_area) const { return slope * tank_area + intercept; }
};

/// Sum of width*height over the tanks contained in `site`.
double tank_area(const det::Detection& site, std::span<const det::Detection> tanks,
                 parts::Containment mode = parts::Containment::center_in);

/// Tank area of every site detection, using the exclusive part assignment
/// of the rescoring step.
std::vector<SiteFeature> site_features(std::span<const det::Detection> sites,
                                       std::span<const det::Detection> parts,
                                       parts::Containment mode = parts::Containment::center_in);

/// Closed-form OLS over features with known power. With an intercept,
/// r2 = 1 - SS_res/SS_tot (centered); through the origin the uncentered
/// total sum of squares is used. Throws FitError on n < 2 or no spread in x.
RegressionFit fit_linear(std::span<const SiteFeature> features, bool with_intercept = true);

/// Sum of per-site predictions, each clamped at zero.
double aggregate_power(const RegressionFit& fit, std::span<const SiteFeature> features);

/// CSV `site_id,tank_area_m2,power_kw`; power blank when unknown.
std::vector<SiteFeature> read_features(const std::filesystem::path& path);
std::string features_csv(std::span<const SiteFeature> features);
void write_features(std::span<const SiteFeature> features, const std::filesystem::path& path);

std::string fit_to_text(const RegressionFit& fit);
RegressionFit fit_from_text(const std::string& text);

}  // namespace digestmap::power
