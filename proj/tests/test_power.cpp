// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "digestmap/error.hpp"
#include "digestmap/jsonio.hpp"
#include "digestmap/power.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace digestmap;
using namespace digestmap::power;

namespace {

std::vector<SiteFeature> points(const std::vector<std::pair<double, double>>& xy) {
  std::vector<SiteFeature> out;
  for (std::size_t i = 0; i < xy.size(); ++i) out.push_back({"s" + std::to_string(i), xy[i].first, xy[i].second});
  return out;
}

std::vector<SiteFeature> random_features(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> area(50, 3000), noise(-300, 300);
  std::vector<std::pair<double, double>> xy;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = area(rng), e = noise(rng);
    xy.emplace_back(x, 0.4 * x + 100 + e);
  }
  return points(xy);
}

}  // namespace

TEST_CASE("tank area") {
  const auto site = fixture::site("s", 0, 0, 0.9);
  CHECK(tank_area(site, {}) == 0.0);
  std::vector<det::Detection> tanks{fixture::make("a", det::DetClass::tank, 10, 10, 0.9, 10, 10),
                                    fixture::make("b", det::DetClass::tank, -10, 0, 0.8, 5, 4),
                                    fixture::make("far", det::DetClass::tank, 400, 0, 0.8, 30, 30)};
  CHECK(tank_area(site, tanks) == doctest::Approx(120.0));

  const std::vector<det::Detection> sites{site, fixture::site("empty", 5000, 0, 0.5)};
  const auto features = site_features(sites, tanks);
  REQUIRE(features.size() == 2);
  CHECK(features[0].tank_area == doctest::Approx(120.0));
  CHECK(features[1].tank_area == 0.0);
  CHECK_FALSE(features[0].power_kw);
}

TEST_CASE("ordinary least squares") {
  const auto line = fit_linear(points({{0, 1}, {1, 3}, {2, 5}, {5, 11}}));
  CHECK(line.slope == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(line.intercept == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(line.r2 == doctest::Approx(1.0).epsilon(1e-14));

  // Sxx = 2, Sxy = 1, Syy = 2/3.
  const auto fit = fit_linear(points({{1, 1}, {2, 2}, {3, 2}}));
  CHECK(std::abs(fit.slope - 0.5) <= 1e-12);
  CHECK(std::abs(fit.intercept - 2.0 / 3.0) <= 1e-12);
  CHECK(std::abs(fit.r2 - 0.75) <= 1e-12);
  CHECK(fit.n == 3);

  // Through the origin: slope = Σxy / Σx², r2 uncentered.
  const auto origin = fit_linear(points({{1, 1}, {2, 2}, {3, 2}}), false);
  CHECK(origin.slope == doctest::Approx(11.0 / 14.0));
  CHECK(origin.intercept == 0.0);
  const double ss_res = std::pow(1 - 11.0 / 14, 2) + std::pow(2 - 22.0 / 14, 2) + std::pow(2 - 33.0 / 14, 2);
  CHECK(origin.r2 == doctest::Approx(1 - ss_res / 9.0));

  CHECK_THROWS_AS(fit_linear(points({{1, 1}})), FitError);
  CHECK_THROWS_AS(fit_linear(points({{2, 1}, {2, 5}, {2, 3}})), FitError);
  // Sites without measured power are left out of the fit.
  auto partial = points({{1, 1}, {2, 2}, {3, 2}});
  partial.push_back({"unknown", 100.0, std::nullopt});
  CHECK(fit_linear(partial).n == 3);
}

TEST_CASE("residuals are orthogonal to x") {
  std::mt19937_64 rng(40);
  for (int trial = 0; trial < 50; ++trial) {
    const auto f = random_features(rng, 5 + trial);
    const auto fit = fit_linear(f);
    double mean = 0.0;
    for (const auto& s : f) mean += s.tank_area;
    mean /= static_cast<double>(f.size());
    double dot = 0.0, scale = 0.0;
    for (const auto& s : f) {
      const double r = *s.power_kw - fit.predict(s.tank_area);
      dot += (s.tank_area - mean) * r;
      scale += std::abs((s.tank_area - mean) * *s.power_kw);
    }
    CHECK(std::abs(dot) <= 1e-9 * scale);
  }
}

TEST_CASE("r2 does not depend on the area unit") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    auto f = random_features(rng, 20);
    const double r2 = fit_linear(f).r2;
    for (auto& s : f) s.tank_area = s.tank_area * 1e-4 + 3.0;
    CHECK(std::abs(fit_linear(f).r2 - r2) <= 1e-12);
  }
}

TEST_CASE("aggregate power") {
  const RegressionFit unit{1.0, 0.0, 1.0, 2, true};
  CHECK(aggregate_power(unit, {}) == 0.0);
  CHECK(aggregate_power(unit, points({{100, 0}, {200, 0}})) == 300.0);
  const RegressionFit negative{1.0, -50.0, 1.0, 2, true};
  CHECK(aggregate_power(negative, points({{10, 0}})) == 0.0);
  CHECK(aggregate_power(negative, points({{10, 0}, {80, 0}})) == 30.0);

  std::mt19937_64 rng(42);
  const auto f = random_features(rng, 40);
  const std::vector<SiteFeature> left(f.begin(), f.begin() + 17), right(f.begin() + 17, f.end());
  CHECK(aggregate_power(negative, f) ==
        doctest::Approx(aggregate_power(negative, left) + aggregate_power(negative, right)).epsilon(1e-12));
}

TEST_CASE("files") {
  const auto dir = oracle::scratch_dir("power_files");
  auto f = points({{120.5, 300}, {80, 150.25}});
  f.push_back({"nopower", 42.0, std::nullopt});
  write_features(f, dir / "f.csv");
  const auto back = read_features(dir / "f.csv");
  REQUIRE(back.size() == 3);
  CHECK(back[0].tank_area == 120.5);
  CHECK(back[1].power_kw == 150.25);
  CHECK_FALSE(back[2].power_kw);
  CHECK(features_csv(f).rfind("site_id,tank_area_m2,power_kw\n", 0) == 0);

  const auto fit = fit_linear(points({{1, 1}, {2, 2}, {3, 2}}));
  const auto again = fit_from_text(fit_to_text(fit));
  CHECK(again.slope == fit.slope);
  CHECK(again.intercept == fit.intercept);
  CHECK(again.r2 == fit.r2);
  CHECK(again.n == fit.n);

  jsonio::write_text(dir / "bad.csv", "site_id,tank_area_m2,power_kw\na,xx,1\n");
  CHECK_THROWS_AS(read_features(dir / "bad.csv"), DataError);
}
