// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "digestmap/simulation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

#include "digestmap/error.hpp"
#include "digestmap/jsonio.hpp"

namespace digestmap::sim {

Scenario Scenario::standard() {
  Scenario sc;
  sc.count_prior = parts::fit_empirical_prior(parts::training_tank_frequencies(),
                                              parts::training_pile_frequencies());
  sc.background_prior = background_count_prior();
  return sc;
}

parts::CountPrior background_count_prior(double p_zero, double ratio, int cap) {
  if (!(p_zero > 0.0 && p_zero <= 1.0) || !(ratio >= 0.0 && ratio < 1.0)) {
    throw ContractError("background prior: p_zero in (0,1], ratio in [0,1)");
  }
  std::vector<double> marginal(static_cast<std::size_t>(cap) + 1, 0.0);
  marginal[0] = p_zero;
  for (int n = 1; n <= cap; ++n) {
    marginal[n] = (1.0 - p_zero) * (1.0 - ratio) * std::pow(ratio, n - 1);
  }
  return parts::fit_empirical_prior(marginal, marginal, 0.0, cap);
}

namespace {

constexpr double kPi = std::numbers::pi;

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(rng_); }
  double normal(double sigma) {
    return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(rng_) : 0.0;
  }
  std::size_t poisson(double mean) {
    return mean > 0.0 ? static_cast<std::size_t>(std::poisson_distribution<long long>(mean)(rng_)) : 0;
  }
  double beta(const BetaLaw& law) {
    const double x = std::gamma_distribution<double>(law.a, 1.0)(rng_);
    const double y = std::gamma_distribution<double>(law.b, 1.0)(rng_);
    return (x + y) > 0.0 ? x / (x + y) : 0.5;
  }
  std::size_t categorical(std::discrete_distribution<std::size_t>& d) { return d(rng_); }

 private:
  std::mt19937_64 rng_;
};

std::discrete_distribution<std::size_t> table_distribution(const parts::CountPrior& prior) {
  const auto& t = prior.table();
  if (!(prior.total() > 0.0)) throw GenerationError("count prior has no mass");
  return std::discrete_distribution<std::size_t>(t.begin(), t.end());
}

std::pair<int, int> draw_counts(Sampler& rng, std::discrete_distribution<std::size_t>& d,
                                const parts::CountPrior& prior) {
  const std::size_t cell = rng.categorical(d);
  const auto side = static_cast<std::size_t>(prior.cap()) + 1;
  return {static_cast<int>(cell / side), static_cast<int>(cell % side)};
}

class SceneBuilder {
 public:
  SceneBuilder(const Scenario& sc, Sampler& rng) : sc_(sc), rng_(rng) {}

  std::string tile_of(geom::GeoPoint p) const {
    const auto ix = static_cast<long long>(std::floor((p.x - sc_.origin_x) / sc_.tile_size_m));
    const auto iy = static_cast<long long>(std::floor((p.y - sc_.origin_y) / sc_.tile_size_m));
    return "tile_" + std::to_string(ix) + "_" + std::to_string(iy);
  }

  det::Detection& emit(det::DetClass cls, double score, const geom::OrientedBox& box) {
    char id[32];
    std::snprintf(id, sizeof id, "det-%06zu", ++det_counter_);
    det::Detection d;
    d.id = id;
    d.cls = cls;
    d.score = std::clamp(score, 0.0, 1.0);
    d.box = box;
    d.tile_id = tile_of(box.center());
    d.crs = sc_.crs;
    dets.push_back(std::move(d));
    return dets.back();
  }

  geom::OrientedBox random_site_box(geom::GeoPoint c) {
    const double w = rng_.uniform(120.0, 250.0);
    const double h = rng_.uniform(100.0, 200.0);
    const double a = rng_.uniform(-kPi / 2.0, kPi / 2.0);
    return geom::OrientedBox::make(c, w, h, a);
  }

  geom::OrientedBox random_part_box(det::DetClass cls, const geom::OrientedBox& site) {
    // Uniform placement over the inner 70% of the site box.
    const double u = rng_.uniform(-0.35, 0.35) * site.width();
    const double v = rng_.uniform(-0.35, 0.35) * site.height();
    const double c = std::cos(site.angle());
    const double s = std::sin(site.angle());
    return part_box_at(cls, {site.center().x + c * u - s * v, site.center().y + s * u + c * v});
  }

  geom::OrientedBox part_box_at(det::DetClass cls, geom::GeoPoint p) {
    if (cls == det::DetClass::tank) {
      const double d = rng_.uniform(15.0, 30.0);
      return geom::OrientedBox::make(p, d, d, 0.0);
    }
    const double w = rng_.uniform(40.0, 70.0);
    const double h = rng_.uniform(12.0, 20.0);
    const double a = rng_.uniform(-kPi / 2.0, kPi / 2.0);
    return geom::OrientedBox::make(p, w, h, a);
  }

  geom::OrientedBox jittered(const geom::OrientedBox& b) {
    const double sigma = sc_.detector.jitter_sigma_m;
    const double dx = rng_.normal(sigma);
    const double dy = rng_.normal(sigma);
    return b.translated(dx, dy);
  }

  geom::GeoPoint uniform_point() {
    const double x = sc_.origin_x + rng_.uniform(0.0, sc_.extent_x_m);
    const double y = sc_.origin_y + rng_.uniform(0.0, sc_.extent_y_m);
    return {x, y};
  }

  std::vector<det::Detection> dets;

 private:
  const Scenario& sc_;
  Sampler& rng_;
  std::size_t det_counter_ = 0;
};

std::vector<geom::GeoPoint> place_sites(const Scenario& sc, Sampler& rng) {
  std::vector<geom::GeoPoint> placed;
  if (sc.n_sites == 0) return placed;
  const double sep = sc.min_separation_m;
  // Random sequential packing stalls well below this density.
  const double disc = kPi * (sep / 2.0) * (sep / 2.0);
  if (static_cast<double>(sc.n_sites) * disc > 0.5 * sc.extent_x_m * sc.extent_y_m) {
    throw GenerationError("region too small for " + std::to_string(sc.n_sites) +
                          " sites at " + std::to_string(sep) + " m separation");
  }
  const double cell = std::max(sep, 1.0);
  std::unordered_map<long long, std::vector<std::size_t>> grid;
  auto key = [](long long ix, long long iy) { return ix * 1000003LL + iy; };
  const std::size_t max_attempts = 2000 * sc.n_sites + 10000;
  std::size_t attempts = 0;
  while (placed.size() < sc.n_sites) {
    if (++attempts > max_attempts) {
      throw GenerationError("could not place " + std::to_string(sc.n_sites) + " sites at " +
                            std::to_string(sep) + " m separation");
    }
    const double px = sc.origin_x + rng.uniform(0.0, sc.extent_x_m);
    const double py = sc.origin_y + rng.uniform(0.0, sc.extent_y_m);
    const geom::GeoPoint p{px, py};
    const auto ix = static_cast<long long>(std::floor((p.x - sc.origin_x) / cell));
    const auto iy = static_cast<long long>(std::floor((p.y - sc.origin_y) / cell));
    bool ok = true;
    for (long long dx = -1; dx <= 1 && ok; ++dx) {
      for (long long dy = -1; dy <= 1 && ok; ++dy) {
        auto it = grid.find(key(ix + dx, iy + dy));
        if (it == grid.end()) continue;
        for (std::size_t j : it->second) {
          if (geom::center_distance(p, placed[j]) < sep) {
            ok = false;
            break;
          }
        }
      }
    }
    if (!ok) continue;
    grid[key(ix, iy)].push_back(placed.size());
    placed.push_back(p);
  }
  return placed;
}

void check_scenario(const Scenario& sc) {
  const auto& m = sc.detector;
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!(sc.extent_x_m > 0.0 && sc.extent_y_m > 0.0)) throw ContractError("scenario: empty region");
  if (!prob(m.site_tpr) || !prob(m.part_tpr)) throw ContractError("scenario: tpr outside [0,1]");
  if (!(m.fp_rate_per_km2 >= 0.0)) throw ContractError("scenario: negative FP rate");
  if (!(m.tp_score.a > 0 && m.tp_score.b > 0 && m.fp_score.a > 0 && m.fp_score.b > 0)) {
    throw ContractError("scenario: Beta parameters must be positive");
  }
  if (!(m.jitter_sigma_m >= 0.0)) throw ContractError("scenario: negative jitter");
  if (!(sc.tile_size_m > 0.0)) throw ContractError("scenario: tile size must be positive");
}

}  // namespace

Scene generate(const Scenario& sc) {
  check_scenario(sc);
  Sampler rng(sc.seed);
  Scene scene;
  SceneBuilder b(sc, rng);
  const auto& model = sc.detector;

  const auto centers = place_sites(sc, rng);
  auto counts_dist = sc.n_sites > 0 ? table_distribution(sc.count_prior)
                                    : std::discrete_distribution<std::size_t>();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    det::GroundTruthSite gt;
    char id[32];
    std::snprintf(id, sizeof id, "gt-%04zu", i + 1);
    gt.id = id;
    gt.location = centers[i];
    gt.source = det::SiteSource::initial_db;
    const auto site_box = b.random_site_box(centers[i]);
    gt.boxes.emplace_back(det::DetClass::site, site_box);

    const auto [n_tanks, n_piles] = draw_counts(rng, counts_dist, sc.count_prior);
    scene.true_counts.emplace_back(n_tanks, n_piles);
    for (int k = 0; k < n_tanks + n_piles; ++k) {
      const auto cls = k < n_tanks ? det::DetClass::tank : det::DetClass::pile;
      const auto part_box = b.random_part_box(cls, site_box);
      gt.boxes.emplace_back(cls, part_box);
      if (rng.bernoulli(model.part_tpr)) {
        const double score = rng.beta(model.tp_score);
        b.emit(cls, score, b.jittered(part_box));
      }
    }
    if (rng.bernoulli(model.site_tpr)) {
      const double score = rng.beta(model.tp_score);
      b.emit(det::DetClass::site, score, b.jittered(site_box));
    }
    scene.gts.push_back(std::move(gt));
  }

  const double area_km2 = sc.extent_x_m * sc.extent_y_m / 1e6;
  const std::size_t n_fp_sites = rng.poisson(model.fp_rate_per_km2 * area_km2);
  auto bg_dist = n_fp_sites > 0 ? table_distribution(sc.background_prior)
                                : std::discrete_distribution<std::size_t>();
  for (std::size_t i = 0; i < n_fp_sites; ++i) {
    const auto box = b.random_site_box(b.uniform_point());
    const double score = rng.beta(model.fp_score);
    b.emit(det::DetClass::site, score, box);
    const auto [n_tanks, n_piles] = draw_counts(rng, bg_dist, sc.background_prior);
    for (int k = 0; k < n_tanks + n_piles; ++k) {
      const auto cls = k < n_tanks ? det::DetClass::tank : det::DetClass::pile;
      const auto part_box = b.random_part_box(cls, box);
      const double part_score = rng.beta(model.fp_score);
      b.emit(cls, part_score, part_box);
    }
  }
  for (auto cls : {det::DetClass::tank, det::DetClass::pile}) {
    const std::size_t n = rng.poisson(model.fp_rate_per_km2 * area_km2);
    for (std::size_t i = 0; i < n; ++i) {
      const auto box = b.part_box_at(cls, b.uniform_point());
      const double score = rng.beta(model.fp_score);
      b.emit(cls, score, box);
    }
  }
  scene.dets = std::move(b.dets);
  return scene;
}

parts::CountDistribution enumerate_poisson_binomial(std::span<const double> p) {
  if (p.size() > kMaxEnumeration) {
    throw ContractError("subset enumeration is limited to " + std::to_string(kMaxEnumeration) +
                        " trials");
  }
  for (double pi : p) {
    if (!(pi >= 0.0 && pi <= 1.0)) throw DomainError("probability outside [0,1]");
  }
  const std::size_t n = p.size();
  parts::CountDistribution out;
  out.pmf.assign(n + 1, 0.0);
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    double prob = 1.0;
    for (std::size_t i = 0; i < n; ++i) prob *= (mask >> i & 1u) ? p[i] : 1.0 - p[i];
    out.pmf[static_cast<std::size_t>(std::popcount(mask))] += prob;
  }
  return out;
}

// --- config ---

namespace {

jsonio::ordered_json prior_spec(const parts::CountPrior& prior) {
  return jsonio::ordered_json::parse(parts::prior_to_text(prior));
}

parts::CountPrior prior_from_spec(const jsonio::ordered_json& spec, const char* field) {
  const std::string kind = spec.value("kind", "");
  if (spec.contains("table")) return parts::prior_from_text(spec.dump());
  if (kind == "training_histograms" || kind.empty()) {
    return parts::fit_empirical_prior(parts::training_tank_frequencies(),
                                      parts::training_pile_frequencies(),
                                      spec.value("smoothing", parts::kDefaultSmoothing));
  }
  if (kind == "empirical_independent") {
    return parts::fit_empirical_prior(spec.at("tank_histogram").get<parts::Histogram>(),
                                      spec.at("pile_histogram").get<parts::Histogram>(),
                                      spec.value("smoothing", parts::kDefaultSmoothing),
                                      spec.value("cap", parts::kDefaultCap));
  }
  if (kind == "poisson_independent" || kind == "bivariate_poisson") {
    const parts::PoissonParams params{spec.at("lambda_t").get<double>(), spec.at("lambda_p").get<double>(),
                                      spec.value("lambda_c", 0.0)};
    return parts::make_bivariate_poisson_prior(params, spec.value("cap", parts::kDefaultCap));
  }
  if (kind == "background") {
    return background_count_prior(spec.value("p_zero", 0.9), spec.value("ratio", 0.5));
  }
  throw ParseError("unknown prior kind '" + kind + "'", 0, field);
}

}  // namespace

std::string scenario_to_text(const Scenario& sc) {
  jsonio::ordered_json doc;
  doc["seed"] = sc.seed;
  doc["origin_x"] = sc.origin_x;
  doc["origin_y"] = sc.origin_y;
  doc["extent_x_m"] = sc.extent_x_m;
  doc["extent_y_m"] = sc.extent_y_m;
  doc["n_sites"] = sc.n_sites;
  doc["min_separation_m"] = sc.min_separation_m;
  doc["tile_size_m"] = sc.tile_size_m;
  doc["crs"] = sc.crs;
  const auto& m = sc.detector;
  doc["detector"] = {{"site_tpr", m.site_tpr},
                     {"part_tpr", m.part_tpr},
                     {"fp_rate_per_km2", m.fp_rate_per_km2},
                     {"tp_score", {{"a", m.tp_score.a}, {"b", m.tp_score.b}}},
                     {"fp_score", {{"a", m.fp_score.a}, {"b", m.fp_score.b}}},
                     {"jitter_sigma_m", m.jitter_sigma_m}};
  doc["count_prior"] = prior_spec(sc.count_prior);
  doc["background_prior"] = prior_spec(sc.background_prior);
  return jsonio::dump(doc) + "\n";
}

Scenario scenario_from_text(const std::string& text) {
  try {
    const auto doc = jsonio::ordered_json::parse(text);
    Scenario sc = Scenario::standard();
    sc.seed = doc.value("seed", sc.seed);
    sc.origin_x = doc.value("origin_x", sc.origin_x);
    sc.origin_y = doc.value("origin_y", sc.origin_y);
    sc.extent_x_m = doc.value("extent_x_m", sc.extent_x_m);
    sc.extent_y_m = doc.value("extent_y_m", sc.extent_y_m);
    sc.n_sites = doc.value("n_sites", sc.n_sites);
    sc.min_separation_m = doc.value("min_separation_m", sc.min_separation_m);
    sc.tile_size_m = doc.value("tile_size_m", sc.tile_size_m);
    sc.crs = doc.value("crs", sc.crs);
    if (doc.contains("detector")) {
      const auto& d = doc["detector"];
      auto& m = sc.detector;
      m.site_tpr = d.value("site_tpr", m.site_tpr);
      m.part_tpr = d.value("part_tpr", m.part_tpr);
      m.fp_rate_per_km2 = d.value("fp_rate_per_km2", m.fp_rate_per_km2);
      m.jitter_sigma_m = d.value("jitter_sigma_m", m.jitter_sigma_m);
      if (d.contains("tp_score")) m.tp_score = {d["tp_score"].at("a").get<double>(), d["tp_score"].at("b").get<double>()};
      if (d.contains("fp_score")) m.fp_score = {d["fp_score"].at("a").get<double>(), d["fp_score"].at("b").get<double>()};
    }
    if (doc.contains("count_prior")) sc.count_prior = prior_from_spec(doc["count_prior"], "count_prior");
    if (doc.contains("background_prior")) {
      sc.background_prior = prior_from_spec(doc["background_prior"], "background_prior");
    }
    check_scenario(sc);
    return sc;
  } catch (const jsonio::ordered_json::exception& e) {
    throw ParseError(std::string("scenario: ") + e.what(), 0, "");
  }
}

Scenario read_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_text(ss.str());
}

}  // namespace digestmap::sim
