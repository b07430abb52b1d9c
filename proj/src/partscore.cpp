// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "digestmap/partscore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "digestmap/error.hpp"
#include "digestmap/jsonio.hpp"
#include "digestmap/spatial_index.hpp"

namespace digestmap::parts {

std::string_view to_string(Containment c) {
  return c == Containment::center_in ? "center_in" : "box_in";
}

Containment parse_containment(std::string_view s) {
  if (s == "center_in") return Containment::center_in;
  if (s == "box_in") return Containment::box_in;
  throw ContractError("unknown containment mode '" + std::string(s) + "'");
}

bool part_inside(const det::Detection& site, const det::Detection& part, Containment mode) {
  if (mode == Containment::center_in) return geom::contains_point(site.box, part.center());
  return geom::contains_box(site.box, part.box);
}

std::size_t CountDistribution::mode() const {
  return static_cast<std::size_t>(std::max_element(pmf.begin(), pmf.end()) - pmf.begin());
}

double CountDistribution::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < pmf.size(); ++k) m += static_cast<double>(k) * pmf[k];
  return m;
}

std::string_view to_string(PriorKind k) {
  switch (k) {
    case PriorKind::empirical_independent: return "empirical_independent";
    case PriorKind::poisson_independent: return "poisson_independent";
    case PriorKind::bivariate_poisson: return "bivariate_poisson";
  }
  return "empirical_independent";
}

PriorKind parse_prior_kind(std::string_view s) {
  if (s == "empirical_independent") return PriorKind::empirical_independent;
  if (s == "poisson_independent") return PriorKind::poisson_independent;
  if (s == "bivariate_poisson") return PriorKind::bivariate_poisson;
  throw ContractError("unknown prior kind '" + std::string(s) + "'");
}

// --- CountPrior ---

CountPrior::CountPrior(PriorKind kind, int cap, std::vector<double> table,
                       std::optional<PoissonParams> params, double smoothing, PriorMode mode)
    : kind_(kind),
      mode_(mode),
      cap_(cap),
      table_(std::move(table)),
      params_(params),
      smoothing_(smoothing) {
  if (cap_ < 0) throw ContractError("prior cap must be non-negative");
  const auto side = static_cast<std::size_t>(cap_) + 1;
  if (table_.size() != side * side) {
    throw ValidationError("prior table must hold (cap+1)^2 cells", 0, "table");
  }
  for (double w : table_) {
    if (!(w >= 0.0 && w <= 1.0)) {
      throw ValidationError("prior weight outside [0,1]: " + std::to_string(w), 0, "table");
    }
  }
}

CountPrior CountPrior::constant(double w, int cap) {
  const auto side = static_cast<std::size_t>(cap) + 1;
  return CountPrior(PriorKind::empirical_independent, cap, std::vector<double>(side * side, w));
}

double CountPrior::total() const { return std::accumulate(table_.begin(), table_.end(), 0.0); }

CountPrior CountPrior::scaled(double c) const {
  std::vector<double> t = table_;
  for (double& w : t) w *= c;
  return CountPrior(kind_, cap_, std::move(t), params_, smoothing_, mode_);
}

// --- distributions ---

CountDistribution poisson_binomial(std::span<const double> p) {
  CountDistribution out;
  out.pmf.assign(p.size() + 1, 0.0);
  out.pmf[0] = 1.0;
  std::size_t n = 0;
  for (double pi : p) {
    if (!(pi >= 0.0 && pi <= 1.0)) {
      throw DomainError("poisson_binomial: probability outside [0,1]: " + std::to_string(pi));
    }
    ++n;
    // Adding one Bernoulli trial: walk downwards so pmf[k-1] is still the
    // previous-stage value when pmf[k] is updated.
    for (std::size_t k = n; k > 0; --k) out.pmf[k] = out.pmf[k] * (1.0 - pi) + out.pmf[k - 1] * pi;
    out.pmf[0] *= (1.0 - pi);
  }
  return out;
}

namespace {

std::size_t side_of(int cap) { return static_cast<std::size_t>(cap) + 1; }

void check_cap(int cap) {
  if (cap < 0) throw ContractError("prior cap must be non-negative");
}

void check_histogram(const Histogram& h, const char* name) {
  double mass = 0.0;
  for (double v : h) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw FitError(std::string(name) + " histogram has a negative or non-finite entry");
    }
    mass += v;
  }
  if (!(mass > 0.0)) throw FitError(std::string(name) + " histogram has no mass");
}

// Normalized over [0, cap], floored, renormalized.
std::vector<double> smoothed_marginal(const Histogram& h, double smoothing, int cap,
                                      const char* name) {
  std::vector<double> m(side_of(cap), 0.0);
  double mass = 0.0;
  for (std::size_t k = 0; k < m.size() && k < h.size(); ++k) {
    m[k] = h[k];
    mass += h[k];
  }
  if (!(mass > 0.0)) throw FitError(std::string(name) + " histogram has no mass within the cap");
  for (double& v : m) v = std::max(v / mass, smoothing);
  const double total = std::accumulate(m.begin(), m.end(), 0.0);
  for (double& v : m) v /= total;
  return m;
}

double histogram_mean(const Histogram& h) {
  double mass = 0.0;
  double first = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    mass += h[k];
    first += static_cast<double>(k) * h[k];
  }
  return first / mass;
}

double log_power(double base, int exponent) {
  if (exponent == 0) return 0.0;
  if (base == 0.0) return -std::numeric_limits<double>::infinity();
  return exponent * std::log(base);
}

void normalize(std::vector<double>& table) {
  const double total = std::accumulate(table.begin(), table.end(), 0.0);
  if (!(total > 0.0)) throw FitError("prior table has no mass within the cap");
  for (double& v : table) v /= total;
}

}  // namespace

CountPrior fit_empirical_prior(const Histogram& tank_counts, const Histogram& pile_counts,
                               double smoothing, int cap) {
  check_cap(cap);
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ContractError("smoothing must be in [0, 1)");
  check_histogram(tank_counts, "tank");
  check_histogram(pile_counts, "pile");
  const auto mt = smoothed_marginal(tank_counts, smoothing, cap, "tank");
  const auto mp = smoothed_marginal(pile_counts, smoothing, cap, "pile");
  const std::size_t side = side_of(cap);
  std::vector<double> table(side * side);
  for (std::size_t t = 0; t < side; ++t) {
    for (std::size_t p = 0; p < side; ++p) table[t * side + p] = mt[t] * mp[p];
  }
  return CountPrior(PriorKind::empirical_independent, cap, std::move(table), std::nullopt,
                    smoothing);
}

double poisson_pmf(int k, double lambda) {
  if (k < 0) return 0.0;
  if (!(lambda >= 0.0)) throw DomainError("poisson rate must be non-negative");
  return std::exp(-lambda + log_power(lambda, k) - std::lgamma(k + 1.0));
}

CountPrior fit_poisson_prior(const Histogram& tank_counts, const Histogram& pile_counts, int cap) {
  check_cap(cap);
  check_histogram(tank_counts, "tank");
  check_histogram(pile_counts, "pile");
  const PoissonParams params{histogram_mean(tank_counts), histogram_mean(pile_counts), 0.0};
  const std::size_t side = side_of(cap);
  std::vector<double> table(side * side);
  for (std::size_t t = 0; t < side; ++t) {
    const double pt = poisson_pmf(static_cast<int>(t), params.lambda_t);
    for (std::size_t p = 0; p < side; ++p) {
      table[t * side + p] = pt * poisson_pmf(static_cast<int>(p), params.lambda_p);
    }
  }
  normalize(table);
  return CountPrior(PriorKind::poisson_independent, cap, std::move(table), params);
}

double bivariate_poisson_pmf(int x, int y, const PoissonParams& params) {
  if (x < 0 || y < 0) return 0.0;
  const double lt = params.lambda_t;
  const double lp = params.lambda_p;
  const double lc = params.lambda_c;
  if (!(lt >= 0.0 && lp >= 0.0 && lc >= 0.0)) throw DomainError("bivariate poisson: negative rate");
  double sum = 0.0;
  for (int k = 0; k <= std::min(x, y); ++k) {
    const double log_term = log_power(lt, x - k) + log_power(lp, y - k) + log_power(lc, k) -
                            std::lgamma(x - k + 1.0) - std::lgamma(y - k + 1.0) -
                            std::lgamma(k + 1.0);
    sum += std::exp(log_term - (lt + lp + lc));
  }
  return sum;
}

CountPrior make_bivariate_poisson_prior(const PoissonParams& params, int cap) {
  check_cap(cap);
  const std::size_t side = side_of(cap);
  std::vector<double> table(side * side);
  for (std::size_t t = 0; t < side; ++t) {
    for (std::size_t p = 0; p < side; ++p) {
      table[t * side + p] = bivariate_poisson_pmf(static_cast<int>(t), static_cast<int>(p), params);
    }
  }
  normalize(table);
  return CountPrior(PriorKind::bivariate_poisson, cap, std::move(table), params);
}

CountPrior fit_bivariate_poisson_prior(const JointHistogram& joint_counts, int cap) {
  double mass = 0.0;
  double sum_t = 0.0;
  double sum_p = 0.0;
  for (const auto& [cell, w] : joint_counts) {
    if (cell.first < 0 || cell.second < 0) throw FitError("negative count in joint histogram");
    if (!(w >= 0.0) || !std::isfinite(w)) throw FitError("invalid joint histogram weight");
    mass += w;
    sum_t += w * cell.first;
    sum_p += w * cell.second;
  }
  if (!(mass > 0.0)) throw FitError("joint histogram has no mass");
  const double mean_t = sum_t / mass;
  const double mean_p = sum_p / mass;
  double cov = 0.0;
  for (const auto& [cell, w] : joint_counts) cov += w * (cell.first - mean_t) * (cell.second - mean_p);
  cov /= mass;
  // The model only represents non-negative correlation with lambda_c below
  // both means.
  const double lambda_c = std::clamp(cov, 0.0, std::min(mean_t, mean_p));
  return make_bivariate_poisson_prior({mean_t - lambda_c, mean_p - lambda_c, lambda_c}, cap);
}

CountPrior make_posterior_prior(const CountPrior& positive, const CountPrior& background,
                                double positive_rate) {
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) {
    throw ContractError("positive rate must be in (0, 1)");
  }
  const int cap = std::min(positive.cap(), background.cap());
  const std::size_t side = side_of(cap);
  std::vector<double> table(side * side, 0.0);
  for (std::size_t t = 0; t < side; ++t) {
    for (std::size_t p = 0; p < side; ++p) {
      const double pos = positive_rate * positive.weight(t, p);
      const double neg = (1.0 - positive_rate) * background.weight(t, p);
      table[t * side + p] = (pos + neg) > 0.0 ? pos / (pos + neg) : 0.0;
    }
  }
  return CountPrior(positive.kind(), cap, std::move(table), positive.params(),
                    positive.smoothing(), PriorMode::posterior);
}

JointHistogram joint_histogram(std::span<const std::pair<int, int>> counts) {
  JointHistogram h;
  for (const auto& c : counts) h[c] += 1.0;
  return h;
}

Histogram tank_marginal(const JointHistogram& joint) {
  Histogram h;
  for (const auto& [cell, w] : joint) {
    if (static_cast<std::size_t>(cell.first) >= h.size()) h.resize(cell.first + 1, 0.0);
    h[cell.first] += w;
  }
  return h;
}

Histogram pile_marginal(const JointHistogram& joint) {
  Histogram h;
  for (const auto& [cell, w] : joint) {
    if (static_cast<std::size_t>(cell.second) >= h.size()) h.resize(cell.second + 1, 0.0);
    h[cell.second] += w;
  }
  return h;
}

const Histogram& training_tank_frequencies() {
  static const Histogram h{0.0,     0.06897, 0.31418, 0.36015, 0.14943,
                           0.06897, 0.01533, 0.01916, 0.00383, 0.0};
  return h;
}

const Histogram& training_pile_frequencies() {
  static const Histogram h{0.01533, 0.06130, 0.10345, 0.16092, 0.16475,
                           0.12644, 0.11494, 0.08812, 0.07280, 0.04598,
                           0.01916, 0.00766, 0.01149, 0.00383, 0.00383};
  return h;
}

// --- evidence ---

SiteEvidence extract_evidence(const det::Detection& site, std::span<const det::Detection> parts,
                              Containment mode) {
  if (site.cls != det::DetClass::site) {
    throw ContractError("extract_evidence: '" + site.id + "' is not a site detection");
  }
  SiteEvidence ev{site, site.score, {}, {}};
  for (const auto& part : parts) {
    if (part.cls == det::DetClass::site || !part_inside(site, part, mode)) continue;
    (part.cls == det::DetClass::tank ? ev.p_t : ev.p_p).push_back(part.score);
  }
  return ev;
}

std::vector<std::optional<std::size_t>> assign_parts(std::span<const det::Detection> sites,
                                                     std::span<const det::Detection> parts,
                                                     Containment mode) {
  std::vector<std::optional<std::size_t>> owner(parts.size());
  if (sites.empty()) return owner;
  std::vector<geom::OrientedBox> boxes;
  boxes.reserve(sites.size());
  double extent_sum = 0.0;
  for (const auto& s : sites) {
    if (s.cls != det::DetClass::site) {
      throw ContractError("assign_parts: '" + s.id + "' is not a site detection");
    }
    boxes.push_back(s.box);
    extent_sum += std::max(s.box.width(), s.box.height());
  }
  const double cell = std::max(1.0, extent_sum / static_cast<double>(sites.size()));
  const geom::BoxGrid grid(boxes, cell);
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& part = parts[pi];
    if (part.cls == det::DetClass::site) continue;
    for (std::size_t i : grid.candidates(part.center())) {
      if (!part_inside(sites[i], part, mode)) continue;
      const auto& cur = owner[pi];
      if (!cur || det::ranks_before(sites[i].score, sites[i].id, sites[*cur].score, sites[*cur].id)) {
        owner[pi] = i;
      }
    }
  }
  return owner;
}

std::vector<SiteEvidence> assign_evidence(std::span<const det::Detection> sites,
                                          std::span<const det::Detection> parts,
                                          Containment mode) {
  const auto owner = assign_parts(sites, parts, mode);
  std::vector<SiteEvidence> out;
  out.reserve(sites.size());
  for (const auto& s : sites) out.push_back({s, s.score, {}, {}});
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    if (!owner[pi]) continue;
    auto& ev = out[*owner[pi]];
    (parts[pi].cls == det::DetClass::tank ? ev.p_t : ev.p_p).push_back(parts[pi].score);
  }
  return out;
}

double fused_score(const SiteEvidence& ev, const CountPrior& prior) {
  if (ev.p_b == 0.0) return 0.0;
  const auto tanks = poisson_binomial(ev.p_t);
  const auto piles = poisson_binomial(ev.p_p);
  double acc = 0.0;
  for (std::size_t t = 0; t < tanks.pmf.size(); ++t) {
    if (tanks.pmf[t] == 0.0) continue;
    double row = 0.0;
    for (std::size_t p = 0; p < piles.pmf.size(); ++p) row += piles.pmf[p] * prior.weight(t, p);
    acc += tanks.pmf[t] * row;
  }
  return std::clamp(ev.p_b * acc, 0.0, ev.p_b);
}

std::vector<ScoredSite> rescore_region(std::span<const det::Detection> sites,
                                       std::span<const det::Detection> parts,
                                       const CountPrior& prior, Containment mode,
                                       unsigned threads) {
  const auto evidence = assign_evidence(sites, parts, mode);
  std::vector<ScoredSite> out(evidence.size());

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& ev = evidence[i];
      ScoredSite& s = out[i];
      s.detection = ev.site;
      s.baseline_score = ev.p_b;
      s.fused_score = fused_score(ev, prior);
      s.n_tanks = ev.p_t.size();
      s.n_piles = ev.p_p.size();
      s.tank_mode = poisson_binomial(ev.p_t).mode();
      s.pile_mode = poisson_binomial(ev.p_p).mode();
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(
      std::min<std::size_t>(threads, std::max<std::size_t>(1, evidence.size() / 1024)));
  if (threads <= 1) {
    work(0, evidence.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (evidence.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(evidence.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
  }

  std::sort(out.begin(), out.end(), [](const ScoredSite& a, const ScoredSite& b) {
    return det::ranks_before(a.fused_score, a.detection.id, b.fused_score, b.detection.id);
  });
  return out;
}

SplitDetections split_by_class(std::span<const det::Detection> dets) {
  SplitDetections out;
  for (const auto& d : dets) (d.cls == det::DetClass::site ? out.sites : out.parts).push_back(d);
  return out;
}

// --- rescored detections ---

std::string scored_to_line(const ScoredSite& s) {
  det::Detection d = s.detection;
  d.score = s.fused_score;
  auto rec = jsonio::ordered_json::parse(det::detection_to_line(d));
  rec["baseline_score"] = s.baseline_score;
  rec["n_tanks"] = s.n_tanks;
  rec["n_piles"] = s.n_piles;
  rec["tank_mode"] = s.tank_mode;
  rec["pile_mode"] = s.pile_mode;
  return jsonio::dump(rec);
}

void write_scored(std::span<const ScoredSite> scored, const std::filesystem::path& path) {
  std::string text;
  for (const auto& s : scored) text += scored_to_line(s) + "\n";
  jsonio::write_text(path, text);
}

std::vector<ScoredSite> read_scored(const std::filesystem::path& path) {
  std::vector<ScoredSite> out;
  jsonio::for_each_record(path, [&](std::size_t line, const jsonio::ordered_json& rec) {
    auto d = det::detection_from_json(rec, line);
    if (d.cls != det::DetClass::site) return;
    ScoredSite s;
    s.fused_score = d.score;
    s.baseline_score = rec.contains("baseline_score") ? jsonio::get_number(rec, "baseline_score", line) : d.score;
    if (s.baseline_score < 0.0 || s.baseline_score > 1.0) {
      throw ValidationError("score outside [0,1]", line, "baseline_score");
    }
    auto count = [&](const char* f) -> std::size_t {
      if (!rec.contains(f)) return 0;
      const double v = jsonio::get_number(rec, f, line);
      if (v < 0.0) throw ValidationError("negative count", line, f);
      return static_cast<std::size_t>(v);
    };
    s.n_tanks = count("n_tanks");
    s.n_piles = count("n_piles");
    s.tank_mode = count("tank_mode");
    s.pile_mode = count("pile_mode");
    d.score = s.baseline_score;
    s.detection = std::move(d);
    out.push_back(std::move(s));
  });
  return out;
}

std::vector<det::Detection> fused_detections(std::span<const ScoredSite> scored) {
  std::vector<det::Detection> out;
  out.reserve(scored.size());
  for (const auto& s : scored) {
    out.push_back(s.detection);
    out.back().score = s.fused_score;
  }
  return out;
}

// --- prior file ---

std::string prior_to_text(const CountPrior& prior) {
  jsonio::json doc;  // std::map-backed: keys come out sorted
  doc["kind"] = std::string(to_string(prior.kind()));
  doc["mode"] = prior.mode() == PriorMode::likelihood ? "likelihood" : "posterior";
  doc["cap"] = prior.cap();
  doc["smoothing"] = prior.smoothing();
  if (prior.params()) {
    doc["params"] = {{"lambda_t", prior.params()->lambda_t},
                     {"lambda_p", prior.params()->lambda_p},
                     {"lambda_c", prior.params()->lambda_c}};
  } else {
    doc["params"] = nullptr;
  }
  const std::size_t side = side_of(prior.cap());
  jsonio::json rows = jsonio::json::array();
  for (std::size_t t = 0; t < side; ++t) {
    jsonio::json row = jsonio::json::array();
    for (std::size_t p = 0; p < side; ++p) row.push_back(prior.weight(t, p));
    rows.push_back(std::move(row));
  }
  doc["table"] = std::move(rows);
  return jsonio::dump(doc) + "\n";
}

CountPrior prior_from_text(std::string_view text) {
  jsonio::json doc;
  try {
    doc = jsonio::json::parse(text);
  } catch (const jsonio::json::parse_error& e) {
    throw ParseError(std::string("prior: malformed JSON: ") + e.what(), 0, "");
  }
  try {
    const auto kind = parse_prior_kind(doc.at("kind").get<std::string>());
    const std::string mode_name = doc.value("mode", "likelihood");
    if (mode_name != "likelihood" && mode_name != "posterior") {
      throw ParseError("prior: unknown mode '" + mode_name + "'", 0, "mode");
    }
    const int cap = doc.at("cap").get<int>();
    if (cap < 0) throw ValidationError("prior: negative cap", 0, "cap");
    const double smoothing = doc.value("smoothing", 0.0);
    std::optional<PoissonParams> params;
    if (doc.contains("params") && !doc["params"].is_null()) {
      const auto& p = doc["params"];
      params = PoissonParams{p.at("lambda_t").get<double>(), p.at("lambda_p").get<double>(),
                             p.at("lambda_c").get<double>()};
    }
    const auto& rows = doc.at("table");
    const std::size_t side = side_of(cap);
    if (!rows.is_array() || rows.size() != side) {
      throw ValidationError("prior: table must have cap+1 rows", 0, "table");
    }
    std::vector<double> table;
    table.reserve(side * side);
    for (const auto& row : rows) {
      if (!row.is_array() || row.size() != side) {
        throw ValidationError("prior: table must have cap+1 columns", 0, "table");
      }
      for (const auto& v : row) table.push_back(v.get<double>());
    }
    return CountPrior(kind, cap, std::move(table), params, smoothing,
                      mode_name == "posterior" ? PriorMode::posterior : PriorMode::likelihood);
  } catch (const jsonio::json::exception& e) {
    throw ParseError(std::string("prior: ") + e.what(), 0, "");
  } catch (const ContractError& e) {
    throw ParseError(e.what(), 0, "kind");
  }
}

void write_prior(const CountPrior& prior, const std::filesystem::path& path) {
  jsonio::write_text(path, prior_to_text(prior));
}

CountPrior read_prior(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return prior_from_text(ss.str());
}

}  // namespace digestmap::parts
