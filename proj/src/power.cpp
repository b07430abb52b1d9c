// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "digestmap/power.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include "digestmap/error.hpp"
#include "digestmap/jsonio.hpp"

namespace digestmap::power {

double tank_area(const det::Detection& site, std::span<const det::Detection> tanks,
                 parts::Containment mode) {
  double area = 0.0;
  for (const auto& t : tanks) {
    if (t.cls == det::DetClass::tank && parts::part_inside(site, t, mode)) area += t.box.area();
  }
  return area;
}

std::vector<SiteFeature> site_features(std::span<const det::Detection> sites,
                                       std::span<const det::Detection> parts,
                                       parts::Containment mode) {
  const auto owner = parts::assign_parts(sites, parts, mode);
  std::vector<SiteFeature> out;
  out.reserve(sites.size());
  for (const auto& s : sites) out.push_back({s.id, 0.0, std::nullopt});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (owner[i] && parts[i].cls == det::DetClass::tank) out[*owner[i]].tank_area += parts[i].box.area();
  }
  return out;
}

RegressionFit fit_linear(std::span<const SiteFeature> features, bool with_intercept) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& f : features) {
    if (!f.power_kw) continue;
    if (!(f.tank_area >= 0.0) || !std::isfinite(*f.power_kw)) {
      throw FitError("invalid feature for site '" + f.site_id + "'");
    }
    xs.push_back(f.tank_area);
    ys.push_back(*f.power_kw);
  }
  const std::size_t n = xs.size();
  if (n < 2) throw FitError("regression needs at least two sites with known power");

  RegressionFit fit;
  fit.n = n;
  fit.with_intercept = with_intercept;
  if (with_intercept) {
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      sxy += (xs[i] - mx) * (ys[i] - my);
      syy += (ys[i] - my) * (ys[i] - my);
    }
    if (!(sxx > 0.0)) throw FitError("regression is degenerate: all tank areas are equal");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = ys[i] - fit.predict(xs[i]);
      ss_res += r * r;
    }
    fit.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  } else {
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sxx += xs[i] * xs[i];
      sxy += xs[i] * ys[i];
      syy += ys[i] * ys[i];
    }
    if (!(sxx > 0.0)) throw FitError("regression is degenerate: all tank areas are zero");
    fit.slope = sxy / sxx;
    fit.intercept = 0.0;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = ys[i] - fit.predict(xs[i]);
      ss_res += r * r;
    }
    fit.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  }
  return fit;
}

double aggregate_power(const RegressionFit& fit, std::span<const SiteFeature> features) {
  double total = 0.0;
  for (const auto& f : features) total += std::max(0.0, fit.predict(f.tank_area));
  return total;
}

// --- CSV ---

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_double(const std::string& s, std::size_t line, const char* field) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && *begin == ' ') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
    throw ParseError("expected a number, got '" + s + "'", line, field);
  }
  return v;
}

}  // namespace

std::vector<SiteFeature> read_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<SiteFeature> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (line_no == 1 && !cells.empty() && cells[0] == "site_id") continue;
    if (cells.size() != 3) throw ParseError("expected 3 columns", line_no, "");
    SiteFeature f;
    f.site_id = cells[0];
    f.tank_area = parse_double(cells[1], line_no, "tank_area_m2");
    if (f.tank_area < 0.0) throw ValidationError("negative tank area", line_no, "tank_area_m2");
    if (cells[2].find_first_not_of(' ') != std::string::npos) {
      f.power_kw = parse_double(cells[2], line_no, "power_kw");
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::string features_csv(std::span<const SiteFeature> features) {
  std::string out = "site_id,tank_area_m2,power_kw\n";
  for (const auto& f : features) {
    out += f.site_id + "," + jsonio::format_decimal(f.tank_area) + ",";
    if (f.power_kw) out += jsonio::format_decimal(*f.power_kw);
    out += "\n";
  }
  return out;
}

void write_features(std::span<const SiteFeature> features, const std::filesystem::path& path) {
  jsonio::write_text(path, features_csv(features));
}

std::string fit_to_text(const RegressionFit& fit) {
  jsonio::ordered_json doc;
  doc["slope"] = fit.slope;
  doc["intercept"] = fit.intercept;
  doc["r2"] = fit.r2;
  doc["n"] = fit.n;
  doc["with_intercept"] = fit.with_intercept;
  return jsonio::dump(doc) + "\n";
}

RegressionFit fit_from_text(const std::string& text) {
  try {
    const auto doc = jsonio::json::parse(text);
    RegressionFit fit;
    fit.slope = doc.at("slope").get<double>();
    fit.intercept = doc.at("intercept").get<double>();
    fit.r2 = doc.at("r2").get<double>();
    fit.n = doc.at("n").get<std::size_t>();
    fit.with_intercept = doc.value("with_intercept", true);
    return fit;
  } catch (const jsonio::json::exception& e) {
    throw ParseError(std::string("regression fit: ") + e.what(), 0, "");
  }
}

}  // namespace digestmap::power
