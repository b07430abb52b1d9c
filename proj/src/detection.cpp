// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "digestmap/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "digestmap/error.hpp"
#include "digestmap/jsonio.hpp"
#include "digestmap/spatial_index.hpp"

namespace digestmap::det {

using jsonio::ordered_json;

std::string_view to_string(DetClass c) {
  switch (c) {
    case DetClass::site: return "site";
    case DetClass::tank: return "tank";
    case DetClass::pile: return "pile";
  }
  return "site";
}

std::string_view to_string(SiteSource s) {
  switch (s) {
    case SiteSource::initial_db: return "initial_db";
    case SiteSource::new_detection: return "new_detection";
    case SiteSource::external_db: return "external_db";
  }
  return "initial_db";
}

DetClass parse_class(std::string_view s) {
  if (s == "site") return DetClass::site;
  if (s == "tank") return DetClass::tank;
  if (s == "pile") return DetClass::pile;
  throw ParseError("unknown class '" + std::string(s) + "'", 0, "class");
}

SiteSource parse_source(std::string_view s) {
  if (s == "initial_db") return SiteSource::initial_db;
  if (s == "new_detection") return SiteSource::new_detection;
  if (s == "external_db") return SiteSource::external_db;
  throw ParseError("unknown source '" + std::string(s) + "'", 0, "source");
}

DatasetStats DatasetStats::make(std::size_t n_annotated, std::size_t n_images) {
  DatasetStats s;
  s.n_images = n_images;
  s.n_annotated_tiles = n_annotated;
  s.n_background_tiles = n_images - n_annotated;
  s.alpha = dilution(n_annotated, n_images);
  return s;
}

double dilution(std::size_t n_annotated, std::size_t n_total) {
  if (n_total == 0) throw DomainError("dilution: total tile count is zero");
  if (n_annotated > n_total) throw DomainError("dilution: more annotated tiles than tiles");
  return static_cast<double>(n_annotated) / static_cast<double>(n_total);
}

template <class Json>
Detection detection_from_json(const Json& rec, std::size_t line) {
  Detection d;
  d.id = jsonio::get_string(rec, "id", line);
  try {
    d.cls = parse_class(jsonio::get_string(rec, "class", line));
  } catch (const ParseError& e) {
    if (e.line() != 0) throw;
    throw ParseError("unknown class", line, "class");
  }
  d.score = jsonio::get_number(rec, "score", line);
  if (d.score < 0.0 || d.score > 1.0) {
    throw ValidationError("score outside [0,1]: " + std::to_string(d.score), line, "score");
  }
  const double cx = jsonio::get_number(rec, "cx", line);
  const double cy = jsonio::get_number(rec, "cy", line);
  const double w = jsonio::get_number(rec, "w", line);
  const double h = jsonio::get_number(rec, "h", line);
  const double angle = jsonio::get_number(rec, "angle", line);
  if (!(w > 0.0)) throw ValidationError("width must be positive", line, "w");
  if (!(h > 0.0)) throw ValidationError("height must be positive", line, "h");
  d.box = geom::OrientedBox::make({cx, cy}, w, h, angle);
  d.tile_id = jsonio::get_string(rec, "tile_id", line);
  d.crs = jsonio::get_string(rec, "crs", line);
  return d;
}

template Detection detection_from_json<ordered_json>(const ordered_json&, std::size_t);
template Detection detection_from_json<jsonio::json>(const jsonio::json&, std::size_t);

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::vector<Detection> out;
  jsonio::for_each_record(path, [&](std::size_t line, const ordered_json& rec) {
    out.push_back(detection_from_json(rec, line));
  });
  return out;
}

std::string detection_to_line(const Detection& d) {
  ordered_json rec;
  rec["id"] = d.id;
  rec["class"] = std::string(to_string(d.cls));
  rec["score"] = d.score;
  rec["cx"] = d.box.center().x;
  rec["cy"] = d.box.center().y;
  rec["w"] = d.box.width();
  rec["h"] = d.box.height();
  rec["angle"] = d.box.angle();
  rec["tile_id"] = d.tile_id;
  rec["crs"] = d.crs;
  return jsonio::dump(rec);
}

void write_detections(const std::filesystem::path& path, std::span<const Detection> dets) {
  std::string text;
  for (const auto& d : dets) {
    text += detection_to_line(d);
    text += '\n';
  }
  jsonio::write_text(path, text);
}

// --- GeoJSON ---

namespace {

geom::GeoPoint ring_centroid(const std::vector<geom::GeoPoint>& ring) {
  const double a = geom::signed_area(ring.data(), static_cast<int>(ring.size()));
  if (std::abs(a) < 1e-12) {
    geom::GeoPoint c{};
    for (const auto& p : ring) {
      c.x += p.x;
      c.y += p.y;
    }
    return {c.x / ring.size(), c.y / ring.size()};
  }
  double cx = 0.0;
  double cy = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = ring[i];
    const auto& q = ring[(i + 1) % n];
    const double f = p.x * q.y - q.x * p.y;
    cx += (p.x + q.x) * f;
    cy += (p.y + q.y) * f;
  }
  return {cx / (6.0 * a), cy / (6.0 * a)};
}

geom::GeoPoint parse_position(const ordered_json& pos, std::size_t feature) {
  if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
    throw ParseError("bad coordinate", feature, "coordinates");
  }
  return {pos[0].get<double>(), pos[1].get<double>()};
}

}  // namespace

std::vector<GroundTruthSite> read_inventory(const std::filesystem::path& path) {
  const ordered_json doc = jsonio::read_document(path);
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection") {
    throw ParseError(path.string() + ": not a FeatureCollection", 0, "type");
  }
  std::vector<GroundTruthSite> out;
  const auto features = doc.find("features");
  if (features == doc.end()) return out;
  if (!features->is_array()) throw ParseError("features is not an array", 0, "features");
  std::size_t index = 0;
  for (const auto& f : *features) {
    ++index;  // 1-based feature number stands in for the line number
    const auto& props = f.contains("properties") && f["properties"].is_object()
                            ? f["properties"]
                            : ordered_json::object();
    GroundTruthSite site;
    site.id = jsonio::get_string(props, "id", index);
    if (props.contains("source")) {
      try {
        site.source = parse_source(jsonio::get_string(props, "source", index));
      } catch (const ParseError&) {
        throw ParseError("unknown source", index, "source");
      }
    }
    DetClass cls = DetClass::site;
    if (props.contains("class") && !props["class"].is_null()) {
      try {
        cls = parse_class(jsonio::get_string(props, "class", index));
      } catch (const ParseError&) {
        throw ParseError("unknown class", index, "class");
      }
    }
    if (!f.contains("geometry") || !f["geometry"].is_object()) {
      throw ParseError("missing geometry", index, "geometry");
    }
    const auto& g = f["geometry"];
    const std::string type = g.value("type", "");
    if (!g.contains("coordinates")) throw ParseError("missing coordinates", index, "coordinates");
    if (type == "Point") {
      site.location = parse_position(g["coordinates"], index);
    } else if (type == "Polygon") {
      const auto& rings = g["coordinates"];
      if (!rings.is_array() || rings.empty() || !rings[0].is_array()) {
        throw ParseError("bad polygon", index, "coordinates");
      }
      std::vector<geom::GeoPoint> ring;
      for (const auto& pos : rings[0]) ring.push_back(parse_position(pos, index));
      if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
      if (ring.size() < 3) throw ParseError("polygon ring too short", index, "coordinates");
      site.location = ring_centroid(ring);
      if (ring.size() == 4) {
        try {
          site.boxes.emplace_back(cls, geom::box_from_corners({ring[0], ring[1], ring[2], ring[3]}));
        } catch (const ContractError&) {
          // Not a rectangle: keep the location only.
        }
      }
    } else {
      throw ParseError("unsupported geometry type '" + type + "'", index, "geometry");
    }
    if (!std::isfinite(site.location.x) || !std::isfinite(site.location.y)) {
      throw ValidationError("non-finite location", index, "coordinates");
    }
    out.push_back(std::move(site));
  }
  return out;
}

std::string inventory_to_geojson(std::span<const GroundTruthSite> sites, std::string_view crs) {
  ordered_json doc;
  doc["type"] = "FeatureCollection";
  if (!crs.empty()) {
    doc["crs"] = {{"type", "name"}, {"properties", {{"name", std::string(crs)}}}};
  }
  doc["features"] = ordered_json::array();
  for (const auto& s : sites) {
    ordered_json f;
    f["type"] = "Feature";
    f["geometry"] = {{"type", "Point"}, {"coordinates", {s.location.x, s.location.y}}};
    ordered_json props;
    props["id"] = s.id;
    props["source"] = std::string(to_string(s.source));
    f["properties"] = props;
    doc["features"].push_back(std::move(f));
  }
  return jsonio::dump(doc) + "\n";
}

void write_inventory(std::span<const GroundTruthSite> sites, const std::filesystem::path& path,
                     std::string_view crs) {
  jsonio::write_text(path, inventory_to_geojson(sites, crs));
}

GroundTruthSite site_from_detection(const Detection& d, SiteSource source) {
  GroundTruthSite s;
  s.id = d.id;
  s.location = d.center();
  s.boxes.emplace_back(d.cls, d.box);
  s.source = source;
  return s;
}

// --- dedup ---

std::vector<std::size_t> greedy_cluster(std::span<const geom::GeoPoint> centers,
                                        std::span<const double> scores,
                                        std::span<const std::string> ids, double radius) {
  if (!(radius > 0.0)) throw ContractError("dedup radius must be positive");
  std::vector<std::size_t> order(centers.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(scores[a], ids[a], scores[b], ids[b]);
  });
  const geom::PointGrid grid(centers, radius);
  std::vector<bool> absorbed(centers.size(), false);
  std::vector<std::size_t> survivors;
  for (std::size_t i : order) {
    if (absorbed[i]) continue;
    survivors.push_back(i);
    absorbed[i] = true;
    grid.for_each_within(centers[i], radius, [&](std::size_t j, double) { absorbed[j] = true; });
  }
  return survivors;
}

std::vector<Detection> dedup_sites(std::span<const Detection> dets, double radius) {
  std::vector<geom::GeoPoint> centers;
  std::vector<double> scores;
  std::vector<std::string> ids;
  centers.reserve(dets.size());
  for (const auto& d : dets) {
    if (d.cls != DetClass::site) {
      throw ContractError("dedup_sites: detection '" + d.id + "' is not a site");
    }
    centers.push_back(d.center());
    scores.push_back(d.score);
    ids.push_back(d.id);
  }
  std::vector<Detection> out;
  // The survivor is the cluster's top-ranked member, so its own score is
  // already the cluster maximum.
  for (std::size_t i : greedy_cluster(centers, scores, ids, radius)) out.push_back(dets[i]);
  return out;
}

}  // namespace digestmap::det
