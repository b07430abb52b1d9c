// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

// Detector outputs, ground-truth sites and their on-disk formats.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "digestmap/geom.hpp"

namespace digestmap::det {

enum class DetClass { site, tank, pile };

enum class SiteSource { initial_db, new_detection, external_db };

std::string_view to_string(DetClass c);
std::string_view to_string(SiteSource s);
/// Throw ParseError on unknown names.
DetClass parse_class(std::string_view s);
SiteSource parse_source(std::string_view s);

struct Detection {
  std::string id;
  DetClass cls = DetClass::site;
  double score = 0.0;
  geom::OrientedBox box;
  std::string tile_id;
  std::string crs;

  geom::GeoPoint center() const { return box.center(); }
};

struct GroundTruthSite {
  std::string id;
  geom::GeoPoint location;
  /// Optional annotated boxes (site outline and/or parts).
  std::vector<std::pair<DetClass, geom::OrientedBox>> boxes;
  SiteSource source = SiteSource::initial_db;
};

struct DatasetStats {
  std::size_t n_images = 0;
  std::size_t n_annotated_tiles = 0;
  std::size_t n_background_tiles = 0;
  double alpha = 0.0;

  /// Throws DomainError when n_images == 0 or annotated > images.
  static DatasetStats make(std::size_t n_annotated, std::size_t n_images);
};

/// Fraction of annotated (non-background) tiles.
double dilution(std::size_t n_annotated, std::size_t n_total);

// --- detections file (one JSON object per line) ---

/// Reads {id, class, score, cx, cy, w, h, angle, tile_id, crs} records.
/// Unknown extra fields are ignored. Blank lines are skipped.
std::vector<Detection> read_detections(const std::filesystem::path& path);

/// Parses one record; `line` is used for error reporting only.
template <class Json>
Detection detection_from_json(const Json& rec, std::size_t line);

std::string detection_to_line(const Detection& d);
void write_detections(const std::filesystem::path& path, std::span<const Detection> dets);

// --- ground truth / inventory (GeoJSON FeatureCollection) ---

/// Point features become locations. Polygon features use the ring
/// centroid as location; rectangular 4-corner rings also become boxes.
std::vector<GroundTruthSite> read_inventory(const std::filesystem::path& path);

std::string inventory_to_geojson(std::span<const GroundTruthSite> sites,
                                 std::string_view crs = {});
void write_inventory(std::span<const GroundTruthSite> sites, const std::filesystem::path& path,
                     std::string_view crs = {});

/// Wraps a confirmed detection as an inventory site.
GroundTruthSite site_from_detection(const Detection& d, SiteSource source);

// --- deduplication ---

/// Greedy clustering by (score desc, id asc). Each survivor absorbs every
/// remaining index whose center is within `radius`. Returns survivor
/// indices in processing order.
std::vector<std::size_t> greedy_cluster(std::span<const geom::GeoPoint> centers,
                                        std::span<const double> scores,
                                        std::span<const std::string> ids, double radius);

/// Merges repeated detections of one site across overlapping tiles.
/// All inputs must be class=site and radius > 0 (ContractError otherwise).
std::vector<Detection> dedup_sites(std::span<const Detection> dets, double radius = 200.0);

/// Ordering used everywhere a ranking is needed: score desc, then id asc.
inline bool ranks_before(double score_a, const std::string& id_a, double score_b,
                         const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

}  // namespace digestmap::det
