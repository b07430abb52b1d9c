// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "digestmap/geom.hpp"

namespace digestmap::geom {

/// Uniform hash grid over points for fixed-radius neighbour queries.
class PointGrid {
 public:
  PointGrid(std::span<const GeoPoint> points, double cell_size)
      : points_(points), cell_(cell_size) {
    if (!(cell_ > 0.0) || !std::isfinite(cell_)) {
      cell_ = 0.0;  // degenerate: every query scans all points
      return;
    }
    for (std::size_t i = 0; i < points.size(); ++i) cells_[key(points[i])].push_back(i);
  }

  /// Calls fn(index, distance) for every point within `radius` of p.
  template <class Fn>
  void for_each_within(GeoPoint p, double radius, Fn&& fn) const {
    if (cell_ == 0.0 || !std::isfinite(radius) || radius > 64.0 * cell_) {
      for (std::size_t i = 0; i < points_.size(); ++i) {
        const double d = center_distance(p, points_[i]);
        if (d <= radius) fn(i, d);
      }
      return;
    }
    const auto span = static_cast<std::int64_t>(std::ceil(radius / cell_));
    const auto cx = coord(p.x);
    const auto cy = coord(p.y);
    for (std::int64_t ix = cx - span; ix <= cx + span; ++ix) {
      for (std::int64_t iy = cy - span; iy <= cy + span; ++iy) {
        auto it = cells_.find(pack(ix, iy));
        if (it == cells_.end()) continue;
        for (std::size_t i : it->second) {
          const double d = center_distance(p, points_[i]);
          if (d <= radius) fn(i, d);
        }
      }
    }
  }

 private:
  std::int64_t coord(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
  static std::uint64_t pack(std::int64_t ix, std::int64_t iy) {
    return (static_cast<std::uint64_t>(ix) << 32) ^ (static_cast<std::uint64_t>(iy) & 0xffffffffULL);
  }
  std::uint64_t key(GeoPoint p) const { return pack(coord(p.x), coord(p.y)); }

  std::span<const GeoPoint> points_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

/// Hash grid over box extents; answers "which boxes may contain p".
class BoxGrid {
 public:
  BoxGrid(std::span<const OrientedBox> boxes, double cell_size) : cell_(cell_size) {
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const auto e = bounding_extent(boxes[i]);
      for (auto ix = coord(e[0]); ix <= coord(e[2]); ++ix) {
        for (auto iy = coord(e[1]); iy <= coord(e[3]); ++iy) cells_[pack(ix, iy)].push_back(i);
      }
    }
  }

  /// Candidate box indices whose extent cell covers p (superset of hits).
  std::span<const std::size_t> candidates(GeoPoint p) const {
    auto it = cells_.find(pack(coord(p.x), coord(p.y)));
    if (it == cells_.end()) return {};
    return it->second;
  }

 private:
  std::int64_t coord(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
  static std::uint64_t pack(std::int64_t ix, std::int64_t iy) {
    return (static_cast<std::uint64_t>(ix) << 32) ^ (static_cast<std::uint64_t>(iy) & 0xffffffffULL);
  }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace digestmap::geom
