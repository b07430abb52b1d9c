// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

// Planar geometry in a single projected CRS. Coordinates are meters
// (x = easting, y = northing); angles are radians, counter-clockwise.

#pragma once

#include <array>
#include <numbers>

namespace digestmap::geom {

struct GeoPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Rotated rectangle. Construct through `OrientedBox::make`, which
/// validates extents and canonicalizes the angle into [-pi/2, pi/2).
class OrientedBox {
 public:
  OrientedBox() = default;

  /// Throws ContractError on non-finite input or non-positive extents.
  static OrientedBox make(GeoPoint center, double width, double height, double angle = 0.0);

  /// Axis-aligned box from its min/max corners.
  static OrientedBox from_extent(double min_x, double min_y, double max_x, double max_y);

  const GeoPoint& center() const noexcept { return center_; }
  double width() const noexcept { return width_; }
  double height() const noexcept { return height_; }
  double angle() const noexcept { return angle_; }
  double area() const noexcept { return width_ * height_; }

  /// Same box shifted by (dx, dy).
  OrientedBox translated(double dx, double dy) const;

  /// Same box rotated by `theta` about `pivot`.
  OrientedBox rotated_about(GeoPoint pivot, double theta) const;

  friend bool operator==(const OrientedBox&, const OrientedBox&) = default;

 private:
  OrientedBox(GeoPoint c, double w, double h, double a)
      : center_(c), width_(w), height_(h), angle_(a) {}

  GeoPoint center_{};
  double width_ = 1.0;
  double height_ = 1.0;
  double angle_ = 0.0;
};

/// Reduces `angle` modulo pi into [-pi/2, pi/2). A rectangle is invariant
/// under a half turn, so no extent swap is needed.
double canonical_angle(double angle);

/// Corners in counter-clockwise order, starting at the local (-w/2, -h/2).
std::array<GeoPoint, 4> box_corners(const OrientedBox& b);

/// Area of a simple polygon (shoelace); positive for CCW order.
double signed_area(const GeoPoint* pts, int n);

/// Area of a ∩ b, in [0, min(area_a, area_b)].
double convex_intersection_area(const OrientedBox& a, const OrientedBox& b);

double iou(const OrientedBox& a, const OrientedBox& b);

double center_distance(GeoPoint a, GeoPoint b);

/// Boundary-inclusive point-in-box test.
bool contains_point(const OrientedBox& b, GeoPoint p);

/// True when every corner of `inner` lies in `outer`.
bool contains_box(const OrientedBox& outer, const OrientedBox& inner);

/// Axis-aligned extent of the box: {min_x, min_y, max_x, max_y}.
std::array<double, 4> bounding_extent(const OrientedBox& b);

/// Rebuilds a box from four corners in traversal order (either winding).
/// Throws ContractError if the corners do not form a rectangle.
OrientedBox box_from_corners(const std::array<GeoPoint, 4>& corners);

}  // namespace digestmap::geom
