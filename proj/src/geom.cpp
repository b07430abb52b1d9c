// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "digestmap/geom.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "digestmap/error.hpp"

namespace digestmap::geom {

namespace {

constexpr double kPi = std::numbers::pi;

inline double cross(GeoPoint o, GeoPoint a, GeoPoint b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Intersection of segment p->q with the infinite line through a->b.
GeoPoint line_intersection(GeoPoint p, GeoPoint q, GeoPoint a, GeoPoint b) {
  const double d1 = cross(a, b, p);
  const double d2 = cross(a, b, q);
  const double t = d1 / (d1 - d2);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

}  // namespace

double canonical_angle(double angle) {
  double a = std::fmod(angle + kPi / 2.0, kPi);
  if (a < 0.0) a += kPi;
  a -= kPi / 2.0;
  // fmod can land exactly on the open end after the shift.
  if (a >= kPi / 2.0) a -= kPi;
  return a;
}

OrientedBox OrientedBox::make(GeoPoint center, double width, double height, double angle) {
  if (!std::isfinite(center.x) || !std::isfinite(center.y) || !std::isfinite(angle)) {
    throw ContractError("oriented box: non-finite center or angle");
  }
  if (!(width > 0.0) || !(height > 0.0) || !std::isfinite(width) || !std::isfinite(height)) {
    throw ContractError("oriented box: width and height must be positive, got " +
                        std::to_string(width) + " x " + std::to_string(height));
  }
  return OrientedBox(center, width, height, canonical_angle(angle));
}

OrientedBox OrientedBox::from_extent(double min_x, double min_y, double max_x, double max_y) {
  return make({(min_x + max_x) / 2.0, (min_y + max_y) / 2.0}, max_x - min_x, max_y - min_y, 0.0);
}

OrientedBox OrientedBox::translated(double dx, double dy) const {
  return make({center_.x + dx, center_.y + dy}, width_, height_, angle_);
}

OrientedBox OrientedBox::rotated_about(GeoPoint pivot, double theta) const {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double dx = center_.x - pivot.x;
  const double dy = center_.y - pivot.y;
  return make({pivot.x + c * dx - s * dy, pivot.y + s * dx + c * dy}, width_, height_,
              angle_ + theta);
}

namespace {

// Corners of b expressed relative to `origin`.
std::array<GeoPoint, 4> corners_about(const OrientedBox& b, GeoPoint origin) {
  const double ox = b.center().x - origin.x;
  const double oy = b.center().y - origin.y;
  const double c = std::cos(b.angle());
  const double s = std::sin(b.angle());
  const double hw = b.width() / 2.0;
  const double hh = b.height() / 2.0;
  const std::array<std::array<double, 2>, 4> local{{{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}};
  std::array<GeoPoint, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    const double u = local[i][0];
    const double v = local[i][1];
    out[i] = {ox + c * u - s * v, oy + s * u + c * v};
  }
  return out;
}

}  // namespace

std::array<GeoPoint, 4> box_corners(const OrientedBox& b) {
  return corners_about(b, {});
}

double signed_area(const GeoPoint* pts, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const GeoPoint& p = pts[i];
    const GeoPoint& q = pts[(i + 1) % n];
    acc += p.x * q.y - q.x * p.y;
  }
  return acc / 2.0;
}

double convex_intersection_area(const OrientedBox& a, const OrientedBox& b) {
  // Work relative to a's center so large projected coordinates do not
  // swamp the clipping arithmetic.
  const auto pa = corners_about(a, a.center());
  const auto pb = corners_about(b, a.center());

  // Sutherland-Hodgman: clip a against each (CCW) edge of b.
  std::vector<GeoPoint> poly(pa.begin(), pa.end());
  std::vector<GeoPoint> next;
  poly.reserve(8);
  next.reserve(8);
  for (int e = 0; e < 4 && !poly.empty(); ++e) {
    const GeoPoint ea = pb[e];
    const GeoPoint eb = pb[(e + 1) % 4];
    next.clear();
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const GeoPoint cur = poly[i];
      const GeoPoint prev = poly[(i + n - 1) % n];
      const bool cur_in = cross(ea, eb, cur) >= 0.0;
      const bool prev_in = cross(ea, eb, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) next.push_back(line_intersection(prev, cur, ea, eb));
        next.push_back(cur);
      } else if (prev_in) {
        next.push_back(line_intersection(prev, cur, ea, eb));
      }
    }
    poly.swap(next);
  }
  if (poly.size() < 3) return 0.0;
  const double area = std::abs(signed_area(poly.data(), static_cast<int>(poly.size())));
  return std::clamp(area, 0.0, std::min(a.area(), b.area()));
}

double iou(const OrientedBox& a, const OrientedBox& b) {
  if (a == b) return 1.0;
  const double inter = convex_intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double center_distance(GeoPoint a, GeoPoint b) { return std::hypot(a.x - b.x, a.y - b.y); }

bool contains_point(const OrientedBox& b, GeoPoint p) {
  const double c = std::cos(b.angle());
  const double s = std::sin(b.angle());
  const double dx = p.x - b.center().x;
  const double dy = p.y - b.center().y;
  // Rotate into the box frame.
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  const double tol = 1e-9 * std::max(b.width(), b.height());
  return std::abs(u) <= b.width() / 2.0 + tol && std::abs(v) <= b.height() / 2.0 + tol;
}

bool contains_box(const OrientedBox& outer, const OrientedBox& inner) {
  const auto corners = box_corners(inner);
  return std::all_of(corners.begin(), corners.end(),
                     [&](GeoPoint p) { return contains_point(outer, p); });
}

std::array<double, 4> bounding_extent(const OrientedBox& b) {
  const double c = std::abs(std::cos(b.angle()));
  const double s = std::abs(std::sin(b.angle()));
  const double hx = (c * b.width() + s * b.height()) / 2.0;
  const double hy = (s * b.width() + c * b.height()) / 2.0;
  return {b.center().x - hx, b.center().y - hy, b.center().x + hx, b.center().y + hy};
}

OrientedBox box_from_corners(const std::array<GeoPoint, 4>& corners) {
  const GeoPoint center{(corners[0].x + corners[1].x + corners[2].x + corners[3].x) / 4.0,
                        (corners[0].y + corners[1].y + corners[2].y + corners[3].y) / 4.0};
  const double ex = corners[1].x - corners[0].x;
  const double ey = corners[1].y - corners[0].y;
  const double fx = corners[2].x - corners[1].x;
  const double fy = corners[2].y - corners[1].y;
  const double w = std::hypot(ex, ey);
  const double h = std::hypot(fx, fy);
  if (w <= 0.0 || h <= 0.0) throw ContractError("box_from_corners: degenerate edge");
  const double dot = (ex * fx + ey * fy) / (w * h);
  const double diag1 = center_distance(corners[0], corners[2]);
  const double diag2 = center_distance(corners[1], corners[3]);
  if (std::abs(dot) > 1e-6 || std::abs(diag1 - diag2) > 1e-6 * std::max(diag1, diag2)) {
    throw ContractError("box_from_corners: corners do not form a rectangle");
  }
  double angle = std::atan2(ey, ex);
  // Clockwise input: the second edge turns right, so mirror the frame.
  if (ex * fy - ey * fx < 0.0) angle = std::atan2(-fy, -fx);
  return OrientedBox::make(center, (ex * fy - ey * fx < 0.0) ? h : w,
                           (ex * fy - ey * fx < 0.0) ? w : h, angle);
}

}  // namespace digestmap::geom
