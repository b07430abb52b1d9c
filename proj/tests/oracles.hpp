// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference computations for tests. Written against first principles, not
// against the library, so a shared bug cannot hide.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// P(k successes) by summing over all 2^n outcomes.
inline std::vector<double> subset_enumeration(const std::vector<double>& p) {
  const std::size_t n = p.size();
  std::vector<double> pmf(n + 1, 0.0);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double prob = 1.0;
    int k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        prob *= p[i];
        ++k;
      } else {
        prob *= 1.0 - p[i];
      }
    }
    pmf[static_cast<std::size_t>(k)] += prob;
  }
  return pmf;
}

struct Rect {
  double cx, cy, w, h, angle;
};

// Inside test in the rectangle's own frame.
inline bool inside(const Rect& r, double x, double y) {
  const double dx = x - r.cx, dy = y - r.cy;
  const double c = std::cos(r.angle), s = std::sin(r.angle);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return std::abs(u) <= r.w / 2 && std::abs(v) <= r.h / 2;
}

// Plain Monte-Carlo estimate of |a ∩ b| over the square [-half, half]^2
// centred on a.
inline double mc_intersection(const Rect& a, const Rect& b, double half, std::size_t samples,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half, half);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = a.cx + u(rng), y = a.cy + u(rng);
    if (inside(a, x, y) && inside(b, x, y)) ++hits;
  }
  return 4.0 * half * half * static_cast<double>(hits) / static_cast<double>(samples);
}

// Jittered-grid estimate: one random point per cell of an n x n grid laid
// over a in its own frame.
inline double stratified_intersection(const Rect& a, const Rect& b, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double c = std::cos(a.angle), s = std::sin(a.angle);
  std::size_t hits = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double lu = (-0.5 + (i + u(rng)) / n) * a.w;
      const double lv = (-0.5 + (j + u(rng)) / n) * a.h;
      const double x = a.cx + c * lu - s * lv;
      const double y = a.cy + s * lu + c * lv;
      if (inside(b, x, y)) ++hits;
    }
  }
  return a.w * a.h * static_cast<double>(hits) / (static_cast<double>(n) * n);
}

// All-points interpolated AP from a ranked list of hits (true = TP) where
// duplicates were already removed: for each recall level reached, take the
// best precision at that recall or beyond.
inline double envelope_ap(const std::vector<bool>& ranked_tp, std::size_t n_gt) {
  std::vector<double> rec, prec;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked_tp.size(); ++i) {
    if (ranked_tp[i]) ++tp;
    rec.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  double ap = 0.0, prev_r = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (rec[i] <= prev_r) continue;
    double best = 0.0;
    for (std::size_t j = i; j < rec.size(); ++j) best = std::max(best, prec[j]);
    ap += (rec[i] - prev_r) * best;
    prev_r = rec[i];
  }
  return ap;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("digestmap_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
