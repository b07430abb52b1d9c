// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

// Detection metrics: distance-based matching, AP over the score sweep,
// IoU-based AP / mAP, and region summary tables.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "digestmap/detection.hpp"

namespace digestmap::eval {

inline constexpr double kDefaultMatchMeters = 200.0;
inline constexpr double kDefaultIouThreshold = 0.5;

enum class Verdict { tp, fp, duplicate };

std::string_view to_string(Verdict v);

struct MatchReport {
  /// Detection indices (into the input) in sweep order: score desc, id asc.
  std::vector<std::size_t> order;
  /// Verdict per input detection index.
  std::vector<Verdict> verdicts;
  /// For each GT, the index of the claiming detection, if any.
  std::vector<std::optional<std::size_t>> gt_claimed_by;
  double threshold_m = kDefaultMatchMeters;

  std::size_t count(Verdict v) const;
  std::size_t matched_gt() const;
};

/// Greedy score-order matching. A detection claims the nearest unclaimed
/// GT within `threshold` (TP); if every GT within reach is already claimed
/// it is a duplicate; otherwise FP.
MatchReport match_by_distance(std::span<const det::Detection> dets,
                              std::span<const det::GroundTruthSite> gts,
                              double threshold = kDefaultMatchMeters);

/// Standard greedy IoU matching: each detection claims the unclaimed GT
/// box with highest IoU if it reaches `iou_threshold`; otherwise FP.
/// Duplicates do not arise.
MatchReport match_by_iou(std::span<const det::Detection> dets,
                         std::span<const geom::OrientedBox> gt_boxes, double iou_threshold);

struct PRSample {
  double cutoff = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

struct PRCurve {
  std::vector<PRSample> samples;
  double ap = 0.0;
};

/// Scores of the detections matched in `report`, by detection index.
/// One sample per distinct score cutoff (descending); duplicates count in
/// neither numerator nor denominator.
PRCurve sweep(const MatchReport& report, std::span<const double> scores, std::size_t n_gt);

/// All-points AP with the monotone (max-to-the-right) precision envelope.
double average_precision(std::span<const PRSample> samples);

/// Largest recall at a cutoff whose precision is exactly 1.
double max_recall_at_full_precision(std::span<const PRSample> samples);

/// Throw DomainError when `gts` is empty.
PRCurve pr_curve(std::span<const det::Detection> dets, std::span<const det::GroundTruthSite> gts,
                 double threshold = kDefaultMatchMeters);
double ap_dist(std::span<const det::Detection> dets, std::span<const det::GroundTruthSite> gts,
               double threshold = kDefaultMatchMeters);
double max_recall_at_full_precision(std::span<const det::Detection> dets,
                                    std::span<const det::GroundTruthSite> gts,
                                    double threshold = kDefaultMatchMeters);

/// AP at an IoU threshold for one class; DomainError when no GT boxes.
double ap_iou(std::span<const det::Detection> dets, std::span<const geom::OrientedBox> gt_boxes,
              double iou_threshold = kDefaultIouThreshold);

struct ClassAp {
  det::DetClass cls;
  double ap = 0.0;
  bool has_gt = false;  // false: excluded from the mean
};

struct MapResult {
  std::vector<ClassAp> per_class;
  double map = 0.0;
  /// Set when at least one class had no GT and was left out.
  bool excluded_classes = false;
};

/// Per-class AP over {site, tank, pile} and their unweighted mean.
MapResult map_iou(std::span<const det::Detection> dets,
                  std::span<const det::GroundTruthSite> gts,
                  double iou_threshold = kDefaultIouThreshold);

/// Mean of per-class APs that have GT.
MapResult mean_ap(std::vector<ClassAp> per_class);

/// One row of the region summary: in-database recall and overall
/// precision including human-confirmed discoveries.
struct RegionRow {
  std::string region;
  std::size_t tp = 0;
  std::size_t gt = 0;
  std::size_t correct = 0;
  std::size_t total = 0;

  double recall() const;
  double precision() const;
  static RegionRow from_counts(std::string region, std::size_t tp, std::size_t gt,
                               std::size_t correct, std::size_t total);
};

/// Matches `dets` against `gts`; detections that are FP there are matched
/// against `external_db` and counted as correct when they hit it.
RegionRow region_report(std::string region, std::span<const det::Detection> dets,
                        std::span<const det::GroundTruthSite> gts,
                        std::span<const det::GroundTruthSite> external_db = {},
                        double threshold = kDefaultMatchMeters);

/// Text table with columns Region, TP, GT, Recall, Correct, Total, Precision.
std::string format_region_table(std::span<const RegionRow> rows);

/// Percentage with one decimal, e.g. 0.857 -> "85.7%".
std::string format_percent(double ratio, int decimals = 1);

/// CSV with header `cutoff,recall,precision`, 6 decimals.
std::string pr_curve_csv(const PRCurve& curve);
void write_pr_curve(const PRCurve& curve, const std::filesystem::path& path);

}  // namespace digestmap::eval
