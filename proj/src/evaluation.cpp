// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "digestmap/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "digestmap/error.hpp"
#include "digestmap/jsonio.hpp"
#include "digestmap/spatial_index.hpp"

namespace digestmap::eval {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::tp: return "TP";
    case Verdict::fp: return "FP";
    case Verdict::duplicate: return "duplicate";
  }
  return "FP";
}

std::size_t MatchReport::count(Verdict v) const {
  return static_cast<std::size_t>(std::count(verdicts.begin(), verdicts.end(), v));
}

std::size_t MatchReport::matched_gt() const {
  return static_cast<std::size_t>(
      std::count_if(gt_claimed_by.begin(), gt_claimed_by.end(), [](const auto& c) { return c.has_value(); }));
}

namespace {

std::vector<std::size_t> sweep_order(std::span<const det::Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return det::ranks_before(dets[a].score, dets[a].id, dets[b].score, dets[b].id);
  });
  return order;
}

void require_gt(std::size_t n_gt) {
  if (n_gt == 0) throw DomainError("no ground truth: recall is undefined");
}

std::vector<double> scores_of(std::span<const det::Detection> dets) {
  std::vector<double> s;
  s.reserve(dets.size());
  for (const auto& d : dets) s.push_back(d.score);
  return s;
}

}  // namespace

MatchReport match_by_distance(std::span<const det::Detection> dets,
                              std::span<const det::GroundTruthSite> gts, double threshold) {
  if (!(threshold > 0.0)) throw ContractError("match threshold must be positive");
  MatchReport report;
  report.threshold_m = threshold;
  report.order = sweep_order(dets);
  report.verdicts.assign(dets.size(), Verdict::fp);
  report.gt_claimed_by.assign(gts.size(), std::nullopt);

  std::vector<geom::GeoPoint> locations;
  locations.reserve(gts.size());
  for (const auto& g : gts) locations.push_back(g.location);
  const geom::PointGrid grid(locations, threshold);

  for (std::size_t di : report.order) {
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    bool any_in_reach = false;
    grid.for_each_within(dets[di].center(), threshold, [&](std::size_t gi, double d) {
      any_in_reach = true;
      if (report.gt_claimed_by[gi]) return;
      if (!best || d < best_d || (d == best_d && gts[gi].id < gts[*best].id)) {
        best = gi;
        best_d = d;
      }
    });
    if (best) {
      report.gt_claimed_by[*best] = di;
      report.verdicts[di] = Verdict::tp;
    } else if (any_in_reach) {
      report.verdicts[di] = Verdict::duplicate;
    }
  }
  return report;
}

MatchReport match_by_iou(std::span<const det::Detection> dets,
                         std::span<const geom::OrientedBox> gt_boxes, double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw ContractError("IoU threshold must be in [0, 1]");
  }
  MatchReport report;
  report.threshold_m = std::numeric_limits<double>::quiet_NaN();
  report.order = sweep_order(dets);
  report.verdicts.assign(dets.size(), Verdict::fp);
  report.gt_claimed_by.assign(gt_boxes.size(), std::nullopt);
  for (std::size_t di : report.order) {
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t gi = 0; gi < gt_boxes.size(); ++gi) {
      if (report.gt_claimed_by[gi]) continue;
      const double v = geom::iou(dets[di].box, gt_boxes[gi]);
      if (v >= iou_threshold && v > best_iou) {
        best = gi;
        best_iou = v;
      }
    }
    if (best) {
      report.gt_claimed_by[*best] = di;
      report.verdicts[di] = Verdict::tp;
    }
  }
  return report;
}

PRCurve sweep(const MatchReport& report, std::span<const double> scores, std::size_t n_gt) {
  require_gt(n_gt);
  PRCurve curve;
  std::size_t tp = 0;
  std::size_t fp = 0;
  const auto& order = report.order;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t di = order[i];
    if (report.verdicts[di] == Verdict::tp) ++tp;
    if (report.verdicts[di] == Verdict::fp) ++fp;
    const bool last_of_cutoff = i + 1 == order.size() || scores[order[i + 1]] != scores[di];
    if (!last_of_cutoff || tp + fp == 0) continue;
    curve.samples.push_back({scores[di], static_cast<double>(tp) / static_cast<double>(n_gt),
                             static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  curve.ap = average_precision(curve.samples);
  return curve;
}

double average_precision(std::span<const PRSample> samples) {
  std::vector<double> envelope(samples.size());
  double running = 0.0;
  for (std::size_t i = samples.size(); i-- > 0;) {
    running = std::max(running, samples[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ap += (samples[i].recall - prev_recall) * envelope[i];
    prev_recall = samples[i].recall;
  }
  return ap;
}

double max_recall_at_full_precision(std::span<const PRSample> samples) {
  double best = 0.0;
  for (const auto& s : samples) {
    if (s.precision == 1.0) best = std::max(best, s.recall);
  }
  return best;
}

PRCurve pr_curve(std::span<const det::Detection> dets, std::span<const det::GroundTruthSite> gts,
                 double threshold) {
  require_gt(gts.size());
  const auto report = match_by_distance(dets, gts, threshold);
  return sweep(report, scores_of(dets), gts.size());
}

double ap_dist(std::span<const det::Detection> dets, std::span<const det::GroundTruthSite> gts,
               double threshold) {
  return pr_curve(dets, gts, threshold).ap;
}

double max_recall_at_full_precision(std::span<const det::Detection> dets,
                                    std::span<const det::GroundTruthSite> gts, double threshold) {
  return max_recall_at_full_precision(pr_curve(dets, gts, threshold).samples);
}

double ap_iou(std::span<const det::Detection> dets, std::span<const geom::OrientedBox> gt_boxes,
              double iou_threshold) {
  require_gt(gt_boxes.size());
  const auto report = match_by_iou(dets, gt_boxes, iou_threshold);
  return sweep(report, scores_of(dets), gt_boxes.size()).ap;
}

MapResult mean_ap(std::vector<ClassAp> per_class) {
  MapResult out;
  out.per_class = std::move(per_class);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : out.per_class) {
    if (!c.has_gt) {
      out.excluded_classes = true;
      continue;
    }
    sum += c.ap;
    ++n;
  }
  out.map = n > 0 ? sum / static_cast<double>(n) : 0.0;
  return out;
}

MapResult map_iou(std::span<const det::Detection> dets,
                  std::span<const det::GroundTruthSite> gts, double iou_threshold) {
  std::vector<ClassAp> per_class;
  for (auto cls : {det::DetClass::site, det::DetClass::tank, det::DetClass::pile}) {
    std::vector<det::Detection> class_dets;
    for (const auto& d : dets) {
      if (d.cls == cls) class_dets.push_back(d);
    }
    std::vector<geom::OrientedBox> boxes;
    for (const auto& g : gts) {
      for (const auto& [c, b] : g.boxes) {
        if (c == cls) boxes.push_back(b);
      }
    }
    ClassAp entry{cls, 0.0, !boxes.empty()};
    if (entry.has_gt) entry.ap = ap_iou(class_dets, boxes, iou_threshold);
    per_class.push_back(entry);
  }
  return mean_ap(std::move(per_class));
}

// --- region table ---

double RegionRow::recall() const {
  return gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(gt);
}

double RegionRow::precision() const {
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

RegionRow RegionRow::from_counts(std::string region, std::size_t tp, std::size_t gt,
                                 std::size_t correct, std::size_t total) {
  if (tp > gt) throw ContractError("region row: TP exceeds GT");
  if (correct > total) throw ContractError("region row: Correct exceeds Total");
  return RegionRow{std::move(region), tp, gt, correct, total};
}

RegionRow region_report(std::string region, std::span<const det::Detection> dets,
                        std::span<const det::GroundTruthSite> gts,
                        std::span<const det::GroundTruthSite> external_db, double threshold) {
  require_gt(gts.size());
  const auto in_db = match_by_distance(dets, gts, threshold);
  RegionRow row;
  row.region = std::move(region);
  row.gt = gts.size();
  row.tp = in_db.count(Verdict::tp);
  row.total = row.tp + in_db.count(Verdict::fp);
  row.correct = row.tp;
  if (!external_db.empty()) {
    std::vector<det::Detection> unmatched;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (in_db.verdicts[i] == Verdict::fp) unmatched.push_back(dets[i]);
    }
    const auto ext = match_by_distance(unmatched, external_db, threshold);
    row.correct += ext.count(Verdict::tp);
    // Repeat hits on one confirmed discovery count as a single detection.
    row.total -= ext.count(Verdict::duplicate);
  }
  return row;
}

std::string format_percent(double ratio, int decimals) {
  return jsonio::format_fixed(ratio * 100.0, decimals) + "%";
}

std::string format_region_table(std::span<const RegionRow> rows) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "Region" << std::right << std::setw(6) << "TP"
      << std::setw(6) << "GT" << std::setw(9) << "Recall" << std::setw(9) << "Correct"
      << std::setw(7) << "Total" << std::setw(11) << "Precision" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(14) << r.region << std::right << std::setw(6) << r.tp
        << std::setw(6) << r.gt << std::setw(9) << format_percent(r.recall()) << std::setw(9)
        << r.correct << std::setw(7) << r.total << std::setw(11) << format_percent(r.precision())
        << '\n';
  }
  return out.str();
}

std::string pr_curve_csv(const PRCurve& curve) {
  std::string out = "cutoff,recall,precision\n";
  for (const auto& s : curve.samples) {
    out += jsonio::format_fixed(s.cutoff, 6) + "," + jsonio::format_fixed(s.recall, 6) + "," +
           jsonio::format_fixed(s.precision, 6) + "\n";
  }
  return out;
}

void write_pr_curve(const PRCurve& curve, const std::filesystem::path& path) {
  jsonio::write_text(path, pr_curve_csv(curve));
}

}  // namespace digestmap::eval
