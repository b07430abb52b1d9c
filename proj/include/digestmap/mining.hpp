// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

// Hard-negative mining loop: review batches of confident unmatched
// detections, human verdicts, and per-iteration dataset bookkeeping.

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "digestmap/detection.hpp"
#include "digestmap/partscore.hpp"

namespace digestmap::mine {

inline constexpr std::size_t kDefaultBatchSize = 100;
inline constexpr int kDefaultIterations = 3;
inline constexpr std::size_t kDefaultAnnotatedTiles = 163;

struct Candidate {
  det::Detection detection;
  double fused_score = 0.0;
  double baseline_score = 0.0;
  std::size_t tank_mode = 0;
  std::size_t pile_mode = 0;
  std::optional<std::string> chip_uri;

  const std::string& id() const { return detection.id; }
};

struct ReviewBatch {
  int iteration = 0;
  std::size_t k = kDefaultBatchSize;
  std::vector<Candidate> candidates;  // fused score desc, id asc

  const Candidate* find(std::string_view candidate_id) const;
};

enum class VerdictKind { biodigester, not_biodigester, unclear };

std::string_view to_string(VerdictKind v);
/// Throws ParseError on anything but the three verdict names.
VerdictKind parse_verdict(std::string_view s);

struct VerdictRecord {
  std::string candidate_id;
  VerdictKind verdict = VerdictKind::unclear;
  std::string reviewer;
  std::string timestamp;  // ISO-8601 UTC, e.g. 2026-10-16T09:30:00Z
  int iteration = 0;
};

struct IterationLedger {
  int iteration = 0;
  std::size_t known_db_size = 0;
  std::size_t new_detections = 0;
  std::size_t hard_negatives = 0;  // cumulative
  std::size_t background_tiles = 0;
  std::size_t annotated_tiles = kDefaultAnnotatedTiles;
  double alpha = 0.0;
};

/// Iteration-0 ledger: nothing reviewed yet.
IterationLedger initial_ledger(std::size_t known_db_size,
                               std::size_t annotated_tiles = kDefaultAnnotatedTiles,
                               std::size_t background_tiles = kDefaultAnnotatedTiles);

struct BatchOptions {
  std::size_t k = kDefaultBatchSize;
  double match_threshold_m = 200.0;
  double dedup_radius_m = 200.0;
  int iteration = 0;
  /// Previously rejected detections; candidates with the same id or
  /// within the match threshold of one are not offered again.
  std::span<const det::Detection> hard_negatives = {};
};

/// Drops detections within the threshold of a known site or a hard
/// negative, merges survivors by the dedup rule on fused score, and keeps
/// the top k.
ReviewBatch build_review_batch(std::span<const parts::ScoredSite> scored,
                               std::span<const det::GroundTruthSite> known,
                               const BatchOptions& options);

struct VerdictOutcome {
  std::vector<det::Detection> hard_negatives;  // newly rejected, batch order
  std::vector<det::GroundTruthSite> confirmed_new;
  std::vector<std::string> unclear;  // excluded for now, may resurface
  std::vector<std::string> unreviewed;
  IterationLedger ledger;
};

/// Latest verdict per candidate (last record wins), restricted to records
/// of `iteration`.
std::map<std::string, VerdictRecord> latest_verdicts(std::span<const VerdictRecord> log,
                                                     int iteration);

/// Applies the latest verdict of each batch candidate. At most
/// `max_hard_negatives` rejections (the most confident) become hard
/// negatives; the ledger advances one iteration. Throws ReferenceError on
/// a verdict for a candidate not in the batch.
VerdictOutcome apply_verdicts(const ReviewBatch& batch, std::span<const VerdictRecord> verdicts,
                              const IterationLedger& previous,
                              std::optional<std::size_t> max_hard_negatives = std::nullopt);

struct DilutionPoint {
  int iteration = 0;
  double alpha = 0.0;
};

/// alpha = annotated / (annotated + background) for each ledger.
std::vector<DilutionPoint> dilution_series(std::span<const IterationLedger> ledgers,
                                           std::optional<std::size_t> annotated = std::nullopt);

// --- files ---

std::string candidate_to_line(const Candidate& c);
void write_batch(const ReviewBatch& batch, const std::filesystem::path& path);
/// `iteration` comes from the file name or caller; candidates keep file order.
ReviewBatch read_batch(const std::filesystem::path& path, int iteration);
std::filesystem::path batch_path(const std::filesystem::path& dir, int iteration);

std::string verdict_to_line(const VerdictRecord& v);
std::vector<VerdictRecord> read_verdict_log(const std::filesystem::path& path);
/// Appends one record and flushes it to stable storage before returning.
void append_verdict(const std::filesystem::path& path, const VerdictRecord& v);

std::string ledger_to_line(const IterationLedger& l);
std::vector<IterationLedger> read_ledgers(const std::filesystem::path& path);
void append_ledger(const std::filesystem::path& path, const IterationLedger& l);

/// One tile id per line, first occurrence order, no repeats.
void write_hard_negative_tiles(std::span<const det::Detection> hard_negatives,
                               const std::filesystem::path& path);

/// Current UTC time as ISO-8601 with a trailing Z.
std::string utc_now();

}  // namespace digestmap::mine
