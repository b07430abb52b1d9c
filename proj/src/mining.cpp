// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "digestmap/mining.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iterator>
#include <set>
#include <unordered_set>

#include "digestmap/error.hpp"
#include "digestmap/jsonio.hpp"
#include "digestmap/spatial_index.hpp"

namespace digestmap::mine {

using jsonio::ordered_json;

const Candidate* ReviewBatch::find(std::string_view candidate_id) const {
  for (const auto& c : candidates) {
    if (c.id() == candidate_id) return &c;
  }
  return nullptr;
}

std::string_view to_string(VerdictKind v) {
  switch (v) {
    case VerdictKind::biodigester: return "biodigester";
    case VerdictKind::not_biodigester: return "not_biodigester";
    case VerdictKind::unclear: return "unclear";
  }
  return "unclear";
}

VerdictKind parse_verdict(std::string_view s) {
  if (s == "biodigester") return VerdictKind::biodigester;
  if (s == "not_biodigester") return VerdictKind::not_biodigester;
  if (s == "unclear") return VerdictKind::unclear;
  throw ParseError("unknown verdict '" + std::string(s) + "'", 0, "verdict");
}

IterationLedger initial_ledger(std::size_t known_db_size, std::size_t annotated_tiles,
                               std::size_t background_tiles) {
  IterationLedger l;
  l.iteration = 0;
  l.known_db_size = known_db_size;
  l.annotated_tiles = annotated_tiles;
  l.background_tiles = background_tiles;
  l.alpha = det::dilution(annotated_tiles, annotated_tiles + background_tiles);
  return l;
}

ReviewBatch build_review_batch(std::span<const parts::ScoredSite> scored,
                               std::span<const det::GroundTruthSite> known,
                               const BatchOptions& options) {
  if (options.k == 0) throw ContractError("review batch size k must be positive");
  if (!(options.match_threshold_m > 0.0)) throw ContractError("match threshold must be positive");

  std::vector<geom::GeoPoint> blocked;
  blocked.reserve(known.size() + options.hard_negatives.size());
  for (const auto& g : known) blocked.push_back(g.location);
  std::unordered_set<std::string> rejected_ids;
  for (const auto& h : options.hard_negatives) {
    blocked.push_back(h.center());
    rejected_ids.insert(h.id);
  }
  const geom::PointGrid grid(blocked, options.match_threshold_m);

  std::vector<const parts::ScoredSite*> pool;
  for (const auto& s : scored) {
    if (rejected_ids.count(s.detection.id)) continue;
    bool near = false;
    grid.for_each_within(s.detection.center(), options.match_threshold_m,
                         [&](std::size_t, double) { near = true; });
    if (!near) pool.push_back(&s);
  }

  std::vector<geom::GeoPoint> centers;
  std::vector<double> scores;
  std::vector<std::string> ids;
  for (const auto* s : pool) {
    centers.push_back(s->detection.center());
    scores.push_back(s->fused_score);
    ids.push_back(s->detection.id);
  }
  const auto survivors = det::greedy_cluster(centers, scores, ids, options.dedup_radius_m);

  ReviewBatch batch;
  batch.iteration = options.iteration;
  batch.k = options.k;
  for (std::size_t i : survivors) {
    if (batch.candidates.size() == options.k) break;
    const auto& s = *pool[i];
    batch.candidates.push_back(
        {s.detection, s.fused_score, s.baseline_score, s.tank_mode, s.pile_mode, std::nullopt});
  }
  return batch;
}

std::map<std::string, VerdictRecord> latest_verdicts(std::span<const VerdictRecord> log,
                                                     int iteration) {
  std::map<std::string, VerdictRecord> latest;
  for (const auto& v : log) {
    if (v.iteration == iteration) latest[v.candidate_id] = v;
  }
  return latest;
}

VerdictOutcome apply_verdicts(const ReviewBatch& batch, std::span<const VerdictRecord> verdicts,
                              const IterationLedger& previous,
                              std::optional<std::size_t> max_hard_negatives) {
  const auto latest = latest_verdicts(verdicts, batch.iteration);
  for (const auto& [id, v] : latest) {
    if (!batch.find(id)) {
      throw ReferenceError("verdict for unknown candidate '" + id + "' in iteration " +
                           std::to_string(batch.iteration));
    }
  }

  VerdictOutcome out;
  for (const auto& c : batch.candidates) {
    auto it = latest.find(c.id());
    if (it == latest.end()) {
      out.unreviewed.push_back(c.id());
      continue;
    }
    switch (it->second.verdict) {
      case VerdictKind::biodigester:
        out.confirmed_new.push_back(det::site_from_detection(c.detection, det::SiteSource::new_detection));
        break;
      case VerdictKind::not_biodigester:
        if (!max_hard_negatives || out.hard_negatives.size() < *max_hard_negatives) {
          out.hard_negatives.push_back(c.detection);
        }
        break;
      case VerdictKind::unclear:
        out.unclear.push_back(c.id());
        break;
    }
  }

  IterationLedger& next = out.ledger;
  next.iteration = previous.iteration + 1;
  // Sites confirmed in the previous round joined the database before this one.
  next.known_db_size = previous.known_db_size + previous.new_detections;
  next.new_detections = out.confirmed_new.size();
  next.hard_negatives = previous.hard_negatives + out.hard_negatives.size();
  next.annotated_tiles = previous.annotated_tiles;
  next.background_tiles = previous.background_tiles + out.hard_negatives.size();
  next.alpha = det::dilution(next.annotated_tiles, next.annotated_tiles + next.background_tiles);
  return out;
}

std::vector<DilutionPoint> dilution_series(std::span<const IterationLedger> ledgers,
                                           std::optional<std::size_t> annotated) {
  std::vector<DilutionPoint> out;
  for (const auto& l : ledgers) {
    const std::size_t a = annotated.value_or(l.annotated_tiles);
    out.push_back({l.iteration, det::dilution(a, a + l.background_tiles)});
  }
  return out;
}

// --- files ---

std::string candidate_to_line(const Candidate& c) {
  ordered_json rec;
  rec["candidate_id"] = c.id();
  rec["fused_score"] = c.fused_score;
  rec["cx"] = c.detection.center().x;
  rec["cy"] = c.detection.center().y;
  rec["tile_id"] = c.detection.tile_id;
  if (c.chip_uri) rec["chip_uri"] = *c.chip_uri;
  rec["baseline_score"] = c.baseline_score;
  rec["w"] = c.detection.box.width();
  rec["h"] = c.detection.box.height();
  rec["angle"] = c.detection.box.angle();
  rec["crs"] = c.detection.crs;
  rec["tank_mode"] = c.tank_mode;
  rec["pile_mode"] = c.pile_mode;
  return jsonio::dump(rec);
}

std::filesystem::path batch_path(const std::filesystem::path& dir, int iteration) {
  return dir / ("batch_" + std::to_string(iteration) + ".jsonl");
}

void write_batch(const ReviewBatch& batch, const std::filesystem::path& path) {
  std::string text;
  for (const auto& c : batch.candidates) text += candidate_to_line(c) + "\n";
  jsonio::write_text(path, text);
}

ReviewBatch read_batch(const std::filesystem::path& path, int iteration) {
  ReviewBatch batch;
  batch.iteration = iteration;
  jsonio::for_each_record(path, [&](std::size_t line, const ordered_json& rec) {
    Candidate c;
    c.detection.id = jsonio::get_string(rec, "candidate_id", line);
    c.detection.cls = det::DetClass::site;
    c.fused_score = jsonio::get_number(rec, "fused_score", line);
    if (c.fused_score < 0.0 || c.fused_score > 1.0) {
      throw ValidationError("score outside [0,1]", line, "fused_score");
    }
    const double cx = jsonio::get_number(rec, "cx", line);
    const double cy = jsonio::get_number(rec, "cy", line);
    const double w = rec.contains("w") ? jsonio::get_number(rec, "w", line) : 1.0;
    const double h = rec.contains("h") ? jsonio::get_number(rec, "h", line) : 1.0;
    const double a = rec.contains("angle") ? jsonio::get_number(rec, "angle", line) : 0.0;
    if (!(w > 0.0) || !(h > 0.0)) throw ValidationError("box extents must be positive", line, "w");
    c.detection.box = geom::OrientedBox::make({cx, cy}, w, h, a);
    c.detection.tile_id = jsonio::get_string(rec, "tile_id", line);
    c.detection.crs = rec.contains("crs") ? jsonio::get_string(rec, "crs", line) : "";
    c.baseline_score = rec.contains("baseline_score")
                           ? jsonio::get_number(rec, "baseline_score", line)
                           : c.fused_score;
    c.detection.score = c.baseline_score;
    if (rec.contains("chip_uri") && !rec["chip_uri"].is_null()) {
      c.chip_uri = jsonio::get_string(rec, "chip_uri", line);
    }
    if (rec.contains("tank_mode")) c.tank_mode = static_cast<std::size_t>(jsonio::get_number(rec, "tank_mode", line));
    if (rec.contains("pile_mode")) c.pile_mode = static_cast<std::size_t>(jsonio::get_number(rec, "pile_mode", line));
    batch.candidates.push_back(std::move(c));
  });
  batch.k = std::max<std::size_t>(batch.candidates.size(), 1);
  return batch;
}

std::string verdict_to_line(const VerdictRecord& v) {
  ordered_json rec;
  rec["candidate_id"] = v.candidate_id;
  rec["verdict"] = std::string(to_string(v.verdict));
  rec["reviewer"] = v.reviewer;
  rec["timestamp"] = v.timestamp;
  rec["iteration"] = v.iteration;
  return jsonio::dump(rec);
}

std::vector<VerdictRecord> read_verdict_log(const std::filesystem::path& path) {
  std::vector<VerdictRecord> out;
  if (!std::filesystem::exists(path)) return out;
  jsonio::for_each_record(path, [&](std::size_t line, const ordered_json& rec) {
    VerdictRecord v;
    v.candidate_id = jsonio::get_string(rec, "candidate_id", line);
    try {
      v.verdict = parse_verdict(jsonio::get_string(rec, "verdict", line));
    } catch (const ParseError& e) {
      if (e.line() != 0) throw;
      throw ParseError("unknown verdict", line, "verdict");
    }
    v.reviewer = jsonio::get_string(rec, "reviewer", line);
    v.timestamp = jsonio::get_string(rec, "timestamp", line);
    v.iteration = static_cast<int>(jsonio::get_number(rec, "iteration", line));
    out.push_back(std::move(v));
  });
  return out;
}

void append_verdict(const std::filesystem::path& path, const VerdictRecord& v) {
  const std::string line = verdict_to_line(v) + "\n";
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot open verdict log " + path.string() + ": " + std::strerror(errno));
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw IoError("verdict log write failed: " + std::string(std::strerror(err)));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const int err = errno;
    ::close(fd);
    throw IoError("verdict log fsync failed: " + std::string(std::strerror(err)));
  }
  ::close(fd);
}

std::string ledger_to_line(const IterationLedger& l) {
  ordered_json rec;
  rec["iteration"] = l.iteration;
  rec["known_db_size"] = l.known_db_size;
  rec["new_detections"] = l.new_detections;
  rec["hard_negatives"] = l.hard_negatives;
  rec["background_tiles"] = l.background_tiles;
  rec["annotated_tiles"] = l.annotated_tiles;
  rec["alpha"] = l.alpha;
  return jsonio::dump(rec);
}

std::vector<IterationLedger> read_ledgers(const std::filesystem::path& path) {
  std::vector<IterationLedger> out;
  jsonio::for_each_record(path, [&](std::size_t line, const ordered_json& rec) {
    auto count = [&](const char* f) {
      const double v = jsonio::get_number(rec, f, line);
      if (v < 0.0) throw ValidationError("negative count", line, f);
      return static_cast<std::size_t>(v);
    };
    IterationLedger l;
    l.iteration = static_cast<int>(jsonio::get_number(rec, "iteration", line));
    l.known_db_size = count("known_db_size");
    l.new_detections = count("new_detections");
    l.hard_negatives = count("hard_negatives");
    l.background_tiles = count("background_tiles");
    l.annotated_tiles = rec.contains("annotated_tiles") ? count("annotated_tiles") : kDefaultAnnotatedTiles;
    l.alpha = jsonio::get_number(rec, "alpha", line);
    out.push_back(l);
  });
  return out;
}

void append_ledger(const std::filesystem::path& path, const IterationLedger& l) {
  std::string existing;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    existing.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (!existing.empty() && existing.back() != '\n') existing += '\n';
  }
  jsonio::write_text(path, existing + ledger_to_line(l) + "\n");
}

void write_hard_negative_tiles(std::span<const det::Detection> hard_negatives,
                               const std::filesystem::path& path) {
  std::set<std::string> seen;
  std::string text;
  for (const auto& h : hard_negatives) {
    if (seen.insert(h.tile_id).second) text += h.tile_id + "\n";
  }
  jsonio::write_text(path, text);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms.count()));
  return out;
}

}  // namespace digestmap::mine
