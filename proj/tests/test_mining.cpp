// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "digestmap/error.hpp"
#include "digestmap/evaluation.hpp"
#include "digestmap/mining.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace digestmap;
using namespace digestmap::mine;
using parts::ScoredSite;

namespace {

ScoredSite scored(std::string id, double x, double y, double fused) {
  ScoredSite s;
  s.detection = fixture::site(std::move(id), x, y, std::min(1.0, fused + 0.1));
  s.baseline_score = s.detection.score;
  s.fused_score = fused;
  return s;
}

// n candidates 1 km apart along a line, scores descending from 0.99.
std::vector<ScoredSite> row_of(std::size_t n, double y = 0.0) {
  std::vector<ScoredSite> out;
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "c%05zu", i);
    out.push_back(scored(id, 1000.0 * static_cast<double>(i), y, 0.99 - 0.0005 * static_cast<double>(i)));
  }
  return out;
}

VerdictRecord verdict(const std::string& id, VerdictKind v, int iteration, std::string ts = "2026-01-01T00:00:00Z") {
  return {id, v, "rev", std::move(ts), iteration};
}

std::set<std::string> batch_ids(const ReviewBatch& b) {
  std::set<std::string> out;
  for (const auto& c : b.candidates) out.insert(c.id());
  return out;
}

}  // namespace

TEST_CASE("review batch") {
  CHECK(BatchOptions{}.k == 100);
  const std::vector<det::GroundTruthSite> known{fixture::gt("k0", 0, 0), fixture::gt("k1", 1000, 0)};
  const std::vector<ScoredSite> all_known{scored("a", 10, 0, 0.9), scored("b", 1100, 0, 0.8)};
  CHECK(build_review_batch(all_known, known, {}).candidates.empty());

  const std::vector<ScoredSite> five{scored("a", 0, 5000, 0.2), scored("b", 0, 10000, 0.9), scored("c", 0, 15000, 0.5),
                                     scored("d", 0, 20000, 0.7), scored("e", 0, 25000, 0.1)};
  BatchOptions opts;
  opts.k = 3;
  opts.iteration = 1;
  const auto batch = build_review_batch(five, known, opts);
  REQUIRE(batch.candidates.size() == 3);
  CHECK(batch.candidates[0].id() == "b");
  CHECK(batch.candidates[1].id() == "d");
  CHECK(batch.candidates[2].id() == "c");
  CHECK(batch.iteration == 1);

  opts.k = 0;
  CHECK_THROWS_AS(build_review_batch(five, known, opts), ContractError);
}

TEST_CASE("review batch properties") {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> pos(0, 30000), sc(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<det::GroundTruthSite> known;
    std::vector<ScoredSite> cands;
    for (int i = 0; i < 60; ++i) {
      const double x = pos(rng), y = pos(rng);
      known.push_back(fixture::gt("k" + std::to_string(i), x, y));
    }
    for (int i = 0; i < 400; ++i) {
      const double x = pos(rng), y = pos(rng), s = std::round(sc(rng) * 20) / 20;  // many ties
      cands.push_back(scored("c" + std::to_string(i), x, y, s));
    }
    BatchOptions opts;
    opts.k = 50;
    const auto batch = build_review_batch(cands, known, opts);
    CHECK(batch.candidates.size() <= 50);
    std::vector<det::Detection> dets;
    for (const auto& c : batch.candidates) dets.push_back(c.detection);
    // Nothing in the batch re-matches the known DB.
    CHECK(eval::match_by_distance(dets, known, 200).count(eval::Verdict::tp) == 0);
    CHECK(eval::match_by_distance(dets, known, 200).count(eval::Verdict::duplicate) == 0);
    for (std::size_t i = 1; i < batch.candidates.size(); ++i) {
      const auto& a = batch.candidates[i - 1];
      const auto& b = batch.candidates[i];
      CHECK(det::ranks_before(a.fused_score, a.id(), b.fused_score, b.id()));
    }
  }
}

TEST_CASE("verdicts: last write wins and replays are idempotent") {
  const auto cands = row_of(4);
  BatchOptions opts;
  opts.iteration = 1;
  const auto batch = build_review_batch(cands, {}, opts);
  const auto prev = initial_ledger(10);

  std::vector<VerdictRecord> log{verdict("c00000", VerdictKind::not_biodigester, 1),
                                 verdict("c00001", VerdictKind::biodigester, 1),
                                 verdict("c00000", VerdictKind::biodigester, 1, "2026-01-01T00:00:05Z"),
                                 verdict("c00002", VerdictKind::unclear, 1)};
  const auto out = apply_verdicts(batch, log, prev);
  CHECK(out.confirmed_new.size() == 2);
  CHECK(out.hard_negatives.empty());
  CHECK(out.unclear == std::vector<std::string>{"c00002"});
  CHECK(out.unreviewed == std::vector<std::string>{"c00003"});

  auto replayed = log;
  replayed.insert(replayed.end(), log.begin(), log.end());
  const auto again = apply_verdicts(batch, replayed, prev);
  CHECK(ledger_to_line(again.ledger) == ledger_to_line(out.ledger));
  CHECK(again.confirmed_new.size() == out.confirmed_new.size());

  // Records from other iterations are ignored.
  log.push_back(verdict("zzz", VerdictKind::biodigester, 7));
  CHECK_NOTHROW(apply_verdicts(batch, log, prev));
  log.push_back(verdict("zzz", VerdictKind::biodigester, 1));
  CHECK_THROWS_AS(apply_verdicts(batch, log, prev), ReferenceError);
}

TEST_CASE("all unclear leaves the sets unchanged") {
  const auto batch = build_review_batch(row_of(5), {}, BatchOptions{.iteration = 1});
  std::vector<VerdictRecord> log;
  for (const auto& c : batch.candidates) log.push_back(verdict(c.id(), VerdictKind::unclear, 1));
  const auto prev = initial_ledger(20);
  const auto out = apply_verdicts(batch, log, prev);
  CHECK(out.confirmed_new.empty());
  CHECK(out.hard_negatives.empty());
  CHECK(out.ledger.hard_negatives == prev.hard_negatives);
  CHECK(out.ledger.known_db_size == prev.known_db_size);
  CHECK(out.ledger.background_tiles == prev.background_tiles);

  // They come back in the next batch; rejected ones do not.
  std::vector<det::Detection> rejected{batch.candidates[0].detection};
  const auto next = build_review_batch(row_of(5), {}, BatchOptions{.iteration = 2, .hard_negatives = rejected});
  CHECK(batch_ids(next).count(batch.candidates[1].id()) == 1);
  CHECK(batch_ids(next).count(batch.candidates[0].id()) == 0);
}

TEST_CASE("three-iteration loop with k = 100") {
  // Every reviewed candidate is rejected: 100 hard negatives per round.
  auto pool = row_of(400);
  std::vector<det::Detection> hard;
  std::vector<IterationLedger> ledgers{initial_ledger(203)};
  for (int it = 1; it <= 2; ++it) {
    BatchOptions opts;
    opts.iteration = it;
    opts.hard_negatives = hard;
    const auto batch = build_review_batch(pool, {}, opts);
    REQUIRE(batch.candidates.size() == 100);
    std::vector<VerdictRecord> log;
    for (const auto& c : batch.candidates) log.push_back(verdict(c.id(), VerdictKind::not_biodigester, it));
    const auto out = apply_verdicts(batch, log, ledgers.back(), 100);
    hard.insert(hard.end(), out.hard_negatives.begin(), out.hard_negatives.end());
    ledgers.push_back(out.ledger);
  }
  CHECK(ledgers[0].hard_negatives == 0);
  CHECK(ledgers[1].hard_negatives == 100);
  CHECK(ledgers[2].hard_negatives == 200);
  const auto alpha = dilution_series(ledgers);
  CHECK(eval::format_percent(alpha[0].alpha, 0) == "50%");
  CHECK(eval::format_percent(alpha[1].alpha, 0) == "38%");
  CHECK(eval::format_percent(alpha[2].alpha, 0) == "31%");
  for (std::size_t i = 1; i < ledgers.size(); ++i) {
    CHECK(ledgers[i].hard_negatives >= ledgers[i - 1].hard_negatives);
    CHECK(ledgers[i].known_db_size >= ledgers[i - 1].known_db_size);
  }
}

TEST_CASE("ledger rows of the published loop") {
  // Larger review batches with 149 and 205 confirmations, hard negatives
  // capped at 100 per round.
  auto pool = row_of(1200);
  std::vector<det::GroundTruthSite> known;
  std::vector<det::Detection> hard;
  std::vector<IterationLedger> ledgers{initial_ledger(203)};
  const std::size_t confirm[] = {149, 205};
  for (int it = 1; it <= 2; ++it) {
    BatchOptions opts;
    opts.k = 400;
    opts.iteration = it;
    opts.hard_negatives = hard;
    const auto batch = build_review_batch(pool, known, opts);
    std::vector<VerdictRecord> log;
    for (std::size_t i = 0; i < batch.candidates.size(); ++i) {
      const auto v = i < confirm[it - 1] ? VerdictKind::biodigester : VerdictKind::not_biodigester;
      log.push_back(verdict(batch.candidates[i].id(), v, it));
    }
    const auto out = apply_verdicts(batch, log, ledgers.back(), 100);
    known.insert(known.end(), out.confirmed_new.begin(), out.confirmed_new.end());
    hard.insert(hard.end(), out.hard_negatives.begin(), out.hard_negatives.end());
    ledgers.push_back(out.ledger);
  }
  CHECK(ledgers[1].known_db_size == 203);
  CHECK(ledgers[1].new_detections == 149);
  CHECK(ledgers[1].hard_negatives == 100);
  CHECK(ledgers[2].known_db_size == 352);
  CHECK(ledgers[2].new_detections == 205);
  CHECK(ledgers[2].hard_negatives == 200);
  CHECK(ledgers[2].background_tiles == 363);
}

TEST_CASE("files") {
  const auto dir = oracle::scratch_dir("mining_files");
  auto batch = build_review_batch(row_of(3), {}, BatchOptions{.iteration = 2});
  batch.candidates[0].chip_uri = "chips/c00000.png";
  const auto path = batch_path(dir, 2);
  CHECK(path.filename() == "batch_2.jsonl");
  write_batch(batch, path);
  const auto back = read_batch(path, 2);
  REQUIRE(back.candidates.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.candidates[i].id() == batch.candidates[i].id());
    CHECK(back.candidates[i].fused_score == batch.candidates[i].fused_score);
    CHECK(back.candidates[i].detection.box == batch.candidates[i].detection.box);
    CHECK(back.candidates[i].chip_uri == batch.candidates[i].chip_uri);
  }

  const auto log_path = dir / "verdicts.jsonl";
  CHECK(read_verdict_log(log_path).empty());
  append_verdict(log_path, verdict("c00000", VerdictKind::unclear, 2));
  append_verdict(log_path, verdict("c00001", VerdictKind::biodigester, 2));
  const auto log = read_verdict_log(log_path);
  REQUIRE(log.size() == 2);
  CHECK(log[1].verdict == VerdictKind::biodigester);
  CHECK(log[1].iteration == 2);

  append_ledger(dir / "ledger.jsonl", initial_ledger(5));
  const auto ledgers = read_ledgers(dir / "ledger.jsonl");
  REQUIRE(ledgers.size() == 1);
  CHECK(ledgers[0].alpha == 0.5);

  std::vector<det::Detection> hn{fixture::site("a", 0, 0, 0.5), fixture::site("b", 0, 0, 0.5)};
  hn[1].tile_id = "t9";
  write_hard_negative_tiles(hn, dir / "tiles.txt");
  std::ifstream in(dir / "tiles.txt");
  std::string a, b;
  in >> a >> b;
  CHECK(a == "t0");
  CHECK(b == "t9");

  CHECK_THROWS_AS(parse_verdict("maybe"), Error);
  CHECK(utc_now().back() == 'Z');
}
