// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <map>
#include <fstream>
#include <sstream>

#include "digestmap/detection.hpp"
#include "digestmap/jsonio.hpp"
#include "digestmap/mining.hpp"
#include "digestmap/partscore.hpp"
#include "oracles.hpp"

using namespace digestmap;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const fs::path& dir, const std::string& args, const std::string& env = "") {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" + DIGESTMAP_CLI + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string sha256sum(const fs::path& p) {
  const auto tmp = p.string() + ".sum";
  const std::string cmd = "sha256sum '" + p.string() + "' > '" + tmp + "'";
  REQUIRE(std::system(cmd.c_str()) == 0);
  auto text = slurp(tmp);
  fs::remove(tmp);
  return text.substr(0, 64);
}

}  // namespace

TEST_CASE("help lists every flag with its default") {
  const auto dir = oracle::scratch_dir("cli_help");
  for (const char* sub : {"fit-prior", "rescore", "eval", "pr-curve", "mine", "apply-verdicts", "regress", "simulate",
                          "serve", "report"}) {
    const auto r = run(dir, std::string(sub) + " --help");
    CHECK(r.code == 0);
    CHECK(r.out.find("--") != std::string::npos);
  }
  const auto ev = run(dir, "eval --help").out;
  CHECK(ev.find("--match-m") != std::string::npos);
  CHECK(ev.find("[200]") != std::string::npos);
  CHECK(ev.find("--iou") != std::string::npos);
  CHECK(ev.find("[0.5]") != std::string::npos);
  const auto mi = run(dir, "mine --help").out;
  CHECK(mi.find("--k") != std::string::npos);
  CHECK(mi.find("[100]") != std::string::npos);
  const auto fp = run(dir, "fit-prior --help").out;
  CHECK(fp.find("[50]") != std::string::npos);
  CHECK(fp.find("[0.0001]") != std::string::npos);
  CHECK(fp.find("[empirical_independent]") != std::string::npos);
  CHECK(run(dir, "serve --help").out.find("--map-url-template") != std::string::npos);
}

TEST_CASE("usage and data errors") {
  const auto dir = oracle::scratch_dir("cli_errors");
  auto error_kind = [](const std::string& err) {
    const auto line = err.substr(0, err.find('\n'));
    return jsonio::ordered_json::parse(line).at("error").at("kind").get<std::string>();
  };
  auto r = run(dir, "");
  CHECK(r.code == 2);
  r = run(dir, "rescore --detections missing.jsonl --unit-prior --out x.jsonl");
  CHECK(r.code == 2);
  CHECK(error_kind(r.err) == "usage_error");

  jsonio::write_text(dir / "d.jsonl",
                     R"({"id":"a","class":"site","score":0.5,"cx":0,"cy":0,"w":10,"h":10,"angle":0,"tile_id":"t","crs":""})"
                     "\n");
  r = run(dir, "rescore --detections d.jsonl --out x.jsonl");
  CHECK(r.code == 2);
  r = run(dir, "rescore --detections d.jsonl --unit-prior --prior d.jsonl --out x.jsonl");
  CHECK(r.code == 2);
  r = run(dir, "eval --detections d.jsonl --gt d.jsonl --match-m -5");
  CHECK(r.code == 2);
  r = run(dir, "mine --scored d.jsonl --known d.jsonl --iteration 1 --batch-dir b --k 0");
  CHECK(r.code == 2);
  r = run(dir, "fit-prior --counts d.jsonl --training-histograms --out p.json");
  CHECK(r.code == 2);
  jsonio::write_text(dir / "bg.csv", "tanks,piles\n0,0\n1,0\n");
  r = run(dir, "fit-prior --training-histograms --background-counts bg.csv --positive-rate 1 --out p.json");
  CHECK(r.code == 2);
  r = run(dir, "fit-prior --training-histograms --positive-rate 0.3 --out p.json");
  CHECK(r.code == 2);
  r = run(dir, "fit-prior --training-histograms --background-counts bg.csv --positive-rate 0.3 --out p.json");
  CHECK(r.code == 0);

  jsonio::write_text(dir / "bad.jsonl",
                     R"({"id":"a","class":"site","score":1.3,"cx":0,"cy":0,"w":10,"h":10,"angle":0,"tile_id":"t","crs":""})"
                     "\n");
  r = run(dir, "rescore --detections bad.jsonl --unit-prior --out x.jsonl");
  CHECK(r.code == 1);
  CHECK(error_kind(r.err) == "validation_error");
  CHECK(r.err.find("score") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "x.jsonl"));

  jsonio::write_text(dir / "empty.geojson", R"({"type":"FeatureCollection","features":[]})");
  r = run(dir, "eval --detections d.jsonl --gt empty.geojson");
  CHECK(r.code == 1);
  CHECK(error_kind(r.err) == "domain_error");
}

TEST_CASE("simulate is reproducible and eval reaches AP 1 when noiseless") {
  const auto dir = oracle::scratch_dir("cli_sim");
  REQUIRE(run(dir, "simulate --seed 5 --out-dir a").code == 0);
  REQUIRE(run(dir, "simulate --seed 5 --out-dir b").code == 0);
  for (const char* f : {"detections.jsonl", "ground_truth.geojson", "scenario.json", "true_counts.csv"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    CHECK(fs::exists(dir / "a" / (std::string(f) + ".manifest.json")));
  }
  REQUIRE(run(dir, "simulate --seed 6 --out-dir c").code == 0);
  CHECK(slurp(dir / "a/detections.jsonl") != slurp(dir / "c/detections.jsonl"));

  // A saved scenario replays the same run.
  REQUIRE(run(dir, "simulate --scenario a/scenario.json --out-dir d").code == 0);
  CHECK(slurp(dir / "a/detections.jsonl") == slurp(dir / "d/detections.jsonl"));

  REQUIRE(run(dir, "simulate --noiseless --out-dir clean").code == 0);
  const auto r = run(dir, "eval --detections clean/detections.jsonl --gt clean/ground_truth.geojson --out m.json");
  REQUIRE(r.code == 0);
  const auto m = jsonio::ordered_json::parse(r.out);
  CHECK(m["ap_dist"].get<double>() == 1.0);
  CHECK(m["max_recall_at_full_precision"].get<double>() == 1.0);
  CHECK(m["fp"] == 0);
  CHECK(slurp(dir / "m.json") == r.out);
}

TEST_CASE("rescore with a unit prior keeps site scores") {
  const auto dir = oracle::scratch_dir("cli_rescore");
  REQUIRE(run(dir, "simulate --out-dir sim").code == 0);
  REQUIRE(run(dir, "rescore --detections sim/detections.jsonl --unit-prior --out s.jsonl").code == 0);
  const auto scored = parts::read_scored(dir / "s.jsonl");
  std::map<std::string, double> input;
  for (const auto& d : det::read_detections(dir / "sim/detections.jsonl")) {
    if (d.cls == det::DetClass::site) input[d.id] = d.score;
  }
  REQUIRE(scored.size() == input.size());
  for (const auto& s : scored) CHECK(s.fused_score == doctest::Approx(input.at(s.detection.id)).epsilon(1e-12));

  // Thread count does not change the output.
  REQUIRE(run(dir, "fit-prior --training-histograms --out prior.json").code == 0);
  REQUIRE(run(dir, "rescore --detections sim/detections.jsonl --prior prior.json --out one.jsonl").code == 0);
  REQUIRE(run(dir, "rescore --detections sim/detections.jsonl --prior prior.json --out four.jsonl",
              "PARTSCORE_THREADS=4")
              .code == 0);
  CHECK(slurp(dir / "one.jsonl") == slurp(dir / "four.jsonl"));
  const auto manifest = jsonio::ordered_json::parse(slurp(dir / "four.jsonl.manifest.json"));
  CHECK(manifest["flags"]["threads"] == "4");
}

TEST_CASE("manifest records inputs, flags and digests") {
  const auto dir = oracle::scratch_dir("cli_manifest");
  REQUIRE(run(dir, "simulate --out-dir sim").code == 0);
  REQUIRE(run(dir, "pr-curve --detections sim/detections.jsonl --gt sim/ground_truth.geojson --match-m 150 --out pr.csv")
              .code == 0);
  const auto m = jsonio::ordered_json::parse(slurp(dir / "pr.csv.manifest.json"));
  CHECK(m["command"] == "pr-curve");
  CHECK(m["flags"]["match-m"] == "150");
  CHECK(m["flags"]["dedup-m"] == "200");
  CHECK(m["flags"]["no-dedup"] == "false");
  REQUIRE(m["inputs"].size() == 2);
  CHECK(m["inputs"][0]["sha256"] == sha256sum(dir / "sim/detections.jsonl"));
  REQUIRE(m["outputs"].size() == 1);
  CHECK(m["outputs"][0]["sha256"] == sha256sum(dir / "pr.csv"));
  CHECK(slurp(dir / "pr.csv").rfind("cutoff,recall,precision\n", 0) == 0);
}

TEST_CASE("config file supplies flags and the command line wins") {
  const auto dir = oracle::scratch_dir("cli_config");
  REQUIRE(run(dir, "simulate --out-dir sim").code == 0);
  jsonio::write_text(dir / "run.toml",
                     "[pr-curve]\ndetections = \"sim/detections.jsonl\"\ngt = \"sim/ground_truth.geojson\"\n"
                     "match-m = 120\nout = \"pr.csv\"\n");
  REQUIRE(run(dir, "--config run.toml pr-curve").code == 0);
  auto m = jsonio::ordered_json::parse(slurp(dir / "pr.csv.manifest.json"));
  CHECK(m["flags"]["match-m"] == "120");
  REQUIRE(run(dir, "--config run.toml pr-curve --match-m 90").code == 0);
  m = jsonio::ordered_json::parse(slurp(dir / "pr.csv.manifest.json"));
  CHECK(m["flags"]["match-m"] == "90");
}

TEST_CASE("mining loop through the CLI") {
  const auto dir = oracle::scratch_dir("cli_mine");
  REQUIRE(run(dir, "simulate --sites 400 --seed 3 --out-dir sim").code == 0);
  REQUIRE(run(dir, "fit-prior --training-histograms --out prior.json").code == 0);
  REQUIRE(run(dir, "rescore --detections sim/detections.jsonl --prior prior.json --out scored.jsonl").code == 0);
  // Known database: half of the ground truth.
  auto gts = det::read_inventory(dir / "sim/ground_truth.geojson");
  gts.resize(gts.size() / 2);
  det::write_inventory(gts, dir / "known.geojson");

  REQUIRE(run(dir, "mine --scored scored.jsonl --known known.geojson --iteration 1 --batch-dir batches --k 100").code ==
          0);
  const auto batch = mine::read_batch(mine::batch_path(dir / "batches", 1), 1);
  CHECK(batch.candidates.size() == 100);
  const auto lines = slurp(mine::batch_path(dir / "batches", 1));
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 100);

  for (std::size_t i = 0; i < batch.candidates.size(); ++i) {
    const auto v = i < 30 ? mine::VerdictKind::biodigester : mine::VerdictKind::not_biodigester;
    mine::append_verdict(dir / "verdicts.jsonl", {batch.candidates[i].id(), v, "ana", mine::utc_now(), 1});
  }
  const std::string apply =
      "apply-verdicts --batch-dir batches --iteration 1 --verdict-log verdicts.jsonl --ledger ledger.jsonl "
      "--known known.geojson --known-out known1.geojson --hard-negatives hn.jsonl --tiles-out tiles.txt";
  auto r = run(dir, apply);
  REQUIRE(r.code == 0);
  const auto ledger = mine::read_ledgers(dir / "ledger.jsonl");
  REQUIRE(ledger.size() == 2);
  CHECK(ledger[1].known_db_size == gts.size());
  CHECK(ledger[1].new_detections == 30);
  CHECK(ledger[1].hard_negatives == 70);
  CHECK(ledger[1].background_tiles == 163 + 70);
  CHECK(det::read_inventory(dir / "known1.geojson").size() == gts.size() + 30);

  // Replaying is a no-op.
  const auto before = slurp(dir / "ledger.jsonl") + slurp(dir / "hn.jsonl") + slurp(dir / "known1.geojson");
  REQUIRE(run(dir, apply).code == 0);
  CHECK(slurp(dir / "ledger.jsonl") + slurp(dir / "hn.jsonl") + slurp(dir / "known1.geojson") == before);

  // Next round skips everything already reviewed.
  REQUIRE(run(dir, "mine --scored scored.jsonl --known known1.geojson --hard-negatives hn.jsonl --iteration 2 "
                   "--batch-dir batches --k 100")
              .code == 0);
  const auto next = mine::read_batch(mine::batch_path(dir / "batches", 2), 2);
  for (const auto& c : next.candidates) CHECK(batch.find(c.id()) == nullptr);

  r = run(dir, "report --ledger ledger.jsonl");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("50%") != std::string::npos);
}

TEST_CASE("regress and report") {
  const auto dir = oracle::scratch_dir("cli_regress");
  jsonio::write_text(dir / "f.csv", "site_id,tank_area_m2,power_kw\na,1,1\nb,2,2\nc,3,2\nd,4,\n");
  auto r = run(dir, "regress --features f.csv --out fit.json");
  REQUIRE(r.code == 0);
  const auto j = jsonio::ordered_json::parse(r.out);
  CHECK(j["slope"].get<double>() == doctest::Approx(0.5));
  CHECK(j["r2"].get<double>() == doctest::Approx(0.75));
  CHECK(j["n"] == 3);
  CHECK(j["aggregate_power_kw"].get<double>() == doctest::Approx(0.5 * 10 + 4 * 2.0 / 3.0));
  CHECK(run(dir, "regress --features f.csv --detections f.csv --power f.csv --out fit.json").code == 2);

  REQUIRE(run(dir, "simulate --out-dir sim").code == 0);
  r = run(dir, "report --detections sim/detections.jsonl --gt sim/ground_truth.geojson --region Synthetic --out t.txt");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Precision") != std::string::npos);
  CHECK(r.out.find("Synthetic") != std::string::npos);
  CHECK(fs::exists(dir / "t.txt.manifest.json"));
}
