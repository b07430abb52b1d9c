// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0
//
// digestmap: one binary, one subcommand per pipeline step.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "digestmap/detection.hpp"
#include "digestmap/error.hpp"
#include "digestmap/evaluation.hpp"
#include "digestmap/jsonio.hpp"
#include "digestmap/mining.hpp"
#include "digestmap/partscore.hpp"
#include "digestmap/power.hpp"
#include "digestmap/simulation.hpp"
#include "digestmap/triage.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace digestmap;
using jsonio::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print_error(const char* kind, const std::string& message) {
  ordered_json j;
  j["error"] = {{"kind", kind}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

unsigned default_threads() {
  if (const char* env = std::getenv("PARTSCORE_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line, const char* field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError("not a number: '" + cell + "'", line, field);
  }
}

/// Calls fn(line_no, cells) for every data row; a first row that does not
/// start with a number is taken as a header.
template <class Fn>
void for_each_csv_row(const fs::path& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (n == 1) {
      try {
        (void)std::stod(cells.front());
      } catch (const std::exception&) {
        continue;
      }
    }
    fn(n, cells);
  }
}

/// Per-site (tanks, piles) counts, CSV `tanks,piles`.
std::vector<std::pair<int, int>> read_counts(const fs::path& path) {
  std::vector<std::pair<int, int>> counts;
  for_each_csv_row(path, [&](std::size_t line, const std::vector<std::string>& cells) {
    if (cells.size() < 2) throw ParseError("expected tanks,piles", line, "");
    const double t = parse_cell(cells[0], line, "tanks");
    const double p = parse_cell(cells[1], line, "piles");
    if (t < 0 || p < 0 || t != static_cast<int>(t) || p != static_cast<int>(p)) {
      throw ValidationError("counts must be non-negative integers", line, t < 0 ? "tanks" : "piles");
    }
    counts.emplace_back(static_cast<int>(t), static_cast<int>(p));
  });
  if (counts.empty()) throw DomainError("no counts in " + path.string());
  return counts;
}

/// Measured power per site, CSV `site_id,power_kw` with a header row.
std::map<std::string, double> read_power(const fs::path& path) {
  std::map<std::string, double> out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (n == 1 || line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() < 2) throw ParseError("expected site_id,power_kw", n, "");
    out[cells[0]] = parse_cell(cells[1], n, "power_kw");
  }
  return out;
}

std::vector<det::Detection> read_hard_negatives(const std::optional<fs::path>& path) {
  if (!path || !fs::exists(*path)) return {};
  return det::read_detections(*path);
}

std::vector<det::Detection> sites_for_eval(const std::vector<det::Detection>& dets, bool dedup,
                                           double dedup_m) {
  std::vector<det::Detection> sites;
  for (const auto& d : dets) {
    if (d.cls == det::DetClass::site) sites.push_back(d);
  }
  return dedup ? det::dedup_sites(sites, dedup_m) : sites;
}

// Collects the option values of a subcommand for the manifest.
std::vector<std::pair<std::string, std::string>> flag_values(const CLI::App& sub) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || opt->get_lnames().empty()) continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      for (std::size_t i = 0; i < r.size(); ++i) value += (i ? "," : "") + r[i];
      if (opt->get_expected_min() == 0 && value.empty()) value = "true";
    } else {
      value = opt->get_default_str();
      if (opt->get_expected_min() == 0 && value.empty()) value = "false";
    }
    out.emplace_back(name, value);
  }
  return out;
}

struct Shared {
  std::optional<fs::path> detections;
  std::optional<fs::path> gt;
  double match_m = eval::kDefaultMatchMeters;
  double dedup_m = 200.0;
  bool no_dedup = false;
  double iou = eval::kDefaultIouThreshold;
  std::string containment = "center_in";
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Biodigester site mapping pipeline: rescoring, evaluation and hard-negative mining."};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "TOML/INI file with flag values; command-line flags win");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  Shared sh;
  std::optional<fs::path> out;
  cli::Manifest manifest;

  auto add_match_flags = [&](CLI::App* s) {
    s->add_option("--match-m", sh.match_m, "Distance matching threshold (m)")->check(CLI::PositiveNumber);
    s->add_option("--dedup-m", sh.dedup_m, "Deduplication radius (m)")->check(CLI::PositiveNumber);
    s->add_flag("--no-dedup", sh.no_dedup, "Skip deduplication of site detections");
  };

  // fit-prior
  auto* fit = app.add_subcommand("fit-prior", "Fit a count prior from per-site part counts");
  std::string kind = "empirical_independent";
  std::optional<fs::path> counts_path, bg_counts_path;
  bool training = false;
  int cap = parts::kDefaultCap;
  double smoothing = parts::kDefaultSmoothing;
  double positive_rate = 0.5;
  fit->add_option("--kind", kind, "Prior family")
      ->check(CLI::IsMember({"empirical_independent", "poisson_independent", "bivariate_poisson"}));
  auto* o_counts = fit->add_option("--counts", counts_path, "CSV of per-site tanks,piles")->check(CLI::ExistingFile);
  auto* o_train = fit->add_flag("--training-histograms", training, "Use the built-in annotated-site histograms");
  o_counts->excludes(o_train);
  fit->add_option("--cap", cap, "Largest count per class")->check(CLI::Range(0, 1000));
  fit->add_option("--smoothing", smoothing, "Floor added to empirical frequencies")->check(CLI::Range(0.0, 1.0));
  auto* o_bg = fit->add_option("--background-counts", bg_counts_path,
                               "CSV of tanks,piles inside non-sites; switches to posterior mode")
                   ->check(CLI::ExistingFile);
  fit->add_option("--positive-rate", positive_rate, "Prior probability of a true site (posterior mode)")
      ->check(CLI::Validator(
          [](const std::string& v) {
            const double r = std::stod(v);
            return r > 0.0 && r < 1.0 ? std::string{} : "must lie strictly between 0 and 1";
          },
          "(0,1)"))
      ->needs(o_bg);
  fit->add_option("--out", out, "Output prior file")->required();

  // rescore
  auto* rescore = app.add_subcommand("rescore", "Fuse site scores with part evidence");
  std::optional<fs::path> prior_path;
  bool unit_prior = false;
  unsigned threads = default_threads();
  rescore->add_option("--detections", sh.detections, "Detections JSONL (sites, tanks, piles)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* o_prior = rescore->add_option("--prior", prior_path, "Prior file from fit-prior")->check(CLI::ExistingFile);
  auto* o_unit = rescore->add_flag("--unit-prior", unit_prior, "Use w = 1 (fused score equals site score)");
  o_prior->excludes(o_unit);
  rescore->add_option("--containment", sh.containment, "Part-in-site rule")
      ->check(CLI::IsMember({"center_in", "box_in"}));
  rescore->add_option("--threads", threads, "Worker threads (default from PARTSCORE_THREADS)")
      ->check(CLI::Range(1u, 1024u));
  rescore->add_option("--out", out, "Rescored detections JSONL")->required();

  // eval
  auto* evalc = app.add_subcommand("eval", "Distance AP, max recall at full precision, and IoU mAP");
  evalc->add_option("--detections", sh.detections, "Detections JSONL")->required()->check(CLI::ExistingFile);
  evalc->add_option("--gt", sh.gt, "Ground-truth GeoJSON")->required()->check(CLI::ExistingFile);
  add_match_flags(evalc);
  evalc->add_option("--iou", sh.iou, "IoU threshold for mAP")->check(CLI::Range(0.0, 1.0));
  evalc->add_option("--out", out, "Metrics JSON (also printed)");

  // pr-curve
  auto* prc = app.add_subcommand("pr-curve", "Precision/recall samples per score cutoff");
  prc->add_option("--detections", sh.detections, "Detections JSONL")->required()->check(CLI::ExistingFile);
  prc->add_option("--gt", sh.gt, "Ground-truth GeoJSON")->required()->check(CLI::ExistingFile);
  add_match_flags(prc);
  prc->add_option("--out", out, "Output CSV")->required();

  // mine
  auto* mine = app.add_subcommand("mine", "Build the next review batch of unknown candidates");
  std::optional<fs::path> scored_path, known_path, hn_path, batch_dir;
  std::size_t k = mine::kDefaultBatchSize;
  int iteration = 1;
  mine->add_option("--scored", scored_path, "Rescored detections JSONL")->required()->check(CLI::ExistingFile);
  mine->add_option("--known", known_path, "Known sites GeoJSON")->required()->check(CLI::ExistingFile);
  mine->add_option("--hard-negatives", hn_path, "Rejected candidates JSONL (excluded)");
  mine->add_option("--k", k, "Batch size")->check(CLI::PositiveNumber);
  mine->add_option("--match-m", sh.match_m, "Distance to a known site that excludes a candidate (m)")
      ->check(CLI::PositiveNumber);
  mine->add_option("--dedup-m", sh.dedup_m, "Deduplication radius (m)")->check(CLI::PositiveNumber);
  mine->add_option("--iteration", iteration, "Iteration number")->required()->check(CLI::Range(1, 1000000));
  mine->add_option("--batch-dir", batch_dir, "Directory for batch_<i>.jsonl")->required();

  // apply-verdicts
  auto* apply = app.add_subcommand("apply-verdicts", "Fold reviewer verdicts into the database and ledger");
  std::optional<fs::path> verdict_log, ledger_path, known_out, tiles_out;
  std::size_t annotated = mine::kDefaultAnnotatedTiles;
  std::size_t background0 = mine::kDefaultAnnotatedTiles;
  std::size_t max_hn = mine::kDefaultBatchSize;
  apply->add_option("--batch-dir", batch_dir, "Directory holding batch_<i>.jsonl")->required()->check(CLI::ExistingDirectory);
  apply->add_option("--iteration", iteration, "Iteration number")->required()->check(CLI::Range(1, 1000000));
  apply->add_option("--verdict-log", verdict_log, "Append-only verdict log")->required();
  apply->add_option("--ledger", ledger_path, "Iteration ledger JSONL (created if missing)")->required();
  apply->add_option("--known", known_path, "Known sites GeoJSON")->required()->check(CLI::ExistingFile);
  apply->add_option("--known-out", known_out, "Updated known sites GeoJSON")->required();
  apply->add_option("--hard-negatives", hn_path, "Rejected candidates JSONL (read, merged, rewritten)")->required();
  apply->add_option("--tiles-out", tiles_out, "Tile list of all hard negatives");
  apply->add_option("--annotated-tiles", annotated, "Annotated training tiles")->check(CLI::PositiveNumber);
  apply->add_option("--background-tiles", background0, "Background tiles before mining")->check(CLI::NonNegativeNumber);
  apply->add_option("--max-hard-negatives", max_hn, "Hard negatives added per iteration")->check(CLI::PositiveNumber);

  // regress
  auto* regress = app.add_subcommand("regress", "Regress electrical power on tank area");
  std::optional<fs::path> features_path, power_path, features_out;
  bool no_intercept = false;
  auto* o_feat = regress->add_option("--features", features_path, "CSV site_id,tank_area_m2,power_kw")
                     ->check(CLI::ExistingFile);
  auto* o_rdet = regress->add_option("--detections", sh.detections, "Detections JSONL (sites and tanks)")
                     ->check(CLI::ExistingFile);
  auto* o_pow = regress->add_option("--power", power_path, "CSV site_id,power_kw")->check(CLI::ExistingFile);
  o_feat->excludes(o_rdet)->excludes(o_pow);
  o_rdet->needs(o_pow);
  regress->add_flag("--no-intercept", no_intercept, "Fit through the origin");
  regress->add_option("--containment", sh.containment, "Part-in-site rule")
      ->check(CLI::IsMember({"center_in", "box_in"}));
  regress->add_option("--features-out", features_out, "Write the derived features CSV");
  regress->add_option("--out", out, "Fit JSON")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic region with ground truth");
  std::optional<fs::path> scenario_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_sites;
  bool noiseless = false;
  simulate->add_option("--scenario", scenario_path, "Scenario JSON (defaults to the standard scenario)")
      ->check(CLI::ExistingFile);
  simulate->add_option("--seed", seed, "RNG seed (overrides the scenario)");
  simulate->add_option("--sites", n_sites, "Number of true sites (overrides the scenario)");
  simulate->add_flag("--noiseless", noiseless, "Perfect detector: no misses, no false positives, no jitter");
  simulate->add_option("--out-dir", out_dir, "Output directory")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the triage HTTP service");
  triage::TriageConfig tcfg;
  std::optional<fs::path> chips_dir, static_dir;
  std::string listen = "127.0.0.1:8080";
  serve->add_option("--batch-dir", tcfg.batch_dir, "Directory holding batch_<i>.jsonl")
      ->required()
      ->check(CLI::ExistingDirectory);
  serve->add_option("--verdict-log", tcfg.verdict_log, "Append-only verdict log")->required();
  serve->add_option("--chips-dir", chips_dir, "Directory of image chips")->check(CLI::ExistingDirectory);
  serve->add_option("--static-dir", static_dir, "Client assets served at /")->check(CLI::ExistingDirectory);
  serve->add_option("--listen", listen, "host:port");
  serve->add_option("--token", tcfg.token, "Shared token required in X-Triage-Token");
  serve->add_option("--map-url-template", tcfg.map_url_template, "Map link with {x} and {y} placeholders");

  // report
  auto* report = app.add_subcommand("report", "Region table and mining iteration table");
  std::optional<fs::path> external_path;
  std::string region = "region";
  auto* o_repdet = report->add_option("--detections", sh.detections, "Detections JSONL")->check(CLI::ExistingFile);
  auto* o_repgt = report->add_option("--gt", sh.gt, "Ground-truth GeoJSON")->check(CLI::ExistingFile);
  o_repdet->needs(o_repgt);
  o_repgt->needs(o_repdet);
  report->add_option("--external-db", external_path, "Independent inventory used to confirm non-GT hits")
      ->check(CLI::ExistingFile)
      ->needs(o_repdet);
  report->add_option("--region", region, "Region name for the table row");
  add_match_flags(report);
  report->add_option("--ledger", ledger_path, "Iteration ledger JSONL")->check(CLI::ExistingFile);
  report->add_option("--out", out, "Write the report text (also printed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage_error", e.what());
    return 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    manifest.command = sub->get_name();
    manifest.flags = flag_values(*sub);
    auto input = [&](const std::optional<fs::path>& p) {
      if (p && fs::is_regular_file(*p)) manifest.inputs.push_back(*p);
    };
    const auto contain = parts::parse_containment(sh.containment);

    if (sub == fit) {
      if (!counts_path && !training) throw UsageError("one of --counts or --training-histograms is required");
      input(counts_path);
      input(bg_counts_path);
      parts::JointHistogram joint;
      if (counts_path) {
        const auto counts = read_counts(*counts_path);
        joint = parts::joint_histogram(counts);
      } else {
        // Only marginals are published; their outer product stands in for the joint.
        const auto& t = parts::training_tank_frequencies();
        const auto& p = parts::training_pile_frequencies();
        for (std::size_t i = 0; i < t.size(); ++i) {
          for (std::size_t j = 0; j < p.size(); ++j) {
            if (t[i] * p[j] > 0.0) joint[{static_cast<int>(i), static_cast<int>(j)}] = t[i] * p[j];
          }
        }
      }
      auto fit_one = [&](const parts::JointHistogram& jh) {
        switch (parts::parse_prior_kind(kind)) {
          case parts::PriorKind::empirical_independent:
            return parts::fit_empirical_prior(parts::tank_marginal(jh), parts::pile_marginal(jh), smoothing, cap);
          case parts::PriorKind::poisson_independent:
            return parts::fit_poisson_prior(parts::tank_marginal(jh), parts::pile_marginal(jh), cap);
          case parts::PriorKind::bivariate_poisson:
            return parts::fit_bivariate_poisson_prior(jh, cap);
        }
        throw UsageError("unknown prior kind");
      };
      auto prior = fit_one(joint);
      if (bg_counts_path) {
        const auto bg = read_counts(*bg_counts_path);
        prior = parts::make_posterior_prior(prior, fit_one(parts::joint_histogram(bg)), positive_rate);
      }
      parts::write_prior(prior, *out);
      manifest.outputs.push_back(*out);
      std::cout << "wrote " << out->string() << "\n";
    } else if (sub == rescore) {
      if (!prior_path && !unit_prior) throw UsageError("one of --prior or --unit-prior is required");
      input(sh.detections);
      input(prior_path);
      const auto dets = det::read_detections(*sh.detections);
      const auto split = parts::split_by_class(dets);
      const auto prior = unit_prior ? parts::CountPrior::constant(1.0) : parts::read_prior(*prior_path);
      const auto scored = parts::rescore_region(split.sites, split.parts, prior, contain, threads);
      parts::write_scored(scored, *out);
      manifest.outputs.push_back(*out);
      std::cout << "rescored " << scored.size() << " sites -> " << out->string() << "\n";
    } else if (sub == evalc || sub == prc) {
      input(sh.detections);
      input(sh.gt);
      const auto dets = det::read_detections(*sh.detections);
      const auto gts = det::read_inventory(*sh.gt);
      const auto sites = sites_for_eval(dets, !sh.no_dedup, sh.dedup_m);
      const auto curve = eval::pr_curve(sites, gts, sh.match_m);
      if (sub == prc) {
        eval::write_pr_curve(curve, *out);
        manifest.outputs.push_back(*out);
        std::cout << "wrote " << curve.samples.size() << " samples -> " << out->string() << "\n";
      } else {
        const auto match = eval::match_by_distance(sites, gts, sh.match_m);
        ordered_json j;
        j["ap_dist"] = curve.ap;
        j["max_recall_at_full_precision"] = eval::max_recall_at_full_precision(curve.samples);
        j["n_gt"] = gts.size();
        j["n_sites"] = sites.size();
        j["tp"] = match.count(eval::Verdict::tp);
        j["fp"] = match.count(eval::Verdict::fp);
        j["duplicate"] = match.count(eval::Verdict::duplicate);
        const bool any_boxes = std::any_of(gts.begin(), gts.end(), [](const auto& g) { return !g.boxes.empty(); });
        if (any_boxes) {
          auto all = parts::split_by_class(dets).parts;
          all.insert(all.end(), sites.begin(), sites.end());
          const auto m = eval::map_iou(all, gts, sh.iou);
          ordered_json per = ordered_json::object();
          for (const auto& c : m.per_class) {
            if (c.has_gt) per[std::string(det::to_string(c.cls))] = c.ap;
          }
          j["map_iou"] = m.map;
          j["ap_iou"] = per;
        }
        const std::string text = jsonio::dump(j) + "\n";
        std::cout << text;
        if (out) {
          jsonio::write_text(*out, text);
          manifest.outputs.push_back(*out);
        }
      }
    } else if (sub == mine) {
      input(scored_path);
      input(known_path);
      input(hn_path);
      const auto scored = parts::read_scored(*scored_path);
      const auto known = det::read_inventory(*known_path);
      const auto hard = read_hard_negatives(hn_path);
      mine::BatchOptions opts;
      opts.k = k;
      opts.match_threshold_m = sh.match_m;
      opts.dedup_radius_m = sh.dedup_m;
      opts.iteration = iteration;
      opts.hard_negatives = hard;
      const auto batch = mine::build_review_batch(scored, known, opts);
      fs::create_directories(*batch_dir);
      const auto path = mine::batch_path(*batch_dir, iteration);
      mine::write_batch(batch, path);
      manifest.outputs.push_back(path);
      std::cout << "batch " << iteration << ": " << batch.candidates.size() << " candidates -> " << path.string()
                << "\n";
    } else if (sub == apply) {
      const auto bpath = mine::batch_path(*batch_dir, iteration);
      input(bpath);
      input(verdict_log);
      input(known_path);
      input(hn_path);
      input(ledger_path);
      const auto batch = mine::read_batch(bpath, iteration);
      const auto log = mine::read_verdict_log(*verdict_log);
      auto known = det::read_inventory(*known_path);

      std::vector<mine::IterationLedger> ledgers;
      if (fs::exists(*ledger_path)) ledgers = mine::read_ledgers(*ledger_path);
      if (ledgers.empty()) {
        ledgers.push_back(mine::initial_ledger(known.size(), annotated, background0));
        mine::append_ledger(*ledger_path, ledgers.back());
      }
      auto find = [&](int it) -> const mine::IterationLedger* {
        for (auto i = ledgers.rbegin(); i != ledgers.rend(); ++i) {
          if (i->iteration == it) return &*i;
        }
        return nullptr;
      };
      const auto* prev = find(iteration - 1);
      if (!prev) throw ReferenceError("ledger has no row for iteration " + std::to_string(iteration - 1));
      const auto outcome = mine::apply_verdicts(batch, log, *prev, max_hn);

      // Merging by id keeps a replay of the same verdicts from double-counting.
      std::set<std::string> known_ids;
      for (const auto& g : known) known_ids.insert(g.id);
      for (const auto& g : outcome.confirmed_new) {
        if (known_ids.insert(g.id).second) known.push_back(g);
      }
      auto hard = read_hard_negatives(hn_path);
      std::set<std::string> hard_ids;
      for (const auto& d : hard) hard_ids.insert(d.id);
      for (const auto& d : outcome.hard_negatives) {
        if (hard_ids.insert(d.id).second) hard.push_back(d);
      }

      if (const auto* existing = find(iteration)) {
        if (mine::ledger_to_line(*existing) != mine::ledger_to_line(outcome.ledger)) {
          throw ContractError("ledger already holds a different row for iteration " + std::to_string(iteration));
        }
      } else {
        mine::append_ledger(*ledger_path, outcome.ledger);
      }
      det::write_inventory(known, *known_out, batch.candidates.empty() ? "" : batch.candidates.front().detection.crs);
      det::write_detections(*hn_path, hard);
      manifest.outputs = {*known_out, *hn_path, *ledger_path};
      if (tiles_out) {
        mine::write_hard_negative_tiles(hard, *tiles_out);
        manifest.outputs.push_back(*tiles_out);
      }
      std::cout << mine::ledger_to_line(outcome.ledger) << "\n";
      if (!outcome.unreviewed.empty()) {
        std::cerr << outcome.unreviewed.size() << " candidates have no verdict yet\n";
      }
    } else if (sub == regress) {
      if (!features_path && !sh.detections) throw UsageError("one of --features or --detections/--power is required");
      input(features_path);
      input(sh.detections);
      input(power_path);
      std::vector<power::SiteFeature> features;
      if (features_path) {
        features = power::read_features(*features_path);
      } else {
        const auto split = parts::split_by_class(det::read_detections(*sh.detections));
        features = power::site_features(split.sites, split.parts, contain);
        const auto kw = read_power(*power_path);
        for (auto& f : features) {
          if (auto it = kw.find(f.site_id); it != kw.end()) f.power_kw = it->second;
        }
      }
      const auto fit_result = power::fit_linear(features, !no_intercept);
      jsonio::write_text(*out, power::fit_to_text(fit_result));
      manifest.outputs.push_back(*out);
      if (features_out) {
        power::write_features(features, *features_out);
        manifest.outputs.push_back(*features_out);
      }
      ordered_json j = ordered_json::parse(power::fit_to_text(fit_result));
      j["aggregate_power_kw"] = power::aggregate_power(fit_result, features);
      j["n_sites"] = features.size();
      std::cout << jsonio::dump(j) << "\n";
    } else if (sub == simulate) {
      input(scenario_path);
      auto sc = scenario_path ? sim::read_scenario(*scenario_path) : sim::Scenario::standard();
      if (seed) sc.seed = *seed;
      if (n_sites) sc.n_sites = *n_sites;
      if (noiseless) {
        sc.detector.site_tpr = 1.0;
        sc.detector.part_tpr = 1.0;
        sc.detector.fp_rate_per_km2 = 0.0;
        sc.detector.jitter_sigma_m = 0.0;
      }
      const auto scene = sim::generate(sc);
      fs::create_directories(*out_dir);
      const auto det_path = *out_dir / "detections.jsonl";
      const auto gt_path = *out_dir / "ground_truth.geojson";
      const auto sc_path = *out_dir / "scenario.json";
      const auto counts_out = *out_dir / "true_counts.csv";
      det::write_detections(det_path, scene.dets);
      det::write_inventory(scene.gts, gt_path, sc.crs);
      jsonio::write_text(sc_path, sim::scenario_to_text(sc));
      std::string csv = "tanks,piles\n";
      for (const auto& [t, p] : scene.true_counts) csv += std::to_string(t) + "," + std::to_string(p) + "\n";
      jsonio::write_text(counts_out, csv);
      manifest.outputs = {det_path, gt_path, sc_path, counts_out};
      std::cout << "simulated " << scene.gts.size() << " sites, " << scene.dets.size() << " detections -> "
                << out_dir->string() << "\n";
    } else if (sub == serve) {
      tcfg.chips_dir = chips_dir;
      tcfg.static_dir = static_dir;
      const auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw UsageError("--listen expects host:port");
      int port = 0;
      try {
        port = std::stoi(listen.substr(colon + 1));
      } catch (const std::exception&) {
        throw UsageError("--listen expects host:port");
      }
      if (port <= 0 || port > 65535) throw UsageError("--listen port out of range");
      return triage::serve(tcfg, listen.substr(0, colon), port);
    } else if (sub == report) {
      if (!sh.detections && !ledger_path) throw UsageError("one of --detections/--gt or --ledger is required");
      input(sh.detections);
      input(sh.gt);
      input(external_path);
      input(ledger_path);
      std::string text;
      if (sh.detections) {
        const auto dets = det::read_detections(*sh.detections);
        const auto gts = det::read_inventory(*sh.gt);
        const auto ext = external_path ? det::read_inventory(*external_path) : std::vector<det::GroundTruthSite>{};
        const auto sites = sites_for_eval(dets, !sh.no_dedup, sh.dedup_m);
        const std::vector<eval::RegionRow> rows{eval::region_report(region, sites, gts, ext, sh.match_m)};
        text += eval::format_region_table(rows);
      }
      if (ledger_path) {
        const auto ledgers = mine::read_ledgers(*ledger_path);
        if (!text.empty()) text += "\n";
        text += "Iteration  Known  New  HardNeg  Background  alpha\n";
        for (const auto& l : ledgers) {
          char row[128];
          std::snprintf(row, sizeof row, "%9d  %5zu  %3zu  %7zu  %10zu  %s\n", l.iteration, l.known_db_size,
                        l.new_detections, l.hard_negatives, l.background_tiles,
                        eval::format_percent(l.alpha, 0).c_str());
          text += row;
        }
      }
      std::cout << text;
      if (out) {
        jsonio::write_text(*out, text);
        manifest.outputs.push_back(*out);
      }
    }
    if (!manifest.outputs.empty()) manifest.write_all();
    return 0;
  } catch (const UsageError& e) {
    print_error("usage_error", e.what());
    return 2;
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("error", e.what());
    return 1;
  }
}
