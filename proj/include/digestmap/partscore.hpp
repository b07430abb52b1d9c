// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

// Part-based rescoring of site detections.
//
// A site detection with confidence p_b contains tank detections with
// scores p_t and pile detections with scores p_p. Treating each part
// detection as an independent Bernoulli trial gives a Poisson-binomial
// distribution over the number of real tanks (resp. piles). The fused
// score marginalizes a count prior w(N_t, N_p) over both distributions:
//
//   fused = p_b * sum_{N_t, N_p} P(N_t | p_t) P(N_p | p_p) w(N_t, N_p)

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "digestmap/detection.hpp"

namespace digestmap::parts {

enum class Containment { center_in, box_in };

std::string_view to_string(Containment c);
Containment parse_containment(std::string_view s);

bool part_inside(const det::Detection& site, const det::Detection& part, Containment mode);

struct SiteEvidence {
  det::Detection site;
  double p_b = 0.0;
  std::vector<double> p_t;
  std::vector<double> p_p;
};

/// pmf[N] = P(exactly N true detections), N = 0..n.
struct CountDistribution {
  std::vector<double> pmf;

  std::size_t mode() const;
  double mean() const;
};

/// Histogram over counts: entry k holds the weight (count or frequency)
/// of observing k items.
using Histogram = std::vector<double>;

/// Joint histogram over (N_t, N_p).
using JointHistogram = std::map<std::pair<int, int>, double>;

enum class PriorKind { empirical_independent, poisson_independent, bivariate_poisson };

std::string_view to_string(PriorKind k);
PriorKind parse_prior_kind(std::string_view s);

/// Whether table weights are the positive-class count distribution
/// (default) or a posterior P(site | N_t, N_p) built against a
/// background count distribution.
enum class PriorMode { likelihood, posterior };

struct PoissonParams {
  double lambda_t = 0.0;
  double lambda_p = 0.0;
  double lambda_c = 0.0;

  friend bool operator==(const PoissonParams&, const PoissonParams&) = default;
};

inline constexpr int kDefaultCap = 50;
inline constexpr double kDefaultSmoothing = 1e-4;

/// Weight table over (N_t, N_p) in [0, cap]^2. Immutable once built.
class CountPrior {
 public:
  /// `table` is row-major with (cap+1)^2 entries, row = N_t. Throws
  /// ValidationError if any weight leaves [0, 1].
  CountPrior(PriorKind kind, int cap, std::vector<double> table,
             std::optional<PoissonParams> params = std::nullopt, double smoothing = 0.0,
             PriorMode mode = PriorMode::likelihood);

  /// Every cell equal to `w`.
  static CountPrior constant(double w, int cap = kDefaultCap);

  PriorKind kind() const noexcept { return kind_; }
  PriorMode mode() const noexcept { return mode_; }
  int cap() const noexcept { return cap_; }
  double smoothing() const noexcept { return smoothing_; }
  const std::optional<PoissonParams>& params() const noexcept { return params_; }
  const std::vector<double>& table() const noexcept { return table_; }

  /// Zero outside [0, cap]^2.
  double weight(std::size_t n_tanks, std::size_t n_piles) const noexcept {
    const auto c = static_cast<std::size_t>(cap_);
    if (n_tanks > c || n_piles > c) return 0.0;
    return table_[n_tanks * (c + 1) + n_piles];
  }

  /// Sum over all cells.
  double total() const;

  /// Copy with every weight multiplied by `c` (must stay in [0, 1]).
  CountPrior scaled(double c) const;

 private:
  PriorKind kind_;
  PriorMode mode_;
  int cap_;
  std::vector<double> table_;
  std::optional<PoissonParams> params_;
  double smoothing_;
};

/// Exact count distribution by iterative convolution, O(n^2).
/// Throws DomainError if some p_i is outside [0, 1].
CountDistribution poisson_binomial(std::span<const double> p);

/// Marginal histograms normalized over [0, cap], each cell floored at
/// `smoothing`, renormalized; table is their outer product.
CountPrior fit_empirical_prior(const Histogram& tank_counts, const Histogram& pile_counts,
                               double smoothing = kDefaultSmoothing, int cap = kDefaultCap);

double poisson_pmf(int k, double lambda);

/// Independent Poissons with maximum-likelihood rates (histogram means).
CountPrior fit_poisson_prior(const Histogram& tank_counts, const Histogram& pile_counts,
                             int cap = kDefaultCap);

double bivariate_poisson_pmf(int x, int y, const PoissonParams& params);

/// Table of the bivariate Poisson pmf over [0, cap]^2, renormalized.
CountPrior make_bivariate_poisson_prior(const PoissonParams& params, int cap = kDefaultCap);

/// Moment fit: lambda_c = cov(N_t, N_p) clamped to [0, min(means)],
/// lambda_t = mean_t - lambda_c, lambda_p = mean_p - lambda_c.
CountPrior fit_bivariate_poisson_prior(const JointHistogram& joint_counts, int cap = kDefaultCap);

/// Posterior weights r*pos / (r*pos + (1-r)*bg) cell by cell; cells where
/// both are zero get weight 0.
CountPrior make_posterior_prior(const CountPrior& positive, const CountPrior& background,
                                double positive_rate);

/// Builds per-class histograms from per-site (tanks, piles) counts.
JointHistogram joint_histogram(std::span<const std::pair<int, int>> counts);
Histogram tank_marginal(const JointHistogram& joint);
Histogram pile_marginal(const JointHistogram& joint);

/// Per-site tank and pile count frequencies of the annotated training
/// sites (counts 0..9 and 0..14).
const Histogram& training_tank_frequencies();
const Histogram& training_pile_frequencies();

// --- evidence and scoring ---

/// Scores of `parts` that fall in `site` under `mode`, in input order.
SiteEvidence extract_evidence(const det::Detection& site, std::span<const det::Detection> parts,
                              Containment mode = Containment::center_in);

/// Owning site index for each part (nullopt: in no site). A part inside
/// several sites goes to the one with the highest score (ties: smaller id).
/// Site-class entries in `parts` are never assigned.
std::vector<std::optional<std::size_t>> assign_parts(std::span<const det::Detection> sites,
                                                     std::span<const det::Detection> parts,
                                                     Containment mode = Containment::center_in);

/// Evidence for every site, with each part credited to at most one site:
/// the containing site with the highest p_b (ties: smaller id).
std::vector<SiteEvidence> assign_evidence(std::span<const det::Detection> sites,
                                          std::span<const det::Detection> parts,
                                          Containment mode = Containment::center_in);

double fused_score(const SiteEvidence& ev, const CountPrior& prior);

struct ScoredSite {
  det::Detection detection;  // original detection, score untouched
  double baseline_score = 0.0;
  double fused_score = 0.0;
  std::size_t n_tanks = 0;  // contained tank detections
  std::size_t n_piles = 0;
  std::size_t tank_mode = 0;  // mode of P(N_t | p_t)
  std::size_t pile_mode = 0;
};

/// Fuses every site with its parts; sorted by fused score desc, id asc.
/// `threads` = 0 picks the hardware concurrency.
std::vector<ScoredSite> rescore_region(std::span<const det::Detection> sites,
                                       std::span<const det::Detection> parts,
                                       const CountPrior& prior,
                                       Containment mode = Containment::center_in,
                                       unsigned threads = 1);

/// Splits a mixed detection list by class.
struct SplitDetections {
  std::vector<det::Detection> sites;
  std::vector<det::Detection> parts;
};
SplitDetections split_by_class(std::span<const det::Detection> dets);

// --- rescored detections file ---

/// Detection record with `score` set to the fused score, plus
/// baseline_score, n_tanks, n_piles, tank_mode and pile_mode.
std::string scored_to_line(const ScoredSite& s);
void write_scored(std::span<const ScoredSite> scored, const std::filesystem::path& path);
/// Accepts plain detection files too (baseline = fused = score). Only
/// site-class records are kept.
std::vector<ScoredSite> read_scored(const std::filesystem::path& path);
/// Scored sites as detections carrying the fused score.
std::vector<det::Detection> fused_detections(std::span<const ScoredSite> scored);

// --- prior file ---

/// Canonical JSON with sorted keys; identical priors give identical bytes.
std::string prior_to_text(const CountPrior& prior);
CountPrior prior_from_text(std::string_view text);
void write_prior(const CountPrior& prior, const std::filesystem::path& path);
CountPrior read_prior(const std::filesystem::path& path);

}  // namespace digestmap::parts
