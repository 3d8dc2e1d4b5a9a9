#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "epiflow/geometry.hpp"

namespace epiflow {

struct RobustConfig {
  double inlier_threshold = 1e-3;  // delta, algebraic residual units
  std::size_t sample_pool = 10000;
  std::size_t test_set_size = 2000;
  std::size_t hypothesis_count = 1024;
  int irls_max_iters = 200;
  double irls_objective_floor = 1e-20;
  std::uint64_t rng_seed = 0;

  /// Throws ConfigError on a violated invariant.
  void validate() const;
};

/// Truncated quadratic: z^2/2 inside delta, delta^2/2 outside.
inline double robust_penalty(double z, double delta) {
  return (z < delta && z > -delta) ? 0.5 * z * z : 0.5 * delta * delta;
}

/// x'_i^T E x_i for every correspondence (data-parallel).
std::vector<double> epipolar_residuals(const NormalizedCorrespondenceSet& corr,
                                       const EssentialMatrix& E);

/// Sum of robust penalties of all residuals at theta.
double lower_objective(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                       double delta);

using InlierMask = std::vector<std::uint8_t>;

/// Score of the best five-point candidate of one RANSAC hypothesis.
struct HypothesisScore {
  bool valid = false;  // false when the sample was degenerate or had no solution
  std::size_t inliers = 0;
  double residual_sum = 0.0;
  EssentialMatrix E;
};

/// Pool, test set and minimal-sample indices used by RANSAC. Every draw comes
/// from a counter-based stream keyed by (seed, hypothesis index).
struct RansacSampling {
  std::vector<std::size_t> pool;
  std::vector<std::size_t> test_set;

  static RansacSampling draw(std::size_t correspondence_count, const RobustConfig& cfg);
  std::array<std::size_t, 5> minimal_sample(std::size_t hypothesis, std::uint64_t seed) const;
};

/// Five-point solve of hypothesis h and the score of its best candidate on the
/// test set. Candidates of one hypothesis tie-break by solver output order.
HypothesisScore score_hypothesis(const NormalizedCorrespondenceSet& corr,
                                 const RansacSampling& sampling, const RobustConfig& cfg,
                                 std::size_t h);

/// Solve and score every hypothesis (OpenMP over hypotheses).
std::vector<HypothesisScore> score_hypotheses(const NormalizedCorrespondenceSet& corr,
                                              const RansacSampling& sampling,
                                              const RobustConfig& cfg);

/// True when a is strictly preferred over b (more inliers, then lower residual sum).
bool better_hypothesis(const HypothesisScore& a, const HypothesisScore& b);

struct RansacResult {
  EssentialMatrix E;  // canonical
  InlierMask inliers;  // over all input correspondences, |z| < delta
  std::size_t best_hypothesis = 0;
  std::size_t best_test_inliers = 0;
  std::size_t hypotheses_tried = 0;
  std::size_t degenerate_hypotheses = 0;
};

/// Index of the preferred valid score (lowest index on ties). Throws
/// EstimationFailed when no score is valid.
std::size_t select_best_hypothesis(const std::vector<HypothesisScore>& scores);

RansacResult ransac_init(const NormalizedCorrespondenceSet& corr, const RobustConfig& cfg);

struct EstimationDiagnostics {
  std::size_t hypotheses_tried = 0;
  std::size_t best_inlier_count = 0;
  bool converged = false;  // stopped by the objective floor or an inlier-set fixed point
  std::string stop_reason;  // "objective_floor", "fixed_point" or "iteration_cap"
  int lm_steps = 0;
};

struct EstimationResult {
  EssentialParams params;  // chart centred at the solution: theta = 0
  EssentialMatrix E;
  InlierMask inliers;  // the frozen inlier set theta* is stationary on
  double objective = 0.0;
  int iterations = 0;
  std::vector<double> objective_history;  // entry 0 is the initial objective
  std::vector<std::size_t> inlier_history;
  double gradient_inf_norm = 0.0;  // ||dl/dtheta||_inf on the frozen set
  EstimationDiagnostics diagnostics;
};

/// Gradient of sum_{i in mask} z_i^2 / 2 with respect to theta.
Vec5 restricted_gradient(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                         const InlierMask& mask);

/// IRLS on the truncated objective. Each iteration freezes the inlier set at
/// the current estimate and runs Levenberg-Marquardt on it to convergence.
EstimationResult irls_refine(const NormalizedCorrespondenceSet& corr, const EssentialParams& init,
                             const RobustConfig& cfg);

/// ransac_init followed by irls_refine.
EstimationResult estimate_essential(const NormalizedCorrespondenceSet& corr,
                                    const RobustConfig& cfg);

std::size_t count_inliers(const InlierMask& mask);

/// |x'^T E(theta) x| < delta per correspondence.
InlierMask inlier_mask(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                       double delta);

}  // namespace epiflow
