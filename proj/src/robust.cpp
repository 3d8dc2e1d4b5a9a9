#include "epiflow/robust.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "epiflow/error.hpp"
#include "epiflow/fivepoint.hpp"
#include "epiflow/parallel.hpp"
#include "epiflow/rng.hpp"

namespace epiflow {

void RobustConfig::validate() const {
  if (!(inlier_threshold > 0.0) || !std::isfinite(inlier_threshold)) {
    throw Error(ErrorCode::ConfigError, "inlier_threshold must be a positive finite number");
  }
  if (test_set_size < 5) throw Error(ErrorCode::ConfigError, "test_set_size must be >= 5");
  if (sample_pool < test_set_size) {
    throw Error(ErrorCode::ConfigError, "sample_pool must be >= test_set_size");
  }
  if (hypothesis_count < 1) throw Error(ErrorCode::ConfigError, "hypothesis_count must be >= 1");
  if (irls_max_iters < 1) throw Error(ErrorCode::ConfigError, "irls_max_iters must be >= 1");
  if (!(irls_objective_floor >= 0.0)) {
    throw Error(ErrorCode::ConfigError, "irls_objective_floor must be >= 0");
  }
}

std::vector<double> epipolar_residuals(const NormalizedCorrespondenceSet& corr,
                                       const EssentialMatrix& E) {
  std::vector<double> z(corr.size());
  const auto n = static_cast<std::ptrdiff_t>(corr.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& c = corr[static_cast<std::size_t>(i)];
    z[static_cast<std::size_t>(i)] = epipolar_residual(c.first, c.second, E);
  }
  return z;
}

double lower_objective(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                       double delta) {
  std::vector<double> z = epipolar_residuals(corr, essential_from_params(params));
  for (double& v : z) v = robust_penalty(v, delta);
  return parallel::pairwise_sum(z);
}

std::size_t count_inliers(const InlierMask& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

RansacSampling RansacSampling::draw(std::size_t correspondence_count, const RobustConfig& cfg) {
  if (correspondence_count < 5) {
    throw Error(ErrorCode::InsufficientData,
                "need at least 5 correspondences, got " + std::to_string(correspondence_count));
  }
  const std::size_t n = correspondence_count;
  RansacSampling s;

  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  auto partial_shuffle = [n](std::size_t k, CounterRng rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k && i + 1 < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  };

  const std::size_t pool = std::min(cfg.sample_pool, n);
  if (pool == n) {
    s.pool.resize(n);
    std::iota(s.pool.begin(), s.pool.end(), std::size_t{0});
  } else {
    s.pool = partial_shuffle(pool, CounterRng(cfg.rng_seed, Stream::Pool, 0));
  }
  const std::size_t test = std::min(cfg.test_set_size, n);
  if (test == n) {
    s.test_set.resize(n);
    std::iota(s.test_set.begin(), s.test_set.end(), std::size_t{0});
  } else {
    s.test_set = partial_shuffle(test, CounterRng(cfg.rng_seed, Stream::Pool, 1));
  }
  return s;
}

std::array<std::size_t, 5> RansacSampling::minimal_sample(std::size_t hypothesis,
                                                          std::uint64_t seed) const {
  CounterRng rng(seed, Stream::Hypothesis, hypothesis);
  std::array<std::size_t, 5> pos{};
  for (std::size_t k = 0; k < 5;) {
    const auto p = static_cast<std::size_t>(rng.below(pool.size()));
    if (std::find(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(k), p) !=
        pos.begin() + static_cast<std::ptrdiff_t>(k)) {
      continue;
    }
    pos[k++] = p;
  }
  std::array<std::size_t, 5> out{};
  for (std::size_t k = 0; k < 5; ++k) out[k] = pool[pos[k]];
  return out;
}

bool better_hypothesis(const HypothesisScore& a, const HypothesisScore& b) {
  if (!a.valid) return false;
  if (!b.valid) return true;
  if (a.inliers != b.inliers) return a.inliers > b.inliers;
  return a.residual_sum < b.residual_sum;
}

HypothesisScore score_hypothesis(const NormalizedCorrespondenceSet& corr,
                                 const RansacSampling& sampling, const RobustConfig& cfg,
                                 std::size_t h) {
  MinimalSample sample;
  sample.indices = sampling.minimal_sample(h, cfg.rng_seed);
  for (std::size_t k = 0; k < 5; ++k) {
    sample.first[k] = corr[sample.indices[k]].first;
    sample.second[k] = corr[sample.indices[k]].second;
  }
  std::vector<EssentialMatrix> candidates;
  try {
    candidates = solve_five_point(sample);
  } catch (const Error&) {
    return {};
  }

  HypothesisScore best;
  const double delta = cfg.inlier_threshold;
  for (const EssentialMatrix& E : candidates) {
    HypothesisScore s;
    s.valid = true;
    s.E = E;
    for (std::size_t i : sampling.test_set) {
      const double az = std::abs(epipolar_residual(corr[i].first, corr[i].second, E));
      if (az < delta) ++s.inliers;
      s.residual_sum += az;
    }
    if (better_hypothesis(s, best)) best = s;
  }
  return best;
}

std::vector<HypothesisScore> score_hypotheses(const NormalizedCorrespondenceSet& corr,
                                              const RansacSampling& sampling,
                                              const RobustConfig& cfg) {
  std::vector<HypothesisScore> scores(cfg.hypothesis_count);
  const auto n = static_cast<std::ptrdiff_t>(cfg.hypothesis_count);
  // Each slot is written by exactly one iteration; selection happens serially
  // afterwards, so the winner does not depend on the schedule.
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t h = 0; h < n; ++h) {
    scores[static_cast<std::size_t>(h)] =
        score_hypothesis(corr, sampling, cfg, static_cast<std::size_t>(h));
  }
  return scores;
}

std::size_t select_best_hypothesis(const std::vector<HypothesisScore>& scores) {
  std::size_t best = scores.size();
  for (std::size_t h = 0; h < scores.size(); ++h) {
    if (!scores[h].valid) continue;
    if (best == scores.size() || better_hypothesis(scores[h], scores[best])) best = h;
  }
  if (best == scores.size()) {
    throw Error(ErrorCode::EstimationFailed,
                "all " + std::to_string(scores.size()) + " RANSAC hypotheses were degenerate");
  }
  return best;
}

RansacResult ransac_init(const NormalizedCorrespondenceSet& corr, const RobustConfig& cfg) {
  cfg.validate();
  const RansacSampling sampling = RansacSampling::draw(corr.size(), cfg);
  const std::vector<HypothesisScore> scores = score_hypotheses(corr, sampling, cfg);
  const std::size_t best = select_best_hypothesis(scores);

  RansacResult r;
  r.E = scores[best].E;
  r.best_hypothesis = best;
  r.best_test_inliers = scores[best].inliers;
  r.hypotheses_tried = scores.size();
  r.degenerate_hypotheses = static_cast<std::size_t>(
      std::count_if(scores.begin(), scores.end(), [](const auto& s) { return !s.valid; }));
  const std::vector<double> z = epipolar_residuals(corr, r.E);
  r.inliers.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    r.inliers[i] = std::abs(z[i]) < cfg.inlier_threshold ? 1 : 0;
  }
  return r;
}

namespace {

// Normal equations of 0.5 * sum_{mask} z_i^2 in the chart.
struct LeastSquaresSystem {
  double cost = 0.0;
  Vec5 gradient = Vec5::Zero();
  Mat5 gauss_newton = Mat5::Zero();
};

LeastSquaresSystem build_system(const NormalizedCorrespondenceSet& corr,
                                const EssentialParams& params, const InlierMask& mask) {
  const EssentialJet jet = essential_jet(params, false);
  LeastSquaresSystem sys;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (!mask[i]) continue;
    const Vec3& x = corr[i].first.homogeneous();
    const Vec3& x2 = corr[i].second.homogeneous();
    const double z = x2.dot(jet.E * x);
    Vec5 J;
    for (int k = 0; k < 5; ++k) J[k] = x2.dot(jet.d[static_cast<std::size_t>(k)] * x);
    sys.cost += 0.5 * z * z;
    sys.gradient += z * J;
    sys.gauss_newton.noalias() += J * J.transpose();
  }
  return sys;
}

double restricted_cost(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                       const InlierMask& mask) {
  const EssentialMatrix E = essential_from_params(params);
  double cost = 0.0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (!mask[i]) continue;
    const double z = epipolar_residual(corr[i].first, corr[i].second, E);
    cost += 0.5 * z * z;
  }
  return cost;
}

// Levenberg-Marquardt on the frozen set, to numerical convergence. The chart is
// re-centred after every accepted step so theta stays at the origin.
EssentialParams levenberg_marquardt(const NormalizedCorrespondenceSet& corr,
                                    EssentialParams params, const InlierMask& mask,
                                    int& steps) {
  constexpr int kMaxSteps = 100;
  constexpr double kStepTol = 1e-15;
  double lambda = 1e-4;
  LeastSquaresSystem sys = build_system(corr, params, mask);
  for (int it = 0; it < kMaxSteps; ++it) {
    if (sys.cost == 0.0 || sys.gradient.lpNorm<Eigen::Infinity>() == 0.0) break;
    Mat5 A = sys.gauss_newton;
    A.diagonal() += lambda * sys.gauss_newton.diagonal().cwiseMax(1e-12);
    const Vec5 step = A.ldlt().solve(-sys.gradient);
    if (!step.allFinite()) break;
    const EssentialParams trial = params.with_theta(params.theta() + step).recentered();
    const double trial_cost = restricted_cost(corr, trial, mask);
    if (trial_cost < sys.cost) {
      params = trial;
      sys = build_system(corr, params, mask);
      lambda = std::max(lambda * 0.1, 1e-12);
      ++steps;
      if (step.lpNorm<Eigen::Infinity>() < kStepTol) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e10) break;
    }
  }
  // Near the minimum the cost change of a step drops below its rounding error,
  // so cost comparisons stall. Finish with Gauss-Newton steps accepted on the
  // gradient norm, which stays resolvable down to ~1e-16.
  double gnorm = sys.gradient.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < 8 && gnorm > 0.0; ++it) {
    const Vec5 step = sys.gauss_newton.ldlt().solve(-sys.gradient);
    if (!step.allFinite()) break;
    const EssentialParams trial = params.with_theta(params.theta() + step).recentered();
    const LeastSquaresSystem trial_sys = build_system(corr, trial, mask);
    const double trial_gnorm = trial_sys.gradient.lpNorm<Eigen::Infinity>();
    if (!(trial_gnorm < gnorm)) break;
    params = trial;
    sys = trial_sys;
    gnorm = trial_gnorm;
    ++steps;
  }
  return params;
}

}  // namespace

InlierMask inlier_mask(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                       double delta) {
  const std::vector<double> z = epipolar_residuals(corr, essential_from_params(params));
  InlierMask mask(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) mask[i] = std::abs(z[i]) < delta ? 1 : 0;
  return mask;
}

Vec5 restricted_gradient(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                         const InlierMask& mask) {
  return build_system(corr, params, mask).gradient;
}

EstimationResult irls_refine(const NormalizedCorrespondenceSet& corr, const EssentialParams& init,
                             const RobustConfig& cfg) {
  cfg.validate();
  if (corr.size() < 5) {
    throw Error(ErrorCode::InsufficientData,
                "need at least 5 correspondences, got " + std::to_string(corr.size()));
  }
  if (!init.theta().allFinite()) throw Error(ErrorCode::ConfigError, "initial theta is not finite");
  const double delta = cfg.inlier_threshold;

  EstimationResult res;
  EssentialParams params = init.recentered();
  InlierMask mask = inlier_mask(corr, params, delta);
  double objective = lower_objective(corr, params, delta);
  res.objective_history.push_back(objective);
  res.inlier_history.push_back(count_inliers(mask));

  res.diagnostics.stop_reason = "iteration_cap";
  while (true) {
    if (objective <= cfg.irls_objective_floor) {
      res.diagnostics.stop_reason = "objective_floor";
      res.diagnostics.converged = true;
      break;
    }
    if (res.iterations >= cfg.irls_max_iters) break;
    if (count_inliers(mask) < 5) {
      throw Error(ErrorCode::EstimationFailed,
                  "inlier set collapsed to " + std::to_string(count_inliers(mask)) + " points");
    }
    params = levenberg_marquardt(corr, params, mask, res.diagnostics.lm_steps);
    ++res.iterations;
    objective = lower_objective(corr, params, delta);
    InlierMask next = inlier_mask(corr, params, delta);
    res.objective_history.push_back(objective);
    res.inlier_history.push_back(count_inliers(next));
    if (next == mask) {
      res.diagnostics.stop_reason = "fixed_point";
      res.diagnostics.converged = true;
      break;
    }
    // Keep the set the last solve ran on unless another solve follows.
    if (objective <= cfg.irls_objective_floor || res.iterations >= cfg.irls_max_iters) {
      res.diagnostics.stop_reason =
          objective <= cfg.irls_objective_floor ? "objective_floor" : "iteration_cap";
      res.diagnostics.converged = objective <= cfg.irls_objective_floor;
      break;
    }
    mask = std::move(next);
  }

  res.params = params.recentered();
  res.E = essential_from_params(res.params);
  res.inliers = std::move(mask);
  res.objective = objective;
  res.gradient_inf_norm = restricted_gradient(corr, res.params, res.inliers).lpNorm<Eigen::Infinity>();
  res.diagnostics.best_inlier_count = count_inliers(res.inliers);
  return res;
}

EstimationResult estimate_essential(const NormalizedCorrespondenceSet& corr,
                                    const RobustConfig& cfg) {
  const RansacResult init = ransac_init(corr, cfg);
  const PoseCandidate pose = essential_pose_candidates(init.E)[0];
  EstimationResult res = irls_refine(corr, EssentialParams::centered_at(pose.R, pose.t), cfg);
  res.diagnostics.hypotheses_tried = init.hypotheses_tried;
  res.diagnostics.best_inlier_count = init.best_test_inliers;
  return res;
}

}  // namespace epiflow
