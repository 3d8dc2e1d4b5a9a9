#include "epiflow/parallel.hpp"
#include "epiflow/reference.hpp"

namespace epiflow::reference {

std::vector<double> epipolar_residuals(const NormalizedCorrespondenceSet& corr,
                                       const EssentialMatrix& E) {
  std::vector<double> z;
  z.reserve(corr.size());
  for (const Correspondence& c : corr) z.push_back(epipolar_residual(c.first, c.second, E));
  return z;
}

double lower_objective(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                       double delta) {
  std::vector<double> z = reference::epipolar_residuals(corr, essential_from_params(params));
  for (double& v : z) v = robust_penalty(v, delta);
  return parallel::pairwise_sum(z);
}

std::vector<HypothesisScore> score_hypotheses(const NormalizedCorrespondenceSet& corr,
                                              const RansacSampling& sampling,
                                              const RobustConfig& cfg) {
  std::vector<HypothesisScore> scores;
  scores.reserve(cfg.hypothesis_count);
  for (std::size_t h = 0; h < cfg.hypothesis_count; ++h) {
    scores.push_back(score_hypothesis(corr, sampling, cfg, h));
  }
  return scores;
}

}  // namespace epiflow::reference
