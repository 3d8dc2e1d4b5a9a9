#include <algorithm>

#include "../kernels.hpp"
#include "epiflow/error.hpp"
#include "epiflow/parallel.hpp"
#include "epiflow/reference.hpp"

namespace epiflow::reference {

OcclusionMask occlusion_mask(const FlowField& forward, const FlowField& backward, double beta1,
                             double beta2) {
  OcclusionMask m;
  m.non_occluded.assign(forward.size(), 0);
  for (int y = 0; y < forward.height(); ++y) {
    for (int x = 0; x < forward.width(); ++x) {
      m.non_occluded[forward.index(x, y)] =
          kernels::non_occluded(forward, backward, x, y, beta1, beta2);
    }
  }
  m.count = static_cast<std::size_t>(
      std::count(m.non_occluded.begin(), m.non_occluded.end(), std::uint8_t{1}));
  return m;
}

double photometric_loss(const CensusField& c1, const CensusField& c2, const FlowField& forward,
                        const OcclusionMask& mask, const LossWeights& w) {
  if (mask.count == 0) throw Error(ErrorCode::EmptyMask, "photometric_loss: mask is empty");
  std::vector<double> terms(forward.size(), 0.0);
  for (int y = 0; y < forward.height(); ++y) {
    for (int x = 0; x < forward.width(); ++x) {
      const std::size_t i = forward.index(x, y);
      if (mask.non_occluded[i]) terms[i] = kernels::photometric_term(c1, c2, forward, x, y, w);
    }
  }
  return parallel::pairwise_sum(terms) / static_cast<double>(mask.count);
}

double fb_consistency_loss(const FlowField& forward, const FlowField& backward,
                           const OcclusionMask& mask, const LossWeights& w) {
  if (mask.count == 0) throw Error(ErrorCode::EmptyMask, "fb_consistency_loss: mask is empty");
  std::vector<double> terms(forward.size(), 0.0);
  for (int y = 0; y < forward.height(); ++y) {
    for (int x = 0; x < forward.width(); ++x) {
      const std::size_t i = forward.index(x, y);
      if (mask.non_occluded[i]) terms[i] = kernels::consistency_term(forward, backward, x, y, w);
    }
  }
  return parallel::pairwise_sum(terms) / static_cast<double>(mask.count);
}

double smoothness_loss(const Image& I, const FlowField& flow, double alpha) {
  std::vector<double> terms(flow.size(), 0.0);
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      terms[flow.index(x, y)] = kernels::smoothness_term(I, flow, x, y, alpha);
    }
  }
  return parallel::pairwise_sum(terms) / (2.0 * static_cast<double>(flow.size()));
}

Matrix5X mixed_hessian(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                       const InlierMask& mask, const CameraIntrinsics& K2) {
  const EssentialJet jet = essential_jet(params, false);
  const Eigen::Matrix<double, 3, 2> P = flow_jacobian(K2);
  Matrix5X M = Matrix5X::Zero(5, 2 * static_cast<Eigen::Index>(corr.size()));
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (!mask[i]) continue;
    M.middleCols<2>(2 * static_cast<Eigen::Index>(i)) =
        kernels::mixed_block(jet, corr[i].first.homogeneous(), corr[i].second.homogeneous(), P);
  }
  return M;
}

}  // namespace epiflow::reference
