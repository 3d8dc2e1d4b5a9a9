#pragma once

// Single-threaded versions of the OpenMP kernels. They share the per-item
// kernels with the parallel code and differ only in scheduling, so any
// disagreement points at a data race or an order-dependent reduction.

#include <vector>

#include "epiflow/implicit_diff.hpp"
#include "epiflow/losses.hpp"
#include "epiflow/robust.hpp"

namespace epiflow::reference {

std::vector<double> epipolar_residuals(const NormalizedCorrespondenceSet& corr,
                                       const EssentialMatrix& E);

double lower_objective(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                       double delta);

std::vector<HypothesisScore> score_hypotheses(const NormalizedCorrespondenceSet& corr,
                                              const RansacSampling& sampling,
                                              const RobustConfig& cfg);

OcclusionMask occlusion_mask(const FlowField& forward, const FlowField& backward, double beta1,
                             double beta2);
double photometric_loss(const CensusField& c1, const CensusField& c2, const FlowField& forward,
                        const OcclusionMask& mask, const LossWeights& w);
double fb_consistency_loss(const FlowField& forward, const FlowField& backward,
                           const OcclusionMask& mask, const LossWeights& w);
double smoothness_loss(const Image& I, const FlowField& flow, double alpha);

Matrix5X mixed_hessian(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                       const InlierMask& mask, const CameraIntrinsics& K2);

}  // namespace epiflow::reference
