#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "epiflow/geometry.hpp"
#include "epiflow/robust.hpp"

namespace epiflow {

using Matrix5X = Eigen::Matrix<double, 5, Eigen::Dynamic>;

/// d theta* / dV at a stationary point, flow columns ordered (du_0, dv_0,
/// du_1, dv_1, ...) following the correspondence order.
struct ImplicitGradient {
  Matrix5X dtheta_dflow;
  InlierMask inliers;  // frozen set the derivative is exact for
  double condition_number = 0.0;
  EssentialParams params;  // chart the rows are expressed in
};

/// d^2 l / d theta^2 over the frozen set: sum J J^T + z d^2z/dtheta^2.
Mat5 hessian_theta(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                   const InlierMask& mask);
/// Same, with the set taken as |z| < delta at params.
Mat5 hessian_theta(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                   double delta);

/// d^2 l / dV dtheta (5 x 2N). The second point moves with the flow as
/// x' = K'^-1 (p + v); columns of non-members of the set are exactly zero.
Matrix5X mixed_hessian(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                       const InlierMask& mask, const CameraIntrinsics& K2);

/// Symmetric eigendecomposition of H, reused for all 2N right-hand sides.
/// Throws DegenerateGeometry when the condition number exceeds 1e12.
ImplicitGradient dtheta_dflow(const NormalizedCorrespondenceSet& corr,
                              const EssentialParams& params, const InlierMask& mask,
                              const CameraIntrinsics& K2);
ImplicitGradient dtheta_dflow(const NormalizedCorrespondenceSet& corr,
                              const EstimationResult& result, const CameraIntrinsics& K2);

/// dL/dV + (dL/dtheta)^T dtheta*/dV.
Eigen::VectorXd total_gradient(const Eigen::VectorXd& dL_dflow, const Vec5& dL_dtheta,
                               const ImplicitGradient& g);

/// dx'/dv: the first two columns of K'^-1.
Eigen::Matrix<double, 3, 2> flow_jacobian(const CameraIntrinsics& K2);

/// Moves the second point of correspondence i by `delta` pixels of flow.
NormalizedCorrespondenceSet perturb_flow(const NormalizedCorrespondenceSet& corr, std::size_t i,
                                         const Vec2& delta, const CameraIntrinsics& K2);

/// Finite-difference oracle for one column of dtheta*/dV: re-solve from
/// theta* with flow entry `column` moved by +-step px, express both solutions
/// in the chart of `result`, and take the central difference.
struct ResolveProbe {
  Vec5 derivative = Vec5::Zero();
  bool inlier_flip = false;  // either re-solve ended on a different inlier set
};
ResolveProbe resolve_column(const NormalizedCorrespondenceSet& corr,
                            const EstimationResult& result, const CameraIntrinsics& K2,
                            std::size_t column, double step, const RobustConfig& cfg);

/// Same re-solve oracle for the scalar upper loss L_e(V, theta*(V)).
struct ResolveLossProbe {
  double derivative = 0.0;
  bool inlier_flip = false;
};
ResolveLossProbe resolve_epipolar_column(const NormalizedCorrespondenceSet& corr,
                                         const EstimationResult& result,
                                         const CameraIntrinsics& K2, std::size_t column,
                                         double step, const RobustConfig& cfg);

}  // namespace epiflow
