#include "epiflow/implicit_diff.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "epiflow/error.hpp"
#include "epiflow/losses.hpp"
#include "kernels.hpp"

namespace epiflow {
namespace {

void check_mask(const NormalizedCorrespondenceSet& corr, const InlierMask& mask) {
  if (mask.size() != corr.size()) {
    throw Error(ErrorCode::ConfigError, "inlier mask does not match the correspondence count");
  }
}

}  // namespace

Eigen::Matrix<double, 3, 2> flow_jacobian(const CameraIntrinsics& K2) {
  return K2.inverse().leftCols<2>();
}

Mat5 hessian_theta(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                   const InlierMask& mask) {
  check_mask(corr, mask);
  const EssentialJet jet = essential_jet(params, true);
  Mat5 H = Mat5::Zero();
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (!mask[i]) continue;
    const Vec3& x = corr[i].first.homogeneous();
    const Vec3& x2 = corr[i].second.homogeneous();
    const double z = x2.dot(jet.E * x);
    Vec5 J;
    for (int k = 0; k < 5; ++k) J[k] = x2.dot(jet.d[static_cast<std::size_t>(k)] * x);
    H.noalias() += J * J.transpose();
    for (int k = 0; k < 5; ++k) {
      for (int l = k; l < 5; ++l) H(k, l) += z * x2.dot(jet.second(k, l) * x);
    }
  }
  H.triangularView<Eigen::StrictlyLower>() = H.transpose().triangularView<Eigen::StrictlyLower>();
  return H;
}

Mat5 hessian_theta(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                   double delta) {
  return hessian_theta(corr, params, inlier_mask(corr, params, delta));
}

Matrix5X mixed_hessian(const NormalizedCorrespondenceSet& corr, const EssentialParams& params,
                       const InlierMask& mask, const CameraIntrinsics& K2) {
  check_mask(corr, mask);
  const EssentialJet jet = essential_jet(params, false);
  const Eigen::Matrix<double, 3, 2> P = flow_jacobian(K2);
  const auto n = static_cast<std::ptrdiff_t>(corr.size());
  Matrix5X M = Matrix5X::Zero(5, 2 * n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (!mask[ui]) continue;
    M.middleCols<2>(2 * i) =
        kernels::mixed_block(jet, corr[ui].first.homogeneous(), corr[ui].second.homogeneous(), P);
  }
  return M;
}

ImplicitGradient dtheta_dflow(const NormalizedCorrespondenceSet& corr,
                              const EssentialParams& params, const InlierMask& mask,
                              const CameraIntrinsics& K2) {
  const Mat5 H = hessian_theta(corr, params, mask);
  // H may be indefinite at a saddle, so factor it symmetrically rather than
  // with Cholesky; the spectrum also gives the condition number.
  const Eigen::SelfAdjointEigenSolver<Mat5> eig(H);
  const Vec5 lambda = eig.eigenvalues();
  const double lo = lambda.cwiseAbs().minCoeff();
  const double hi = lambda.cwiseAbs().maxCoeff();
  const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(cond <= 1e12)) {
    std::ostringstream os;
    os << "Hessian condition number " << cond << " exceeds 1e12";
    throw Error(ErrorCode::DegenerateGeometry, os.str());
  }
  const Mat5 Hinv =
      eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();

  ImplicitGradient g;
  g.dtheta_dflow = -Hinv * mixed_hessian(corr, params, mask, K2);
  // Columns outside the set are exactly zero in M and stay so; make the
  // contract explicit against -0.0.
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (!mask[i]) g.dtheta_dflow.middleCols<2>(static_cast<Eigen::Index>(2 * i)).setZero();
  }
  g.inliers = mask;
  g.condition_number = cond;
  g.params = params;
  return g;
}

ImplicitGradient dtheta_dflow(const NormalizedCorrespondenceSet& corr,
                              const EstimationResult& result, const CameraIntrinsics& K2) {
  return dtheta_dflow(corr, result.params, result.inliers, K2);
}

Eigen::VectorXd total_gradient(const Eigen::VectorXd& dL_dflow, const Vec5& dL_dtheta,
                               const ImplicitGradient& g) {
  if (dL_dflow.size() != g.dtheta_dflow.cols()) {
    throw Error(ErrorCode::ConfigError, "dL/dV has " + std::to_string(dL_dflow.size()) +
                                            " entries, expected " +
                                            std::to_string(g.dtheta_dflow.cols()));
  }
  return dL_dflow + g.dtheta_dflow.transpose() * dL_dtheta;
}

NormalizedCorrespondenceSet perturb_flow(const NormalizedCorrespondenceSet& corr, std::size_t i,
                                         const Vec2& delta, const CameraIntrinsics& K2) {
  NormalizedCorrespondenceSet out = corr;
  const Vec3 x2 = corr[i].second.homogeneous() + flow_jacobian(K2) * delta;
  out[i].second = NormalizedPoint(x2.x(), x2.y());
  return out;
}

ResolveProbe resolve_column(const NormalizedCorrespondenceSet& corr,
                            const EstimationResult& result, const CameraIntrinsics& K2,
                            std::size_t column, double step, const RobustConfig& cfg) {
  const std::size_t i = column / 2;
  const Vec2 dir = (column % 2 == 0) ? Vec2(1.0, 0.0) : Vec2(0.0, 1.0);
  const Mat3 R0 = result.params.rotation();
  const Vec3 t0 = result.params.translation();
  ResolveProbe probe;
  std::array<Vec5, 2> theta;
  for (int s = 0; s < 2; ++s) {
    const double h = s == 0 ? step : -step;
    const NormalizedCorrespondenceSet moved = perturb_flow(corr, i, h * dir, K2);
    const EstimationResult r = irls_refine(moved, result.params, cfg);
    if (r.inliers != result.inliers) probe.inlier_flip = true;
    theta[static_cast<std::size_t>(s)] =
        params_from_pose(r.params.rotation(), r.params.translation(), R0, t0).theta();
  }
  probe.derivative = (theta[0] - theta[1]) / (2.0 * step);
  return probe;
}

ResolveLossProbe resolve_epipolar_column(const NormalizedCorrespondenceSet& corr,
                                         const EstimationResult& result,
                                         const CameraIntrinsics& K2, std::size_t column,
                                         double step, const RobustConfig& cfg) {
  const std::size_t i = column / 2;
  const Vec2 dir = (column % 2 == 0) ? Vec2(1.0, 0.0) : Vec2(0.0, 1.0);
  ResolveLossProbe probe;
  std::array<double, 2> value{};
  for (int s = 0; s < 2; ++s) {
    const double h = s == 0 ? step : -step;
    const NormalizedCorrespondenceSet moved = perturb_flow(corr, i, h * dir, K2);
    const EstimationResult r = irls_refine(moved, result.params, cfg);
    if (r.inliers != result.inliers) probe.inlier_flip = true;
    value[static_cast<std::size_t>(s)] = epipolar_loss(moved, r.params).value;
  }
  probe.derivative = (value[0] - value[1]) / (2.0 * step);
  return probe;
}

}  // namespace epiflow
