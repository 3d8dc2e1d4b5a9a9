#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace epiflow {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat5 = Eigen::Matrix<double, 5, 5>;

/// Pinhole intrinsics. fx, fy > 0; the implied K must be invertible.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double skew = 0.0;

  static CameraIntrinsics identity() { return {}; }

  Mat3 matrix() const;
  /// Throws InvalidIntrinsics unless K is a valid, invertible calibration.
  void validate() const;
  Mat3 inverse() const;
};

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
};

/// A point on the unit focal plane: homogeneous 3-vector with last entry 1.
class NormalizedPoint {
 public:
  NormalizedPoint() = default;
  NormalizedPoint(double x, double y) : h_(x, y, 1.0) {}

  double x() const { return h_.x(); }
  double y() const { return h_.y(); }
  const Vec3& homogeneous() const { return h_; }

 private:
  Vec3 h_{0.0, 0.0, 1.0};
};

struct Correspondence {
  NormalizedPoint first;
  NormalizedPoint second;
  std::size_t source = 0;  // index into the pixel grid the pair came from
};

using NormalizedCorrespondenceSet = std::vector<Correspondence>;

Mat3 skew(const Vec3& v);
Mat3 rotation_exp(const Vec3& omega);
Vec3 rotation_log(const Mat3& R);
/// Geodesic angle between two rotations (radians).
double rotation_angle_between(const Mat3& a, const Mat3& b);
/// Angle between two directions (radians), sign-sensitive.
double direction_angle_between(const Vec3& a, const Vec3& b);

std::vector<NormalizedPoint> normalize_points(std::span<const PixelPoint> pixels,
                                              const CameraIntrinsics& K);
std::vector<PixelPoint> denormalize_points(std::span<const NormalizedPoint> points,
                                           const CameraIntrinsics& K);

/// 3x3 essential matrix. Not normalized on construction; see canonical().
class EssentialMatrix {
 public:
  EssentialMatrix() : m_(Mat3::Zero()) {}
  explicit EssentialMatrix(const Mat3& m) : m_(m) {}

  const Mat3& matrix() const { return m_; }

  /// Frobenius norm sqrt(2), sign fixed so the largest-magnitude entry is positive.
  EssentialMatrix canonical() const;

  /// |det E| after canonical scaling.
  double determinant_residual() const;
  /// ||2 E E^T E - tr(E E^T) E||_F after canonical scaling.
  double trace_constraint_residual() const;

 private:
  Mat3 m_;
};

/// Frobenius distance between the canonical forms of two essential matrices.
double canonical_distance(const EssentialMatrix& a, const EssentialMatrix& b);

/// Minimal 5-parameter chart of essential matrices around a base pose (R0, t0):
///   R(theta) = Exp(theta[0:3]) * R0
///   t(theta) = cos|s| t0 + sin|s|/|s| (s0 b0 + s1 b1),  s = theta[3:5]
/// where (b0, b1) is a fixed orthonormal basis of the tangent plane at t0.
class EssentialParams {
 public:
  EssentialParams();
  EssentialParams(const Vec5& theta, const Mat3& base_rotation, const Vec3& base_translation);

  /// Chart centred at (R, t): theta = 0.
  static EssentialParams centered_at(const Mat3& R, const Vec3& t);

  const Vec5& theta() const { return theta_; }
  const Mat3& base_rotation() const { return base_rotation_; }
  const Vec3& base_translation() const { return base_translation_; }
  const Vec3& tangent(int i) const { return basis_[static_cast<std::size_t>(i)]; }

  Mat3 rotation() const;
  Vec3 translation() const;

  EssentialParams with_theta(const Vec5& theta) const;
  /// Same pose, chart moved so that theta = 0.
  EssentialParams recentered() const;

 private:
  Vec5 theta_;
  Mat3 base_rotation_;
  Vec3 base_translation_;
  std::array<Vec3, 2> basis_;
};

/// E(theta) and its analytic first and second derivatives with respect to theta.
struct EssentialJet {
  Mat3 E;
  std::array<Mat3, 5> d;
  std::array<Mat3, 25> dd;  // dd[5 * k + l] = d^2 E / d theta_k d theta_l (symmetric)

  const Mat3& second(int k, int l) const { return dd[static_cast<std::size_t>(5 * k + l)]; }
};

EssentialJet essential_jet(const EssentialParams& params, bool with_second = true);

EssentialMatrix essential_from_params(const EssentialParams& params);
EssentialMatrix essential_from_pose(const Mat3& R, const Vec3& t);

struct PoseCandidate {
  Mat3 R;
  Vec3 t;  // unit norm
};

/// The four (R, +-t) factorizations of E = [t]x R (up to scale), from its SVD.
std::array<PoseCandidate, 4> essential_pose_candidates(const EssentialMatrix& E);

/// Chart coordinates of (R, t) around base (R0, t0). Throws ChartSingularity
/// when t is antipodal to t0.
EssentialParams params_from_pose(const Mat3& R, const Vec3& t, const Mat3& base_rotation,
                                 const Vec3& base_translation);

/// x'^T E x.
inline double epipolar_residual(const NormalizedPoint& x, const NormalizedPoint& x2,
                                const EssentialMatrix& E) {
  return x2.homogeneous().dot(E.matrix() * x.homogeneous());
}

}  // namespace epiflow
