#include "epiflow/geometry.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>
#include <numbers>
#include <sstream>

#include "epiflow/error.hpp"

namespace epiflow {

Mat3 CameraIntrinsics::matrix() const {
  Mat3 K;
  K << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

void CameraIntrinsics::validate() const {
  const bool finite = std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) &&
                      std::isfinite(cy) && std::isfinite(skew);
  if (!finite || !(fx > 0.0) || !(fy > 0.0)) {
    std::ostringstream os;
    os << "intrinsics must be finite with fx, fy > 0 (fx=" << fx << ", fy=" << fy << ")";
    throw Error(ErrorCode::InvalidIntrinsics, os.str());
  }
}

Mat3 CameraIntrinsics::inverse() const {
  validate();
  // Upper triangular, so the inverse is closed-form.
  Mat3 Kinv;
  Kinv << 1.0 / fx, -skew / (fx * fy), (skew * cy - cx * fy) / (fx * fy), 0.0, 1.0 / fy,
      -cy / fy, 0.0, 0.0, 1.0;
  return Kinv;
}

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return S;
}

namespace {

// Coefficients of the Rodrigues formula as functions of s = |w|^2:
//   a(s) = sin(w)/w,  b(s) = (1 - cos w)/w^2,  plus first and second s-derivatives.
struct RodriguesCoeffs {
  double a, a_s, a_ss;
  double b, b_s, b_ss;
  double c;  // cos(w)
};

RodriguesCoeffs rodrigues_coeffs(double s) {
  RodriguesCoeffs r{};
  if (s < 1.0) {
    // Power series; 1/(2n+1)! decays fast enough that 14 terms reach machine precision.
    constexpr int kTerms = 14;
    std::array<double, kTerms> pw{};
    pw[0] = 1.0;
    for (int n = 1; n < kTerms; ++n) pw[n] = pw[n - 1] * s;
    double fact_cos = 1.0;   // (2n)!
    double fact_odd = 1.0;   // (2n+1)!
    double fact_even = 2.0;  // (2n+2)!
    for (int n = 0; n < kTerms; ++n) {
      const double sign = (n % 2 == 0) ? 1.0 : -1.0;
      const double ca = sign / fact_odd;
      const double cb = sign / fact_even;
      r.c += sign / fact_cos * pw[n];
      r.a += ca * pw[n];
      r.b += cb * pw[n];
      if (n >= 1) {
        r.a_s += n * ca * pw[n - 1];
        r.b_s += n * cb * pw[n - 1];
      }
      if (n >= 2) {
        r.a_ss += n * (n - 1) * ca * pw[n - 2];
        r.b_ss += n * (n - 1) * cb * pw[n - 2];
      }
      const double k = 2.0 * n;
      fact_cos *= (k + 1.0) * (k + 2.0);
      fact_odd *= (k + 2.0) * (k + 3.0);
      fact_even *= (k + 3.0) * (k + 4.0);
    }
    return r;
  }
  const double w = std::sqrt(s);
  const double sn = std::sin(w);
  const double cs = std::cos(w);
  r.c = cs;
  r.a = sn / w;
  r.a_s = (w * cs - sn) / (2.0 * w * s);
  r.a_ss = (3.0 * sn - 3.0 * w * cs - s * sn) / (4.0 * s * s * w);
  r.b = (1.0 - cs) / s;
  r.b_s = (w * sn - 2.0 + 2.0 * cs) / (2.0 * s * s);
  r.b_ss = (s * cs - 5.0 * w * sn + 8.0 - 8.0 * cs) / (4.0 * s * s * s);
  return r;
}

std::array<Vec3, 2> tangent_basis(const Vec3& t0) {
  int axis = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(t0[i]) < std::abs(t0[axis])) axis = i;
  }
  const Vec3 b0 = t0.cross(Vec3::Unit(axis)).normalized();
  const Vec3 b1 = t0.cross(b0);
  return {b0, b1};
}

}  // namespace

Mat3 rotation_exp(const Vec3& omega) {
  const RodriguesCoeffs r = rodrigues_coeffs(omega.squaredNorm());
  const Mat3 W = skew(omega);
  return Mat3::Identity() + r.a * W + r.b * W * W;
}

Vec3 rotation_log(const Mat3& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  return rotation_log(a.transpose() * b).norm();
}

double direction_angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

std::vector<NormalizedPoint> normalize_points(std::span<const PixelPoint> pixels,
                                              const CameraIntrinsics& K) {
  const Mat3 Kinv = K.inverse();
  std::vector<NormalizedPoint> out;
  out.reserve(pixels.size());
  for (const PixelPoint& p : pixels) {
    const Vec3 x = Kinv * Vec3(p.u, p.v, 1.0);
    out.emplace_back(x.x(), x.y());
  }
  return out;
}

std::vector<PixelPoint> denormalize_points(std::span<const NormalizedPoint> points,
                                           const CameraIntrinsics& K) {
  K.validate();
  const Mat3 M = K.matrix();
  std::vector<PixelPoint> out;
  out.reserve(points.size());
  for (const NormalizedPoint& x : points) {
    const Vec3 p = M * x.homogeneous();
    out.push_back({p.x(), p.y()});
  }
  return out;
}

EssentialMatrix EssentialMatrix::canonical() const {
  const double n = m_.norm();
  if (n == 0.0) return *this;
  Mat3 c = m_ * (std::numbers::sqrt2 / n);
  Eigen::Index r = 0, k = 0;
  c.cwiseAbs().maxCoeff(&r, &k);
  if (c(r, k) < 0.0) c = -c;
  return EssentialMatrix(c);
}

double EssentialMatrix::determinant_residual() const {
  return std::abs(canonical().matrix().determinant());
}

double EssentialMatrix::trace_constraint_residual() const {
  const Mat3& E = canonical().matrix();
  const Mat3 EEt = E * E.transpose();
  return (2.0 * EEt * E - EEt.trace() * E).norm();
}

double canonical_distance(const EssentialMatrix& a, const EssentialMatrix& b) {
  return (a.canonical().matrix() - b.canonical().matrix()).norm();
}

EssentialParams::EssentialParams()
    : EssentialParams(Vec5::Zero(), Mat3::Identity(), Vec3::UnitZ()) {}

EssentialParams::EssentialParams(const Vec5& theta, const Mat3& base_rotation,
                                 const Vec3& base_translation)
    : theta_(theta),
      base_rotation_(base_rotation),
      base_translation_(base_translation.normalized()),
      basis_(tangent_basis(base_translation_)) {}

EssentialParams EssentialParams::centered_at(const Mat3& R, const Vec3& t) {
  return EssentialParams(Vec5::Zero(), R, t);
}

Mat3 EssentialParams::rotation() const {
  return rotation_exp(theta_.head<3>()) * base_rotation_;
}

Vec3 EssentialParams::translation() const {
  const Vec2 s = theta_.tail<2>();
  const RodriguesCoeffs r = rodrigues_coeffs(s.squaredNorm());
  const Vec3 v = s[0] * basis_[0] + s[1] * basis_[1];
  // Renormalize to absorb rounding; the map is unit-norm analytically.
  return (r.c * base_translation_ + r.a * v).normalized();
}

EssentialParams EssentialParams::with_theta(const Vec5& theta) const {
  EssentialParams p = *this;
  p.theta_ = theta;
  return p;
}

EssentialParams EssentialParams::recentered() const {
  return centered_at(rotation(), translation());
}

EssentialJet essential_jet(const EssentialParams& params, bool with_second) {
  const Vec5& th = params.theta();
  const Vec3 w = th.head<3>();
  const Vec2 s = th.tail<2>();
  const Mat3& R0 = params.base_rotation();
  const Vec3& t0 = params.base_translation();
  const Vec3& B0 = params.tangent(0);
  const Vec3& B1 = params.tangent(1);

  // Rotation part: Exp(w) = I + a W + b W^2.
  const RodriguesCoeffs rr = rodrigues_coeffs(w.squaredNorm());
  const Mat3 W = skew(w);
  const Mat3 W2 = W * W;
  const Mat3 Rot = (Mat3::Identity() + rr.a * W + rr.b * W2) * R0;
  std::array<Mat3, 3> G;
  for (int k = 0; k < 3; ++k) G[k] = skew(Vec3::Unit(k));

  std::array<Mat3, 3> dR;
  for (int k = 0; k < 3; ++k) {
    const Mat3 dExp = 2.0 * w[k] * rr.a_s * W + rr.a * G[k] + 2.0 * w[k] * rr.b_s * W2 +
                      rr.b * (G[k] * W + W * G[k]);
    dR[k] = dExp * R0;
  }

  // Translation part: t = c(s) t0 + a(s) v, with c_s = -a/2 and c_ss = -a_s/2.
  const RodriguesCoeffs rt = rodrigues_coeffs(s.squaredNorm());
  const Vec3 v = s[0] * B0 + s[1] * B1;
  const std::array<Vec3, 2> B = {B0, B1};
  const double c_s = -0.5 * rt.a;
  const double c_ss = -0.5 * rt.a_s;
  const Vec3 t = rt.c * t0 + rt.a * v;
  std::array<Vec3, 2> dt;
  for (int j = 0; j < 2; ++j) {
    dt[j] = 2.0 * s[j] * c_s * t0 + 2.0 * s[j] * rt.a_s * v + rt.a * B[j];
  }

  EssentialJet jet;
  const Mat3 Tx = skew(t);
  jet.E = Tx * Rot;
  for (int k = 0; k < 3; ++k) jet.d[k] = Tx * dR[k];
  for (int j = 0; j < 2; ++j) jet.d[3 + j] = skew(dt[j]) * Rot;
  if (!with_second) {
    for (Mat3& m : jet.dd) m.setZero();
    return jet;
  }

  for (int k = 0; k < 3; ++k) {
    for (int l = k; l < 3; ++l) {
      const double dkl = (k == l) ? 1.0 : 0.0;
      const Mat3 ddExp = (2.0 * dkl * rr.a_s + 4.0 * w[k] * w[l] * rr.a_ss) * W +
                         2.0 * w[k] * rr.a_s * G[l] + 2.0 * w[l] * rr.a_s * G[k] +
                         (2.0 * dkl * rr.b_s + 4.0 * w[k] * w[l] * rr.b_ss) * W2 +
                         2.0 * w[k] * rr.b_s * (G[l] * W + W * G[l]) +
                         2.0 * w[l] * rr.b_s * (G[k] * W + W * G[k]) +
                         rr.b * (G[k] * G[l] + G[l] * G[k]);
      const Mat3 m = Tx * ddExp * R0;
      jet.dd[5 * k + l] = m;
      jet.dd[5 * l + k] = m;
    }
  }
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < 2; ++j) {
      const Mat3 m = skew(dt[j]) * dR[k];
      jet.dd[5 * k + 3 + j] = m;
      jet.dd[5 * (3 + j) + k] = m;
    }
  }
  for (int j = 0; j < 2; ++j) {
    for (int i = j; i < 2; ++i) {
      const double dji = (j == i) ? 1.0 : 0.0;
      const Vec3 ddt = (2.0 * dji * c_s + 4.0 * s[j] * s[i] * c_ss) * t0 +
                       (2.0 * dji * rt.a_s + 4.0 * s[j] * s[i] * rt.a_ss) * v +
                       2.0 * s[j] * rt.a_s * B[i] + 2.0 * s[i] * rt.a_s * B[j];
      const Mat3 m = skew(ddt) * Rot;
      jet.dd[5 * (3 + j) + 3 + i] = m;
      jet.dd[5 * (3 + i) + 3 + j] = m;
    }
  }
  return jet;
}

EssentialMatrix essential_from_params(const EssentialParams& params) {
  return EssentialMatrix(skew(params.translation()) * params.rotation());
}

EssentialMatrix essential_from_pose(const Mat3& R, const Vec3& t) {
  return EssentialMatrix(skew(t) * R);
}

std::array<PoseCandidate, 4> essential_pose_candidates(const EssentialMatrix& E) {
  const Eigen::JacobiSVD<Mat3> svd(E.matrix(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU();
  Mat3 V = svd.matrixV();
  if (U.determinant() < 0.0) U.col(2) *= -1.0;
  if (V.determinant() < 0.0) V.col(2) *= -1.0;
  Mat3 W;
  W << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
  const Mat3 R1 = U * W * V.transpose();
  const Mat3 R2 = U * W.transpose() * V.transpose();
  const Vec3 t = U.col(2);
  return {PoseCandidate{R1, t}, PoseCandidate{R1, -t}, PoseCandidate{R2, t},
          PoseCandidate{R2, -t}};
}

EssentialParams params_from_pose(const Mat3& R, const Vec3& t, const Mat3& base_rotation,
                                 const Vec3& base_translation) {
  const EssentialParams base = EssentialParams::centered_at(base_rotation, base_translation);
  const Vec3& t0 = base.base_translation();
  const Vec3 tn = t.normalized();
  const double phi = direction_angle_between(t0, tn);
  if (phi > std::numbers::pi - 1e-7) {
    throw Error(ErrorCode::ChartSingularity,
                "translation is antipodal to the chart base direction; re-base the chart");
  }
  Vec5 theta;
  theta.head<3>() = rotation_log(R * base_rotation.transpose());
  const Vec3 perp = tn - tn.dot(t0) * t0;
  const double pn = perp.norm();
  if (pn == 0.0 || phi == 0.0) {
    theta.tail<2>().setZero();
  } else {
    const Vec3 dir = perp / pn;
    theta[3] = phi * dir.dot(base.tangent(0));
    theta[4] = phi * dir.dot(base.tangent(1));
  }
  return base.with_theta(theta);
}

}  // namespace epiflow
