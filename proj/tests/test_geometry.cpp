#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "epiflow/error.hpp"
#include "epiflow/geometry.hpp"
#include "support.hpp"

using namespace epiflow;
using epiflow::testing::cross_matrix;

TEST(Intrinsics, RejectsNonPositiveFocalLength) {
  EXPECT_THROW((CameraIntrinsics{0.0, 1.0, 0.0, 0.0, 0.0}.validate()), Error);
  EXPECT_THROW((CameraIntrinsics{1.0, -2.0, 0.0, 0.0, 0.0}.validate()), Error);
  EXPECT_NO_THROW((CameraIntrinsics{500.0, 500.0, 320.0, 240.0, 0.0}.validate()));
}

TEST(Intrinsics, NormalizeThenDenormalizeIsIdentity) {
  const CameraIntrinsics K{718.856, 718.856, 607.1928, 185.2157, 0.3};
  const std::vector<PixelPoint> px = {{0.0, 0.0}, {1241.0, 375.0}, {600.5, 10.25}};
  const auto n = normalize_points(px, K);
  const auto back = denormalize_points(n, K);
  for (std::size_t i = 0; i < px.size(); ++i) {
    EXPECT_NEAR(back[i].u, px[i].u, 1e-9);
    EXPECT_NEAR(back[i].v, px[i].v, 1e-9);
  }
  // x = K^-1 p by hand for the first point (skew enters through fx * x + s * y).
  const double y = (0.0 - K.cy) / K.fy;
  const double x = (0.0 - K.cx - K.skew * y) / K.fx;
  EXPECT_NEAR(n[0].x(), x, 1e-15);
  EXPECT_NEAR(n[0].y(), y, 1e-15);
}

TEST(Rotation, ExpMatchesAngleAxisAndLogInverts) {
  std::mt19937_64 gen(11);
  for (int k = 0; k < 200; ++k) {
    const Vec3 axis = epiflow::testing::random_unit(gen);
    const double angle = std::uniform_real_distribution<double>(0.0, 3.1)(gen);
    const Mat3 R = rotation_exp(angle * axis);
    EXPECT_LT((R - Eigen::AngleAxisd(angle, axis).toRotationMatrix()).norm(), 1e-13);
    EXPECT_LT((rotation_log(R) - angle * axis).norm(), 1e-9);
  }
  EXPECT_LT((rotation_exp(Vec3(1e-12, 0, 0)) - Mat3::Identity()).norm(), 1e-11);
}

TEST(Essential, CanonicalFormHasUnitScaleAndFixedSign) {
  std::mt19937_64 gen(5);
  for (int k = 0; k < 50; ++k) {
    const Mat3 R = epiflow::testing::random_rotation(gen, 1.0);
    const Vec3 t = epiflow::testing::random_unit(gen);
    const Mat3 raw = -3.7 * cross_matrix(t) * R;
    const EssentialMatrix E = EssentialMatrix(raw).canonical();
    EXPECT_NEAR(E.matrix().norm(), std::sqrt(2.0), 1e-12);
    Eigen::Index r, c;
    E.matrix().cwiseAbs().maxCoeff(&r, &c);
    EXPECT_GT(E.matrix()(r, c), 0.0);
    EXPECT_LT(canonical_distance(E, EssentialMatrix(-raw)), 1e-12);
    EXPECT_LT(E.determinant_residual(), 1e-12);
    EXPECT_LT(E.trace_constraint_residual(), 1e-12);
    EXPECT_LT(canonical_distance(essential_from_pose(R, t), E), 1e-12);
  }
}

TEST(Essential, PoseCandidatesReproduceE) {
  std::mt19937_64 gen(8);
  const Mat3 R = epiflow::testing::random_rotation(gen, 0.5);
  const Vec3 t = epiflow::testing::random_unit(gen);
  const EssentialMatrix E = essential_from_pose(R, t);
  int hits = 0;
  for (const PoseCandidate& c : essential_pose_candidates(E)) {
    EXPECT_NEAR((c.R.transpose() * c.R - Mat3::Identity()).norm(), 0.0, 1e-12);
    EXPECT_NEAR(c.R.determinant(), 1.0, 1e-12);
    EXPECT_LT(canonical_distance(essential_from_pose(c.R, c.t), E), 1e-10);
    if (rotation_angle_between(c.R, R) < 1e-9 && direction_angle_between(c.t, t) < 1e-9) ++hits;
  }
  EXPECT_EQ(hits, 1);
}

TEST(Chart, CenteredAtReproducesPose) {
  std::mt19937_64 gen(3);
  const Mat3 R = epiflow::testing::random_rotation(gen, 0.3);
  const Vec3 t = epiflow::testing::random_unit(gen);
  const EssentialParams p = EssentialParams::centered_at(R, t);
  EXPECT_TRUE(p.theta().isZero(0.0));
  EXPECT_LT((p.rotation() - R).norm(), 1e-15);
  EXPECT_LT((p.translation() - t).norm(), 1e-15);
  EXPECT_NEAR(p.tangent(0).dot(t), 0.0, 1e-15);
  EXPECT_NEAR(p.tangent(1).dot(t), 0.0, 1e-15);
  EXPECT_NEAR(p.tangent(0).dot(p.tangent(1)), 0.0, 1e-15);
}

TEST(Chart, ParamsFromPoseRoundTripsAndRecenterKeepsPose) {
  std::mt19937_64 gen(4);
  for (int k = 0; k < 50; ++k) {
    const Mat3 R0 = epiflow::testing::random_rotation(gen, 0.5);
    const Vec3 t0 = epiflow::testing::random_unit(gen);
    Vec5 theta;
    for (int i = 0; i < 5; ++i) theta[i] = std::uniform_real_distribution<double>(-0.4, 0.4)(gen);
    const EssentialParams p(theta, R0, t0);
    const EssentialParams q = params_from_pose(p.rotation(), p.translation(), R0, t0);
    EXPECT_LT((q.theta() - theta).norm(), 1e-12);
    const EssentialParams c = p.recentered();
    EXPECT_LT((c.rotation() - p.rotation()).norm(), 1e-14);
    EXPECT_LT((c.translation() - p.translation()).norm(), 1e-14);
  }
}

TEST(Chart, AntipodalTranslationIsSingular) {
  EXPECT_THROW(params_from_pose(Mat3::Identity(), -Vec3::UnitZ(), Mat3::Identity(), Vec3::UnitZ()),
               Error);
}

// The analytic jet against central differences of E(theta) itself.
TEST(Chart, JetMatchesFiniteDifferences) {
  std::mt19937_64 gen(21);
  const EssentialParams base(Vec5(0.05, -0.1, 0.02, 0.3, -0.2),
                             epiflow::testing::random_rotation(gen, 0.4),
                             epiflow::testing::random_unit(gen));
  const EssentialJet jet = essential_jet(base);
  const double h = 1e-5;
  auto E_at = [&](const Vec5& th) {
    return Mat3(cross_matrix(base.with_theta(th).translation()) * base.with_theta(th).rotation());
  };
  EXPECT_LT((jet.E - E_at(base.theta())).norm(), 1e-14);
  for (int k = 0; k < 5; ++k) {
    Vec5 e = Vec5::Zero();
    e[k] = h;
    const Mat3 d = (E_at(base.theta() + e) - E_at(base.theta() - e)) / (2 * h);
    EXPECT_LT((jet.d[static_cast<std::size_t>(k)] - d).norm(), 1e-9) << "k=" << k;
    for (int l = 0; l < 5; ++l) {
      Vec5 f = Vec5::Zero();
      f[l] = h;
      const Mat3 dd = (E_at(base.theta() + e + f) - E_at(base.theta() + e - f) -
                       E_at(base.theta() - e + f) + E_at(base.theta() - e - f)) /
                      (4 * h * h);
      EXPECT_LT((jet.second(k, l) - dd).norm(), 1e-5) << "k=" << k << " l=" << l;
      EXPECT_LT((jet.second(k, l) - jet.second(l, k)).norm(), 1e-14);
    }
  }
}

TEST(Geometry, EpipolarResidualVanishesOnExactProjections) {
  std::mt19937_64 gen(9);
  const Mat3 R = epiflow::testing::random_rotation(gen, 0.2);
  const Vec3 t = epiflow::testing::random_unit(gen);
  const auto corr = epiflow::testing::project_points(gen, R, t, 100);
  const EssentialMatrix E(cross_matrix(t) * R);
  for (const auto& c : corr) EXPECT_NEAR(epipolar_residual(c.first, c.second, E), 0.0, 1e-14);
}
