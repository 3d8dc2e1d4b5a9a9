#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "epiflow/error.hpp"
#include "epiflow/odometry.hpp"
#include "support.hpp"

using namespace epiflow;

namespace {

Pose34 pose(const Mat3& R, const Vec3& c) {
  Pose34 T;
  T.leftCols<3>() = R;
  T.col(3) = c;
  return T;
}

// Straight drive along z with 1 m steps; the estimate yaws by eps per step.
Trajectory yawing_drive(std::size_t n, double eps) {
  Trajectory t;
  for (std::size_t k = 0; k < n; ++k) {
    const Mat3 R = Eigen::AngleAxisd(eps * static_cast<double>(k), Vec3::UnitY()).toRotationMatrix();
    t.poses.push_back(pose(R, Vec3(0, 0, static_cast<double>(k))));
  }
  return t;
}

}  // namespace

TEST(Triangulate, MidpointRecoversPointAndRejectsParallelRays) {
  const RelativePose p{Eigen::AngleAxisd(0.1, Vec3::UnitY()).toRotationMatrix(), Vec3::UnitX()};
  const Vec3 X(0.3, -0.2, 4.0);
  const Vec3 X2 = p.R * X + p.t;
  const Triangulation t =
      triangulate(NormalizedPoint(X.x() / X.z(), X.y() / X.z()), NormalizedPoint(X2.x() / X2.z(), X2.y() / X2.z()), p);
  EXPECT_LT((t.point - X).norm(), 1e-12);
  EXPECT_NEAR(t.depth1, 4.0, 1e-12);
  EXPECT_NEAR(t.depth2, X2.z(), 1e-12);
  EXPECT_NEAR(t.gap, 0.0, 1e-12);
  const RelativePose fwd{Mat3::Identity(), Vec3::UnitZ()};
  EXPECT_THROW(triangulate(NormalizedPoint(0, 0), NormalizedPoint(0, 0), fwd), Error);
}

TEST(Decompose, ComposeThenDecomposeIsIdentity) {
  std::mt19937_64 gen(77);
  for (int k = 0; k < 100; ++k) {
    const Mat3 R = epiflow::testing::random_rotation(gen, 0.3);
    const Vec3 t = epiflow::testing::random_unit(gen);
    const auto corr = epiflow::testing::project_points(gen, R, t, 30);
    const RelativePose p = decompose_essential(essential_from_pose(R, t), corr);
    EXPECT_LT(rotation_angle_between(p.R, R), 1e-8);
    EXPECT_LT(direction_angle_between(p.t, t), 1e-8);
  }
}

TEST(Decompose, NoMajorityIsAmbiguous) {
  std::mt19937_64 gen(2);
  const Mat3 R = epiflow::testing::random_rotation(gen, 0.2);
  const Vec3 t = epiflow::testing::random_unit(gen);
  auto corr = epiflow::testing::project_points(gen, R, t, 20);
  auto behind = epiflow::testing::project_points(gen, R, -t, 20);  // votes for -t
  corr.insert(corr.end(), behind.begin(), behind.end());
  try {
    decompose_essential(essential_from_pose(R, t), corr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CheiralityAmbiguous);
  }
}

TEST(RelativeMotion, InvertsCameraToWorld) {
  std::mt19937_64 gen(6);
  const Pose34 a = pose(epiflow::testing::random_rotation(gen, 1.0), Vec3(1, 2, 3));
  const Pose34 b = pose(epiflow::testing::random_rotation(gen, 1.0), Vec3(-1, 0, 5));
  const RigidMotion m = relative_motion(a, b);
  const Vec3 Xw(0.5, -0.3, 7.0);
  const Vec3 Xa = a.leftCols<3>().transpose() * (Xw - a.col(3));
  const Vec3 Xb = b.leftCols<3>().transpose() * (Xw - b.col(3));
  EXPECT_LT((m.R * Xa + m.t - Xb).norm(), 1e-12);
}

TEST(ComposeTrajectory, ReproducesGroundTruthFromExactRelativePoses) {
  const Trajectory gt = yawing_drive(50, 0.01);
  std::vector<RelativePose> rel;
  for (std::size_t k = 0; k + 1 < gt.size(); ++k) {
    const RigidMotion m = relative_motion(gt.poses[k], gt.poses[k + 1]);
    rel.push_back({m.R, m.t.normalized()});
  }
  const Trajectory est = compose_trajectory(rel, gt);
  for (std::size_t k = 0; k < gt.size(); ++k) EXPECT_LT((est.poses[k] - gt.poses[k]).norm(), 1e-10);
  EXPECT_THROW(compose_trajectory(rel, yawing_drive(10, 0.0)), Error);
}

TEST(ComposeTrajectory, ZeroLengthStepsAreReported) {
  Trajectory gt = yawing_drive(4, 0.0);
  gt.poses[2] = gt.poses[1];
  std::vector<std::size_t> skipped;
  compose_trajectory(std::vector<RelativePose>(3), gt, &skipped);
  EXPECT_EQ(skipped, std::vector<std::size_t>{1});
}

TEST(RelativeErrors, PerfectEstimateScoresZero) {
  const Trajectory gt = yawing_drive(900, 0.001);
  const OdometryErrors e = relative_errors(gt, gt);
  EXPECT_EQ(e.t_err, 0.0);
  EXPECT_EQ(e.r_err, 0.0);
  ASSERT_EQ(e.per_length.size(), 8u);
}

// A window from frame f ends at the first frame whose path distance exceeds
// L, i.e. L + 1 steps later, so the accumulated yaw is (L + 1) eps and the
// rotation error per metre is (L + 1) eps / L.
TEST(RelativeErrors, ClosedFormRotationDrift) {
  const double eps = 2e-4;
  const OdometryErrors e = relative_errors(yawing_drive(1000, eps), yawing_drive(1000, 0.0), {100, 400});
  const double deg = 180.0 / std::numbers::pi;
  EXPECT_NEAR(e.per_length[0].r_err, 101.0 * eps / 100.0 * deg * 100.0, 1e-9);
  EXPECT_NEAR(e.per_length[1].r_err, 401.0 * eps / 400.0 * deg * 100.0, 1e-9);
  EXPECT_EQ(e.per_length[0].windows, 1000u - 101u);
}

TEST(RelativeErrors, ShortTrajectoryListsUsableLengths) {
  try {
    relative_errors(yawing_drive(250, 0.0), yawing_drive(250, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientTrajectory);
    EXPECT_NE(std::string(e.what()).find("usable: 100 200"), std::string::npos);
  }
}

TEST(Aepe, ConstantOffsetAndMask) {
  FlowField a(5, 4), b(5, 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.set(i, Vec2(1.0, 2.0));
    b.set(i, Vec2(4.0, 6.0));
  }
  EXPECT_EQ(aepe(a, b), 5.0);
  EXPECT_EQ(aepe(a, a), 0.0);
  std::vector<std::uint8_t> none(a.size(), 0);
  EXPECT_THROW(aepe(a, b, none), Error);
  none[3] = 1;
  b.set(3, Vec2(1.0, 2.0));
  EXPECT_EQ(aepe(a, b, none), 0.0);
}

TEST(Aepe, MatchesDirectSumOnRandomFields) {
  std::mt19937_64 gen(10);
  std::normal_distribution<double> n(0.0, 3.0);
  FlowField a(33, 17), b(33, 17);
  for (auto& v : a.data()) v = n(gen);
  for (auto& v : b.data()) v = n(gen);
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.at(i) - b.at(i)).norm();
  EXPECT_NEAR(aepe(a, b), static_cast<double>(s / a.size()), 1e-12);
}

TEST(TrajectoryIo, RoundTripsBitExactly) {
  const Trajectory t = yawing_drive(5, 0.123456789);
  std::stringstream ss;
  write_trajectory(ss, t);
  std::istringstream in("# comment\n" + ss.str());
  const Trajectory back = read_trajectory(in);
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t k = 0; k < t.size(); ++k) EXPECT_EQ(back.poses[k], t.poses[k]);
  std::istringstream bad("1 2 3\n");
  EXPECT_THROW(read_trajectory(bad), Error);
}
