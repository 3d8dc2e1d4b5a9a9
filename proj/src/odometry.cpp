#include "epiflow/odometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "epiflow/error.hpp"
#include "epiflow/parallel.hpp"

namespace epiflow {
namespace {

Eigen::Matrix4d homogeneous(const Pose34& T) {
  Eigen::Matrix4d M = Eigen::Matrix4d::Identity();
  M.topRows<3>() = T;
  return M;
}

// atan2 form keeps small angles accurate where acos of the trace loses half
// the digits.
double rotation_error(const Mat3& R) {
  const Vec3 s(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return std::atan2(0.5 * s.norm(), 0.5 * (R.trace() - 1.0));
}

}  // namespace

Triangulation triangulate(const NormalizedPoint& x, const NormalizedPoint& x2,
                          const RelativePose& pose) {
  const Vec3 d1 = x.homogeneous();
  const Vec3 d2 = pose.R.transpose() * x2.homogeneous();
  const Vec3 c2 = -pose.R.transpose() * pose.t;
  const double sin_angle = d1.cross(d2).norm() / (d1.norm() * d2.norm());
  if (sin_angle < 1e-12) {
    throw Error(ErrorCode::TriangulationDegenerate, "rays are parallel");
  }
  // Closest points a d1 and c2 + b d2 of the two rays.
  const double a11 = d1.dot(d1), a12 = -d1.dot(d2), a22 = d2.dot(d2);
  const double r1 = d1.dot(c2), r2 = -d2.dot(c2);
  const double det = a11 * a22 - a12 * a12;
  const double a = (r1 * a22 - a12 * r2) / det;
  const double b = (a11 * r2 - a12 * r1) / det;
  const Vec3 p1 = a * d1;
  const Vec3 p2 = c2 + b * d2;
  Triangulation tri;
  tri.point = 0.5 * (p1 + p2);
  tri.depth1 = tri.point.z();
  tri.depth2 = (pose.R * tri.point + pose.t).z();
  tri.gap = (p1 - p2).norm();
  return tri;
}

std::vector<CheiralityVote> cheirality_votes(const EssentialMatrix& E,
                                             const NormalizedCorrespondenceSet& corr) {
  std::vector<CheiralityVote> votes;
  for (const PoseCandidate& c : essential_pose_candidates(E)) {
    CheiralityVote v;
    v.pose = {c.R, c.t.normalized()};
    for (const Correspondence& p : corr) {
      try {
        const Triangulation tri = triangulate(p.first, p.second, v.pose);
        ++v.counted;
        if (tri.depth1 > 0.0 && tri.depth2 > 0.0) ++v.votes;
      } catch (const Error&) {
      }
    }
    votes.push_back(v);
  }
  return votes;
}

RelativePose decompose_essential(const EssentialMatrix& E,
                                 const NormalizedCorrespondenceSet& corr) {
  const std::vector<CheiralityVote> votes = cheirality_votes(E, corr);
  std::size_t best = 0;
  for (std::size_t k = 1; k < votes.size(); ++k) {
    if (votes[k].votes > votes[best].votes) best = k;
  }
  bool tie = false;
  for (std::size_t k = 0; k < votes.size(); ++k) {
    if (k != best && votes[k].votes == votes[best].votes) tie = true;
  }
  if (votes[best].votes == 0 || tie || 2 * votes[best].votes <= votes[best].counted) {
    std::ostringstream os;
    os << "no pose candidate has a positive-depth majority (votes:";
    for (const auto& v : votes) os << ' ' << v.votes << '/' << v.counted;
    os << ')';
    throw Error(ErrorCode::CheiralityAmbiguous, os.str());
  }
  return votes[best].pose;
}

RigidMotion relative_motion(const Pose34& from, const Pose34& to) {
  // Camera-to-world A, B: x_B = B^-1 A x_A.
  const Eigen::Matrix4d M = homogeneous(to).inverse() * homogeneous(from);
  return {M.topLeftCorner<3, 3>(), M.topRightCorner<3, 1>()};
}

Trajectory compose_trajectory(const std::vector<RelativePose>& rel, const Trajectory& gt,
                              std::vector<std::size_t>* skipped) {
  if (gt.size() != rel.size() + 1) {
    throw Error(ErrorCode::InsufficientTrajectory,
                "expected " + std::to_string(rel.size() + 1) + " ground-truth poses, got " +
                    std::to_string(gt.size()));
  }
  Trajectory out;
  out.poses.reserve(gt.size());
  out.poses.push_back(gt.poses.front());
  Eigen::Matrix4d T = homogeneous(gt.poses.front());
  for (std::size_t k = 0; k < rel.size(); ++k) {
    const double step = (gt.poses[k + 1].col(3) - gt.poses[k].col(3)).norm();
    if (step == 0.0 && skipped) skipped->push_back(k);
    Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
    inv.topLeftCorner<3, 3>() = rel[k].R.transpose();
    inv.topRightCorner<3, 1>() = -rel[k].R.transpose() * (step * rel[k].t.normalized());
    T = T * inv;
    out.poses.push_back(T.topRows<3>());
  }
  return out;
}

OdometryErrors relative_errors(const Trajectory& est, const Trajectory& gt,
                               const std::vector<double>& lengths) {
  if (est.size() != gt.size()) {
    throw Error(ErrorCode::InsufficientTrajectory, "estimated and ground-truth trajectories differ "
                                                   "in length");
  }
  const std::size_t n = gt.size();
  std::vector<double> dist(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    dist[i] = dist[i - 1] + (gt.poses[i].col(3) - gt.poses[i - 1].col(3)).norm();
  }

  OdometryErrors out;
  std::vector<double> all_t, all_r;
  std::vector<double> usable;
  for (double L : lengths) {
    std::vector<double> te, re;
    for (std::size_t first = 0; first < n; ++first) {
      // First frame whose path distance exceeds the window length.
      const auto it = std::upper_bound(dist.begin() + static_cast<std::ptrdiff_t>(first),
                                       dist.end(), dist[first] + L);
      if (it == dist.end()) break;
      const auto last = static_cast<std::size_t>(it - dist.begin());
      const Eigen::Matrix4d dgt =
          homogeneous(gt.poses[first]).inverse() * homogeneous(gt.poses[last]);
      const Eigen::Matrix4d dest =
          homogeneous(est.poses[first]).inverse() * homogeneous(est.poses[last]);
      // inverse(dgt) * dest written out, so identical motions give exact zeros.
      const Mat3 Rg = dgt.topLeftCorner<3, 3>();
      const Vec3 dt = dest.topRightCorner<3, 1>() - dgt.topRightCorner<3, 1>();
      te.push_back((Rg.transpose() * dt).norm() / L);
      re.push_back(rotation_error(Rg.transpose() * dest.topLeftCorner<3, 3>()) / L);
    }
    if (te.empty()) continue;
    usable.push_back(L);
    LengthError le;
    le.length = L;
    le.windows = te.size();
    le.t_err = 100.0 * parallel::pairwise_sum(te) / static_cast<double>(te.size());
    le.r_err = 100.0 * (180.0 / std::numbers::pi) * parallel::pairwise_sum(re) /
               static_cast<double>(re.size());
    out.per_length.push_back(le);
    all_t.insert(all_t.end(), te.begin(), te.end());
    all_r.insert(all_r.end(), re.begin(), re.end());
  }
  if (usable.size() != lengths.size()) {
    std::ostringstream os;
    os << "ground-truth path (" << dist.back() << " m) is too short for some lengths; usable:";
    for (double L : usable) os << ' ' << L;
    if (usable.empty()) os << " none";
    throw Error(ErrorCode::InsufficientTrajectory, os.str());
  }
  out.t_err = 100.0 * parallel::pairwise_sum(all_t) / static_cast<double>(all_t.size());
  out.r_err = 100.0 * (180.0 / std::numbers::pi) * parallel::pairwise_sum(all_r) /
              static_cast<double>(all_r.size());
  return out;
}

double aepe(const FlowField& flow, const FlowField& gt, const std::vector<std::uint8_t>& valid) {
  if (flow.width() != gt.width() || flow.height() != gt.height()) {
    throw Error(ErrorCode::ConfigError, "flow fields differ in size");
  }
  if (!valid.empty() && valid.size() != flow.size()) {
    throw Error(ErrorCode::ConfigError, "mask size does not match the flow field");
  }
  std::vector<double> err;
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (!flow.valid(i) || !gt.valid(i) || (!valid.empty() && !valid[i])) continue;
    err.push_back((flow.at(i) - gt.at(i)).norm());
  }
  if (err.empty()) throw Error(ErrorCode::EmptyMask, "no valid pixel for AEPE");
  return parallel::pairwise_sum(err) / static_cast<double>(err.size());
}

Trajectory read_trajectory(std::istream& in) {
  Trajectory traj;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (v.empty() && ls.eof()) continue;
    if (v.size() != 12 || !ls.eof()) {
      throw Error(ErrorCode::IoError,
                  "trajectory line " + std::to_string(lineno) + ": expected 12 numbers");
    }
    Pose34 T;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) T(r, c) = v[static_cast<std::size_t>(4 * r + c)];
    }
    traj.poses.push_back(T);
  }
  return traj;
}

void write_trajectory(std::ostream& out, const Trajectory& traj) {
  char buf[32];
  for (const Pose34& T : traj.poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", T(r, c));
        out << buf << ((r == 2 && c == 3) ? '\n' : ' ');
      }
    }
  }
}

}  // namespace epiflow
