#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <vector>

#include "epiflow/flow.hpp"
#include "epiflow/geometry.hpp"

namespace epiflow {

/// Relative motion x2 = R x1 + s t of the second camera, scale s unknown.
struct RelativePose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::UnitZ();  // unit
};

using Pose34 = Eigen::Matrix<double, 3, 4>;

/// Camera-to-world rigid poses, one per frame.
struct Trajectory {
  std::vector<Pose34> poses;

  std::size_t size() const { return poses.size(); }
};

struct Triangulation {
  Vec3 point;  // first camera frame
  double depth1 = 0.0;
  double depth2 = 0.0;
  double gap = 0.0;  // closest distance between the two rays
};

/// Midpoint triangulation. Throws TriangulationDegenerate for parallel rays.
Triangulation triangulate(const NormalizedPoint& x, const NormalizedPoint& x2,
                          const RelativePose& pose);

struct CheiralityVote {
  RelativePose pose;
  std::size_t votes = 0;      // correspondences in front of both cameras
  std::size_t counted = 0;    // correspondences that triangulated at all
};

/// Four-fold SVD decomposition disambiguated by cheirality voting. The winner
/// must hold a strict majority of the triangulable votes, otherwise
/// CheiralityAmbiguous.
RelativePose decompose_essential(const EssentialMatrix& E, const NormalizedCorrespondenceSet& corr);
std::vector<CheiralityVote> cheirality_votes(const EssentialMatrix& E,
                                             const NormalizedCorrespondenceSet& corr);

/// Camera-to-world pose T_{k+1} = T_k * inverse([R | s t]) with s the ground
/// truth step length for that frame pair. Steps whose ground-truth length is
/// zero are skipped (pose held) and reported in `skipped`.
Trajectory compose_trajectory(const std::vector<RelativePose>& rel, const Trajectory& gt,
                              std::vector<std::size_t>* skipped = nullptr);

/// Relative motion that maps points of camera i to camera j for a
/// camera-to-world trajectory, as an x2 = R x1 + t pose with unnormalized t.
struct RigidMotion {
  Mat3 R;
  Vec3 t;
};
RigidMotion relative_motion(const Pose34& from, const Pose34& to);

struct LengthError {
  double length = 0.0;
  std::size_t windows = 0;
  double t_err = 0.0;  // percent
  double r_err = 0.0;  // degrees per 100 m
};

struct OdometryErrors {
  double t_err = 0.0;  // percent, mean over all windows
  double r_err = 0.0;  // degrees per 100 m
  std::vector<LengthError> per_length;
};

/// Subsequence errors over the given path lengths (metres), starting a
/// window at every frame. Throws InsufficientTrajectory when a requested
/// length cannot be evaluated.
OdometryErrors relative_errors(const Trajectory& est, const Trajectory& gt,
                               const std::vector<double>& lengths = {100, 200, 300, 400, 500,
                                                                     600, 700, 800});

/// Mean endpoint error over pixels valid in both fields and in `valid`
/// (empty = all). Throws EmptyMask when nothing is counted.
double aepe(const FlowField& flow, const FlowField& gt, const std::vector<std::uint8_t>& valid = {});

Trajectory read_trajectory(std::istream& in);
void write_trajectory(std::ostream& out, const Trajectory& traj);

}  // namespace epiflow
