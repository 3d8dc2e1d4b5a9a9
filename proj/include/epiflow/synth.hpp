#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epiflow/flow.hpp"
#include "epiflow/geometry.hpp"

namespace epiflow {

enum class SceneMode {
  Sparse,  // random pixels with random depths
  Dense,   // every pixel, depth ray-cast from analytic planes, rendered images
};

enum class TranslationMode {
  Forward,  // uniform within a cone around the optical axis
  Uniform,  // uniform on the sphere
};

struct SceneConfig {
  int width = 640;
  int height = 480;
  CameraIntrinsics K{1000.0, 1000.0, 319.5, 239.5, 0.0};
  CameraIntrinsics K2{1000.0, 1000.0, 319.5, 239.5, 0.0};
  double rotation_min = 0.02;  // rad
  double rotation_max = 0.10;  // rad
  TranslationMode translation_mode = TranslationMode::Forward;
  double forward_cone = 0.6;  // rad, half-angle
  double baseline = 1.0;      // scene units
  double depth_min = 1.5;
  double depth_max = 20.0;
  std::size_t point_count = 2000;  // sparse mode
  double pixel_noise = 0.0;        // sigma, px
  double outlier_fraction = 0.0;
  SceneMode mode = SceneMode::Sparse;
  bool occluder = false;  // dense mode: add a near rectangle that occludes the background
  std::uint64_t rng_seed = 1;

  /// Throws ConfigError on a violated invariant.
  void validate() const;
};

/// Per-pixel depth in the first view; non-positive or NaN entries are undefined.
using DepthMap = ScalarGrid;

struct SyntheticScene {
  SceneConfig config;
  Mat3 R = Mat3::Identity();  // x2 = R x1 + scale * t
  Vec3 t = Vec3::UnitZ();     // unit
  double scale = 0.0;

  // Sparse mode: one entry per sampled point, ordered by pixel index.
  // Dense mode: one entry per pixel with a valid depth.
  std::vector<std::size_t> pixel_index;
  std::vector<Vec3> points;              // first camera frame
  std::vector<std::uint8_t> inlier;      // 0 = planted outlier
  std::vector<std::uint8_t> visible;     // 0 = occluded or out of frame in view 2
  std::vector<PixelPoint> first;         // integer pixel centres
  std::vector<PixelPoint> second_clean;  // exact reprojection
  std::vector<PixelPoint> second;        // noisy, outliers replaced

  DepthMap depth;           // view-1 depth (NaN where undefined)
  FlowField flow_clean;     // from pose + depth
  FlowField flow;           // noisy, with outliers; mask marks defined pixels
  FlowField flow_backward;  // dense mode only
  Image image1, image2;     // dense mode only

  EssentialMatrix essential() const { return essential_from_pose(R, t); }
  /// Pose of the second camera as camera-to-world with the first camera at the origin.
  Eigen::Matrix<double, 3, 4> second_camera_to_world() const;
  NormalizedCorrespondenceSet correspondences() const;
  NormalizedCorrespondenceSet clean_correspondences() const;
};

/// Throws DegenerateScene for a zero baseline or fewer than 5 usable points.
SyntheticScene generate_scene(const SceneConfig& cfg);

/// Warp every pixel with a defined depth through back-projection, the rigid
/// motion x2 = R x1 + t and reprojection. Pixels without depth, or landing
/// behind the second camera, are marked invalid.
FlowField flow_from_pose_depth(const DepthMap& depth, const Mat3& R, const Vec3& t,
                               const CameraIntrinsics& K, const CameraIntrinsics& K2);

std::string to_string(SceneMode mode);
std::string to_string(TranslationMode mode);

}  // namespace epiflow
