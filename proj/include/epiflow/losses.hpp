#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "epiflow/flow.hpp"
#include "epiflow/geometry.hpp"

namespace epiflow {

enum class LossMode { Teacher, Student };

struct LossWeights {
  std::array<double, 5> scale = {1.0, 0.34, 0.31, 0.27, 0.08};
  double lambda_p = 1.0;
  double lambda_c = 0.1;
  double lambda_s = 0.1;
  double lambda_e = 0.0;
  double lambda_o = 0.0;
  double charbonnier_eps = 1e-3;
  double charbonnier_gamma = 0.45;
  double smoothness_alpha = 10.0;
  int census_window = 3;
  double census_tolerance = 0.04;
  double occlusion_beta1 = 0.01;
  double occlusion_beta2 = 0.5;  // px^2
  LossMode mode = LossMode::Teacher;

  /// Throws ConfigError on negative weights or a bad census window.
  void validate() const;
};

/// (1/n) sum (z_i^2 + eps^2)^gamma.
double charbonnier(std::span<const double> z, double eps, double gamma);
double charbonnier(const Vec2& z, double eps, double gamma);

ScalarGrid grayscale(const Image& img);

/// Ternary census signature: window^2 - 1 planes, one per neighbour offset
/// (row-major, centre skipped), each in {-1, 0, +1}.
struct CensusField {
  int width = 0;
  int height = 0;
  int window = 3;
  std::vector<ScalarGrid> planes;
};
CensusField census_transform(const Image& img, int window, double tolerance);

struct OcclusionMask {
  std::vector<std::uint8_t> non_occluded;  // 1 = M_i
  std::size_t count = 0;                   // Z
};

/// Forward-backward consistency test with bilinear sampling of the backward
/// field. Pixels whose forward target leaves the frame, or whose flow is
/// undefined, are occluded.
OcclusionMask occlusion_mask(const FlowField& forward, const FlowField& backward, double beta1,
                             double beta2);

double photometric_loss(const Image& I, const Image& I2, const FlowField& forward,
                        const OcclusionMask& mask, const LossWeights& w);
double photometric_loss(const CensusField& c1, const CensusField& c2, const FlowField& forward,
                        const OcclusionMask& mask, const LossWeights& w);
double fb_consistency_loss(const FlowField& forward, const FlowField& backward,
                           const OcclusionMask& mask, const LossWeights& w);
double smoothness_loss(const Image& I, const FlowField& flow, double alpha);
double occlusion_loss(const FlowField& student, const FlowField& teacher,
                      const std::vector<std::uint8_t>& O, const LossWeights& w);

/// Sum of squared distances from x'_i to the epipolar line E x_i, with the
/// partials Eq. 9 needs.
struct EpipolarLoss {
  double value = 0.0;
  std::vector<Vec3> d_second;  // dL/dx'_i
  Vec5 d_theta = Vec5::Zero();

  /// dL/dV through x' = K'^-1 (p + v), ordered like dtheta*/dV columns.
  Eigen::VectorXd flow_gradient(const CameraIntrinsics& K2) const;
};
/// Throws EpipoleSingularity when some x_i maps onto the epipole.
EpipolarLoss epipolar_loss(const NormalizedCorrespondenceSet& corr, const EssentialParams& params);

/// Loss terms of one pyramid level.
struct ScaleTerms {
  double photometric = 0.0;
  double consistency = 0.0;
  double smoothness = 0.0;
  double occlusion = 0.0;
};

struct LossBreakdown {
  double total = 0.0;
  double photometric = 0.0;  // sum_i lambda^i lambda_p L_p^i
  double consistency = 0.0;
  double smoothness = 0.0;
  double occlusion = 0.0;
  double epipolar = 0.0;  // lambda_e L_e
};

/// Multi-scale total; L_e enters once, at full resolution. Throws ConfigError
/// unless exactly five scales are given.
LossBreakdown total_loss(const std::vector<ScaleTerms>& scales, double epipolar,
                         const LossWeights& w, LossMode mode);

/// 2x2 box downsampling; flow values are halved, undefined pixels skipped.
Image downsample(const Image& img);
FlowField downsample(const FlowField& flow);
std::vector<std::uint8_t> downsample_mask(const std::vector<std::uint8_t>& mask, int width,
                                          int height);

/// Per-level terms over a five-level pyramid built from full-resolution inputs.
/// `teacher` and `O` are only read in student mode.
std::vector<ScaleTerms> pyramid_terms(const Image& I, const Image& I2, const FlowField& forward,
                                      const FlowField& backward, const FlowField* teacher,
                                      const std::vector<std::uint8_t>* O, const LossWeights& w);

/// Shipped presets: kitti_baseline, kitti_teacher, kitti_student, rgbd.
const std::map<std::string, LossWeights>& loss_presets();
LossWeights loss_preset(const std::string& name);

/// key=value text form (all fields), and parsing on top of a base preset.
std::string to_config_text(const LossWeights& w);
LossWeights parse_loss_config(const std::string& text, const LossWeights& base = {});

std::string to_string(LossMode mode);

}  // namespace epiflow
