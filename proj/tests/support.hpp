#pragma once

// Shared fixtures. Geometry here is built from first principles (skew matrix,
// explicit projection) rather than through the library under test.

#include <cmath>
#include <random>
#include <vector>

#include "epiflow/geometry.hpp"
#include "epiflow/synth.hpp"

namespace epiflow::testing {

inline Mat3 cross_matrix(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

inline Mat3 random_rotation(std::mt19937_64& gen, double max_angle) {
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, max_angle);
  Vec3 axis(n(gen), n(gen), n(gen));
  return Eigen::AngleAxisd(u(gen), axis.normalized()).toRotationMatrix();
}

inline Vec3 random_unit(std::mt19937_64& gen) {
  std::normal_distribution<double> n;
  return Vec3(n(gen), n(gen), n(gen)).normalized();
}

/// E = [t]x R, canonical.
inline EssentialMatrix truth_essential(const Mat3& R, const Vec3& t) {
  return EssentialMatrix(cross_matrix(t) * R).canonical();
}

/// Random points in front of both cameras, projected exactly.
inline NormalizedCorrespondenceSet project_points(std::mt19937_64& gen, const Mat3& R,
                                                  const Vec3& t, std::size_t n) {
  std::uniform_real_distribution<double> xy(-1.0, 1.0), z(2.0, 10.0);
  NormalizedCorrespondenceSet out;
  while (out.size() < n) {
    const Vec3 X(xy(gen) * 2.0, xy(gen) * 2.0, z(gen));
    const Vec3 X2 = R * X + t;
    if (X2.z() < 0.5) continue;
    Correspondence c;
    c.first = NormalizedPoint(X.x() / X.z(), X.y() / X.z());
    c.second = NormalizedPoint(X2.x() / X2.z(), X2.y() / X2.z());
    c.source = out.size();
    out.push_back(c);
  }
  return out;
}

/// The calibrated scene used by the robust-pipeline checks.
inline SceneConfig noisy_scene_config(std::uint64_t seed) {
  SceneConfig cfg;
  cfg.point_count = 2000;
  cfg.outlier_fraction = 0.3;
  cfg.pixel_noise = 0.5;
  cfg.rng_seed = seed;
  return cfg;
}

}  // namespace epiflow::testing
