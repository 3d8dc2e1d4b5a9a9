#include "epiflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "epiflow/error.hpp"
#include "epiflow/rng.hpp"

namespace epiflow {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Vec3 random_unit(CounterRng& rng) {
  for (;;) {
    const Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

struct Pose {
  Mat3 R;
  Vec3 t;  // unit
};

Pose sample_pose(const SceneConfig& cfg) {
  CounterRng rng(cfg.rng_seed, Stream::Pose);
  const Vec3 axis = random_unit(rng);
  const double angle = rng.uniform(cfg.rotation_min, cfg.rotation_max);
  Pose p;
  p.R = rotation_exp(angle * axis);
  if (cfg.translation_mode == TranslationMode::Uniform) {
    p.t = random_unit(rng);
  } else {
    const double cos_theta = rng.uniform(std::cos(cfg.forward_cone), 1.0);
    const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.t = Vec3(sin_theta * std::cos(phi), sin_theta * std::sin(phi), cos_theta);
  }
  return p;
}

bool in_frame(const PixelPoint& p, int width, int height) {
  return p.u >= 0.0 && p.u <= width - 1.0 && p.v >= 0.0 && p.v <= height - 1.0;
}

// Axis-aligned plane n.X = offset in the first camera frame, optionally bounded.
struct Plane {
  int axis;
  double offset;
  Vec3 lo, hi;
  int texture;
};

std::vector<Plane> scene_planes(const SceneConfig& cfg) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<Plane> planes = {
      {1, 1.5, Vec3(-inf, -inf, 0.0), Vec3(inf, inf, inf), 0},             // ground
      {2, cfg.depth_max, Vec3(-inf, -inf, -inf), Vec3(inf, inf, inf), 1},  // back wall
      {0, -8.0, Vec3(-inf, -inf, 0.0), Vec3(inf, inf, inf), 2},            // left wall
      {0, 8.0, Vec3(-inf, -inf, 0.0), Vec3(inf, inf, inf), 2},             // right wall
  };
  if (cfg.occluder) {
    const double z = cfg.depth_min + 2.0;
    planes.push_back({2, z, Vec3(-1.2, -1.0, -inf), Vec3(0.8, 1.5, inf), 3});
  }
  return planes;
}

// First hit along o + s d (s > 0); returns s or NaN.
double ray_cast(const std::vector<Plane>& planes, const Vec3& o, const Vec3& d, Vec3* hit,
                int* texture) {
  double best = kNaN;
  for (const Plane& pl : planes) {
    const double dn = d[pl.axis];
    if (std::abs(dn) < 1e-15) continue;
    const double s = (pl.offset - o[pl.axis]) / dn;
    if (!(s > 1e-9)) continue;
    const Vec3 P = o + s * d;
    bool inside = true;
    for (int k = 0; k < 3; ++k) {
      if (k != pl.axis && (P[k] < pl.lo[k] || P[k] > pl.hi[k])) inside = false;
    }
    if (!inside || !(std::isnan(best) || s < best)) continue;
    best = s;
    if (hit) *hit = P;
    if (texture) *texture = pl.texture;
  }
  return best;
}

struct Texture {
  std::array<std::array<double, 6>, 4> phase{};
};

Texture sample_texture(const SceneConfig& cfg) {
  CounterRng rng(cfg.rng_seed, Stream::Scene);
  Texture tex;
  for (auto& plane : tex.phase) {
    for (double& p : plane) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  return tex;
}

// Smooth multi-frequency pattern over the two in-plane coordinates.
std::array<double, 3> shade(const Texture& tex, int texture, const Vec3& P) {
  double a, b;
  switch (texture) {
    case 0: a = P.x(); b = P.z(); break;
    case 1: a = P.x(); b = P.y(); break;
    case 2: a = P.y(); b = P.z(); break;
    default: a = 3.0 * P.x(); b = 3.0 * P.y(); break;
  }
  const auto& ph = tex.phase[static_cast<std::size_t>(texture)];
  const double base = 0.5 + 0.18 * std::sin(2.1 * a + ph[0]) * std::cos(1.7 * b + ph[1]) +
                      0.12 * std::sin(5.3 * a + 4.1 * b + ph[2]) +
                      0.08 * std::cos(11.0 * a - 9.0 * b + ph[3]);
  std::array<double, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    const double v = base + 0.05 * std::sin(3.0 * a + (c + 1) * ph[4] + c * ph[5]);
    rgb[static_cast<std::size_t>(c)] = std::clamp(v, 0.0, 1.0);
  }
  return rgb;
}

// Exact two-view occlusion by z-buffering reprojections on a half-pixel grid.
std::vector<std::uint8_t> zbuffer_visibility(const std::vector<PixelPoint>& second,
                                             const std::vector<double>& depth2, int width,
                                             int height) {
  const int gw = 2 * width, gh = 2 * height;
  std::vector<double> zbuf(static_cast<std::size_t>(gw) * gh,
                           std::numeric_limits<double>::infinity());
  std::vector<std::size_t> cell(second.size());
  for (std::size_t i = 0; i < second.size(); ++i) {
    const int cx = std::clamp(static_cast<int>(std::floor(2.0 * (second[i].u + 0.5))), 0, gw - 1);
    const int cy = std::clamp(static_cast<int>(std::floor(2.0 * (second[i].v + 0.5))), 0, gh - 1);
    cell[i] = static_cast<std::size_t>(cy) * gw + cx;
    zbuf[cell[i]] = std::min(zbuf[cell[i]], depth2[i]);
  }
  std::vector<std::uint8_t> visible(second.size());
  for (std::size_t i = 0; i < second.size(); ++i) {
    visible[i] = depth2[i] <= zbuf[cell[i]] ? 1 : 0;
  }
  return visible;
}

}  // namespace

void SceneConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
  if (width < 8 || height < 8) fail("image size must be at least 8x8");
  try {
    K.validate();
    K2.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  if (!(rotation_min >= 0.0 && rotation_max >= rotation_min && rotation_max <= std::numbers::pi)) {
    fail("rotation range must satisfy 0 <= rotation_min <= rotation_max <= pi");
  }
  if (!(forward_cone >= 0.0 && forward_cone <= std::numbers::pi)) fail("forward_cone out of [0, pi]");
  if (!(baseline >= 0.0) || !std::isfinite(baseline)) fail("baseline must be finite and >= 0");
  if (!(depth_min > 0.0 && depth_max > depth_min)) fail("depth range must satisfy 0 < min < max");
  if (!(pixel_noise >= 0.0)) fail("pixel_noise must be >= 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) fail("outlier_fraction must be in [0, 1)");
  if (mode == SceneMode::Sparse && point_count < 1) fail("point_count must be >= 1");
}

FlowField flow_from_pose_depth(const DepthMap& depth, const Mat3& R, const Vec3& t,
                               const CameraIntrinsics& K, const CameraIntrinsics& K2) {
  const Mat3 Ki = K.inverse();
  const Mat3 K2m = K2.matrix();
  FlowField flow(depth.width, depth.height);
  flow.clear_mask_to_invalid();
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const double d = depth.at(x, y);
      if (!(d > 0.0)) continue;
      const Vec3 X = d * (Ki * Vec3(x, y, 1.0));
      const Vec3 X2 = R * X + t;
      if (!(X2.z() > 0.0)) continue;
      const Vec3 p2 = K2m * (X2 / X2.z());
      const std::size_t i = flow.index(x, y);
      flow.set(i, Vec2(p2.x() - x, p2.y() - y));
      flow.mask()[i] = 1;
    }
  }
  return flow;
}

Eigen::Matrix<double, 3, 4> SyntheticScene::second_camera_to_world() const {
  Eigen::Matrix<double, 3, 4> T;
  T.leftCols<3>() = R.transpose();
  T.col(3) = -R.transpose() * (scale * t);
  return T;
}

NormalizedCorrespondenceSet SyntheticScene::correspondences() const {
  return correspondences_from_flow(flow, config.K, config.K2);
}

NormalizedCorrespondenceSet SyntheticScene::clean_correspondences() const {
  return correspondences_from_flow(flow_clean, config.K, config.K2);
}

SyntheticScene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  if (cfg.baseline == 0.0) {
    throw Error(ErrorCode::DegenerateScene, "zero baseline: the essential matrix is undefined");
  }
  SyntheticScene s;
  s.config = cfg;
  const Pose pose = sample_pose(cfg);
  s.R = pose.R;
  s.t = pose.t;
  s.scale = cfg.baseline;
  const Vec3 T = s.scale * s.t;
  const int W = cfg.width, H = cfg.height;
  const Mat3 Ki = cfg.K.inverse();
  const Mat3 K2m = cfg.K2.matrix();

  s.depth = DepthMap{W, H, std::vector<double>(static_cast<std::size_t>(W) * H, kNaN)};
  const std::vector<Plane> planes = scene_planes(cfg);

  if (cfg.mode == SceneMode::Sparse) {
    CounterRng rng(cfg.rng_seed, Stream::Points);
    std::vector<std::uint8_t> taken(static_cast<std::size_t>(W) * H, 0);
    const std::size_t max_attempts = 50 * cfg.point_count + 1000;
    std::size_t accepted = 0;
    for (std::size_t a = 0; a < max_attempts && accepted < cfg.point_count; ++a) {
      const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(W)));
      const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(H)));
      const double d = rng.uniform(cfg.depth_min, cfg.depth_max);
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      if (taken[i]) continue;
      const Vec3 X2 = s.R * (d * (Ki * Vec3(x, y, 1.0))) + T;
      if (!(X2.z() > 1e-9)) continue;
      const Vec3 p2 = K2m * (X2 / X2.z());
      if (!in_frame({p2.x(), p2.y()}, W, H)) continue;
      taken[i] = 1;
      s.depth.values[i] = d;
      ++accepted;
    }
  } else {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        s.depth.values[static_cast<std::size_t>(y) * W + x] =
            ray_cast(planes, Vec3::Zero(), Ki * Vec3(x, y, 1.0), nullptr, nullptr);
      }
    }
  }

  s.flow_clean = flow_from_pose_depth(s.depth, s.R, T, cfg.K, cfg.K2);
  std::vector<double> depth2;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t i = s.flow_clean.index(x, y);
      if (!s.flow_clean.valid(i)) continue;
      const Vec2 v = s.flow_clean.at(i);
      const Vec3 X = s.depth.values[i] * (Ki * Vec3(x, y, 1.0));
      s.pixel_index.push_back(i);
      s.points.push_back(X);
      s.first.push_back({static_cast<double>(x), static_cast<double>(y)});
      s.second_clean.push_back({x + v.x(), y + v.y()});
      depth2.push_back((s.R * X + T).z());
    }
  }
  const std::size_t n = s.pixel_index.size();
  if (n < 5) {
    throw Error(ErrorCode::DegenerateScene,
                "only " + std::to_string(n) + " points are visible in both views");
  }

  if (cfg.mode == SceneMode::Sparse) {
    s.visible = zbuffer_visibility(s.second_clean, depth2, W, H);
  } else {
    // Analytic depth test against the first surface seen by the second camera.
    const Mat3 Rt = s.R.transpose();
    const Vec3 o2 = -Rt * T;
    const Mat3 K2i = cfg.K2.inverse();
    s.visible.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const PixelPoint& p = s.second_clean[k];
      if (!in_frame(p, W, H)) {
        s.visible[k] = 0;
        continue;
      }
      const double lambda = ray_cast(planes, o2, Rt * (K2i * Vec3(p.u, p.v, 1.0)), nullptr, nullptr);
      s.visible[k] = !(lambda < depth2[k] * (1.0 - 1e-6)) ? 1 : 0;
    }
  }

  // Noise and outliers come from their own streams so toggling one never
  // moves the other draws.
  s.second = s.second_clean;
  s.inlier.assign(n, 1);
  {
    CounterRng rng(cfg.rng_seed, Stream::Noise);
    for (std::size_t k = 0; k < n; ++k) {
      const double du = rng.normal(), dv = rng.normal();
      s.second[k].u += cfg.pixel_noise * du;
      s.second[k].v += cfg.pixel_noise * dv;
    }
  }
  {
    CounterRng rng(cfg.rng_seed, Stream::Outliers);
    const auto k_out = static_cast<std::size_t>(std::llround(cfg.outlier_fraction * n));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k_out; ++i) {
      std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.below(n - i))]);
    }
    idx.resize(k_out);
    std::sort(idx.begin(), idx.end());
    for (std::size_t k : idx) {
      s.inlier[k] = 0;
      s.second[k] = {rng.uniform(0.0, W - 1.0), rng.uniform(0.0, H - 1.0)};
    }
  }

  s.flow = FlowField(W, H);
  s.flow.clear_mask_to_invalid();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = s.pixel_index[k];
    s.flow.set(i, Vec2(s.second[k].u - s.first[k].u, s.second[k].v - s.first[k].v));
    s.flow.mask()[i] = 1;
  }

  if (cfg.mode == SceneMode::Dense) {
    const Texture tex = sample_texture(cfg);
    s.image1 = Image(W, H);
    s.image2 = Image(W, H);
    s.flow_backward = FlowField(W, H);
    s.flow_backward.clear_mask_to_invalid();
    const Mat3 Rt = s.R.transpose();
    const Vec3 o2 = -Rt * T;
    const Mat3 K2i = cfg.K2.inverse();
    const Mat3 Km = cfg.K.matrix();
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        Vec3 P;
        int texture = 0;
        if (!std::isnan(ray_cast(planes, Vec3::Zero(), Ki * Vec3(x, y, 1.0), &P, &texture))) {
          const auto rgb = shade(tex, texture, P);
          for (int c = 0; c < 3; ++c) s.image1.at(x, y, c) = rgb[static_cast<std::size_t>(c)];
        }
        if (!std::isnan(ray_cast(planes, o2, Rt * (K2i * Vec3(x, y, 1.0)), &P, &texture))) {
          const auto rgb = shade(tex, texture, P);
          for (int c = 0; c < 3; ++c) s.image2.at(x, y, c) = rgb[static_cast<std::size_t>(c)];
          if (P.z() > 0.0) {
            const Vec3 p1 = Km * (P / P.z());
            const std::size_t i = s.flow_backward.index(x, y);
            s.flow_backward.set(i, Vec2(p1.x() - x, p1.y() - y));
            s.flow_backward.mask()[i] = 1;
          }
        }
      }
    }
  }
  return s;
}

std::string to_string(SceneMode mode) { return mode == SceneMode::Sparse ? "sparse" : "dense"; }

std::string to_string(TranslationMode mode) {
  return mode == TranslationMode::Forward ? "forward" : "uniform";
}

}  // namespace epiflow
