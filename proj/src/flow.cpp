#include "epiflow/flow.hpp"

#include <algorithm>
#include <cmath>

#include "epiflow/error.hpp"

namespace epiflow {
namespace {

struct BilinearTaps {
  int x0, x1, y0, y1;
  double fx, fy;
};

BilinearTaps taps(double x, double y, int width, int height) {
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  BilinearTaps t;
  t.x0 = static_cast<int>(std::floor(x));
  t.y0 = static_cast<int>(std::floor(y));
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.fx = x - t.x0;
  t.fy = y - t.y0;
  return t;
}

}  // namespace

FlowField::FlowField(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::ConfigError, "flow field must be non-empty");
  data_.assign(2 * size(), 0.0);
}

void FlowField::validate() const {
  if (data_.size() != 2 * size()) throw Error(ErrorCode::ConfigError, "flow field size mismatch");
  if (!valid_.empty() && valid_.size() != size()) {
    throw Error(ErrorCode::ConfigError, "flow mask size mismatch");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (valid(i) && !(std::isfinite(data_[2 * i]) && std::isfinite(data_[2 * i + 1]))) {
      throw Error(ErrorCode::ConfigError, "non-finite flow at pixel " + std::to_string(i));
    }
  }
}

Vec2 FlowField::sample(double x, double y) const {
  const BilinearTaps t = taps(x, y, width_, height_);
  const Vec2 a = at(t.x0, t.y0), b = at(t.x1, t.y0), c = at(t.x0, t.y1), d = at(t.x1, t.y1);
  return (1 - t.fy) * ((1 - t.fx) * a + t.fx * b) + t.fy * ((1 - t.fx) * c + t.fx * d);
}

Image::Image(int width, int height, double fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::ConfigError, "image must be non-empty");
  data_.assign(3 * size(), fill);
}

double Image::sample(double x, double y, int c) const {
  const BilinearTaps t = taps(x, y, width_, height_);
  return (1 - t.fy) * ((1 - t.fx) * at(t.x0, t.y0, c) + t.fx * at(t.x1, t.y0, c)) +
         t.fy * ((1 - t.fx) * at(t.x0, t.y1, c) + t.fx * at(t.x1, t.y1, c));
}

double ScalarGrid::clamped(int x, int y) const {
  return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
}

double ScalarGrid::sample(double x, double y) const {
  const BilinearTaps t = taps(x, y, width, height);
  return (1 - t.fy) * ((1 - t.fx) * at(t.x0, t.y0) + t.fx * at(t.x1, t.y0)) +
         t.fy * ((1 - t.fx) * at(t.x0, t.y1) + t.fx * at(t.x1, t.y1));
}

NormalizedCorrespondenceSet correspondences_from_flow(const FlowField& flow,
                                                      const CameraIntrinsics& K,
                                                      const CameraIntrinsics& K2) {
  K.validate();
  K2.validate();
  const Mat3 Ki = K.inverse();
  const Mat3 K2i = K2.inverse();
  NormalizedCorrespondenceSet out;
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      const std::size_t i = flow.index(x, y);
      if (!flow.valid(i)) continue;
      const Vec2 v = flow.at(i);
      const Vec3 a = Ki * Vec3(x, y, 1.0);
      const Vec3 b = K2i * Vec3(x + v.x(), y + v.y(), 1.0);
      out.push_back({NormalizedPoint(a.x() / a.z(), a.y() / a.z()),
                     NormalizedPoint(b.x() / b.z(), b.y() / b.z()), i});
    }
  }
  return out;
}

}  // namespace epiflow
