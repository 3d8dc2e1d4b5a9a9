#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "epiflow/geometry.hpp"

namespace epiflow {

/// Dense per-pixel displacement field, row-major, with an optional validity
/// mask (empty mask = every pixel valid).
class FlowField {
 public:
  FlowField() = default;
  FlowField(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return static_cast<std::size_t>(width_) * height_; }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  Vec2 at(std::size_t i) const { return {data_[2 * i], data_[2 * i + 1]}; }
  Vec2 at(int x, int y) const { return at(index(x, y)); }
  void set(std::size_t i, const Vec2& v) {
    data_[2 * i] = v.x();
    data_[2 * i + 1] = v.y();
  }
  void set(int x, int y, const Vec2& v) { set(index(x, y), v); }

  /// Interleaved (du, dv) storage, 2 * width * height entries.
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool has_mask() const { return !valid_.empty(); }
  bool valid(std::size_t i) const { return valid_.empty() || valid_[i] != 0; }
  std::vector<std::uint8_t>& mask() { return valid_; }
  const std::vector<std::uint8_t>& mask() const { return valid_; }
  /// Allocates an all-invalid mask.
  void clear_mask_to_invalid() { valid_.assign(size(), 0); }

  /// Throws ConfigError on non-finite entries at valid pixels.
  void validate() const;

  /// Bilinear sample at a continuous position; positions are clamped to the grid.
  Vec2 sample(double x, double y) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
  std::vector<std::uint8_t> valid_;
};

/// Three-channel image with intensities in [0, 1], row-major interleaved.
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return static_cast<std::size_t>(width_) * height_; }

  double& at(int x, int y, int c) { return data_[3 * (static_cast<std::size_t>(y) * width_ + x) + c]; }
  double at(int x, int y, int c) const {
    return data_[3 * (static_cast<std::size_t>(y) * width_ + x) + c];
  }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  /// Clamped-border bilinear sample of one channel.
  double sample(double x, double y, int c) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Single-channel scalar grid (grayscale, depth, census planes).
struct ScalarGrid {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double clamped(int x, int y) const;
  double sample(double x, double y) const;
};

/// Correspondences p_i <-> p_i + v_i for every valid pixel, in row-major order,
/// mapped through K^-1 and K'^-1.
NormalizedCorrespondenceSet correspondences_from_flow(const FlowField& flow,
                                                      const CameraIntrinsics& K,
                                                      const CameraIntrinsics& K2);

}  // namespace epiflow
