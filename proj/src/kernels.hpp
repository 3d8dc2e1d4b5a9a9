#pragma once

// Per-item kernels shared by the OpenMP loops in losses.cpp and the serial
// reference loops, so the two differ only in scheduling.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "epiflow/losses.hpp"

namespace epiflow::kernels {

inline double charbonnier_term(double z, double eps2, double gamma) {
  return std::pow(z * z + eps2, gamma);
}

inline double photometric_term(const CensusField& c1, const CensusField& c2,
                               const FlowField& forward, int x, int y, const LossWeights& w) {
  const Vec2 v = forward.at(x, y);
  const double qx = x + v.x(), qy = y + v.y();
  const double eps2 = w.charbonnier_eps * w.charbonnier_eps;
  double acc = 0.0;
  for (std::size_t k = 0; k < c1.planes.size(); ++k) {
    const double d = c1.planes[k].at(x, y) - c2.planes[k].sample(qx, qy);
    acc += charbonnier_term(d, eps2, w.charbonnier_gamma);
  }
  return acc / static_cast<double>(c1.planes.size());
}

inline double consistency_term(const FlowField& forward, const FlowField& backward, int x, int y,
                               const LossWeights& w) {
  const Vec2 vf = forward.at(x, y);
  const Vec2 vb = backward.sample(x + vf.x(), y + vf.y());
  return charbonnier(vf + vb, w.charbonnier_eps, w.charbonnier_gamma);
}

inline double smoothness_term(const Image& I, const FlowField& flow, int x, int y, double alpha) {
  const std::size_t i = flow.index(x, y);
  if (!flow.valid(i)) return 0.0;
  double acc = 0.0;
  const Vec2 v = flow.at(i);
  auto edge = [&](int x2, int y2) {
    const std::size_t j = flow.index(x2, y2);
    if (!flow.valid(j)) return 0.0;
    double dI = 0.0;
    for (int c = 0; c < 3; ++c) dI += std::abs(I.at(x2, y2, c) - I.at(x, y, c));
    const Vec2 dv = flow.at(j) - v;
    return std::exp(-(alpha / 3.0) * dI) * (std::abs(dv.x()) + std::abs(dv.y()));
  };
  if (x + 1 < flow.width()) acc += edge(x + 1, y);
  if (y + 1 < flow.height()) acc += edge(x, y + 1);
  return acc;
}

/// 1 when pixel (x, y) passes the forward-backward test, 0 when occluded.
inline std::uint8_t non_occluded(const FlowField& forward, const FlowField& backward, int x, int y,
                                 double beta1, double beta2) {
  const int W = forward.width(), H = forward.height();
  const std::size_t i = forward.index(x, y);
  if (!forward.valid(i)) return 0;
  const Vec2 vf = forward.at(i);
  const double qx = x + vf.x(), qy = y + vf.y();
  if (!(qx >= 0.0 && qx <= W - 1.0 && qy >= 0.0 && qy <= H - 1.0)) return 0;
  if (backward.has_mask()) {
    const int x0 = static_cast<int>(qx), y0 = static_cast<int>(qy);
    const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
    if (!backward.valid(backward.index(x0, y0)) || !backward.valid(backward.index(x1, y0)) ||
        !backward.valid(backward.index(x0, y1)) || !backward.valid(backward.index(x1, y1))) {
      return 0;
    }
  }
  const Vec2 vb = backward.sample(qx, qy);
  const double lhs = (vf + vb).squaredNorm();
  const double rhs = beta1 * (vf.squaredNorm() + vb.squaredNorm()) + beta2;
  return lhs > rhs ? 0 : 1;
}

/// Column block (5 x 2) of d^2 l / dV dtheta for one correspondence.
inline Eigen::Matrix<double, 5, 2> mixed_block(const EssentialJet& jet, const Vec3& x,
                                               const Vec3& x2,
                                               const Eigen::Matrix<double, 3, 2>& P) {
  const Vec3 l = jet.E * x;
  const double z = x2.dot(l);
  const Eigen::RowVector2d dz_dv = l.transpose() * P;
  Eigen::Matrix<double, 5, 2> B;
  for (int k = 0; k < 5; ++k) {
    const Vec3 lk = jet.d[static_cast<std::size_t>(k)] * x;
    B.row(k) = x2.dot(lk) * dz_dv + z * (lk.transpose() * P);
  }
  return B;
}

}  // namespace epiflow::kernels
