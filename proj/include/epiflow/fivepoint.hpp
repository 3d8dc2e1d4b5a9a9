#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "epiflow/geometry.hpp"

namespace epiflow {

/// Exactly five correspondences drawn for one minimal solve.
struct MinimalSample {
  std::array<NormalizedPoint, 5> first;
  std::array<NormalizedPoint, 5> second;
  std::array<std::size_t, 5> indices{};
};

/// All real essential matrices consistent with five calibrated correspondences
/// (at most ten). Nullspace of the 5x9 epipolar system, Gauss-Jordan reduction
/// of the ten cubic constraints, degree-10 hidden-variable resultant in z.
/// Returned matrices are in canonical form. Throws DegenerateSample when the
/// design matrix has rank < 5.
std::vector<EssentialMatrix> solve_five_point(const MinimalSample& sample);

}  // namespace epiflow
