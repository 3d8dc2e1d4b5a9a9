#pragma once

#include <cstddef>
#include <span>

namespace epiflow::parallel {

int max_threads();
/// Sets the OpenMP worker count; values < 1 are ignored.
void set_threads(int n);

/// Sum with a fixed pairwise tree (leaf blocks of 32). The tree depends only
/// on the input length, so the result is identical for any worker count.
double pairwise_sum(std::span<const double> values);

}  // namespace epiflow::parallel
