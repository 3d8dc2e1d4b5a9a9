#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "epiflow/error.hpp"
#include "epiflow/fivepoint.hpp"
#include "epiflow/polynomial.hpp"
#include "support.hpp"

using namespace epiflow;

TEST(Polynomial, RootsOfKnownProduct) {
  const std::vector<double> roots = {-3.5, -1.0, 0.25, 2.0, 7.0};
  const auto found = real_roots(Polynomial::from_roots(roots, -2.0));
  ASSERT_EQ(found.size(), roots.size());
  for (std::size_t i = 0; i < roots.size(); ++i) EXPECT_NEAR(found[i], roots[i], 1e-12);
}

TEST(Polynomial, ComplexPairsAreDropped) {
  // (x^2 + 1)(x - 2)
  const auto found = real_roots(Polynomial{-2.0, 1.0, -2.0, 1.0});
  ASSERT_EQ(found.size(), 1u);
  EXPECT_NEAR(found[0], 2.0, 1e-14);
}

TEST(Polynomial, TrimsLeadingZerosAndRejectsZero) {
  const Polynomial p{1.0, -1.0, 0.0, 0.0};
  EXPECT_EQ(p.degree(), 1);
  EXPECT_THROW(real_roots(Polynomial{0.0, 0.0}), Error);
  EXPECT_TRUE(real_roots(Polynomial{3.0}).empty());
}

TEST(Polynomial, ArithmeticAndDerivative) {
  const Polynomial a{1.0, 2.0}, b{-1.0, 0.0, 3.0};
  const Polynomial prod = a * b;
  for (double x : {-2.0, 0.5, 3.0}) {
    EXPECT_DOUBLE_EQ(prod(x), a(x) * b(x));
    EXPECT_DOUBLE_EQ((a + b)(x), a(x) + b(x));
    EXPECT_DOUBLE_EQ((a - b)(x), a(x) - b(x));
  }
  EXPECT_EQ(b.derivative().coefficients(), (std::vector<double>{0.0, 6.0}));
}

namespace {

MinimalSample sample_from(const NormalizedCorrespondenceSet& corr) {
  MinimalSample s;
  for (std::size_t i = 0; i < 5; ++i) {
    s.first[i] = corr[i].first;
    s.second[i] = corr[i].second;
    s.indices[i] = i;
  }
  return s;
}

}  // namespace

TEST(FivePoint, RecoversTruthAmongCandidates) {
  std::mt19937_64 gen(1234);
  int recovered = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Mat3 R = epiflow::testing::random_rotation(gen, 0.5);
    const Vec3 t = epiflow::testing::random_unit(gen);
    const auto corr = epiflow::testing::project_points(gen, R, t, 5);
    const auto candidates = solve_five_point(sample_from(corr));
    EXPECT_LE(candidates.size(), 10u);
    const EssentialMatrix truth = epiflow::testing::truth_essential(R, t);
    double best = 1e9;
    for (const auto& E : candidates) {
      best = std::min(best, canonical_distance(E, truth));
      EXPECT_LT(E.determinant_residual(), 1e-8);
      EXPECT_LT(E.trace_constraint_residual(), 1e-8);
      for (const auto& c : corr) EXPECT_NEAR(epipolar_residual(c.first, c.second, E), 0.0, 1e-8);
    }
    if (best < 1e-6) ++recovered;
  }
  EXPECT_EQ(recovered, 200);
}

TEST(FivePoint, CollinearDuplicatePointsAreDegenerate) {
  MinimalSample s;
  for (std::size_t i = 0; i < 5; ++i) {
    s.first[i] = NormalizedPoint(0.1, 0.2);
    s.second[i] = NormalizedPoint(0.15, 0.2);
  }
  EXPECT_THROW(solve_five_point(s), Error);
}
