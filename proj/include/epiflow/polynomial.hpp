#pragma once

#include <initializer_list>
#include <vector>

namespace epiflow {

/// Real univariate polynomial, coefficients in ascending order of power.
/// Trailing (highest-power) exact zeros are trimmed on construction.
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<double> coeffs);
  Polynomial(std::initializer_list<double> coeffs) : Polynomial(std::vector<double>(coeffs)) {}

  static Polynomial from_roots(const std::vector<double>& roots, double leading = 1.0);

  /// -1 for the zero polynomial.
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  bool is_zero() const { return coeffs_.empty(); }
  const std::vector<double>& coefficients() const { return coeffs_; }

  double operator()(double x) const;
  Polynomial derivative() const;

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator+(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator-(const Polynomial& a, const Polynomial& b);

 private:
  std::vector<double> coeffs_;
};

/// All real roots in ascending order, via eigenvalues of the balanced companion
/// matrix followed by one Newton polish step. A root counts as real when
/// |imag| <= 1e-8 (1 + |real|). Throws InvalidPolynomial for the zero polynomial.
std::vector<double> real_roots(const Polynomial& p);

}  // namespace epiflow
