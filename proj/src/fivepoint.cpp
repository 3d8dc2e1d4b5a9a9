#include "epiflow/fivepoint.hpp"

#include <Eigen/Geometry>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>

#include "epiflow/error.hpp"
#include "epiflow/polynomial.hpp"

namespace epiflow {
namespace {

// Monomials of total degree <= 3 in (x, y, z). The first ten are the ones
// eliminated by Gauss-Jordan; the last ten are linear in x and y.
constexpr int kMonomials = 20;
constexpr std::array<std::array<int, 3>, kMonomials> kExponents = {{
    {3, 0, 0}, {0, 3, 0}, {2, 1, 0}, {1, 2, 0}, {2, 0, 1},  // x3 y3 x2y xy2 x2z
    {2, 0, 0}, {0, 2, 1}, {0, 2, 0}, {1, 1, 1}, {1, 1, 0},  // x2 y2z y2 xyz xy
    {1, 0, 2}, {1, 0, 1}, {1, 0, 0}, {0, 1, 2}, {0, 1, 1},  // xz2 xz x yz2 yz
    {0, 1, 0}, {0, 0, 3}, {0, 0, 2}, {0, 0, 1}, {0, 0, 0},  // y z3 z2 z 1
}};

constexpr int monomial_index(int i, int j, int k) {
  for (int m = 0; m < kMonomials; ++m) {
    if (kExponents[m][0] == i && kExponents[m][1] == j && kExponents[m][2] == k) return m;
  }
  return -1;
}

struct ProductTable {
  std::array<std::array<int, kMonomials>, kMonomials> index{};
  constexpr ProductTable() {
    for (int a = 0; a < kMonomials; ++a) {
      for (int b = 0; b < kMonomials; ++b) {
        const int i = kExponents[a][0] + kExponents[b][0];
        const int j = kExponents[a][1] + kExponents[b][1];
        const int k = kExponents[a][2] + kExponents[b][2];
        index[a][b] = (i + j + k <= 3) ? monomial_index(i, j, k) : -1;
      }
    }
  }
};
constexpr ProductTable kProducts{};

constexpr int kX = monomial_index(1, 0, 0);
constexpr int kY = monomial_index(0, 1, 0);
constexpr int kZ = monomial_index(0, 0, 1);
constexpr int kOne = monomial_index(0, 0, 0);

// Polynomial in (x, y, z) of total degree <= 3.
struct Poly3 {
  std::array<double, kMonomials> c{};

  Poly3& operator+=(const Poly3& o) {
    for (int m = 0; m < kMonomials; ++m) c[m] += o.c[m];
    return *this;
  }
  Poly3& operator-=(const Poly3& o) {
    for (int m = 0; m < kMonomials; ++m) c[m] -= o.c[m];
    return *this;
  }
  Poly3 operator*(double s) const {
    Poly3 r = *this;
    for (double& v : r.c) v *= s;
    return r;
  }
};

Poly3 operator*(const Poly3& a, const Poly3& b) {
  Poly3 r;
  for (int i = 0; i < kMonomials; ++i) {
    if (a.c[i] == 0.0) continue;
    for (int j = 0; j < kMonomials; ++j) {
      if (b.c[j] == 0.0) continue;
      // Degree overflow would indicate a logic error: inputs stay within degree 3.
      r.c[kProducts.index[i][j]] += a.c[i] * b.c[j];
    }
  }
  return r;
}

using PolyMat = std::array<std::array<Poly3, 3>, 3>;

PolyMat multiply(const PolyMat& A, const PolyMat& B, bool transpose_b) {
  PolyMat C{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < 3; ++k) C[r][c] += A[r][k] * (transpose_b ? B[c][k] : B[k][c]);
    }
  }
  return C;
}

// Monomial vector and its Jacobian at (x, y, z).
void monomials(const Vec3& p, Eigen::Matrix<double, kMonomials, 1>& value,
               Eigen::Matrix<double, kMonomials, 3>& jacobian) {
  const auto power = [](double b, int e) { return e == 0 ? 1.0 : (e == 1 ? b : (e == 2 ? b * b : b * b * b)); };
  for (int m = 0; m < kMonomials; ++m) {
    const auto& ex = kExponents[m];
    const double px = power(p.x(), ex[0]);
    const double py = power(p.y(), ex[1]);
    const double pz = power(p.z(), ex[2]);
    value[m] = px * py * pz;
    jacobian(m, 0) = ex[0] == 0 ? 0.0 : ex[0] * power(p.x(), ex[0] - 1) * py * pz;
    jacobian(m, 1) = ex[1] == 0 ? 0.0 : ex[1] * px * power(p.y(), ex[1] - 1) * pz;
    jacobian(m, 2) = ex[2] == 0 ? 0.0 : ex[2] * px * py * power(p.z(), ex[2] - 1);
  }
}

// Gauss-Newton on the ten cubic constraints. Roots of the resultant that sit
// in tight clusters lose digits; this recovers them.
Vec3 polish(const Eigen::Matrix<double, 10, kMonomials>& constraints, Vec3 p) {
  Eigen::Matrix<double, kMonomials, 1> value;
  Eigen::Matrix<double, kMonomials, 3> jac;
  monomials(p, value, jac);
  double best = (constraints * value).squaredNorm();
  for (int iter = 0; iter < 6 && best > 0.0; ++iter) {
    const Eigen::Matrix<double, 10, 1> f = constraints * value;
    const Eigen::Matrix<double, 10, 3> J = constraints * jac;
    const Vec3 step = J.colPivHouseholderQr().solve(-f);
    const Vec3 trial = p + step;
    if (!trial.allFinite()) break;
    monomials(trial, value, jac);
    const double r = (constraints * value).squaredNorm();
    if (!(r < best)) break;
    best = r;
    p = trial;
  }
  return p;
}

constexpr double kRankTolerance = 1e-10;
constexpr double kAcceptTolerance = 1e-8;

}  // namespace

std::vector<EssentialMatrix> solve_five_point(const MinimalSample& sample) {
  // Row i of A is kron(x_i, x'_i), so A * vec(E) = x'^T E x with column-major vec.
  Eigen::Matrix<double, 5, 9> A;
  for (int i = 0; i < 5; ++i) {
    const Vec3& x = sample.first[static_cast<std::size_t>(i)].homogeneous();
    const Vec3& xp = sample.second[static_cast<std::size_t>(i)].homogeneous();
    for (int b = 0; b < 3; ++b) {
      for (int a = 0; a < 3; ++a) A(i, 3 * b + a) = x[b] * xp[a];
    }
  }

  const Eigen::FullPivHouseholderQR<Eigen::Matrix<double, 9, 5>> qr(A.transpose());
  const auto& R = qr.matrixQR();
  const double r_max = std::abs(R(0, 0));
  if (!(r_max > 0.0) || std::abs(R(4, 4)) < kRankTolerance * r_max) {
    throw Error(ErrorCode::DegenerateSample, "epipolar design matrix has rank < 5");
  }
  const Eigen::Matrix<double, 9, 9> Q = qr.matrixQ();
  const Eigen::Matrix<double, 9, 4> null = Q.rightCols<4>();

  // E = x X + y Y + z Z + W, entries as linear polynomials.
  PolyMat E{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const int idx = 3 * c + r;
      Poly3& p = E[r][c];
      p.c[kX] = null(idx, 0);
      p.c[kY] = null(idx, 1);
      p.c[kZ] = null(idx, 2);
      p.c[kOne] = null(idx, 3);
    }
  }

  Eigen::Matrix<double, 10, kMonomials> M;
  {
    const PolyMat EEt = multiply(E, E, true);
    const Poly3 trace = [&] {
      Poly3 t = EEt[0][0];
      t += EEt[1][1];
      t += EEt[2][2];
      return t;
    }();
    const PolyMat EEtE = multiply(EEt, E, false);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        Poly3 eq = EEtE[r][c] * 2.0;
        eq -= trace * E[r][c];
        for (int m = 0; m < kMonomials; ++m) M(3 * r + c, m) = eq.c[m];
      }
    }
    Poly3 cof0 = E[1][1] * E[2][2];
    cof0 -= E[1][2] * E[2][1];
    Poly3 cof1 = E[1][2] * E[2][0];
    cof1 -= E[1][0] * E[2][2];
    Poly3 cof2 = E[1][0] * E[2][1];
    cof2 -= E[1][1] * E[2][0];
    Poly3 det = E[0][0] * cof0;
    det += E[0][1] * cof1;
    det += E[0][2] * cof2;
    for (int m = 0; m < kMonomials; ++m) M(9, m) = det.c[m];
  }
  for (int r = 0; r < 10; ++r) {
    const double n = M.row(r).cwiseAbs().maxCoeff();
    if (n > 0.0) M.row(r) /= n;
  }

  const Eigen::Matrix<double, 10, kMonomials> constraints = M;

  // Gauss-Jordan with partial pivoting on the leading ten monomials.
  for (int col = 0; col < 10; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 10; ++r) {
      if (std::abs(M(r, col)) > std::abs(M(pivot, col))) pivot = r;
    }
    if (std::abs(M(pivot, col)) < 1e-14) return {};
    M.row(col).swap(M.row(pivot));
    M.row(col) /= M(col, col);
    for (int r = 0; r < 10; ++r) {
      if (r != col && M(r, col) != 0.0) M.row(r) -= M(r, col) * M.row(col);
    }
  }

  // Row r now reads: monomial_r + [x p(z) + y q(z) + s(z)] = 0. Pairs
  // (x2z, x2), (y2z, y2), (xyz, xy) give z * row_low - row_high, which is
  // free of the eliminated monomials: B(z) [x y 1]^T = 0.
  const auto tail = [&](int row) {
    const auto b = [&](int m) { return M(row, m); };
    return std::array<Polynomial, 3>{
        Polynomial{b(12), b(11), b(10)},
        Polynomial{b(15), b(14), b(13)},
        Polynomial{b(19), b(18), b(17), b(16)},
    };
  };
  const Polynomial z_poly{0.0, 1.0};
  std::array<std::array<Polynomial, 3>, 3> B;
  constexpr std::array<std::pair<int, int>, 3> kPairs = {{{4, 5}, {6, 7}, {8, 9}}};
  for (int i = 0; i < 3; ++i) {
    const auto high = tail(kPairs[i].first);
    const auto low = tail(kPairs[i].second);
    for (int j = 0; j < 3; ++j) B[i][j] = z_poly * low[j] - high[j];
  }

  const Polynomial det = B[0][0] * (B[1][1] * B[2][2] - B[1][2] * B[2][1]) -
                         B[0][1] * (B[1][0] * B[2][2] - B[1][2] * B[2][0]) +
                         B[0][2] * (B[1][0] * B[2][1] - B[1][1] * B[2][0]);
  if (det.is_zero()) return {};

  std::vector<EssentialMatrix> solutions;
  for (const double z : real_roots(det)) {
    Mat3 Bz;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) Bz(i, j) = B[i][j](z);
    }
    // Null vector of B(z): best-conditioned cross product of two rows.
    Vec3 v = Vec3::Zero();
    for (const auto& [r0, r1] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{1, 2}}) {
      const Vec3 cand = Bz.row(r0).transpose().cross(Bz.row(r1).transpose());
      if (cand.norm() > v.norm()) v = cand;
    }
    if (v.norm() == 0.0 || std::abs(v.z()) < 1e-14 * v.norm()) continue;
    const Vec3 xyz = polish(constraints, Vec3(v.x() / v.z(), v.y() / v.z(), z));
    const Eigen::Matrix<double, 9, 1> e = xyz.x() * null.col(0) + xyz.y() * null.col(1) +
                                          xyz.z() * null.col(2) + null.col(3);
    const EssentialMatrix candidate =
        EssentialMatrix(Eigen::Map<const Mat3>(e.data())).canonical();
    if (!candidate.matrix().allFinite()) continue;
    if (candidate.determinant_residual() > kAcceptTolerance ||
        candidate.trace_constraint_residual() > kAcceptTolerance) {
      continue;
    }
    bool consistent = true;
    for (std::size_t i = 0; i < 5; ++i) {
      if (std::abs(epipolar_residual(sample.first[i], sample.second[i], candidate)) >
          kAcceptTolerance) {
        consistent = false;
      }
    }
    if (consistent) solutions.push_back(candidate);
    if (solutions.size() == 10) break;
  }
  return solutions;
}

}  // namespace epiflow
