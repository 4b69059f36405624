#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "phlearn/error.hpp"
#include "phlearn/linalg.hpp"
#include "phlearn/types.hpp"

namespace phlearn {

// Relative tolerance for the symmetry, skew-symmetry and symplecticity checks.
inline constexpr double kStructureTol = 1e-8;
// Positive-definiteness: min eigenvalue must exceed this times the max eigenvalue.
inline constexpr double kDefinitenessTol = 1e-12;
// Condition number of the SPD square root above which williamson() warns.
inline constexpr double kConditionWarning = 1e12;

/// The canonical symplectic matrix [[0, I_n], [-I_n, 0]].
inline Matrix canonical_j(Index n) {
  if (n < 1) throw InvalidArgument("canonical_j: mode count must be >= 1");
  Matrix j = Matrix::Zero(2 * n, 2 * n);
  j.topRightCorner(n, n).setIdentity();
  j.bottomLeftCorner(n, n) = -Matrix::Identity(n, n);
  return j;
}

// blockdiag(D, D) for D = diag(d).
inline Matrix block_diag2(const Vector& d) {
  const Index n = d.size();
  Vector diag(2 * n);
  diag << d, d;
  return diag.asDiagonal();
}

namespace detail {

inline void require_square_even(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0 || m.rows() % 2 != 0) {
    std::ostringstream os;
    os << what << ": expected a non-empty 2n x 2n matrix, got " << m.rows() << "x" << m.cols();
    throw InvalidArgument(os.str());
  }
}

inline double symmetry_defect(const Matrix& m) {
  return (m - m.transpose()).norm() / std::max(m.norm(), 1e-300);
}

}  // namespace detail

/// Symmetric positive-definite 2n x 2n matrix. Validated on construction.
class SpdMatrix {
 public:
  explicit SpdMatrix(Matrix m) : m_(std::move(m)) {
    detail::require_square_even(m_, "SpdMatrix");
    if (!m_.allFinite()) throw InvalidArgument("SpdMatrix: non-finite entries");
    const double asym = detail::symmetry_defect(m_);
    if (asym > kStructureTol) {
      std::ostringstream os;
      os << "SpdMatrix: not symmetric (relative defect " << asym << ")";
      throw InvalidArgument(os.str());
    }
    m_ = 0.5 * (m_ + m_.transpose()).eval();
    const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(m_, Eigen::EigenvaluesOnly).eigenvalues();
    if (!(ev(0) > kDefinitenessTol * ev(ev.size() - 1)) || ev(ev.size() - 1) <= 0.0) {
      std::ostringstream os;
      os << "SpdMatrix: not positive-definite (eigenvalue range [" << ev(0) << ", "
         << ev(ev.size() - 1) << "])";
      throw InvalidArgument(os.str());
    }
  }

  const Matrix& matrix() const { return m_; }
  Index modes() const { return m_.rows() / 2; }
  Index dim() const { return m_.rows(); }

 private:
  Matrix m_;
};

/// Real 2n x 2n matrix S with S^T J S = J.
class SymplecticMatrix {
 public:
  struct Unchecked {};

  explicit SymplecticMatrix(Matrix s) : s_(std::move(s)) {
    detail::require_square_even(s_, "SymplecticMatrix");
    const double defect = symplectic_defect(s_);
    if (!(defect <= kStructureTol)) {
      std::ostringstream os;
      os << "SymplecticMatrix: S^T J S != J (relative defect " << defect << ")";
      throw InvalidArgument(os.str());
    }
  }
  SymplecticMatrix(Matrix s, Unchecked) : s_(std::move(s)) {}

  static SymplecticMatrix identity(Index n) {
    return SymplecticMatrix(Matrix::Identity(2 * n, 2 * n), Unchecked{});
  }

  // ||S^T J S - J||_F / max(1, ||S||_F^2)
  static double symplectic_defect(const Matrix& s) {
    const Matrix j = canonical_j(s.rows() / 2);
    return (s.transpose() * j * s - j).norm() / std::max(1.0, s.squaredNorm());
  }

  // S^{-1} = -J S^T J.
  Matrix inverse() const {
    const Matrix j = canonical_j(modes());
    return -j * s_.transpose() * j;
  }

  const Matrix& matrix() const { return s_; }
  Index modes() const { return s_.rows() / 2; }

 private:
  Matrix s_;
};

/// Williamson normal form M = S^T blockdiag(D, D) S with d ascending.
struct WilliamsonForm {
  SymplecticMatrix S;
  Vector d;
  double sqrt_condition = 1.0;  // condition number of M^{1/2}
  bool ill_conditioned = false;
};

/// Orthogonal normal form U^T W U = [[0, diag(w)], [-diag(w), 0]], w ascending.
struct SkewBlockForm {
  Matrix U;
  Vector w;
};

namespace detail {

struct SqrtPair {
  Matrix root;
  Matrix inv_root;
  double condition;
};

inline SqrtPair spd_sqrt_pair(const SpdMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.matrix());
  const Vector s = es.eigenvalues().cwiseSqrt();
  const Matrix& v = es.eigenvectors();
  SqrtPair out;
  out.root = v * s.asDiagonal() * v.transpose();
  out.inv_root = v * s.cwiseInverse().asDiagonal() * v.transpose();
  out.root = 0.5 * (out.root + out.root.transpose()).eval();
  out.inv_root = 0.5 * (out.inv_root + out.inv_root.transpose()).eval();
  out.condition = s(s.size() - 1) / s(0);
  return out;
}

}  // namespace detail

/// Symmetric square root of an SPD matrix.
inline SpdMatrix spd_sqrt(const SpdMatrix& m) { return SpdMatrix(detail::spd_sqrt_pair(m).root); }

/// Orthogonal reduction of a nonsingular skew-symmetric matrix to 2x2 rotation
/// blocks. Works through the Hermitian matrix iW: an eigenvector a + ib for
/// the eigenvalue +w gives the block pair (sqrt2 a, -sqrt2 b).
///
/// Each complex eigenvector is phase-fixed so that its largest-magnitude
/// component is real and positive. The first column of the pair is then
/// positive at that row and the second column is zero there.
inline SkewBlockForm skew_block_reduce(const Matrix& w) {
  detail::require_square_even(w, "skew_block_reduce");
  const double scale = std::max(w.norm(), 1e-300);
  const double skew_defect = (w + w.transpose()).norm() / scale;
  if (skew_defect > kStructureTol) {
    std::ostringstream os;
    os << "skew_block_reduce: input is not skew-symmetric (relative defect " << skew_defect << ")";
    throw InvalidArgument(os.str());
  }
  const Index n = w.rows() / 2;
  const Matrix ws = 0.5 * (w - w.transpose());
  const ComplexMatrix h = std::complex<double>(0.0, 1.0) * ws.cast<std::complex<double>>();
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
  const Vector& ev = es.eigenvalues();
  const double top = std::abs(ev(2 * n - 1));
  if (!(ev(n) > kDefinitenessTol * top) || !(ev(n - 1) < 0.0)) {
    std::ostringstream os;
    os << "skew_block_reduce: singular input (smallest block frequency " << ev(n) << ")";
    throw InvalidArgument(os.str());
  }

  SkewBlockForm out;
  out.U.resize(2 * n, 2 * n);
  out.w = ev.tail(n);
  const double root2 = std::sqrt(2.0);
  for (Index j = 0; j < n; ++j) {
    ComplexVector u = es.eigenvectors().col(n + j);
    Index pivot = 0;
    for (Index i = 1; i < u.size(); ++i)
      if (std::abs(u(i)) > std::abs(u(pivot))) pivot = i;
    u *= std::conj(u(pivot)) / std::abs(u(pivot));
    out.U.col(j) = root2 * u.real();
    out.U.col(n + j) = -root2 * u.imag();
    out.U(pivot, n + j) = 0.0;
  }
  return out;
}

/// Williamson decomposition. With K = M^{1/2} the skew matrix K^{-1} J K^{-1}
/// is reduced orthogonally; its block frequencies are 1/d_j and
/// S = blockdiag(D, D)^{-1/2} U^T K. Repeated symplectic eigenvalues are
/// handled without special casing.
inline WilliamsonForm williamson(const SpdMatrix& m) {
  const Index n = m.modes();
  const detail::SqrtPair k = detail::spd_sqrt_pair(m);
  const Matrix wt = k.inv_root * canonical_j(n) * k.inv_root;
  const SkewBlockForm blocks = skew_block_reduce(wt);

  Vector d = blocks.w.cwiseInverse();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return d(a) < d(b); });

  Matrix u(2 * n, 2 * n);
  Vector d_sorted(n);
  for (Index j = 0; j < n; ++j) {
    const Index src = order[static_cast<std::size_t>(j)];
    d_sorted(j) = d(src);
    u.col(j) = blocks.U.col(src);
    u.col(n + j) = blocks.U.col(n + src);
  }
  const Vector scale = block_diag2(d_sorted).diagonal().cwiseSqrt().cwiseInverse();
  Matrix s = scale.asDiagonal() * u.transpose() * k.root;

  return WilliamsonForm{SymplecticMatrix(std::move(s), SymplecticMatrix::Unchecked{}), d_sorted,
                        k.condition, k.condition > kConditionWarning};
}

/// Symplectic eigenvalues, ascending.
inline Vector symplectic_eigenvalues(const SpdMatrix& m) { return williamson(m).d; }

/// exp(scale * J R) for a seeded symmetric R with entries uniform in [-1, 1].
inline SymplecticMatrix random_symplectic(Index n, std::uint64_t seed, double scale = 1.0) {
  if (n < 1) throw InvalidArgument("random_symplectic: mode count must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix r(2 * n, 2 * n);
  for (Index i = 0; i < 2 * n; ++i)
    for (Index j = i; j < 2 * n; ++j) r(i, j) = r(j, i) = unit(rng);
  return SymplecticMatrix(expm(scale * canonical_j(n) * r), SymplecticMatrix::Unchecked{});
}

}  // namespace phlearn
