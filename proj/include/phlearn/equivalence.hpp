#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "phlearn/error.hpp"
#include "phlearn/linalg.hpp"
#include "phlearn/morphisms.hpp"
#include "phlearn/symplectic.hpp"
#include "phlearn/systems.hpp"
#include "phlearn/types.hpp"

namespace phlearn {

/// Orbit representative of (d, v) under mode permutations and per-mode
/// rotations: d ascending, r_l = sqrt(v_l^2 + v_{n+l}^2) carried along.
struct CanonicalChart {
  Vector d_sorted;
  Vector r;
};

namespace detail {

// Stable ascending order of d; runs of equal d (relative kEqualDTol) are
// reordered by r descending, then by input position.
inline std::vector<Index> chart_order(const Vector& d, const Vector& r) {
  std::vector<Index> order(static_cast<std::size_t>(d.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return d(a) < d(b); });
  std::size_t begin = 0;
  while (begin < order.size()) {
    std::size_t end = begin + 1;
    while (end < order.size() &&
           d(order[end]) - d(order[end - 1]) <= kEqualDTol * d(order[end])) ++end;
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(begin),
                     order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](Index a, Index b) { return r(a) > r(b); });
    begin = end;
  }
  return order;
}

}  // namespace detail

inline CanonicalChart canonicalize(const NormalFormParams& p) {
  const Vector radii = p.mode_radii();
  const std::vector<Index> order = detail::chart_order(p.d, radii);
  CanonicalChart c{Vector(p.modes()), Vector(p.modes())};
  for (Index i = 0; i < p.modes(); ++i) {
    c.d_sorted(i) = p.d(order[static_cast<std::size_t>(i)]);
    c.r(i) = radii(order[static_cast<std::size_t>(i)]);
  }
  return c;
}

/// Elementwise agreement: |x - y| <= tol * max(1, |x|, |y|).
inline bool charts_equal(const CanonicalChart& a, const CanonicalChart& b, double tol) {
  if (a.d_sorted.size() != b.d_sorted.size()) return false;
  const auto close = [tol](double x, double y) {
    return std::abs(x - y) <= tol * std::max({1.0, std::abs(x), std::abs(y)});
  };
  for (Index i = 0; i < a.d_sorted.size(); ++i)
    if (!close(a.d_sorted(i), b.d_sorted(i)) || !close(a.r(i), b.r(i))) return false;
  return true;
}

enum class Verdict { Equivalent, NotEquivalent, Undetermined };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Equivalent: return "equivalent";
    case Verdict::NotEquivalent: return "not_equivalent";
    case Verdict::Undetermined: return "undetermined";
  }
  return "?";
}

/// (P_sigma, A) with P_sigma d1 = d2 and v2 = P A v1, P = blockdiag(P_sigma, P_sigma).
struct StarWitness {
  Matrix P_sigma;
  Matrix A;
};

/// Relative residuals of the four defining conditions:
///   permutation   P blockdiag(D1,D1) P^T = blockdiag(D2,D2)
///   quadratic     A^T blockdiag(D1,D1) A v1 = blockdiag(D1,D1) v1
///   commutation   A J blockdiag(D1,D1) = J blockdiag(D1,D1) A
///   coupling      v2 = P A v1
struct StarResiduals {
  double permutation = 0.0;
  double quadratic = 0.0;
  double commutation = 0.0;
  double coupling = 0.0;

  double max() const { return std::max({permutation, quadratic, commutation, coupling}); }
};

struct StarResult {
  Verdict verdict = Verdict::NotEquivalent;
  std::optional<StarWitness> witness;
  StarResiduals residuals;
  std::string reason;

  bool equivalent() const { return verdict == Verdict::Equivalent; }
};

inline Matrix permutation_block(const Matrix& p_sigma) {
  const Index n = p_sigma.rows();
  Matrix p = Matrix::Zero(2 * n, 2 * n);
  p.topLeftCorner(n, n) = p_sigma;
  p.bottomRightCorner(n, n) = p_sigma;
  return p;
}

inline StarResiduals star_residuals(const NormalFormParams& p1, const NormalFormParams& p2,
                                    const StarWitness& w) {
  const Index n = p1.modes();
  const Matrix d1 = block_diag2(p1.d);
  const Matrix d2 = block_diag2(p2.d);
  const Matrix p = permutation_block(w.P_sigma);
  const Matrix jd = canonical_j(n) * d1;
  const double a_norm = w.A.norm();
  StarResiduals r;
  r.permutation = (p * d1 * p.transpose() - d2).norm() / d2.norm();
  r.quadratic = (w.A.transpose() * d1 * w.A * p1.v - d1 * p1.v).norm() /
                std::max(1.0, d1.norm() * std::max(1.0, a_norm * a_norm) * p1.v.norm());
  r.commutation = (w.A * jd - jd * w.A).norm() / std::max(1.0, 2.0 * a_norm * jd.norm());
  r.coupling = (p2.v - p * w.A * p1.v).norm() / std::max({1.0, p1.v.norm(), p2.v.norm()});
  return r;
}

namespace detail {

// Unitary U with U x = y |x| / |y|. Identity when either vector vanishes.
inline ComplexMatrix unitary_map(const ComplexVector& x, const ComplexVector& y) {
  const Index g = x.size();
  if (x.norm() == 0.0 || y.norm() == 0.0) return ComplexMatrix::Identity(g, g);
  const Eigen::HouseholderQR<ComplexMatrix> qx{ComplexMatrix(x)};
  const Eigen::HouseholderQR<ComplexMatrix> qy{ComplexMatrix(y)};
  const ComplexMatrix ux = qx.householderQ() * ComplexMatrix::Identity(g, g);
  const ComplexMatrix uy = qy.householderQ() * ComplexMatrix::Identity(g, g);
  const std::complex<double> rx = qx.matrixQR()(0, 0);
  const std::complex<double> ry = qy.matrixQR()(0, 0);
  ComplexVector phase = ComplexVector::Ones(g);
  phase(0) = (ry / std::abs(ry)) / (rx / std::abs(rx));
  return uy * phase.asDiagonal() * ux.adjoint();
}

// Consecutive runs of sorted modes whose d differ by at most gap (relative).
inline std::vector<std::vector<Index>> equal_d_groups(const Vector& d,
                                                      const std::vector<Index>& order,
                                                      double gap) {
  std::vector<std::vector<Index>> groups;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i == 0 || d(order[i]) - d(order[i - 1]) > gap * d(order[i])) groups.emplace_back();
    groups.back().push_back(static_cast<Index>(i));
  }
  return groups;
}

struct StarAttempt {
  StarWitness witness;
  double norm_mismatch = 0.0;
};

// Builds (P_sigma, A) from sorted mode matching and per-group unitary blocks.
inline StarAttempt build_star_witness(const NormalFormParams& p1, const NormalFormParams& p2,
                                      const std::vector<Index>& o1, const std::vector<Index>& o2,
                                      double gap) {
  const Index n = p1.modes();
  StarAttempt out;
  out.witness.P_sigma = Matrix::Zero(n, n);
  for (Index k = 0; k < n; ++k)
    out.witness.P_sigma(o2[static_cast<std::size_t>(k)], o1[static_cast<std::size_t>(k)]) = 1.0;
  out.witness.A = Matrix::Zero(2 * n, 2 * n);

  double mismatch2 = 0.0;
  for (const auto& group : equal_d_groups(p1.d, o1, gap)) {
    const Index g = static_cast<Index>(group.size());
    ComplexVector src(g), dst(g);
    for (Index a = 0; a < g; ++a) {
      const Index l1 = o1[static_cast<std::size_t>(group[static_cast<std::size_t>(a)])];
      const Index l2 = o2[static_cast<std::size_t>(group[static_cast<std::size_t>(a)])];
      src(a) = {p1.v(l1), p1.v(n + l1)};
      dst(a) = {p2.v(l2), p2.v(n + l2)};
    }
    const double diff = src.norm() - dst.norm();
    mismatch2 += diff * diff;
    const ComplexMatrix u = unitary_map(src, dst);
    for (Index a = 0; a < g; ++a) {
      const Index la = o1[static_cast<std::size_t>(group[static_cast<std::size_t>(a)])];
      for (Index b = 0; b < g; ++b) {
        const Index lb = o1[static_cast<std::size_t>(group[static_cast<std::size_t>(b)])];
        const std::complex<double> z = u(a, b);
        out.witness.A(la, lb) = z.real();
        out.witness.A(la, n + lb) = -z.imag();
        out.witness.A(n + la, lb) = z.imag();
        out.witness.A(n + la, n + lb) = z.real();
      }
    }
  }
  out.norm_mismatch = std::sqrt(mismatch2);
  return out;
}

}  // namespace detail

/// Decides (d1, v1) ~* (d2, v2).
///
/// A matrix commuting with J blockdiag(D, D) acts complex-linearly on each
/// group of equal d (mode l as the complex number v_l + i v_{n+l}), and the
/// quadratic condition makes it norm-preserving on the group sub-vector.
/// So the decision reduces to matching the d multisets and comparing group
/// norms. Every positive answer carries an explicit witness checked against
/// all four conditions at tol; a witness that fails the check yields
/// Undetermined rather than a guess.
inline StarResult star_equivalent(const NormalFormParams& p1, const NormalFormParams& p2,
                                  double tol = 1e-9) {
  if (p1.modes() != p2.modes()) {
    std::ostringstream os;
    os << "star_equivalent: mode counts differ (" << p1.modes() << " vs " << p2.modes() << ")";
    throw InvalidArgument(os.str());
  }
  const Index n = p1.modes();
  std::vector<Index> o1(static_cast<std::size_t>(n)), o2(static_cast<std::size_t>(n));
  std::iota(o1.begin(), o1.end(), Index{0});
  std::iota(o2.begin(), o2.end(), Index{0});
  std::stable_sort(o1.begin(), o1.end(), [&](Index a, Index b) { return p1.d(a) < p1.d(b); });
  std::stable_sort(o2.begin(), o2.end(), [&](Index a, Index b) { return p2.d(a) < p2.d(b); });

  StarResult out;
  const double scale = std::max({1.0, p1.v.norm(), p2.v.norm()});
  for (const double gap : {kEqualDTol, tol}) {
    detail::StarAttempt attempt = detail::build_star_witness(p1, p2, o1, o2, gap);
    out.residuals = star_residuals(p1, p2, attempt.witness);
    if (out.residuals.permutation > tol) {
      out.verdict = Verdict::NotEquivalent;
      out.reason = "symplectic spectra differ";
      return out;
    }
    if (attempt.norm_mismatch > tol * scale) {
      out.verdict = Verdict::NotEquivalent;
      out.reason = "coupling norms differ on an equal-d group";
      return out;
    }
    if (out.residuals.max() <= tol) {
      out.verdict = Verdict::Equivalent;
      out.witness = std::move(attempt.witness);
      out.reason = "witness verified";
      return out;
    }
  }
  out.verdict = Verdict::Undetermined;
  out.reason = "invariants agree but no witness passed the condition check";
  return out;
}

/// Equality of the input/output maps (zero initial state): H1 = H2 as
/// rational functions, tested as num1 den2 - num2 den1 = 0 relative to the
/// size of the products. Common factors cancel implicitly, so realizations of
/// different dimension compare by their minimal parts.
inline bool filters_equal(const RealizedLTI& r1, const RealizedLTI& r2, double tol = 1e-8) {
  const TransferFunction h1 = transfer_function(r1);
  const TransferFunction h2 = transfer_function(r2);
  const Vector a = poly_mul(h1.num, h2.den);
  const Vector b = poly_mul(h2.num, h1.den);
  const Index len = std::max(a.size(), b.size());
  Vector diff = Vector::Zero(len);
  diff.head(a.size()) += a;
  diff.head(b.size()) -= b;
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return true;
  return diff.norm() <= tol * scale;
}

/// Arrow of the groupoid over PH systems: L invertible with
/// J^T L J Q L^{-1} symmetric positive-definite and B = J^T L^T J L B.
struct GnArrow {
  Matrix L;
  PHSystem source;
};

struct ArrowCheck {
  bool ok = false;
  std::string failed;  // first failed condition, empty when ok
  double residual = 0.0;
};

inline ArrowCheck gn_is_arrow(const Matrix& l, const PHSystem& sys, double tol = 1e-8) {
  ArrowCheck c;
  const Index m = sys.Q.dim();
  if (l.rows() != m || l.cols() != m) {
    c.failed = "dimension";
    return c;
  }
  Eigen::FullPivLU<Matrix> lu(l);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    c.failed = "invertibility";
    return c;
  }
  const Matrix j = canonical_j(sys.modes());
  const Matrix x = j.transpose() * l * j * sys.Q.matrix() * lu.inverse();
  const double sym = (x - x.transpose()).norm() / std::max(x.norm(), 1e-300);
  if (sym > tol) {
    c.failed = "symmetry";
    c.residual = sym;
    return c;
  }
  const Vector ev =
      Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (x + x.transpose()), Eigen::EigenvaluesOnly)
          .eigenvalues();
  if (!(ev(0) > kDefinitenessTol * ev(m - 1))) {
    c.failed = "positive-definiteness";
    c.residual = ev(0);
    return c;
  }
  const Vector lb = l * sys.B;
  const double coupling = (sys.B - j.transpose() * l.transpose() * j * lb).norm() /
                          std::max({1.0, sys.B.norm(), l.norm() * l.norm() * sys.B.norm()});
  if (coupling > tol) {
    c.failed = "coupling";
    c.residual = coupling;
    return c;
  }
  c.ok = true;
  c.residual = std::max(sym, coupling);
  return c;
}

/// Target (J^T L J Q L^{-1}, L B) of a valid arrow.
inline PHSystem gn_apply(const GnArrow& arrow, double tol = 1e-8) {
  const ArrowCheck c = gn_is_arrow(arrow.L, arrow.source, tol);
  if (!c.ok) throw InvalidArgument("gn_apply: arrow condition failed: " + c.failed);
  const Matrix j = canonical_j(arrow.source.modes());
  Matrix x = j.transpose() * arrow.L * j * arrow.source.Q.matrix() * arrow.L.inverse();
  x = 0.5 * (x + x.transpose()).eval();
  return PHSystem(SpdMatrix(std::move(x)), arrow.L * arrow.source.B);
}

/// Arrow of the groupoid over normal-form parameters.
struct HnArrow {
  Matrix P_sigma;
  Matrix A;
  NormalFormParams source;
};

inline bool is_permutation_matrix(const Matrix& p) {
  if (p.rows() != p.cols()) return false;
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j)
      if (p(i, j) != 0.0 && p(i, j) != 1.0) return false;
  return (p.rowwise().sum().array() == 1.0).all() && (p.colwise().sum().array() == 1.0).all();
}

inline ArrowCheck hn_is_arrow(const Matrix& p_sigma, const Matrix& a, const NormalFormParams& src,
                              double tol = 1e-8) {
  ArrowCheck c;
  const Index n = src.modes();
  if (p_sigma.rows() != n || !is_permutation_matrix(p_sigma)) {
    c.failed = "permutation";
    return c;
  }
  if (a.rows() != 2 * n || a.cols() != 2 * n) {
    c.failed = "dimension";
    return c;
  }
  Eigen::FullPivLU<Matrix> lu(a);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    c.failed = "invertibility";
    return c;
  }
  StarWitness w{Matrix::Identity(n, n), a};
  const StarResiduals r = star_residuals(src, src, w);
  if (r.quadratic > tol) {
    c.failed = "quadratic";
    c.residual = r.quadratic;
    return c;
  }
  if (r.commutation > tol) {
    c.failed = "commutation";
    c.residual = r.commutation;
    return c;
  }
  c.ok = true;
  c.residual = std::max(r.quadratic, r.commutation);
  return c;
}

/// (P_sigma d, P A v) of a valid arrow.
inline NormalFormParams hn_apply(const HnArrow& arrow, double tol = 1e-8) {
  const ArrowCheck c = hn_is_arrow(arrow.P_sigma, arrow.A, arrow.source, tol);
  if (!c.ok) throw InvalidArgument("hn_apply: arrow condition failed: " + c.failed);
  return NormalFormParams(arrow.P_sigma * arrow.source.d,
                          permutation_block(arrow.P_sigma) * arrow.A * arrow.source.v);
}

}  // namespace phlearn
