#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "phlearn/error.hpp"
#include "phlearn/types.hpp"

namespace phlearn {

inline Vector singular_values(const Matrix& m) {
  if (m.size() == 0) return Vector();
  return Eigen::JacobiSVD<Matrix>(m).singularValues();
}

// Number of singular values above tol * sigma_max. A zero matrix has rank 0.
inline Index numerical_rank(const Vector& sigma, double tol) {
  if (sigma.size() == 0 || sigma(0) <= 0.0) return 0;
  const double cut = tol * sigma(0);
  Index rank = 0;
  for (Index i = 0; i < sigma.size(); ++i)
    if (sigma(i) > cut) ++rank;
  return rank;
}

inline Index numerical_rank(const Matrix& m, double tol) {
  return numerical_rank(singular_values(m), tol);
}

inline Matrix expm(const Matrix& a) { return a.exp(); }

/// Elementary symmetric polynomials e_0..e_m of the given values, by the
/// O(m^2) product expansion of prod_j (1 + x_j t). e_0 = 1.
template <typename Range>
std::vector<double> elementary_symmetric(const Range& values) {
  std::vector<double> e{1.0};
  for (const double x : values) {
    e.push_back(0.0);
    for (std::size_t k = e.size() - 1; k > 0; --k) e[k] += x * e[k - 1];
  }
  return e;
}

// Polynomials are coefficient vectors in ascending powers.

inline Vector poly_mul(const Vector& p, const Vector& q) {
  if (p.size() == 0 || q.size() == 0) return Vector();
  Vector r = Vector::Zero(p.size() + q.size() - 1);
  for (Index i = 0; i < p.size(); ++i)
    for (Index j = 0; j < q.size(); ++j) r(i + j) += p(i) * q(j);
  return r;
}

inline double poly_eval(const Vector& p, double x) {
  double acc = 0.0;
  for (Index i = p.size(); i-- > 0;) acc = acc * x + p(i);
  return acc;
}

inline std::complex<double> poly_eval(const Vector& p, std::complex<double> x) {
  std::complex<double> acc = 0.0;
  for (Index i = p.size(); i-- > 0;) acc = acc * x + p(i);
  return acc;
}

// Drops trailing coefficients whose magnitude is <= tol * max|coeff|.
inline Vector poly_trim(const Vector& p, double tol = 0.0) {
  if (p.size() == 0) return p;
  const double scale = p.cwiseAbs().maxCoeff();
  Index deg = p.size();
  while (deg > 0 && std::abs(p(deg - 1)) <= tol * scale) --deg;
  return p.head(deg);
}

/// Roots of a real polynomial via the eigenvalues of its companion matrix.
inline ComplexVector poly_roots(const Vector& p) {
  const Vector q = poly_trim(p);
  const Index deg = q.size() - 1;
  if (deg < 1) return ComplexVector();
  Matrix comp = Matrix::Zero(deg, deg);
  for (Index i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
  for (Index i = 0; i < deg; ++i) comp(i, deg - 1) = -q(i) / q(deg);
  return Eigen::EigenSolver<Matrix>(comp, false).eigenvalues();
}

/// Monic real polynomial with the given roots; complex roots are assumed to
/// come in conjugate pairs and the imaginary residue is discarded.
inline Vector poly_from_roots(const ComplexVector& roots) {
  std::vector<std::complex<double>> c{1.0};
  for (Index r = 0; r < roots.size(); ++r) {
    c.push_back(0.0);
    for (std::size_t k = c.size() - 1; k > 0; --k) c[k] = c[k - 1] - roots(r) * c[k];
    c[0] = -roots(r) * c[0];
  }
  Vector out(static_cast<Index>(c.size()));
  for (std::size_t k = 0; k < c.size(); ++k) out(static_cast<Index>(k)) = c[k].real();
  return out;
}

/// Characteristic polynomial det(lambda I - A), ascending and monic, from an
/// orthogonal Hessenberg reduction followed by the Hessenberg determinant
/// recurrence.
inline Vector charpoly(const Matrix& a) {
  const Index n = a.rows();
  if (n == 0) return Vector::Ones(1);
  Matrix h = a;
  if (n > 2) h = Eigen::HessenbergDecomposition<Matrix>(a).matrixH();
  // p[k] holds det(lambda I - H[0:k, 0:k]) for k = 0..n
  std::vector<Vector> p(static_cast<std::size_t>(n + 1));
  p[0] = Vector::Ones(1);
  for (Index k = 1; k <= n; ++k) {
    Vector next = Vector::Zero(k + 1);
    const Vector& prev = p[static_cast<std::size_t>(k - 1)];
    next.tail(k) += prev;
    next.head(k) -= h(k - 1, k - 1) * prev;
    double sub = 1.0;
    for (Index i = k - 1; i-- > 0;) {
      sub *= h(i + 1, i);
      const Vector& pi = p[static_cast<std::size_t>(i)];
      next.head(pi.size()) -= h(i, k - 1) * sub * pi;
    }
    p[static_cast<std::size_t>(k)] = next;
  }
  return p[static_cast<std::size_t>(n)];
}

inline double relative_residual(double residual, double scale) {
  return residual / std::max(scale, 1e-300);
}

}  // namespace phlearn
