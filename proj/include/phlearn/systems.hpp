#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "phlearn/error.hpp"
#include "phlearn/linalg.hpp"
#include "phlearn/symplectic.hpp"
#include "phlearn/types.hpp"

namespace phlearn {

/// Linear port-Hamiltonian system in normal form:
///   z' = J Q z + B u,   y = B^T Q z.
struct PHSystem {
  PHSystem(SpdMatrix q, Vector b) : Q(std::move(q)), B(std::move(b)) {
    if (B.size() != Q.dim()) {
      std::ostringstream os;
      os << "PHSystem: B has length " << B.size() << ", expected " << Q.dim();
      throw InvalidArgument(os.str());
    }
  }

  Index modes() const { return Q.modes(); }

  SpdMatrix Q;
  Vector B;
};

/// Normal-form parameters (d, v): symplectic eigenvalues d > 0 and coupling
/// vector v in R^{2n}. Shared by the controllable and observable forms.
struct NormalFormParams {
  NormalFormParams(Vector d_, Vector v_) : d(std::move(d_)), v(std::move(v_)) {
    if (d.size() < 1) throw InvalidArgument("NormalFormParams: d must be non-empty");
    if (v.size() != 2 * d.size()) {
      std::ostringstream os;
      os << "NormalFormParams: v has length " << v.size() << ", expected " << 2 * d.size();
      throw InvalidArgument(os.str());
    }
    for (Index i = 0; i < d.size(); ++i)
      if (!(d(i) > 0.0) || !std::isfinite(d(i))) {
        std::ostringstream os;
        os << "NormalFormParams: d[" << i << "] = " << d(i) << " is not positive";
        throw InvalidArgument(os.str());
      }
    if (!v.allFinite()) throw InvalidArgument("NormalFormParams: non-finite v");
  }

  Index modes() const { return d.size(); }
  // 3n reals.
  Index parameter_count() const { return d.size() + v.size(); }

  // r_l = sqrt(v_l^2 + v_{n+l}^2)
  Vector mode_radii() const {
    const Index n = modes();
    return (v.head(n).array().square() + v.tail(n).array().square()).sqrt().matrix();
  }

  Vector d;
  Vector v;
};

// Independent reals in a raw (Q, B) pair: n(2n+1) for Q, 2n for B.
constexpr long long ph_parameter_count(long long n) { return n * (2 * n + 1) + 2 * n; }
constexpr long long normal_form_parameter_count(long long n) { return 3 * n; }

enum class RealizationTag { PH, CH, OH };

inline const char* to_string(RealizationTag t) {
  switch (t) {
    case RealizationTag::PH: return "PH";
    case RealizationTag::CH: return "CH";
    case RealizationTag::OH: return "OH";
  }
  return "?";
}

/// x' = A x + B u, y = C x.
struct RealizedLTI {
  Matrix A;
  Vector B;
  RowVector C;
  RealizationTag tag = RealizationTag::PH;

  Index dim() const { return A.rows(); }

  void validate() const {
    if (A.rows() != A.cols() || B.size() != A.rows() || C.size() != A.rows() || A.rows() == 0) {
      std::ostringstream os;
      os << "RealizedLTI: inconsistent dimensions A " << A.rows() << "x" << A.cols() << ", B "
         << B.size() << ", C " << C.size();
      throw InvalidArgument(os.str());
    }
  }
};

/// H(s) = num(s) / den(s), ascending coefficients, den monic.
struct TransferFunction {
  Vector num;
  Vector den;

  std::complex<double> operator()(std::complex<double> s) const {
    return poly_eval(num, s) / poly_eval(den, s);
  }
};

namespace detail {

inline void require_positive(const Vector& d, const char* what) {
  if (d.size() < 1) throw InvalidArgument(std::string(what) + ": empty d");
  for (Index i = 0; i < d.size(); ++i)
    if (!(d(i) > 0.0)) {
      std::ostringstream os;
      os << what << ": d[" << i << "] = " << d(i) << " is not positive";
      throw InvalidArgument(os.str());
    }
}

}  // namespace detail

/// Coefficients a_0..a_{2n-1} of prod_j (lambda^2 + d_j^2) = lambda^{2n} + sum a_i lambda^i.
/// a_{2k} = e_{n-k}(d^2); odd entries are zero. a_{2n} = 1 is implicit.
inline Vector char_coeffs(const Vector& d) {
  detail::require_positive(d, "char_coeffs");
  const Index n = d.size();
  std::vector<double> sq(d.data(), d.data() + n);
  for (double& x : sq) x *= x;
  const std::vector<double> e = elementary_symmetric(sq);
  Vector a = Vector::Zero(2 * n);
  for (Index k = 0; k < n; ++k) a(2 * k) = e[static_cast<std::size_t>(n - k)];
  return a;
}

/// Companion matrix: ones on the superdiagonal, last row -a_0 .. -a_{2n-1}.
inline Matrix companion_g1(const Vector& d) {
  const Vector a = char_coeffs(d);
  const Index m = a.size();
  Matrix g = Matrix::Zero(m, m);
  for (Index i = 0; i + 1 < m; ++i) g(i, i + 1) = 1.0;
  g.row(m - 1) = -a.transpose();
  return g;
}

/// f_l = d_l * e_k(d_j^2 : j != l).
inline Vector mode_weights(const Vector& d, Index k) {
  const Index n = d.size();
  if (n < 1) throw InvalidArgument("mode_weights: empty d");
  if (k < 0 || k > n - 1) {
    std::ostringstream os;
    os << "mode_weights: k = " << k << " outside [0, " << n - 1 << "]";
    throw InvalidArgument(os.str());
  }
  Vector f(n);
  std::vector<double> others;
  others.reserve(static_cast<std::size_t>(n));
  for (Index l = 0; l < n; ++l) {
    others.clear();
    for (Index j = 0; j < n; ++j)
      if (j != l) others.push_back(d(j) * d(j));
    f(l) = d(l) * elementary_symmetric(others)[static_cast<std::size_t>(k)];
  }
  return f;
}

/// (c_1, c_3, ..., c_{2n-1}): entry k is v^T blockdiag(F_k, F_k) v
/// = sum_l f_l(d, k) (v_l^2 + v_{n+l}^2).
inline Vector output_coeffs(const NormalFormParams& p) {
  const Index n = p.modes();
  const Vector m = p.mode_radii().array().square().matrix();
  Vector c(n);
  for (Index k = 0; k < n; ++k) c(k) = mode_weights(p.d, k).dot(m);
  return c;
}

// (0, c_{2n-1}, 0, c_{2n-3}, ..., 0, c_1) as a row.
inline RowVector output_pattern(const NormalFormParams& p) {
  const Index n = p.modes();
  const Vector c = output_coeffs(p);
  RowVector g = RowVector::Zero(2 * n);
  for (Index i = 0; i < n; ++i) g(2 * i + 1) = c(n - 1 - i);
  return g;
}

/// Controllable Hamiltonian representation.
inline RealizedLTI build_ch(const NormalFormParams& p) {
  const Index m = 2 * p.modes();
  RealizedLTI r;
  r.A = companion_g1(p.d);
  r.B = Vector::Zero(m);
  r.B(m - 1) = 1.0;
  r.C = output_pattern(p);
  r.tag = RealizationTag::CH;
  return r;
}

/// Observable Hamiltonian representation: the transpose of build_ch.
inline RealizedLTI build_oh(const NormalFormParams& p) {
  const Index m = 2 * p.modes();
  RealizedLTI r;
  r.A = companion_g1(p.d).transpose();
  r.B = output_pattern(p).transpose();
  r.C = RowVector::Zero(m);
  r.C(m - 1) = 1.0;
  r.tag = RealizationTag::OH;
  return r;
}

inline RealizedLTI realize_ph(const PHSystem& sys) {
  RealizedLTI r;
  r.A = canonical_j(sys.modes()) * sys.Q.matrix();
  r.B = sys.B;
  r.C = sys.B.transpose() * sys.Q.matrix();
  r.tag = RealizationTag::PH;
  return r;
}

/// Cancels root pairs of num and den closer than tol (relative to max(1, |root|)).
inline TransferFunction reduce_transfer(const TransferFunction& tf, double tol = 1e-7) {
  const Vector num = poly_trim(tf.num, 1e-14);
  if (num.size() == 0) return TransferFunction{Vector::Zero(1), Vector::Ones(1)};
  const ComplexVector zeros = poly_roots(num);
  const ComplexVector poles = poly_roots(tf.den);
  std::vector<bool> pole_used(static_cast<std::size_t>(poles.size()), false);
  std::vector<std::complex<double>> kept_zeros;
  for (Index i = 0; i < zeros.size(); ++i) {
    Index best = -1;
    double best_dist = 0.0;
    for (Index j = 0; j < poles.size(); ++j) {
      if (pole_used[static_cast<std::size_t>(j)]) continue;
      const double dist = std::abs(zeros(i) - poles(j));
      if (dist <= tol * std::max(1.0, std::abs(poles(j))) && (best < 0 || dist < best_dist)) {
        best = j;
        best_dist = dist;
      }
    }
    if (best >= 0)
      pole_used[static_cast<std::size_t>(best)] = true;
    else
      kept_zeros.push_back(zeros(i));
  }
  std::vector<std::complex<double>> kept_poles;
  for (Index j = 0; j < poles.size(); ++j)
    if (!pole_used[static_cast<std::size_t>(j)]) kept_poles.push_back(poles(j));

  const auto to_vec = [](const std::vector<std::complex<double>>& v) {
    ComplexVector out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = v[i];
    return out;
  };
  TransferFunction out;
  out.num = num(num.size() - 1) * poly_from_roots(to_vec(kept_zeros));
  out.den = poly_from_roots(to_vec(kept_poles));
  return out;
}

/// H(s) = C (sI - A)^{-1} B via the Faddeev-LeVerrier recursion. den is
/// charpoly(A); no cancellation unless `reduce` is set.
inline TransferFunction transfer_function(const RealizedLTI& r, bool reduce = false) {
  r.validate();
  const Index m = r.dim();
  // adj(sI - A) = sum_{k=1}^{m} N_k s^{m-k}, N_1 = I, N_{k+1} = A N_k + c_{m-k} I
  Vector den = Vector::Zero(m + 1);
  den(m) = 1.0;
  Vector num = Vector::Zero(m);
  Matrix nk = Matrix::Identity(m, m);
  for (Index k = 1; k <= m; ++k) {
    num(m - k) = r.C.dot(nk * r.B);
    const Matrix ank = r.A * nk;
    den(m - k) = -ank.trace() / static_cast<double>(k);
    if (k < m) {
      nk = ank;
      nk.diagonal().array() += den(m - k);
    }
  }
  TransferFunction tf{num, den};
  return reduce ? reduce_transfer(tf) : tf;
}

}  // namespace phlearn
