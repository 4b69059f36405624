#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "phlearn/error.hpp"
#include "phlearn/linalg.hpp"
#include "phlearn/symplectic.hpp"
#include "phlearn/systems.hpp"
#include "phlearn/types.hpp"

namespace phlearn {

inline constexpr double kRankTol = 1e-8;
// Residual bound for the postconditions checked while building morphisms.
inline constexpr double kMorphismTol = 1e-8;
// Relative gap below which two symplectic eigenvalues count as equal.
inline constexpr double kEqualDTol = 1e-7;

/// [B, AB, A^2 B, ..., A^{m-1} B]
inline Matrix controllability_matrix(const RealizedLTI& r) {
  r.validate();
  const Index m = r.dim();
  Matrix k(m, m);
  k.col(0) = r.B;
  for (Index i = 1; i < m; ++i) k.col(i) = r.A * k.col(i - 1);
  return k;
}

/// [C; CA; ...; CA^{m-1}]
inline Matrix observability_matrix(const RealizedLTI& r) {
  r.validate();
  const Index m = r.dim();
  Matrix o(m, m);
  o.row(0) = r.C;
  for (Index i = 1; i < m; ++i) o.row(i) = o.row(i - 1) * r.A;
  return o;
}

struct CanonicalityReport {
  bool canonical = false;
  Index rank = 0;
  Vector singular_values;  // of the controllability matrix
  // Normal-form view: Williamson d of Q and the radii of v = S B.
  Vector d;
  Vector radii;
  bool distinct_d = false;
  bool radii_positive = false;
  bool normal_form_criterion = false;
};

/// Distinct symplectic eigenvalues (relative gap > kEqualDTol) and every mode
/// radius above sqrt(tol) times the largest radius. Expects ascending d.
inline bool normal_form_canonical(const Vector& d, const Vector& radii, double tol,
                                  bool* distinct = nullptr, bool* positive = nullptr) {
  bool is_distinct = true;
  for (Index i = 1; i < d.size(); ++i)
    if (d(i) - d(i - 1) <= kEqualDTol * std::max(d(i), d(i - 1))) is_distinct = false;
  const double rmax = radii.size() ? radii.maxCoeff() : 0.0;
  bool is_positive = rmax > 0.0;
  for (Index i = 0; i < radii.size(); ++i)
    if (!(radii(i) > std::sqrt(tol) * rmax)) is_positive = false;
  if (distinct) *distinct = is_distinct;
  if (positive) *positive = is_positive;
  return is_distinct && is_positive;
}

/// Canonical iff the controllability matrix of the realized system has full
/// numerical rank at tol (singular values relative to the largest).
inline CanonicalityReport is_canonical(const PHSystem& sys, double tol = kRankTol) {
  CanonicalityReport rep;
  const RealizedLTI r = realize_ph(sys);
  rep.singular_values = singular_values(controllability_matrix(r));
  rep.rank = numerical_rank(rep.singular_values, tol);
  rep.canonical = rep.rank == r.dim();

  const WilliamsonForm wf = williamson(sys.Q);
  rep.d = wf.d;
  const Index n = sys.modes();
  const Vector v = wf.S.matrix() * sys.B;
  rep.radii = (v.head(n).array().square() + v.tail(n).array().square()).sqrt().matrix();
  rep.normal_form_criterion =
      normal_form_canonical(rep.d, rep.radii, tol, &rep.distinct_d, &rep.radii_positive);
  return rep;
}

/// Image of (d, v) under phi_S: Q = S^T blockdiag(D, D) S, B = S^{-1} v.
struct PhiSImage {
  SymplecticMatrix S;
  NormalFormParams params;
  PHSystem ph;
};

inline PhiSImage phi_s(const NormalFormParams& p, const SymplecticMatrix& s) {
  if (s.modes() != p.modes()) {
    std::ostringstream os;
    os << "phi_s: S is for " << s.modes() << " modes, params have " << p.modes();
    throw InvalidArgument(os.str());
  }
  const Matrix& sm = s.matrix();
  Matrix q = sm.transpose() * block_diag2(p.d) * sm;
  q = 0.5 * (q + q.transpose()).eval();
  return PhiSImage{s, p, PHSystem(SpdMatrix(std::move(q)), s.inverse() * p.v)};
}

enum class MorphismDirection { CHtoPH, PHtoOH };

inline const char* to_string(MorphismDirection d) {
  return d == MorphismDirection::CHtoPH ? "CH->PH" : "PH->OH";
}

/// Residuals of the system morphism identities for f: src -> dst.
///   equivariance: f A_src - A_dst f,  f B_src - B_dst
///   readout:      C_src - C_dst f
/// Relative values divide by the natural scale of each identity.
struct MorphismReport {
  double state_residual = 0.0;
  double input_residual = 0.0;
  double readout_residual = 0.0;
  double state_relative = 0.0;
  double input_relative = 0.0;
  double readout_relative = 0.0;
  double tol = 0.0;
  bool pass = false;

  double max_relative() const {
    return std::max({state_relative, input_relative, readout_relative});
  }
};

struct LinearMorphism {
  Matrix matrix;
  MorphismDirection direction = MorphismDirection::CHtoPH;
  RealizedLTI source;
  RealizedLTI target;
  Index rank = 0;
  MorphismReport report;
};

inline MorphismReport verify_morphism(const Matrix& f, const RealizedLTI& src,
                                      const RealizedLTI& dst, double tol) {
  src.validate();
  dst.validate();
  if (f.rows() != dst.dim() || f.cols() != src.dim()) {
    std::ostringstream os;
    os << "verify_morphism: matrix is " << f.rows() << "x" << f.cols() << ", expected "
       << dst.dim() << "x" << src.dim();
    throw InvalidArgument(os.str());
  }
  MorphismReport rep;
  rep.tol = tol;
  rep.state_residual = (f * src.A - dst.A * f).norm();
  rep.input_residual = (f * src.B - dst.B).norm();
  rep.readout_residual = (src.C - dst.C * f).norm();
  const double fn = f.norm();
  rep.state_relative =
      relative_residual(rep.state_residual, std::max(1.0, fn * (src.A.norm() + dst.A.norm())));
  rep.input_relative =
      relative_residual(rep.input_residual, std::max({1.0, fn * src.B.norm(), dst.B.norm()}));
  rep.readout_relative =
      relative_residual(rep.readout_residual, std::max({1.0, src.C.norm(), dst.C.norm() * fn}));
  rep.pass = rep.max_relative() <= tol;
  return rep;
}

inline MorphismReport verify_morphism(const LinearMorphism& f, double tol) {
  return verify_morphism(f.matrix, f.source, f.target, tol);
}

/// Matrix L of the linear morphism from the controllable form of p to
/// phi_S(p). Columns by backward recursion
///   l_{2n} = B,  l_{j-1} = (JQ) l_j + a_{j-1} B,
/// forced by L g1 = (JQ) L, L e_{2n} = B, B^T Q L = g2. All three identities
/// are checked, the last one against the closed-form output coefficients.
/// Throws NumericalError when a residual exceeds kMorphismTol, unless
/// `enforce` is false (the report then carries the failure).
inline LinearMorphism ch_to_ph_morphism(const NormalFormParams& p, const SymplecticMatrix& s,
                                        bool enforce = true) {
  const PhiSImage image = phi_s(p, s);
  const RealizedLTI ch = build_ch(p);
  const RealizedLTI ph = realize_ph(image.ph);
  const Index m = ch.dim();
  const Vector a = char_coeffs(p.d);

  Matrix l(m, m);
  l.col(m - 1) = ph.B;
  for (Index j = m - 1; j > 0; --j) l.col(j - 1) = ph.A * l.col(j) + a(j) * ph.B;

  LinearMorphism out;
  out.matrix = std::move(l);
  out.direction = MorphismDirection::CHtoPH;
  out.source = ch;
  out.target = ph;
  out.rank = numerical_rank(out.matrix, kRankTol);
  out.report = verify_morphism(out.matrix, ch, ph, kMorphismTol);

  // Cayley-Hamilton closure (JQ) l_1 = -a_0 B is the first column of the
  // equivariance identity; reported through state_residual.
  if (enforce && !out.report.pass) {
    std::ostringstream os;
    os << "ch_to_ph_morphism: postcondition failed (relative residuals state "
       << out.report.state_relative << ", input " << out.report.input_relative << ", readout "
       << out.report.readout_relative << ")";
    throw NumericalError(os.str());
  }
  return out;
}

struct PhToOh {
  LinearMorphism morphism;
  NormalFormParams params;
};

/// Morphism from a PH system to the observable form of its Williamson
/// parameters (d, v = S B). Rows by backward recursion
///   m_{2n} = B^T Q,  m_{j-1} = m_j (JQ) + a_{j-1} m_{2n}.
/// Exists whether or not the system is canonical. Same failure policy as
/// ch_to_ph_morphism.
inline PhToOh ph_to_oh_morphism(const PHSystem& sys, bool enforce = true) {
  const WilliamsonForm wf = williamson(sys.Q);
  NormalFormParams params(wf.d, wf.S.matrix() * sys.B);
  const RealizedLTI ph = realize_ph(sys);
  const RealizedLTI oh = build_oh(params);
  const Index m = ph.dim();
  const Vector a = char_coeffs(params.d);

  Matrix mm(m, m);
  mm.row(m - 1) = ph.C;
  for (Index j = m - 1; j > 0; --j) mm.row(j - 1) = mm.row(j) * ph.A + a(j) * ph.C;

  LinearMorphism f;
  f.matrix = std::move(mm);
  f.direction = MorphismDirection::PHtoOH;
  f.source = ph;
  f.target = oh;
  f.rank = numerical_rank(f.matrix, kRankTol);
  f.report = verify_morphism(f.matrix, ph, oh, kMorphismTol);
  if (enforce && !f.report.pass) {
    std::ostringstream os;
    os << "ph_to_oh_morphism: postcondition failed (relative residuals state "
       << f.report.state_relative << ", input " << f.report.input_relative << ", readout "
       << f.report.readout_relative << ")";
    throw NumericalError(os.str());
  }
  return PhToOh{std::move(f), std::move(params)};
}

}  // namespace phlearn
