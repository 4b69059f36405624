#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "phlearn/equivalence.hpp"
#include "phlearn/error.hpp"
#include "phlearn/simulate.hpp"
#include "phlearn/systems.hpp"
#include "phlearn/types.hpp"

namespace phlearn {

enum class NormalForm { CH, OH };
enum class X0Policy { Zero, Estimate };

inline const char* to_string(NormalForm m) { return m == NormalForm::CH ? "ch" : "oh"; }

inline RealizedLTI build_normal_form(const NormalFormParams& p, NormalForm mode) {
  return mode == NormalForm::CH ? build_ch(p) : build_oh(p);
}

/// Input/output records (states are ignored) and the assumed mode count.
struct Dataset {
  std::vector<Trajectory> trajectories;
  Index n = 1;
  X0Policy x0_policy = X0Policy::Zero;

  void validate() const {
    if (n < 1) throw InvalidArgument("Dataset: n must be >= 1");
    if (trajectories.empty()) throw InvalidArgument("Dataset: no trajectories");
    for (const Trajectory& t : trajectories) t.validate();
  }
};

namespace detail {

// Output of r from x0 under the trajectory's sampled input (ZOH).
inline Vector predict(const RealizedLTI& r, const Vector& x0, const Trajectory& t) {
  const Discretization disc = discretize_zoh(r, t.grid.dt);
  Vector y(t.grid.count);
  Vector x = x0;
  for (Index k = 0; k < t.grid.count; ++k) {
    y(k) = r.C.dot(x);
    x = disc.E * x + disc.G * t.u(k);
  }
  return y;
}

}  // namespace detail

/// Least-squares initial state for r given the trajectory: the free response
/// C E^k x0 is linear in x0, so x0 solves a small linear problem against
/// y - forced response.
inline Vector estimate_x0(const RealizedLTI& r, const Trajectory& t) {
  const Index m = r.dim();
  const Vector forced = detail::predict(r, Vector::Zero(m), t);
  const Discretization disc = discretize_zoh(r, t.grid.dt);
  Matrix phi(t.grid.count, m);
  RowVector row = r.C;
  for (Index k = 0; k < t.grid.count; ++k) {
    phi.row(k) = row;
    row = row * disc.E;
  }
  return phi.colPivHouseholderQr().solve(t.y - forced);
}

/// Scaled residual vector whose squared norm is the loss: trajectory i
/// contributes (yhat - y) / sqrt(T N_i).
inline Vector loss_residuals(const NormalFormParams& p, const Dataset& ds, NormalForm mode,
                             const std::vector<Vector>& x0s) {
  const RealizedLTI r = build_normal_form(p, mode);
  Index total = 0;
  for (const Trajectory& t : ds.trajectories) total += t.grid.count;
  Vector res(total);
  Index offset = 0;
  const double ntraj = static_cast<double>(ds.trajectories.size());
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const Trajectory& t = ds.trajectories[i];
    const Vector x0 = i < x0s.size() ? x0s[i] : Vector::Zero(r.dim());
    if (x0.size() != r.dim()) throw InvalidArgument("loss: initial state dimension mismatch");
    const double w = 1.0 / std::sqrt(ntraj * static_cast<double>(t.grid.count));
    res.segment(offset, t.grid.count) = w * (detail::predict(r, x0, t) - t.y);
    offset += t.grid.count;
  }
  return res;
}

/// Mean over trajectories of the output MSE against the ZOH simulation of
/// the CH or OH realization of p from the given initial states (missing
/// entries default to zero).
inline double loss(const NormalFormParams& p, const Dataset& ds, NormalForm mode,
                   const std::vector<Vector>& x0s) {
  return loss_residuals(p, ds, mode, x0s).squaredNorm();
}

/// Initial states implied by the dataset policy.
inline std::vector<Vector> resolve_x0(const NormalFormParams& p, const Dataset& ds,
                                      NormalForm mode) {
  if (ds.x0_policy == X0Policy::Zero) return {};
  const RealizedLTI r = build_normal_form(p, mode);
  std::vector<Vector> x0s;
  x0s.reserve(ds.trajectories.size());
  for (const Trajectory& t : ds.trajectories) x0s.push_back(estimate_x0(r, t));
  return x0s;
}

inline double loss(const NormalFormParams& p, const Dataset& ds, NormalForm mode) {
  return loss(p, ds, mode, resolve_x0(p, ds, mode));
}

/// Hann-windowed periodogram of y evaluated on an angular-frequency grid.
struct Periodogram {
  Vector omega;
  Vector power;
};

inline Periodogram periodogram(const Vector& y, double dt, double omega_max = 100.0) {
  const Index count = y.size();
  Periodogram out;
  if (count < 4) return out;
  const double span = static_cast<double>(count) * dt;
  const double step = 2.0 * std::numbers::pi / (8.0 * span);
  const double top = std::min(std::numbers::pi / dt, omega_max);
  const Index bins = std::max<Index>(static_cast<Index>(top / step), 3);
  Vector yw = y.array() - y.mean();
  for (Index k = 0; k < count; ++k)
    yw(k) *= 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                  static_cast<double>(count - 1));
  out.omega.resize(bins);
  out.power.resize(bins);
  for (Index b = 0; b < bins; ++b) {
    const double w = step * static_cast<double>(b + 1);
    const std::complex<double> rot = std::polar(1.0, -w * dt);
    std::complex<double> phasor = 1.0, acc = 0.0;
    for (Index k = 0; k < count; ++k) {
      acc += yw(k) * phasor;
      phasor *= rot;
    }
    out.omega(b) = w;
    out.power(b) = std::norm(acc);
  }
  return out;
}

/// d from the n strongest periodogram peaks of the outputs (parabolic
/// refinement), topped up with a logarithmic spread over [0.1, 10] when
/// fewer peaks exist; v a unit-norm seeded Gaussian.
inline NormalFormParams init_params(const Dataset& ds, Index n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("init_params: n must be >= 1");
  ds.validate();

  Periodogram total;
  for (const Trajectory& t : ds.trajectories) {
    const Periodogram pg = periodogram(t.y, t.grid.dt);
    if (total.power.size() == 0) {
      total = pg;
    } else if (pg.power.size() == total.power.size()) {
      total.power += pg.power;
    }
  }

  std::vector<double> peaks;
  const Vector& pw = total.power;
  if (pw.size() >= 3 && pw.maxCoeff() > 0.0) {
    const double floor = 1e-8 * pw.maxCoeff();
    std::vector<std::pair<double, double>> found;  // (power, omega)
    for (Index i = 1; i + 1 < pw.size(); ++i) {
      if (!(pw(i) > pw(i - 1) && pw(i) >= pw(i + 1) && pw(i) > floor)) continue;
      const double a = pw(i - 1), b = pw(i), c = pw(i + 1);
      const double denom = a - 2.0 * b + c;
      const double shift = denom != 0.0 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;
      const double step = total.omega(1) - total.omega(0);
      found.emplace_back(b, total.omega(i) + shift * step);
    }
    std::stable_sort(found.begin(), found.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    for (const auto& [power, omega] : found) {
      if (static_cast<Index>(peaks.size()) == n) break;
      peaks.push_back(omega);
    }
  }
  for (Index i = 0; static_cast<Index>(peaks.size()) < n; ++i)
    peaks.push_back(0.1 * std::pow(100.0, static_cast<double>(i + 1) / static_cast<double>(n + 1)));
  std::sort(peaks.begin(), peaks.end());

  Vector d(n);
  for (Index i = 0; i < n; ++i) d(i) = peaks[static_cast<std::size_t>(i)];
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(2 * n);
  for (Index i = 0; i < 2 * n; ++i) v(i) = gauss(rng);
  v /= v.norm();
  return NormalFormParams(d, v);
}

struct FitOptions {
  int iters = 1500;
  double step_size = 0.02;
  std::uint64_t seed = 0;
  int restarts = 4;
  std::optional<NormalFormParams> init;
  // Levenberg-Marquardt refinement of each restart's result.
  int polish_iters = 60;
  // Frequency grid search applied to each restart's init (zero-x0 data only).
  int sweep_points = 120;
  int sweeps = 2;
  // Called with every iterate (after the parameter map), e.g. to assert invariants.
  std::function<void(const NormalFormParams&)> on_iterate;
};

struct FitResult {
  NormalFormParams params;
  std::vector<Vector> x0_estimates;
  std::vector<double> loss_history;
  double final_loss = 0.0;
  double final_rms = 0.0;
  CanonicalChart canonical_form;
  int best_restart = 0;
  bool divergence_warning = false;
  bool degenerate_data = false;
};

namespace detail {

// theta = (log d, v); every theta maps to d > 0.
inline NormalFormParams from_theta(const Vector& theta, Index n) {
  return NormalFormParams(theta.head(n).array().exp().matrix(), theta.tail(2 * n));
}

// Keeps log d inside [-30, log_dmax]. Frequencies above the sampling
// Nyquist limit alias under ZOH and are excluded.
inline void clamp_theta(Vector& theta, Index n, double log_dmax) {
  theta.head(n) = theta.head(n).cwiseMax(-30.0).cwiseMin(log_dmax);
}

inline Vector to_theta(const NormalFormParams& p) {
  Vector theta(3 * p.modes());
  theta << p.d.array().log().matrix(), p.v;
  return theta;
}

inline double fd_step(double x) { return 1e-6 * std::max(1.0, std::abs(x)); }

class Objective {
 public:
  Objective(const Dataset& ds, NormalForm mode) : ds_(ds), mode_(mode) {}

  Vector residuals(const Vector& theta) const {
    const NormalFormParams p = from_theta(theta, ds_.n);
    return loss_residuals(p, ds_, mode_, resolve_x0(p, ds_, mode_));
  }
  double value(const Vector& theta) const { return residuals(theta).squaredNorm(); }

  Vector gradient(const Vector& theta) const {
    Vector g(theta.size());
    Vector probe = theta;
    for (Index i = 0; i < theta.size(); ++i) {
      const double h = fd_step(theta(i));
      probe(i) = theta(i) + h;
      const double up = value(probe);
      probe(i) = theta(i) - h;
      const double down = value(probe);
      probe(i) = theta(i);
      g(i) = (up - down) / (2.0 * h);
    }
    return g;
  }

  Matrix jacobian(const Vector& theta, Index rows) const {
    Matrix jac(rows, theta.size());
    Vector probe = theta;
    for (Index i = 0; i < theta.size(); ++i) {
      const double h = fd_step(theta(i));
      probe(i) = theta(i) + h;
      const Vector up = residuals(probe);
      probe(i) = theta(i) - h;
      const Vector down = residuals(probe);
      probe(i) = theta(i);
      jac.col(i) = (up - down) / (2.0 * h);
    }
    return jac;
  }

 private:
  const Dataset& ds_;
  NormalForm mode_;
};

inline bool finite(double x) { return std::isfinite(x); }

// Lawson-Hanson non-negative least squares: argmin ||a x - b|| s.t. x >= 0.
inline Vector nnls(const Matrix& a, const Vector& b) {
  const Index n = a.cols();
  Vector x = Vector::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol = 1e-12 * std::max(1.0, a.norm() * b.norm());
  const auto solve_passive = [&](const std::vector<Index>& idx) {
    Matrix sub(a.rows(), static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) sub.col(static_cast<Index>(k)) = a.col(idx[k]);
    const Vector z_sub = sub.colPivHouseholderQr().solve(b);
    Vector z = Vector::Zero(n);
    for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = z_sub(static_cast<Index>(k));
    return z;
  };
  for (int outer = 0; outer < 3 * n + 10; ++outer) {
    const Vector w = a.transpose() * (b - a * x);
    Index best = -1;
    for (Index j = 0; j < n; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w(j) > tol && (best < 0 || w(j) > w(best)))
        best = j;
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;
    for (int inner = 0; inner < 3 * n + 10; ++inner) {
      std::vector<Index> idx;
      for (Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
      const Vector z = solve_passive(idx);
      bool feasible = true;
      for (Index j : idx)
        if (!(z(j) > 0.0)) feasible = false;
      if (feasible) {
        x = z;
        break;
      }
      double alpha = 1.0;
      for (Index j : idx)
        if (!(z(j) > 0.0)) alpha = std::min(alpha, x(j) / (x(j) - z(j)));
      x += alpha * (z - x);
      for (Index j : idx)
        if (x(j) <= 1e-15) {
          x(j) = 0.0;
          passive[static_cast<std::size_t>(j)] = false;
        }
    }
  }
  return x;
}

// Non-negative least-squares squared radii for fixed d (zero initial
// states); each mode keeps its phase angle from p.
inline NormalFormParams fit_radii(const NormalFormParams& p, const Dataset& ds, NormalForm mode) {
  const Index n = p.modes();
  Index rows = 0;
  for (const Trajectory& t : ds.trajectories) rows += t.grid.count;
  const Vector target = -loss_residuals(NormalFormParams(p.d, Vector::Zero(2 * n)), ds, mode, {});
  Matrix basis(rows, n);
  for (Index l = 0; l < n; ++l) {
    Vector unit = Vector::Zero(2 * n);
    unit(l) = 1.0;
    basis.col(l) = loss_residuals(NormalFormParams(p.d, unit), ds, mode, {}) + target;
  }
  if (!basis.allFinite() || !target.allFinite()) return p;
  const Vector m = nnls(basis, target);
  Vector v = p.v;
  for (Index l = 0; l < n; ++l) {
    const double r = std::sqrt(std::max(m(l), 0.0));
    const double angle = std::atan2(p.v(n + l), p.v(l));
    v(l) = r * std::cos(angle);
    v(n + l) = r * std::sin(angle);
  }
  if (!v.allFinite()) return p;
  return NormalFormParams(p.d, v);
}

// Coordinate sweeps: each d_i in turn takes the value with the lowest loss
// (radii refit) over a log-spaced grid, then over a finer grid spanning one
// coarse step on either side. With `greedy`, modes are first introduced one
// at a time: each new d is swept over the grid, after which all current
// modes are refined locally.
inline NormalFormParams sweep_frequencies(NormalFormParams p, const Dataset& ds, NormalForm mode,
                                          double omega_lo, double omega_hi, int points,
                                          int sweeps, bool greedy = false) {
  const Index n = p.modes();
  const double ratio =
      std::pow(omega_hi / omega_lo, 1.0 / static_cast<double>(std::max(points - 1, 1)));
  const auto grid = [&](int k) { return omega_lo * std::pow(ratio, static_cast<double>(k)); };

  NormalFormParams cur = p;
  double best = 0.0;
  const auto try_value = [&](Index i, double omega) {
    Vector d = cur.d;
    d(i) = omega;
    const NormalFormParams cand = fit_radii(NormalFormParams(d, cur.v), ds, mode);
    const double value = loss(cand, ds, mode, {});
    if (std::isfinite(value) && value < best) {
      best = value;
      cur = cand;
    }
  };
  const auto refine = [&](Index modes) {
    for (int round = 0; round < 2; ++round)
      for (Index i = 0; i < modes; ++i) {
        const double centre = cur.d(i);
        for (int k = -10; k <= 10; ++k)
          try_value(i, centre * std::pow(ratio, static_cast<double>(k) / 10.0));
      }
  };

  if (greedy) {
    for (Index k = 1; k <= n; ++k) {
      Vector d(k), v = Vector::Zero(2 * k);
      d.head(k - 1) = cur.d.head(k - 1);
      v.head(k - 1) = cur.v.head(k - 1);
      v.segment(k, k - 1) = cur.v.segment(cur.modes(), k - 1);
      d(k - 1) = grid(0);
      v(k - 1) = 1.0;
      cur = fit_radii(NormalFormParams(d, v), ds, mode);
      best = loss(cur, ds, mode, {});
      for (int j = 1; j < points; ++j) try_value(k - 1, grid(j));
      refine(k);
    }
  } else {
    cur = fit_radii(cur, ds, mode);
    best = loss(cur, ds, mode, {});
  }
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (Index i = 0; i < n; ++i)
      for (int k = 0; k < points; ++k) try_value(i, grid(k));
    refine(n);
  }
  return cur;
}

}  // namespace detail

/// Structure-preserving fit of normal-form parameters. Optimizes
/// theta = (log d, v), so every iterate is a valid (d, v) with d > 0.
/// Per restart: seeded init (periodogram peaks, jittered after the first
/// restart), amplitude rescaling of v, Adam on finite-difference gradients,
/// then Levenberg-Marquardt refinement. The lowest final loss wins; ties
/// go to the earlier restart.
inline FitResult fit(const Dataset& ds, NormalForm mode, const FitOptions& opts = {}) {
  ds.validate();
  const Index n = ds.n;
  Index longest = 0;
  double dt_max = 0.0;
  for (const Trajectory& t : ds.trajectories) {
    longest = std::max(longest, t.grid.count);
    dt_max = std::max(dt_max, t.grid.dt);
  }
  const double log_dmax = std::log(0.9 * std::numbers::pi / dt_max);
  double span_min = std::numeric_limits<double>::infinity();
  for (const Trajectory& t : ds.trajectories) span_min = std::min(span_min, t.grid.span());
  const double omega_hi = std::min(0.9 * std::numbers::pi / dt_max, 100.0);
  const double omega_lo = std::min(0.5 * std::numbers::pi / std::max(span_min, dt_max), 0.1 * omega_hi);
  if (longest < 4 * n) {
    std::ostringstream os;
    os << "fit: need a trajectory with at least " << 4 * n << " samples";
    throw InvalidArgument(os.str());
  }

  bool degenerate = true;
  for (const Trajectory& t : ds.trajectories)
    if (t.y.size() && t.y.cwiseAbs().maxCoeff() > 0.0) degenerate = false;

  const detail::Objective obj(ds, mode);
  Index rows = 0;
  for (const Trajectory& t : ds.trajectories) rows += t.grid.count;

  std::optional<FitResult> best;
  bool any_divergence = false;
  const int restarts = std::max(1, opts.restarts);

  for (int restart = 0; restart < restarts; ++restart) {
    const std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(restart);
    NormalFormParams start = (restart == 0 && opts.init) ? *opts.init : init_params(ds, n, seed);
    if (restart > 0 && !opts.init) {
      std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
      std::normal_distribution<double> jitter(0.0, 0.25);
      for (Index i = 0; i < n; ++i) start.d(i) *= std::exp(jitter(rng));
    }

    // With zero initial states the output is linear in the squared mode
    // radii, so given d the best radii solve a linear least-squares problem.
    if (ds.x0_policy == X0Policy::Zero)
      start = detail::sweep_frequencies(start, ds, mode, omega_lo, omega_hi, opts.sweep_points,
                                        opts.sweeps, restart == 0 && !opts.init);

    Vector theta = detail::to_theta(start);
    detail::clamp_theta(theta, n, log_dmax);
    std::vector<double> history;
    double current = obj.value(theta);
    Vector best_theta = theta;
    double best_value = current;
    bool diverged = !detail::finite(current);

    Vector m1 = Vector::Zero(theta.size()), m2 = Vector::Zero(theta.size());
    const double beta1 = 0.9, beta2 = 0.999;
    for (int it = 0; it < opts.iters && !diverged; ++it) {
      const Vector g = obj.gradient(theta);
      if (!g.allFinite()) {
        diverged = true;
        break;
      }
      m1 = beta1 * m1 + (1.0 - beta1) * g;
      m2 = beta2 * m2 + (1.0 - beta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1, it + 1);
      const double c2 = 1.0 - std::pow(beta2, it + 1);
      const double lr = opts.step_size / (1.0 + 10.0 * it / std::max(1, opts.iters));
      const Vector denom = (m2 / c2).cwiseSqrt().array() + 1e-300;
      theta -= lr * (m1 / c1).cwiseQuotient(denom);
      detail::clamp_theta(theta, n, log_dmax);
      current = obj.value(theta);
      if (opts.on_iterate) opts.on_iterate(detail::from_theta(theta, n));
      if (!detail::finite(current)) {
        diverged = true;
        break;
      }
      history.push_back(current);
      if (current < best_value) {
        best_value = current;
        best_theta = theta;
      }
    }

    // Levenberg-Marquardt on the residual vector from the best Adam iterate.
    theta = best_theta;
    Vector res = obj.residuals(theta);
    double value = res.squaredNorm();
    double lambda = 1e-3;
    for (int it = 0; it < opts.polish_iters && detail::finite(value) && value > 0.0; ++it) {
      const Matrix jac = obj.jacobian(theta, rows);
      if (!jac.allFinite()) break;
      const Matrix jtj = jac.transpose() * jac;
      const Vector jtr = jac.transpose() * res;
      bool improved = false;
      for (int tries = 0; tries < 12; ++tries) {
        Matrix lhs = jtj;
        lhs.diagonal() += lambda * (jtj.diagonal().array() + 1e-12 * jtj.diagonal().maxCoeff()).matrix();
        const Vector step = lhs.ldlt().solve(-jtr);
        Vector cand = theta + step;
        detail::clamp_theta(cand, n, log_dmax);
        const Vector cres = obj.residuals(cand);
        const double cval = cres.squaredNorm();
        if (detail::finite(cval) && cval < value) {
          const double gain = (value - cval) / value;
          theta = cand;
          res = cres;
          value = cval;
          lambda = std::max(lambda / 3.0, 1e-12);
          improved = true;
          if (opts.on_iterate) opts.on_iterate(detail::from_theta(theta, n));
          history.push_back(value);
          if (gain < 1e-12) it = opts.polish_iters;
          break;
        }
        lambda *= 4.0;
      }
      if (!improved) break;
    }
    if (value < best_value) {
      best_value = value;
      best_theta = theta;
    }
    any_divergence = any_divergence || diverged;
    if (!detail::finite(best_value)) continue;

    if (!best || best_value < best->final_loss) {
      const NormalFormParams p = detail::from_theta(best_theta, n);
      FitResult r{p, {}, std::move(history), best_value, 0.0, canonicalize(p), restart,
                  false, degenerate};
      best = std::move(r);
    }
  }

  if (!best) {
    // Every restart diverged: report the last init with a warning.
    const NormalFormParams p = init_params(ds, n, opts.seed);
    best = FitResult{p, {}, {}, 0.0, 0.0, canonicalize(p), 0, true, degenerate};
  }
  FitResult out = std::move(*best);
  out.divergence_warning = out.divergence_warning || any_divergence;
  out.x0_estimates = resolve_x0(out.params, ds, mode);
  out.final_loss = loss(out.params, ds, mode, out.x0_estimates);
  out.final_rms = std::sqrt(out.final_loss);
  return out;
}

}  // namespace phlearn
