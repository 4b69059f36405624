#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "phlearn/error.hpp"
#include "phlearn/linalg.hpp"
#include "phlearn/symplectic.hpp"
#include "phlearn/systems.hpp"
#include "phlearn/types.hpp"

namespace phlearn {

/// Uniform sampling grid t_k = t0 + k dt, k = 0..count-1.
struct Grid {
  double t0 = 0.0;
  double dt = 1e-3;
  Index count = 0;

  double time(Index k) const { return t0 + static_cast<double>(k) * dt; }
  double span() const { return static_cast<double>(count > 0 ? count - 1 : 0) * dt; }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("Grid: dt must be positive");
    if (count < 1) throw InvalidArgument("Grid: count must be >= 1");
  }

  bool operator==(const Grid&) const = default;
};

/// Grid covering [t0, t1] inclusive: round((t1 - t0) / dt) + 1 samples.
inline Grid make_grid(double t0, double t1, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("make_grid: dt must be positive");
  if (!(t1 >= t0)) throw InvalidArgument("make_grid: t1 must be >= t0");
  return Grid{t0, dt, static_cast<Index>(std::llround((t1 - t0) / dt)) + 1};
}

enum class SignalKind { Zero, Step, Sine, Chirp, Prbs, Samples };

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Index of the hold interval containing t; tolerant of grid rounding.
inline long long hold_index(double t, double t0, double period) {
  return static_cast<long long>(std::floor((t - t0) / period + 1e-9));
}

}  // namespace detail

/// Scalar input u(t). Times are absolute; t0 marks the signal origin.
///   zero            u = 0
///   step            u = amplitude for t >= t0
///   sine            u = amplitude sin(omega (t - t0))
///   chirp           u = amplitude sin(w0 tau + (w1 - w0) tau^2 / (2 T)), tau = t - t0
///   prbs            +-amplitude, constant on [t0 + k period, t0 + (k+1) period)
///   samples         samples[k] held on [t0 + k period, t0 + (k+1) period)
struct InputSignal {
  SignalKind kind = SignalKind::Zero;
  double amplitude = 1.0;
  double omega = 1.0;
  double w0 = 0.0;
  double w1 = 1.0;
  double duration = 1.0;
  double period = 1.0;
  double t0 = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> samples;

  static InputSignal zero() { return InputSignal{}; }
  static InputSignal step(double amplitude) {
    InputSignal s;
    s.kind = SignalKind::Step;
    s.amplitude = amplitude;
    return s;
  }
  static InputSignal sine(double omega, double amplitude = 1.0) {
    InputSignal s;
    s.kind = SignalKind::Sine;
    s.omega = omega;
    s.amplitude = amplitude;
    return s;
  }
  static InputSignal chirp(double w0, double w1, double duration, double amplitude = 1.0) {
    if (!(duration > 0.0)) throw InvalidArgument("chirp: duration must be positive");
    InputSignal s;
    s.kind = SignalKind::Chirp;
    s.w0 = w0;
    s.w1 = w1;
    s.duration = duration;
    s.amplitude = amplitude;
    return s;
  }
  static InputSignal prbs(std::uint64_t seed, double period, double amplitude = 1.0) {
    if (!(period > 0.0)) throw InvalidArgument("prbs: period must be positive");
    InputSignal s;
    s.kind = SignalKind::Prbs;
    s.seed = seed;
    s.period = period;
    s.amplitude = amplitude;
    return s;
  }
  static InputSignal from_samples(std::vector<double> samples, double period, double t0 = 0.0) {
    if (!(period > 0.0)) throw InvalidArgument("samples: period must be positive");
    if (samples.empty()) throw InvalidArgument("samples: empty sample vector");
    InputSignal s;
    s.kind = SignalKind::Samples;
    s.samples = std::move(samples);
    s.period = period;
    s.t0 = t0;
    return s;
  }

  double operator()(double t) const {
    const double tau = t - t0;
    switch (kind) {
      case SignalKind::Zero: return 0.0;
      case SignalKind::Step: return tau >= 0.0 ? amplitude : 0.0;
      case SignalKind::Sine: return amplitude * std::sin(omega * tau);
      case SignalKind::Chirp:
        return amplitude * std::sin(w0 * tau + 0.5 * (w1 - w0) * tau * tau / duration);
      case SignalKind::Prbs: {
        const long long k = detail::hold_index(t, t0, period);
        const auto bits = detail::splitmix64(seed ^ detail::splitmix64(static_cast<std::uint64_t>(k)));
        return (bits & 1ULL) ? amplitude : -amplitude;
      }
      case SignalKind::Samples: {
        long long k = detail::hold_index(t, t0, period);
        const long long last = static_cast<long long>(samples.size()) - 1;
        k = std::clamp(k, 0LL, last);
        return samples[static_cast<std::size_t>(k)];
      }
    }
    return 0.0;
  }
};

/// Parses the input DSL: zero | step:A | sin:OMEGA[:A] | chirp:W0:W1[:A] | prbs:SEED[:A].
/// Chirp sweeps over the grid span; PRBS holds each value for one grid step.
inline InputSignal parse_input(const std::string& spec, const Grid& grid) {
  std::vector<std::string> parts;
  std::string cur;
  for (const char ch : spec) {
    if (ch == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);

  const auto number = [&](std::size_t i) {
    try {
      std::size_t used = 0;
      const double x = std::stod(parts.at(i), &used);
      if (used != parts[i].size()) throw std::invalid_argument("trailing");
      return x;
    } catch (const std::exception&) {
      throw InvalidArgument("input '" + spec + "': bad numeric field " + std::to_string(i));
    }
  };
  const auto arity = [&](std::size_t lo, std::size_t hi) {
    if (parts.size() < lo || parts.size() > hi)
      throw InvalidArgument("input '" + spec + "': wrong number of fields");
  };

  InputSignal s;
  const std::string& head = parts[0];
  if (head == "zero") {
    arity(1, 1);
    s = InputSignal::zero();
  } else if (head == "step") {
    arity(2, 2);
    s = InputSignal::step(number(1));
  } else if (head == "sin") {
    arity(2, 3);
    s = InputSignal::sine(number(1), parts.size() > 2 ? number(2) : 1.0);
  } else if (head == "chirp") {
    arity(3, 4);
    const double span = grid.span() > 0.0 ? grid.span() : grid.dt;
    s = InputSignal::chirp(number(1), number(2), span, parts.size() > 3 ? number(3) : 1.0);
  } else if (head == "prbs") {
    arity(2, 3);
    const double seed = number(1);
    if (seed < 0 || seed != std::floor(seed))
      throw InvalidArgument("input '" + spec + "': PRBS seed must be a non-negative integer");
    s = InputSignal::prbs(static_cast<std::uint64_t>(seed), grid.dt,
                          parts.size() > 2 ? number(2) : 1.0);
  } else {
    throw InvalidArgument("input '" + spec + "': unknown signal kind '" + head + "'");
  }
  s.t0 = grid.t0;
  return s;
}

/// Sampled record of one simulation or measurement. x is empty when states
/// were not recorded; otherwise count x dim.
struct Trajectory {
  Grid grid;
  Vector u;
  Vector y;
  Matrix x;

  bool has_states() const { return x.size() > 0; }
  Index size() const { return grid.count; }

  void validate() const {
    grid.validate();
    if (u.size() != grid.count || y.size() != grid.count ||
        (has_states() && x.rows() != grid.count))
      throw InvalidArgument("Trajectory: sample counts disagree with the grid");
  }

  // Input as a zero-order-hold signal on the trajectory grid.
  InputSignal input_signal() const {
    return InputSignal::from_samples(std::vector<double>(u.data(), u.data() + u.size()), grid.dt,
                                     grid.t0);
  }
};

enum class Method { ZohExact, Rk4 };

/// Exact zero-order-hold discretization x+ = E x + G u over one step.
struct Discretization {
  Matrix E;
  Vector G;
};

/// E = exp(A dt), G = int_0^dt exp(A s) ds B, both read off the exponential
/// of the augmented matrix [[A, B], [0, 0]] dt. Valid for singular A.
inline Discretization discretize_zoh(const RealizedLTI& r, double dt) {
  const Index m = r.dim();
  Matrix aug = Matrix::Zero(m + 1, m + 1);
  aug.topLeftCorner(m, m) = r.A * dt;
  aug.topRightCorner(m, 1) = r.B * dt;
  const Matrix e = expm(aug);
  return Discretization{e.topLeftCorner(m, m), e.topRightCorner(m, 1)};
}

struct SimOptions {
  Method method = Method::ZohExact;
  bool record_states = true;
};

/// Simulates x' = A x + B u, y = C x on the grid. zoh_exact holds u at the
/// left endpoint of each step; rk4 evaluates u continuously.
/// Throws NumericalError with the step index when the state stops being finite.
inline Trajectory simulate(const RealizedLTI& r, const Vector& x0, const InputSignal& input,
                           const Grid& grid, SimOptions opts = {}) {
  r.validate();
  grid.validate();
  const Index m = r.dim();
  if (x0.size() != m) {
    std::ostringstream os;
    os << "simulate: initial state has length " << x0.size() << ", expected " << m;
    throw InvalidArgument(os.str());
  }

  Trajectory out;
  out.grid = grid;
  out.u.resize(grid.count);
  out.y.resize(grid.count);
  if (opts.record_states) out.x.resize(grid.count, m);

  Vector x = x0;
  const auto record = [&](Index k) {
    if (!x.allFinite()) {
      std::ostringstream os;
      os << "simulate: non-finite state at step " << k;
      throw NumericalError(os.str());
    }
    out.y(k) = r.C.dot(x);
    if (opts.record_states) out.x.row(k) = x.transpose();
  };

  const double dt = grid.dt;
  if (opts.method == Method::ZohExact) {
    const Discretization disc = discretize_zoh(r, dt);
    for (Index k = 0; k < grid.count; ++k) {
      const double u = input(grid.time(k));
      out.u(k) = u;
      record(k);
      if (k + 1 < grid.count) x = disc.E * x + disc.G * u;
    }
  } else {
    Vector k1(m), k2(m), k3(m), k4(m);
    for (Index k = 0; k < grid.count; ++k) {
      const double t = grid.time(k);
      out.u(k) = input(t);
      record(k);
      if (k + 1 == grid.count) break;
      const double um = input(t + 0.5 * dt);
      k1.noalias() = r.A * x + r.B * out.u(k);
      k2.noalias() = r.A * (x + 0.5 * dt * k1) + r.B * um;
      k3.noalias() = r.A * (x + 0.5 * dt * k2) + r.B * um;
      k4.noalias() = r.A * (x + dt * k3) + r.B * input(t + dt);
      x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return out;
}

/// Quadratic Hamiltonian 1/2 x^T Q x of a PH realization (Q = -J A).
inline double energy(const RealizedLTI& r, const Vector& x) {
  if (r.tag != RealizationTag::PH) throw InvalidArgument("energy: realization is not tagged PH");
  r.validate();
  if (x.size() != r.dim()) throw InvalidArgument("energy: state dimension mismatch");
  const Matrix q = -canonical_j(r.dim() / 2) * r.A;
  return 0.5 * x.dot(q * x);
}

struct TrajectoryDiff {
  double max_abs = 0.0;
  double rms = 0.0;
};

/// Output differences only; states may live in different coordinates.
inline TrajectoryDiff compare_trajectories(const Trajectory& a, const Trajectory& b) {
  if (a.grid.count != b.grid.count ||
      std::abs(a.grid.dt - b.grid.dt) > 1e-12 * std::max(a.grid.dt, b.grid.dt) ||
      std::abs(a.grid.t0 - b.grid.t0) > 1e-12 * std::max({1.0, std::abs(a.grid.t0)}))
    throw InvalidArgument("compare_trajectories: grids differ");
  const Vector diff = a.y - b.y;
  TrajectoryDiff out;
  if (diff.size() == 0) return out;
  out.max_abs = diff.cwiseAbs().maxCoeff();
  out.rms = std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()));
  return out;
}

}  // namespace phlearn
