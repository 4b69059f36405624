#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "phlearn/error.hpp"
#include "phlearn/morphisms.hpp"
#include "phlearn/symplectic.hpp"
#include "phlearn/systems.hpp"
#include "phlearn/types.hpp"

namespace phlearn {

enum class SynthKind { Canonical, RepeatedD, ZeroModes };

inline const char* to_string(SynthKind k) {
  switch (k) {
    case SynthKind::Canonical: return "canonical";
    case SynthKind::RepeatedD: return "repeated_d";
    case SynthKind::ZeroModes: return "zero_modes";
  }
  return "?";
}

inline SynthKind parse_synth_kind(const std::string& s) {
  if (s == "canonical") return SynthKind::Canonical;
  if (s == "repeated_d") return SynthKind::RepeatedD;
  if (s == "zero_modes") return SynthKind::ZeroModes;
  throw InvalidArgument("unknown system kind '" + s + "' (expected canonical, repeated_d, zero_modes)");
}

struct SynthOptions {
  double d_min = 0.5;
  double d_max = 3.0;
  // Minimum spacing between distinct d, shrunk when n modes do not fit.
  double d_gap = 0.15;
  double r_min = 0.2;
  double r_max = 1.5;
  // Scale of the generator of the random symplectic S.
  double s_scale = 0.5;
};

/// Ground truth (d, v, S) and the PH system phi_S(d, v).
struct Synthesis {
  SynthKind kind = SynthKind::Canonical;
  std::uint64_t seed = 0;
  NormalFormParams params;
  SymplecticMatrix S;
  PHSystem ph;
};

/// Seeded random PH system.
///   canonical:  distinct d in [d_min, d_max], every radius in [r_min, r_max]
///   repeated_d: as canonical, then d of one mode copied onto another (n >= 2)
///   zero_modes: as canonical, then one (v_l, v_{n+l}) pair set to zero
inline Synthesis generate(Index n, std::uint64_t seed, SynthKind kind,
                          const SynthOptions& opts = {}) {
  if (n < 1) throw InvalidArgument("generate: n must be >= 1");
  if (kind == SynthKind::RepeatedD && n < 2)
    throw InvalidArgument("generate: repeated_d needs n >= 2");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double width = opts.d_max - opts.d_min;
  const double gap = std::min(opts.d_gap, 0.5 * width / static_cast<double>(n));

  // n sorted points with pairwise spacing >= gap: uniform draws on the
  // shortened interval, then shift the i-th by i * gap.
  Vector d(n);
  for (Index i = 0; i < n; ++i) d(i) = unit(rng) * (width - gap * static_cast<double>(n - 1));
  std::sort(d.data(), d.data() + n);
  for (Index i = 0; i < n; ++i) d(i) += opts.d_min + gap * static_cast<double>(i);
  // Present the modes in a seeded order.
  std::shuffle(d.data(), d.data() + n, rng);

  Vector v(2 * n);
  for (Index l = 0; l < n; ++l) {
    const double r = opts.r_min + (opts.r_max - opts.r_min) * unit(rng);
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    v(l) = r * std::cos(angle);
    v(n + l) = r * std::sin(angle);
  }

  const Index a = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));
  if (kind == SynthKind::RepeatedD) {
    const Index b = (a + 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(n - 1))) % n;
    d(b) = d(a);
  } else if (kind == SynthKind::ZeroModes) {
    v(a) = 0.0;
    v(n + a) = 0.0;
  }

  const SymplecticMatrix s = random_symplectic(n, rng(), opts.s_scale);
  NormalFormParams p(d, v);
  PhiSImage image = phi_s(p, s);
  return Synthesis{kind, seed, std::move(p), std::move(image.S), std::move(image.ph)};
}

}  // namespace phlearn
