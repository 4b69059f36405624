// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "test_util.hpp"

using namespace phlearn;
using namespace phlearn::testing;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1. Williamson decomposition on random SPD matrices.
Outcome williamson_suite() {
  const auto t0 = Clock::now();
  double recon = 0.0, sympl = 0.0, invariance = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Index n = 1 + static_cast<Index>(seed % 5);
    const Matrix m = random_spd(n, seed);
    const WilliamsonForm wf = williamson(SpdMatrix(m));
    const Matrix& s = wf.S.matrix();
    recon = std::max(recon, (s.transpose() * block_diag2(wf.d) * s - m).norm() / m.norm());
    sympl = std::max(sympl, SymplecticMatrix::symplectic_defect(s));
    const Matrix p = random_symplectic(n, seed + 5000).matrix();
    Matrix pm = p.transpose() * m * p;
    pm = 0.5 * (pm + pm.transpose()).eval();
    const Vector d2 = symplectic_eigenvalues(SpdMatrix(pm));
    invariance = std::max(invariance, (d2 - wf.d).cwiseAbs().maxCoeff() / wf.d.maxCoeff());
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = recon <= 1e-8 && sympl <= 1e-8 && invariance <= 1e-6 && secs < 10.0;
  o.detail = "reconstruction " + fmt("%.2e", recon) + ", symplecticity " + fmt("%.2e", sympl) +
             ", congruence " + fmt("%.2e", invariance) + ", " + fmt("%.2f s", secs);
  return o;
}

// 2. Closed-form output pattern against the morphism identities.
Outcome closed_form_suite() {
  const auto t0 = Clock::now();
  double worst_ch = 0.0, worst_oh = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Index n = 1 + static_cast<Index>(seed % 4);
    const NormalFormParams p = random_params(n, seed);
    const SymplecticMatrix s = random_symplectic(n, seed + 300, 0.5);
    const PHSystem ph = phi_s(p, s).ph;
    const LinearMorphism l = ch_to_ph_morphism(p, s, false);
    const RowVector pattern = output_pattern(p);
    const double scale = std::max(1.0, pattern.norm());
    const RowVector btql = ph.B.transpose() * ph.Q.matrix() * l.matrix;
    worst_ch = std::max(worst_ch, (btql - pattern).norm() / scale);
    const PhToOh m = ph_to_oh_morphism(ph, false);
    const Vector mb = m.morphism.matrix * ph.B;
    worst_oh = std::max(worst_oh, (mb - output_pattern(m.params).transpose()).norm() /
                                      std::max(1.0, output_pattern(m.params).norm()));
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_ch <= 1e-8 && worst_oh <= 1e-8 && secs < 10.0;
  o.detail = "B^T Q L " + fmt("%.2e", worst_ch) + ", M B " + fmt("%.2e", worst_oh) + ", " +
             fmt("%.2f s", secs);
  return o;
}

// 3. Characteristic polynomial of JQ against the closed-form coefficients.
Outcome charpoly_suite() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Index n = 1 + static_cast<Index>(seed % 5);
    const NormalFormParams p = random_params(n, seed);
    const PHSystem ph = phi_s(p, random_symplectic(n, seed + 11, 0.5)).ph;
    const Vector cp = charpoly(realize_ph(ph).A);
    const Vector a = char_coeffs(p.d);
    worst = std::max(worst, (cp.head(2 * n) - a).cwiseAbs().maxCoeff() /
                                std::max(1.0, a.cwiseAbs().maxCoeff()));
  }
  Outcome o;
  o.pass = worst <= 1e-8;
  o.detail = "relative coefficient error " + fmt("%.2e", worst);
  return o;
}

// 4. Trajectory transport through the morphisms.
Outcome transport_suite() {
  const auto t0 = Clock::now();
  const Grid g = make_grid(0.0, 10.0, 1e-3);
  double worst_ch = 0.0, worst_oh = 0.0;
  int systems = 0;
  const std::vector<std::pair<SynthKind, Index>> cases = {
      {SynthKind::Canonical, 1}, {SynthKind::Canonical, 2}, {SynthKind::Canonical, 3},
      {SynthKind::RepeatedD, 2}, {SynthKind::RepeatedD, 3}, {SynthKind::ZeroModes, 2},
      {SynthKind::ZeroModes, 3}};
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto [kind, n] = cases[c];
    const Synthesis s = generate(n, 40 + c, kind);
    const RealizedLTI ph = realize_ph(s.ph);
    ++systems;
    if (kind == SynthKind::Canonical) {
      const LinearMorphism l = ch_to_ph_morphism(s.params, s.S);
      const RealizedLTI ch = build_ch(s.params);
      std::mt19937_64 rng(c);
      std::normal_distribution<double> gauss(0.0, 1.0);
      Vector s0(2 * n);
      for (Index i = 0; i < 2 * n; ++i) s0(i) = gauss(rng);
      for (const InputSignal& u : {InputSignal::sine(1.3), InputSignal::prbs(c + 1, 0.05)}) {
        const Trajectory a = simulate(ph, l.matrix * s0, u, g);
        const Trajectory b = simulate(ch, s0, u, g);
        worst_ch = std::max(worst_ch, compare_trajectories(a, b).max_abs);
      }
    }
    const PhToOh m = ph_to_oh_morphism(s.ph);
    const RealizedLTI oh = build_oh(m.params);
    for (std::uint64_t k = 0; k < 10; ++k) {
      const Vector x0 = random_matrix(2 * n, 1, 1000 * c + k);
      const InputSignal u = k % 2 ? InputSignal::sine(0.7 + 0.1 * static_cast<double>(k))
                                  : InputSignal::prbs(k, 0.05);
      const Trajectory a = simulate(ph, x0, u, g);
      const Trajectory b = simulate(oh, m.morphism.matrix * x0, u, g);
      worst_oh = std::max(worst_oh, compare_trajectories(a, b).max_abs);
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_ch <= 1e-6 && worst_oh <= 1e-6 && secs < 60.0;
  o.detail = std::to_string(systems) + " systems, PH vs CH " + fmt("%.2e", worst_ch) +
             ", PH vs OH " + fmt("%.2e", worst_oh) + ", " + fmt("%.2f s", secs);
  return o;
}

// 5. Three canonicality tests agree on generated systems.
Outcome canonicality_suite() {
  int disagreements = 0, wrong_kind = 0, total = 0;
  const std::vector<std::pair<SynthKind, int>> plan = {
      {SynthKind::Canonical, 100}, {SynthKind::RepeatedD, 50}, {SynthKind::ZeroModes, 50}};
  for (const auto& [kind, count] : plan) {
    for (int i = 0; i < count; ++i) {
      const Index n = kind == SynthKind::RepeatedD ? 2 + i % 3 : 1 + i % 4;
      const Synthesis s = generate(n, 7000 + static_cast<std::uint64_t>(i), kind);
      const CanonicalityReport rep = is_canonical(s.ph, 1e-8);
      const bool full_rank = ch_to_ph_morphism(s.params, s.S, false).rank == 2 * n;
      if (rep.canonical != full_rank || full_rank != rep.normal_form_criterion) ++disagreements;
      if (rep.canonical != (kind == SynthKind::Canonical)) ++wrong_kind;
      ++total;
    }
  }
  Outcome o;
  o.pass = disagreements == 0;
  o.detail = std::to_string(total) + " systems, " + std::to_string(disagreements) +
             " disagreements, " + std::to_string(wrong_kind) + " differ from the generator kind";
  return o;
}

// 6. Identifiability: witness soundness, canonical completeness, torus invariance.
Outcome identifiability_suite() {
  double worst_witness = 0.0, worst_rotation = 0.0;
  int mismatches = 0, positives = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Index n = 1 + static_cast<Index>(seed % 4);
    const NormalFormParams p1 = generate(n, seed, SynthKind::Canonical).params;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    Vector angles(n);
    for (Index i = 0; i < n; ++i) angles(i) = angle(rng);
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix ps = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) ps(i, perm[static_cast<std::size_t>(i)]) = 1.0;

    const Vector rotated = rotate_modes(p1.v, angles);
    const Vector c0 = output_coeffs(p1);
    worst_rotation = std::max(worst_rotation, (output_coeffs(NormalFormParams(p1.d, rotated)) - c0)
                                                      .cwiseAbs()
                                                      .maxCoeff() /
                                                  std::max(1.0, c0.cwiseAbs().maxCoeff()));

    NormalFormParams p2(ps * p1.d, permutation_block(ps) * rotated);
    if (seed % 4 == 1) p2.v *= 1.001;
    if (seed % 4 == 3) p2 = generate(n, seed + 500, SynthKind::Canonical).params;
    const StarResult r = star_equivalent(p1, p2);
    const bool charts = charts_equal(canonicalize(p1), canonicalize(p2), 1e-9);
    if (r.equivalent() != charts || r.verdict == Verdict::Undetermined) ++mismatches;
    if (r.equivalent()) {
      ++positives;
      worst_witness = std::max(worst_witness, star_residuals(p1, p2, *r.witness).max());
    }
  }
  Outcome o;
  o.pass = worst_witness <= 1e-8 && mismatches == 0 && worst_rotation <= 1e-10;
  o.detail = "200 pairs (" + std::to_string(positives) + " equivalent), " +
             std::to_string(mismatches) + " completeness mismatches, witness " +
             fmt("%.2e", worst_witness) + ", rotation " + fmt("%.2e", worst_rotation);
  return o;
}

// 7. Learning recovers (d, r) from chirp data.
Outcome learning_suite() {
  std::vector<std::pair<NormalFormParams, SymplecticMatrix>> cases;
  cases.emplace_back(NormalFormParams(vec({1.0}), vec({1.0, 0.0})), SymplecticMatrix::identity(1));
  for (std::uint64_t seed : {1, 2}) {
    const Synthesis s = generate(1, seed, SynthKind::Canonical);
    cases.emplace_back(s.params, s.S);
  }
  cases.emplace_back(NormalFormParams(vec({0.8, 1.9}), vec({0.7, -0.4, 0.5, 0.9})),
                     random_symplectic(2, 3, 0.5));
  for (std::uint64_t seed : {1, 2}) {
    const Synthesis s = generate(2, seed, SynthKind::Canonical);
    cases.emplace_back(s.params, s.S);
  }
  const Grid g{0.0, 5e-3, 2000};
  const InputSignal u = InputSignal::chirp(0.1, 5.0, g.span());
  Outcome o;
  double worst_param = 0.0, worst_rms = 0.0, slowest = 0.0;
  for (const auto& [truth, s] : cases) {
    const Index n = truth.modes();
    Dataset ds;
    ds.n = n;
    ds.trajectories = {simulate(realize_ph(phi_s(truth, s).ph), Vector::Zero(2 * n), u, g)};
    FitOptions opts;
    opts.restarts = 4;
    const auto t0 = Clock::now();
    const FitResult r = fit(ds, NormalForm::CH, opts);
    slowest = std::max(slowest, seconds_since(t0));
    const CanonicalChart c = canonicalize(truth);
    worst_param = std::max({worst_param, (r.canonical_form.d_sorted - c.d_sorted).cwiseAbs().maxCoeff(),
                            (r.canonical_form.r - c.r).cwiseAbs().maxCoeff()});
    worst_rms = std::max(worst_rms, r.final_rms);
  }
  o.pass = worst_param <= 1e-2 && worst_rms <= 1e-4 && slowest < 120.0;
  o.detail = std::to_string(cases.size()) + " cases, (d, r) error " + fmt("%.2e", worst_param) +
             ", rms " + fmt("%.2e", worst_rms) + ", slowest " + fmt("%.2f s", slowest);
  return o;
}

// 8. Parameter counts of the normal form against the full PH model.
Outcome parameter_count_suite() {
  Outcome o;
  for (Index n = 1; n <= 50; ++n) {
    const NormalFormParams p(Vector::LinSpaced(n, 1.0, 2.0), Vector::Ones(2 * n));
    const PHSystem ph = phi_s(p, SymplecticMatrix::identity(n)).ph;
    const long long full = n * (2 * n + 1) + 2 * n;
    const long long q_entries = ph.Q.dim() * (ph.Q.dim() + 1) / 2 + ph.B.size();
    if (p.parameter_count() != 3 * n || normal_form_parameter_count(n) != 3 * n ||
        ph_parameter_count(n) != full || q_entries != full)
      o.pass = false;
  }
  o.detail = "n = 1..50, 3n vs n(2n+1)+2n (n = 50: " +
             std::to_string(normal_form_parameter_count(50)) + " vs " +
             std::to_string(ph_parameter_count(50)) + ")";
  return o;
}

// 9. Energy conservation of the unforced exact discretization.
Outcome energy_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Index n = 1 + static_cast<Index>(seed);
    const Synthesis s = generate(n, 900 + seed, SynthKind::Canonical);
    const RealizedLTI r = realize_ph(s.ph);
    const Vector x0 = random_matrix(2 * n, 1, seed);
    const Grid g{0.0, 1e-3, 100001};
    const Trajectory t =
        simulate(r, x0, InputSignal::zero(), g, SimOptions{Method::ZohExact, true});
    const double e0 = energy(r, x0);
    for (Index k = 0; k < g.count; ++k)
      worst = std::max(worst, std::abs(energy(r, t.x.row(k).transpose()) - e0) / e0);
  }
  Outcome o;
  o.pass = worst <= 1e-7;
  o.detail = "1e5 steps, relative drift " + fmt("%.2e", worst) + ", " +
             fmt("%.2f s", seconds_since(t0));
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"williamson decomposition", williamson_suite},
      {"closed-form output pattern", closed_form_suite},
      {"characteristic polynomial", charpoly_suite},
      {"trajectory transport", transport_suite},
      {"canonicality equivalence", canonicality_suite},
      {"identifiability", identifiability_suite},
      {"structure-preserving learning", learning_suite},
      {"parameter counts", parameter_count_suite},
      {"energy conservation", energy_suite},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = Outcome{false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
