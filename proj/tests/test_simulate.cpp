#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace phlearn;
using namespace phlearn::testing;

namespace {

RealizedLTI unit_oscillator() {
  return realize_ph(PHSystem(SpdMatrix(Matrix::Identity(2, 2)), vec({1, 0})));
}

}  // namespace

TEST(Grid, MakeGridCountsInclusiveEndpoints) {
  EXPECT_EQ(make_grid(0.0, 10.0, 1e-3).count, 10001);
  EXPECT_EQ(make_grid(0.0, 9.995, 5e-3).count, 2000);
  EXPECT_EQ(make_grid(1.0, 1.0, 0.1).count, 1);
  EXPECT_THROW(make_grid(0.0, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(make_grid(1.0, 0.0, 0.1), InvalidArgument);
}

TEST(Simulate, HarmonicOscillatorZoh) {
  const Grid g = make_grid(0.0, 10.0, 1e-3);
  const Trajectory t = simulate(unit_oscillator(), vec({1, 0}), InputSignal::zero(), g);
  double err = 0.0;
  for (Index k = 0; k < g.count; ++k) err = std::max(err, std::abs(t.y(k) - std::cos(g.time(k))));
  EXPECT_LE(err, 1e-9);
}

TEST(Simulate, HarmonicOscillatorRk4) {
  const Grid g = make_grid(0.0, 10.0, 1e-3);
  const Trajectory t =
      simulate(unit_oscillator(), vec({1, 0}), InputSignal::zero(), g, SimOptions{Method::Rk4});
  double err = 0.0;
  for (Index k = 0; k < g.count; ++k) err = std::max(err, std::abs(t.y(k) - std::cos(g.time(k))));
  EXPECT_LE(err, 1e-6);
}

TEST(Simulate, EquilibriumStaysAtZero) {
  const RealizedLTI r = realize_ph(generate(3, 2, SynthKind::Canonical).ph);
  const Trajectory t = simulate(r, Vector::Zero(6), InputSignal::zero(), make_grid(0, 5, 1e-2));
  EXPECT_EQ(t.y.norm(), 0.0);
}

TEST(Simulate, Superposition) {
  const RealizedLTI r = realize_ph(generate(2, 8, SynthKind::Canonical).ph);
  const Grid g = make_grid(0, 10, 1e-2);
  const Vector x0 = Vector::Zero(4);
  const Trajectory a = simulate(r, x0, InputSignal::sine(1.3, 1.0), g);
  const Trajectory b = simulate(r, x0, InputSignal::prbs(4, g.dt, 1.0), g);
  Vector mixed(g.count);
  for (Index k = 0; k < g.count; ++k) mixed(k) = 2.0 * a.u(k) - 0.5 * b.u(k);
  const Trajectory c = simulate(r, x0, InputSignal::from_samples(
                                          std::vector<double>(mixed.data(), mixed.data() + g.count),
                                          g.dt, g.t0),
                                g);
  EXPECT_LE((c.y - (2.0 * a.y - 0.5 * b.y)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Simulate, RecordsStatesAndInputs) {
  const Grid g = make_grid(0, 1, 0.1);
  const Trajectory t = simulate(unit_oscillator(), vec({1, 0}), InputSignal::step(2.0), g);
  EXPECT_EQ(t.x.rows(), g.count);
  EXPECT_EQ(t.x.cols(), 2);
  EXPECT_EQ(t.u, Vector::Constant(g.count, 2.0));
  const Trajectory no_states =
      simulate(unit_oscillator(), vec({1, 0}), InputSignal::step(2.0), g, SimOptions{Method::ZohExact, false});
  EXPECT_FALSE(no_states.has_states());
  EXPECT_EQ(no_states.y, t.y);
}

TEST(Simulate, DeterministicBitwise) {
  const RealizedLTI r = realize_ph(generate(3, 1, SynthKind::Canonical).ph);
  const Grid g = make_grid(0, 10, 1e-2);
  for (Method m : {Method::ZohExact, Method::Rk4}) {
    const Trajectory a = simulate(r, Vector::Ones(6), InputSignal::chirp(0.1, 3, 10), g, {m});
    const Trajectory b = simulate(r, Vector::Ones(6), InputSignal::chirp(0.1, 3, 10), g, {m});
    EXPECT_EQ(a.y, b.y);
  }
}

TEST(Simulate, ZohMatchesStepResponseClosedForm) {
  // H(s) = s / (s^2 + 1): the unit step response is sin t.
  const RealizedLTI r = build_ch(NormalFormParams(vec({1}), vec({1, 0})));
  const Grid g = make_grid(0, 10, 0.05);
  const Trajectory t = simulate(r, Vector::Zero(2), InputSignal::step(1.0), g);
  for (Index k = 0; k < g.count; ++k) EXPECT_NEAR(t.y(k), std::sin(g.time(k)), 1e-12);
}

TEST(Simulate, ZohAndRk4AgreeToFourthOrder) {
  const RealizedLTI r = realize_ph(generate(2, 5, SynthKind::Canonical).ph);
  const auto discrepancy = [&](double dt) {
    const Grid g = make_grid(0, 5, dt);
    const Vector x0 = vec({0.3, -0.2, 0.5, 0.1});
    const Trajectory a = simulate(r, x0, InputSignal::zero(), g, {Method::ZohExact});
    const Trajectory b = simulate(r, x0, InputSignal::zero(), g, {Method::Rk4});
    return (a.y - b.y).cwiseAbs().maxCoeff();
  };
  const double ratio = discrepancy(0.04) / discrepancy(0.02);
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(Simulate, NonFiniteStateAborts) {
  RealizedLTI r;
  r.A = 400.0 * Matrix::Identity(2, 2);
  r.B = vec({0, 0});
  r.C = RowVector::Ones(2);
  r.tag = RealizationTag::CH;
  try {
    simulate(r, vec({1, 1}), InputSignal::zero(), make_grid(0, 10, 1.0));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(Simulate, RejectsDimensionMismatch) {
  EXPECT_THROW(simulate(unit_oscillator(), vec({1, 0, 0}), InputSignal::zero(), make_grid(0, 1, 0.1)),
               InvalidArgument);
}

TEST(Energy, Examples) {
  const RealizedLTI r = unit_oscillator();
  EXPECT_EQ(energy(r, Vector::Zero(2)), 0.0);
  EXPECT_DOUBLE_EQ(energy(r, vec({1, 0})), 0.5);
}

TEST(Energy, RejectsNonPhRealization) {
  EXPECT_THROW(energy(build_ch(random_params(1, 1)), vec({1, 0})), InvalidArgument);
}

TEST(Energy, ConservedWithoutInput) {
  const PHSystem ph = generate(3, 4, SynthKind::Canonical).ph;
  const RealizedLTI r = realize_ph(ph);
  const Vector x0 = vec({1, -0.5, 0.2, 0.3, 0.7, -1});
  const Trajectory t = simulate(r, x0, InputSignal::zero(), make_grid(0, 100, 1e-3));
  const double h0 = energy(r, x0);
  double drift = 0.0;
  for (Index k = 0; k < t.x.rows(); ++k)
    drift = std::max(drift, std::abs(energy(r, t.x.row(k).transpose()) - h0));
  EXPECT_LE(drift, 1e-7 * h0);
}

TEST(CompareTrajectories, SelfIsZero) {
  const Trajectory t =
      simulate(unit_oscillator(), vec({1, 0}), InputSignal::sine(2.0), make_grid(0, 5, 1e-2));
  const TrajectoryDiff d = compare_trajectories(t, t);
  EXPECT_EQ(d.max_abs, 0.0);
  EXPECT_EQ(d.rms, 0.0);
}

TEST(CompareTrajectories, ConstantShift) {
  const Trajectory a =
      simulate(unit_oscillator(), vec({1, 0}), InputSignal::zero(), make_grid(0, 5, 1e-2));
  Trajectory b = a;
  b.y.array() += 1.0;
  const TrajectoryDiff d = compare_trajectories(a, b);
  EXPECT_DOUBLE_EQ(d.max_abs, 1.0);
  EXPECT_NEAR(d.rms, 1.0, 1e-15);
}

TEST(CompareTrajectories, RejectsGridMismatch) {
  const Trajectory a =
      simulate(unit_oscillator(), vec({1, 0}), InputSignal::zero(), make_grid(0, 5, 1e-2));
  const Trajectory b =
      simulate(unit_oscillator(), vec({1, 0}), InputSignal::zero(), make_grid(0, 5, 2e-2));
  EXPECT_THROW(compare_trajectories(a, b), InvalidArgument);
}

TEST(Transport, PhAndControllableFormFromMappedState) {
  const Synthesis s = generate(3, 12, SynthKind::Canonical);
  const LinearMorphism l = ch_to_ph_morphism(s.params, s.S);
  const Grid g = make_grid(0, 10, 1e-3);
  const Vector s0 = vec({0.2, -0.1, 0.4, 0.0, 0.3, -0.6});
  for (const std::string spec : {"sin:1.7:0.8", "prbs:3"}) {
    const InputSignal u = parse_input(spec, g);
    const Trajectory ch = simulate(build_ch(s.params), s0, u, g);
    const Trajectory ph = simulate(realize_ph(s.ph), l.matrix * s0, u, g);
    EXPECT_LE(compare_trajectories(ch, ph).max_abs, 1e-6) << spec;
  }
}

TEST(Transport, PhAndObservableFormForNonCanonicalSystem) {
  const Synthesis s = generate(2, 5, SynthKind::RepeatedD);
  const PhToOh m = ph_to_oh_morphism(s.ph);
  const Grid g = make_grid(0, 10, 1e-3);
  const Vector x0 = vec({0.5, -0.3, 0.1, 0.9});
  const InputSignal u = parse_input("chirp:0.2:4", g);
  const Trajectory ph = simulate(realize_ph(s.ph), x0, u, g);
  const Trajectory oh = simulate(build_oh(m.params), m.morphism.matrix * x0, u, g);
  EXPECT_LE(compare_trajectories(ph, oh).max_abs, 1e-6);
}

TEST(InputDsl, ParsesAllKinds) {
  const Grid g = make_grid(0, 10, 0.01);
  EXPECT_EQ(parse_input("zero", g)(3.0), 0.0);
  EXPECT_EQ(parse_input("step:2.5", g)(3.0), 2.5);
  EXPECT_NEAR(parse_input("sin:2", g)(0.3), std::sin(0.6), 1e-15);
  EXPECT_NEAR(parse_input("sin:2:3", g)(0.3), 3.0 * std::sin(0.6), 1e-15);
  const InputSignal chirp = parse_input("chirp:1:3:2", g);
  EXPECT_NEAR(chirp(0.0), 0.0, 1e-15);
  // Instantaneous frequency w0 + (w1 - w0) t / T.
  const double t = 4.0;
  EXPECT_NEAR(chirp(t), 2.0 * std::sin(t + 2.0 * t * t / 20.0), 1e-12);
  const InputSignal prbs = parse_input("prbs:7:0.5", g);
  for (Index k = 0; k < g.count; ++k) EXPECT_EQ(std::abs(prbs(g.time(k))), 0.5);
}

TEST(InputDsl, PrbsHoldsPerStepAndIsSeeded) {
  const Grid g = make_grid(0, 10, 0.01);
  const InputSignal a = parse_input("prbs:7", g);
  const InputSignal b = parse_input("prbs:7", g);
  const InputSignal c = parse_input("prbs:8", g);
  int flips = 0, differ = 0;
  for (Index k = 0; k + 1 < g.count; ++k) {
    EXPECT_EQ(a(g.time(k)), a(g.time(k) + 0.4 * g.dt));
    EXPECT_EQ(a(g.time(k)), b(g.time(k)));
    flips += a(g.time(k)) != a(g.time(k + 1));
    differ += a(g.time(k)) != c(g.time(k));
  }
  EXPECT_GT(flips, 100);
  EXPECT_GT(differ, 100);
}

TEST(InputDsl, RejectsMalformedSpecs) {
  const Grid g = make_grid(0, 1, 0.1);
  for (const char* bad : {"", "sine:1", "step", "step:x", "sin:1:2:3", "chirp:1", "prbs:-1",
                          "prbs:1.5", "zero:1", "step:1abc"})
    EXPECT_THROW(parse_input(bad, g), InvalidArgument) << bad;
}
