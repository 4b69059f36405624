#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phlearn/phlearn.hpp"

namespace {

using namespace phlearn;
using io::json;

constexpr int kExitOk = 0;
constexpr int kExitNegative = 1;
constexpr int kExitError = 2;

struct Flags {
  std::string in = "-";
  std::string out = "-";
  std::vector<std::string> files;
  std::vector<std::string> data;
  Index n = 1;
  std::uint64_t seed = 0;
  std::string kind = "canonical";
  std::string mode = "ch";
  std::string input = "zero";
  double t0 = 0.0;
  double t1 = 10.0;
  double dt = 1e-3;
  std::string method = "zoh";
  std::string x0;
  std::string x0_policy = "zero";
  int iters = FitOptions{}.iters;
  int restarts = FitOptions{}.restarts;
  std::optional<double> tol;
  bool reduce = false;
  bool states = false;
};

NormalForm parse_mode(const std::string& s) {
  if (s == "ch") return NormalForm::CH;
  if (s == "oh") return NormalForm::OH;
  throw InvalidArgument("--mode must be ch or oh");
}

Method parse_method(const std::string& s) {
  if (s == "zoh") return Method::ZohExact;
  if (s == "rk4") return Method::Rk4;
  throw InvalidArgument("--method must be zoh or rk4");
}

Vector parse_vector(const std::string& s, Index size, const char* what) {
  std::vector<double> xs;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size())
      throw InvalidArgument(std::string(what) + ": bad number '" + cell + "'");
    xs.push_back(x);
  }
  if (static_cast<Index>(xs.size()) != size) {
    std::ostringstream os;
    os << what << ": expected " << size << " comma-separated values, got " << xs.size();
    throw InvalidArgument(os.str());
  }
  return Eigen::Map<const Vector>(xs.data(), size);
}

const PHSystem& require_ph(const io::Document& doc, const std::string& path) {
  if (const auto* p = std::get_if<io::PhDocument>(&doc)) return p->ph;
  throw io::FormatError(io::display_name(path) + ": expected a \"ph\" document");
}

// (d, v) carried by or extracted from a document.
NormalFormParams params_of(const io::Document& doc, const std::string& path) {
  if (const auto* p = std::get_if<io::PhDocument>(&doc)) {
    const WilliamsonForm wf = williamson(p->ph.Q);
    return NormalFormParams(wf.d, wf.S.matrix() * p->ph.B);
  }
  if (const auto* p = std::get_if<io::ParamsDocument>(&doc)) return p->params;
  if (const auto* p = std::get_if<io::FitDocument>(&doc)) return p->result.params;
  throw io::FormatError(io::display_name(path) +
                        ": expected ph, ch_params, oh_params or fit_result");
}

RealizedLTI realization_of(const io::Document& doc, const std::string& path) {
  if (const auto* p = std::get_if<io::PhDocument>(&doc)) return realize_ph(p->ph);
  if (const auto* p = std::get_if<io::ParamsDocument>(&doc))
    return build_normal_form(p->params, p->form);
  if (const auto* p = std::get_if<io::FitDocument>(&doc))
    return build_normal_form(p->result.params, p->mode);
  if (const auto* p = std::get_if<RealizedLTI>(&doc)) return *p;
  throw io::FormatError(io::display_name(path) + ": document has no state-space realization");
}

int cmd_gen(const Flags& f) {
  const SynthKind kind = parse_synth_kind(f.kind);
  const SynthOptions opts;
  const Synthesis s = generate(f.n, f.seed, kind, opts);
  json provenance{{"generator", "phlearn gen"},
                  {"kind", to_string(kind)},
                  {"seed", f.seed},
                  {"d", io::to_json(s.params.d)},
                  {"v", io::to_json(s.params.v)},
                  {"S", io::to_json(s.S.matrix())},
                  {"options",
                   {{"d_min", opts.d_min},
                    {"d_max", opts.d_max},
                    {"d_gap", opts.d_gap},
                    {"r_min", opts.r_min},
                    {"r_max", opts.r_max},
                    {"s_scale", opts.s_scale}}}};
  io::write_document(f.out, io::to_json(io::PhDocument{s.ph, std::move(provenance)}));
  return kExitOk;
}

int cmd_williamson(const Flags& f) {
  const io::Document doc = io::read_document(f.in);
  const WilliamsonForm wf = williamson(require_ph(doc, f.in).Q);
  if (wf.ill_conditioned)
    std::cerr << "phlearn: warning: Q is ill-conditioned (sqrt condition " << wf.sqrt_condition
              << ")\n";
  io::write_document(f.out, io::to_json(wf));
  return kExitOk;
}

int cmd_to_normal_form(const Flags& f, NormalForm form) {
  const io::Document doc = io::read_document(f.in);
  const PHSystem& ph = require_ph(doc, f.in);
  const WilliamsonForm wf = williamson(ph.Q);
  io::ParamsDocument out{form, NormalFormParams(wf.d, wf.S.matrix() * ph.B), wf.S, ph};
  io::write_document(f.out, io::to_json(out));
  return kExitOk;
}

int cmd_simulate(const Flags& f) {
  const io::Document doc = io::read_document(f.in);
  const RealizedLTI r = realization_of(doc, f.in);
  const Grid grid = make_grid(f.t0, f.t1, f.dt);
  const InputSignal u = parse_input(f.input, grid);
  const Vector x0 = f.x0.empty() ? Vector::Zero(r.dim()) : parse_vector(f.x0, r.dim(), "--x0");
  const Trajectory t = simulate(r, x0, u, grid, SimOptions{parse_method(f.method), f.states});
  io::write_text(f.out, io::to_csv(t));
  return kExitOk;
}

int cmd_transfer(const Flags& f) {
  const io::Document doc = io::read_document(f.in);
  const TransferFunction tf = transfer_function(realization_of(doc, f.in), f.reduce);
  io::write_document(f.out, json{{"num", io::to_json(tf.num)},
                                 {"den", io::to_json(tf.den)},
                                 {"reduced", f.reduce}});
  return kExitOk;
}

int cmd_learn(const Flags& f) {
  std::vector<std::string> sources = f.data;
  if (sources.empty()) sources.push_back(f.in);
  Dataset ds;
  ds.n = f.n;
  if (f.x0_policy == "zero")
    ds.x0_policy = X0Policy::Zero;
  else if (f.x0_policy == "estimate")
    ds.x0_policy = X0Policy::Estimate;
  else
    throw InvalidArgument("--x0-policy must be zero or estimate");
  for (const std::string& path : sources) ds.trajectories.push_back(io::read_trajectory(path));

  const NormalForm mode = parse_mode(f.mode);
  FitOptions opts;
  opts.seed = f.seed;
  opts.iters = f.iters;
  opts.restarts = f.restarts;
  const FitResult r = fit(ds, mode, opts);
  if (r.divergence_warning) std::cerr << "phlearn: warning: some restarts diverged\n";
  if (r.degenerate_data) std::cerr << "phlearn: warning: all outputs are zero\n";

  json config{{"n", f.n},
              {"mode", f.mode},
              {"seed", opts.seed},
              {"iters", opts.iters},
              {"restarts", opts.restarts},
              {"step_size", opts.step_size},
              {"polish_iters", opts.polish_iters},
              {"sweep_points", opts.sweep_points},
              {"sweeps", opts.sweeps},
              {"x0_policy", f.x0_policy},
              {"data", sources}};
  io::write_document(f.out, io::to_json(io::FitDocument{mode, r, std::move(config)}));
  return kExitOk;
}

// Input files: --in plus positional arguments.
std::vector<std::string> inputs(const Flags& f, std::size_t lo, std::size_t hi) {
  std::vector<std::string> paths;
  if (f.in != "-" || f.files.size() < lo) paths.push_back(f.in);
  for (const std::string& p : f.files) paths.push_back(p);
  if (paths.size() < lo || paths.size() > hi) {
    std::ostringstream os;
    os << "expected " << lo << (lo == hi ? "" : " or " + std::to_string(hi)) << " input files";
    throw InvalidArgument(os.str());
  }
  std::size_t stdin_uses = 0;
  for (const std::string& p : paths) stdin_uses += p == "-";
  if (stdin_uses > 1) throw InvalidArgument("stdin can supply only one input file");
  return paths;
}

int cmd_equiv(const Flags& f) {
  const std::vector<std::string> paths = inputs(f, 2, 2);
  const NormalFormParams a = params_of(io::read_document(paths[0]), paths[0]);
  const NormalFormParams b = params_of(io::read_document(paths[1]), paths[1]);
  if (a.modes() != b.modes()) {
    io::write_document(f.out, json{{"verdict", to_string(Verdict::NotEquivalent)},
                                   {"reason", "mode counts differ"}});
    return kExitNegative;
  }
  const double tol = f.tol.value_or(1e-9);
  const StarResult res = star_equivalent(a, b, tol);
  json out{{"verdict", to_string(res.verdict)},
           {"reason", res.reason},
           {"tol", tol},
           {"residuals",
            {{"permutation", res.residuals.permutation},
             {"quadratic", res.residuals.quadratic},
             {"commutation", res.residuals.commutation},
             {"coupling", res.residuals.coupling}}}};
  if (res.witness) {
    out["witness"] = {{"P_sigma", io::to_json(res.witness->P_sigma)},
                      {"A", io::to_json(res.witness->A)}};
  }
  io::write_document(f.out, out);
  return res.equivalent() ? kExitOk : kExitNegative;
}

int cmd_canon(const Flags& f) {
  const std::vector<std::string> paths = inputs(f, 1, 2);
  std::vector<CanonicalChart> charts;
  for (const std::string& p : paths) charts.push_back(canonicalize(params_of(io::read_document(p), p)));
  if (charts.size() == 1) {
    io::write_document(f.out, io::to_json(charts[0]));
    return kExitOk;
  }
  const double tol = f.tol.value_or(1e-8);
  const bool equal = charts_equal(charts[0], charts[1], tol);
  io::write_document(f.out, json{{"equal", equal},
                                 {"tol", tol},
                                 {"first", io::to_json(charts[0])},
                                 {"second", io::to_json(charts[1])}});
  return equal ? kExitOk : kExitNegative;
}

json report_entry(const LinearMorphism& m) {
  json j = io::to_json(m.report);
  j["direction"] = to_string(m.direction);
  j["rank"] = m.rank;
  j["dimension"] = m.matrix.rows();
  return j;
}

int cmd_verify(const Flags& f) {
  const io::Document doc = io::read_document(f.in);
  const double tol = f.tol.value_or(kMorphismTol);
  std::vector<LinearMorphism> checks;
  if (const auto* m = std::get_if<LinearMorphism>(&doc)) {
    checks.push_back(*m);
  } else if (const auto* p = std::get_if<io::ParamsDocument>(&doc)) {
    if (!p->source)
      throw io::FormatError(io::display_name(f.in) + ": parameters carry no source system");
    if (p->form == NormalForm::CH) {
      if (!p->S) throw io::FormatError(io::display_name(f.in) + ": ch_params without S");
      checks.push_back(ch_to_ph_morphism(p->params, *p->S, false));
    } else {
      checks.push_back(ph_to_oh_morphism(*p->source, false).morphism);
    }
  } else if (const auto* ph = std::get_if<io::PhDocument>(&doc)) {
    const PhToOh to_oh = ph_to_oh_morphism(ph->ph, false);
    checks.push_back(ch_to_ph_morphism(to_oh.params, williamson(ph->ph.Q).S, false));
    checks.push_back(to_oh.morphism);
  } else {
    throw io::FormatError(io::display_name(f.in) + ": expected morphism, ch_params, oh_params or ph");
  }

  bool pass = true;
  json reports = json::array();
  for (LinearMorphism& m : checks) {
    m.report = verify_morphism(m.matrix, m.source, m.target, tol);
    pass = pass && m.report.pass;
    reports.push_back(report_entry(m));
  }
  io::write_document(f.out, json{{"pass", pass}, {"tol", tol}, {"morphisms", reports}});
  return pass ? kExitOk : kExitNegative;
}

void add_io(CLI::App* c, Flags& f) {
  c->add_option("--in", f.in, "input file ('-' for stdin)");
  c->add_option("--out", f.out, "output file ('-' for stdout)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phlearn: port-Hamiltonian normal forms, morphisms, simulation and learning"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen", "generate a random PH system with ground truth");
  add_io(gen, f);
  gen->add_option("--n", f.n, "number of modes")->check(CLI::PositiveNumber);
  gen->add_option("--seed", f.seed, "random seed");
  gen->add_option("--kind", f.kind, "canonical | repeated_d | zero_modes");

  auto* wil = app.add_subcommand("williamson", "Williamson normal form of Q");
  add_io(wil, f);

  auto* to_ch = app.add_subcommand("to-ch", "controllable normal-form parameters of a PH system");
  add_io(to_ch, f);
  auto* to_oh = app.add_subcommand("to-oh", "observable normal-form parameters of a PH system");
  add_io(to_oh, f);

  auto* sim = app.add_subcommand("simulate", "simulate a system to trajectory CSV");
  add_io(sim, f);
  sim->add_option("--input", f.input, "zero | step:A | sin:W[:A] | chirp:W0:W1[:A] | prbs:SEED[:A]");
  sim->add_option("--t0", f.t0, "start time");
  sim->add_option("--t1", f.t1, "end time (inclusive)");
  sim->add_option("--dt", f.dt, "time step");
  sim->add_option("--method", f.method, "zoh | rk4");
  sim->add_option("--x0", f.x0, "initial state, comma-separated (default zero)");
  sim->add_flag("--states", f.states, "append state columns x1..x2n");

  auto* tr = app.add_subcommand("transfer", "transfer function numerator and denominator");
  add_io(tr, f);
  tr->add_flag("--reduce", f.reduce, "cancel common pole/zero pairs");

  auto* learn = app.add_subcommand("learn", "fit normal-form parameters to trajectory CSV data");
  add_io(learn, f);
  learn->add_option("--data", f.data, "trajectory CSV (repeatable; defaults to --in)");
  learn->add_option("--n", f.n, "number of modes")->check(CLI::PositiveNumber);
  learn->add_option("--mode", f.mode, "ch | oh");
  learn->add_option("--seed", f.seed, "random seed");
  learn->add_option("--iters", f.iters, "gradient iterations per restart")->check(CLI::NonNegativeNumber);
  learn->add_option("--restarts", f.restarts, "number of restarts")->check(CLI::PositiveNumber);
  learn->add_option("--x0-policy", f.x0_policy, "zero | estimate");

  auto* eq = app.add_subcommand("equiv", "decide star equivalence of two parameter sets");
  add_io(eq, f);
  eq->add_option("files", f.files, "parameter files");
  eq->add_option("--tol", f.tol, "tolerance");

  auto* canon = app.add_subcommand("canon", "canonical chart; with two files, compare charts");
  add_io(canon, f);
  canon->add_option("files", f.files, "parameter files");
  canon->add_option("--tol", f.tol, "comparison tolerance");

  auto* ver = app.add_subcommand("verify", "check morphism identities and print the residuals");
  add_io(ver, f);
  ver->add_option("--tol", f.tol, "tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (gen->parsed()) return cmd_gen(f);
    if (wil->parsed()) return cmd_williamson(f);
    if (to_ch->parsed()) return cmd_to_normal_form(f, NormalForm::CH);
    if (to_oh->parsed()) return cmd_to_normal_form(f, NormalForm::OH);
    if (sim->parsed()) return cmd_simulate(f);
    if (tr->parsed()) return cmd_transfer(f);
    if (learn->parsed()) return cmd_learn(f);
    if (eq->parsed()) return cmd_equiv(f);
    if (canon->parsed()) return cmd_canon(f);
    if (ver->parsed()) return cmd_verify(f);
  } catch (const std::exception& e) {
    std::cerr << "phlearn: error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
