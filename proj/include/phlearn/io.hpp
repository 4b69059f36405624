#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "phlearn/equivalence.hpp"
#include "phlearn/error.hpp"
#include "phlearn/learn.hpp"
#include "phlearn/morphisms.hpp"
#include "phlearn/simulate.hpp"
#include "phlearn/symplectic.hpp"
#include "phlearn/systems.hpp"
#include "phlearn/types.hpp"

namespace phlearn::io {

using json = nlohmann::ordered_json;

/// Malformed input; the message names the source and the first failed check.
class FormatError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// PH system, optionally with the generator's ground truth.
struct PhDocument {
  PHSystem ph;
  json provenance;  // null when absent
};

/// (d, v) for the controllable or observable form. `source` is the PH
/// system the parameters were extracted from and `S` the symplectic map
/// with phi_S(d, v) = source, when known.
struct ParamsDocument {
  NormalForm form = NormalForm::CH;
  NormalFormParams params;
  std::optional<SymplecticMatrix> S;
  std::optional<PHSystem> source;
};

struct FitDocument {
  NormalForm mode = NormalForm::CH;
  FitResult result;
  json config;  // options echoed from the run
};

using Document =
    std::variant<PhDocument, ParamsDocument, RealizedLTI, LinearMorphism, FitDocument, WilliamsonForm>;

inline constexpr const char* kTypes[] = {"ph",        "ch_params",  "oh_params", "realized",
                                         "morphism",  "fit_result", "williamson"};

// ---------------------------------------------------------------- arrays

inline json to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json to_json(const RowVector& v) { return to_json(Vector(v.transpose())); }

// Nested row-major array.
inline json to_json(const Matrix& m) {
  json out = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

namespace detail {

inline const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + ": expected a JSON object");
  const auto it = j.find(key);
  if (it == j.end()) throw FormatError(where + ": missing field \"" + key + "\"");
  return *it;
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw FormatError(where + ": expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw FormatError(where + ": non-finite number");
  return x;
}

inline Index integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw FormatError(where + ": expected an integer");
  return j.get<Index>();
}

inline bool boolean(const json& j, const std::string& where) {
  if (!j.is_boolean()) throw FormatError(where + ": expected true or false");
  return j.get<bool>();
}

inline std::string string(const json& j, const std::string& where) {
  if (!j.is_string()) throw FormatError(where + ": expected a string");
  return j.get<std::string>();
}

inline Vector vector(const json& j, Index size, const std::string& where) {
  if (!j.is_array()) throw FormatError(where + ": expected an array");
  if (size >= 0 && static_cast<Index>(j.size()) != size) {
    std::ostringstream os;
    os << where << ": expected " << size << " entries, found " << j.size();
    throw FormatError(os.str());
  }
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i)
    v(i) = number(j[static_cast<std::size_t>(i)], where + "[" + std::to_string(i) + "]");
  return v;
}

inline Matrix matrix(const json& j, Index rows, Index cols, const std::string& where) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows) {
    std::ostringstream os;
    os << where << ": expected an array of " << rows << " rows";
    throw FormatError(os.str());
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    m.row(i) = vector(j[static_cast<std::size_t>(i)], cols,
                      where + "[" + std::to_string(i) + "]")
                   .transpose();
  return m;
}

// Rewraps domain validation failures with the source location.
template <class F>
auto checked(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
}

inline Index modes(const json& j, const std::string& where) {
  const Index n = integer(field(j, "n", where), where + ".n");
  if (n < 1) throw FormatError(where + ".n: must be >= 1");
  return n;
}

inline json ph_payload(const PHSystem& s) {
  return json{{"Q", to_json(s.Q.matrix())}, {"B", to_json(s.B)}};
}

inline PHSystem ph_from(const json& j, Index n, const std::string& where) {
  const Matrix q = matrix(field(j, "Q", where), 2 * n, 2 * n, where + ".Q");
  const Vector b = vector(field(j, "B", where), 2 * n, where + ".B");
  return checked(where, [&] { return PHSystem(SpdMatrix(q), b); });
}

inline SymplecticMatrix symplectic_from(const json& j, Index n, const std::string& where) {
  const Matrix s = matrix(j, 2 * n, 2 * n, where);
  return checked(where, [&] { return SymplecticMatrix(s); });
}

inline json realized_payload(const RealizedLTI& r) {
  return json{{"type", "realized"}, {"n", r.dim() / 2},   {"tag", to_string(r.tag)},
              {"A", to_json(r.A)},  {"B", to_json(r.B)}, {"C", to_json(r.C)}};
}

inline RealizedLTI realized_from(const json& j, const std::string& where) {
  const Index n = modes(j, where);
  const std::string tag = string(field(j, "tag", where), where + ".tag");
  RealizedLTI r;
  if (tag == "PH")
    r.tag = RealizationTag::PH;
  else if (tag == "CH")
    r.tag = RealizationTag::CH;
  else if (tag == "OH")
    r.tag = RealizationTag::OH;
  else
    throw FormatError(where + ".tag: unknown realization '" + tag + "'");
  r.A = matrix(field(j, "A", where), 2 * n, 2 * n, where + ".A");
  r.B = vector(field(j, "B", where), 2 * n, where + ".B");
  r.C = vector(field(j, "C", where), 2 * n, where + ".C").transpose();
  checked(where, [&] { r.validate(); });
  return r;
}

inline NormalForm form_from(const std::string& s, const std::string& where) {
  if (s == "ch") return NormalForm::CH;
  if (s == "oh") return NormalForm::OH;
  throw FormatError(where + ": unknown normal form '" + s + "'");
}

}  // namespace detail

// --------------------------------------------------------------- writers

inline json to_json(const PhDocument& doc) {
  json j{{"type", "ph"}, {"n", doc.ph.modes()}};
  j.update(detail::ph_payload(doc.ph));
  if (!doc.provenance.is_null()) j["provenance"] = doc.provenance;
  return j;
}

inline json to_json(const ParamsDocument& doc) {
  json j{{"type", doc.form == NormalForm::CH ? "ch_params" : "oh_params"},
         {"n", doc.params.modes()},
         {"d", to_json(doc.params.d)},
         {"v", to_json(doc.params.v)}};
  if (doc.S) j["S"] = to_json(doc.S->matrix());
  if (doc.source) j["source"] = detail::ph_payload(*doc.source);
  return j;
}

inline json to_json(const RealizedLTI& r) { return detail::realized_payload(r); }

inline json to_json(const MorphismReport& rep) {
  return json{{"state_residual", rep.state_residual},   {"input_residual", rep.input_residual},
              {"readout_residual", rep.readout_residual}, {"state_relative", rep.state_relative},
              {"input_relative", rep.input_relative},   {"readout_relative", rep.readout_relative},
              {"tol", rep.tol},                         {"pass", rep.pass}};
}

inline json to_json(const LinearMorphism& f) {
  return json{{"type", "morphism"},
              {"n", f.source.dim() / 2},
              {"direction", to_string(f.direction)},
              {"matrix", to_json(f.matrix)},
              {"rank", f.rank},
              {"source", to_json(f.source)},
              {"target", to_json(f.target)},
              {"report", to_json(f.report)}};
}

inline json to_json(const CanonicalChart& c) {
  return json{{"d", to_json(c.d_sorted)}, {"r", to_json(c.r)}};
}

inline json to_json(const FitDocument& doc) {
  const FitResult& r = doc.result;
  json x0s = json::array();
  for (const Vector& x : r.x0_estimates) x0s.push_back(to_json(x));
  json j{{"type", "fit_result"},
         {"n", r.params.modes()},
         {"mode", to_string(doc.mode)},
         {"d", to_json(r.params.d)},
         {"v", to_json(r.params.v)},
         {"canonical_form", to_json(r.canonical_form)},
         {"x0_estimates", std::move(x0s)},
         {"loss_history", r.loss_history},
         {"final_loss", r.final_loss},
         {"final_rms", r.final_rms},
         {"best_restart", r.best_restart},
         {"divergence_warning", r.divergence_warning},
         {"degenerate_data", r.degenerate_data}};
  if (!doc.config.is_null()) j["config"] = doc.config;
  return j;
}

inline json to_json(const WilliamsonForm& w) {
  return json{{"type", "williamson"},
              {"n", w.d.size()},
              {"d", to_json(w.d)},
              {"S", to_json(w.S.matrix())},
              {"sqrt_condition", w.sqrt_condition},
              {"ill_conditioned", w.ill_conditioned}};
}

inline json to_json(const Document& doc) {
  return std::visit([](const auto& x) { return to_json(x); }, doc);
}

// --------------------------------------------------------------- readers

inline PhDocument ph_from_json(const json& j, const std::string& where) {
  const Index n = detail::modes(j, where);
  PhDocument doc{detail::ph_from(j, n, where), nullptr};
  if (const auto it = j.find("provenance"); it != j.end()) {
    if (!it->is_object()) throw FormatError(where + ".provenance: expected an object");
    doc.provenance = *it;
  }
  return doc;
}

inline ParamsDocument params_from_json(const json& j, NormalForm form, const std::string& where) {
  const Index n = detail::modes(j, where);
  const Vector d = detail::vector(detail::field(j, "d", where), n, where + ".d");
  const Vector v = detail::vector(detail::field(j, "v", where), 2 * n, where + ".v");
  ParamsDocument doc{form, detail::checked(where, [&] { return NormalFormParams(d, v); }),
                     std::nullopt, std::nullopt};
  if (const auto it = j.find("S"); it != j.end())
    doc.S = detail::symplectic_from(*it, n, where + ".S");
  if (const auto it = j.find("source"); it != j.end())
    doc.source = detail::ph_from(*it, n, where + ".source");
  if (doc.S && doc.source) {
    // phi_S(d, v) must reproduce the recorded source system.
    const PHSystem image = phi_s(doc.params, *doc.S).ph;
    const double q_err = (image.Q.matrix() - doc.source->Q.matrix()).norm() /
                         std::max(1.0, doc.source->Q.matrix().norm());
    const double b_err = (image.B - doc.source->B).norm() / std::max(1.0, doc.source->B.norm());
    if (!(std::max(q_err, b_err) <= kStructureTol)) {
      std::ostringstream os;
      os << where << ": phi_S(d, v) does not reproduce source (relative error "
         << std::max(q_err, b_err) << ")";
      throw FormatError(os.str());
    }
  }
  return doc;
}

inline MorphismReport report_from_json(const json& j, const std::string& where) {
  MorphismReport r;
  const auto num = [&](const char* key) {
    return detail::number(detail::field(j, key, where), where + "." + key);
  };
  r.state_residual = num("state_residual");
  r.input_residual = num("input_residual");
  r.readout_residual = num("readout_residual");
  r.state_relative = num("state_relative");
  r.input_relative = num("input_relative");
  r.readout_relative = num("readout_relative");
  r.tol = num("tol");
  r.pass = detail::boolean(detail::field(j, "pass", where), where + ".pass");
  return r;
}

inline LinearMorphism morphism_from_json(const json& j, const std::string& where) {
  const Index n = detail::modes(j, where);
  LinearMorphism f;
  const std::string dir = detail::string(detail::field(j, "direction", where), where + ".direction");
  if (dir == "CH->PH")
    f.direction = MorphismDirection::CHtoPH;
  else if (dir == "PH->OH")
    f.direction = MorphismDirection::PHtoOH;
  else
    throw FormatError(where + ".direction: unknown direction '" + dir + "'");
  f.matrix = detail::matrix(detail::field(j, "matrix", where), 2 * n, 2 * n, where + ".matrix");
  f.rank = detail::integer(detail::field(j, "rank", where), where + ".rank");
  f.source = detail::realized_from(detail::field(j, "source", where), where + ".source");
  f.target = detail::realized_from(detail::field(j, "target", where), where + ".target");
  f.report = report_from_json(detail::field(j, "report", where), where + ".report");
  if (f.source.dim() != 2 * n || f.target.dim() != 2 * n)
    throw FormatError(where + ": source/target dimension disagrees with n");
  if (f.report.pass) {
    const MorphismReport now = verify_morphism(f.matrix, f.source, f.target, f.report.tol);
    if (!now.pass) {
      std::ostringstream os;
      os << where << ": recorded as passing but residual " << now.max_relative()
         << " exceeds tol " << f.report.tol;
      throw FormatError(os.str());
    }
  }
  return f;
}

inline FitDocument fit_from_json(const json& j, const std::string& where) {
  using namespace detail;
  const Index n = modes(j, where);
  const NormalForm mode = form_from(string(field(j, "mode", where), where + ".mode"), where + ".mode");
  const Vector d = vector(field(j, "d", where), n, where + ".d");
  const Vector v = vector(field(j, "v", where), 2 * n, where + ".v");
  const NormalFormParams p = checked(where, [&] { return NormalFormParams(d, v); });

  const json& cf = field(j, "canonical_form", where);
  CanonicalChart chart{vector(field(cf, "d", where + ".canonical_form"), n,
                              where + ".canonical_form.d"),
                       vector(field(cf, "r", where + ".canonical_form"), n,
                              where + ".canonical_form.r")};
  if (!charts_equal(chart, canonicalize(p), 1e-12))
    throw FormatError(where + ".canonical_form: inconsistent with (d, v)");

  std::vector<Vector> x0s;
  const json& xj = field(j, "x0_estimates", where);
  if (!xj.is_array()) throw FormatError(where + ".x0_estimates: expected an array");
  for (std::size_t i = 0; i < xj.size(); ++i)
    x0s.push_back(vector(xj[i], 2 * n, where + ".x0_estimates[" + std::to_string(i) + "]"));

  const Vector history = vector(field(j, "loss_history", where), -1, where + ".loss_history");
  FitResult r{p,
              std::move(x0s),
              std::vector<double>(history.data(), history.data() + history.size()),
              number(field(j, "final_loss", where), where + ".final_loss"),
              number(field(j, "final_rms", where), where + ".final_rms"),
              std::move(chart),
              static_cast<int>(integer(field(j, "best_restart", where), where + ".best_restart")),
              boolean(field(j, "divergence_warning", where), where + ".divergence_warning"),
              boolean(field(j, "degenerate_data", where), where + ".degenerate_data")};
  if (r.final_loss < 0.0 || r.final_rms < 0.0)
    throw FormatError(where + ": negative loss");
  FitDocument doc{mode, std::move(r), nullptr};
  if (const auto it = j.find("config"); it != j.end()) doc.config = *it;
  return doc;
}

inline WilliamsonForm williamson_from_json(const json& j, const std::string& where) {
  using namespace detail;
  const Index n = modes(j, where);
  const Vector d = vector(field(j, "d", where), n, where + ".d");
  for (Index i = 0; i < n; ++i) {
    if (!(d(i) > 0.0)) throw FormatError(where + ".d: entries must be positive");
    if (i > 0 && d(i) < d(i - 1)) throw FormatError(where + ".d: entries must be ascending");
  }
  return WilliamsonForm{symplectic_from(field(j, "S", where), n, where + ".S"), d,
                        number(field(j, "sqrt_condition", where), where + ".sqrt_condition"),
                        boolean(field(j, "ill_conditioned", where), where + ".ill_conditioned")};
}

inline std::string type_of(const json& j, const std::string& where) {
  return detail::string(detail::field(j, "type", where), where + ".type");
}

/// Parses and revalidates any SystemFile payload.
inline Document from_json(const json& j, const std::string& where) {
  const std::string type = type_of(j, where);
  if (type == "ph") return ph_from_json(j, where);
  if (type == "ch_params") return params_from_json(j, NormalForm::CH, where);
  if (type == "oh_params") return params_from_json(j, NormalForm::OH, where);
  if (type == "realized") return detail::realized_from(j, where);
  if (type == "morphism") return morphism_from_json(j, where);
  if (type == "fit_result") return fit_from_json(j, where);
  if (type == "williamson") return williamson_from_json(j, where);
  throw FormatError(where + ".type: unknown document type '" + type + "'");
}

// ------------------------------------------------------------ file access

/// Whole contents of path, or of stdin for "-".
inline std::string read_text(const std::string& path) {
  if (path == "-") {
    return std::string(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Writes text to path, or to stdout for "-".
inline void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << text;
  if (!out) throw FormatError(path + ": write failed");
}

inline std::string display_name(const std::string& path) { return path == "-" ? "<stdin>" : path; }

inline json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(where + ": invalid JSON (" + e.what() + ")");
  }
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline Document read_document(const std::string& path) {
  const std::string where = display_name(path);
  return from_json(parse_json(read_text(path), where), where);
}

inline void write_document(const std::string& path, const json& j) { write_text(path, dump(j)); }

// -------------------------------------------------------------------- CSV

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Header t,u,y[,x1..xm], 17 significant digits, LF line endings.
inline void write_csv(std::ostream& out, const Trajectory& t) {
  t.validate();
  out << "t,u,y";
  for (Index j = 0; j < t.x.cols() && t.has_states(); ++j) out << ",x" << j + 1;
  out << '\n';
  for (Index k = 0; k < t.grid.count; ++k) {
    out << format_number(t.grid.time(k)) << ',' << format_number(t.u(k)) << ','
        << format_number(t.y(k));
    if (t.has_states())
      for (Index j = 0; j < t.x.cols(); ++j) out << ',' << format_number(t.x(k, j));
    out << '\n';
  }
}

inline std::string to_csv(const Trajectory& t) {
  std::ostringstream os;
  write_csv(os, t);
  return os.str();
}

/// Parses a trajectory CSV. The time column must be uniform (relative
/// spacing error <= 1e-9); dt is the mean spacing.
inline Trajectory read_csv(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(where + ": empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 3 || header[0] != "t" || header[1] != "u" || header[2] != "y")
    throw FormatError(where + ":1: header must start with t,u,y");
  const std::size_t states = header.size() - 3;
  for (std::size_t j = 0; j < states; ++j)
    if (header[3 + j] != "x" + std::to_string(j + 1))
      throw FormatError(where + ":1: expected column x" + std::to_string(j + 1));

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cell.size() || !std::isfinite(x))
        throw FormatError(where + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      row.push_back(x);
    }
    if (row.size() != header.size())
      throw FormatError(where + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " columns");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(where + ": no data rows");

  Trajectory t;
  const Index count = static_cast<Index>(rows.size());
  t.grid.t0 = rows[0][0];
  t.grid.count = count;
  t.grid.dt = count > 1 ? (rows.back()[0] - rows[0][0]) / static_cast<double>(count - 1) : 1.0;
  if (!(t.grid.dt > 0.0)) throw FormatError(where + ": time column must be increasing");
  t.u.resize(count);
  t.y.resize(count);
  if (states) t.x.resize(count, static_cast<Index>(states));
  for (Index k = 0; k < count; ++k) {
    const auto& row = rows[static_cast<std::size_t>(k)];
    if (std::abs(row[0] - t.grid.time(k)) > 1e-9 * std::max(1.0, std::abs(row[0])) +
                                              1e-9 * t.grid.dt * static_cast<double>(k))
      throw FormatError(where + ":" + std::to_string(k + 2) + ": time column is not uniform");
    t.u(k) = row[1];
    t.y(k) = row[2];
    for (std::size_t j = 0; j < states; ++j) t.x(k, static_cast<Index>(j)) = row[3 + j];
  }
  return t;
}

inline Trajectory read_trajectory(const std::string& path) {
  return read_csv(read_text(path), display_name(path));
}

}  // namespace phlearn::io
