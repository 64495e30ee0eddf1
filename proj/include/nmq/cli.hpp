// Copyright 2026 The nmq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file cli.hpp
 * @brief Model files, run configuration and output writers for the nmq tool.
 *
 * Model file (JSON):
 *
 *   {
 *     "n_s": 2, "n_a": 2,
 *     "aux_basis": <matrix>,                  optional, columns are φ_j
 *     "h_s": <op>, "h_a": <op>, "h_sa": <op>,
 *     "couplings": [ {"s": <op>, "sa": <op>, "a": <op>} ],
 *     "l0": <op>,
 *     "init": {"rho_s": <matrix>, "rho_a": <matrix>}
 *           | {"rho": <matrix>} | {"psi": [<complex>, ...]},
 *     "run": { "engine": ..., "dt": ..., "horizon": ..., "seed": ..., ... }
 *   }
 *
 * <matrix> is an array of rows; each entry is a number or [re, im].
 * <op> is a <matrix> or {"matrix": <matrix>, "schedule": {"kind":
 * "sinusoidal", "amplitude": a, "frequency": w, "phase": f}}. Missing
 * operators are zero.
 */
#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmq/core.hpp"
#include "nmq/model.hpp"
#include "nmq/sde.hpp"
#include "nmq/superop.hpp"

namespace nmq::cli {

using nlohmann::json;

/// Malformed input: bad JSON or a field of the wrong shape.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline Complex parse_complex(const json& j, const std::string& field) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
    return {j[0].get<double>(), j[1].get<double>()};
  }
  throw ParseError(field + ": expected a number or [re, im]");
}

inline json complex_to_json(Complex c) {
  if (c.imag() == 0.0) return c.real();
  return json::array({c.real(), c.imag()});
}

}  // namespace detail

inline Matrix parse_matrix(const json& j, const std::string& field,
                           Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || j.size() != std::size_t(rows)) {
    throw ParseError(field + ": expected " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[std::size_t(r)];
    const std::string rf = field + "[" + std::to_string(r) + "]";
    if (!row.is_array() || row.size() != std::size_t(cols)) {
      throw ParseError(rf + ": expected " + std::to_string(cols) + " entries");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = detail::parse_complex(row[std::size_t(c)],
                                      rf + "[" + std::to_string(c) + "]");
    }
  }
  return m;
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      row.push_back(detail::complex_to_json(m(r, c)));
    }
    rows.push_back(row);
  }
  return rows;
}

inline Schedule parse_schedule(const json& j, const std::string& field) {
  if (!j.is_object()) throw ParseError(field + ": expected an object");
  const std::string kind = j.value("kind", "constant");
  if (kind == "constant") return Schedule::constant();
  if (kind == "sinusoidal") {
    for (const char* k : {"amplitude", "frequency"}) {
      if (!j.contains(k) || !j[k].is_number()) {
        throw ParseError(field + "." + k + ": expected a number");
      }
    }
    return Schedule::sinusoidal(j["amplitude"].get<double>(),
                                j["frequency"].get<double>(),
                                j.value("phase", 0.0));
  }
  throw ParseError(field + ".kind: unknown schedule '" + kind + "'");
}

inline json schedule_to_json(const Schedule& s) {
  if (s.kind == Schedule::Kind::constant) return {{"kind", "constant"}};
  return {{"kind", "sinusoidal"},
          {"amplitude", s.amplitude},
          {"frequency", s.frequency},
          {"phase", s.phase}};
}

inline TimedOperator parse_operator(const json& parent, const std::string& key,
                                    const std::string& field, Eigen::Index dim) {
  TimedOperator op{Matrix::Zero(dim, dim), Schedule::constant()};
  if (!parent.contains(key) || parent[key].is_null()) return op;
  const json& j = parent[key];
  if (j.is_object()) {
    if (!j.contains("matrix")) throw ParseError(field + ".matrix: missing");
    op.matrix = parse_matrix(j["matrix"], field + ".matrix", dim, dim);
    if (j.contains("schedule")) op.schedule = parse_schedule(j["schedule"], field + ".schedule");
  } else {
    op.matrix = parse_matrix(j, field, dim, dim);
  }
  return op;
}

inline json operator_to_json(const TimedOperator& op) {
  if (op.schedule.kind == Schedule::Kind::constant) return matrix_to_json(op.matrix);
  return {{"matrix", matrix_to_json(op.matrix)},
          {"schedule", schedule_to_json(op.schedule)}};
}

inline int parse_dim(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<int>() < 1) {
    throw ParseError(std::string(key) + ": expected a positive integer");
  }
  return j[key].get<int>();
}

inline ModelSpec parse_model(const json& j) {
  if (!j.is_object()) throw ParseError("model: expected a JSON object");
  ModelSpec m;
  m.n_s = parse_dim(j, "n_s");
  m.n_a = parse_dim(j, "n_a");
  const Eigen::Index d = Eigen::Index(m.n_s) * m.n_a;
  m.aux_basis = j.contains("aux_basis")
                    ? parse_matrix(j["aux_basis"], "aux_basis", m.n_a, m.n_a)
                    : identity(m.n_a);
  m.h_s = parse_operator(j, "h_s", "h_s", m.n_s);
  m.h_a = parse_operator(j, "h_a", "h_a", m.n_a);
  m.h_sa = parse_operator(j, "h_sa", "h_sa", d);
  m.l0 = parse_operator(j, "l0", "l0", m.n_s);
  if (j.contains("couplings")) {
    if (!j["couplings"].is_array()) throw ParseError("couplings: expected an array");
    for (std::size_t k = 0; k < j["couplings"].size(); ++k) {
      const json& c = j["couplings"][k];
      const std::string f = "couplings[" + std::to_string(k) + "]";
      if (!c.is_object()) throw ParseError(f + ": expected an object");
      m.couplings.push_back({parse_operator(c, "s", f + ".s", m.n_s),
                             parse_operator(c, "sa", f + ".sa", d),
                             parse_operator(c, "a", f + ".a", m.n_a)});
    }
  }
  return m;
}

inline json model_to_json(const ModelSpec& m) {
  json j;
  j["n_s"] = m.n_s;
  j["n_a"] = m.n_a;
  j["aux_basis"] = matrix_to_json(m.aux_basis);
  j["h_s"] = operator_to_json(m.h_s);
  j["h_a"] = operator_to_json(m.h_a);
  j["h_sa"] = operator_to_json(m.h_sa);
  j["l0"] = operator_to_json(m.l0);
  j["couplings"] = json::array();
  for (const auto& c : m.couplings) {
    j["couplings"].push_back({{"s", operator_to_json(c.s)},
                              {"sa", operator_to_json(c.sa)},
                              {"a", operator_to_json(c.a)}});
  }
  return j;
}

/// Initial composite state from the "init" section. Absent: |0⟩⟨0| ⊗ |0⟩⟨0|.
inline Matrix parse_init(const json& j, const ModelSpec& m) {
  const Eigen::Index d = m.dim();
  if (!j.contains("init")) {
    Matrix rho = Matrix::Zero(d, d);
    rho(0, 0) = 1.0;
    return rho;
  }
  const json& s = j["init"];
  if (!s.is_object()) throw ParseError("init: expected an object");
  if (s.contains("rho")) return parse_matrix(s["rho"], "init.rho", d, d);
  if (s.contains("psi")) {
    const json& p = s["psi"];
    if (!p.is_array() || p.size() != std::size_t(d)) {
      throw ParseError("init.psi: expected " + std::to_string(d) + " amplitudes");
    }
    Vector psi(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      psi(i) = detail::parse_complex(p[std::size_t(i)],
                                     "init.psi[" + std::to_string(i) + "]");
    }
    if (psi.norm() == 0.0) throw ParseError("init.psi: zero vector");
    return pure_state(psi);
  }
  if (s.contains("rho_s") && s.contains("rho_a")) {
    return kron(parse_matrix(s["rho_s"], "init.rho_s", m.n_s, m.n_s),
                parse_matrix(s["rho_a"], "init.rho_a", m.n_a, m.n_a));
  }
  throw ParseError("init: expected rho, psi, or rho_s with rho_a");
}

/// Effective run settings (model file "run" section, then flags).
struct RunConfig {
  std::string model_path;
  std::string engine = "full_sme";
  std::string mc_engine = "coupled_blocks";
  double t0 = 0.0;
  double horizon = 2.0;
  double dt = 1e-4;
  std::uint64_t seed = 0;
  std::size_t n_traj = 1;
  std::string projector = "block";
  std::optional<double> window;
  bool renorm = false;
  std::string out_dir = ".";
  unsigned workers = 0;
  std::size_t stride = 1;
  std::string inject_fault;
  double trace_abort = 0.1;
  double residual_limit = 1e-4;
  std::size_t reinversion_period = 100;
  std::string inverse_scheme = "exact_step";
  std::string nz_generator = "qq";

  void check() const {
    if (!(dt > 0.0)) throw ParseError("dt: must be positive");
    if (n_traj < 1) throw ParseError("traj: must be at least 1");
    try {
      steps_for(horizon, dt);
    } catch (const ModelError& e) {
      throw ParseError(std::string("horizon/dt: ") + e.what());
    }
    if (projector != "block" && projector != "product") {
      throw ParseError("projector: expected block or product");
    }
    if (inverse_scheme != "exact_step" && inverse_scheme != "ito_recursion") {
      throw ParseError("inverse_scheme: expected exact_step or ito_recursion");
    }
    if (nz_generator != "qq" && nz_generator != "q") {
      throw ParseError("nz_generator: expected qq or q");
    }
  }

  std::size_t steps() const { return steps_for(horizon, dt); }

  /// Settings that influence numeric output (workers and paths excluded).
  json to_json() const {
    json j;
    j["engine"] = engine;
    j["mc_engine"] = mc_engine;
    j["t0"] = t0;
    j["horizon"] = horizon;
    j["dt"] = dt;
    j["seed"] = seed;
    j["traj"] = n_traj;
    j["projector"] = projector;
    j["window"] = window ? json(*window) : json(nullptr);
    j["renorm"] = renorm;
    j["stride"] = stride;
    j["inject_fault"] = inject_fault;
    j["trace_abort"] = trace_abort;
    j["residual_limit"] = residual_limit;
    j["reinversion_period"] = reinversion_period;
    j["inverse_scheme"] = inverse_scheme;
    j["nz_generator"] = nz_generator;
    return j;
  }
};

/// Applies the "run" section of a model file over the defaults.
inline void apply_run_section(const json& j, RunConfig& cfg) {
  if (!j.contains("run")) return;
  const json& r = j["run"];
  if (!r.is_object()) throw ParseError("run: expected an object");
  try {
    if (r.contains("engine")) cfg.engine = r["engine"].get<std::string>();
    if (r.contains("mc_engine")) cfg.mc_engine = r["mc_engine"].get<std::string>();
    if (r.contains("horizon")) cfg.horizon = r["horizon"].get<double>();
    if (r.contains("dt")) cfg.dt = r["dt"].get<double>();
    if (r.contains("seed")) cfg.seed = r["seed"].get<std::uint64_t>();
    if (r.contains("traj")) cfg.n_traj = r["traj"].get<std::size_t>();
    if (r.contains("projector")) cfg.projector = r["projector"].get<std::string>();
    if (r.contains("window") && !r["window"].is_null()) cfg.window = r["window"].get<double>();
    if (r.contains("renorm")) cfg.renorm = r["renorm"].get<bool>();
    if (r.contains("stride")) cfg.stride = r["stride"].get<std::size_t>();
    if (r.contains("trace_abort")) cfg.trace_abort = r["trace_abort"].get<double>();
    if (r.contains("residual_limit")) cfg.residual_limit = r["residual_limit"].get<double>();
    if (r.contains("reinversion_period")) {
      cfg.reinversion_period = r["reinversion_period"].get<std::size_t>();
    }
    if (r.contains("inverse_scheme")) cfg.inverse_scheme = r["inverse_scheme"].get<std::string>();
    if (r.contains("nz_generator")) cfg.nz_generator = r["nz_generator"].get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("run: ") + e.what());
  }
}

/// Reads a JSON document, reporting syntax errors with line and column.
inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size()) && i + 1 < e.byte; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(path + ":" + std::to_string(line) + ":" + std::to_string(col) +
                     ": JSON syntax error");
  }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// 17 significant digits, enough to round-trip a double.
inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_state_header(std::ostream& os, const std::string& prefix, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      os << ',' << prefix << i << j << "_re," << prefix << i << j << "_im";
    }
  }
}

inline void write_state_row(std::ostream& os, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      os << ',' << format_number(m(i, j).real()) << ',' << format_number(m(i, j).imag());
    }
  }
}

}  // namespace nmq::cli
