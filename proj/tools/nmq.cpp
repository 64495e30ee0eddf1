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

// nmq: validate models, simulate trajectories, run the consistency suite and
// dump memory kernels.
//
// Exit codes: 0 ok, 1 check failure, 2 usage or parse error, 3 numerical
// abort.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nmq/cli.hpp"
#include "nmq/deterministic.hpp"
#include "nmq/engines.hpp"
#include "nmq/harness.hpp"
#include "nmq/kernel.hpp"
#include "nmq/monte_carlo.hpp"

namespace fs = std::filesystem;
using namespace nmq;
using nmq::cli::json;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;
constexpr int kAbort = 3;

struct Loaded {
  json doc;
  ModelSpec spec;
  Matrix init;
};

Loaded load(const std::string& path) {
  Loaded l;
  l.doc = cli::read_json_file(path);
  l.spec = cli::parse_model(l.doc);
  l.init = cli::parse_init(l.doc, l.spec);
  return l;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw cli::ParseError(what + ": '" + item + "' is not a number");
    }
  }
  return out;
}

Matrix aux_marginal(const Matrix& init, const ModelSpec& spec) {
  return partial_trace_principal(init, spec.n_a);
}

Projector make_projector(const cli::RunConfig& cfg, const ModelSpec& spec,
                         const Matrix& init) {
  if (cfg.projector == "product") {
    return projector_p(spec, ProjectorKind::product, aux_marginal(init, spec));
  }
  return projector_p(spec, ProjectorKind::block_diagonal);
}

EngineOptions engine_options(const cli::RunConfig& cfg) {
  EngineOptions opt;
  opt.stride = cfg.stride;
  opt.renormalize = cfg.renorm;
  opt.trace_abort = cfg.trace_abort;
  opt.memory_window = cfg.window;
  opt.flip_a00_sign = cfg.inject_fault == "A00-sign";
  opt.propagator.residual_limit = cfg.residual_limit;
  opt.propagator.reinversion_period = cfg.reinversion_period;
  opt.propagator.scheme = cfg.inverse_scheme == "ito_recursion"
                              ? InverseScheme::ito_recursion
                              : InverseScheme::exact_step;
  return opt;
}

StochasticEngine stochastic_engine(const std::string& name) {
  if (name == "full_sme") return StochasticEngine::full_sme;
  if (name == "coupled_blocks") return StochasticEngine::coupled_blocks;
  if (name == "reduced_diag") return StochasticEngine::reduced_diag;
  if (name == "reduced_p") return StochasticEngine::reduced_p;
  throw cli::ParseError("engine: unknown stochastic engine '" + name + "'");
}

double min_eigenvalue_of(const Matrix& m) { return min_eigenvalue(m); }

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

json manifest_base(const cli::RunConfig& cfg, const json& model_doc,
                   const std::string& command) {
  json m;
  m["command"] = command;
  m["config"] = cfg.to_json();
  m["config_hash"] =
      cli::hex64(cli::fnv1a(model_doc.dump() + "\n" + cfg.to_json().dump()));
  m["model_file"] = cfg.model_path;
  m["rng"] = {{"generator", Xoshiro256::kName}, {"normal", NormalSource::kName},
              {"seed_derivation", "splitmix64(master ^ 0xD1B54A32D192ED03 * (index + 1))"}};
  m["propagator"] = {{"inverse_scheme", cfg.inverse_scheme},
                     {"reinversion_period", cfg.reinversion_period},
                     {"residual_limit", cfg.residual_limit}};
  m["integrator"] = {{"stochastic", "euler_maruyama_ito"},
                     {"deterministic", "rk4"},
                     {"memory_quadrature", "left_rectangle"}};
  Tolerances tol;
  m["tolerances"] = {{"trace_abort", cfg.trace_abort},
                     {"propagator_residual_limit", cfg.residual_limit},
                     {"identity", tol.identity},
                     {"cross_formulation", tol.cross_formulation},
                     {"propagator_inverse", tol.propagator_inverse},
                     {"min_order", tol.min_order},
                     {"standard_errors", tol.standard_errors},
                     {"closure_floor", tol.closure_floor}};
  return m;
}

std::string trajectory_csv(const ModelSpec& spec, const TrajectoryRecord& rec) {
  std::ostringstream os;
  os << "t,Y";
  cli::write_state_header(os, "rho_", spec.n_s);
  os << ",trace,min_eig\n";
  for (std::size_t i = 0; i < rec.size(); ++i) {
    os << cli::format_number(rec.times[i]) << ','
       << cli::format_number(rec.measurement[i]);
    cli::write_state_row(os, rec.principal[i]);
    os << ',' << cli::format_number(rec.trace[i]) << ','
       << cli::format_number(min_eigenvalue_of(rec.principal[i])) << '\n';
  }
  return os.str();
}

std::string deterministic_csv(const ModelSpec& spec, const DeterministicRecord& rec) {
  std::ostringstream os;
  os << "t";
  cli::write_state_header(os, "rho_", spec.n_s);
  os << ",trace,min_eig\n";
  for (std::size_t i = 0; i < rec.size(); ++i) {
    os << cli::format_number(rec.times[i]);
    cli::write_state_row(os, rec.principal[i]);
    os << ',' << cli::format_number(rec.principal[i].trace().real()) << ','
       << cli::format_number(min_eigenvalue_of(rec.principal[i])) << '\n';
  }
  return os.str();
}

std::string mc_csv(const ModelSpec& spec, const McResult& res) {
  std::ostringstream os;
  os << "t";
  cli::write_state_header(os, "rho_", spec.n_s);
  if (res.standard_error) {
    for (int i = 0; i < spec.n_s; ++i) {
      for (int j = 0; j < spec.n_s; ++j) os << ",se_" << i << j;
    }
  }
  os << ",trace,min_eig\n";
  for (std::size_t k = 0; k < res.mean.size(); ++k) {
    os << cli::format_number(res.times[k]);
    cli::write_state_row(os, res.mean[k]);
    if (res.standard_error) {
      const auto& se = (*res.standard_error)[k];
      for (Eigen::Index i = 0; i < se.rows(); ++i) {
        for (Eigen::Index j = 0; j < se.cols(); ++j) {
          os << ',' << cli::format_number(se(i, j));
        }
      }
    }
    os << ',' << cli::format_number(res.mean[k].trace().real()) << ','
       << cli::format_number(min_eigenvalue_of(res.mean[k])) << '\n';
  }
  return os.str();
}

int cmd_validate(const cli::RunConfig& cfg) {
  const Loaded l = load(cfg.model_path);
  std::vector<std::string> issues = validate_model(l.spec);
  if (issues.empty()) {
    const Eigen::Index d = l.spec.dim();
    const Vector tr = trace_functional(identity(d));
    const double leak = (tr.transpose() * lindbladian(l.spec, 0.0).matrix).norm();
    if (leak > 1e-10) issues.push_back("generator does not preserve trace");
    std::vector<Projector> projs = {projector_p(l.spec, ProjectorKind::block_diagonal)};
    const auto init_issues = check_density(l.init, 1e-9);
    for (const auto& s : init_issues) issues.push_back("init: " + s);
    if (init_issues.empty()) {
      projs.push_back(projector_p(l.spec, ProjectorKind::product, aux_marginal(l.init, l.spec)));
    }
    for (const auto& p : projs) {
      const std::string name = to_string(p.kind);
      if ((p.p.matrix * p.p.matrix - p.p.matrix).norm() > 1e-10) {
        issues.push_back(name + " projector: P*P != P");
      }
      if ((p.p.matrix * p.q.matrix).norm() > 1e-10) {
        issues.push_back(name + " projector: P*Q != 0");
      }
    }
  }
  for (const auto& s : issues) std::cerr << "invalid: " << s << '\n';
  if (!issues.empty()) return kCheckFailed;
  std::cout << "ok: " << cfg.model_path << '\n';
  return kOk;
}

int cmd_simulate(const cli::RunConfig& cfg) {
  const Loaded l = load(cfg.model_path);
  const auto issues = validate_model(l.spec);
  if (!issues.empty()) {
    std::cerr << "invalid: " << issues.front() << '\n';
    return kCheckFailed;
  }
  fs::create_directories(cfg.out_dir);
  json manifest = manifest_base(cfg, l.doc, "simulate");
  const std::size_t n_steps = cfg.steps();
  const Grid grid{0.0, cfg.dt, n_steps};
  const EngineOptions opt = engine_options(cfg);
  json files = json::array();

  if (cfg.engine == "gksl" || cfg.engine == "coupled_me" || cfg.engine == "nz") {
    DeterministicRecord rec;
    if (cfg.engine == "gksl") {
      rec = solve_gksl(l.spec, l.init, grid, cfg.stride);
    } else if (cfg.engine == "coupled_me") {
      rec = solve_coupled_me(l.spec, BlockState::from_composite(l.init, l.spec), grid,
                             cfg.stride);
    } else {
      NzOptions nz;
      nz.stride = cfg.stride;
      nz.generator = cfg.nz_generator == "q" ? NzGenerator::q : NzGenerator::qq;
      rec = solve_nz(l.spec, make_projector(cfg, l.spec, l.init), l.init, grid, nz);
      manifest["integrator"]["memory_quadrature"] = to_string(nz.quadrature);
    }
    write_file(fs::path(cfg.out_dir) / (cfg.engine + ".csv"), deterministic_csv(l.spec, rec));
    files.push_back(cfg.engine + ".csv");
  } else if (cfg.engine == "mc") {
    McConfig mc;
    mc.engine = stochastic_engine(cfg.mc_engine);
    mc.n_traj = cfg.n_traj;
    mc.master_seed = cfg.seed;
    mc.dt = cfg.dt;
    mc.n_steps = n_steps;
    mc.workers = cfg.workers;
    mc.options = opt;
    const Projector proj = make_projector(cfg, l.spec, l.init);
    const McResult res = monte_carlo_mean(l.spec, l.init, mc, &proj);
    write_file(fs::path(cfg.out_dir) / "mc_mean.csv", mc_csv(l.spec, res));
    files.push_back("mc_mean.csv");
    manifest["trajectories_used"] = res.n_used;
    manifest["aborted_seeds"] = res.aborted_seeds;
  } else {
    const StochasticEngine e = stochastic_engine(cfg.engine);
    const Projector proj = make_projector(cfg, l.spec, l.init);
    json seeds = json::array();
    for (std::size_t i = 0; i < cfg.n_traj; ++i) {
      const std::uint64_t seed = derive_seed(cfg.seed, i);
      const NoisePath path = wiener_path(seed, 0.0, cfg.dt, n_steps);
      TrajectoryRecord rec;
      try {
        rec = run_stochastic(e, l.spec, l.init, path, opt, &proj);
      } catch (const NumericalAbort& ex) {
        throw NumericalAbort(std::string(ex.what()) + " (trajectory seed " +
                                 std::to_string(seed) + ")",
                             ex.step());
      }
      std::ostringstream name;
      name << "trajectory_" << std::setw(4) << std::setfill('0') << i << ".csv";
      write_file(fs::path(cfg.out_dir) / name.str(), trajectory_csv(l.spec, rec));
      files.push_back(name.str());
      seeds.push_back(seed);
    }
    manifest["trajectory_seeds"] = seeds;
  }
  manifest["files"] = files;
  write_file(fs::path(cfg.out_dir) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << files.size() << " file(s) to " << cfg.out_dir << '\n';
  return kOk;
}

int cmd_verify(const cli::RunConfig& cfg, const std::vector<double>& dts,
               std::size_t closure_traj) {
  if (dts.empty()) throw cli::ParseError("dt-list: at least one dt is required");
  const Loaded l = load(cfg.model_path);
  SuiteOptions opt;
  opt.horizon = cfg.horizon;
  opt.workers = cfg.workers;
  opt.closure_trajectories = closure_traj;
  opt.inject_a00_sign_fault = cfg.inject_fault == "A00-sign";
  if (cfg.projector == "product") {
    opt.projector = ProjectorKind::product;
    opt.rho_a = aux_marginal(l.init, l.spec);
  }
  const auto reports = consistency_suite(l.spec, l.init, cfg.seed, dts, opt);
  const std::string text = to_text(reports);
  std::cout << text;
  if (!cfg.out_dir.empty() && cfg.out_dir != ".") {
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "report.txt", text);
    json doc = manifest_base(cfg, l.doc, "verify");
    doc["dt_list"] = dts;
    doc["reports"] = to_json(reports);
    write_file(fs::path(cfg.out_dir) / "report.json", doc.dump(2) + "\n");
  }
  const bool ok = all_passed(reports);
  std::cout << (ok ? "suite passed" : "suite FAILED") << '\n';
  return ok ? kOk : kCheckFailed;
}

int cmd_kernel(const cli::RunConfig& cfg, const std::vector<double>& ts,
               const std::vector<double>& tps, const std::string& formulation) {
  if (ts.empty() || tps.empty()) {
    throw cli::ParseError("t-samples/tp-samples: at least one time each is required");
  }
  const Loaded l = load(cfg.model_path);
  const NoisePath path = wiener_path(derive_seed(cfg.seed, 0), 0.0, cfg.dt, cfg.steps());
  const KernelFormulation f =
      formulation == "block" ? KernelFormulation::block : KernelFormulation::pq_projector;
  EngineOptions opt = engine_options(cfg);
  opt.memory_window.reset();
  const KernelEvaluation ev = kernel_dump(l.spec, f, make_projector(cfg, l.spec, l.init),
                                          l.init, path, ts, tps, opt);
  std::ostringstream os;
  os << "t,t_prime";
  if (!ev.entries.empty()) {
    const Matrix& k = ev.entries.front().k;
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
      for (Eigen::Index j = 0; j < k.cols(); ++j) {
        os << ",k_" << i << '_' << j << "_re,k_" << i << '_' << j << "_im";
      }
    }
  }
  os << '\n';
  for (const auto& e : ev.entries) {
    os << cli::format_number(e.t) << ',' << cli::format_number(e.t_prime);
    for (Eigen::Index i = 0; i < e.k.rows(); ++i) {
      for (Eigen::Index j = 0; j < e.k.cols(); ++j) {
        os << ',' << cli::format_number(e.k(i, j).real()) << ','
           << cli::format_number(e.k(i, j).imag());
      }
    }
    os << '\n';
  }
  fs::create_directories(cfg.out_dir);
  write_file(fs::path(cfg.out_dir) / "kernel.csv", os.str());
  json manifest = manifest_base(cfg, l.doc, "kernel");
  manifest["formulation"] = to_string(f);
  manifest["t_samples"] = ts;
  manifest["t_prime_samples"] = tps;
  manifest["sup_norm"] = ev.sup_norm();
  write_file(fs::path(cfg.out_dir) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << ev.entries.size() << " kernel entries to "
            << (fs::path(cfg.out_dir) / "kernel.csv").string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nmq: conditional dynamics of monitored systems with an auxiliary memory"};
  app.require_subcommand(1);

  cli::RunConfig flags;
  std::string dt_list, t_samples, tp_samples, formulation = "block";
  std::size_t closure_traj = 200;

  // Flags explicitly given on the command line override the model file.
  struct Given {
    CLI::Option *engine, *dt, *horizon, *seed, *traj, *projector, *window, *renorm,
        *workers, *stride, *fault, *mc_engine;
  };
  const auto add_run_flags = [&](CLI::App* sub) {
    Given g{};
    sub->add_option("--model", flags.model_path, "model JSON file")->required();
    g.engine = sub->add_option("--engine", flags.engine,
                               "full_sme|coupled_blocks|reduced_diag|reduced_p|gksl|"
                               "coupled_me|nz|mc");
    g.mc_engine = sub->add_option("--mc-engine", flags.mc_engine,
                                  "stochastic engine averaged by --engine mc");
    g.dt = sub->add_option("--dt", flags.dt, "time step");
    g.horizon = sub->add_option("--horizon", flags.horizon, "final time T");
    g.seed = sub->add_option("--seed", flags.seed, "master seed");
    g.traj = sub->add_option("--traj", flags.n_traj, "number of trajectories");
    g.projector = sub->add_option("--projector", flags.projector, "block|product")
                      ->check(CLI::IsMember({"block", "product"}));
    g.window = sub->add_option("--window", flags.window, "memory window (duration)");
    g.renorm = sub->add_flag("--renorm", flags.renorm, "renormalize trace each step");
    sub->add_option("--out", flags.out_dir, "output directory");
    g.workers = sub->add_option("--workers", flags.workers, "worker threads (0 = all cores)");
    g.stride = sub->add_option("--stride", flags.stride, "store every n-th step");
    g.fault = sub->add_option("--inject-fault", flags.inject_fault, "A00-sign")
                  ->check(CLI::IsMember({"A00-sign"}));
    return g;
  };

  CLI::App* validate = app.add_subcommand("validate", "check a model file");
  validate->add_option("--model", flags.model_path, "model JSON file")->required();
  CLI::App* simulate = app.add_subcommand("simulate", "run an engine");
  const Given gs = add_run_flags(simulate);
  CLI::App* verify = app.add_subcommand("verify", "run the consistency suite");
  const Given gv = add_run_flags(verify);
  verify->add_option("--dt-list", dt_list, "descending comma-separated dt values")
      ->required();
  verify->add_option("--closure-traj", closure_traj, "trajectories per closure check");
  CLI::App* kernel = app.add_subcommand("kernel", "dump the two-time memory kernel");
  const Given gk = add_run_flags(kernel);
  kernel->add_option("--t-samples", t_samples, "comma-separated t values")->required();
  kernel->add_option("--tp-samples", tp_samples, "comma-separated t' values")->required();
  kernel->add_option("--formulation", formulation, "block|pq")
      ->check(CLI::IsMember({"block", "pq"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (validate->parsed()) return cmd_validate(flags);

    const Given& g = simulate->parsed() ? gs : verify->parsed() ? gv : gk;
    cli::RunConfig cfg;
    cfg.model_path = flags.model_path;
    cfg.out_dir = flags.out_dir;
    cli::apply_run_section(cli::read_json_file(flags.model_path), cfg);
    if (const char* env = std::getenv("NMQ_SEED")) {
      try {
        cfg.seed = std::stoull(env);
      } catch (const std::exception&) {
        throw cli::ParseError("NMQ_SEED: not an unsigned integer");
      }
    }
    if (*g.engine) cfg.engine = flags.engine;
    if (*g.mc_engine) cfg.mc_engine = flags.mc_engine;
    if (*g.dt) cfg.dt = flags.dt;
    if (*g.horizon) cfg.horizon = flags.horizon;
    if (*g.seed) cfg.seed = flags.seed;
    if (*g.traj) cfg.n_traj = flags.n_traj;
    if (*g.projector) cfg.projector = flags.projector;
    if (*g.window) cfg.window = flags.window;
    if (*g.renorm) cfg.renorm = flags.renorm;
    if (*g.workers) cfg.workers = flags.workers;
    if (*g.stride) cfg.stride = flags.stride;
    if (*g.fault) cfg.inject_fault = flags.inject_fault;
    cfg.check();

    if (simulate->parsed()) return cmd_simulate(cfg);
    if (verify->parsed()) return cmd_verify(cfg, parse_list(dt_list, "dt-list"), closure_traj);
    return cmd_kernel(cfg, parse_list(t_samples, "t-samples"),
                      parse_list(tp_samples, "tp-samples"), formulation);
  } catch (const cli::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort at step " << e.step() << ": " << e.what() << '\n';
    return kAbort;
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailed;
  }
}
