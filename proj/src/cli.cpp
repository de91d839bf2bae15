#include "lipdse/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "lipdse/io.hpp"

#ifndef LIPDSE_VERSION
#define LIPDSE_VERSION "0.0.0"
#endif

namespace lipdse::cli {

namespace {

namespace fs = std::filesystem;
using io::json;
using io::ValidationError;

constexpr const char* kTool = "lipdse";
constexpr const char* kManifestName = "run_manifest.json";

struct Context {
  std::size_t threads = 1;
};

struct Outcome {
  std::map<std::string, std::string> files;
  json seeds = json::array();
  int code = kExitOk;
};

using Executor = std::function<Outcome(const json& config, const Context& ctx, std::ostream& out)>;

// ---------------------------------------------------------------------------
// small parsing helpers

double parse_number(std::string_view text, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v))
    throw ValidationError(what + ": '" + std::string(text) + "' is not a finite number");
  return v;
}

Vec4 parse_vec4(const std::string& text, const std::string& flag) {
  Vec4 v;
  std::string_view rest(text);
  for (int i = 0; i < 4; ++i) {
    const auto comma = rest.find(',');
    if ((comma == std::string_view::npos) != (i == 3))
      throw ValidationError(flag + ": expected 4 comma-separated numbers");
    v(i) = parse_number(rest.substr(0, comma), flag);
    if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
  }
  return v;
}

json mat_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < M.cols(); ++k) row.push_back(M(i, k));
    rows.push_back(row);
  }
  return rows;
}

const json& field(const json& j, const std::string& key, const std::string& origin) {
  if (!j.is_object() || !j.contains(key))
    throw ValidationError(origin + ": missing field '" + key + "'");
  return j.at(key);
}

double number_at(const json& j, const std::string& key, const std::string& origin) {
  const json& v = field(j, key, origin);
  if (!v.is_number() || !std::isfinite(v.get<double>()))
    throw ValidationError(origin + ": field '" + key + "' must be a finite number");
  return v.get<double>();
}

std::uint64_t uint_at(const json& j, const std::string& key, const std::string& origin) {
  const json& v = field(j, key, origin);
  if (!v.is_number_unsigned())
    throw ValidationError(origin + ": field '" + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

std::string string_at(const json& j, const std::string& key, const std::string& origin) {
  const json& v = field(j, key, origin);
  if (!v.is_string()) throw ValidationError(origin + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

template <class F>
auto as_validation(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  } catch (const std::domain_error& e) {
    throw ValidationError(e.what());
  }
}

json trajectory_to_json(const InputTrajectory& tr) {
  json records = json::array();
  for (std::size_t k = 0; k < tr.times.size(); ++k)
    records.push_back(json::array({tr.times[k], tr.values[k](0), tr.values[k](1),
                                   tr.values[k](2), tr.values[k](3)}));
  return json{{"interpolation", std::string(to_string(tr.interpolation))}, {"records", records}};
}

InputTrajectory trajectory_from_json(const json& j) {
  const std::string origin = "config.inputs";
  InputTrajectory tr;
  tr.interpolation = as_validation([&] { return parse_interpolation(string_at(j, "interpolation", origin)); });
  const json& records = field(j, "records", origin);
  if (!records.is_array() || records.empty())
    throw ValidationError(origin + ": 'records' must be a non-empty array");
  for (const auto& r : records) {
    if (!r.is_array() || r.size() != 5)
      throw ValidationError(origin + ": every record needs 5 numbers");
    const double t = r[0].get<double>();
    if (!tr.times.empty() && !(t > tr.times.back()))
      throw ValidationError(origin + ": record times must be strictly increasing");
    tr.times.push_back(t);
    tr.values.push_back(Input(r[1].get<double>(), r[2].get<double>(), r[3].get<double>(),
                              r[4].get<double>()));
  }
  return tr;
}

// ---------------------------------------------------------------------------
// executors: resolved configuration -> output files

Outcome exec_lipschitz_analytic(const json& cfg, const Context&, std::ostream& out) {
  const auto p = io::params_from_json(field(cfg, "params", "config"), "config.params");
  const auto b = io::bounds_from_json(field(cfg, "bounds", "config"), "config.bounds");
  const auto c = derive_constants(p);
  const auto k = kappas(b);
  const auto gf = gamma_f_analytic(c, b);
  const auto gh = gamma_h_analytic(c, b);

  json report{{"constants", io::constants_to_json(c)},
              {"kappa", {{"kx", io::vec_to_json(k.kx)}, {"ku", io::vec_to_json(k.ku)}}},
              {"gamma_f_tilde", gamma_f_tilde(c, k)},
              {"gamma_f", gf.value},
              {"gamma_h", gh.value},
              {"estimates", json::array({io::estimate_to_json(gf), io::estimate_to_json(gh)})}};
  out << "gamma_f (analytic) = " << io::format_double(gf.value) << "\n"
      << "gamma_h (analytic) = " << io::format_double(gh.value) << "\n";
  Outcome o;
  o.files["lipschitz_analytic.json"] = io::dump(report);
  return o;
}

LipschitzEstimate numeric_estimate(LipTarget target, LipMethod method, const DerivedConstants& c,
                                   const BoundsBox& b, qmc::SequenceKind kind,
                                   std::uint64_t seed, std::size_t s, const Context& ctx) {
  SamplingOptions opt{ctx.threads};
  return method == LipMethod::Pairwise ? estimate_gamma_pairwise(target, c, b, kind, seed, s, opt)
                                       : estimate_gamma_jacobian(target, c, b, kind, seed, s, opt);
}

Outcome exec_lipschitz_numeric(const json& cfg, const Context& ctx, std::ostream& out) {
  const std::string origin = "config";
  const auto p = io::params_from_json(field(cfg, "params", origin), "config.params");
  const auto b = io::bounds_from_json(field(cfg, "bounds", origin), "config.bounds");
  const auto kind = as_validation([&] { return qmc::parse_sequence_kind(string_at(cfg, "sampler", origin)); });
  const auto method = as_validation([&] { return parse_method(string_at(cfg, "method", origin)); });
  if (method == LipMethod::Analytic)
    throw ValidationError("--method must be jacobian or pairwise");
  const auto s = static_cast<std::size_t>(uint_at(cfg, "samples", origin));
  const auto seed = uint_at(cfg, "seed", origin);
  if (method == LipMethod::JacobianSup && s < 1)
    throw ValidationError("--samples must be >= 1 for the jacobian method");
  if (method == LipMethod::Pairwise && s < 2)
    throw ValidationError("--samples must be >= 2 for the pairwise method");

  const auto c = derive_constants(p);
  const auto gf = numeric_estimate(LipTarget::Process, method, c, b, kind, seed, s, ctx);
  const auto gh = numeric_estimate(LipTarget::Measurement, method, c, b, kind, seed, s, ctx);
  json report{{"gamma_f", gf.value},
              {"gamma_h", gh.value},
              {"estimates", json::array({io::estimate_to_json(gf), io::estimate_to_json(gh)})}};
  out << "gamma_f (" << to_string(method) << ", " << qmc::to_string(kind) << ", s=" << s
      << ") = " << io::format_double(gf.value) << "\n"
      << "gamma_h (" << to_string(method) << ", " << qmc::to_string(kind) << ", s=" << s
      << ") = " << io::format_double(gh.value) << "\n";
  Outcome o;
  o.files["lipschitz_numeric.json"] = io::dump(report);
  o.seeds.push_back(seed);
  return o;
}

Outcome exec_lipschitz_table(const json& cfg, const Context& ctx, std::ostream& out) {
  const std::string origin = "config";
  const auto p = io::params_from_json(field(cfg, "params", origin), "config.params");
  const auto b = io::bounds_from_json(field(cfg, "bounds", origin), "config.bounds");
  const auto s = static_cast<std::size_t>(uint_at(cfg, "samples", origin));
  const auto runs = uint_at(cfg, "runs", origin);
  const auto seed = uint_at(cfg, "seed", origin);
  if (s < 1) throw ValidationError("--samples must be >= 1");
  if (runs < 1) throw ValidationError("--runs must be >= 1");

  const auto c = derive_constants(p);
  Outcome o;
  for (std::uint64_t r = 0; r < runs; ++r) o.seeds.push_back(seed + r);

  json rows = json::array();
  std::string csv = "target,analytic,random_median,random_mean,sobol,halton\n";
  out << "target  analytic      random(med)   sobol         halton\n";
  for (LipTarget target : {LipTarget::Process, LipTarget::Measurement}) {
    const double analytic = target == LipTarget::Process ? gamma_f_analytic(c, b).value
                                                         : gamma_h_analytic(c, b).value;
    std::vector<double> random;
    for (std::uint64_t r = 0; r < runs; ++r)
      random.push_back(numeric_estimate(target, LipMethod::JacobianSup, c, b,
                                        qmc::SequenceKind::Random, seed + r, s, ctx)
                           .value);
    std::vector<double> sorted = random;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    double mean = 0.0;
    for (double v : random) mean += v;
    mean /= static_cast<double>(n);
    const double sobol = numeric_estimate(target, LipMethod::JacobianSup, c, b,
                                          qmc::SequenceKind::Sobol, seed, s, ctx).value;
    const double halton = numeric_estimate(target, LipMethod::JacobianSup, c, b,
                                           qmc::SequenceKind::Halton, seed, s, ctx).value;
    const double lo = std::min({median, sobol, halton});
    const double hi = std::max({median, sobol, halton});
    const double spread = lo > 0.0 ? (hi - lo) / lo : 0.0;

    const std::string name(to_string(target));
    rows.push_back({{"target", name},
                    {"analytic", analytic},
                    {"random", random},
                    {"random_median", median},
                    {"random_mean", mean},
                    {"sobol", sobol},
                    {"halton", halton},
                    {"relative_spread", spread}});
    csv += name + "," + io::format_double(analytic) + "," + io::format_double(median) + "," +
           io::format_double(mean) + "," + io::format_double(sobol) + "," +
           io::format_double(halton) + "\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-7s %-13.6g %-13.6g %-13.6g %-13.6g\n", name.c_str(),
                  analytic, median, sobol, halton);
    out << line;
  }
  o.files["lipschitz_table.json"] = io::dump(json{{"samples", s}, {"runs", runs}, {"rows", rows}});
  o.files["lipschitz_table.csv"] = csv;
  return o;
}

Outcome exec_sample_emit(const json& cfg, const Context&, std::ostream& out) {
  const std::string origin = "config";
  qmc::SequenceSpec spec;
  spec.kind = as_validation([&] { return qmc::parse_sequence_kind(string_at(cfg, "sampler", origin)); });
  spec.dim = static_cast<std::size_t>(uint_at(cfg, "dim", origin));
  spec.seed = uint_at(cfg, "seed", origin);
  const auto s = static_cast<std::size_t>(uint_at(cfg, "samples", origin));
  const auto trials = static_cast<std::size_t>(uint_at(cfg, "discrepancy_trials", origin));
  if (spec.dim < 1 || spec.dim > qmc::kMaxDim)
    throw ValidationError("--dim must lie in [1, " + std::to_string(qmc::kMaxDim) + "]");
  if (s < 1) throw ValidationError("--samples must be >= 1");

  const auto points = qmc::generate(spec, s);
  std::string csv;
  for (std::size_t j = 0; j < spec.dim; ++j) csv += (j ? ",x" : "x") + std::to_string(j + 1);
  csv += "\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto row = points[i];
    for (std::size_t j = 0; j < row.size(); ++j) csv += (j ? "," : "") + io::format_double(row[j]);
    csv += "\n";
  }
  Outcome o;
  o.files["points.csv"] = csv;
  o.seeds.push_back(spec.seed);
  out << "wrote " << s << " " << qmc::to_string(spec.kind) << " points in dimension " << spec.dim
      << "\n";
  if (trials > 0) {
    const double d = qmc::star_discrepancy_estimate(points, trials, spec.seed);
    o.files["sample_report.json"] =
        io::dump(json{{"star_discrepancy_estimate", d}, {"trials", trials}, {"samples", s}});
    out << "star discrepancy estimate (" << trials << " boxes) = " << io::format_double(d) << "\n";
  }
  return o;
}

struct ResolvedGamma {
  double value = 0.0;
  json record;
};

ResolvedGamma resolve_gamma(const json& g, const DerivedConstants* c, const Context& ctx,
                            Outcome& o) {
  const std::string origin = "config.gamma";
  const std::string source = string_at(g, "source", origin);
  ResolvedGamma r;
  if (source == "explicit") {
    r.value = number_at(g, "value", origin);
    if (r.value < 0.0) throw ValidationError("--gamma must be >= 0");
    r.record = json{{"source", source}, {"value", r.value}};
    return r;
  }
  if (c == nullptr) throw ValidationError(origin + ": '" + source + "' needs a generator model");
  const auto b = io::bounds_from_json(field(g, "bounds", origin), "config.gamma.bounds");
  if (source == "analytic") {
    r.value = gamma_f_analytic(*c, b).value;
    r.record = json{{"source", source}, {"value", r.value}};
    return r;
  }
  if (source == "numeric") {
    const auto kind = as_validation([&] { return qmc::parse_sequence_kind(string_at(g, "sampler", origin)); });
    const auto s = static_cast<std::size_t>(uint_at(g, "samples", origin));
    const auto seed = uint_at(g, "seed", origin);
    if (s < 1) throw ValidationError("--samples must be >= 1");
    const auto est = numeric_estimate(LipTarget::Process, LipMethod::JacobianSup, *c, b, kind,
                                      seed, s, ctx);
    r.value = est.value;
    r.record = json{{"source", source}, {"value", r.value}, {"estimate", io::estimate_to_json(est)}};
    o.seeds.push_back(seed);
    return r;
  }
  throw ValidationError(origin + ": unknown source '" + source + "'");
}

Outcome exec_observer_synth(const json& cfg, const Context& ctx, std::ostream& out) {
  const std::string origin = "config";
  const std::string diagnostic = string_at(cfg, "diagnostic", origin);
  Outcome o;

  LMIProblem prob;
  ResolvedGamma gamma;
  if (diagnostic == "stable" || diagnostic == "unstable") {
    prob.A = (diagnostic == "stable" ? -1.0 : 1.0) * Mat4::Identity();
    prob.C = Mat2x4::Zero();
    gamma = resolve_gamma(field(cfg, "gamma", origin), nullptr, ctx, o);
  } else if (diagnostic == "none") {
    const auto p = io::params_from_json(field(cfg, "params", origin), "config.params");
    const auto c = derive_constants(p);
    const json& op = field(cfg, "operating_point", origin);
    const Vec4 x0 = io::vec4_from_json(op, "config.operating_point", "x0");
    const Vec4 u0 = io::vec4_from_json(op, "config.operating_point", "u0");
    prob.A = build_matrices(c).A;
    prob.C = linearize_output(c, x0, u0).C;
    gamma = resolve_gamma(field(cfg, "gamma", origin), &c, ctx, o);
  } else {
    throw ValidationError("--diagnostic must be none, stable or unstable");
  }
  prob.gamma_f = gamma.value;
  const json& margin = field(cfg, "margin", origin);
  prob.margin = margin.is_null() ? default_margin(prob.A) : number_at(cfg, "margin", origin);
  as_validation([&] {
    prob.validate();
    return 0;
  });

  const json& sj = field(cfg, "solver", origin);
  SolverSettings settings;
  settings.max_iterations = static_cast<int>(uint_at(sj, "max_iterations", "config.solver"));
  settings.p_ceiling = number_at(sj, "p_ceiling", "config.solver");
  settings.y_bound = number_at(sj, "y_bound", "config.solver");
  settings.p_floor_ratio = number_at(sj, "p_floor_ratio", "config.solver");

  const auto result = as_validation([&] { return solve_lmi(prob, settings); });
  const double ceiling = gamma_ceiling(prob.A, prob.C);

  json report{{"diagnostic", diagnostic},
              {"gamma", gamma.record},
              {"gamma_f", prob.gamma_f},
              {"gamma_ceiling", std::isfinite(ceiling) ? json(ceiling) : json("inf")},
              {"margin", prob.margin},
              {"A", mat_to_json(prob.A)},
              {"C", mat_to_json(prob.C)},
              {"feasible", result.feasible()},
              {"best_max_eig", result.best_max_eig},
              {"iterations", result.iterations}};

  if (!result.feasible()) {
    o.code = kExitInfeasible;
    o.files["lmi_report.json"] = io::dump(report);
    out << "LMI infeasible for gamma_f = " << io::format_double(prob.gamma_f)
        << " (best lambda_max = " << io::format_double(result.best_max_eig) << ")\n";
    if (prob.gamma_f >= ceiling)
      out << "gamma_f is not below the ceiling " << io::format_double(ceiling)
          << " (smallest singular value of A on ker C); no gain exists for it\n";
    if (diagnostic == "none")
      out << (string_at(gamma.record, "source", "gamma") == "numeric"
                  ? "retry with a smaller explicit --gamma value\n"
                  : "retry with --gamma numeric or a smaller explicit value\n");
    return o;
  }

  const auto& cert = *result.certificate;
  const auto block = min_max_eig_sym(assemble_lmi(prob, cert.P, cert.Y, cert.eta));
  const auto pe = min_max_eig_sym(cert.P);
  const auto gain = extract_gain(cert);
  report["verified"] = {{"max_eig", block.max}, {"min_eig_P", pe.min}};
  o.files["lmi_report.json"] = io::dump(report);
  o.files["certificate.json"] = io::dump(io::certificate_to_json(cert));
  o.files["gain.json"] = io::dump(io::gain_to_json(gain));
  out << "LMI feasible for gamma_f = " << io::format_double(prob.gamma_f) << "\n"
      << "lambda_max of re-verified block = " << io::format_double(block.max) << "\n"
      << "lambda_min(P) = " << io::format_double(pe.min) << "\n";
  return o;
}

Outcome exec_dse_simulate(const json& cfg, const Context&, std::ostream& out) {
  const std::string origin = "config";
  const auto p = io::params_from_json(field(cfg, "params", origin), "config.params");
  const auto gain = io::gain_from_json(field(cfg, "gain", origin), "config.gain");
  const auto traj = trajectory_from_json(field(cfg, "inputs", origin));
  const json& sj = field(cfg, "sim", origin);
  const std::string so = "config.sim";
  SimConfig sim;
  sim.dt = number_at(sj, "dt", so);
  sim.t_final = number_at(sj, "t_final", so);
  sim.x0 = io::vec4_from_json(sj, so, "x0");
  sim.xhat0 = io::vec4_from_json(sj, so, "xhat0");
  sim.pmu_period = number_at(sj, "pmu_period", so);
  sim.noise_std = number_at(sj, "noise_std", so);
  sim.noise_seed = uint_at(sj, "noise_seed", so);
  const double fraction = number_at(cfg, "convergence_fraction", origin);
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ValidationError("convergence_fraction must lie in (0, 1)");
  as_validation([&] {
    sim.validate();
    return 0;
  });

  const auto c = derive_constants(p);
  const auto m = build_matrices(c);
  const auto trace = simulate(c, m, gain, traj, sim);
  const auto metrics = error_metrics(trace, fraction);

  Outcome o;
  o.seeds.push_back(sim.noise_seed);
  o.files["trace.csv"] = io::trace_to_csv(trace);
  o.files["metrics.json"] = io::dump(io::metrics_to_json(metrics));
  for (auto& [name, text] : io::plot_series(trace)) o.files[name] = std::move(text);

  out << "steps " << trace.times.size() - 1 << ", initial error "
      << io::format_double(trace.error_norm.front()) << ", final error "
      << io::format_double(metrics.final_err) << "\n"
      << "convergence time "
      << (metrics.convergence_time ? io::format_double(*metrics.convergence_time) : "none")
      << "\n";
  return o;
}

const std::map<std::string, Executor>& executors() {
  static const std::map<std::string, Executor> table{
      {"lipschitz analytic", exec_lipschitz_analytic},
      {"lipschitz numeric", exec_lipschitz_numeric},
      {"lipschitz table", exec_lipschitz_table},
      {"sample emit", exec_sample_emit},
      {"observer synth", exec_observer_synth},
      {"dse simulate", exec_dse_simulate},
  };
  return table;
}

// ---------------------------------------------------------------------------
// output

int finish(const std::string& command, const json& argv, const json& config, Outcome outcome,
           const fs::path& out_dir) {
  json outputs = json::array();
  for (const auto& [name, text] : outcome.files) outputs.push_back(name);
  const json manifest{{"tool", kTool},
                      {"version", LIPDSE_VERSION},
                      {"command", command},
                      {"argv", argv},
                      {"config", config},
                      {"seeds", outcome.seeds},
                      {"outputs", outputs},
                      {"exit_code", outcome.code}};
  outcome.files[kManifestName] = io::dump(manifest);

  fs::create_directories(out_dir);
  // Stage everything first so a failure part-way leaves no renamed outputs.
  std::vector<std::pair<fs::path, fs::path>> staged;
  for (const auto& [name, text] : outcome.files) {
    fs::path tmp = out_dir / (name + ".tmp");
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f || !(f << text)) throw std::runtime_error("cannot write " + tmp.string());
    staged.emplace_back(tmp, out_dir / name);
  }
  for (const auto& [tmp, dst] : staged) fs::rename(tmp, dst);
  return outcome.code;
}

int execute(const std::string& command, const json& argv, const json& config,
            const Context& ctx, const fs::path& out_dir, std::ostream& out) {
  const auto it = executors().find(command);
  if (it == executors().end()) throw ValidationError("unknown command '" + command + "'");
  // The executor always sees the serialized form, so a replay from the
  // manifest starts from exactly the same numbers.
  const json canonical = json::parse(config.dump());
  Outcome outcome = it->second(canonical, ctx, out);
  return finish(command, argv, canonical, std::move(outcome), out_dir);
}

// ---------------------------------------------------------------------------
// command-line front end

struct Flags {
  std::string out_dir = "results";
  std::string params, bounds, inputs, config_file, gain_file, manifest;
  std::string sampler = "sobol";
  std::string method = "jacobian";
  std::string gamma = "numeric";
  std::string diagnostic = "none";
  std::string interp;
  std::string x0, xhat0, u0;
  std::size_t samples = 2000;
  std::uint64_t seed = 0;
  std::uint64_t runs = 10;
  std::size_t dim = 2;
  std::size_t trials = 0;
  std::size_t threads = 1;
  double margin = 0.0;
  int max_iter = 5000;
  double y_bound = SolverSettings{}.y_bound;
  double p_floor_ratio = SolverSettings{}.p_floor_ratio;
  double dt = 0.0, t_final = 0.0, pmu_period = 0.0, noise_std = 0.0;
  std::uint64_t noise_seed = 0;
};

// argv as recorded in the manifest: everything except the output directory.
json recorded_argv(const std::vector<std::string>& args) {
  json out = json::array();
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out-dir") {
      ++i;
      continue;
    }
    if (args[i].rfind("--out-dir=", 0) == 0) continue;
    out.push_back(args[i]);
  }
  return out;
}

json require_params(const Flags& f) {
  if (f.params.empty()) throw ValidationError("--params is required");
  return io::params_to_json(io::load_params(f.params));
}

json require_bounds(const Flags& f) {
  if (f.bounds.empty()) throw ValidationError("--bounds is required");
  return io::bounds_to_json(io::load_bounds(f.bounds));
}

// Scenario file: simulation settings plus an input CSV path relative to it.
struct Scenario {
  json data = json::object();
  fs::path dir;
};

Scenario load_scenario(const std::string& path) {
  Scenario s;
  if (path.empty()) return s;
  s.data = io::read_json_file(path);
  if (!s.data.is_object()) throw ValidationError(path + ": expected a JSON object");
  s.dir = fs::path(path).parent_path();
  return s;
}

InputTrajectory scenario_inputs(const Flags& f, const Scenario& sc, CLI::App* sub) {
  std::string mode = "linear";
  if (sc.data.contains("interpolation")) mode = string_at(sc.data, "interpolation", "scenario");
  if (sub->count("--interp")) mode = f.interp;
  const auto interp = as_validation([&] { return parse_interpolation(mode); });
  std::string path;
  if (sub->count("--inputs"))
    path = f.inputs;
  else if (sc.data.contains("inputs"))
    path = (sc.dir / string_at(sc.data, "inputs", "scenario")).string();
  if (path.empty()) throw ValidationError("--inputs (or an 'inputs' entry in --config) is required");
  try {
    return load_inputs(path, interp);
  } catch (const ParseError& e) {
    throw ValidationError(e.what());
  }
}

double scenario_number(const Scenario& sc, const char* key, double fallback) {
  return sc.data.contains(key) ? number_at(sc.data, key, "scenario") : fallback;
}

json build_synth_config(const Flags& f, CLI::App* sub) {
  json cfg{{"diagnostic", f.diagnostic},
           {"margin", sub->count("--margin") ? json(f.margin) : json(nullptr)},
           {"solver",
            {{"max_iterations", f.max_iter},
             {"p_ceiling", SolverSettings{}.p_ceiling},
             {"y_bound", f.y_bound},
             {"p_floor_ratio", f.p_floor_ratio}}}};
  if (f.max_iter < 0) throw ValidationError("--max-iter must be >= 0");

  json gamma;
  if (f.diagnostic != "none" && !sub->count("--gamma")) {
    gamma = {{"source", "explicit"}, {"value", 0.0}};
  } else if (f.gamma == "analytic" || f.gamma == "numeric") {
    if (f.diagnostic != "none")
      throw ValidationError("--diagnostic runs take an explicit --gamma value");
    gamma = {{"source", f.gamma}, {"bounds", require_bounds(f)}};
    if (f.gamma == "numeric") {
      gamma["sampler"] = f.sampler;
      gamma["samples"] = f.samples;
      gamma["seed"] = f.seed;
    }
  } else {
    const double v = parse_number(f.gamma, "--gamma");
    if (v < 0.0) throw ValidationError("--gamma must be >= 0");
    gamma = {{"source", "explicit"}, {"value", v}};
  }
  cfg["gamma"] = gamma;
  if (f.diagnostic != "none") return cfg;

  cfg["params"] = require_params(f);
  // Operating point: flags first, otherwise the scenario's initial state and input.
  const Scenario sc = load_scenario(f.config_file);
  Vec4 x0, u0;
  if (!f.x0.empty())
    x0 = parse_vec4(f.x0, "--x0");
  else if (sc.data.contains("x0"))
    x0 = io::vec4_from_json(sc.data, f.config_file, "x0");
  else
    throw ValidationError("operating point: pass --x0 or a --config with 'x0'");
  if (!f.u0.empty())
    u0 = parse_vec4(f.u0, "--u0");
  else if (sub->count("--inputs") || sc.data.contains("inputs"))
    u0 = sample_input(scenario_inputs(f, sc, sub), 0.0);
  else
    throw ValidationError("operating point: pass --u0, --inputs or a --config with 'inputs'");
  cfg["operating_point"] = {{"x0", io::vec_to_json(x0)}, {"u0", io::vec_to_json(u0)}};
  return cfg;
}

json build_dse_config(const Flags& f, CLI::App* sub) {
  if (f.gain_file.empty()) throw ValidationError("--gain is required");
  json cfg{{"params", require_params(f)},
           {"gain", io::gain_to_json(io::load_gain(f.gain_file))}};
  const Scenario sc = load_scenario(f.config_file);
  cfg["inputs"] = trajectory_to_json(scenario_inputs(f, sc, sub));

  Vec4 x0;
  if (!f.x0.empty())
    x0 = parse_vec4(f.x0, "--x0");
  else if (sc.data.contains("x0"))
    x0 = io::vec4_from_json(sc.data, f.config_file, "x0");
  else
    throw ValidationError("--x0 (or 'x0' in --config) is required");
  Vec4 xhat0 = x0;
  if (!f.xhat0.empty())
    xhat0 = parse_vec4(f.xhat0, "--xhat0");
  else if (sc.data.contains("xhat0"))
    xhat0 = io::vec4_from_json(sc.data, f.config_file, "xhat0");
  else if (sc.data.contains("xhat0_offset"))
    xhat0 = x0 + io::vec4_from_json(sc.data, f.config_file, "xhat0_offset");

  auto pick = [&](const char* flag, double flag_value, const char* key, double fallback) {
    return sub->count(flag) ? flag_value : scenario_number(sc, key, fallback);
  };
  std::uint64_t noise_seed = f.noise_seed;
  if (!sub->count("--noise-seed") && sc.data.contains("noise_seed"))
    noise_seed = uint_at(sc.data, "noise_seed", f.config_file);
  cfg["sim"] = {{"dt", pick("--dt", f.dt, "dt", 1e-3)},
                {"t_final", pick("--t-final", f.t_final, "t_final", 10.0)},
                {"x0", io::vec_to_json(x0)},
                {"xhat0", io::vec_to_json(xhat0)},
                {"pmu_period", pick("--pmu-period", f.pmu_period, "pmu_period", 0.0)},
                {"noise_std", pick("--noise-std", f.noise_std, "noise_std", 0.0)},
                {"noise_seed", noise_seed}};
  cfg["convergence_fraction"] = scenario_number(sc, "convergence_fraction", 0.01);
  return cfg;
}

int replay(const Flags& f, const Context& ctx, std::ostream& out) {
  if (f.manifest.empty()) throw ValidationError("--manifest is required");
  const json m = io::read_json_file(f.manifest);
  const std::string command = string_at(m, "command", f.manifest);
  if (string_at(m, "tool", f.manifest) != kTool)
    throw ValidationError(f.manifest + ": not a " + std::string(kTool) + " manifest");
  return execute(command, field(m, "argv", f.manifest), field(m, "config", f.manifest), ctx,
                 f.out_dir, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lipschitz constants, observer synthesis and dynamic state estimation for a "
               "fourth-order synchronous generator",
               kTool};
  app.require_subcommand(1);
  app.set_version_flag("--version", LIPDSE_VERSION);
  Flags f;

  auto add_out = [&](CLI::App* s) {
    s->add_option("--out-dir", f.out_dir, "Output directory")->capture_default_str();
  };
  auto add_model = [&](CLI::App* s, bool bounds) {
    s->add_option("--params", f.params, "Generator parameter JSON");
    if (bounds) s->add_option("--bounds", f.bounds, "Bounds box JSON");
  };
  auto add_sampling = [&](CLI::App* s) {
    s->add_option("--sampler", f.sampler, "random|halton|sobol")->capture_default_str();
    s->add_option("--samples", f.samples, "Sample count")->capture_default_str();
    s->add_option("--seed", f.seed, "Seed (random) or skip offset (halton, sobol)")
        ->capture_default_str();
    s->add_option("--threads", f.threads, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
  };

  auto* lip = app.add_subcommand("lipschitz", "Lipschitz constants of f and h");
  lip->require_subcommand(1);
  auto* lip_an = lip->add_subcommand("analytic", "Closed-form upper bounds");
  add_model(lip_an, true);
  add_out(lip_an);
  auto* lip_num = lip->add_subcommand("numeric", "Sampling estimates");
  add_model(lip_num, true);
  add_sampling(lip_num);
  lip_num->add_option("--method", f.method, "jacobian|pairwise")->capture_default_str();
  add_out(lip_num);
  auto* lip_tab = lip->add_subcommand("table", "Analytic versus random, sobol and halton");
  add_model(lip_tab, true);
  add_sampling(lip_tab);
  lip_tab->add_option("--runs", f.runs, "Random-sampler repetitions (seeds seed..seed+runs-1)")
      ->capture_default_str();
  add_out(lip_tab);

  auto* obs = app.add_subcommand("observer", "Observer design");
  obs->require_subcommand(1);
  auto* synth = obs->add_subcommand("synth", "Solve the observer LMI and write the gain");
  add_model(synth, true);
  add_sampling(synth);
  synth->add_option("--gamma", f.gamma, "analytic|numeric|<value>")->capture_default_str();
  synth->add_option("--config", f.config_file, "Scenario JSON (operating point source)");
  synth->add_option("--inputs", f.inputs, "Input CSV (u0 = first record)");
  synth->add_option("--interp", f.interp, "linear|hold");
  synth->add_option("--x0", f.x0, "Linearization state, comma separated");
  synth->add_option("--u0", f.u0, "Linearization input, comma separated");
  synth->add_option("--diagnostic", f.diagnostic, "none|stable (A=-I, C=0)|unstable (A=+I, C=0)")
      ->capture_default_str();
  synth->add_option("--margin", f.margin, "Strictness margin (default 1e-6*max(|A|,1))");
  synth->add_option("--max-iter", f.max_iter, "Solver iteration cap")->capture_default_str();
  synth->add_option("--y-bound", f.y_bound, "Frobenius bound on Y")->capture_default_str();
  synth->add_option("--p-floor", f.p_floor_ratio, "Lower bound on eig(P) relative to its cap")
      ->capture_default_str();
  add_out(synth);

  auto* dse = app.add_subcommand("dse", "Dynamic state estimation");
  dse->require_subcommand(1);
  auto* sim = dse->add_subcommand("simulate", "Co-simulate plant and observer");
  add_model(sim, false);
  sim->add_option("--gain", f.gain_file, "Gain JSON");
  sim->add_option("--config", f.config_file, "Scenario JSON");
  sim->add_option("--inputs", f.inputs, "Input CSV (t,Tm,Efd,iR,iI)");
  sim->add_option("--interp", f.interp, "linear|hold");
  sim->add_option("--dt", f.dt, "Step size [s]");
  sim->add_option("--t-final", f.t_final, "Horizon [s]");
  sim->add_option("--x0", f.x0, "Plant initial state, comma separated");
  sim->add_option("--xhat0", f.xhat0, "Observer initial state, comma separated");
  sim->add_option("--pmu-period", f.pmu_period, "Measurement period [s], 0 = every step");
  sim->add_option("--noise-std", f.noise_std, "Measurement noise standard deviation");
  sim->add_option("--noise-seed", f.noise_seed, "Measurement noise seed");
  add_out(sim);

  auto* sample = app.add_subcommand("sample", "Point sequences");
  sample->require_subcommand(1);
  auto* emit = sample->add_subcommand("emit", "Write points to CSV");
  add_sampling(emit);
  emit->add_option("--dim", f.dim, "Dimension (1..8)")->capture_default_str();
  emit->add_option("--discrepancy", f.trials, "Star-discrepancy trial boxes (0 = skip)")
      ->capture_default_str();
  add_out(emit);

  auto* man = app.add_subcommand("manifest", "Run manifests");
  man->require_subcommand(1);
  auto* rep = man->add_subcommand("replay", "Re-run a command from its run_manifest.json");
  rep->add_option("--manifest", f.manifest, "Manifest path");
  rep->add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
  add_out(rep);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  const Context ctx{f.threads};
  const json argv = recorded_argv(args);
  try {
    if (*lip_an) {
      const json cfg{{"params", require_params(f)}, {"bounds", require_bounds(f)}};
      return execute("lipschitz analytic", argv, cfg, ctx, f.out_dir, out);
    }
    if (*lip_num) {
      const json cfg{{"params", require_params(f)}, {"bounds", require_bounds(f)},
                     {"sampler", f.sampler},        {"samples", f.samples},
                     {"seed", f.seed},              {"method", f.method}};
      return execute("lipschitz numeric", argv, cfg, ctx, f.out_dir, out);
    }
    if (*lip_tab) {
      const json cfg{{"params", require_params(f)}, {"bounds", require_bounds(f)},
                     {"samples", f.samples},        {"runs", f.runs},
                     {"seed", f.seed}};
      return execute("lipschitz table", argv, cfg, ctx, f.out_dir, out);
    }
    if (*synth) return execute("observer synth", argv, build_synth_config(f, synth), ctx, f.out_dir, out);
    if (*sim) return execute("dse simulate", argv, build_dse_config(f, sim), ctx, f.out_dir, out);
    if (*emit) {
      const json cfg{{"sampler", f.sampler}, {"dim", f.dim}, {"samples", f.samples},
                     {"seed", f.seed},       {"discrepancy_trials", f.trials}};
      return execute("sample emit", argv, cfg, ctx, f.out_dir, out);
    }
    if (*rep) return replay(f, ctx, out);
  } catch (const NumericalFailure& e) {
    err << "error: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitValidation;
}

int run_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace lipdse::cli
