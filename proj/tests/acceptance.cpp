// Acceptance checks. Prints one PASS/FAIL line per check; an optional
// argument selects a single check by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli_support.hpp"
#include "lipdse/dse.hpp"
#include "lipdse/io.hpp"
#include "lipdse/lipschitz.hpp"
#include "lipdse/observer.hpp"
#include "lipdse/qmc.hpp"
#include "oracles.hpp"

using namespace lipdse;
using clitest::data;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

struct Check {
  int id;
  const char* name;
  double budget_s;
  std::function<Verdict()> body;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

GeneratorParams shipped_params() { return io::load_params(data("gen_params.json")); }
BoundsBox shipped_bounds() { return io::load_bounds(data("bounds.json")); }

struct Scenario {
  State x0;
  Vec4 offset;
  InputTrajectory inputs;
  double dt, t_final, fraction;
};

Scenario shipped_scenario() {
  const auto j = io::read_json_file(data("scenario.json"));
  Scenario sc;
  sc.x0 = io::vec4_from_json(j, "scenario.json", "x0");
  sc.offset = io::vec4_from_json(j, "scenario.json", "xhat0_offset");
  sc.inputs = load_inputs(data(j.at("inputs").get<std::string>()),
                          parse_interpolation(j.at("interpolation").get<std::string>()));
  sc.dt = j.at("dt").get<double>();
  sc.t_final = j.at("t_final").get<double>();
  sc.fraction = j.at("convergence_fraction").get<double>();
  return sc;
}

struct Synthesis {
  LmiResult result;
  double ceiling;
};

Synthesis synthesize(const DerivedConstants& c, const Scenario& sc, double gamma) {
  LMIProblem prob;
  prob.A = build_matrices(c).A;
  prob.C = linearize_output(c, sc.x0, sample_input(sc.inputs, 0.0)).C;
  prob.gamma_f = gamma;
  prob.margin = default_margin(prob.A);
  return {solve_lmi(prob), gamma_ceiling(prob.A, prob.C)};
}

SimConfig sim_config(const Scenario& sc, const Vec4& xhat0) {
  SimConfig cfg;
  cfg.dt = sc.dt;
  cfg.t_final = sc.t_final;
  cfg.x0 = sc.x0;
  cfg.xhat0 = xhat0;
  return cfg;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Verdict degenerate_box() {
  const auto c = derive_constants(shipped_params());
  const BoundsBox zero;
  const double h = gamma_h_analytic(c, zero).value;
  const double f = gamma_f_analytic(c, zero).value;
  return {std::abs(h - 2.0) <= 1e-12 && f == 0.0, "gamma_h=" + fmt(h) + " gamma_f=" + fmt(f)};
}

Verdict dominance() {
  std::mt19937_64 rng(20240601);
  int violations = 0, boxes = 0;
  double worst = 0.0;
  for (; boxes < 100; ++boxes) {
    const auto p = oracle::random_params(rng);
    const auto c = derive_constants(p);
    const auto ob = oracle::random_box(rng, p.omega0);
    const BoundsBox b{ob.x_lo, ob.x_hi, ob.u_lo, ob.u_hi};
    const std::uint64_t seed = rng();
    for (auto t : {LipTarget::Process, LipTarget::Measurement}) {
      const double a = t == LipTarget::Process ? gamma_f_analytic(c, b).value : gamma_h_analytic(c, b).value;
      const double j = estimate_gamma_jacobian(t, c, b, qmc::SequenceKind::Random, seed, 500).value;
      const double q = estimate_gamma_pairwise(t, c, b, qmc::SequenceKind::Random, seed, 100).value;
      if (j > a) ++violations;
      if (q > a) ++violations;
      if (a > 0.0) worst = std::max({worst, j / a, q / a});
    }
  }
  return {violations == 0, std::to_string(boxes) + " boxes, " + std::to_string(violations) +
                               " violations, max estimate/bound " + fmt(worst)};
}

Verdict jacobians() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const auto p = oracle::random_params(rng);
    const auto c = derive_constants(p);
    const auto ob = oracle::random_box(rng, p.omega0);
    const Vec4 x = oracle::random_vec(rng, ob.x_lo, ob.x_hi);
    const Vec4 u = oracle::random_vec(rng, ob.u_lo, ob.u_hi);
    const auto fd_f = oracle::central_jacobian(
        [&](const Vec4& z) -> Eigen::VectorXd { return eval_f(c, z, u); }, x, 1e-6);
    const auto fd_h = oracle::central_jacobian(
        [&](const Vec4& z) -> Eigen::VectorXd { return eval_h(c, z, u); }, x, 1e-6);
    const Mat4 jf = jac_f_x(c, x, u);
    const Mat2x4 jh = jac_h_x(c, x, u);
    worst = std::max(worst, (jf - fd_f).norm() / std::max(jf.norm(), 1.0));
    worst = std::max(worst, (jh - fd_h).norm() / std::max(jh.norm(), 1.0));
  }
  return {worst < 1e-6, "1000 points, max relative error " + fmt(worst)};
}

Verdict sampler_concordance() {
  const auto c = derive_constants(shipped_params());
  const auto b = shipped_bounds();
  const SamplingOptions opt{4};
  std::vector<double> random;
  for (std::uint64_t s = 0; s < 10; ++s)
    random.push_back(estimate_gamma_jacobian(LipTarget::Process, c, b, qmc::SequenceKind::Random, s, 2000, opt).value);
  const double r = median(random);
  const double so = estimate_gamma_jacobian(LipTarget::Process, c, b, qmc::SequenceKind::Sobol, 0, 2000, opt).value;
  const double ha = estimate_gamma_jacobian(LipTarget::Process, c, b, qmc::SequenceKind::Halton, 0, 2000, opt).value;
  const double lo = std::min({r, so, ha}), hi = std::max({r, so, ha});
  const double spread = (hi - lo) / lo;
  return {spread < 0.05, "random " + fmt(r) + ", sobol " + fmt(so) + ", halton " + fmt(ha) +
                             ", spread " + fmt(100.0 * spread) + "%"};
}

Verdict lds_quality() {
  constexpr std::size_t trials = 4096;
  std::vector<double> halton, random;
  const auto h1024 = qmc::generate({qmc::SequenceKind::Halton, 2, 0}, 1024);
  for (std::uint64_t s = 0; s < 10; ++s) {
    halton.push_back(qmc::star_discrepancy_estimate(h1024, trials, s));
    random.push_back(qmc::star_discrepancy_estimate(qmc::generate({qmc::SequenceKind::Random, 2, s}, 1024), trials, s));
  }
  const double mh = median(halton), mr = median(random);
  const double h256 = qmc::star_discrepancy_estimate(qmc::generate({qmc::SequenceKind::Halton, 2, 0}, 256), trials, 0);
  const double h4096 = qmc::star_discrepancy_estimate(qmc::generate({qmc::SequenceKind::Halton, 2, 0}, 4096), trials, 0);
  return {mh < mr && h4096 < h256, "s=1024 halton " + fmt(mh) + " vs random " + fmt(mr) +
                                       "; halton s=256 " + fmt(h256) + ", s=4096 " + fmt(h4096)};
}

Verdict solver_soundness() {
  LMIProblem stable;
  stable.A = -Mat4::Identity();
  stable.margin = default_margin(stable.A);
  const auto ok = solve_lmi(stable);
  if (!ok.feasible()) return {false, "A=-I reported infeasible"};
  const auto& cert = *ok.certificate;
  Eigen::MatrixXd F(8, 8);
  F << stable.A.transpose() * cert.P + cert.P * stable.A, cert.P, cert.P, -cert.eta * Mat4::Identity();
  const double top = oracle::power_max_eig(F);
  const double pmin = oracle::power_min_eig(cert.P);
  LMIProblem unstable = stable;
  unstable.A = Mat4::Identity();
  const bool rejected = !solve_lmi(unstable).feasible();
  return {top <= -stable.margin && pmin >= stable.margin && cert.eta >= 0.0 && rejected,
          "A=-I: lambda_max " + fmt(top) + ", lambda_min(P) " + fmt(pmin) +
              "; A=+I: " + (rejected ? "infeasible" : "feasible")};
}

Verdict observer_convergence() {
  const auto p = shipped_params();
  const auto c = derive_constants(p);
  const auto b = shipped_bounds();
  const auto sc = shipped_scenario();
  const double numeric = estimate_gamma_jacobian(LipTarget::Process, c, b, qmc::SequenceKind::Sobol, 0, 2000).value;
  const double analytic = gamma_f_analytic(c, b).value;
  bool pass = true;
  std::string detail;
  for (auto [label, gamma] : {std::pair{"sampled", numeric}, std::pair{"analytic", analytic}}) {
    const auto syn = synthesize(c, sc, gamma);
    detail += std::string(detail.empty() ? "" : "; ") + label + " gamma_f " + fmt(gamma);
    if (!syn.result.feasible()) {
      pass = false;
      detail += " infeasible (best lambda_max " + fmt(syn.result.best_max_eig) +
                ", gamma_f must be below " + fmt(syn.ceiling) + ")";
      continue;
    }
    const auto gain = extract_gain(*syn.result.certificate);
    const auto tr = simulate(c, build_matrices(c), gain, sc.inputs, sim_config(sc, sc.x0 + sc.offset));
    const auto m = error_metrics(tr, sc.fraction);
    const bool ok = m.convergence_time && *m.convergence_time <= sc.t_final;
    pass = pass && ok;
    detail += ok ? " converged at " + fmt(*m.convergence_time) + " s" : " did not converge";
  }
  return {pass, detail};
}

Verdict zero_error() {
  const auto c = derive_constants(shipped_params());
  const auto sc = shipped_scenario();
  const auto syn = synthesize(c, sc, 0.5);
  if (!syn.result.feasible()) return {false, "no gain for gamma_f 0.5"};
  const auto tr = simulate(c, build_matrices(c), extract_gain(*syn.result.certificate), sc.inputs,
                           sim_config(sc, sc.x0));
  const double worst = *std::max_element(tr.error_norm.begin(), tr.error_norm.end());
  return {worst < 1e-9, "max error norm " + fmt(worst) + " over " + fmt(sc.t_final) + " s"};
}

Verdict determinism() {
  clitest::TempDir tmp("accept");
  const std::string params = data("gen_params.json"), bounds = data("bounds.json");
  const std::string gain = tmp.sub("synth_ok") + "/gain.json";
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"analytic", {"lipschitz", "analytic", "--params", params, "--bounds", bounds}},
      {"numeric", {"lipschitz", "numeric", "--params", params, "--bounds", bounds, "--sampler", "random", "--seed", "3"}},
      {"pairwise", {"lipschitz", "numeric", "--params", params, "--bounds", bounds, "--method", "pairwise", "--samples", "200"}},
      {"table", {"lipschitz", "table", "--params", params, "--bounds", bounds, "--samples", "500"}},
      {"emit", {"sample", "emit", "--sampler", "sobol", "--dim", "8", "--samples", "256", "--discrepancy", "100"}},
      {"synth_ok", {"observer", "synth", "--params", params, "--config", data("scenario.json"), "--gamma", "0.5"}},
      {"synth_infeasible", {"observer", "synth", "--params", params, "--bounds", bounds, "--config", data("scenario.json")}},
      {"simulate", {"dse", "simulate", "--params", params, "--config", data("scenario.json"), "--gain", gain,
                    "--pmu-period", "0.02", "--noise-std", "0.001", "--noise-seed", "5"}},
  };
  int mismatches = 0;
  std::string detail;
  for (const auto& [name, args] : commands) {
    auto full = args;
    full.insert(full.end(), {"--out-dir", tmp.sub(name)});
    const auto first = clitest::run(full);
    const auto again = clitest::run({"manifest", "replay", "--manifest", tmp.sub(name) + "/run_manifest.json",
                                     "--out-dir", tmp.sub(name + "_replay")});
    const bool same = first.code == again.code && clitest::same_tree(tmp.sub(name), tmp.sub(name + "_replay"));
    if (!same) {
      ++mismatches;
      detail += " " + name;
    }
  }
  return {mismatches == 0, std::to_string(commands.size()) + " commands replayed" +
                               (mismatches ? ", differing:" + detail : ", all outputs identical")};
}

Verdict integrator_order() {
  const auto c = derive_constants(shipped_params());
  const auto m = build_matrices(c);
  const auto sc = shipped_scenario();
  const auto syn = synthesize(c, sc, 0.5);
  if (!syn.result.feasible()) return {false, "no gain for gamma_f 0.5"};
  const auto gain = extract_gain(*syn.result.certificate);
  // Final plant and observer states at dt, dt/2, dt/4.
  std::vector<Eigen::Matrix<double, 8, 1>> finals;
  for (double dt : {0.01, 0.005, 0.0025}) {
    auto cfg = sim_config(sc, sc.x0 + sc.offset);
    cfg.dt = dt;
    const auto tr = simulate(c, m, gain, sc.inputs, cfg);
    Eigen::Matrix<double, 8, 1> z;
    z << tr.plant.back(), tr.observer.back();
    finals.push_back(z);
  }
  const double d1 = (finals[0] - finals[1]).norm(), d2 = (finals[1] - finals[2]).norm();
  const double order = std::log2(d1 / d2);
  return {order >= 3.8, "dt 0.01/0.005/0.0025, differences " + fmt(d1) + ", " + fmt(d2) + ", order " + fmt(order)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Check> checks{
      {1, "degenerate box gives exact analytic constants", 1, degenerate_box},
      {2, "sampled estimates never exceed analytic bounds", 120, dominance},
      {3, "analytic Jacobians match finite differences", 10, jacobians},
      {4, "random, sobol and halton estimates agree", 30, sampler_concordance},
      {5, "halton has lower star discrepancy than random", 60, lds_quality},
      {6, "LMI solver certificates and infeasibility", 5, solver_soundness},
      {7, "observers from sampled and analytic gamma_f converge", 60, observer_convergence},
      {8, "zero initial error stays zero", 30, zero_error},
      {9, "manifest replay reproduces every command", 120, determinism},
      {10, "RK4 self-convergence order", 30, integrator_order},
  };
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failed = 0;
  for (const auto& chk : checks) {
    if (only && chk.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = chk.body();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > chk.budget_s) {
      v.pass = false;
      v.detail += "; exceeded time budget of " + fmt(chk.budget_s) + " s";
    }
    if (!v.pass) ++failed;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << chk.id << "] " << chk.name << " (" << fmt(secs)
              << " s): " << v.detail << std::endl;
  }
  return failed ? 1 : 0;
}
