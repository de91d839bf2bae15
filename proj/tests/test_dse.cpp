#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "lipdse/dse.hpp"
#include "lipdse/io.hpp"
#include "oracles.hpp"

using namespace lipdse;

namespace {

InputTrajectory constant_inputs(const Input& u) {
  InputTrajectory tr;
  tr.times = {0.0};
  tr.values = {u};
  return tr;
}

std::string parse_error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_inputs(in);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("dse") {

TEST_CASE("input file parsing") {
  std::istringstream in("t,Tm,Efd,iR,iI\n0,1,2,3,4\r\n\n1.5, 0.5 ,2,3,4\n");
  const auto tr = parse_inputs(in, Interpolation::ZeroOrderHold);
  REQUIRE(tr.times.size() == 2);
  CHECK(tr.times[1] == 1.5);
  CHECK(tr.values[1] == Input(0.5, 2, 3, 4));
  CHECK(tr.interpolation == Interpolation::ZeroOrderHold);
}

TEST_CASE("malformed input files name the line") {
  CHECK(parse_error_of("t,Tm,Efd,iR\n").find("line 1") != std::string::npos);
  CHECK(parse_error_of("t,Tm,Efd,iR,iX\n").find("header") != std::string::npos);
  CHECK(parse_error_of("t,Tm,Efd,iR,iI\n0,1,2,3,4\n1,1,x,3,4\n").find("line 3") != std::string::npos);
  CHECK(parse_error_of("t,Tm,Efd,iR,iI\n0,1,2,3,4\n1,1,x,3,4\n").find("Efd") != std::string::npos);
  CHECK(parse_error_of("t,Tm,Efd,iR,iI\n1,1,2,3,4\n1,1,2,3,4\n").find("increasing") != std::string::npos);
  CHECK(parse_error_of("t,Tm,Efd,iR,iI\n0,1,2,3,nan\n").find("line 2") != std::string::npos);
  CHECK(parse_error_of("t,Tm,Efd,iR,iI\n").find("no input records") != std::string::npos);
  CHECK(parse_error_of("").find("header") != std::string::npos);
  CHECK_THROWS_AS(load_inputs("/nonexistent/inputs.csv"), ParseError);
}

TEST_CASE("input sampling") {
  InputTrajectory tr;
  tr.times = {0.0, 1.0, 3.0};
  tr.values = {Input::Zero(), Input::Constant(2.0), Input::Constant(6.0)};
  tr.interpolation = Interpolation::Linear;
  CHECK(sample_input(tr, -1.0) == Input::Zero());
  CHECK(sample_input(tr, 0.5) == Input::Constant(1.0));
  CHECK(sample_input(tr, 2.0) == Input::Constant(4.0));
  CHECK(sample_input(tr, 1.0) == Input::Constant(2.0));
  CHECK(sample_input(tr, 10.0) == Input::Constant(6.0));
  tr.interpolation = Interpolation::ZeroOrderHold;
  CHECK(sample_input(tr, 0.999) == Input::Zero());
  CHECK(sample_input(tr, 1.0) == Input::Constant(2.0));
  CHECK(sample_input(tr, 2.9) == Input::Constant(2.0));
  CHECK(parse_interpolation("hold") == Interpolation::ZeroOrderHold);
  CHECK_THROWS_AS(parse_interpolation("cubic"), std::invalid_argument);
}

TEST_CASE("rk4 on exponential decay") {
  const Derivative f = [](double, const Vec4& x) { return Vec4(-x); };
  Vec4 x = Vec4::Ones();
  for (int k = 0; k < 10; ++k) x = step_rk4(f, x, 0.01 * k, 0.01);
  CHECK(std::abs(x(0) - std::exp(-0.1)) < 1e-7);

  auto error_at = [&](double dt) {
    Vec4 z = Vec4::Ones();
    const int n = static_cast<int>(std::lround(1.0 / dt));
    for (int k = 0; k < n; ++k) z = step_rk4(f, z, k * dt, dt);
    return std::abs(z(0) - std::exp(-1.0));
  };
  const double ratio = error_at(0.1) / error_at(0.05);
  CHECK(ratio > 14.0);
  CHECK(ratio < 18.0);

  const Derivative zero = [](double, const Vec4&) { return Vec4::Zero().eval(); };
  const Vec4 y(1, 2, 3, 4);
  CHECK(step_rk4(zero, y, 0.0, 0.1) == y);
  const Derivative bad = [](double, const Vec4&) { return Vec4::Constant(std::nan("")).eval(); };
  try {
    step_rk4(bad, y, 0.0, 0.1, 42);
    FAIL("expected a numerical failure");
  } catch (const NumericalFailure& e) {
    CHECK(e.step() == 42);
  }
}

TEST_CASE("plant rests at an equilibrium") {
  const auto p = oracle::example_params();
  const auto c = derive_constants(p);
  const auto m = build_matrices(c);
  const auto [x0, u0] = oracle::equilibrium(p, 0.9, 0.4, 0.3);
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_final = 10.0;
  cfg.x0 = x0;
  cfg.xhat0 = x0;
  const auto tr = simulate_plant(c, m, constant_inputs(u0), cfg);
  double drift = 0.0;
  for (const auto& x : tr.plant) drift = std::max(drift, (x - x0).norm());
  CHECK(drift < 1e-6);
}

TEST_CASE("plant trajectory is insensitive to step refinement") {
  const auto c = derive_constants(io::load_params(std::string(LIPDSE_DATA_DIR) + "/gen_params.json"));
  const auto m = build_matrices(c);
  const auto traj = load_inputs(std::string(LIPDSE_DATA_DIR) + "/inputs.csv");
  SimConfig cfg;
  cfg.t_final = 10.0;
  cfg.x0 = Vec4(0.1930945111029892, 376.99111843077515, 0.951643689064395, 0.13706914919980337);
  cfg.dt = 1e-3;
  const auto coarse = simulate_plant(c, m, traj, cfg);
  cfg.dt = 5e-4;
  const auto fine = simulate_plant(c, m, traj, cfg);
  CHECK((coarse.plant.back() - fine.plant.back()).norm() < 1e-8);
}

TEST_CASE("zero initial error stays zero") {
  const auto c = derive_constants(oracle::example_params());
  const auto m = build_matrices(c);
  const auto traj = load_inputs(std::string(LIPDSE_DATA_DIR) + "/inputs.csv");
  ObserverGain g;
  g.L << 0.3, -0.1, 2.0, 1.0, 0.2, 0.4, -0.5, 0.1;
  SimConfig cfg;
  cfg.t_final = 3.0;
  cfg.x0 = Vec4(0.1930945111029892, 376.99111843077515, 0.951643689064395, 0.13706914919980337);
  cfg.xhat0 = cfg.x0;
  const auto tr = simulate(c, m, g, traj, cfg);
  for (double e : tr.error_norm) CHECK(e == 0.0);
  const auto met = error_metrics(tr);
  CHECK(met.final_err == 0.0);
  CHECK(met.convergence_time == 0.0);
}

TEST_CASE("open-loop observer follows the closed-form decay") {
  // Zero currents and inputs: every state decays on its own.
  const auto p = oracle::example_params();
  const auto c = derive_constants(p);
  const auto m = build_matrices(c);
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_final = 5.0;
  cfg.x0 = Vec4(0.1, p.omega0, 1.0, 0.2);
  cfg.xhat0 = Vec4(0.3, p.omega0 + 2.0, 0.5, -0.4);
  const auto tr = simulate(c, m, ObserverGain{}, constant_inputs(Input::Zero()), cfg);
  const double rw = p.K_D / (2.0 * p.H);
  auto exact = [&](const Vec4& z0, double t) {
    const double dw = z0(1) - p.omega0;
    return Vec4(z0(0) + dw * (1.0 - std::exp(-rw * t)) / rw, p.omega0 + dw * std::exp(-rw * t),
                z0(2) * std::exp(-t / p.Td0p), z0(3) * std::exp(-t / p.Tq0p));
  };
  for (std::size_t k = 0; k < tr.times.size(); k += 250) {
    CHECK((tr.observer[k] - exact(cfg.xhat0, tr.times[k])).norm() < 1e-8);
    CHECK((tr.plant[k] - exact(cfg.x0, tr.times[k])).norm() < 1e-8);
  }
}

TEST_CASE("time grid and trace shape") {
  const auto c = derive_constants(oracle::example_params());
  const auto m = build_matrices(c);
  SimConfig cfg;
  cfg.dt = 0.1;
  cfg.t_final = 1.0;
  cfg.x0 = Vec4(0.0, 376.99111843077515, 1.0, 0.0);
  const auto tr = simulate(c, m, ObserverGain{}, constant_inputs(Input::Zero()), cfg);
  REQUIRE(tr.times.size() == 11);
  for (std::size_t k = 0; k < tr.times.size(); ++k) CHECK(tr.times[k] == k * 0.1);
  CHECK(tr.observer.size() == 11);
  CHECK(tr.stage_out.size() == 10);

  SimConfig bad = cfg;
  bad.dt = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
  bad = cfg;
  bad.t_final = 0.01;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
  // A plant trace on a different grid is rejected.
  SimConfig other = cfg;
  other.dt = 0.05;
  CHECK_THROWS_AS(simulate_observer(c, m, ObserverGain{}, constant_inputs(Input::Zero()), other, tr),
                  std::domain_error);
}

TEST_CASE("simulation is deterministic, including noise") {
  const auto c = derive_constants(oracle::example_params());
  const auto m = build_matrices(c);
  const auto traj = load_inputs(std::string(LIPDSE_DATA_DIR) + "/inputs.csv");
  ObserverGain g;
  g.L(2, 0) = 0.5;
  SimConfig cfg;
  cfg.t_final = 2.0;
  cfg.x0 = Vec4(0.19, 376.99, 0.95, 0.14);
  cfg.xhat0 = Vec4(0.2, 377.0, 0.9, 0.1);
  cfg.pmu_period = 0.02;
  cfg.noise_std = 1e-3;
  cfg.noise_seed = 9;
  const auto a = simulate(c, m, g, traj, cfg);
  const auto b = simulate(c, m, g, traj, cfg);
  CHECK(io::trace_to_csv(a) == io::trace_to_csv(b));
  cfg.noise_seed = 10;
  CHECK(io::trace_to_csv(simulate(c, m, g, traj, cfg)) != io::trace_to_csv(a));
}

TEST_CASE("error metrics") {
  SimTrace tr;
  const double dt = 1e-3;
  for (int k = 0; k <= 8000; ++k) {
    const double t = k * dt;
    tr.times.push_back(t);
    tr.plant.push_back(Vec4(std::exp(-t), 0, 0, 0));
    tr.observer.push_back(Vec4::Zero());
    tr.error_norm.push_back(std::exp(-t));
  }
  const auto m = error_metrics(tr, 0.01);
  REQUIRE(m.convergence_time.has_value());
  CHECK(std::abs(*m.convergence_time - std::log(100.0)) <= dt);
  CHECK(m.final_err == doctest::Approx(std::exp(-8.0)));
  // rmse of exp(-t) sampled on [0, 8]: sqrt(mean(exp(-2t))).
  double mean = 0.0;
  for (double t : tr.times) mean += std::exp(-2.0 * t);
  mean /= static_cast<double>(tr.times.size());
  CHECK(m.rmse(0) == doctest::Approx(std::sqrt(mean)).epsilon(1e-12));
  CHECK(m.rmse(1) == 0.0);

  // An error that never settles has no convergence time.
  for (auto& e : tr.error_norm) e = 1.0;
  CHECK_FALSE(error_metrics(tr).convergence_time.has_value());
  CHECK_THROWS_AS(error_metrics(SimTrace{}), std::domain_error);
}

}  // TEST_SUITE
