#include "lipdse/dse.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace lipdse {

namespace {

struct Rk4Stages {
  std::array<Vec4, 4> states;
  std::array<double, 4> times;
  Vec4 next;
};

Rk4Stages rk4_stages(const Derivative& f, const Vec4& x, double t, double dt,
                     std::size_t step_index) {
  auto checked = [&](double ts, const Vec4& xs) {
    Vec4 d = f(ts, xs);
    if (!d.allFinite())
      throw NumericalFailure("non-finite derivative at step " + std::to_string(step_index),
                             step_index);
    return d;
  };
  Rk4Stages s;
  s.times = {t, t + 0.5 * dt, t + 0.5 * dt, t + dt};
  s.states[0] = x;
  const Vec4 k1 = checked(s.times[0], s.states[0]);
  s.states[1] = x + 0.5 * dt * k1;
  const Vec4 k2 = checked(s.times[1], s.states[1]);
  s.states[2] = x + 0.5 * dt * k2;
  const Vec4 k3 = checked(s.times[2], s.states[2]);
  s.states[3] = x + dt * k3;
  const Vec4 k4 = checked(s.times[3], s.states[3]);
  s.next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return s;
}

double parse_field(std::string_view field, std::size_t line, const char* column) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
    field.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v))
    throw ParseError("line " + std::to_string(line) + ": column '" + column +
                     "' is not a finite number: '" + std::string(field) + "'");
  return v;
}

Output lerp(const Output& a, const Output& b, double w) { return a + w * (b - a); }

}  // namespace

std::string_view to_string(Interpolation i) {
  return i == Interpolation::Linear ? "linear" : "hold";
}

Interpolation parse_interpolation(std::string_view s) {
  if (s == "linear") return Interpolation::Linear;
  if (s == "hold" || s == "zoh") return Interpolation::ZeroOrderHold;
  throw std::invalid_argument("unknown interpolation '" + std::string(s) +
                              "' (expected linear|hold)");
}

InputTrajectory parse_inputs(std::istream& in, Interpolation mode) {
  static constexpr const char* kColumns[] = {"t", "Tm", "Efd", "iR", "iI"};
  InputTrajectory traj;
  traj.interpolation = mode;

  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 5)
      throw ParseError("line " + std::to_string(lineno) + ": expected 5 columns, found " +
                       std::to_string(fields.size()));
    if (!header_seen) {
      for (std::size_t j = 0; j < 5; ++j)
        if (fields[j] != kColumns[j])
          throw ParseError("line " + std::to_string(lineno) +
                           ": header must be 't,Tm,Efd,iR,iI'");
      header_seen = true;
      continue;
    }
    const double t = parse_field(fields[0], lineno, kColumns[0]);
    if (!traj.times.empty() && !(t > traj.times.back()))
      throw ParseError("line " + std::to_string(lineno) +
                       ": time stamps must be strictly increasing");
    Input u;
    for (int j = 0; j < 4; ++j) u(j) = parse_field(fields[j + 1], lineno, kColumns[j + 1]);
    traj.times.push_back(t);
    traj.values.push_back(u);
  }
  if (!header_seen) throw ParseError("line 1: missing header 't,Tm,Efd,iR,iI'");
  if (traj.times.empty()) throw ParseError("no input records after the header");
  return traj;
}

InputTrajectory load_inputs(const std::string& path, Interpolation mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  try {
    return parse_inputs(in, mode);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

Input sample_input(const InputTrajectory& traj, double t) {
  const auto& ts = traj.times;
  if (ts.empty()) throw std::domain_error("sample_input: empty trajectory");
  if (t <= ts.front()) return traj.values.front();
  if (t >= ts.back()) return traj.values.back();
  // First record strictly after t; its predecessor is at or before t.
  const auto hi = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin());
  const std::size_t lo = hi - 1;
  if (traj.interpolation == Interpolation::ZeroOrderHold) return traj.values[lo];
  const double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
  return traj.values[lo] + w * (traj.values[hi] - traj.values[lo]);
}

Vec4 step_rk4(const Derivative& f, const Vec4& x, double t, double dt, std::size_t step_index) {
  if (!(dt > 0.0)) throw std::domain_error("step_rk4: dt must be positive");
  return rk4_stages(f, x, t, dt, step_index).next;
}

void SimConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::domain_error("sim config: dt must be > 0");
  if (!(t_final >= dt) || !std::isfinite(t_final))
    throw std::domain_error("sim config: t_final must be >= dt");
  if (!x0.allFinite() || !xhat0.allFinite())
    throw std::domain_error("sim config: initial states must be finite");
  if (!(pmu_period >= 0.0)) throw std::domain_error("sim config: pmu_period must be >= 0");
  if (!(noise_std >= 0.0)) throw std::domain_error("sim config: noise_std must be >= 0");
}

std::size_t SimConfig::steps() const {
  return static_cast<std::size_t>(std::floor(t_final / dt + 1e-9));
}

SimTrace simulate_plant(const DerivedConstants& c, const StateMatrices& m,
                        const InputTrajectory& traj, const SimConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.steps();
  const Derivative rhs = [&](double t, const Vec4& x) {
    return eval_dynamics(c, m, x, sample_input(traj, t));
  };

  SimTrace tr;
  tr.times.reserve(n + 1);
  tr.plant.reserve(n + 1);
  tr.plant_out.reserve(n + 1);
  tr.stage_out.reserve(n);

  State x = cfg.x0;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    tr.times.push_back(t);
    tr.plant.push_back(x);
    tr.plant_out.push_back(eval_output(c, m, x, sample_input(traj, t)));
    if (k == n) break;
    const auto st = rk4_stages(rhs, x, t, cfg.dt, k);
    std::array<Output, 3> ys;
    for (std::size_t i = 1; i < 4; ++i)
      ys[i - 1] = eval_output(c, m, st.states[i], sample_input(traj, st.times[i]));
    tr.stage_out.push_back(ys);
    x = st.next;
  }
  return tr;
}

SimTrace simulate_observer(const DerivedConstants& c, const StateMatrices& m,
                           const ObserverGain& gain, const InputTrajectory& traj,
                           const SimConfig& cfg, SimTrace tr) {
  cfg.validate();
  const std::size_t n = cfg.steps();
  if (tr.times.size() != n + 1 || tr.plant_out.size() != n + 1)
    throw std::domain_error("simulate_observer: plant output series has " +
                            std::to_string(tr.plant_out.size()) + " samples, grid needs " +
                            std::to_string(n + 1));
  for (std::size_t k = 0; k <= n; ++k)
    if (tr.times[k] != static_cast<double>(k) * cfg.dt)
      throw std::domain_error("simulate_observer: plant time grid differs at sample " +
                              std::to_string(k));
  if (!gain.L.allFinite()) throw std::domain_error("simulate_observer: non-finite gain");

  const bool have_stages = tr.stage_out.size() == n;
  const bool sampled = cfg.pmu_period > 0.0 || cfg.noise_std > 0.0;
  const std::size_t report_every =
      cfg.pmu_period > 0.0
          ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.pmu_period / cfg.dt)))
          : 1;
  std::mt19937_64 rng(cfg.noise_seed);
  std::normal_distribution<double> noise(0.0, cfg.noise_std > 0.0 ? cfg.noise_std : 1.0);
  Output held = tr.plant_out[0];

  tr.observer.assign(n + 1, State::Zero());
  tr.observer_out.assign(n + 1, Output::Zero());
  tr.error_norm.assign(n + 1, 0.0);

  State xh = cfg.xhat0;
  for (std::size_t k = 0;; ++k) {
    const double t = tr.times[k];
    tr.observer[k] = xh;
    tr.observer_out[k] = eval_output(c, m, xh, sample_input(traj, t));
    tr.error_norm[k] = (tr.plant[k] - xh).norm();
    if (k == n) break;

    if (sampled && k % report_every == 0) {
      held = tr.plant_out[k];
      if (cfg.noise_std > 0.0) {
        held(0) += noise(rng);
        held(1) += noise(rng);
      }
    }
    // Measurement seen by stage i (0 = start of step, 3 = end of step).
    auto measured = [&](std::size_t stage) -> Output {
      if (sampled) return held;
      if (stage == 0) return tr.plant_out[k];
      if (have_stages) return tr.stage_out[k][stage - 1];
      return lerp(tr.plant_out[k], tr.plant_out[k + 1], stage == 3 ? 1.0 : 0.5);
    };

    std::size_t stage = 0;
    const Derivative rhs = [&](double ts, const Vec4& z) {
      const Input u = sample_input(traj, ts);
      const Vec4 d = eval_dynamics(c, m, z, u) + gain.L * (measured(stage) - eval_output(c, m, z, u));
      ++stage;
      return d;
    };
    xh = step_rk4(rhs, xh, t, cfg.dt, k);
  }
  return tr;
}

SimTrace simulate(const DerivedConstants& c, const StateMatrices& m, const ObserverGain& gain,
                  const InputTrajectory& traj, const SimConfig& cfg) {
  return simulate_observer(c, m, gain, traj, cfg, simulate_plant(c, m, traj, cfg));
}

ErrorMetrics error_metrics(const SimTrace& trace, double fraction) {
  const std::size_t n = trace.times.size();
  if (n == 0 || trace.plant.size() != n || trace.observer.size() != n ||
      trace.error_norm.size() != n)
    throw std::domain_error("error_metrics: empty or inconsistent trace");

  ErrorMetrics out;
  for (std::size_t k = 0; k < n; ++k)
    out.rmse += (trace.plant[k] - trace.observer[k]).cwiseAbs2();
  out.rmse = (out.rmse / static_cast<double>(n)).cwiseSqrt();
  out.final_err = trace.error_norm.back();

  const double threshold = fraction * trace.error_norm.front();
  std::size_t k = n;
  while (k > 0 && trace.error_norm[k - 1] <= threshold) --k;
  if (k < n) out.convergence_time = trace.times[k];
  return out;
}

}  // namespace lipdse
