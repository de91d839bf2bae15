#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lipdse/gen_model.hpp"
#include "lipdse/observer.hpp"

namespace lipdse {

enum class Interpolation { ZeroOrderHold, Linear };

std::string_view to_string(Interpolation i);
Interpolation parse_interpolation(std::string_view s);

/// Time-stamped input records. Times are strictly increasing.
struct InputTrajectory {
  std::vector<double> times;
  std::vector<Input> values;
  Interpolation interpolation = Interpolation::Linear;
};

/// Raised for malformed input files; the message names the offending line.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when integration produces a non-finite state.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// CSV with header `t,Tm,Efd,iR,iI`.
InputTrajectory parse_inputs(std::istream& in, Interpolation mode = Interpolation::Linear);
InputTrajectory load_inputs(const std::string& path, Interpolation mode = Interpolation::Linear);

/// Zero-order hold takes the last record at or before t; linear interpolates.
/// Both clamp outside the recorded range.
Input sample_input(const InputTrajectory& traj, double t);

using Derivative = std::function<Vec4(double t, const Vec4& x)>;

/// One classical Runge-Kutta step. Throws NumericalFailure (tagged with
/// `step_index`) if any stage derivative is non-finite.
Vec4 step_rk4(const Derivative& f, const Vec4& x, double t, double dt,
              std::size_t step_index = 0);

struct SimConfig {
  double dt = 1e-3;
  double t_final = 10.0;
  State x0 = State::Zero();
  State xhat0 = State::Zero();
  // Measurements reach the observer every `pmu_period` seconds and are held
  // in between; 0 means every integration step.
  double pmu_period = 0.0;
  // Additive Gaussian noise on the measured outputs (extension, off by default).
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;

  void validate() const;
  /// Number of integration steps; time at step k is k * dt.
  std::size_t steps() const;
};

struct SimTrace {
  std::vector<double> times;
  std::vector<State> plant;
  std::vector<State> observer;
  std::vector<Output> plant_out;
  std::vector<Output> observer_out;
  std::vector<double> error_norm;
  // Plant outputs at the interior Runge-Kutta stages of step k (stages 2..4).
  // Present for simulated plants; recorded data leaves it empty and the
  // observer interpolates plant_out instead.
  std::vector<std::array<Output, 3>> stage_out;
};

/// Plant half: RK4 on the process model, outputs at every stored step.
SimTrace simulate_plant(const DerivedConstants& c, const StateMatrices& m,
                        const InputTrajectory& traj, const SimConfig& cfg);

/// Observer half driven by the recorded plant outputs; the observer uses the
/// nonlinear output map for its own prediction. Fills observer, observer_out
/// and error_norm of `plant_trace` in place and returns it.
SimTrace simulate_observer(const DerivedConstants& c, const StateMatrices& m,
                           const ObserverGain& gain, const InputTrajectory& traj,
                           const SimConfig& cfg, SimTrace plant_trace);

/// simulate_plant followed by simulate_observer.
SimTrace simulate(const DerivedConstants& c, const StateMatrices& m, const ObserverGain& gain,
                  const InputTrajectory& traj, const SimConfig& cfg);

struct ErrorMetrics {
  Vec4 rmse = Vec4::Zero();
  double final_err = 0.0;
  std::optional<double> convergence_time;  // empty: never settles below the threshold
};

/// Convergence time is the first time after which the error norm stays below
/// `fraction` of its initial value (0 when the initial error is zero).
ErrorMetrics error_metrics(const SimTrace& trace, double fraction = 0.01);

}  // namespace lipdse
