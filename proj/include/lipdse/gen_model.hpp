#pragma once

#include <array>

#include "lipdse/linalg.hpp"

namespace lipdse {

// x = (delta [rad], omega [rad/s], e'_q [pu], e'_d [pu])
using State = Vec4;
// u = (T_m [pu], E_fd [pu], i_R [pu], i_I [pu])
using Input = Vec4;
// y = (e_R [pu], e_I [pu])
using Output = Vec2;

/// Physical parameters of a fourth-order (two-axis) synchronous machine.
struct GeneratorParams {
  double omega0 = 0.0;  // rated angular frequency [rad/s]
  double H = 0.0;       // inertia constant [s]
  double K_D = 0.0;     // damping factor
  double Tq0p = 0.0;    // q-axis open-circuit transient time constant [s]
  double Td0p = 0.0;    // d-axis open-circuit transient time constant [s]
  double xd = 0.0;      // synchronous reactances [pu]
  double xq = 0.0;
  double xdp = 0.0;     // transient reactances [pu]
  double xqp = 0.0;
  double S_B = 0.0;     // system base [MVA]
  double S_N = 0.0;     // machine base [MVA]

  /// Throws std::domain_error naming the first violated invariant.
  void validate() const;

  double base_ratio() const { return S_B / S_N; }
};

/// Collected coefficients of the state-space form. alpha[0] is alpha_1.
struct DerivedConstants {
  std::array<double, 10> alpha{};
  double beta1 = 0.0;
  double beta2 = 0.0;

  double a(int k) const { return alpha[static_cast<std::size_t>(k - 1)]; }
};

struct StateMatrices {
  Mat4 A = Mat4::Zero();
  Mat4 Bu = Mat4::Zero();
  Mat2x4 Du = Mat2x4::Zero();
};

/// Stator currents, terminal voltages and air-gap power/torque in the rotor
/// (d-q) frame.
struct AirGapQuantities {
  double iq = 0.0;
  double id = 0.0;
  double eq = 0.0;
  double ed = 0.0;
  double Pe = 0.0;
  double Te = 0.0;
};

DerivedConstants derive_constants(const GeneratorParams& p);

StateMatrices build_matrices(const DerivedConstants& c);

/// Nonlinear part of the process model; f_1 is the constant -alpha_1.
Vec4 eval_f(const DerivedConstants& c, const State& x, const Input& u);

/// Nonlinear part of the measurement model (terminal voltage phasor minus
/// the D_u feedthrough).
Vec2 eval_h(const DerivedConstants& c, const State& x, const Input& u);

/// x' = A x + f(x, u) + B_u u
Vec4 eval_dynamics(const DerivedConstants& c, const StateMatrices& m, const State& x,
                   const Input& u);

/// y = h(x, u) + D_u u
Output eval_output(const DerivedConstants& c, const StateMatrices& m, const State& x,
                   const Input& u);

/// Partial derivatives of f with respect to x. Row 0 is identically zero and
/// rows 2..3 only depend on the rotor angle.
Mat4 jac_f_x(const DerivedConstants& c, const State& x, const Input& u);

/// Partial derivatives of h with respect to x. Column 1 (speed) is zero.
Mat2x4 jac_h_x(const DerivedConstants& c, const State& x, const Input& u);

AirGapQuantities intermediate_quantities(const DerivedConstants& c, const GeneratorParams& p,
                                         const State& x, const Input& u);

}  // namespace lipdse
