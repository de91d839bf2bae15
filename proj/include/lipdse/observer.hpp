#pragma once

#include <optional>

#include "lipdse/gen_model.hpp"

namespace lipdse {

/// Data of the observer LMI
///   [ AᵀP + PA - CᵀYᵀ - YC + eta*gamma_f²*I   P    ]
///   [ P                                      -eta*I ]  <  0
/// with P = Pᵀ > 0 and eta >= 0. Strict inequalities are enforced with
/// `margin`.
struct LMIProblem {
  Mat4 A = Mat4::Zero();
  Mat2x4 C = Mat2x4::Zero();
  double gamma_f = 0.0;
  double margin = 1e-6;

  void validate() const;
};

/// 1e-6 * max(|A|_2, 1).
double default_margin(const Mat4& A);

struct FeasibilityCertificate {
  Mat4 P = Mat4::Identity();
  Mat4x2 Y = Mat4x2::Zero();
  double eta = 1.0;
  double max_eig = 0.0;  // largest eigenvalue of the assembled block
  double margin = 0.0;
  int iterations = 0;
};

struct SolverSettings {
  int max_iterations = 5000;
  // Upper bound on P's spectrum; fixes the scale of the homogeneous LMI.
  double p_ceiling = 1.0;
  // Frobenius-norm cap on Y. Without it the descent drives Y along range(C)
  // and produces gains too stiff for explicit integration.
  double y_bound = 10.0;
  // Lower bound on P's spectrum relative to p_ceiling. Bounds the condition
  // number of P and hence the size of L = P⁻¹Y.
  double p_floor_ratio = 1e-2;
};

struct LmiResult {
  std::optional<FeasibilityCertificate> certificate;  // empty when infeasible
  double best_max_eig = 0.0;
  int iterations = 0;

  bool feasible() const { return certificate.has_value(); }
};

struct ObserverGain {
  Mat4x2 L = Mat4x2::Zero();
};

struct OutputLinearization {
  Mat2x4 C;
  Mat2x4 Du;
};

/// C = dh/dx at (x0, u0); Du is the constant input feedthrough.
OutputLinearization linearize_output(const DerivedConstants& c, const State& x0,
                                     const Input& u0);

Mat8 assemble_lmi(const LMIProblem& prob, const Mat4& P, const Mat4x2& Y, double eta);

/// Re-verifies a certificate from scratch: returns true when the assembled
/// block has lambda_max <= -margin, lambda_min(P) >= margin, and eta >= 0.
bool verify_certificate(const LMIProblem& prob, const FeasibilityCertificate& cert);

/// Smoothed maximum-eigenvalue descent over (P, Y, eta). Deterministic.
/// Infeasibility is reported through the result, not by throwing; non-finite
/// problem data throws std::domain_error.
LmiResult solve_lmi(const LMIProblem& prob, const SolverSettings& settings = {});

/// Smallest singular value of A restricted to ker C. The LMI can only be
/// feasible when gamma_f is strictly below this value: for e in ker C the
/// upper-left block cannot be reduced by Y.
double gamma_ceiling(const Mat4& A, const Mat2x4& C);

/// L = P⁻¹Y. Throws std::logic_error if P is not positive definite.
ObserverGain extract_gain(const FeasibilityCertificate& cert);

}  // namespace lipdse
