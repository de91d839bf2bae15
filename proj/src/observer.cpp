#include "lipdse/observer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lipdse {

namespace {

struct Iterate {
  Mat4 P;
  Mat4x2 Y;
  double eta;
};

struct Evaluation {
  double smooth = 0.0;    // soft-max of the block spectrum at temperature mu
  double max_eig = 0.0;   // exact largest eigenvalue
  Mat4 gP;
  Mat4x2 gY;
  double geta = 0.0;
};

Evaluation evaluate(const LMIProblem& prob, const Iterate& z, double mu) {
  const Mat8 F = assemble_lmi(prob, z.P, z.Y, z.eta);
  const auto eig = jacobi_eigen(F);
  const double top = eig.values(7);

  Eigen::Matrix<double, 8, 1> w;
  for (int i = 0; i < 8; ++i) w(i) = std::exp((eig.values(i) - top) / mu);
  const double total = w.sum();
  w /= total;

  const Mat8 G = eig.vectors * w.asDiagonal() * eig.vectors.transpose();
  const Mat4 G11 = G.topLeftCorner<4, 4>();
  const Mat4 G12 = G.topRightCorner<4, 4>();
  const Mat4 G22 = G.bottomRightCorner<4, 4>();
  const double g2 = prob.gamma_f * prob.gamma_f;

  Evaluation ev;
  ev.max_eig = top;
  ev.smooth = top + mu * std::log(total);
  ev.gP = prob.A * G11 + G11 * prob.A.transpose() + G12 + G12.transpose();
  ev.gP = 0.5 * (ev.gP + ev.gP.transpose());
  ev.gY = -2.0 * G11 * prob.C.transpose();
  ev.geta = g2 * G11.trace() - G22.trace();
  return ev;
}

Mat4 clip_spectrum(const Mat4& P, double lo, double hi) {
  const auto eig = jacobi_eigen(0.5 * (P + P.transpose()));
  Eigen::Vector4d d;
  for (int i = 0; i < 4; ++i) d(i) = std::clamp(eig.values(i), lo, hi);
  Mat4 out = eig.vectors * d.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (out + out.transpose());
}

double squared_distance(const Iterate& a, const Iterate& b) {
  return (a.P - b.P).squaredNorm() + (a.Y - b.Y).squaredNorm() +
         (a.eta - b.eta) * (a.eta - b.eta);
}

double directional(const Evaluation& ev, const Iterate& from, const Iterate& to) {
  return (ev.gP.cwiseProduct(to.P - from.P)).sum() + (ev.gY.cwiseProduct(to.Y - from.Y)).sum() +
         ev.geta * (to.eta - from.eta);
}

}  // namespace

void LMIProblem::validate() const {
  if (!A.allFinite() || !C.allFinite() || !std::isfinite(gamma_f) || !std::isfinite(margin))
    throw std::domain_error("LMI problem has non-finite data");
  if (gamma_f < 0.0) throw std::domain_error("LMI problem: gamma_f must be >= 0");
  if (!(margin > 0.0)) throw std::domain_error("LMI problem: margin must be > 0");
}

double default_margin(const Mat4& A) {
  return 1e-6 * std::max(spectral_norm(A), 1.0);
}

OutputLinearization linearize_output(const DerivedConstants& c, const State& x0,
                                     const Input& u0) {
  return {jac_h_x(c, x0, u0), build_matrices(c).Du};
}

Mat8 assemble_lmi(const LMIProblem& prob, const Mat4& P, const Mat4x2& Y, double eta) {
  const Mat4 I = Mat4::Identity();
  Mat8 F;
  F.topLeftCorner<4, 4>() = prob.A.transpose() * P + P * prob.A -
                            prob.C.transpose() * Y.transpose() - Y * prob.C +
                            eta * prob.gamma_f * prob.gamma_f * I;
  F.topRightCorner<4, 4>() = P.transpose();
  F.bottomLeftCorner<4, 4>() = P;
  F.bottomRightCorner<4, 4>() = -eta * I;
  // AᵀP + PA is symmetric only up to rounding.
  return 0.5 * (F + F.transpose());
}

bool verify_certificate(const LMIProblem& prob, const FeasibilityCertificate& cert) {
  if (!cert.P.allFinite() || !cert.Y.allFinite() || !std::isfinite(cert.eta)) return false;
  if ((cert.P - cert.P.transpose()).norm() > 1e-12 * std::max(cert.P.norm(), 1.0)) return false;
  if (cert.eta < 0.0) return false;
  const auto block = min_max_eig_sym(assemble_lmi(prob, cert.P, cert.Y, cert.eta));
  const auto p = min_max_eig_sym(cert.P);
  return block.max <= -prob.margin && p.min >= prob.margin;
}

LmiResult solve_lmi(const LMIProblem& prob, const SolverSettings& settings) {
  prob.validate();
  if (settings.max_iterations < 0) throw std::domain_error("max_iterations must be >= 0");
  if (!(settings.p_floor_ratio > 0.0 && settings.p_floor_ratio < 1.0))
    throw std::domain_error("p_floor_ratio must lie in (0, 1)");
  const double p_ceiling = std::max(settings.p_ceiling, 4.0 * prob.margin);
  const double p_floor = std::max(2.0 * prob.margin, settings.p_floor_ratio * p_ceiling);
  if (!(settings.y_bound > 0.0)) throw std::domain_error("y_bound must be > 0");
  const double y_bound = settings.y_bound;

  Iterate z{Mat4::Identity() * p_ceiling, Mat4x2::Zero(), 1.0};
  const double scale =
      std::max({spectral_norm(prob.A), prob.gamma_f * prob.gamma_f, 1.0}) * p_ceiling;
  double mu = 0.05 * scale;
  const double mu_floor = 0.1 * prob.margin;
  double step = 1.0 / scale;

  LmiResult result;
  result.best_max_eig = std::numeric_limits<double>::infinity();
  // Keeps the most negative verified iterate.
  auto consider = [&](const Iterate& cand, double max_eig, int iter) {
    if (max_eig > -prob.margin) return;
    if (result.certificate && max_eig >= result.certificate->max_eig) return;
    FeasibilityCertificate cert{cand.P, cand.Y, cand.eta, 0.0, prob.margin, iter};
    cert.max_eig = min_max_eig_sym(assemble_lmi(prob, cand.P, cand.Y, cand.eta)).max;
    if (verify_certificate(prob, cert)) result.certificate = cert;
  };

  Evaluation ev = evaluate(prob, z, mu);
  int stall = 0;
  int iter = 0;
  for (; iter <= settings.max_iterations; ++iter) {
    result.best_max_eig = std::min(result.best_max_eig, ev.max_eig);
    consider(z, ev.max_eig, iter);
    if (iter == settings.max_iterations) break;

    // Projected gradient step with backtracking on the smoothed objective.
    Iterate cand;
    Evaluation cand_ev;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      cand.P = clip_spectrum(z.P - step * ev.gP, p_floor, p_ceiling);
      cand.Y = z.Y - step * ev.gY;
      if (const double n = cand.Y.norm(); n > y_bound) cand.Y *= y_bound / n;
      cand.eta = std::max(0.0, z.eta - step * ev.geta);
      const double dist2 = squared_distance(cand, z);
      if (dist2 == 0.0) break;
      cand_ev = evaluate(prob, cand, mu);
      if (cand_ev.smooth <= ev.smooth + directional(ev, z, cand) + dist2 / (2.0 * step)) {
        moved = true;
        break;
      }
      step *= 0.5;
    }

    const double before = ev.smooth;
    if (moved) {
      z = cand;
      ev = cand_ev;
      step *= 2.0;
    }
    const double progress = before - ev.smooth;
    stall = (!moved || progress <= 1e-10 * std::max(1.0, std::abs(before))) ? stall + 1 : 0;
    if (stall >= 5) {
      if (mu <= mu_floor) break;
      mu = std::max(mu_floor, 0.5 * mu);
      ev = evaluate(prob, z, mu);
      stall = 0;
    }
  }

  result.iterations = std::min(iter, settings.max_iterations);
  if (result.certificate) result.best_max_eig = result.certificate->max_eig;
  return result;
}

double gamma_ceiling(const Mat4& A, const Mat2x4& C) {
  const auto eig = jacobi_eigen(C.transpose() * C);
  const double tol = 1e-12 * std::max(eig.values(3), 1.0);
  int k = 0;
  while (k < 4 && eig.values(k) <= tol) ++k;
  if (k == 0) return std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd N = eig.vectors.leftCols(k);
  const Eigen::MatrixXd AN = A * N;
  return std::sqrt(std::max(0.0, min_max_eig_sym(AN.transpose() * AN).min));
}

ObserverGain extract_gain(const FeasibilityCertificate& cert) {
  Eigen::LLT<Mat4> llt(cert.P);
  if (llt.info() != Eigen::Success)
    throw std::logic_error("extract_gain: P is not positive definite");
  return {llt.solve(cert.Y)};
}

}  // namespace lipdse
