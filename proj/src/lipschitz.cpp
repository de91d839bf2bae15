#include "lipdse/lipschitz.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <stdexcept>
#include <string>
#include <vector>

namespace lipdse {

namespace {

constexpr double kPairDistanceFloor = 1e-12;

struct SamplePoint {
  State x;
  Input u;
};

SamplePoint map_sample(std::span<const double> z, const BoundsBox& b) {
  SamplePoint p;
  for (int j = 0; j < 4; ++j) {
    p.x(j) = b.x_lo(j) + z[static_cast<std::size_t>(j)] * (b.x_hi(j) - b.x_lo(j));
    p.u(j) = b.u_lo(j) + z[static_cast<std::size_t>(j) + 4] * (b.u_hi(j) - b.u_lo(j));
  }
  return p;
}

std::vector<SamplePoint> draw_samples(const BoundsBox& b, const qmc::SequenceSpec& seq,
                                      std::size_t s) {
  if (seq.dim != 8) throw std::invalid_argument("sampling over X x U needs an 8-d sequence");
  const auto pts = qmc::generate(seq, s);
  std::vector<SamplePoint> out;
  out.reserve(s);
  for (std::size_t i = 0; i < s; ++i) out.push_back(map_sample(pts[i], b));
  return out;
}

// Max-reduction of body(i) over [0, n) split into contiguous chunks.
template <typename Body>
double chunked_max(std::size_t n, std::size_t threads, Body body) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  auto run = [&](std::size_t begin, std::size_t end) {
    double best = 0.0;
    for (std::size_t i = begin; i < end; ++i) best = std::max(best, body(i));
    return best;
  };
  if (threads == 1) return run(0, n);
  std::vector<std::future<double>> parts;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t begin = 0; begin < n; begin += chunk)
    parts.push_back(std::async(std::launch::async, run, begin, std::min(n, begin + chunk)));
  double best = 0.0;
  for (auto& f : parts) best = std::max(best, f.get());
  return best;
}

JacobianFn jacobian_of(LipTarget target, const DerivedConstants& c) {
  if (target == LipTarget::Process)
    return [c](const State& x, const Input& u) -> Eigen::MatrixXd { return jac_f_x(c, x, u); };
  return [c](const State& x, const Input& u) -> Eigen::MatrixXd { return jac_h_x(c, x, u); };
}

VectorFn function_of(LipTarget target, const DerivedConstants& c) {
  if (target == LipTarget::Process)
    return [c](const State& x, const Input& u) -> Eigen::VectorXd { return eval_f(c, x, u); };
  return [c](const State& x, const Input& u) -> Eigen::VectorXd { return eval_h(c, x, u); };
}

}  // namespace

void BoundsBox::validate() const {
  for (int j = 0; j < 4; ++j) {
    if (!std::isfinite(x_lo(j)) || !std::isfinite(x_hi(j)) || !std::isfinite(u_lo(j)) ||
        !std::isfinite(u_hi(j)))
      throw std::domain_error("bounds: non-finite endpoint at component " + std::to_string(j + 1));
    if (x_lo(j) > x_hi(j))
      throw std::domain_error("bounds: x_lo > x_hi at component " + std::to_string(j + 1));
    if (u_lo(j) > u_hi(j))
      throw std::domain_error("bounds: u_lo > u_hi at component " + std::to_string(j + 1));
  }
}

std::string_view to_string(LipTarget t) {
  return t == LipTarget::Process ? "f" : "h";
}

std::string_view to_string(LipMethod m) {
  switch (m) {
    case LipMethod::Analytic: return "analytic";
    case LipMethod::JacobianSup: return "jacobian";
    case LipMethod::Pairwise: return "pairwise";
  }
  return "unknown";
}

LipTarget parse_target(std::string_view s) {
  if (s == "f") return LipTarget::Process;
  if (s == "h") return LipTarget::Measurement;
  throw std::invalid_argument("unknown target '" + std::string(s) + "' (expected f|h)");
}

LipMethod parse_method(std::string_view s) {
  if (s == "analytic") return LipMethod::Analytic;
  if (s == "jacobian") return LipMethod::JacobianSup;
  if (s == "pairwise") return LipMethod::Pairwise;
  throw std::invalid_argument("unknown method '" + std::string(s) +
                              "' (expected jacobian|pairwise)");
}

KappaVec kappas(const BoundsBox& b) {
  b.validate();
  KappaVec k;
  k.kx = b.x_lo.cwiseAbs().cwiseMax(b.x_hi.cwiseAbs());
  k.ku = b.u_lo.cwiseAbs().cwiseMax(b.u_hi.cwiseAbs());
  return k;
}

double gamma_f_tilde(const DerivedConstants& c, const KappaVec& k) {
  const double ku3 = k.ku(2), ku4 = k.ku(3);
  const double kx3 = k.kx(2), kx4 = k.kx(3);
  return std::abs(c.a(3)) * ((ku3 + ku4) * (1.0 + kx3 + kx4) + 2.0 * ku3 * ku4) +
         std::abs(c.a(4)) * (ku3 * (1.0 + ku3) + ku4 * (1.0 + ku4));
}

LipschitzEstimate gamma_f_analytic(const DerivedConstants& c, const BoundsBox& b) {
  const auto k = kappas(b);
  const double tilde = gamma_f_tilde(c, k);
  const double ku = k.ku(2) + k.ku(3);
  const double a8 = std::abs(c.a(8)), a10 = std::abs(c.a(10));
  LipschitzEstimate est;
  est.value = std::sqrt(tilde * tilde + (a8 * a8 + a10 * a10) * ku * ku);
  est.target = LipTarget::Process;
  est.method = LipMethod::Analytic;
  return est;
}

LipschitzEstimate gamma_h_analytic(const DerivedConstants& c, const BoundsBox& b) {
  const auto k = kappas(b);
  const double sqrt2 = std::sqrt(2.0);
  LipschitzEstimate est;
  est.value =
      sqrt2 * (k.kx(2) + k.kx(3) + 2.0 * std::abs(c.beta1) * (k.ku(2) + k.ku(3)) + sqrt2);
  est.target = LipTarget::Measurement;
  est.method = LipMethod::Analytic;
  return est;
}

double component_aggregate(std::span<const double> gammas) {
  if (gammas.empty()) throw std::domain_error("component_aggregate: empty list");
  double sum = 0.0;
  for (double g : gammas) {
    if (!(g >= 0.0)) throw std::domain_error("component_aggregate: negative component constant");
    sum += g * g;
  }
  return std::sqrt(sum);
}

double sup_jacobian_norm(const JacobianFn& jac, const BoundsBox& b, const qmc::SequenceSpec& seq,
                         std::size_t s, const SamplingOptions& opt) {
  if (s < 1) throw std::domain_error("jacobian-sup estimate needs at least one sample");
  b.validate();
  const auto samples = draw_samples(b, seq, s);
  return chunked_max(s, opt.threads, [&](std::size_t i) {
    return spectral_norm(jac(samples[i].x, samples[i].u));
  });
}

double max_pairwise_quotient(const VectorFn& g, const BoundsBox& b, const qmc::SequenceSpec& seq,
                             std::size_t s, const SamplingOptions& opt) {
  if (s < 2) throw std::domain_error("pairwise estimate needs at least two samples");
  b.validate();
  const auto samples = draw_samples(b, seq, s);
  return chunked_max(s, opt.threads, [&](std::size_t i) {
    const Input& u = samples[i].u;
    const Eigen::VectorXd gi = g(samples[i].x, u);
    double best = 0.0;
    for (std::size_t j = i + 1; j < s; ++j) {
      const double dist = (samples[i].x - samples[j].x).norm();
      if (dist < kPairDistanceFloor) continue;
      best = std::max(best, (gi - g(samples[j].x, u)).norm() / dist);
    }
    return best;
  });
}

LipschitzEstimate estimate_gamma_jacobian(LipTarget target, const DerivedConstants& c,
                                          const BoundsBox& b, qmc::SequenceKind sampler,
                                          std::uint64_t seed, std::size_t s,
                                          const SamplingOptions& opt) {
  LipschitzEstimate est;
  est.value = sup_jacobian_norm(jacobian_of(target, c), b, {sampler, 8, seed}, s, opt);
  est.target = target;
  est.method = LipMethod::JacobianSup;
  est.sampler = sampler;
  est.samples = s;
  est.seed = seed;
  return est;
}

LipschitzEstimate estimate_gamma_pairwise(LipTarget target, const DerivedConstants& c,
                                          const BoundsBox& b, qmc::SequenceKind sampler,
                                          std::uint64_t seed, std::size_t s,
                                          const SamplingOptions& opt) {
  LipschitzEstimate est;
  est.value = max_pairwise_quotient(function_of(target, c), b, {sampler, 8, seed}, s, opt);
  est.target = target;
  est.method = LipMethod::Pairwise;
  est.sampler = sampler;
  est.samples = s;
  est.seed = seed;
  return est;
}

}  // namespace lipdse
