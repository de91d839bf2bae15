#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>

#include "lipdse/gen_model.hpp"
#include "lipdse/qmc.hpp"

namespace lipdse {

/// Operating region X x U as per-component intervals.
struct BoundsBox {
  Vec4 x_lo = Vec4::Zero();
  Vec4 x_hi = Vec4::Zero();
  Vec4 u_lo = Vec4::Zero();
  Vec4 u_hi = Vec4::Zero();

  /// Throws std::domain_error when lo > hi or an endpoint is not finite.
  void validate() const;
};

/// kappa_i = max(|lo_i|, |hi_i|) for the state and input intervals.
struct KappaVec {
  Vec4 kx = Vec4::Zero();
  Vec4 ku = Vec4::Zero();
};

enum class LipTarget { Process, Measurement };
enum class LipMethod { Analytic, JacobianSup, Pairwise };

std::string_view to_string(LipTarget t);
std::string_view to_string(LipMethod m);
LipTarget parse_target(std::string_view s);
LipMethod parse_method(std::string_view s);

struct LipschitzEstimate {
  double value = 0.0;
  LipTarget target = LipTarget::Process;
  LipMethod method = LipMethod::Analytic;
  std::optional<qmc::SequenceKind> sampler;  // empty iff method == Analytic
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

KappaVec kappas(const BoundsBox& b);

/// Intermediate bound on the speed-equation component (f_2).
double gamma_f_tilde(const DerivedConstants& c, const KappaVec& k);

LipschitzEstimate gamma_f_analytic(const DerivedConstants& c, const BoundsBox& b);
LipschitzEstimate gamma_h_analytic(const DerivedConstants& c, const BoundsBox& b);

/// Euclidean combination sqrt(sum gamma_i^2) of per-component constants.
/// Throws std::domain_error on an empty list or a negative entry.
double component_aggregate(std::span<const double> gammas);

using JacobianFn = std::function<Eigen::MatrixXd(const State&, const Input&)>;
using VectorFn = std::function<Eigen::VectorXd(const State&, const Input&)>;

struct SamplingOptions {
  // Sample range is split into this many contiguous chunks that are reduced
  // by max; the result does not depend on it.
  std::size_t threads = 1;
};

/// max over s samples (x, u) of the spectral norm of jac(x, u). Samples are
/// 8-dimensional points mapped onto X x U (first four coordinates -> x).
double sup_jacobian_norm(const JacobianFn& jac, const BoundsBox& b, const qmc::SequenceSpec& seq,
                         std::size_t s, const SamplingOptions& opt = {});

/// max over all sample pairs i < j of |g(x_i,u_i) - g(x_j,u_i)| / |x_i - x_j|.
/// Both points of a pair share u_i. Pairs closer than 1e-12 are skipped.
double max_pairwise_quotient(const VectorFn& g, const BoundsBox& b, const qmc::SequenceSpec& seq,
                             std::size_t s, const SamplingOptions& opt = {});

LipschitzEstimate estimate_gamma_jacobian(LipTarget target, const DerivedConstants& c,
                                          const BoundsBox& b, qmc::SequenceKind sampler,
                                          std::uint64_t seed, std::size_t s,
                                          const SamplingOptions& opt = {});

LipschitzEstimate estimate_gamma_pairwise(LipTarget target, const DerivedConstants& c,
                                          const BoundsBox& b, qmc::SequenceKind sampler,
                                          std::uint64_t seed, std::size_t s,
                                          const SamplingOptions& opt = {});

}  // namespace lipdse
