#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lipdse::qmc {

enum class SequenceKind { Random, Halton, Sobol };

std::string_view to_string(SequenceKind kind);
/// Throws std::invalid_argument for anything other than random|halton|sobol.
SequenceKind parse_sequence_kind(std::string_view name);

inline constexpr std::size_t kMaxDim = 8;

/// For Random, `seed` seeds the generator. For Halton and Sobol it is a skip
/// offset: point i (1-based) is taken from sequence index i + seed.
struct SequenceSpec {
  SequenceKind kind = SequenceKind::Halton;
  std::size_t dim = 1;
  std::uint64_t seed = 0;
};

/// Row-major set of points in the unit cube.
class PointSet {
 public:
  PointSet() = default;
  PointSet(std::size_t dim, std::vector<double> coords);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  std::span<const double> operator[](std::size_t i) const {
    return {coords_.data() + i * dim_, dim_};
  }
  const std::vector<double>& coords() const { return coords_; }

 private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
};

/// Digit reversal of `index` in `base`, mapped into [0, 1).
double radical_inverse(std::uint32_t base, std::uint64_t index);

/// First `count` primes (2, 3, 5, ...).
std::vector<std::uint32_t> first_primes(std::size_t count);

/// Point number `index` (1-based) of the spec's sequence. Random points are a
/// pure function of (seed, index) too, so any prefix is reproducible.
void point_at(const SequenceSpec& spec, std::uint64_t index, std::span<double> out);

/// First `count` points; generate(spec, s) is a prefix of generate(spec, s+1).
PointSet generate(const SequenceSpec& spec, std::size_t count);

/// Affine map lo + point * (hi - lo), componentwise.
std::vector<double> scale_to_box(std::span<const double> point, std::span<const double> lo,
                                 std::span<const double> hi);

/// J = prod [lo_j, hi_j) inside the unit cube.
struct IntervalBox {
  std::vector<double> lo;
  std::vector<double> hi;
};

/// |#{points in J} / s - vol(J)|. Throws std::domain_error on an empty set or
/// dimension mismatch.
double discrepancy(const IntervalBox& box, const PointSet& points);

/// Lower estimate of the star discrepancy: maximum local discrepancy over the
/// first `trials` anchored boxes [0, q) of a fixed candidate stream. The
/// stream starts with each sample point as an open and as a closed corner and
/// continues with corners whose coordinates are drawn (seeded) from the
/// critical grid of sample coordinates plus 1. Non-decreasing in `trials`.
double star_discrepancy_estimate(const PointSet& points, std::size_t trials, std::uint64_t seed);

}  // namespace lipdse::qmc
