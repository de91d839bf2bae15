#include "lipdse/qmc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lipdse::qmc {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double unit_from_bits(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

double hashed_uniform(std::uint64_t seed, std::uint64_t index, std::size_t coord) {
  return unit_from_bits(splitmix64(splitmix64(seed) + index * kMaxDim + coord));
}

// Joe & Kuo primitive polynomials and initial direction numbers for
// dimensions 2..8 (dimension 1 is the van der Corput sequence).
struct SobolPoly {
  unsigned degree;
  unsigned coeffs;
  std::array<std::uint32_t, 5> m;
};

constexpr std::array<SobolPoly, kMaxDim - 1> kSobolPolys{{
    {1, 0, {1, 0, 0, 0, 0}},
    {2, 1, {1, 3, 0, 0, 0}},
    {3, 1, {1, 3, 1, 0, 0}},
    {3, 2, {1, 1, 1, 0, 0}},
    {4, 1, {1, 1, 3, 3, 0}},
    {4, 4, {1, 3, 5, 13, 0}},
    {5, 2, {1, 1, 5, 5, 17}},
}};

constexpr unsigned kSobolBits = 32;

using DirectionTable = std::array<std::array<std::uint32_t, kSobolBits>, kMaxDim>;

DirectionTable build_direction_table() {
  DirectionTable v{};
  for (unsigned k = 0; k < kSobolBits; ++k) v[0][k] = 1u << (kSobolBits - 1 - k);
  for (std::size_t d = 1; d < kMaxDim; ++d) {
    const auto& poly = kSobolPolys[d - 1];
    const unsigned s = poly.degree;
    std::array<std::uint32_t, kSobolBits> m{};
    for (unsigned k = 0; k < s; ++k) m[k] = poly.m[k];
    for (unsigned k = s; k < kSobolBits; ++k) {
      std::uint32_t next = m[k - s] ^ (m[k - s] << s);
      for (unsigned j = 1; j < s; ++j) {
        const unsigned bit = (poly.coeffs >> (s - 1 - j)) & 1u;
        if (bit) next ^= m[k - j] << j;
      }
      m[k] = next;
    }
    for (unsigned k = 0; k < kSobolBits; ++k) v[d][k] = m[k] << (kSobolBits - 1 - k);
  }
  return v;
}

const DirectionTable& direction_table() {
  static const DirectionTable table = build_direction_table();
  return table;
}

double sobol_coordinate(std::size_t dim, std::uint64_t index) {
  // Gray-code ordering: point i is the XOR of the direction numbers selected
  // by the bits of i ^ (i >> 1).
  const auto& v = direction_table()[dim];
  std::uint64_t gray = index ^ (index >> 1);
  if (gray >> kSobolBits)
    throw std::out_of_range("sobol index exceeds 2^32 points");
  std::uint32_t acc = 0;
  for (unsigned k = 0; gray != 0; ++k, gray >>= 1)
    if (gray & 1u) acc ^= v[k];
  return static_cast<double>(acc) * 0x1.0p-32;
}

}  // namespace

std::string_view to_string(SequenceKind kind) {
  switch (kind) {
    case SequenceKind::Random: return "random";
    case SequenceKind::Halton: return "halton";
    case SequenceKind::Sobol: return "sobol";
  }
  return "unknown";
}

SequenceKind parse_sequence_kind(std::string_view name) {
  if (name == "random") return SequenceKind::Random;
  if (name == "halton") return SequenceKind::Halton;
  if (name == "sobol") return SequenceKind::Sobol;
  throw std::invalid_argument("unsupported sampler '" + std::string(name) +
                              "' (expected random|halton|sobol)");
}

PointSet::PointSet(std::size_t dim, std::vector<double> coords)
    : dim_(dim), coords_(std::move(coords)) {
  if (dim_ == 0 || coords_.size() % dim_ != 0)
    throw std::invalid_argument("PointSet: coordinate count is not a multiple of dim");
}

double radical_inverse(std::uint32_t base, std::uint64_t index) {
  if (base < 2) throw std::invalid_argument("radical_inverse: base must be >= 2");
  const double inv_base = 1.0 / base;
  double scale = inv_base;
  double result = 0.0;
  while (index > 0) {
    result += static_cast<double>(index % base) * scale;
    index /= base;
    scale *= inv_base;
  }
  return result;
}

std::vector<std::uint32_t> first_primes(std::size_t count) {
  std::vector<std::uint32_t> primes;
  for (std::uint32_t n = 2; primes.size() < count; ++n) {
    const bool is_prime = std::none_of(primes.begin(), primes.end(), [n](std::uint32_t p) {
      return n % p == 0;
    });
    if (is_prime) primes.push_back(n);
  }
  return primes;
}

void point_at(const SequenceSpec& spec, std::uint64_t index, std::span<double> out) {
  if (spec.dim == 0 || spec.dim > kMaxDim)
    throw std::invalid_argument("sequence dimension must be in [1, 8]");
  if (out.size() != spec.dim) throw std::invalid_argument("point_at: output size != dim");
  if (index == 0) throw std::invalid_argument("point_at: indices start at 1");

  switch (spec.kind) {
    case SequenceKind::Random:
      for (std::size_t j = 0; j < spec.dim; ++j) out[j] = hashed_uniform(spec.seed, index, j);
      return;
    case SequenceKind::Halton: {
      static const auto primes = first_primes(kMaxDim);
      for (std::size_t j = 0; j < spec.dim; ++j)
        out[j] = radical_inverse(primes[j], index + spec.seed);
      return;
    }
    case SequenceKind::Sobol:
      for (std::size_t j = 0; j < spec.dim; ++j) out[j] = sobol_coordinate(j, index + spec.seed);
      return;
  }
  throw std::invalid_argument("unsupported sequence kind");
}

PointSet generate(const SequenceSpec& spec, std::size_t count) {
  if (count == 0) throw std::invalid_argument("generate: count must be >= 1");
  std::vector<double> coords(count * spec.dim);
  for (std::size_t i = 0; i < count; ++i)
    point_at(spec, i + 1, std::span<double>(coords.data() + i * spec.dim, spec.dim));
  return PointSet(spec.dim, std::move(coords));
}

std::vector<double> scale_to_box(std::span<const double> point, std::span<const double> lo,
                                 std::span<const double> hi) {
  if (point.size() != lo.size() || lo.size() != hi.size())
    throw std::invalid_argument("scale_to_box: dimension mismatch");
  std::vector<double> out(point.size());
  for (std::size_t j = 0; j < point.size(); ++j) out[j] = lo[j] + point[j] * (hi[j] - lo[j]);
  return out;
}

double discrepancy(const IntervalBox& box, const PointSet& points) {
  if (points.size() == 0) throw std::domain_error("discrepancy: empty point sequence");
  const std::size_t d = points.dim();
  if (box.lo.size() != d || box.hi.size() != d)
    throw std::domain_error("discrepancy: box dimension mismatch");
  double volume = 1.0;
  for (std::size_t j = 0; j < d; ++j) {
    if (!(0.0 <= box.lo[j] && box.lo[j] <= box.hi[j] && box.hi[j] <= 1.0))
      throw std::domain_error("discrepancy: box must satisfy 0 <= lo <= hi <= 1");
    volume *= box.hi[j] - box.lo[j];
  }
  std::size_t inside = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto p = points[i];
    bool in = true;
    for (std::size_t j = 0; j < d && in; ++j) in = box.lo[j] <= p[j] && p[j] < box.hi[j];
    inside += in ? 1 : 0;
  }
  return std::abs(static_cast<double>(inside) / static_cast<double>(points.size()) - volume);
}

double star_discrepancy_estimate(const PointSet& points, std::size_t trials, std::uint64_t seed) {
  if (points.size() == 0) throw std::domain_error("star discrepancy: empty point sequence");
  if (trials == 0) throw std::domain_error("star discrepancy: trials must be >= 1");
  const std::size_t n = points.size();
  const std::size_t d = points.dim();
  constexpr double kInf = std::numeric_limits<double>::infinity();

  IntervalBox box{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  double best = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    if (t < 2 * n) {
      const auto p = points[t / 2];
      const bool closed = (t % 2) == 1;
      for (std::size_t j = 0; j < d; ++j)
        box.hi[j] = closed ? std::min(std::nextafter(p[j], kInf), 1.0) : p[j];
    } else {
      for (std::size_t j = 0; j < d; ++j) {
        const std::uint64_t bits = splitmix64(splitmix64(seed) + t * kMaxDim + j);
        const std::size_t pick = static_cast<std::size_t>((bits >> 1) % (n + 1));
        const bool closed = (bits & 1u) != 0;
        if (pick == n) {
          box.hi[j] = 1.0;
        } else {
          const double c = points[pick][j];
          box.hi[j] = closed ? std::min(std::nextafter(c, kInf), 1.0) : c;
        }
      }
    }
    best = std::max(best, discrepancy(box, points));
  }
  return best;
}

}  // namespace lipdse::qmc
