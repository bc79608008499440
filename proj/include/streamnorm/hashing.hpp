#pragma once

#include <bit>
#include <cstdint>
#include <vector>

namespace streamnorm {

inline constexpr std::uint64_t kMersenne61 = (std::uint64_t{1} << 61) - 1;
inline constexpr int kWordBits = 64;

// SplitMix64 (Steele, Lea, Flood 2014). Every seed-derived quantity in the
// library is drawn from this generator, so a 64-bit seed fixes a run exactly.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, bound) by rejection; bound must be nonzero.
  std::uint64_t below(std::uint64_t bound);

  // Uniform in [lo, hi].
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi);

  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Derive an independent child generator seed.
  std::uint64_t split() { return next() ^ 0x5851f42d4c957f2dULL; }

 private:
  std::uint64_t state_;
};

std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t m);
std::uint64_t powmod(std::uint64_t a, std::uint64_t e, std::uint64_t m);

inline std::uint64_t mulmod61(std::uint64_t a, std::uint64_t b) {
  unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  std::uint64_t lo = static_cast<std::uint64_t>(p) & kMersenne61;
  std::uint64_t hi = static_cast<std::uint64_t>(p >> 61);
  std::uint64_t s = lo + hi;
  return s >= kMersenne61 ? s - kMersenne61 : s;
}

// Deterministic Miller-Rabin, exact for every 64-bit input.
bool is_prime(std::uint64_t n);

// Uniform prime from [lo, hi]; throws std::invalid_argument if none is found.
std::uint64_t sample_prime(std::uint64_t lo, std::uint64_t hi, SplitMix64& rng);

inline int lsb(std::uint64_t x) {
  return x == 0 ? kWordBits : std::countr_zero(x);
}

// Horner evaluation of sum c[i] x^i over GF(2^61 - 1).
inline std::uint64_t poly_eval61(const std::uint64_t* c, unsigned k, std::uint64_t x) {
  std::uint64_t acc = c[k - 1];
  for (unsigned i = k - 1; i-- > 0;) {
    acc = mulmod61(acc, x) + c[i];
    if (acc >= kMersenne61) acc -= kMersenne61;
  }
  return acc;
}

// Map a field element onto [0, range) by multiply-shift.
inline std::uint64_t reduce61(std::uint64_t v, std::uint64_t range) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(v) * range) >> 61);
}

// Independence degree used for the k-wise families at accuracy eps.
unsigned independence_for(double eps);

class KWiseHash {
 public:
  KWiseHash(unsigned k, std::uint64_t domain_size, std::uint64_t range_size,
            std::uint64_t seed);
  KWiseHash(std::vector<std::uint64_t> coefficients, std::uint64_t modulus,
            std::uint64_t domain_size, std::uint64_t range_size);

  std::uint64_t field_value(std::uint64_t x) const;
  std::uint64_t operator()(std::uint64_t x) const;

  // Unchecked fast path for callers that already validated x.
  std::uint64_t eval_unchecked(std::uint64_t x) const {
    if (mersenne_) return reduce61(poly_eval61(coeffs_.data(), k_, x), range_);
    return reduce(field_value_generic(x));
  }

  unsigned k() const { return k_; }
  std::uint64_t modulus() const { return modulus_; }
  std::uint64_t domain_size() const { return domain_; }
  std::uint64_t range_size() const { return range_; }
  const std::vector<std::uint64_t>& coefficients() const { return coeffs_; }

 private:
  std::uint64_t field_value_generic(std::uint64_t x) const;
  std::uint64_t reduce(std::uint64_t v) const;

  unsigned k_;
  std::uint64_t modulus_;
  std::uint64_t domain_;
  std::uint64_t range_;
  bool mersenne_;
  std::vector<std::uint64_t> coeffs_;
};

class PairwiseHash : public KWiseHash {
 public:
  PairwiseHash(std::uint64_t domain_size, std::uint64_t range_size, std::uint64_t seed)
      : KWiseHash(2, domain_size, range_size, seed) {}
  PairwiseHash(std::uint64_t a, std::uint64_t b, std::uint64_t modulus,
               std::uint64_t domain_size, std::uint64_t range_size)
      : KWiseHash({b, a}, modulus, domain_size, range_size) {}
};

// i -> inner(i mod q) when the universe n exceeds m^2, identity otherwise.
class UniverseReducer {
 public:
  UniverseReducer(std::uint64_t n, std::uint64_t m, std::uint64_t seed,
                  std::uint64_t range = 0);
  UniverseReducer(std::uint64_t q, PairwiseHash inner);

  std::uint64_t operator()(std::uint64_t i) const;

  bool active() const { return active_; }
  std::uint64_t q() const { return q_; }
  std::uint64_t range() const { return range_; }

 private:
  bool active_;
  std::uint64_t q_;
  std::uint64_t range_;
  PairwiseHash inner_;
};

}  // namespace streamnorm
