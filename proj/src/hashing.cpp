#include "streamnorm/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace streamnorm {

std::uint64_t SplitMix64::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("SplitMix64::below: zero bound");
  std::uint64_t limit = -bound % bound;
  for (;;) {
    std::uint64_t x = next();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
    if (static_cast<std::uint64_t>(m) >= limit) return static_cast<std::uint64_t>(m >> 64);
  }
}

std::uint64_t SplitMix64::between(std::uint64_t lo, std::uint64_t hi) {
  if (hi < lo) throw std::invalid_argument("SplitMix64::between: empty interval");
  if (lo == 0 && hi == ~std::uint64_t{0}) return next();
  return lo + below(hi - lo + 1);
}

std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b % m);
}

std::uint64_t powmod(std::uint64_t a, std::uint64_t e, std::uint64_t m) {
  std::uint64_t r = 1 % m;
  a %= m;
  while (e) {
    if (e & 1) r = mulmod(r, a, m);
    a = mulmod(a, a, m);
    e >>= 1;
  }
  return r;
}

bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  static constexpr std::uint64_t kBases[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  for (std::uint64_t p : kBases) {
    if (n % p == 0) return n == p;
  }
  std::uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (std::uint64_t a : kBases) {
    std::uint64_t x = powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

std::uint64_t sample_prime(std::uint64_t lo, std::uint64_t hi, SplitMix64& rng) {
  if (lo < 2 || hi < lo) throw std::invalid_argument("sample_prime: need hi >= lo >= 2");
  if (hi - lo <= (1u << 16)) {
    std::vector<std::uint64_t> primes;
    for (std::uint64_t x = lo;; ++x) {
      if (is_prime(x)) primes.push_back(x);
      if (x == hi) break;
    }
    if (primes.empty()) {
      throw std::invalid_argument("sample_prime: no prime in [" + std::to_string(lo) +
                                  ", " + std::to_string(hi) + "]");
    }
    return primes[rng.below(primes.size())];
  }
  for (int attempt = 0; attempt < 100000; ++attempt) {
    std::uint64_t x = rng.between(lo, hi);
    if (is_prime(x)) return x;
  }
  throw std::invalid_argument("sample_prime: retries exhausted");
}

unsigned independence_for(double eps) {
  if (!(eps > 0.0) || eps >= 1.0) throw std::invalid_argument("independence_for: eps in (0,1)");
  return std::max(2u, static_cast<unsigned>(std::ceil(std::log2(1.0 / eps))));
}

KWiseHash::KWiseHash(unsigned k, std::uint64_t domain_size, std::uint64_t range_size,
                     std::uint64_t seed)
    : k_(k), modulus_(kMersenne61), domain_(domain_size), range_(range_size), mersenne_(true) {
  if (k < 2) throw std::invalid_argument("KWiseHash: k must be >= 2");
  if (domain_size == 0 || range_size == 0)
    throw std::invalid_argument("KWiseHash: sizes must be >= 1");
  if (domain_size > kMersenne61) throw std::invalid_argument("KWiseHash: domain exceeds field");
  SplitMix64 rng(seed);
  coeffs_.resize(k);
  for (auto& c : coeffs_) c = rng.below(kMersenne61);
}

KWiseHash::KWiseHash(std::vector<std::uint64_t> coefficients, std::uint64_t modulus,
                     std::uint64_t domain_size, std::uint64_t range_size)
    : k_(static_cast<unsigned>(coefficients.size())),
      modulus_(modulus),
      domain_(domain_size),
      range_(range_size),
      mersenne_(modulus == kMersenne61),
      coeffs_(std::move(coefficients)) {
  if (k_ < 2) throw std::invalid_argument("KWiseHash: k must be >= 2");
  if (domain_size == 0 || range_size == 0)
    throw std::invalid_argument("KWiseHash: sizes must be >= 1");
  if (!is_prime(modulus)) throw std::invalid_argument("KWiseHash: modulus must be prime");
  if (domain_size > modulus) throw std::invalid_argument("KWiseHash: domain exceeds field");
  for (auto& c : coeffs_) {
    if (c >= modulus) throw std::invalid_argument("KWiseHash: coefficient outside field");
  }
}

std::uint64_t KWiseHash::field_value_generic(std::uint64_t x) const {
  std::uint64_t acc = coeffs_[k_ - 1];
  for (unsigned i = k_ - 1; i-- > 0;) {
    acc = (mulmod(acc, x, modulus_) + coeffs_[i]) % modulus_;
  }
  return acc;
}

std::uint64_t KWiseHash::reduce(std::uint64_t v) const {
  if (mersenne_) return reduce61(v, range_);
  return static_cast<std::uint64_t>(static_cast<unsigned __int128>(v) * range_ / modulus_);
}

std::uint64_t KWiseHash::field_value(std::uint64_t x) const {
  if (x >= domain_) {
    throw std::out_of_range("KWiseHash: input " + std::to_string(x) + " outside domain of size " +
                            std::to_string(domain_));
  }
  return mersenne_ ? poly_eval61(coeffs_.data(), k_, x) : field_value_generic(x);
}

std::uint64_t KWiseHash::operator()(std::uint64_t x) const { return reduce(field_value(x)); }

namespace {

std::uint64_t checked_square(std::uint64_t m) {
  if (m > (std::uint64_t{1} << 31)) return ~std::uint64_t{0};
  return m * m;
}

}  // namespace

UniverseReducer::UniverseReducer(std::uint64_t n, std::uint64_t m, std::uint64_t seed,
                                 std::uint64_t range)
    : active_(false), q_(0), range_(n), inner_(1, 1, 0) {
  if (n == 0 || m == 0) throw std::invalid_argument("UniverseReducer: n, m must be >= 1");
  if (n <= checked_square(m)) return;
  SplitMix64 rng(seed);
  double logn = std::log2(static_cast<double>(n));
  double rl = static_cast<double>(m) * logn;
  double lo = std::max(2.0, rl * std::log2(std::max(2.0, rl)));
  double hi = 16.0 * lo;
  if (hi > 0x1.0p60) throw std::invalid_argument("UniverseReducer: stream length too large");
  q_ = sample_prime(static_cast<std::uint64_t>(lo), static_cast<std::uint64_t>(hi), rng);
  range_ = range ? range : 16 * m * m;
  inner_ = PairwiseHash(q_, range_, rng.split());
  active_ = true;
}

UniverseReducer::UniverseReducer(std::uint64_t q, PairwiseHash inner)
    : active_(true), q_(q), range_(inner.range_size()), inner_(std::move(inner)) {
  if (inner_.domain_size() < q) throw std::invalid_argument("UniverseReducer: inner domain < q");
}

std::uint64_t UniverseReducer::operator()(std::uint64_t i) const {
  if (!active_) return i;
  return inner_.eval_unchecked(i % q_);
}

}  // namespace streamnorm
