#include "streamnorm/numerics.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace streamnorm {

namespace {

constexpr int kMantissaBits = 10;

const std::array<double, (1 << kMantissaBits) + 1>& mantissa_table() {
  static const auto table = [] {
    std::array<double, (1 << kMantissaBits) + 1> t{};
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = std::log2(1.0 + static_cast<double>(i) / (1 << kMantissaBits));
    }
    return t;
  }();
  return table;
}

}  // namespace

double fast_log2(std::uint64_t x) {
  if (x == 0) throw std::domain_error("fast_log2: zero");
  int e = std::bit_width(x) - 1;
  // 52-bit fraction of x / 2^e, split into a table index and an interpolation weight.
  std::uint64_t frac = e >= 52 ? (x >> (e - 52)) : (x << (52 - e));
  frac &= (std::uint64_t{1} << 52) - 1;
  std::uint64_t idx = frac >> (52 - kMantissaBits);
  double w = static_cast<double>(frac & ((std::uint64_t{1} << (52 - kMantissaBits)) - 1)) *
             0x1.0p-42;
  const auto& t = mantissa_table();
  return e + t[idx] + (t[idx + 1] - t[idx]) * w;
}

FastLogTable::FastLogTable(std::uint64_t K, double eps) : K_(K), eps_(eps) {
  if (K < 2) throw std::invalid_argument("FastLogTable: K must be >= 2");
  if (!(eps > 0.0) || eps >= 1.0) throw std::invalid_argument("FastLogTable: eps in (0,1)");
  max_c_ = std::max<std::uint64_t>(1, 4 * K / 5);
  double ratio_log = std::log1p(eps / 15.0);
  steps_per_log2_ = std::log(2.0) / ratio_log;
  auto top = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(max_c_)) *
                                                steps_per_log2_)) + 2;
  values_.resize(top);
  for (std::size_t t = 0; t < top; ++t) {
    double z = std::exp(static_cast<double>(t) * ratio_log) / static_cast<double>(K);
    values_[t] = std::log1p(-std::min(z, 1.0 - 1e-12));
  }
}

double FastLogTable::query(std::uint64_t c) const {
  if (c < 1 || c > max_c_) {
    throw std::out_of_range("FastLogTable: c=" + std::to_string(c) + " outside [1, " +
                            std::to_string(max_c_) + "]");
  }
  auto t = static_cast<std::size_t>(fast_log2(c) * steps_per_log2_ + 0.5);
  return values_[std::min(t, values_.size() - 1)];
}

double f_occupancy(double A, std::uint64_t K) {
  if (A < 0) throw std::domain_error("f_occupancy: A < 0");
  if (K == 0) throw std::invalid_argument("f_occupancy: K = 0");
  if (K == 1) return 0.0;
  double lq = std::log1p(-1.0 / static_cast<double>(K));
  double a = std::exp(A * lq);
  // K (a - a^2) = K a (1 - a)
  return static_cast<double>(K) * a * -std::expm1(A * lq);
}

double invert_f(double y, std::uint64_t K, double tol) {
  if (K < 2) throw std::invalid_argument("invert_f: K must be >= 2");
  if (!(tol > 0.0)) throw std::invalid_argument("invert_f: tol must be positive");
  double hi = static_cast<double>(K) / 3.0;
  double ymax = f_occupancy(hi, K);
  if (!(y >= 0.0) || y > ymax) {
    throw std::domain_error("invert_f: y=" + std::to_string(y) + " outside [0, " +
                            std::to_string(ymax) + "]");
  }
  double lo = 0.0;
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    if (f_occupancy(mid, K) < y) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

void CompensatedSum::add(double x) {
  double t = sum_ + x;
  if (std::fabs(sum_) >= std::fabs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

double bb_mean(std::uint64_t A, std::uint64_t B, std::uint64_t K) {
  if (K == 0) throw std::invalid_argument("bb_mean: K = 0");
  if (A == 0) return 0.0;
  if (K == 1) return B == 0 ? 1.0 : 0.0;
  double lq = std::log1p(-1.0 / static_cast<double>(K));
  return static_cast<double>(K) * -std::expm1(static_cast<double>(A) * lq) *
         std::exp(static_cast<double>(B) * lq);
}

double bb_variance(std::uint64_t A, std::uint64_t B, std::uint64_t K) {
  if (K == 0) throw std::invalid_argument("bb_variance: K = 0");
  if (A == 0 || K == 1) return 0.0;
  const double k = static_cast<double>(K);
  const double a_n = static_cast<double>(A);
  const double b_n = static_cast<double>(B);
  if (K == 2) {
    long double q = 0.5L;
    long double e = 2 * (1 - std::pow(q, A)) * std::pow(q, B);
    long double both = (B == 0 ? 1.0L : 0.0L) * (1 - 2 * std::pow(q, A) + (A == 0 ? 1.0L : 0.0L));
    long double v = e + 2 * both - e * e;
    return static_cast<double>(std::max(0.0L, v));
  }
  const double lq = std::log1p(-1.0 / k);
  const double lq2 = std::log1p(-2.0 / k);
  const double lr = std::log1p(-1.0 / ((k - 1.0) * (k - 1.0)));
  const double one_minus_a = -std::expm1(a_n * lq);
  const double b = std::exp(b_n * lq);
  const double b2 = std::exp(b_n * lq2);
  // (1-2/K)^n - (1-1/K)^(2n) = (1-1/K)^(2n) * expm1(n ln(1 - 1/(K-1)^2))
  const double db = std::exp(2.0 * b_n * lq) * std::expm1(b_n * lr);
  const double da = std::exp(2.0 * a_n * lq) * std::expm1(a_n * lr);
  CompensatedSum s;
  s.add(k * one_minus_a * b);
  s.add(one_minus_a * one_minus_a * k * k * db);
  s.add(-one_minus_a * one_minus_a * k * b2);
  s.add(k * (k - 1.0) * b2 * da);
  return s.value();
}

double estimate_from_occupancy(std::uint64_t occupied, std::uint64_t K, const FastLogTable& table) {
  if (occupied == 0) return 0.0;
  if (table.K() != K) throw std::invalid_argument("estimate_from_occupancy: table built for other K");
  if (occupied > table.max_query()) {
    throw std::domain_error("estimate_from_occupancy: occupied=" + std::to_string(occupied) +
                            " exceeds 4K/5");
  }
  return table.query(occupied) / std::log1p(-1.0 / static_cast<double>(K));
}

}  // namespace streamnorm
