#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace streamnorm {

// Constant-time ln(1 - c/K) for integers 1 <= c <= 4K/5, accurate to
// relative error eps. Grid points are (1/K)(1 + eps/15)^t.
class FastLogTable {
 public:
  FastLogTable(std::uint64_t K, double eps);

  double query(std::uint64_t c) const;

  std::uint64_t K() const { return K_; }
  double eps() const { return eps_; }
  std::uint64_t max_query() const { return max_c_; }
  std::size_t size() const { return values_.size(); }
  std::size_t bytes_used() const { return values_.size() * sizeof(double); }

 private:
  std::uint64_t K_;
  double eps_;
  std::uint64_t max_c_;
  double steps_per_log2_;
  std::vector<double> values_;
};

// log2 of a positive integer without calling a logarithm.
double fast_log2(std::uint64_t x);

double f_occupancy(double A, std::uint64_t K);
double invert_f(double y, std::uint64_t K, double tol);

double bb_mean(std::uint64_t A, std::uint64_t B, std::uint64_t K);
double bb_variance(std::uint64_t A, std::uint64_t B, std::uint64_t K);

struct BallsBinsStats {
  std::uint64_t A = 0;
  std::uint64_t B = 0;
  std::uint64_t K = 1;
  double mean = 0.0;
  double variance = 0.0;

  static BallsBinsStats compute(std::uint64_t A, std::uint64_t B, std::uint64_t K) {
    return {A, B, K, bb_mean(A, B, K), bb_variance(A, B, K)};
  }
};

// ln(1 - occupied/K) / ln(1 - 1/K) with the numerator from the table.
double estimate_from_occupancy(std::uint64_t occupied, std::uint64_t K, const FastLogTable& table);

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace streamnorm
