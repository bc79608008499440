#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace streamnorm {

struct StableParams {
  double p = 1.0;
  double delta = 0.0;
  double boundary_margin = 0.1;
  // Absolute clamp distance, boundary_margin * eps^2 / m.
  double clamp_distance = 0.0;
  int precision_bits = 30;

  static StableParams make(double p, double eps, std::uint64_t m);
  void validate() const;
};

// Chambers-Mallows-Stuck transform of u in (0,1), theta in (-pi/2, pi/2).
double cms_sample(double p, double u, double theta);

// Row-indexed k-wise hash coefficients over GF(2^61 - 1). Row seeds are a
// pairwise-independent function of the master seed.
class StableRowSeeds {
 public:
  StableRowSeeds(std::uint64_t master_seed, std::uint32_t rows, unsigned k);

  std::uint64_t master_seed() const { return master_; }
  std::uint32_t rows() const { return rows_; }
  unsigned k() const { return k_; }
  std::uint64_t row_seed(std::uint32_t j) const;
  std::uint64_t hash(std::uint64_t i, std::uint32_t j) const;
  std::size_t bytes_used() const { return coeffs_.size() * sizeof(std::uint64_t); }

 private:
  std::uint64_t master_;
  std::uint32_t rows_;
  unsigned k_;
  std::uint64_t row_a_;
  std::uint64_t row_b_;
  std::vector<std::uint64_t> coeffs_;
};

// (u, theta) carved from the row-j hash of i, clamped away from singular points.
std::pair<double, double> stable_uniforms(const StableRowSeeds& seeds, const StableParams& params,
                                          std::uint64_t i, std::uint32_t j);

// X_{i,j} in integer units of params.delta.
std::int64_t stable_entry(const StableRowSeeds& seeds, const StableParams& params, std::uint64_t i,
                          std::uint32_t j);

// Bulk form: writes X_{i,j} for every row into out[0..rows).
void stable_column(const StableRowSeeds& seeds, const StableParams& params, std::uint64_t i,
                   std::int64_t* out);

// Median of |X| for X ~ D_p, evaluated once per p on a deterministic grid.
double stable_abs_median(double p);

inline constexpr std::int64_t kMaxStableUnits = std::int64_t{1} << 62;

}  // namespace streamnorm
