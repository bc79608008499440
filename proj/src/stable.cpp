#include "streamnorm/stable.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "streamnorm/hashing.hpp"

namespace streamnorm {

StableParams StableParams::make(double p, double eps, std::uint64_t m) {
  if (m == 0) throw std::invalid_argument("StableParams: m must be >= 1");
  StableParams s;
  s.p = p;
  s.delta = eps / (4.0 * static_cast<double>(m));
  s.clamp_distance = s.boundary_margin * eps * eps / static_cast<double>(m);
  s.validate();
  return s;
}

void StableParams::validate() const {
  if (!(p > 0.0 && p < 2.0)) throw std::invalid_argument("StableParams: p must lie in (0,2)");
  if (!(delta > 0.0)) throw std::invalid_argument("StableParams: delta must be positive");
  if (!(boundary_margin > 0.0 && boundary_margin < 0.25))
    throw std::invalid_argument("StableParams: boundary_margin must lie in (0, 1/4)");
  if (!(clamp_distance > 0.0 && clamp_distance < 0.25))
    throw std::invalid_argument("StableParams: clamp distance must lie in (0, 1/4)");
}

namespace {

inline double cms_half(double u, double theta) {
  double s, c;
  sincos(theta, &s, &c);
  return s / (2.0 * c * c * -std::log(u));
}

inline double cms_three_halves(double u, double theta) {
  double s, c;
  sincos(0.5 * theta, &s, &c);
  double s1 = 2.0 * s * c;
  double c1 = c * c - s * s;
  double s3 = s1 * c + c1 * s;
  return s3 * std::cbrt(-std::log(u) / (c1 * c1 * c));
}

inline double cms_general(double p, double u, double theta) {
  double sp, cp, s, c;
  sincos(p * theta, &sp, &cp);
  sincos(theta, &s, &c);
  double c1 = c * cp + s * sp;
  double w = -std::log(u);
  return sp * std::exp(-std::log(c) / p + (1.0 - p) / p * std::log(c1 / w));
}

template <typename F>
void fill_column(const StableRowSeeds& seeds, const StableParams& params, std::uint64_t i,
                 std::int64_t* out, F transform) {
  const double d = params.clamp_distance;
  const double inv_delta = 1.0 / params.delta;
  const double half_pi = std::numbers::pi / 2;
  const double limit = static_cast<double>(kMaxStableUnits);
  for (std::uint32_t j = 0; j < seeds.rows(); ++j) {
    std::uint64_t v = seeds.hash(i, j);
    double u = (static_cast<double>(v >> 31) + 0.5) * 0x1.0p-30;
    double theta =
        std::numbers::pi * ((static_cast<double>(v & 0x7fffffffULL) + 0.5) * 0x1.0p-31 - 0.5);
    u = std::clamp(u, d, 1.0 - d);
    theta = std::clamp(theta, -half_pi + d, half_pi - d);
    double x = transform(u, theta) * inv_delta;
    if (!(std::fabs(x) < limit)) {
      out[j] = std::signbit(x) ? -kMaxStableUnits : kMaxStableUnits;
    } else {
      out[j] = std::llround(x);
    }
  }
}

}  // namespace

double cms_sample(double p, double u, double theta) {
  if (!(p > 0.0 && p < 2.0)) throw std::domain_error("cms_sample: p must lie in (0,2)");
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("cms_sample: u must lie in (0,1)");
  if (!(std::fabs(theta) < std::numbers::pi / 2))
    throw std::domain_error("cms_sample: theta must lie in (-pi/2, pi/2)");
  if (p == 1.0) return std::tan(theta);
  if (p == 0.5) return cms_half(u, theta);
  if (p == 1.5) return cms_three_halves(u, theta);
  return cms_general(p, u, theta);
}

StableRowSeeds::StableRowSeeds(std::uint64_t master_seed, std::uint32_t rows, unsigned k)
    : master_(master_seed), rows_(rows), k_(k) {
  if (rows == 0) throw std::invalid_argument("StableRowSeeds: rows must be >= 1");
  if (k < 2) throw std::invalid_argument("StableRowSeeds: k must be >= 2");
  SplitMix64 rng(master_seed);
  row_a_ = rng.below(kMersenne61);
  row_b_ = rng.below(kMersenne61);
  coeffs_.resize(static_cast<std::size_t>(rows) * k);
  for (std::uint32_t j = 0; j < rows; ++j) {
    SplitMix64 row(row_seed(j));
    for (unsigned t = 0; t < k; ++t) coeffs_[static_cast<std::size_t>(j) * k + t] = row.below(kMersenne61);
  }
}

std::uint64_t StableRowSeeds::row_seed(std::uint32_t j) const {
  std::uint64_t v = mulmod61(row_a_, j) + row_b_;
  return v >= kMersenne61 ? v - kMersenne61 : v;
}

std::uint64_t StableRowSeeds::hash(std::uint64_t i, std::uint32_t j) const {
  return poly_eval61(coeffs_.data() + static_cast<std::size_t>(j) * k_, k_, i);
}

std::pair<double, double> stable_uniforms(const StableRowSeeds& seeds, const StableParams& params,
                                          std::uint64_t i, std::uint32_t j) {
  if (j >= seeds.rows()) throw std::out_of_range("stable_uniforms: row out of range");
  std::uint64_t v = seeds.hash(i, j);
  double u = (static_cast<double>(v >> 31) + 0.5) * 0x1.0p-30;
  double theta =
      std::numbers::pi * ((static_cast<double>(v & 0x7fffffffULL) + 0.5) * 0x1.0p-31 - 0.5);
  const double d = params.clamp_distance;
  return {std::clamp(u, d, 1.0 - d),
          std::clamp(theta, -std::numbers::pi / 2 + d, std::numbers::pi / 2 - d)};
}

std::int64_t stable_entry(const StableRowSeeds& seeds, const StableParams& params, std::uint64_t i,
                          std::uint32_t j) {
  auto [u, theta] = stable_uniforms(seeds, params, i, j);
  double x = cms_sample(params.p, u, theta) / params.delta;
  const double limit = static_cast<double>(kMaxStableUnits);
  if (!(std::fabs(x) < limit)) return std::signbit(x) ? -kMaxStableUnits : kMaxStableUnits;
  return std::llround(x);
}

void stable_column(const StableRowSeeds& seeds, const StableParams& params, std::uint64_t i,
                   std::int64_t* out) {
  const double p = params.p;
  if (p == 1.0) {
    fill_column(seeds, params, i, out, [](double, double t) { return std::tan(t); });
  } else if (p == 0.5) {
    fill_column(seeds, params, i, out, cms_half);
  } else if (p == 1.5) {
    fill_column(seeds, params, i, out, cms_three_halves);
  } else {
    fill_column(seeds, params, i, out, [p](double u, double t) { return cms_general(p, u, t); });
  }
}

double stable_abs_median(double p) {
  static std::mutex mu;
  static std::map<double, double> cache;
  std::lock_guard<std::mutex> lock(mu);
  if (auto it = cache.find(p); it != cache.end()) return it->second;
  constexpr int kGrid = 512;
  std::vector<double> values;
  values.reserve(kGrid * kGrid);
  for (int a = 0; a < kGrid; ++a) {
    double u = (a + 0.5) / kGrid;
    for (int b = 0; b < kGrid; ++b) {
      double theta = std::numbers::pi * ((b + 0.5) / kGrid - 0.5);
      values.push_back(std::fabs(cms_sample(p, u, theta)));
    }
  }
  auto mid = values.begin() + values.size() / 2;
  std::nth_element(values.begin(), mid, values.end());
  cache[p] = *mid;
  return *mid;
}

}  // namespace streamnorm
