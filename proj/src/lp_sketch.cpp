#include "streamnorm/lp_sketch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "streamnorm/bytes.hpp"
#include "streamnorm/hashing.hpp"

namespace streamnorm {

namespace {

constexpr LpSketch::Counter kCounterLimit = LpSketch::Counter{1} << (LpSketch::kCounterBits - 1);

}  // namespace

double LpConfig::default_c_r(double p) { return p < 1.0 ? 8.0 / (p * p) : 8.0; }

std::uint32_t LpConfig::rows() const {
  double c = c_r > 0.0 ? c_r : default_c_r(p);
  return static_cast<std::uint32_t>(std::ceil(c / (epsilon * epsilon) - 1e-9));
}

unsigned LpConfig::k() const { return independence_for(epsilon); }

void LpConfig::validate() const {
  if (!(p > 0.0 && p < 2.0)) throw std::invalid_argument("LpConfig: p must lie in (0,2)");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("LpConfig: epsilon in (0,1)");
  if (n == 0 || m == 0 || M == 0) throw std::invalid_argument("LpConfig: n, m, M must be >= 1");
  if (n > kMersenne61) throw std::invalid_argument("LpConfig: universe exceeds hash field");
  if (epsilon * std::sqrt(static_cast<double>(m)) < 1.0 - 1e-12)
    throw std::invalid_argument("LpConfig: epsilon must be >= 1/sqrt(m)");
  if (c_r < 0.0) throw std::invalid_argument("LpConfig: c_r must be nonnegative");
  if (rows() < 4) throw std::invalid_argument("LpConfig: need at least 4 rows");
}

LpSketch::LpSketch(const LpConfig& config, std::uint64_t master_seed) : config_(config) {
  config_.validate();
  if (config_.c_r == 0.0) config_.c_r = LpConfig::default_c_r(config_.p);
  params_ = StableParams::make(config_.p, config_.epsilon, config_.m);
  seeds_ = std::make_shared<StableRowSeeds>(master_seed, config_.rows(), config_.k());
  counters_.assign(config_.rows(), 0);
  column_.resize(config_.rows());
}

void LpSketch::update(std::uint64_t i, std::int64_t v) {
  if (i >= config_.n) {
    throw std::out_of_range("LpSketch::update: index " + std::to_string(i) + " outside universe");
  }
  if (v == 0) return;
  stable_column(*seeds_, params_, i, column_.data());
  const Counter cv = v;
  for (std::size_t j = 0; j < counters_.size(); ++j) {
    Counter next = counters_[j] + cv * column_[j];
    if (next >= kCounterLimit || next <= -kCounterLimit) {
      throw std::overflow_error("LpSketch::update: counter exceeds 96-bit budget");
    }
    counters_[j] = next;
  }
}

std::vector<std::uint8_t> LpSketch::header_bytes() const {
  ByteWriter w;
  w.put_magic("LPSK", 1);
  w.put(config_.p);
  w.put(config_.epsilon);
  w.put(config_.n);
  w.put(config_.m);
  w.put(config_.M);
  w.put(config_.c_r);
  w.put(seeds_->master_seed());
  return w.take();
}

void LpSketch::merge(const LpSketch& other) {
  if (header_bytes() != other.header_bytes()) {
    throw std::invalid_argument("lp_merge: sketches differ in configuration or seed");
  }
  for (std::size_t j = 0; j < counters_.size(); ++j) {
    Counter next = counters_[j] + other.counters_[j];
    if (next >= kCounterLimit || next <= -kCounterLimit) {
      throw std::overflow_error("lp_merge: counter exceeds 96-bit budget");
    }
    counters_[j] = next;
  }
}

LpSketch lp_merge(const LpSketch& s, const LpSketch& t) {
  LpSketch out = s;
  out.merge(t);
  return out;
}

double LpSketch::counter_value(std::uint32_t j) const {
  return static_cast<double>(counters_.at(j)) * params_.delta;
}

Estimate LpSketch::estimate() const {
  const std::size_t r = counters_.size();
  std::vector<double> mags(r);
  for (std::size_t j = 0; j < r; ++j) mags[j] = std::fabs(static_cast<double>(counters_[j]));
  auto mid = mags.begin() + (r - 1) / 2;
  std::nth_element(mags.begin(), mid, mags.end());
  const double A = *mid;
  if (A == 0.0) return {};
  double sum = 0.0;
  for (std::size_t j = 0; j < r; ++j) sum += std::cos(static_cast<double>(counters_[j]) / A);
  const double C = sum / static_cast<double>(r);
  if (C > 0.0 && C < 1.0) {
    return {A * params_.delta * std::pow(-std::log(C), 1.0 / config_.p), false, false};
  }
  return {A * params_.delta / stable_abs_median(config_.p), true, false};
}

std::vector<std::uint8_t> LpSketch::serialize() const {
  ByteWriter w;
  for (auto b : header_bytes()) w.put(b);
  w.put(static_cast<std::uint32_t>(counters_.size()));
  for (Counter c : counters_) {
    auto u = static_cast<unsigned __int128>(c);
    w.put(static_cast<std::uint64_t>(u));
    w.put(static_cast<std::uint32_t>(u >> 64));
  }
  return w.take();
}

LpSketch LpSketch::deserialize(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.expect_magic("LPSK", 1);
  LpConfig c;
  c.p = r.get<double>();
  c.epsilon = r.get<double>();
  c.n = r.get<std::uint64_t>();
  c.m = r.get<std::uint64_t>();
  c.M = r.get<std::uint64_t>();
  c.c_r = r.get<double>();
  auto seed = r.get<std::uint64_t>();
  LpSketch s(c, seed);
  auto rows = r.get<std::uint32_t>();
  if (rows != s.counters_.size()) throw std::invalid_argument("LpSketch: row count mismatch");
  for (auto& ctr : s.counters_) {
    auto lo = r.get<std::uint64_t>();
    auto hi = static_cast<std::int32_t>(r.get<std::uint32_t>());
    ctr = (static_cast<Counter>(hi) << 64) | static_cast<Counter>(lo);
  }
  if (!r.done()) throw std::invalid_argument("LpSketch: trailing bytes");
  return s;
}

std::size_t LpSketch::bytes_used() const {
  return counters_.size() * 12 + seeds_->bytes_used() + sizeof(*this);
}

}  // namespace streamnorm
