#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "streamnorm/estimate.hpp"
#include "streamnorm/stable.hpp"

namespace streamnorm {

struct LpConfig {
  double p = 1.0;
  double epsilon = 0.1;
  std::uint64_t n = 1;
  std::uint64_t m = 1;
  std::uint64_t M = 1;
  // Row constant; 0 selects default_c_r(p).
  double c_r = 0.0;

  static double default_c_r(double p);
  std::uint32_t rows() const;
  unsigned k() const;
  std::uint64_t N() const { return n < m ? n : m; }
  void validate() const;
};

class LpSketch {
 public:
  using Counter = __int128;
  static constexpr int kCounterBits = 96;

  LpSketch(const LpConfig& config, std::uint64_t master_seed);

  void update(std::uint64_t i, std::int64_t v);
  void merge(const LpSketch& other);
  Estimate estimate() const;

  const LpConfig& config() const { return config_; }
  const StableParams& params() const { return params_; }
  const StableRowSeeds& seeds() const { return *seeds_; }
  std::uint64_t master_seed() const { return seeds_->master_seed(); }
  const std::vector<Counter>& counters() const { return counters_; }
  // Counter j as a real number (counter units times delta).
  double counter_value(std::uint32_t j) const;

  std::vector<std::uint8_t> serialize() const;
  static LpSketch deserialize(const std::vector<std::uint8_t>& bytes);
  std::size_t bytes_used() const;

 private:
  std::vector<std::uint8_t> header_bytes() const;

  LpConfig config_;
  StableParams params_;
  std::shared_ptr<const StableRowSeeds> seeds_;
  std::vector<Counter> counters_;
  std::vector<std::int64_t> column_;
};

LpSketch lp_merge(const LpSketch& s, const LpSketch& t);

}  // namespace streamnorm
