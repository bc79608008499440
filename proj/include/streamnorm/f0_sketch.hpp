#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "streamnorm/bytes.hpp"
#include "streamnorm/estimate.hpp"
#include "streamnorm/hashing.hpp"
#include "streamnorm/l0_turnstile.hpp"
#include "streamnorm/numerics.hpp"

namespace streamnorm {

// Fixed-width unsigned integers packed into 64-bit words.
class PackedArray {
 public:
  PackedArray(std::size_t size, unsigned bits);

  std::uint64_t get(std::size_t idx) const;
  void set(std::size_t idx, std::uint64_t value);
  std::size_t size() const { return size_; }
  unsigned bits() const { return bits_; }
  const std::vector<std::uint64_t>& words() const { return words_; }
  std::vector<std::uint64_t>& words() { return words_; }
  std::size_t bytes_used() const { return words_.size() * sizeof(std::uint64_t); }

 private:
  std::size_t size_;
  unsigned bits_;
  std::uint64_t mask_;
  std::vector<std::uint64_t> words_;
};

struct F0Config {
  double epsilon = 0.1;
  std::uint64_t n = 1;
  std::uint64_t m = 1;
  // K = ceil((slack / epsilon)^2).
  double slack = 12.0;
  // Upper end of the occupancy branch, as a fraction of K.
  double threshold = 2.0 / 3.0;
  RoughEstimatorParams rough{};

  static F0Config original_constants(double epsilon, std::uint64_t n, std::uint64_t m);
  std::uint64_t N() const { return n < m ? n : m; }
  std::uint64_t K() const;
  int L() const;
  double eps_prime() const { return epsilon / slack; }
  void validate() const;
};

class F0Sketch {
 public:
  enum class Branch { kSmall, kOccupancy, kLevel, kTopLevel };

  struct Detail {
    Estimate estimate;
    Branch branch = Branch::kSmall;
    std::uint64_t rough = 0;
    int level = 0;
  };

  F0Sketch(const F0Config& config, std::uint64_t seed);

  void update(std::uint64_t i);
  Estimate estimate() const { return estimate_detail().estimate; }
  Detail estimate_detail() const;
  void merge(const F0Sketch& other);

  const F0Config& config() const { return config_; }
  std::uint64_t K() const { return K_; }
  int top_level() const { return top_; }
  // Bin value: -1 for null, otherwise the stored level.
  int bin(std::uint64_t j) const;
  const std::vector<std::uint64_t>& histogram() const { return hist_; }
  std::uint64_t nonnull() const { return nonnull_; }
  const RoughEstimator& rough() const { return rough_; }
  int level_of(std::uint64_t i) const;
  std::uint64_t bin_of(std::uint64_t i) const;
  std::size_t bytes_used() const;

  std::vector<std::uint8_t> serialize() const;
  static F0Sketch deserialize(const std::vector<std::uint8_t>& bytes);

 private:
  std::vector<std::uint8_t> header_bytes() const;
  void rebuild_histogram();

  F0Config config_;
  std::uint64_t seed_;
  std::uint64_t K_;
  int top_;
  PairwiseHash h2_;
  KWiseHash h1_;
  PairwiseHash h3_;
  PackedArray bins_;
  std::vector<std::uint64_t> hist_;
  std::uint64_t nonnull_ = 0;
  std::shared_ptr<const FastLogTable> table_;
  RoughEstimator rough_;
};

F0Sketch f0_merge(const F0Sketch& s, const F0Sketch& t);

}  // namespace streamnorm
