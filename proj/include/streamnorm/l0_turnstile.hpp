#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "streamnorm/bytes.hpp"
#include "streamnorm/estimate.hpp"
#include "streamnorm/hashing.hpp"
#include "streamnorm/numerics.hpp"

namespace streamnorm {

// Exact L0 for small supports: T trials, each hashing into c^2 buckets that
// hold frequency sums modulo a shared prime. In insertion-only mode a bucket
// only records whether anything reached it, which makes duplicates idempotent.
class ExactSmallL0 {
 public:
  ExactSmallL0(std::uint32_t capacity, std::uint32_t trials, std::uint64_t p_small,
               std::uint64_t domain, std::uint64_t seed, bool insertion_only = false);

  void update(std::uint64_t i, std::int64_t v);
  std::uint64_t report() const;
  void merge(const ExactSmallL0& other);

  std::uint32_t capacity() const { return capacity_; }
  std::uint32_t trials() const { return trials_; }
  std::uint64_t p_small() const { return p_small_; }
  std::uint64_t buckets() const { return buckets_; }
  // Counters are allocated on the first update.
  bool allocated() const { return !counters_.empty(); }
  std::uint32_t counter(std::uint32_t trial, std::uint64_t bucket) const;
  std::uint64_t nonzero(std::uint32_t trial) const { return nonzero_.empty() ? 0 : nonzero_[trial]; }
  std::size_t bytes_used() const;

  void write(ByteWriter& w) const;
  void read(ByteReader& r);

 private:
  void allocate();
  void recount();

  std::uint32_t capacity_;
  std::uint32_t trials_;
  std::uint64_t p_small_;
  std::uint64_t domain_;
  std::uint64_t buckets_;
  bool insertion_only_;
  std::vector<std::uint64_t> a_;
  std::vector<std::uint64_t> b_;
  std::vector<std::uint32_t> counters_;
  std::vector<std::uint64_t> nonzero_;
};

struct RoughEstimatorParams {
  std::uint32_t copies = 5;
  std::uint32_t capacity = 141;
  std::uint32_t trials = 8;
  std::uint64_t threshold = 8;
  bool insertion_only = false;
};

// Constant-factor L0 estimate R with L0 <= R <= 110 L0.
class RoughEstimator {
 public:
  RoughEstimator(std::uint64_t n, std::uint64_t N, std::uint64_t seed,
                 const RoughEstimatorParams& params = {});

  void update(std::uint64_t i, std::int64_t v);
  std::uint64_t estimate() const;
  std::uint64_t copy_estimate(std::uint32_t copy) const;
  void merge(const RoughEstimator& other);

  std::uint64_t z(std::uint32_t copy) const { return z_[copy]; }
  std::uint32_t copies() const { return params_.copies; }
  int levels() const { return levels_; }
  int level_of(std::uint32_t copy, std::uint64_t i) const;
  const ExactSmallL0& level_counter(std::uint32_t copy, int level) const;
  std::size_t bytes_used() const;

  void write(ByteWriter& w) const;
  void read(ByteReader& r);

 private:
  RoughEstimatorParams params_;
  std::uint64_t n_;
  int levels_;
  std::uint64_t p_small_;
  std::vector<PairwiseHash> level_hash_;
  std::vector<ExactSmallL0> cells_;
  std::vector<std::uint64_t> z_;
};

// Seed material shared by every LogEstimator of one FullAlg copy.
class LogEstimatorShared {
 public:
  LogEstimatorShared(double eps, double eps_prime, std::uint64_t n, std::uint64_t m,
                     std::uint64_t M, std::uint64_t seed,
                     std::shared_ptr<const FastLogTable> table = nullptr);

  struct Route {
    std::uint32_t slot;
    std::uint64_t coefficient;
  };
  Route route(std::uint64_t i) const;
  bool same_seeds(const LogEstimatorShared& other) const;

  double eps() const { return eps_; }
  double eps_prime() const { return eps_prime_; }
  std::uint64_t K() const { return K_; }
  std::uint64_t prime() const { return p_; }
  std::uint64_t h3_range() const { return h3_range_; }
  const FastLogTable& table() const { return *table_; }
  std::size_t bytes_used() const;

  static std::uint64_t counters_for(double eps_prime);

 private:
  double eps_;
  double eps_prime_;
  std::uint64_t K_;
  std::uint64_t seed_;
  std::uint64_t p_;
  std::uint64_t h3_range_;
  std::vector<std::uint64_t> u_;
  PairwiseHash h3_;
  KWiseHash h1_;
  PairwiseHash h2_;
  std::shared_ptr<const FastLogTable> table_;
};

class LogEstimator {
 public:
  explicit LogEstimator(std::shared_ptr<const LogEstimatorShared> shared);

  void update(std::uint64_t i, std::int64_t v) { apply(shared_->route(i), v); }
  void apply(LogEstimatorShared::Route route, std::int64_t v);
  Estimate estimate() const;
  void merge(const LogEstimator& other);

  std::uint64_t nonzero() const { return nonzero_; }
  std::uint64_t recount_nonzero() const;
  const std::vector<std::uint64_t>& counters() const { return counters_; }
  const LogEstimatorShared& shared() const { return *shared_; }
  std::size_t bytes_used() const { return counters_.size() * sizeof(std::uint64_t); }

  void write(ByteWriter& w) const;
  void read(ByteReader& r);

 private:
  std::shared_ptr<const LogEstimatorShared> shared_;
  std::vector<std::uint64_t> counters_;
  std::uint64_t nonzero_ = 0;
};

struct L0Config {
  double epsilon = 0.15;
  std::uint64_t n = 1;
  std::uint64_t m = 1;
  std::uint64_t M = 1;
  double slack = 8.0;
  // Promise threshold as a multiple of K'.
  double tau = 1.0;
  std::uint32_t copies = 5;
  RoughEstimatorParams rough{};

  static L0Config original_constants(double epsilon, std::uint64_t n, std::uint64_t m, std::uint64_t M);
  std::uint64_t N() const { return n < m ? n : m; }
  double eps_prime() const { return epsilon / slack; }
  std::uint64_t K_prime() const { return LogEstimatorShared::counters_for(eps_prime()); }
  int jmax() const;
  void validate() const;
};

// Which estimator answers for a given rough estimate R: level -1 is the base LE.
struct LevelChoice {
  int level = -1;
  double scale = 1.0;
};
LevelChoice choose_level(const L0Config& config, std::uint64_t R);

class L0FullSketch {
 public:
  L0FullSketch(const L0Config& config, std::uint64_t seed);

  void update(std::uint64_t i, std::int64_t v);
  Estimate estimate() const;
  void merge(const L0FullSketch& other);

  const L0Config& config() const { return config_; }
  const RoughEstimator& rough() const { return rough_; }
  const LogEstimator& base(std::uint32_t copy) const { return copies_[copy].base; }
  const LogEstimator& level(std::uint32_t copy, int j) const { return copies_[copy].levels.at(j); }
  int route_level(std::uint32_t copy, std::uint64_t i) const;
  std::size_t bytes_used() const;
  std::size_t level_estimator_bytes() const;

  std::vector<std::uint8_t> serialize() const;
  static L0FullSketch deserialize(const std::vector<std::uint8_t>& bytes);

  struct CopySeeds {
    std::uint64_t shared;
    std::uint64_t level_hash;
  };
  static std::uint64_t rough_seed(std::uint64_t seed);
  static std::vector<CopySeeds> copy_seeds(std::uint64_t seed, std::uint32_t copies);
  static std::uint64_t level_range(std::uint64_t N);

 private:
  struct Copy {
    std::shared_ptr<const LogEstimatorShared> shared;
    PairwiseHash level_hash;
    LogEstimator base;
    std::vector<LogEstimator> levels;
  };

  std::vector<std::uint8_t> header_bytes() const;

  L0Config config_;
  std::uint64_t seed_;
  RoughEstimator rough_;
  std::vector<Copy> copies_;
};

using UpdateSink = std::function<void(std::uint64_t, std::int64_t)>;
using Replay = std::function<void(const UpdateSink&)>;

struct TwoPassResult {
  Estimate estimate;
  std::uint64_t rough = 0;
  LevelChoice choice;
  std::uint32_t level_estimators_per_copy = 0;
  std::uint32_t level_estimators_total = 0;
  std::size_t pass1_bytes = 0;
  std::size_t pass2_bytes = 0;
};

// Replay is invoked twice; it must deliver the same update sequence each time.
TwoPassResult two_pass_estimate(const L0Config& config, std::uint64_t seed, const Replay& replay);

}  // namespace streamnorm
