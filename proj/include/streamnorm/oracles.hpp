#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "streamnorm/estimate.hpp"
#include "streamnorm/f0_sketch.hpp"
#include "streamnorm/l0_turnstile.hpp"
#include "streamnorm/lp_sketch.hpp"
#include "streamnorm/stream.hpp"

namespace streamnorm {

class ExactStats {
 public:
  void add(std::uint64_t i, std::int64_t v);

  std::uint64_t L0() const { return nonzero_; }
  std::uint64_t F0() const { return freq_.size(); }
  double Fp(double p) const;
  double Lp(double p) const;
  std::uint64_t m() const { return updates_; }
  std::uint64_t M_observed() const { return max_abs_; }
  // Sum of all frequencies; equals L1 on strict-turnstile streams.
  std::int64_t total() const { return total_; }
  const std::unordered_map<std::uint64_t, std::int64_t>& frequencies() const { return freq_; }
  // F_p for every p requested at construction, keyed by p.
  const std::map<double, double>& fp_values() const { return fp_; }

 private:
  friend ExactStats exact_stats(const std::vector<StreamUpdate>&, const std::vector<double>&);

  std::unordered_map<std::uint64_t, std::int64_t> freq_;
  std::uint64_t nonzero_ = 0;
  std::uint64_t updates_ = 0;
  std::uint64_t max_abs_ = 0;
  std::int64_t total_ = 0;
  std::map<double, double> fp_;
};

ExactStats exact_stats(const std::vector<StreamUpdate>& stream, const std::vector<double>& p_list = {});

struct EmpiricalMoments {
  double mean = 0.0;
  // Unbiased sample variance.
  double variance = 0.0;
  // Fourth central moment, for the standard error of the variance.
  double fourth = 0.0;
  std::uint64_t trials = 0;
};

// independence 0 means fully random bin choices; otherwise a fresh k-wise hash per trial.
EmpiricalMoments bb_simulate(std::uint64_t A, std::uint64_t B, std::uint64_t K,
                             unsigned independence, std::uint64_t trials, std::uint64_t seed);

enum class Algorithm { kLp, kL0, kF0, kExact };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

struct EstimatorSpec {
  Algorithm algorithm = Algorithm::kLp;
  double p = 1.0;
  double epsilon = 0.1;
  int passes = 1;
  bool paper_constants = false;
  // 0 keeps the library default.
  double c_r = 0.0;
  double slack = 0.0;
};

LpConfig lp_config_for(const EstimatorSpec& spec, const StreamHeader& header);
L0Config l0_config_for(const EstimatorSpec& spec, const StreamHeader& header);
F0Config f0_config_for(const EstimatorSpec& spec, const StreamHeader& header);

struct SketchResult {
  Estimate estimate;
  std::size_t bytes_used = 0;
};

// Builds the sketch named by spec, feeds the updates and reports its estimate.
SketchResult run_sketch(const EstimatorSpec& spec, const StreamHeader& header,
                        const std::vector<StreamUpdate>& updates, std::uint64_t seed);

struct TrialOptions {
  // Reuse one generated stream for every trial instead of a fresh one per trial.
  bool fixed_stream = false;
  // Feed linear sketches net frequencies and F0 the distinct items (same final state).
  bool compact = true;
  // Exact values at or below this must be matched exactly.
  std::uint64_t exact_at_or_below = 0;
  bool timing = false;
};

struct TrialReport {
  std::string algorithm;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  std::uint32_t trials = 0;
  std::uint32_t successes = 0;
  std::uint32_t breakdowns = 0;
  std::uint32_t saturations = 0;
  std::vector<double> estimates;
  std::vector<double> exact;
  std::vector<double> relative_errors;
  bool timing = false;
  double ns_per_update = 0.0;

  double success_rate() const { return trials ? static_cast<double>(successes) / trials : 0.0; }
  nlohmann::json to_json() const;
};

TrialReport run_trials(const EstimatorSpec& estimator, const GeneratorSpec& generator,
                       std::uint32_t trials, double epsilon, std::uint64_t seed,
                       const TrialOptions& options = {});

}  // namespace streamnorm
