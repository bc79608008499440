#include "streamnorm/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <optional>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "streamnorm/hashing.hpp"
#include "streamnorm/numerics.hpp"

namespace streamnorm {

void ExactStats::add(std::uint64_t i, std::int64_t v) {
  ++updates_;
  std::uint64_t mag = v < 0 ? static_cast<std::uint64_t>(-(v + 1)) + 1 : static_cast<std::uint64_t>(v);
  max_abs_ = std::max(max_abs_, mag);
  total_ += v;
  auto [it, fresh] = freq_.try_emplace(i, 0);
  bool was_nonzero = it->second != 0;
  it->second += v;
  bool is_nonzero = it->second != 0;
  if (was_nonzero && !is_nonzero) --nonzero_;
  if (!was_nonzero && is_nonzero) ++nonzero_;
}

double ExactStats::Fp(double p) const {
  if (!(p > 0.0)) throw std::invalid_argument("ExactStats::Fp: p must be positive");
  std::vector<double> terms;
  terms.reserve(freq_.size());
  for (const auto& [i, f] : freq_) {
    if (f != 0) terms.push_back(std::pow(std::fabs(static_cast<double>(f)), p));
  }
  std::sort(terms.begin(), terms.end());
  CompensatedSum s;
  for (double t : terms) s.add(t);
  return s.value();
}

double ExactStats::Lp(double p) const { return std::pow(Fp(p), 1.0 / p); }

ExactStats exact_stats(const std::vector<StreamUpdate>& stream, const std::vector<double>& p_list) {
  ExactStats s;
  for (const auto& u : stream) s.add(u.index, u.value);
  for (double p : p_list) s.fp_[p] = s.Fp(p);
  return s;
}

EmpiricalMoments bb_simulate(std::uint64_t A, std::uint64_t B, std::uint64_t K,
                             unsigned independence, std::uint64_t trials, std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("bb_simulate: trials must be >= 1");
  if (K == 0) throw std::invalid_argument("bb_simulate: K must be >= 1");
  if (independence == 1) throw std::invalid_argument("bb_simulate: independence must be 0 or >= 2");
  SplitMix64 rng(seed);
  std::vector<std::uint8_t> state(K, 0);
  std::vector<std::uint64_t> touched;
  touched.reserve(A + B);
  std::vector<std::uint64_t> hist(K + 1, 0);
  const std::uint64_t balls = A + B;
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::optional<KWiseHash> h;
    if (independence >= 2) h.emplace(independence, std::max<std::uint64_t>(balls, 1), K, rng.next());
    for (std::uint64_t b = 0; b < balls; ++b) {
      std::uint64_t bin = h ? h->eval_unchecked(b) : rng.below(K);
      if (state[bin] == 0) touched.push_back(bin);
      state[bin] |= b < A ? 1 : 2;
    }
    std::uint64_t x = 0;
    for (std::uint64_t bin : touched) {
      x += state[bin] == 1;
      state[bin] = 0;
    }
    touched.clear();
    ++hist[x];
  }
  const double n = static_cast<double>(trials);
  EmpiricalMoments out;
  out.trials = trials;
  for (std::uint64_t x = 0; x <= K; ++x) out.mean += static_cast<double>(hist[x]) * static_cast<double>(x);
  out.mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (std::uint64_t x = 0; x <= K; ++x) {
    if (hist[x] == 0) continue;
    double d = static_cast<double>(x) - out.mean;
    m2 += static_cast<double>(hist[x]) * d * d;
    m4 += static_cast<double>(hist[x]) * d * d * d * d;
  }
  out.variance = trials > 1 ? m2 / (n - 1) : 0.0;
  out.fourth = m4 / n;
  return out;
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kLp:
      return "lp";
    case Algorithm::kL0:
      return "l0";
    case Algorithm::kF0:
      return "f0";
    case Algorithm::kExact:
      return "exact";
  }
  return "lp";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "lp") return Algorithm::kLp;
  if (name == "l0") return Algorithm::kL0;
  if (name == "f0") return Algorithm::kF0;
  if (name == "exact") return Algorithm::kExact;
  throw std::invalid_argument("unknown algorithm '" + name + "'");
}

LpConfig lp_config_for(const EstimatorSpec& spec, const StreamHeader& header) {
  LpConfig c;
  c.p = spec.p;
  c.epsilon = spec.epsilon;
  c.n = header.n;
  c.m = header.m;
  c.M = header.M;
  c.c_r = spec.c_r;
  return c;
}

L0Config l0_config_for(const EstimatorSpec& spec, const StreamHeader& header) {
  L0Config c = spec.paper_constants ? L0Config::original_constants(spec.epsilon, header.n, header.m, header.M)
                                    : L0Config{};
  c.epsilon = spec.epsilon;
  c.n = header.n;
  c.m = header.m;
  c.M = header.M;
  if (spec.slack > 0.0) c.slack = spec.slack;
  return c;
}

F0Config f0_config_for(const EstimatorSpec& spec, const StreamHeader& header) {
  F0Config c = spec.paper_constants ? F0Config::original_constants(spec.epsilon, header.n, header.m) : F0Config{};
  c.epsilon = spec.epsilon;
  c.n = header.n;
  c.m = header.m;
  if (spec.slack > 0.0) c.slack = spec.slack;
  return c;
}

SketchResult run_sketch(const EstimatorSpec& spec, const StreamHeader& header,
                        const std::vector<StreamUpdate>& updates, std::uint64_t seed) {
  switch (spec.algorithm) {
    case Algorithm::kLp: {
      LpSketch s(lp_config_for(spec, header), seed);
      for (const auto& u : updates) s.update(u.index, u.value);
      return {s.estimate(), s.bytes_used()};
    }
    case Algorithm::kL0: {
      L0Config c = l0_config_for(spec, header);
      if (spec.passes == 2) {
        auto r = two_pass_estimate(c, seed, [&](const UpdateSink& sink) {
          for (const auto& u : updates) sink(u.index, u.value);
        });
        return {r.estimate, std::max(r.pass1_bytes, r.pass2_bytes)};
      }
      L0FullSketch s(c, seed);
      for (const auto& u : updates) s.update(u.index, u.value);
      return {s.estimate(), s.bytes_used()};
    }
    case Algorithm::kF0: {
      if (header.model != StreamModel::kInsertionOnly)
        throw std::invalid_argument("f0 requires an insertion-only stream");
      F0Sketch s(f0_config_for(spec, header), seed);
      for (const auto& u : updates) s.update(u.index);
      return {s.estimate(), s.bytes_used()};
    }
    case Algorithm::kExact:
      break;
  }
  throw std::invalid_argument("run_sketch: exact oracle is not a sketch");
}

namespace {

double exact_value(const EstimatorSpec& spec, const ExactStats& stats) {
  switch (spec.algorithm) {
    case Algorithm::kLp:
      return stats.Lp(spec.p);
    case Algorithm::kL0:
      return static_cast<double>(stats.L0());
    case Algorithm::kF0:
      return static_cast<double>(stats.F0());
    case Algorithm::kExact:
      return static_cast<double>(stats.L0());
  }
  return 0.0;
}

std::vector<StreamUpdate> compact_updates(Algorithm a, const std::vector<StreamUpdate>& updates) {
  if (a == Algorithm::kF0) {
    std::unordered_set<std::uint64_t> seen;
    std::vector<StreamUpdate> out;
    for (const auto& u : updates) {
      if (seen.insert(u.index).second) out.push_back(u);
    }
    return out;
  }
  return aggregate(updates);
}

}  // namespace

TrialReport run_trials(const EstimatorSpec& estimator, const GeneratorSpec& generator,
                       std::uint32_t trials, double epsilon, std::uint64_t seed,
                       const TrialOptions& options) {
  if (trials == 0) throw std::invalid_argument("run_trials: trials must be >= 1");
  if (!(epsilon > 0.0)) throw std::invalid_argument("run_trials: epsilon must be positive");
  TrialReport report;
  report.algorithm = to_string(estimator.algorithm);
  report.epsilon = epsilon;
  report.seed = seed;
  report.trials = trials;
  report.timing = options.timing;
  SplitMix64 rng(seed);
  GeneratedStream stream;
  ExactStats stats;
  std::vector<StreamUpdate> feed;
  auto load = [&](std::uint64_t stream_seed) {
    GeneratorSpec g = generator;
    g.seed = stream_seed;
    stream = generate(g);
    stats = exact_stats(stream.updates);
    feed = options.compact && estimator.algorithm != Algorithm::kExact
               ? compact_updates(estimator.algorithm, stream.updates)
               : stream.updates;
  };
  if (options.fixed_stream) load(generator.seed);
  double total_ns = 0.0;
  std::uint64_t total_updates = 0;
  for (std::uint32_t t = 0; t < trials; ++t) {
    std::uint64_t stream_seed = rng.next();
    std::uint64_t sketch_seed = rng.next();
    if (!options.fixed_stream) load(stream_seed);
    const double truth = exact_value(estimator, stats);
    Estimate est;
    try {
      if (estimator.algorithm == Algorithm::kExact) {
        est.value = truth;
      } else {
        auto start = std::chrono::steady_clock::now();
        est = run_sketch(estimator, stream.header, feed, sketch_seed).estimate;
        total_ns += std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - start).count();
        total_updates += feed.size();
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("trial " + std::to_string(t) + ": " + e.what());
    }
    double rel = truth == 0.0 ? (est.value == 0.0 ? 0.0 : INFINITY)
                              : std::fabs(est.value - truth) / truth;
    bool ok;
    if (truth <= static_cast<double>(options.exact_at_or_below)) {
      ok = est.value == truth;
    } else {
      ok = rel <= epsilon;
    }
    report.successes += ok;
    report.breakdowns += est.breakdown;
    report.saturations += est.saturated;
    report.estimates.push_back(est.value);
    report.exact.push_back(truth);
    report.relative_errors.push_back(rel);
  }
  if (total_updates) report.ns_per_update = total_ns / static_cast<double>(total_updates);
  return report;
}

nlohmann::json TrialReport::to_json() const {
  nlohmann::json j;
  j["schema"] = 1;
  j["algorithm"] = algorithm;
  j["epsilon"] = epsilon;
  j["seed"] = seed;
  j["trials"] = trials;
  j["successes"] = successes;
  j["success_rate"] = success_rate();
  j["breakdowns"] = breakdowns;
  j["saturations"] = saturations;
  j["estimates"] = estimates;
  j["exact"] = exact;
  nlohmann::json rel = nlohmann::json::array();
  for (double r : relative_errors) {
    if (std::isfinite(r)) {
      rel.push_back(r);
    } else {
      rel.push_back(nullptr);
    }
  }
  j["relative_errors"] = rel;
  if (timing) j["ns_per_update"] = ns_per_update;
  return j;
}

}  // namespace streamnorm
