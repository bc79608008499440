#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "streamnorm/oracles.hpp"

using namespace streamnorm;
using nlohmann::json;

namespace {

constexpr std::uint64_t kWarmup = 10000;

// Per-update latencies in 1 ns buckets; slower updates share the last bucket.
class LatencyHistogram {
 public:
  static constexpr std::size_t kBuckets = 1 << 17;

  LatencyHistogram() : counts_(kBuckets, 0) {}

  void add(std::uint64_t ns) {
    ++counts_[std::min<std::uint64_t>(ns, kBuckets - 1)];
    ++total_;
  }
  void merge(const LatencyHistogram& o) {
    for (std::size_t k = 0; k < kBuckets; ++k) counts_[k] += o.counts_[k];
    total_ += o.total_;
  }
  std::uint64_t total() const { return total_; }
  double percentile(double q) const {
    if (total_ == 0) return 0.0;
    auto rank = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(total_)));
    rank = std::max<std::uint64_t>(rank, 1);
    std::uint64_t seen = 0;
    for (std::size_t k = 0; k < kBuckets; ++k) {
      seen += counts_[k];
      if (seen >= rank) return static_cast<double>(k);
    }
    return static_cast<double>(kBuckets - 1);
  }

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

class Timer {
 public:
  explicit Timer(LatencyHistogram& hist) : hist_(hist) {}
  template <typename F>
  void run(F&& f) {
    if (seen_++ < kWarmup) {
      f();
      return;
    }
    auto start = std::chrono::steady_clock::now();
    f();
    auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start);
    hist_.add(static_cast<std::uint64_t>(ns.count()));
  }

 private:
  LatencyHistogram& hist_;
  std::uint64_t seen_ = 0;
};

using AnySketch = std::variant<LpSketch, L0FullSketch, F0Sketch>;

AnySketch make_sketch(const EstimatorSpec& spec, const StreamHeader& h, std::uint64_t seed) {
  switch (spec.algorithm) {
    case Algorithm::kLp:
      return LpSketch(lp_config_for(spec, h), seed);
    case Algorithm::kL0:
      return L0FullSketch(l0_config_for(spec, h), seed);
    case Algorithm::kF0:
      return F0Sketch(f0_config_for(spec, h), seed);
    case Algorithm::kExact:
      break;
  }
  throw std::invalid_argument("unsupported algorithm for sketch");
}

void feed(AnySketch& s, const StreamUpdate& u) {
  std::visit(
      [&](auto& sk) {
        if constexpr (std::is_same_v<std::decay_t<decltype(sk)>, F0Sketch>) {
          sk.update(u.index);
        } else {
          sk.update(u.index, u.value);
        }
      },
      s);
}

void merge_into(AnySketch& into, const AnySketch& from) {
  std::visit(
      [&](auto& a) {
        using T = std::decay_t<decltype(a)>;
        a.merge(std::get<T>(from));
      },
      into);
}

Estimate estimate_of(const AnySketch& s) {
  return std::visit([](const auto& sk) { return sk.estimate(); }, s);
}

std::size_t bytes_of(const AnySketch& s) {
  return std::visit([](const auto& sk) { return sk.bytes_used(); }, s);
}

double exact_for(const EstimatorSpec& spec, const ExactStats& stats) {
  switch (spec.algorithm) {
    case Algorithm::kLp:
      return stats.Lp(spec.p);
    case Algorithm::kF0:
      return static_cast<double>(stats.F0());
    default:
      return static_cast<double>(stats.L0());
  }
}

struct SketchOptions {
  EstimatorSpec spec;
  std::string algorithm = "l0";
  std::string input = "-";
  std::uint64_t seed = 1;
  bool exact = false;
  bool verify_strict = false;
  unsigned shards = 1;
};

void check_spec(const EstimatorSpec& spec) {
  if (spec.algorithm == Algorithm::kLp && !(spec.p > 0.0 && spec.p < 2.0))
    throw std::invalid_argument("--p must lie in (0, 2)");
  if (spec.passes != 1 && spec.passes != 2) throw std::invalid_argument("--passes must be 1 or 2");
  if (spec.passes == 2 && spec.algorithm != Algorithm::kL0)
    throw std::invalid_argument("--passes 2 is only available for l0");
}

int cmd_sketch(SketchOptions& o) {
  o.spec.algorithm = parse_algorithm(o.algorithm);
  if (o.spec.algorithm == Algorithm::kExact) throw std::invalid_argument("sketch needs lp, l0 or f0");
  check_spec(o.spec);
  if (o.shards == 0) throw std::invalid_argument("--shards must be >= 1");
  StreamReader reader(o.input, o.verify_strict);
  const StreamHeader& h = reader.header();
  if (o.spec.algorithm == Algorithm::kF0 && h.model != StreamModel::kInsertionOnly)
    throw std::invalid_argument("f0 requires an insertion-only stream");
  if (o.spec.passes == 2 && !reader.seekable())
    throw std::invalid_argument("--passes 2 needs a seekable input file");
  if (o.spec.passes == 2 && o.shards > 1)
    throw std::invalid_argument("--passes 2 cannot be combined with --shards");

  json report;
  report["schema"] = 1;
  report["algorithm"] = o.algorithm;
  json params = {{"epsilon", o.spec.epsilon}, {"seed", o.seed},     {"passes", o.spec.passes},
                 {"shards", o.shards},         {"n", h.n},           {"m", h.m},
                 {"M", h.M},                   {"model", to_string(h.model)},
                 {"paper_constants", o.spec.paper_constants}};
  if (o.spec.algorithm == Algorithm::kLp) {
    params["p"] = o.spec.p;
    params["rows"] = lp_config_for(o.spec, h).rows();
  } else if (o.spec.algorithm == Algorithm::kL0) {
    auto c = l0_config_for(o.spec, h);
    params["slack"] = c.slack;
    params["K_prime"] = c.K_prime();
  } else {
    auto c = f0_config_for(o.spec, h);
    params["slack"] = c.slack;
    params["K"] = c.K();
  }
  report["params"] = params;

  std::optional<ExactStats> stats;
  if (o.exact) stats.emplace();
  LatencyHistogram hist;
  Estimate est;
  std::size_t bytes = 0;
  std::uint64_t updates = 0;

  if (o.spec.passes == 2) {
    Timer timer(hist);
    bool first = true;
    auto r = two_pass_estimate(l0_config_for(o.spec, h), o.seed, [&](const UpdateSink& sink) {
      if (!first) reader.rewind();
      StreamUpdate u;
      while (reader.next(u)) {
        if (first && stats) stats->add(u.index, u.value);
        if (first) ++updates;
        timer.run([&] { sink(u.index, u.value); });
      }
      first = false;
    });
    est = r.estimate;
    bytes = std::max(r.pass1_bytes, r.pass2_bytes);
    report["rough_estimate"] = r.rough;
    report["level"] = r.choice.level;
    report["level_estimators_pass2"] = r.level_estimators_total;
    report["pass1_bytes"] = r.pass1_bytes;
    report["pass2_bytes"] = r.pass2_bytes;
  } else if (o.shards == 1) {
    AnySketch s = make_sketch(o.spec, h, o.seed);
    Timer timer(hist);
    StreamUpdate u;
    while (reader.next(u)) {
      if (stats) stats->add(u.index, u.value);
      ++updates;
      timer.run([&] { feed(s, u); });
    }
    est = estimate_of(s);
    bytes = bytes_of(s);
  } else {
    std::vector<AnySketch> shards;
    std::vector<LatencyHistogram> hists(o.shards);
    std::vector<Timer> timers;
    for (unsigned k = 0; k < o.shards; ++k) {
      shards.push_back(make_sketch(o.spec, h, o.seed));
      timers.emplace_back(hists[k]);
    }
    std::vector<StreamUpdate> block;
    block.reserve(1 << 16);
    StreamUpdate u;
    bool more = true;
    while (more) {
      block.clear();
      while (block.size() < block.capacity() && (more = reader.next(u))) {
        if (stats) stats->add(u.index, u.value);
        block.push_back(u);
      }
      updates += block.size();
      std::vector<std::jthread> workers;
      const std::size_t slice = (block.size() + o.shards - 1) / o.shards;
      for (unsigned k = 0; k < o.shards; ++k) {
        workers.emplace_back([&, k] {
          std::size_t lo = std::min(block.size(), k * slice), hi = std::min(block.size(), lo + slice);
          for (std::size_t x = lo; x < hi; ++x) timers[k].run([&] { feed(shards[k], block[x]); });
        });
      }
    }
    for (unsigned k = 1; k < o.shards; ++k) merge_into(shards[0], shards[k]);
    for (const auto& hk : hists) hist.merge(hk);
    est = estimate_of(shards[0]);
    bytes = bytes_of(shards[0]);
  }

  report["updates"] = updates;
  report["estimate"] = est.value;
  if (stats) {
    double truth = exact_for(o.spec, *stats);
    report["exact"] = truth;
    if (truth != 0.0) {
      report["relative_error"] = std::fabs(est.value - truth) / truth;
    } else {
      report["relative_error"] = est.value == 0.0 ? 0.0 : 1.0;
    }
  }
  report["update_ns_p50"] = hist.percentile(0.5);
  report["update_ns_p99"] = hist.percentile(0.99);
  report["timed_updates"] = hist.total();
  report["bytes_used"] = bytes;
  report["breakdown_flags"] = {{"breakdown", est.breakdown}, {"saturated", est.saturated}};
  std::cout << report.dump(2) << "\n";
  return 0;
}

struct GenOptions {
  GeneratorSpec spec;
  std::string kind = "uniform";
  std::string model = "turnstile";
};

void finish_generator(GenOptions& g) {
  g.spec.kind = parse_generator(g.kind);
  g.spec.model = parse_model(g.model);
  g.spec.validate();
}

void add_generator_flags(CLI::App* app, GenOptions& g) {
  app->add_option("--generator", g.kind, "uniform, zipf, cancel or promise-small-l0");
  app->add_option("--model", g.model, "turnstile, strict-turnstile or insertion-only");
  app->add_option("--n", g.spec.n, "universe size");
  app->add_option("--target", g.spec.target, "distinct items (uniform/zipf), inserted items (cancel), survivors (promise)");
  app->add_option("--length", g.spec.length, "number of updates");
  app->add_option("--M", g.spec.M, "magnitude bound");
  app->add_option("--zipf-s", g.spec.zipf_s, "zipf exponent");
  app->add_option("--cancel-fraction", g.spec.cancel_fraction, "fraction of items deleted");
  app->add_option("--stream-seed", g.spec.seed, "generator seed");
}

void add_estimator_flags(CLI::App* app, EstimatorSpec& spec, std::string& algorithm) {
  app->add_option("--algorithm", algorithm, "lp, l0 or f0")->required();
  app->add_option("--p", spec.p, "norm exponent for lp, in (0,2)");
  app->add_option("--epsilon", spec.epsilon, "target relative error");
  app->add_option("--passes", spec.passes, "1 or 2 (l0 only)");
  app->add_flag("--paper-constants", spec.paper_constants, "use the original constant factors");
  app->add_option("--c-r", spec.c_r, "lp row constant (0 = default)");
  app->add_option("--slack", spec.slack, "l0/f0 accuracy divisor (0 = default)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming norm and distinct-count sketches"};
  app.require_subcommand(1);

  SketchOptions sk;
  auto* sketch = app.add_subcommand("sketch", "run one sketch over a stream file and print a JSON report");
  add_estimator_flags(sketch, sk.spec, sk.algorithm);
  sketch->add_option("--input", sk.input, "stream file, or - for standard input");
  sketch->add_option("--seed", sk.seed, "sketch seed");
  sketch->add_flag("--exact", sk.exact, "also compute the exact value and relative error");
  sketch->add_flag("--verify-strict", sk.verify_strict, "reject strict-turnstile streams that go negative");
  sketch->add_option("--shards", sk.shards, "same-seed sketches built in parallel and merged");

  EstimatorSpec bench_spec;
  std::string bench_alg;
  GenOptions bench_gen;
  std::uint32_t trials = 100;
  std::uint64_t bench_seed = 1;
  double gate = 0.0;
  TrialOptions topt;
  auto* bench = app.add_subcommand("bench", "measure success rate over seeded trials");
  bench->add_option("--algorithm", bench_alg, "lp, l0, f0 or exact")->required();
  bench->add_option("--p", bench_spec.p, "norm exponent for lp");
  bench->add_option("--epsilon", bench_spec.epsilon, "target relative error");
  bench->add_option("--passes", bench_spec.passes, "1 or 2 (l0 only)");
  bench->add_flag("--paper-constants", bench_spec.paper_constants, "use the original constant factors");
  bench->add_option("--c-r", bench_spec.c_r, "lp row constant (0 = default)");
  bench->add_option("--slack", bench_spec.slack, "l0/f0 accuracy divisor (0 = default)");
  bench->add_option("--trials", trials, "number of trials");
  bench->add_option("--seed", bench_seed, "master seed");
  bench->add_option("--gate", gate, "exit nonzero when the success rate is below this");
  bench->add_flag("--fixed-stream", topt.fixed_stream, "reuse one stream for all trials");
  bench->add_option("--exact-at-or-below", topt.exact_at_or_below, "require exact answers up to this value");
  bench->add_flag("--timing", topt.timing, "include ns_per_update (not reproducible)");
  add_generator_flags(bench, bench_gen);

  GenOptions gen;
  std::string output = "-";
  bool binary = false;
  auto* generate_cmd = app.add_subcommand("generate", "write a synthetic stream");
  add_generator_flags(generate_cmd, gen);
  generate_cmd->add_option("--output", output, "output path, or - for standard output");
  generate_cmd->add_flag("--binary", binary, "binary record format");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sketch) return cmd_sketch(sk);
    if (*bench) {
      bench_spec.algorithm = parse_algorithm(bench_alg);
      check_spec(bench_spec);
      finish_generator(bench_gen);
      auto report = run_trials(bench_spec, bench_gen.spec, trials, bench_spec.epsilon, bench_seed, topt);
      std::cout << report.to_json().dump(2) << "\n";
      return report.success_rate() < gate ? 1 : 0;
    }
    finish_generator(gen);
    auto g = generate(gen.spec);
    if (output == "-") {
      if (binary) {
        write_binary(std::cout, g.header, g.updates);
      } else {
        write_text(std::cout, g.header, g.updates);
      }
    } else {
      write_stream(output, g.header, g.updates, binary);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
