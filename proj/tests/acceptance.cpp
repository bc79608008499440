#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "streamnorm/f0_sketch.hpp"
#include "streamnorm/hashing.hpp"
#include "streamnorm/l0_turnstile.hpp"
#include "streamnorm/lp_sketch.hpp"
#include "streamnorm/numerics.hpp"
#include "streamnorm/oracles.hpp"
#include "streamnorm/stable.hpp"
#include "streamnorm/stream.hpp"

using namespace streamnorm;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Outcome lp_accuracy() {
  Outcome o;
  auto start = Clock::now();
  for (double p : {0.5, 1.0, 1.5}) {
    EstimatorSpec spec;
    spec.algorithm = Algorithm::kLp;
    spec.p = p;
    spec.epsilon = 0.1;
    GeneratorSpec g;
    g.kind = GeneratorKind::kUniform;
    g.model = StreamModel::kTurnstile;
    g.n = 10000;
    g.length = 100000;
    g.M = 100;
    auto r = run_trials(spec, g, 100, 0.1, 1000 + static_cast<std::uint64_t>(p * 10));
    o.detail << " p=" << p << ":" << r.successes << "/100";
    o.require(r.successes >= 60, "p=" + std::to_string(p));
  }
  double secs = seconds_since(start);
  o.detail << " time=" << static_cast<int>(secs) << "s";
  o.require(secs <= 300.0, "runtime");
  return o;
}

Outcome stable_generator() {
  Outcome o;
  const std::uint32_t samples = 1000000;
  int worst_p = 0;
  double worst = 0.0;
  for (double p : {0.5, 1.0, 1.5}) {
    auto params = StableParams::make(p, 0.1, 100000);
    StableRowSeeds seeds(77 + static_cast<std::uint64_t>(p * 4), 1, 4);
    std::vector<double> x(samples);
    for (std::uint32_t i = 0; i < samples; ++i) {
      x[i] = static_cast<double>(stable_entry(seeds, params, i, 0)) * params.delta;
    }
    for (double t : {0.25, 1.0, 2.0}) {
      double sum = 0.0, sq = 0.0;
      for (double v : x) {
        double c = std::cos(t * v);
        sum += c;
        sq += c * c;
      }
      double mean = sum / samples;
      double sd = std::sqrt(std::max(0.0, sq / samples - mean * mean));
      double z = std::fabs(mean - std::exp(-std::pow(t, p))) / (sd / std::sqrt(double(samples)));
      if (z > worst) {
        worst = z;
        worst_p = static_cast<int>(p * 10);
      }
      o.require(z <= 3.0, "cf p=" + std::to_string(p) + " t=" + std::to_string(t));
    }
  }
  o.detail << " max|z|=" << worst << " (p=" << worst_p / 10.0 << ")";

  auto params = StableParams::make(1.0, 0.1, 100000);
  StableRowSeeds seeds(4242, 3, 4);
  std::vector<double> mix(samples), scaled(samples);
  for (std::uint32_t i = 0; i < samples; ++i) {
    double x1 = static_cast<double>(stable_entry(seeds, params, i, 0)) * params.delta;
    double x2 = static_cast<double>(stable_entry(seeds, params, i, 1)) * params.delta;
    double x = static_cast<double>(stable_entry(seeds, params, i, 2)) * params.delta;
    mix[i] = 3 * x1 + 4 * x2;
    scaled[i] = 7 * x;
  }
  std::sort(mix.begin(), mix.end());
  std::sort(scaled.begin(), scaled.end());
  double ks = 0.0;
  std::size_t a = 0, b = 0;
  while (a < samples && b < samples) {
    double v = std::min(mix[a], scaled[b]);
    while (a < samples && mix[a] <= v) ++a;
    while (b < samples && scaled[b] <= v) ++b;
    ks = std::max(ks, std::fabs(double(a) - double(b)) / samples);
  }
  o.detail << " KS=" << ks;
  o.require(ks <= 0.01, "KS distance");
  return o;
}

Outcome log_estimator_promise() {
  Outcome o;
  const double eps = 0.1;
  const double eps_prime = eps / 8;
  const auto K = LogEstimatorShared::counters_for(eps_prime);
  const auto promise = static_cast<std::uint64_t>(0.5 / (20 * eps_prime * eps_prime));
  auto table = std::make_shared<FastLogTable>(K, eps_prime);
  for (std::uint64_t l0 : {std::uint64_t{40}, promise}) {
    SplitMix64 rng(3000 + l0);
    int good = 0;
    for (int t = 0; t < 100; ++t) {
      GeneratorSpec g;
      g.kind = GeneratorKind::kPromiseSmallL0;
      g.n = 1000000;
      g.target = l0;
      g.length = 20000;
      g.M = 100;
      g.seed = rng.next();
      auto s = generate(g);
      auto shared = std::make_shared<LogEstimatorShared>(eps, eps_prime, s.header.n, s.header.m,
                                                         s.header.M, rng.next(), table);
      LogEstimator le(shared);
      for (const auto& u : s.updates) le.update(u.index, u.value);
      double truth = static_cast<double>(exact_stats(s.updates).L0());
      double est = le.estimate().value;
      good += truth <= 100 ? est == truth : std::fabs(est - truth) <= eps * truth;
    }
    o.detail << " L0=" << l0 << ":" << good << "/100";
    o.require(good >= 55, "L0=" + std::to_string(l0));
  }
  o.detail << " (K'=" << K << ")";
  return o;
}

Outcome rough_estimator() {
  Outcome o;
  for (std::uint64_t l0 : {10ull, 1000ull, 100000ull}) {
    SplitMix64 rng(4000 + l0);
    int good = 0;
    for (int t = 0; t < 100; ++t) {
      GeneratorSpec g;
      g.kind = GeneratorKind::kCancel;
      g.n = 1000000;
      g.target = 2 * l0;
      g.cancel_fraction = 0.5;
      g.M = 100;
      g.seed = rng.next();
      auto s = generate(g);
      RoughEstimator re(s.header.n, std::min(s.header.n, s.header.m), rng.next());
      for (const auto& u : s.updates) re.update(u.index, u.value);
      std::uint64_t r = re.estimate();
      good += r >= l0 && r <= 110 * l0;
    }
    o.detail << " L0=" << l0 << ":" << good << "/100";
    o.require(good >= 95, "L0=" + std::to_string(l0));
  }
  return o;
}

Outcome full_l0() {
  Outcome o;
  for (std::uint64_t l0 : {1000ull, 100000ull}) {
    EstimatorSpec spec;
    spec.algorithm = Algorithm::kL0;
    spec.epsilon = 0.15;
    GeneratorSpec g;
    g.kind = GeneratorKind::kCancel;
    g.n = 1000000;
    g.target = 2 * l0;
    g.cancel_fraction = 0.5;
    g.M = 100;
    auto one = run_trials(spec, g, 100, 0.15, 5000 + l0);
    spec.passes = 2;
    auto two = run_trials(spec, g, 100, 0.15, 5000 + l0);
    int only_one = 0, only_two = 0;
    for (int t = 0; t < 100; ++t) {
      bool a = one.relative_errors[t] <= 0.15, b = two.relative_errors[t] <= 0.15;
      only_one += a && !b;
      only_two += b && !a;
    }
    int diff = std::abs(static_cast<int>(one.successes) - static_cast<int>(two.successes));
    o.detail << " L0=" << l0 << ": 1-pass " << one.successes << "/100, 2-pass " << two.successes
             << "/100 (discordant " << only_one + only_two << ")";
    o.require(one.successes >= 65, "1-pass L0=" + std::to_string(l0));
    o.require(two.successes >= 65, "2-pass L0=" + std::to_string(l0));
    o.require(diff <= 3.0 * std::sqrt(double(only_one + only_two)), "paired difference");
  }
  GeneratorSpec g;
  g.kind = GeneratorKind::kCancel;
  g.n = 1000000;
  g.target = 20000;
  g.M = 100;
  auto s = generate(g);
  EstimatorSpec spec;
  spec.algorithm = Algorithm::kL0;
  spec.epsilon = 0.15;
  auto cfg = l0_config_for(spec, s.header);
  auto r = two_pass_estimate(cfg, 9, [&](const UpdateSink& sink) {
    for (const auto& u : s.updates) sink(u.index, u.value);
  });
  o.detail << " pass2 level estimators per copy=" << r.level_estimators_per_copy;
  o.require(r.level_estimators_per_copy == 1 && r.level_estimators_total == cfg.copies,
            "one level estimator per copy in pass 2");
  return o;
}

Outcome f0_accuracy() {
  Outcome o;
  for (std::uint64_t f0 : {60ull, 10000ull, 100000ull}) {
    SplitMix64 rng(6000 + f0);
    int good = 0, small = 0, small_exact = 0;
    for (int t = 0; t < 100; ++t) {
      GeneratorSpec g;
      g.kind = GeneratorKind::kUniform;
      g.model = StreamModel::kInsertionOnly;
      g.n = 1000000;
      g.target = f0;
      g.length = 3 * f0;
      g.seed = rng.next();
      auto s = generate(g);
      EstimatorSpec spec;
      spec.algorithm = Algorithm::kF0;
      spec.epsilon = 0.1;
      F0Sketch sk(f0_config_for(spec, s.header), rng.next());
      for (const auto& u : s.updates) sk.update(u.index);
      auto d = sk.estimate_detail();
      double truth = static_cast<double>(exact_stats(s.updates).F0());
      bool ok;
      if (d.branch == F0Sketch::Branch::kSmall) {
        ++small;
        ok = d.estimate.value == truth;
        small_exact += ok;
      } else {
        ok = std::fabs(d.estimate.value - truth) <= 0.1 * truth;
      }
      good += ok;
    }
    o.detail << " F0=" << f0 << ":" << good << "/100";
    if (small > 0) o.detail << " (small-R " << small_exact << "/" << small << " exact)";
    o.require(good >= 60, "F0=" + std::to_string(f0));
  }
  return o;
}

Outcome balls_and_bins() {
  Outcome o;
  const std::uint64_t trials = 1000000;
  struct Point {
    std::uint64_t A, B, K;
  };
  double worst = 0.0;
  for (auto [A, B, K] : std::vector<Point>{{10, 0, 100}, {10, 5, 100}, {3, 2, 7}, {25, 25, 100},
                                           {40, 20, 400}, {1, 1, 2}}) {
    auto m = bb_simulate(A, B, K, 0, trials, A * 1000 + B * 10 + K);
    double mean = bb_mean(A, B, K), var = bb_variance(A, B, K);
    double z_mean = std::fabs(m.mean - mean) / std::sqrt(var / trials);
    double var_se = std::sqrt(std::max(m.fourth - var * var, 0.0) / trials);
    double z_var = std::fabs(m.variance - var) / var_se;
    worst = std::max({worst, z_mean, z_var});
    o.require(z_mean <= 3.0 && z_var <= 3.0,
              "moments A=" + std::to_string(A) + " B=" + std::to_string(B) + " K=" + std::to_string(K));
  }
  o.detail << " max|z|=" << worst;

  std::uint64_t checked = 0;
  double worst_yuck = 0.0;
  for (std::uint64_t K : {2000ull, 5000ull, 20000ull, 100000ull, 1000000ull}) {
    for (std::uint64_t A = 100; A <= K / 20; ++A) {
      double ratio = bb_variance(A, 0, K) / (4.0 * A * A / K);
      worst_yuck = std::max(worst_yuck, ratio);
      ++checked;
    }
  }
  o.detail << " Var/(4A^2/K)<=" << worst_yuck << " over " << checked;
  o.require(worst_yuck < 1.0, "Var < 4A^2/K");

  checked = 0;
  double worst_bad = 0.0;
  for (std::uint64_t K = 1; K <= 1024; K = K < 64 ? K + 1 : K * 2) {
    for (std::uint64_t A = 0; A <= K / 4; ++A) {
      for (std::uint64_t B = 0; B <= K / 4; ++B) {
        worst_bad = std::max(worst_bad, bb_variance(A, B, K) / (7.0 * K));
        ++checked;
      }
    }
  }
  for (std::uint64_t K : {10000ull, 100000ull}) {
    for (std::uint64_t A = 0; A <= K / 4; A += K / 400) {
      for (std::uint64_t B = 0; B <= K / 4; B += K / 400) {
        worst_bad = std::max(worst_bad, bb_variance(A, B, K) / (7.0 * K));
        ++checked;
      }
    }
  }
  o.detail << " Var/7K<=" << worst_bad << " over " << checked;
  o.require(worst_bad <= 1.0, "Var <= 7K");

  double worst_gap = 0.0;
  for (auto [A, B, K] : std::vector<Point>{{10, 0, 100}, {36, 0, 100}, {20, 20, 100}, {100, 50, 400},
                                           {147, 147, 400}}) {
    auto k8 = bb_simulate(A, B, K, 8, 200000, A + B + K);
    double mean = bb_mean(A, B, K);
    double gap = std::fabs(k8.mean - mean) / mean;
    worst_gap = std::max(worst_gap, gap);
    o.require(gap <= 0.05, "8-wise mean gap");
  }
  o.detail << " 8-wise gap<=" << worst_gap;
  return o;
}

Outcome fastlog() {
  Outcome o;
  double worst = 0.0, worst_inv = 0.0;
  for (std::uint64_t K : {100ull, 400ull}) {
    for (double eps : {0.05, 0.1}) {
      FastLogTable table(K, eps);
      for (std::uint64_t c = 1; c <= 4 * K / 5; ++c) {
        double exact = std::log1p(-static_cast<double>(c) / K);
        worst = std::max(worst, std::fabs(table.query(c) - exact) / std::fabs(exact) / eps);
      }
      for (std::uint64_t A = 1; A <= K / 3; ++A) {
        double back = invert_f(f_occupancy(static_cast<double>(A), K), K, eps * K / 320);
        worst_inv = std::max(worst_inv, std::fabs(back - A) / (eps * K / 160));
      }
    }
  }
  o.detail << " max relerr/eps=" << worst << " max inversion err/(eps K/160)=" << worst_inv;
  o.require(worst <= 1.0, "fastlog accuracy");
  o.require(worst_inv <= 1.0, "inversion round trip");
  return o;
}

std::vector<StreamUpdate> turnstile_stream(SplitMix64& rng, std::uint64_t n, std::uint64_t length) {
  std::vector<StreamUpdate> ups(length);
  for (auto& u : ups) u = {rng.below(n), static_cast<std::int64_t>(rng.between(1, 20)) - 10};
  return ups;
}

template <typename Sketch, typename Feed>
bool structural(Sketch make_fresh(std::uint64_t), const std::vector<StreamUpdate>& ups, Feed feed,
                bool inverse, std::mt19937_64& shuffle_rng) {
  auto a = make_fresh(0), b = make_fresh(0), left = make_fresh(0), right = make_fresh(0);
  for (const auto& u : ups) feed(a, u);
  auto perm = ups;
  std::shuffle(perm.begin(), perm.end(), shuffle_rng);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    feed(b, perm[k]);
    feed(k % 2 ? left : right, perm[k]);
  }
  left.merge(right);
  bool ok = a.serialize() == b.serialize() && left.serialize() == a.serialize();
  if (inverse) {
    for (const auto& u : ups) feed(a, {u.index, -u.value});
    ok = ok && a.serialize() == make_fresh(0).serialize() && a.estimate().value == 0.0;
  } else {
    for (const auto& u : ups) feed(a, u);
    ok = ok && a.serialize() == b.serialize();
  }
  return ok;
}

Outcome structural_properties() {
  Outcome o;
  SplitMix64 rng(9000);
  std::mt19937_64 shuffle_rng(9001);
  int lp_ok = 0, l0_ok = 0, f0_ok = 0;
  for (int s = 0; s < 50; ++s) {
    std::uint64_t seed = rng.next();
    auto ups = turnstile_stream(rng, 5000, 400 + rng.below(1600));
    LpConfig lc;
    lc.p = 0.5 + 0.02 * s;
    lc.epsilon = 0.25;
    lc.n = 5000;
    lc.m = 100000;
    lc.M = 100;
    static LpConfig lp_cfg;
    static std::uint64_t lp_seed;
    lp_cfg = lc;
    lp_seed = seed;
    lp_ok += structural<LpSketch>(
        [](std::uint64_t) { return LpSketch(lp_cfg, lp_seed); }, ups,
        [](LpSketch& sk, const StreamUpdate& u) { sk.update(u.index, u.value); }, true, shuffle_rng);

    static L0Config l0_cfg;
    static std::uint64_t l0_seed;
    l0_cfg = L0Config{};
    l0_cfg.epsilon = 0.2;
    l0_cfg.n = 5000;
    l0_cfg.m = 100000;
    l0_cfg.M = 100;
    l0_seed = seed;
    l0_ok += structural<L0FullSketch>(
        [](std::uint64_t) { return L0FullSketch(l0_cfg, l0_seed); }, ups,
        [](L0FullSketch& sk, const StreamUpdate& u) { sk.update(u.index, u.value); }, true,
        shuffle_rng);

    static F0Config f0_cfg;
    static std::uint64_t f0_seed;
    f0_cfg = F0Config{};
    f0_cfg.epsilon = 0.2;
    f0_cfg.n = 5000;
    f0_cfg.m = 100000;
    f0_seed = seed;
    f0_ok += structural<F0Sketch>(
        [](std::uint64_t) { return F0Sketch(f0_cfg, f0_seed); }, ups,
        [](F0Sketch& sk, const StreamUpdate& u) { sk.update(u.index); }, false, shuffle_rng);
  }
  o.detail << " lp " << lp_ok << "/50, l0 " << l0_ok << "/50, f0 " << f0_ok
           << "/50 (f0: duplicate replay in place of inverse)";
  o.require(lp_ok == 50 && l0_ok == 50 && f0_ok == 50, "structural identity");
  return o;
}

double percentile99(std::vector<std::uint32_t>& v) {
  auto k = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(v.size()))) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

Outcome performance() {
  Outcome o;
  std::vector<double> eps_list{0.2, 0.1, 0.05};
  std::vector<double> le_bytes, total_bytes;
  for (double eps : eps_list) {
    L0Config c;
    c.epsilon = eps;
    c.n = 1000000000;
    c.m = 1000000000;
    c.M = 100;
    L0FullSketch s(c, 12);
    SplitMix64 rng(13);
    for (int t = 0; t < 100000; ++t) {
      s.update(rng.below(c.n), static_cast<std::int64_t>(rng.between(1, 200)) - 100);
    }
    le_bytes.push_back(static_cast<double>(s.level_estimator_bytes()));
    total_bytes.push_back(static_cast<double>(s.bytes_used()));
  }
  o.detail << " l0 eps-dependent bytes";
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    double expect = std::pow(eps_list[0] / eps_list[k], 2);
    double ratio = le_bytes[k] / le_bytes[0];
    o.detail << " " << static_cast<long long>(le_bytes[k]);
    o.require(ratio >= expect / 2 && ratio <= expect * 2, "1/eps^2 scaling at eps=" + std::to_string(eps_list[k]));
  }
  o.detail << " (ratios " << le_bytes[1] / le_bytes[0] << ", " << le_bytes[2] / le_bytes[0]
           << " vs 4, 16); total incl. rough estimator";
  for (double b : total_bytes) o.detail << " " << static_cast<long long>(b);

  F0Config fc;
  fc.epsilon = 0.1;
  fc.n = 1000000000;
  fc.m = 10000000;
  F0Sketch f0(fc, 14);
  SplitMix64 rng(15);
  const std::uint64_t total = 10000000, warmup = 10000, window = 1000000;
  std::vector<std::uint32_t> first, last;
  first.reserve(window);
  last.reserve(window);
  for (std::uint64_t t = 0; t < total; ++t) {
    std::uint64_t i = rng.below(fc.n);
    auto start = Clock::now();
    f0.update(i);
    auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
    if (t >= warmup && t < warmup + window) first.push_back(static_cast<std::uint32_t>(ns));
    if (t >= total - window) last.push_back(static_cast<std::uint32_t>(ns));
  }
  double p99_first = percentile99(first), p99_last = percentile99(last);
  o.detail << "; f0 p99 first=" << p99_first << "ns last=" << p99_last << "ns";
  o.require(p99_last <= 2.0 * p99_first, "f0 p99 growth");
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  std::vector<Criterion> criteria{
      {1, "Lp accuracy", lp_accuracy},
      {2, "p-stable generator", stable_generator},
      {3, "LogEstimator promise regime", log_estimator_promise},
      {4, "RoughEstimator contract", rough_estimator},
      {5, "full L0 one-pass and two-pass", full_l0},
      {6, "F0 accuracy", f0_accuracy},
      {7, "balls-and-bins oracle suite", balls_and_bins},
      {8, "fastlog and f-inversion", fastlog},
      {9, "structural properties", structural_properties},
      {10, "performance sanity", performance},
  };
  int failures = 0;
  auto start = Clock::now();
  for (auto& c : criteria) {
    auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " exception: " << e.what();
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s):%s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.str().c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed in %.0fs\n", static_cast<int>(criteria.size()) - failures,
              criteria.size(), seconds_since(start));
  return failures == 0 ? 0 : 1;
}
