#include "streamnorm/l0_turnstile.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace streamnorm {

namespace {

std::uint64_t mod_signed(std::int64_t v, std::uint64_t p) {
  std::int64_t r = v % static_cast<std::int64_t>(p);
  return static_cast<std::uint64_t>(r < 0 ? r + static_cast<std::int64_t>(p) : r);
}

int ceil_log2(std::uint64_t x) { return x <= 1 ? 0 : std::bit_width(x - 1); }

double lower_median(std::vector<double> v) {
  auto mid = v.begin() + (v.size() - 1) / 2;
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

ExactSmallL0::ExactSmallL0(std::uint32_t capacity, std::uint32_t trials, std::uint64_t p_small,
                           std::uint64_t domain, std::uint64_t seed, bool insertion_only)
    : capacity_(capacity),
      trials_(trials),
      p_small_(p_small),
      domain_(domain),
      buckets_(static_cast<std::uint64_t>(capacity) * capacity),
      insertion_only_(insertion_only) {
  if (capacity == 0 || trials == 0) throw std::invalid_argument("ExactSmallL0: empty shape");
  if (p_small < 2 || p_small > 0xffffffffULL || !is_prime(p_small))
    throw std::invalid_argument("ExactSmallL0: p_small must be a 32-bit prime");
  if (domain == 0 || domain > kMersenne61) throw std::invalid_argument("ExactSmallL0: bad domain");
  SplitMix64 rng(seed);
  a_.resize(trials);
  b_.resize(trials);
  for (std::uint32_t t = 0; t < trials; ++t) {
    a_[t] = rng.below(kMersenne61);
    b_[t] = rng.below(kMersenne61);
  }
}

void ExactSmallL0::allocate() {
  counters_.assign(static_cast<std::size_t>(trials_) * buckets_, 0);
  nonzero_.assign(trials_, 0);
}

void ExactSmallL0::update(std::uint64_t i, std::int64_t v) {
  if (insertion_only_ && v < 0)
    throw std::invalid_argument("ExactSmallL0: negative update in insertion-only mode");
  std::uint64_t vm = mod_signed(v, p_small_);
  if (vm == 0) return;
  if (counters_.empty()) allocate();
  for (std::uint32_t t = 0; t < trials_; ++t) {
    std::uint64_t h = mulmod61(a_[t], i) + b_[t];
    if (h >= kMersenne61) h -= kMersenne61;
    std::uint32_t& c = counters_[t * buckets_ + reduce61(h, buckets_)];
    if (insertion_only_) {
      if (c == 0) {
        c = 1;
        ++nonzero_[t];
      }
      continue;
    }
    std::uint64_t next = c + vm;
    if (next >= p_small_) next -= p_small_;
    if (c == 0) ++nonzero_[t];
    if (next == 0) --nonzero_[t];
    c = static_cast<std::uint32_t>(next);
  }
}

std::uint64_t ExactSmallL0::report() const {
  if (nonzero_.empty()) return 0;
  return *std::max_element(nonzero_.begin(), nonzero_.end());
}

std::uint32_t ExactSmallL0::counter(std::uint32_t trial, std::uint64_t bucket) const {
  if (trial >= trials_ || bucket >= buckets_) throw std::out_of_range("ExactSmallL0::counter");
  return counters_.empty() ? 0 : counters_[trial * buckets_ + bucket];
}

void ExactSmallL0::recount() {
  for (std::uint32_t t = 0; t < trials_; ++t) {
    nonzero_[t] = static_cast<std::uint64_t>(
        std::count_if(counters_.begin() + t * buckets_, counters_.begin() + (t + 1) * buckets_,
                      [](std::uint32_t c) { return c != 0; }));
  }
}

void ExactSmallL0::merge(const ExactSmallL0& other) {
  if (capacity_ != other.capacity_ || trials_ != other.trials_ || p_small_ != other.p_small_ ||
      insertion_only_ != other.insertion_only_ || a_ != other.a_ || b_ != other.b_) {
    throw std::invalid_argument("ExactSmallL0::merge: mismatched seeds");
  }
  if (other.counters_.empty()) return;
  if (counters_.empty()) allocate();
  for (std::size_t x = 0; x < counters_.size(); ++x) {
    if (insertion_only_) {
      counters_[x] = std::max(counters_[x], other.counters_[x]);
      continue;
    }
    std::uint64_t s = std::uint64_t{counters_[x]} + other.counters_[x];
    counters_[x] = static_cast<std::uint32_t>(s >= p_small_ ? s - p_small_ : s);
  }
  recount();
}

std::size_t ExactSmallL0::bytes_used() const {
  return counters_.size() * sizeof(std::uint32_t) + nonzero_.size() * sizeof(std::uint64_t) +
         (a_.size() + b_.size()) * sizeof(std::uint64_t);
}

void ExactSmallL0::write(ByteWriter& w) const {
  const bool live = report() > 0;
  w.put(static_cast<std::uint8_t>(live ? 1 : 0));
  if (live)
    for (std::uint32_t c : counters_) w.put(c);
}

void ExactSmallL0::read(ByteReader& r) {
  if (r.get<std::uint8_t>() == 0) {
    counters_.clear();
    nonzero_.clear();
    return;
  }
  allocate();
  for (auto& c : counters_) {
    c = r.get<std::uint32_t>();
    if (c >= p_small_) throw std::invalid_argument("ExactSmallL0: counter outside field");
  }
  recount();
}

RoughEstimator::RoughEstimator(std::uint64_t n, std::uint64_t N, std::uint64_t seed,
                               const RoughEstimatorParams& params)
    : params_(params), n_(n), levels_(ceil_log2(std::max<std::uint64_t>(N, 1)) + 1) {
  if (params.copies == 0) throw std::invalid_argument("RoughEstimator: copies must be >= 1");
  if (n == 0 || N == 0) throw std::invalid_argument("RoughEstimator: n, N must be >= 1");
  SplitMix64 rng(seed);
  p_small_ = sample_prime(1u << 16, 1u << 17, rng);
  const std::uint64_t range = std::uint64_t{1} << (levels_ - 1);
  level_hash_.reserve(params.copies);
  cells_.reserve(static_cast<std::size_t>(params.copies) * levels_);
  for (std::uint32_t c = 0; c < params.copies; ++c) {
    level_hash_.emplace_back(n, range, rng.next());
    for (int j = 0; j < levels_; ++j) {
      cells_.emplace_back(params.capacity, params.trials, p_small_, n, rng.next(),
                          params.insertion_only);
    }
  }
  z_.assign(params.copies, 0);
}

int RoughEstimator::level_of(std::uint32_t copy, std::uint64_t i) const {
  return std::min(lsb(level_hash_[copy].eval_unchecked(i)), levels_ - 1);
}

const ExactSmallL0& RoughEstimator::level_counter(std::uint32_t copy, int level) const {
  return cells_.at(static_cast<std::size_t>(copy) * levels_ + level);
}

void RoughEstimator::update(std::uint64_t i, std::int64_t v) {
  if (i >= n_) throw std::out_of_range("RoughEstimator::update: index outside universe");
  for (std::uint32_t c = 0; c < params_.copies; ++c) {
    int j = level_of(c, i);
    ExactSmallL0& cell = cells_[static_cast<std::size_t>(c) * levels_ + j];
    cell.update(i, v);
    std::uint64_t bit = std::uint64_t{1} << j;
    if (cell.report() > params_.threshold) {
      z_[c] |= bit;
    } else {
      z_[c] &= ~bit;
    }
  }
}

std::uint64_t RoughEstimator::copy_estimate(std::uint32_t copy) const {
  std::uint64_t z = z_.at(copy);
  if (z == 0) return 55;
  int top = std::bit_width(z) - 1;
  return std::uint64_t{220} << top;
}

std::uint64_t RoughEstimator::estimate() const {
  std::vector<std::uint64_t> est(params_.copies);
  for (std::uint32_t c = 0; c < params_.copies; ++c) est[c] = copy_estimate(c);
  auto mid = est.begin() + (est.size() - 1) / 2;
  std::nth_element(est.begin(), mid, est.end());
  return *mid;
}

void RoughEstimator::merge(const RoughEstimator& other) {
  if (params_.copies != other.params_.copies || levels_ != other.levels_ ||
      p_small_ != other.p_small_) {
    throw std::invalid_argument("RoughEstimator::merge: mismatched configuration");
  }
  for (std::size_t x = 0; x < cells_.size(); ++x) cells_[x].merge(other.cells_[x]);
  for (std::uint32_t c = 0; c < params_.copies; ++c) {
    z_[c] = 0;
    for (int j = 0; j < levels_; ++j) {
      if (cells_[static_cast<std::size_t>(c) * levels_ + j].report() > params_.threshold)
        z_[c] |= std::uint64_t{1} << j;
    }
  }
}

std::size_t RoughEstimator::bytes_used() const {
  std::size_t total = z_.size() * sizeof(std::uint64_t) + level_hash_.size() * 2 * sizeof(std::uint64_t);
  for (const auto& cell : cells_) total += cell.bytes_used();
  return total;
}

void RoughEstimator::write(ByteWriter& w) const {
  for (const auto& cell : cells_) cell.write(w);
}

void RoughEstimator::read(ByteReader& r) {
  for (auto& cell : cells_) cell.read(r);
  for (std::uint32_t c = 0; c < params_.copies; ++c) {
    z_[c] = 0;
    for (int j = 0; j < levels_; ++j) {
      if (cells_[static_cast<std::size_t>(c) * levels_ + j].report() > params_.threshold)
        z_[c] |= std::uint64_t{1} << j;
    }
  }
}

std::uint64_t LogEstimatorShared::counters_for(double eps_prime) {
  if (!(eps_prime > 0.0 && eps_prime < 1.0))
    throw std::invalid_argument("LogEstimator: eps' must lie in (0,1)");
  return static_cast<std::uint64_t>(std::ceil(1.0 / (eps_prime * eps_prime) - 1e-9));
}

namespace {

std::uint64_t h3_range_for(double eps_prime) {
  double r = std::ceil(4.0 / std::pow(eps_prime, 4));
  if (r >= 0x1.0p61) throw std::invalid_argument("LogEstimator: eps' too small for the hash field");
  return static_cast<std::uint64_t>(r);
}

std::uint64_t sample_field_prime(double eps, std::uint64_t m, std::uint64_t M, SplitMix64& rng) {
  double D = std::max(1.0, std::log2(static_cast<double>(m) * static_cast<double>(M))) / (eps * eps);
  D = std::max(D, 3.0);
  double hi = std::min(D * D, 0x1.0p62);
  return sample_prime(static_cast<std::uint64_t>(std::ceil(D)), static_cast<std::uint64_t>(hi), rng);
}

}  // namespace

LogEstimatorShared::LogEstimatorShared(double eps, double eps_prime, std::uint64_t n,
                                       std::uint64_t m, std::uint64_t M, std::uint64_t seed,
                                       std::shared_ptr<const FastLogTable> table)
    : eps_(eps),
      eps_prime_(eps_prime),
      K_(counters_for(eps_prime)),
      seed_(seed),
      p_(0),
      h3_range_(h3_range_for(eps_prime)),
      h3_(1, 1, 0),
      h1_(2, 1, 1, 0),
      h2_(1, 1, 0),
      table_(std::move(table)) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("LogEstimator: eps must lie in (0,1)");
  if (n == 0 || n > kMersenne61) throw std::invalid_argument("LogEstimator: bad universe");
  SplitMix64 rng(seed);
  p_ = sample_field_prime(eps, m, M, rng);
  u_.resize(K_);
  for (auto& x : u_) x = rng.below(p_);
  h3_ = PairwiseHash(n, h3_range_, rng.next());
  h1_ = KWiseHash(independence_for(eps_prime), h3_range_, K_, rng.next());
  h2_ = PairwiseHash(h3_range_, K_, rng.next());
  if (!table_) {
    table_ = std::make_shared<FastLogTable>(K_, eps_prime);
  } else if (table_->K() != K_) {
    throw std::invalid_argument("LogEstimator: fastlog table built for a different K");
  }
}

bool LogEstimatorShared::same_seeds(const LogEstimatorShared& other) const {
  return seed_ == other.seed_ && K_ == other.K_ && p_ == other.p_ && eps_ == other.eps_ &&
         h3_range_ == other.h3_range_;
}

LogEstimatorShared::Route LogEstimatorShared::route(std::uint64_t i) const {
  std::uint64_t x = h3_(i);
  return {static_cast<std::uint32_t>(h1_.eval_unchecked(x)), u_[h2_.eval_unchecked(x)]};
}

std::size_t LogEstimatorShared::bytes_used() const {
  return u_.size() * sizeof(std::uint64_t) + (h1_.k() + 4) * sizeof(std::uint64_t);
}

LogEstimator::LogEstimator(std::shared_ptr<const LogEstimatorShared> shared)
    : shared_(std::move(shared)) {
  if (!shared_) throw std::invalid_argument("LogEstimator: null shared state");
  counters_.assign(shared_->K(), 0);
}

void LogEstimator::apply(LogEstimatorShared::Route route, std::int64_t v) {
  const std::uint64_t p = shared_->prime();
  std::uint64_t vm = mod_signed(v, p);
  std::uint64_t delta = p < (std::uint64_t{1} << 32) ? vm * route.coefficient % p
                                                     : mulmod(vm, route.coefficient, p);
  if (delta == 0) return;
  std::uint64_t& c = counters_[route.slot];
  std::uint64_t next = c + delta;
  if (next >= p) next -= p;
  if (c == 0) ++nonzero_;
  if (next == 0) --nonzero_;
  c = next;
}

std::uint64_t LogEstimator::recount_nonzero() const {
  return static_cast<std::uint64_t>(
      std::count_if(counters_.begin(), counters_.end(), [](std::uint64_t c) { return c != 0; }));
}

Estimate LogEstimator::estimate() const {
  const std::uint64_t K = shared_->K();
  const bool saturated = 5 * nonzero_ >= 4 * K;
  if (nonzero_ <= 100) return {static_cast<double>(nonzero_), false, saturated};
  if (nonzero_ > shared_->table().max_query()) {
    double occ = static_cast<double>(std::min(nonzero_, K - 1));
    return {std::log1p(-occ / K) / std::log1p(-1.0 / K), false, true};
  }
  return {estimate_from_occupancy(nonzero_, K, shared_->table()), false, saturated};
}

void LogEstimator::merge(const LogEstimator& other) {
  if (shared_ != other.shared_ && !shared_->same_seeds(*other.shared_))
    throw std::invalid_argument("LogEstimator::merge: different seeds");
  const std::uint64_t p = shared_->prime();
  for (std::size_t x = 0; x < counters_.size(); ++x) {
    std::uint64_t s = counters_[x] + other.counters_[x];
    counters_[x] = s >= p ? s - p : s;
  }
  nonzero_ = recount_nonzero();
}

void LogEstimator::write(ByteWriter& w) const {
  for (std::uint64_t c : counters_) w.put(c);
}

void LogEstimator::read(ByteReader& r) {
  for (auto& c : counters_) {
    c = r.get<std::uint64_t>();
    if (c >= shared_->prime()) throw std::invalid_argument("LogEstimator: counter outside field");
  }
  nonzero_ = recount_nonzero();
}

L0Config L0Config::original_constants(double epsilon, std::uint64_t n, std::uint64_t m, std::uint64_t M) {
  L0Config c;
  c.epsilon = epsilon;
  c.n = n;
  c.m = m;
  c.M = M;
  c.slack = 420.0;
  c.tau = 1.0 / 20.0;
  return c;
}

int L0Config::jmax() const {
  double x = eps_prime() * eps_prime() * static_cast<double>(N());
  return static_cast<int>(std::ceil(std::log2(x) - 1e-12));
}

void L0Config::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("L0Config: epsilon in (0,1)");
  if (n == 0 || m == 0 || M == 0) throw std::invalid_argument("L0Config: n, m, M must be >= 1");
  if (!(slack >= 1.0)) throw std::invalid_argument("L0Config: slack must be >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("L0Config: tau must be positive");
  if (copies == 0) throw std::invalid_argument("L0Config: copies must be >= 1");
  if (jmax() > 62) throw std::invalid_argument("L0Config: too many levels");
}

LevelChoice choose_level(const L0Config& config, std::uint64_t R) {
  const double B = config.tau * static_cast<double>(config.K_prime());
  const int jmax = config.jmax();
  if (jmax < 0 || static_cast<double>(R) < B) return {};
  int j = 0;
  while (static_cast<double>(R) / std::ldexp(1.0, j) > B / 2) ++j;
  if (j >= jmax) return {jmax, std::ldexp(1.0, jmax)};
  return {j, std::ldexp(1.0, j + 1)};
}

std::uint64_t L0FullSketch::rough_seed(std::uint64_t seed) { return SplitMix64(seed).next(); }

std::vector<L0FullSketch::CopySeeds> L0FullSketch::copy_seeds(std::uint64_t seed,
                                                               std::uint32_t copies) {
  SplitMix64 rng(seed);
  rng.next();
  std::vector<CopySeeds> out(copies);
  for (auto& c : out) {
    c.shared = rng.next();
    c.level_hash = rng.next();
  }
  return out;
}

std::uint64_t L0FullSketch::level_range(std::uint64_t N) {
  return std::uint64_t{1} << ceil_log2(std::max<std::uint64_t>(N, 1));
}

L0FullSketch::L0FullSketch(const L0Config& config, std::uint64_t seed)
    : config_(config),
      seed_(seed),
      rough_((config.validate(), config.n), config.N(), rough_seed(seed), config.rough) {
  auto table = std::make_shared<FastLogTable>(config_.K_prime(), config_.eps_prime());
  const int jmax = config_.jmax();
  for (const auto& cs : copy_seeds(seed, config_.copies)) {
    auto shared = std::make_shared<LogEstimatorShared>(config_.epsilon, config_.eps_prime(),
                                                       config_.n, config_.m, config_.M, cs.shared,
                                                       table);
    Copy c{shared, PairwiseHash(config_.n, level_range(config_.N()), cs.level_hash),
           LogEstimator(shared), {}};
    for (int j = 0; j <= jmax; ++j) c.levels.emplace_back(shared);
    copies_.push_back(std::move(c));
  }
}

int L0FullSketch::route_level(std::uint32_t copy, std::uint64_t i) const {
  return std::min(lsb(copies_.at(copy).level_hash.eval_unchecked(i)), config_.jmax());
}

void L0FullSketch::update(std::uint64_t i, std::int64_t v) {
  rough_.update(i, v);
  const int jmax = config_.jmax();
  for (auto& c : copies_) {
    auto route = c.shared->route(i);
    c.base.apply(route, v);
    if (jmax >= 0) {
      int j = std::min(lsb(c.level_hash.eval_unchecked(i)), jmax);
      c.levels[j].apply(route, v);
    }
  }
}

Estimate L0FullSketch::estimate() const {
  LevelChoice choice = choose_level(config_, rough_.estimate());
  std::vector<double> values;
  Estimate out;
  for (const auto& c : copies_) {
    Estimate e = choice.level < 0 ? c.base.estimate() : c.levels[choice.level].estimate();
    values.push_back(e.value * choice.scale);
    out.saturated = out.saturated || e.saturated;
  }
  out.value = lower_median(std::move(values));
  return out;
}

std::vector<std::uint8_t> L0FullSketch::header_bytes() const {
  ByteWriter w;
  w.put_magic("L0FS", 1);
  w.put(config_.epsilon);
  w.put(config_.n);
  w.put(config_.m);
  w.put(config_.M);
  w.put(config_.slack);
  w.put(config_.tau);
  w.put(config_.copies);
  w.put(config_.rough.copies);
  w.put(config_.rough.capacity);
  w.put(config_.rough.trials);
  w.put(config_.rough.threshold);
  w.put(seed_);
  return w.take();
}

void L0FullSketch::merge(const L0FullSketch& other) {
  if (header_bytes() != other.header_bytes())
    throw std::invalid_argument("L0FullSketch::merge: mismatched configuration or seed");
  rough_.merge(other.rough_);
  for (std::size_t c = 0; c < copies_.size(); ++c) {
    auto& mine = copies_[c];
    const auto& theirs = other.copies_[c];
    mine.base.merge(theirs.base);
    for (std::size_t j = 0; j < mine.levels.size(); ++j) mine.levels[j].merge(theirs.levels[j]);
  }
}

std::vector<std::uint8_t> L0FullSketch::serialize() const {
  ByteWriter w;
  for (auto b : header_bytes()) w.put(b);
  rough_.write(w);
  for (const auto& c : copies_) {
    c.base.write(w);
    for (const auto& le : c.levels) le.write(w);
  }
  return w.take();
}

L0FullSketch L0FullSketch::deserialize(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.expect_magic("L0FS", 1);
  L0Config c;
  c.epsilon = r.get<double>();
  c.n = r.get<std::uint64_t>();
  c.m = r.get<std::uint64_t>();
  c.M = r.get<std::uint64_t>();
  c.slack = r.get<double>();
  c.tau = r.get<double>();
  c.copies = r.get<std::uint32_t>();
  c.rough.copies = r.get<std::uint32_t>();
  c.rough.capacity = r.get<std::uint32_t>();
  c.rough.trials = r.get<std::uint32_t>();
  c.rough.threshold = r.get<std::uint64_t>();
  auto seed = r.get<std::uint64_t>();
  L0FullSketch s(c, seed);
  s.rough_.read(r);
  for (auto& cp : s.copies_) {
    cp.base.read(r);
    for (auto& le : cp.levels) le.read(r);
  }
  if (!r.done()) throw std::invalid_argument("L0FullSketch: trailing bytes");
  return s;
}

std::size_t L0FullSketch::level_estimator_bytes() const {
  std::size_t total = copies_.empty() ? 0 : copies_.front().shared->table().bytes_used();
  for (const auto& c : copies_) {
    total += c.shared->bytes_used() + c.base.bytes_used() + 2 * sizeof(std::uint64_t);
    for (const auto& le : c.levels) total += le.bytes_used();
  }
  return total;
}

std::size_t L0FullSketch::bytes_used() const {
  return rough_.bytes_used() + level_estimator_bytes();
}

TwoPassResult two_pass_estimate(const L0Config& config, std::uint64_t seed, const Replay& replay) {
  config.validate();
  TwoPassResult out;
  RoughEstimator rough(config.n, config.N(), L0FullSketch::rough_seed(seed), config.rough);
  replay([&](std::uint64_t i, std::int64_t v) { rough.update(i, v); });
  out.rough = rough.estimate();
  out.pass1_bytes = rough.bytes_used();
  out.choice = choose_level(config, out.rough);

  auto table = std::make_shared<FastLogTable>(config.K_prime(), config.eps_prime());
  const int jmax = config.jmax();
  struct Pass2 {
    std::shared_ptr<const LogEstimatorShared> shared;
    PairwiseHash level_hash;
    LogEstimator le;
  };
  std::vector<Pass2> copies;
  for (const auto& cs : L0FullSketch::copy_seeds(seed, config.copies)) {
    auto shared = std::make_shared<LogEstimatorShared>(config.epsilon, config.eps_prime(), config.n,
                                                       config.m, config.M, cs.shared, table);
    copies.push_back({shared,
                      PairwiseHash(config.n, L0FullSketch::level_range(config.N()), cs.level_hash),
                      LogEstimator(shared)});
  }
  const int level = out.choice.level;
  replay([&](std::uint64_t i, std::int64_t v) {
    for (auto& c : copies) {
      if (level >= 0 && std::min(lsb(c.level_hash.eval_unchecked(i)), jmax) != level) continue;
      c.le.update(i, v);
    }
  });
  std::vector<double> values;
  out.pass2_bytes = table->bytes_used();
  for (const auto& c : copies) {
    Estimate e = c.le.estimate();
    values.push_back(e.value * out.choice.scale);
    out.estimate.saturated = out.estimate.saturated || e.saturated;
    out.pass2_bytes += c.shared->bytes_used() + c.le.bytes_used();
  }
  out.estimate.value = lower_median(std::move(values));
  out.level_estimators_per_copy = 1;
  out.level_estimators_total = static_cast<std::uint32_t>(copies.size());
  return out;
}

}  // namespace streamnorm
