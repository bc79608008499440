#include "streamnorm/f0_sketch.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace streamnorm {

PackedArray::PackedArray(std::size_t size, unsigned bits)
    : size_(size), bits_(bits), mask_(bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1) {
  if (bits == 0 || bits > 32) throw std::invalid_argument("PackedArray: bits must lie in [1, 32]");
  words_.assign((size * bits + 63) / 64, 0);
}

std::uint64_t PackedArray::get(std::size_t idx) const {
  std::size_t bit = idx * bits_;
  std::size_t w = bit >> 6;
  unsigned off = bit & 63;
  std::uint64_t v = words_[w] >> off;
  if (off + bits_ > 64) v |= words_[w + 1] << (64 - off);
  return v & mask_;
}

void PackedArray::set(std::size_t idx, std::uint64_t value) {
  std::size_t bit = idx * bits_;
  std::size_t w = bit >> 6;
  unsigned off = bit & 63;
  value &= mask_;
  words_[w] = (words_[w] & ~(mask_ << off)) | (value << off);
  if (off + bits_ > 64) {
    unsigned spill = off + bits_ - 64;
    std::uint64_t hi_mask = (std::uint64_t{1} << spill) - 1;
    words_[w + 1] = (words_[w + 1] & ~hi_mask) | (value >> (64 - off));
  }
}

F0Config F0Config::original_constants(double epsilon, std::uint64_t n, std::uint64_t m) {
  F0Config c;
  c.epsilon = epsilon;
  c.n = n;
  c.m = m;
  c.slack = 1.0;
  c.threshold = 1.0 / 40.0;
  return c;
}

std::uint64_t F0Config::K() const {
  double s = slack / epsilon;
  return static_cast<std::uint64_t>(std::ceil(s * s - 1e-9));
}

int F0Config::L() const {
  double x = static_cast<double>(N()) / static_cast<double>(K());
  return x <= 1.0 ? 0 : static_cast<int>(std::ceil(std::log2(x) - 1e-12));
}

void F0Config::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("F0Config: epsilon in (0,1)");
  if (n == 0 || m == 0) throw std::invalid_argument("F0Config: n, m must be >= 1");
  if (!(slack >= 1.0)) throw std::invalid_argument("F0Config: slack must be >= 1");
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw std::invalid_argument("F0Config: threshold must lie in (0, 1]");
  double k = static_cast<double>(K());
  if (k * k >= 0x1.0p61) throw std::invalid_argument("F0Config: K too large for the hash field");
  if (n > kMersenne61) throw std::invalid_argument("F0Config: universe exceeds hash field");
}

namespace {

unsigned bin_bits(int top) {
  return std::max(1u, static_cast<unsigned>(std::bit_width(static_cast<unsigned>(top + 1))));
}

const F0Config& checked(const F0Config& c) {
  c.validate();
  return c;
}

RoughEstimatorParams idempotent(RoughEstimatorParams p) {
  p.insertion_only = true;
  return p;
}

}  // namespace

F0Sketch::F0Sketch(const F0Config& config, std::uint64_t seed)
    : config_(checked(config)),
      seed_(seed),
      K_(config.K()),
      top_(config.L() + 1),
      h2_(1, 1, 0),
      h1_(2, 1, 1, 0),
      h3_(1, 1, 0),
      bins_(K_, bin_bits(top_)),
      hist_(top_ + 1, 0),
      table_(std::make_shared<FastLogTable>(std::max<std::uint64_t>(K_, 2), config.eps_prime())),
      rough_(config.n, config.N(), SplitMix64(seed).next(), idempotent(config.rough)) {
  SplitMix64 rng(seed);
  rng.next();
  const std::uint64_t mid = K_ * K_;
  h2_ = PairwiseHash(config_.n, mid, rng.next());
  h1_ = KWiseHash(independence_for(config_.eps_prime()), mid, K_, rng.next());
  h3_ = PairwiseHash(config_.n, L0FullSketch::level_range(config_.N()), rng.next());
}

int F0Sketch::level_of(std::uint64_t i) const {
  return std::min(lsb(h3_(i)), top_);
}

std::uint64_t F0Sketch::bin_of(std::uint64_t i) const { return h1_.eval_unchecked(h2_(i)); }

int F0Sketch::bin(std::uint64_t j) const { return static_cast<int>(bins_.get(j)) - 1; }

void F0Sketch::update(std::uint64_t i) {
  if (i >= config_.n) throw std::out_of_range("F0Sketch::update: index outside universe");
  rough_.update(i, 1);
  const std::uint64_t b = h1_.eval_unchecked(h2_.eval_unchecked(i));
  const int level = std::min(lsb(h3_.eval_unchecked(i)), top_);
  const std::uint64_t stored = bins_.get(b);
  if (stored == 0) {
    ++nonnull_;
  } else if (static_cast<int>(stored) - 1 >= level) {
    return;
  } else {
    --hist_[stored - 1];
  }
  ++hist_[level];
  bins_.set(b, static_cast<std::uint64_t>(level) + 1);
}

F0Sketch::Detail F0Sketch::estimate_detail() const {
  Detail d;
  d.rough = rough_.estimate();
  const double R = static_cast<double>(d.rough);
  const double K = static_cast<double>(K_);
  auto occupancy = [&](std::uint64_t occupied) -> Estimate {
    if (occupied > table_->max_query()) {
      double occ = static_cast<double>(std::min(occupied, K_ - 1));
      return {std::log1p(-occ / K) / std::log1p(-1.0 / K), false, true};
    }
    return {estimate_from_occupancy(occupied, K_, *table_), false, false};
  };
  if (R <= 100.0) {
    d.branch = Branch::kSmall;
    d.estimate.value = static_cast<double>(nonnull_);
    return d;
  }
  const double T = config_.threshold * K;
  if (R <= T) {
    d.branch = Branch::kOccupancy;
    d.estimate = occupancy(nonnull_);
    return d;
  }
  int r = 1;
  while (R / std::ldexp(1.0, r) > T) ++r;
  if (r >= top_) {
    d.branch = Branch::kTopLevel;
    d.level = top_;
    d.estimate = occupancy(hist_[top_]);
    d.estimate.value *= std::ldexp(1.0, top_);
    return d;
  }
  d.branch = Branch::kLevel;
  d.level = r;
  const double y = static_cast<double>(hist_[r]);
  const double scale = std::ldexp(1.0, r + 1);
  if (y > f_occupancy(K / 3.0, K_)) {
    d.estimate = {scale * K / 3.0, true, false};
    return d;
  }
  d.estimate.value = scale * invert_f(y, K_, config_.epsilon * K / 320.0);
  return d;
}

void F0Sketch::rebuild_histogram() {
  std::fill(hist_.begin(), hist_.end(), 0);
  nonnull_ = 0;
  for (std::uint64_t j = 0; j < K_; ++j) {
    std::uint64_t s = bins_.get(j);
    if (s != 0) {
      ++nonnull_;
      ++hist_[s - 1];
    }
  }
}

std::vector<std::uint8_t> F0Sketch::header_bytes() const {
  ByteWriter w;
  w.put_magic("F0SK", 1);
  w.put(config_.epsilon);
  w.put(config_.n);
  w.put(config_.m);
  w.put(config_.slack);
  w.put(config_.threshold);
  w.put(config_.rough.copies);
  w.put(config_.rough.capacity);
  w.put(config_.rough.trials);
  w.put(config_.rough.threshold);
  w.put(seed_);
  return w.take();
}

void F0Sketch::merge(const F0Sketch& other) {
  if (header_bytes() != other.header_bytes())
    throw std::invalid_argument("f0_merge: sketches differ in configuration or seed");
  for (std::uint64_t j = 0; j < K_; ++j) {
    std::uint64_t o = other.bins_.get(j);
    if (o > bins_.get(j)) bins_.set(j, o);
  }
  rough_.merge(other.rough_);
  rebuild_histogram();
}

F0Sketch f0_merge(const F0Sketch& s, const F0Sketch& t) {
  F0Sketch out = s;
  out.merge(t);
  return out;
}

std::vector<std::uint8_t> F0Sketch::serialize() const {
  ByteWriter w;
  for (auto b : header_bytes()) w.put(b);
  for (std::uint64_t word : bins_.words()) w.put(word);
  rough_.write(w);
  return w.take();
}

F0Sketch F0Sketch::deserialize(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.expect_magic("F0SK", 1);
  F0Config c;
  c.epsilon = r.get<double>();
  c.n = r.get<std::uint64_t>();
  c.m = r.get<std::uint64_t>();
  c.slack = r.get<double>();
  c.threshold = r.get<double>();
  c.rough.copies = r.get<std::uint32_t>();
  c.rough.capacity = r.get<std::uint32_t>();
  c.rough.trials = r.get<std::uint32_t>();
  c.rough.threshold = r.get<std::uint64_t>();
  auto seed = r.get<std::uint64_t>();
  F0Sketch s(c, seed);
  for (auto& word : s.bins_.words()) word = r.get<std::uint64_t>();
  for (std::uint64_t j = 0; j < s.K_; ++j) {
    if (s.bins_.get(j) > static_cast<std::uint64_t>(s.top_) + 1)
      throw std::invalid_argument("F0Sketch: bin value out of range");
  }
  s.rough_.read(r);
  if (!r.done()) throw std::invalid_argument("F0Sketch: trailing bytes");
  s.rebuild_histogram();
  return s;
}

std::size_t F0Sketch::bytes_used() const {
  return bins_.bytes_used() + hist_.size() * sizeof(std::uint64_t) + table_->bytes_used() +
         rough_.bytes_used() + (h1_.k() + 4) * sizeof(std::uint64_t);
}

}  // namespace streamnorm
