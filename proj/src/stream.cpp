#include "streamnorm/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <iostream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "streamnorm/hashing.hpp"

namespace streamnorm {

std::string to_string(StreamModel model) {
  switch (model) {
    case StreamModel::kTurnstile:
      return "turnstile";
    case StreamModel::kStrictTurnstile:
      return "strict-turnstile";
    case StreamModel::kInsertionOnly:
      return "insertion-only";
  }
  return "turnstile";
}

StreamModel parse_model(const std::string& name) {
  if (name == "turnstile") return StreamModel::kTurnstile;
  if (name == "strict-turnstile") return StreamModel::kStrictTurnstile;
  if (name == "insertion-only") return StreamModel::kInsertionOnly;
  throw std::invalid_argument("unknown stream model '" + name + "'");
}

void StreamHeader::validate() const {
  if (n == 0 || m == 0 || M == 0) throw std::invalid_argument("stream header: n, m, M must be >= 1");
}

namespace {

constexpr char kBinaryMagic[4] = {'S', 'N', 'B', 'S'};
constexpr std::uint16_t kBinaryVersion = 1;

template <typename T>
bool parse_int(std::string_view tok, T& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char raw[sizeof(T)];
  for (std::size_t b = 0; b < sizeof(T); ++b) raw[b] = static_cast<unsigned char>(
      static_cast<std::make_unsigned_t<T>>(v) >> (8 * b));
  out.write(reinterpret_cast<const char*>(raw), sizeof(T));
}

template <typename T>
bool get_le(std::istream& in, T& v) {
  unsigned char raw[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(raw), sizeof(T))) return false;
  std::make_unsigned_t<T> u = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) u |= static_cast<std::make_unsigned_t<T>>(raw[b]) << (8 * b);
  v = static_cast<T>(u);
  return true;
}

}  // namespace

StreamReader::StreamReader(const std::string& path, bool verify_strict)
    : in_(nullptr), seekable_(path != "-"), verify_strict_(verify_strict) {
  if (path == "-") {
    in_ = &std::cin;
  } else {
    file_ = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*file_) throw std::runtime_error("cannot open stream file '" + path + "'");
    in_ = file_.get();
  }
  open_header();
}

StreamReader::StreamReader(std::istream& in, bool verify_strict)
    : in_(&in), seekable_(false), verify_strict_(verify_strict) {
  open_header();
}

void StreamReader::open_header() {
  if (in_->peek() == 'S') {
    char magic[4];
    in_->read(magic, 4);
    if (!*in_ || std::memcmp(magic, kBinaryMagic, 4) != 0) throw ParseError(0, "bad binary magic");
    std::uint16_t version = 0;
    std::uint8_t model = 0;
    if (!get_le(*in_, version) || version != kBinaryVersion)
      throw ParseError(0, "unsupported binary stream version");
    if (!get_le(*in_, header_.n) || !get_le(*in_, header_.m) || !get_le(*in_, header_.M) ||
        !get_le(*in_, model) || !get_le(*in_, binary_count_))
      throw ParseError(0, "truncated binary header");
    if (model > 2) throw ParseError(0, "bad model code");
    header_.model = static_cast<StreamModel>(model);
    binary_ = true;
  } else {
    while (std::getline(*in_, buf_)) {
      ++line_;
      auto t = tokens(buf_);
      if (t.empty() || t.front().front() == '#') continue;
      if (t.size() != 4 || !parse_int(t[0], header_.n) || !parse_int(t[1], header_.m) ||
          !parse_int(t[2], header_.M)) {
        throw ParseError(line_, "expected header 'n m M model'");
      }
      try {
        header_.model = parse_model(std::string(t[3]));
      } catch (const std::invalid_argument& e) {
        throw ParseError(line_, e.what());
      }
      break;
    }
    if (line_ == 0) throw ParseError(0, "empty stream file");
  }
  try {
    header_.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(line_, e.what());
  }
  header_lines_ = line_;
  if (seekable_) data_start_ = in_->tellg();
}

void StreamReader::check(const StreamUpdate& u) {
  const std::uint64_t where = binary_ ? count_ : line_;
  if (u.index >= header_.n)
    throw ParseError(where, "index " + std::to_string(u.index) + " >= n=" + std::to_string(header_.n));
  std::uint64_t mag = u.value < 0 ? static_cast<std::uint64_t>(-(u.value + 1)) + 1
                                  : static_cast<std::uint64_t>(u.value);
  if (mag > header_.M)
    throw ParseError(where, "|v|=" + std::to_string(mag) + " exceeds M=" + std::to_string(header_.M));
  if (header_.model == StreamModel::kInsertionOnly && u.value != 1)
    throw ParseError(where, "insertion-only stream requires v = +1");
  if (header_.model == StreamModel::kStrictTurnstile && verify_strict_) {
    auto& f = running_[u.index];
    f += u.value;
    if (f < 0) throw ParseError(where, "strict-turnstile frequency became negative");
  }
}

bool StreamReader::next_text(StreamUpdate& out) {
  while (std::getline(*in_, buf_)) {
    ++line_;
    auto t = tokens(buf_);
    if (t.empty() || t.front().front() == '#') continue;
    if (t.size() != 2) throw ParseError(line_, "expected 'i v'");
    if (!parse_int(t[0], out.index)) throw ParseError(line_, "index is not a nonnegative integer");
    if (!parse_int(t[1], out.value)) throw ParseError(line_, "value is not an integer");
    return true;
  }
  return false;
}

bool StreamReader::next_binary(StreamUpdate& out) {
  if (count_ >= binary_count_) return false;
  if (!get_le(*in_, out.index) || !get_le(*in_, out.value))
    throw ParseError(count_ + 1, "truncated binary record");
  return true;
}

bool StreamReader::next(StreamUpdate& out) {
  bool ok = binary_ ? next_binary(out) : next_text(out);
  if (!ok) return false;
  ++count_;
  check(out);
  return true;
}

void StreamReader::rewind() {
  if (!seekable_) throw std::logic_error("stream input is not seekable");
  in_->clear();
  in_->seekg(data_start_);
  line_ = header_lines_;
  count_ = 0;
  running_.clear();
}

std::vector<StreamUpdate> read_all(StreamReader& reader) {
  std::vector<StreamUpdate> out;
  StreamUpdate u;
  while (reader.next(u)) out.push_back(u);
  return out;
}

void write_text(std::ostream& out, const StreamHeader& h, const std::vector<StreamUpdate>& updates) {
  out << h.n << ' ' << h.m << ' ' << h.M << ' ' << to_string(h.model) << '\n';
  char buf[64];
  for (const auto& u : updates) {
    char* p = std::to_chars(buf, buf + 24, u.index).ptr;
    *p++ = ' ';
    p = std::to_chars(p, p + 24, u.value).ptr;
    *p++ = '\n';
    out.write(buf, p - buf);
  }
}

void write_binary(std::ostream& out, const StreamHeader& h, const std::vector<StreamUpdate>& updates) {
  out.write(kBinaryMagic, 4);
  put_le(out, kBinaryVersion);
  put_le(out, h.n);
  put_le(out, h.m);
  put_le(out, h.M);
  put_le(out, static_cast<std::uint8_t>(h.model));
  put_le(out, static_cast<std::uint64_t>(updates.size()));
  for (const auto& u : updates) {
    put_le(out, u.index);
    put_le(out, u.value);
  }
}

void write_stream(const std::string& path, const StreamHeader& h,
                  const std::vector<StreamUpdate>& updates, bool binary) {
  if (path == "-") {
    binary ? write_binary(std::cout, h, updates) : write_text(std::cout, h, updates);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write stream file '" + path + "'");
  binary ? write_binary(out, h, updates) : write_text(out, h, updates);
  if (!out) throw std::runtime_error("error writing stream file '" + path + "'");
}

std::string to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::kUniform:
      return "uniform";
    case GeneratorKind::kZipf:
      return "zipf";
    case GeneratorKind::kCancel:
      return "cancel";
    case GeneratorKind::kPromiseSmallL0:
      return "promise-small-l0";
  }
  return "uniform";
}

GeneratorKind parse_generator(const std::string& name) {
  if (name == "uniform") return GeneratorKind::kUniform;
  if (name == "zipf") return GeneratorKind::kZipf;
  if (name == "cancel") return GeneratorKind::kCancel;
  if (name == "promise-small-l0" || name == "promise-small-L0") return GeneratorKind::kPromiseSmallL0;
  throw std::invalid_argument("unknown generator '" + name + "'");
}

void GeneratorSpec::validate() const {
  if (n == 0 || M == 0) throw std::invalid_argument("generator: n and M must be >= 1");
  if (kind == GeneratorKind::kUniform && model == StreamModel::kTurnstile) {
    if (length == 0) throw std::invalid_argument("generator: length must be >= 1");
    return;
  }
  if (target > n) throw std::invalid_argument("generator: target exceeds universe size");
  if (kind == GeneratorKind::kCancel) {
    if (!(cancel_fraction >= 0.0 && cancel_fraction <= 1.0))
      throw std::invalid_argument("generator: cancel fraction must lie in [0,1]");
    if (model == StreamModel::kInsertionOnly)
      throw std::invalid_argument("generator: cancel streams contain deletions");
  }
  if (kind == GeneratorKind::kPromiseSmallL0 && model == StreamModel::kInsertionOnly)
    throw std::invalid_argument("generator: promise streams contain deletions");
  if (kind == GeneratorKind::kUniform && length < target)
    throw std::invalid_argument("generator: length below target distinct count");
  if (kind == GeneratorKind::kZipf && !(zipf_s > 0.0))
    throw std::invalid_argument("generator: zipf exponent must be positive");
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::vector<std::uint64_t> sample_distinct(std::uint64_t n, std::uint64_t k, SplitMix64& rng) {
  std::vector<std::uint64_t> out;
  out.reserve(k);
  if (k * 2 >= n) {
    std::vector<std::uint64_t> all(n);
    for (std::uint64_t i = 0; i < n; ++i) all[i] = i;
    for (std::uint64_t i = 0; i < k; ++i) {
      std::swap(all[i], all[i + rng.below(n - i)]);
      out.push_back(all[i]);
    }
    return out;
  }
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(k * 2);
  while (out.size() < k) {
    std::uint64_t x = rng.below(n);
    if (seen.insert(x).second) out.push_back(x);
  }
  return out;
}

std::int64_t positive_value(std::uint64_t M, SplitMix64& rng) {
  return static_cast<std::int64_t>(rng.between(1, M));
}

// Shuffle insert/delete events, then swap within each pair so the insert comes first.
std::vector<StreamUpdate> interleave(const std::vector<StreamUpdate>& inserts,
                                     const std::vector<StreamUpdate>& kept,
                                     std::size_t cancelled, SplitMix64& rng) {
  struct Event {
    std::uint32_t item;
    bool del;
  };
  std::vector<Event> events;
  events.reserve(inserts.size() + cancelled);
  for (std::uint32_t k = 0; k < inserts.size(); ++k) events.push_back({k, false});
  for (std::uint32_t k = 0; k < cancelled; ++k) events.push_back({k, true});
  shuffle(events, rng);
  std::vector<std::size_t> first(inserts.size(), SIZE_MAX);
  std::vector<StreamUpdate> out(events.size());
  for (std::size_t t = 0; t < events.size(); ++t) {
    const Event& e = events[t];
    if (e.item < cancelled) {
      if (first[e.item] == SIZE_MAX) {
        first[e.item] = t;
        out[t] = inserts[e.item];
      } else {
        out[t] = {inserts[e.item].index, -inserts[e.item].value};
      }
    } else {
      out[t] = kept[e.item - cancelled];
    }
  }
  return out;
}

}  // namespace

GeneratedStream generate(const GeneratorSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  GeneratedStream g;
  g.header.n = spec.n;
  g.header.M = spec.M;
  g.header.model = spec.model;
  auto& ups = g.updates;
  const bool unit = spec.model == StreamModel::kInsertionOnly;
  if (unit) g.header.M = 1;
  switch (spec.kind) {
    case GeneratorKind::kUniform: {
      if (spec.model == StreamModel::kTurnstile) {
        ups.reserve(spec.length);
        for (std::uint64_t t = 0; t < spec.length; ++t) {
          std::uint64_t i = rng.below(spec.n);
          auto v = static_cast<std::int64_t>(rng.below(2 * spec.M)) - static_cast<std::int64_t>(spec.M);
          if (v >= 0) ++v;
          ups.push_back({i, v});
        }
        break;
      }
      auto items = sample_distinct(spec.n, spec.target, rng);
      ups.reserve(spec.length);
      for (auto i : items) ups.push_back({i, unit ? 1 : positive_value(spec.M, rng)});
      for (std::uint64_t t = spec.target; t < spec.length && !items.empty(); ++t) {
        ups.push_back({items[rng.below(items.size())], unit ? 1 : positive_value(spec.M, rng)});
      }
      shuffle(ups, rng);
      break;
    }
    case GeneratorKind::kZipf: {
      auto items = sample_distinct(spec.n, spec.target, rng);
      double H = 0.0;
      for (std::uint64_t k = 1; k <= spec.target; ++k) H += std::pow(static_cast<double>(k), -spec.zipf_s);
      double f1 = static_cast<double>(std::max(spec.length, spec.target)) / H;
      for (std::uint64_t k = 0; k < items.size(); ++k) {
        auto f = static_cast<std::uint64_t>(
            std::max(1.0, std::floor(f1 * std::pow(static_cast<double>(k + 1), -spec.zipf_s))));
        while (f > 0) {
          std::uint64_t chunk = unit ? 1 : std::min<std::uint64_t>(f, rng.between(1, spec.M));
          ups.push_back({items[k], static_cast<std::int64_t>(chunk)});
          f -= chunk;
        }
      }
      shuffle(ups, rng);
      break;
    }
    case GeneratorKind::kCancel: {
      auto items = sample_distinct(spec.n, spec.target, rng);
      std::vector<StreamUpdate> inserts;
      inserts.reserve(items.size());
      for (auto i : items) inserts.push_back({i, positive_value(spec.M, rng)});
      auto cancelled = static_cast<std::size_t>(
          std::llround(spec.cancel_fraction * static_cast<double>(items.size())));
      std::vector<StreamUpdate> kept(inserts.begin() + cancelled, inserts.end());
      ups = interleave(inserts, kept, cancelled, rng);
      break;
    }
    case GeneratorKind::kPromiseSmallL0: {
      std::uint64_t churn = spec.length > spec.target ? (spec.length - spec.target) / 2 : 0;
      churn = std::min(churn, spec.n - spec.target);
      auto items = sample_distinct(spec.n, spec.target + churn, rng);
      std::vector<StreamUpdate> inserts;
      inserts.reserve(items.size());
      for (auto i : items) inserts.push_back({i, positive_value(spec.M, rng)});
      std::vector<StreamUpdate> kept(inserts.begin() + churn, inserts.end());
      ups = interleave(inserts, kept, churn, rng);
      break;
    }
  }
  g.header.m = std::max<std::uint64_t>(1, ups.size());
  return g;
}

void generate(const GeneratorSpec& spec, const std::string& path, bool binary) {
  auto g = generate(spec);
  write_stream(path, g.header, g.updates, binary);
}

std::vector<StreamUpdate> aggregate(const std::vector<StreamUpdate>& updates) {
  std::unordered_map<std::uint64_t, std::size_t> pos;
  std::vector<StreamUpdate> out;
  for (const auto& u : updates) {
    auto [it, fresh] = pos.try_emplace(u.index, out.size());
    if (fresh) {
      out.push_back(u);
    } else {
      out[it->second].value += u.value;
    }
  }
  std::erase_if(out, [](const StreamUpdate& u) { return u.value == 0; });
  return out;
}

}  // namespace streamnorm
