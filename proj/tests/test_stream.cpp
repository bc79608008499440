#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <streambuf>
#include <unistd.h>

#include "streamnorm/oracles.hpp"
#include "streamnorm/stream.hpp"

using namespace streamnorm;

namespace {

std::vector<StreamUpdate> parse(const std::string& text, bool strict = false) {
  std::istringstream in(text);
  StreamReader r(in, strict);
  return read_all(r);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         ("streamnorm_" + std::to_string(::getpid()) + "_" + name);
}

// Produces "header" then `count` synthetic update lines without storing them.
class SyntheticText : public std::streambuf {
 public:
  explicit SyntheticText(std::uint64_t count) : remaining_(count) {
    line_ = "1000000 " + std::to_string(count) + " 100 turnstile\n";
    setg(line_.data(), line_.data(), line_.data() + line_.size());
  }

 protected:
  int_type underflow() override {
    if (gptr() < egptr()) return traits_type::to_int_type(*gptr());
    if (remaining_ == 0) return traits_type::eof();
    block_.clear();
    for (int k = 0; k < 4096 && remaining_ > 0; ++k, --remaining_) {
      state_ = state_ * 6364136223846793005ull + 1442695040888963407ull;
      block_ += std::to_string((state_ >> 33) % 1000000);
      block_ += (state_ & 1) ? " 7\n" : " -3\n";
    }
    setg(block_.data(), block_.data(), block_.data() + block_.size());
    return traits_type::to_int_type(*gptr());
  }

 private:
  std::uint64_t remaining_;
  std::uint64_t state_ = 1;
  std::string line_;
  std::string block_;
};

long resident_kb() {
  std::ifstream f("/proc/self/statm");
  long size = 0, resident = 0;
  f >> size >> resident;
  return resident * (::sysconf(_SC_PAGESIZE) / 1024);
}

}  // namespace

TEST(StreamParse, HeaderAndUpdate) {
  std::istringstream in("3 10 5 turnstile\n0 -2\n");
  StreamReader r(in);
  EXPECT_EQ(r.header().n, 3u);
  EXPECT_EQ(r.header().m, 10u);
  EXPECT_EQ(r.header().M, 5u);
  EXPECT_EQ(r.header().model, StreamModel::kTurnstile);
  StreamUpdate u;
  ASSERT_TRUE(r.next(u));
  EXPECT_EQ(u, (StreamUpdate{0, -2}));
  EXPECT_FALSE(r.next(u));
}

TEST(StreamParse, CommentsAndBlankLines) {
  auto ups = parse("# test\n3 10 5 strict-turnstile\n\n# x\n1 4\n  2   1  \n");
  ASSERT_EQ(ups.size(), 2u);
  EXPECT_EQ(ups[1], (StreamUpdate{2, 1}));
}

TEST(StreamParse, Rejections) {
  EXPECT_THROW(parse("3 10 5 turnstile\n0 9\n"), ParseError);
  EXPECT_THROW(parse("3 10 5 turnstile\n3 1\n"), ParseError);
  EXPECT_THROW(parse("3 10 5 turnstile\n1 x\n"), ParseError);
  EXPECT_THROW(parse("3 10 5 turnstile\n1 2 3\n"), ParseError);
  EXPECT_THROW(parse("3 10 5 insertion-only\n1 2\n"), ParseError);
  EXPECT_THROW(parse("3 10 5 sometimes\n"), ParseError);
  EXPECT_THROW(parse("0 10 5 turnstile\n"), ParseError);
  EXPECT_THROW(parse("3 10 5 strict-turnstile\n1 2\n1 -3\n", true), ParseError);
  EXPECT_NO_THROW(parse("3 10 5 strict-turnstile\n1 2\n1 -3\n", false));
  try {
    parse("3 10 5 turnstile\n0 1\n0 9\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(StreamFormat, TextAndBinaryRoundTrip) {
  GeneratorSpec g;
  g.kind = GeneratorKind::kUniform;
  g.model = StreamModel::kTurnstile;
  g.n = 500;
  g.length = 2000;
  g.M = 50;
  g.seed = 3;
  auto gen = generate(g);
  for (bool binary : {false, true}) {
    auto path = temp_path(binary ? "rt.bin" : "rt.txt");
    write_stream(path.string(), gen.header, gen.updates, binary);
    StreamReader r(path.string());
    EXPECT_EQ(r.binary(), binary);
    EXPECT_EQ(r.header(), gen.header);
    EXPECT_EQ(read_all(r), gen.updates);
    ASSERT_TRUE(r.seekable());
    r.rewind();
    EXPECT_EQ(read_all(r), gen.updates);
    std::filesystem::remove(path);
  }
}

TEST(StreamFormat, CallerStreamIsNotRewindable) {
  std::istringstream in("3 10 5 turnstile\n0 1\n");
  StreamReader r(in);
  EXPECT_FALSE(r.seekable());
  read_all(r);
  EXPECT_THROW(r.rewind(), std::logic_error);
}

TEST(Generator, DeterministicPerSeed) {
  GeneratorSpec g;
  g.kind = GeneratorKind::kZipf;
  g.model = StreamModel::kInsertionOnly;
  g.n = 10000;
  g.target = 300;
  g.length = 5000;
  g.seed = 9;
  EXPECT_EQ(generate(g).updates, generate(g).updates);
  auto other = g;
  other.seed = 10;
  EXPECT_NE(generate(g).updates, generate(other).updates);
}

TEST(Generator, CancelAll) {
  GeneratorSpec g;
  g.kind = GeneratorKind::kCancel;
  g.n = 10000;
  g.target = 800;
  g.M = 20;
  g.cancel_fraction = 1.0;
  auto s = exact_stats(generate(g).updates);
  EXPECT_EQ(s.L0(), 0u);
  EXPECT_EQ(s.F0(), 800u);
}

TEST(Generator, CancelHalfKeepsSurvivors) {
  GeneratorSpec g;
  g.kind = GeneratorKind::kCancel;
  g.n = 10000;
  g.target = 800;
  g.M = 20;
  g.cancel_fraction = 0.5;
  auto gen = generate(g);
  EXPECT_EQ(exact_stats(gen.updates).L0(), 400u);
  std::map<std::uint64_t, std::int64_t> running;
  for (const auto& u : gen.updates) ASSERT_GE(running[u.index] += u.value, 0);
}

TEST(Generator, UniformDistinctTarget) {
  GeneratorSpec g;
  g.kind = GeneratorKind::kUniform;
  g.model = StreamModel::kInsertionOnly;
  g.n = 100000;
  g.target = 1000;
  g.length = 7000;
  auto gen = generate(g);
  EXPECT_EQ(gen.updates.size(), 7000u);
  EXPECT_EQ(exact_stats(gen.updates).F0(), 1000u);
  for (const auto& u : gen.updates) ASSERT_EQ(u.value, 1);
  g.target = 200000;
  EXPECT_THROW(generate(g), std::invalid_argument);
}

TEST(Generator, ZipfMonotoneByRank) {
  GeneratorSpec g;
  g.kind = GeneratorKind::kZipf;
  g.model = StreamModel::kInsertionOnly;
  g.n = 100000;
  g.target = 500;
  g.length = 20000;
  g.zipf_s = 1.2;
  auto s = exact_stats(generate(g).updates);
  EXPECT_EQ(s.F0(), 500u);
  std::vector<std::int64_t> freq;
  for (auto [i, f] : s.frequencies()) freq.push_back(f);
  std::sort(freq.rbegin(), freq.rend());
  double H = 0;
  for (int k = 1; k <= 500; ++k) H += std::pow(k, -1.2);
  for (int k = 0; k < 500; ++k) {
    auto expect = static_cast<std::int64_t>(std::max(1.0, std::floor(20000 / H * std::pow(k + 1, -1.2))));
    EXPECT_EQ(freq[k], expect) << "rank " << k + 1;
  }
}

TEST(Generator, PromiseSmallL0) {
  GeneratorSpec g;
  g.kind = GeneratorKind::kPromiseSmallL0;
  g.n = 100000;
  g.target = 40;
  g.length = 10000;
  g.M = 10;
  auto gen = generate(g);
  auto s = exact_stats(gen.updates);
  EXPECT_EQ(s.L0(), 40u);
  EXPECT_GE(gen.updates.size(), 9000u);
}

TEST(Aggregate, NonzeroNetFrequenciesInFirstTouchOrder) {
  std::vector<StreamUpdate> ups{{5, 2}, {3, 1}, {5, -2}, {7, 4}, {3, 2}};
  std::vector<StreamUpdate> want{{3, 3}, {7, 4}};
  EXPECT_EQ(aggregate(ups), want);
}

TEST(StreamParse, ConstantMemoryOnLongStream) {
  const std::uint64_t count = 100000000;
  SyntheticText buf(count);
  std::istream in(&buf);
  StreamReader r(in);
  long before = resident_kb();
  StreamUpdate u;
  std::uint64_t seen = 0;
  long peak = before;
  while (r.next(u)) {
    if ((++seen & 0xffffff) == 0) peak = std::max(peak, resident_kb());
  }
  peak = std::max(peak, resident_kb());
  EXPECT_EQ(seen, count);
  EXPECT_LT(peak - before, 4096);
}
