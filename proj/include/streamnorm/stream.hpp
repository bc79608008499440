#pragma once

#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace streamnorm {

enum class StreamModel { kTurnstile, kStrictTurnstile, kInsertionOnly };

std::string to_string(StreamModel model);
StreamModel parse_model(const std::string& name);

struct StreamUpdate {
  std::uint64_t index = 0;
  std::int64_t value = 0;

  bool operator==(const StreamUpdate&) const = default;
};

struct StreamHeader {
  std::uint64_t n = 1;
  std::uint64_t m = 1;
  std::uint64_t M = 1;
  StreamModel model = StreamModel::kTurnstile;

  void validate() const;
  bool operator==(const StreamHeader&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::uint64_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::uint64_t line() const { return line_; }

 private:
  std::uint64_t line_;
};

// Text format: a header line "n m M model" followed by one "i v" per line.
// Binary format: "SNBS", u16 version, n, m, M, u8 model, u64 count, then
// count records of (u64 i, i64 v), all little-endian.
class StreamReader {
 public:
  // Path "-" reads standard input (not rewindable).
  explicit StreamReader(const std::string& path, bool verify_strict = false);
  // Reads from a caller-owned stream.
  explicit StreamReader(std::istream& in, bool verify_strict = false);

  const StreamHeader& header() const { return header_; }
  bool binary() const { return binary_; }
  bool next(StreamUpdate& out);
  bool seekable() const { return seekable_; }
  void rewind();
  std::uint64_t updates_read() const { return count_; }

 private:
  void open_header();
  bool next_text(StreamUpdate& out);
  bool next_binary(StreamUpdate& out);
  void check(const StreamUpdate& u);

  std::unique_ptr<std::ifstream> file_;
  std::istream* in_;
  bool seekable_;
  bool verify_strict_;
  StreamHeader header_;
  bool binary_ = false;
  std::uint64_t binary_count_ = 0;
  std::streampos data_start_{};
  std::uint64_t line_ = 0;
  std::uint64_t header_lines_ = 0;
  std::uint64_t count_ = 0;
  std::string buf_;
  std::unordered_map<std::uint64_t, std::int64_t> running_;
};

std::vector<StreamUpdate> read_all(StreamReader& reader);

void write_text(std::ostream& out, const StreamHeader& h, const std::vector<StreamUpdate>& updates);
void write_binary(std::ostream& out, const StreamHeader& h, const std::vector<StreamUpdate>& updates);
void write_stream(const std::string& path, const StreamHeader& h,
                  const std::vector<StreamUpdate>& updates, bool binary = false);

enum class GeneratorKind { kUniform, kZipf, kCancel, kPromiseSmallL0 };

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::kUniform;
  StreamModel model = StreamModel::kTurnstile;
  std::uint64_t n = 1000;
  // Distinct items for uniform/zipf (insertion-only), inserted items for
  // cancel, surviving support for promise-small-L0. Ignored by turnstile uniform.
  std::uint64_t target = 100;
  std::uint64_t length = 1000;
  std::uint64_t M = 1;
  double zipf_s = 1.2;
  double cancel_fraction = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

std::string to_string(GeneratorKind kind);
GeneratorKind parse_generator(const std::string& name);

struct GeneratedStream {
  StreamHeader header;
  std::vector<StreamUpdate> updates;
};

GeneratedStream generate(const GeneratorSpec& spec);
void generate(const GeneratorSpec& spec, const std::string& path, bool binary = false);

// Net frequency per index, in first-touch order. Feeding these as single
// updates yields the same linear-sketch state as the full stream.
std::vector<StreamUpdate> aggregate(const std::vector<StreamUpdate>& updates);

}  // namespace streamnorm
