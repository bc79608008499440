#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace streamnorm {

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = sizeof(T); i-- > 0;) bytes_.push_back(raw[i]);
    } else {
      bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
    }
  }

  void put_magic(const char (&tag)[5], std::uint16_t version) {
    bytes_.insert(bytes_.end(), tag, tag + 4);
    put(version);
  }

  std::size_t size() const { return bytes_.size(); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw std::invalid_argument("truncated sketch bytes");
    unsigned char raw[sizeof(T)];
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < sizeof(T); ++i) raw[sizeof(T) - 1 - i] = bytes_[pos_ + i];
    } else {
      std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    }
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  void expect_magic(const char (&tag)[5], std::uint16_t version) {
    if (pos_ + 4 > bytes_.size() || std::memcmp(bytes_.data() + pos_, tag, 4) != 0)
      throw std::invalid_argument(std::string("bad magic, expected ") + tag);
    pos_ += 4;
    auto v = get<std::uint16_t>();
    if (v != version) throw std::invalid_argument("unsupported serialization version");
  }

  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace streamnorm
