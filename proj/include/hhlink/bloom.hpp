#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

#include "hhlink/error.hpp"

namespace hhlink {

/// Fixed-width Bloom filter bit vector of 32 or 64 bits.
///
/// Bit position p (0-based) is stored at integer bit (m - 1 - p), so the
/// big-endian hex rendering of the word has bit 0 as the most significant
/// bit of the first byte.
class BloomVector {
 public:
  BloomVector() = default;
  explicit BloomVector(int m) : m_(check_width(m)) {}
  BloomVector(int m, std::uint64_t word) : m_(check_width(m)), word_(word & mask(m)) {}

  int size() const noexcept { return m_; }
  std::uint64_t word() const noexcept { return word_; }

  bool test(int pos) const noexcept { return (word_ >> (m_ - 1 - pos)) & 1ULL; }
  void set(int pos) noexcept { word_ |= 1ULL << (m_ - 1 - pos); }

  int popcount() const noexcept { return std::popcount(word_); }
  bool empty() const noexcept { return word_ == 0; }

  std::string to_hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(static_cast<std::size_t>(m_ / 4), '0');
    for (int i = 0; i < m_ / 4; ++i) {
      out[static_cast<std::size_t>(i)] = kDigits[(word_ >> (m_ - 4 * (i + 1))) & 0xF];
    }
    return out;
  }

  /// Parses a lowercase/uppercase hex string of exactly m/4 digits.
  static BloomVector from_hex(std::string_view hex, int m) {
    check_width(m);
    if (hex.size() != static_cast<std::size_t>(m / 4)) {
      throw Error(ErrorCode::Parse, "hex vector has " + std::to_string(hex.size()) + " digits, expected " +
                                        std::to_string(m / 4) + " for m=" + std::to_string(m));
    }
    std::uint64_t word = 0;
    for (char c : hex) {
      int v;
      if (c >= '0' && c <= '9') v = c - '0';
      else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
      else throw Error(ErrorCode::Parse, "invalid hex digit '" + std::string(1, c) + "'");
      word = (word << 4) | static_cast<std::uint64_t>(v);
    }
    return BloomVector(m, word);
  }

  friend bool operator==(const BloomVector&, const BloomVector&) = default;

 private:
  static int check_width(int m) {
    if (m != 32 && m != 64) throw Error(ErrorCode::InvalidArgument, "bit vector length must be 32 or 64");
    return m;
  }
  static std::uint64_t mask(int m) noexcept { return m == 64 ? ~0ULL : ((1ULL << m) - 1); }

  int m_ = 64;
  std::uint64_t word_ = 0;
};

}  // namespace hhlink
