#pragma once

// Keyed Bloom-filter encoding of identifying fields.

#include <sodium.h>

#include <array>
#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hhlink/bloom.hpp"
#include "hhlink/error.hpp"

namespace hhlink {

inline constexpr int kFieldCount = 5;
inline constexpr std::array<std::string_view, kFieldCount> kFieldNames = {"first", "last", "day", "month", "year"};

struct PlainProfile {
  std::string profile_id;
  std::string first_name;
  std::string last_name;
  int dob_day = 1;
  int dob_month = 1;
  int dob_year = 1970;

  friend bool operator==(const PlainProfile&, const PlainProfile&) = default;
};

inline bool is_valid_date(int year, int month, int day) {
  if (year < 1000 || year > 9999) return false;
  const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                        std::chrono::day{static_cast<unsigned>(day)}};
  return month >= 1 && month <= 12 && day >= 1 && day <= 31 && ymd.ok();
}

inline void validate(const PlainProfile& p) {
  if (p.profile_id.empty()) throw Error(ErrorCode::InvalidArgument, "profile_id is empty");
  if (!is_valid_date(p.dob_year, p.dob_month, p.dob_day)) {
    throw Error(ErrorCode::InvalidArgument, "profile " + p.profile_id + " has an invalid date of birth");
  }
}

struct EncoderConfig {
  int m = 64;
  int q = 2;
  int k = 2;
  std::string key;

  void validate() const {
    if (m != 32 && m != 64) throw Error(ErrorCode::InvalidArgument, "m must be 32 or 64");
    if (q != 2) throw Error(ErrorCode::InvalidArgument, "q-gram size is fixed at 2");
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    if (key.empty()) throw Error(ErrorCode::InvalidArgument, "encoding key is empty");
  }
};

struct EncodedProfile {
  std::string profile_id;
  std::array<BloomVector, kFieldCount> fields;
  /// Bit l set when field l was empty after normalization.
  std::uint8_t empty_mask = 0;

  int m() const noexcept { return fields[0].size(); }
  bool flagged() const noexcept { return empty_mask != 0; }

  friend bool operator==(const EncodedProfile& a, const EncodedProfile& b) {
    return a.profile_id == b.profile_id && a.fields == b.fields;
  }
};

/// Lowercase, trim, and drop everything outside [a-z0-9].
inline std::string normalize_field(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) out.push_back(c);
  }
  return out;
}

/// Zero-padded rendering of a numeric DOB component.
inline std::string render_number(int value, int width) {
  std::string s = std::to_string(value);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return s;
}

/// Normalized plaintext of the five fields in canonical order.
inline std::array<std::string, kFieldCount> normalized_fields(const PlainProfile& p) {
  return {normalize_field(p.first_name), normalize_field(p.last_name), render_number(p.dob_day, 2),
          render_number(p.dob_month, 2), render_number(p.dob_year, 4)};
}

/// Boundary-padded bigrams, duplicates retained.
inline std::vector<std::string> qgrams(std::string_view s) {
  std::vector<std::string> grams;
  if (s.empty()) return grams;
  std::string padded;
  padded.reserve(s.size() + 2);
  padded.push_back('_');
  padded.append(s);
  padded.push_back('_');
  grams.reserve(padded.size() - 1);
  for (std::size_t i = 0; i + 1 < padded.size(); ++i) grams.emplace_back(padded.substr(i, 2));
  return grams;
}

/// Holds the per-field hash keys derived from the secret key, so repeated
/// encodings do not re-derive them.
class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (sodium_init() < 0) throw Error(ErrorCode::InvalidArgument, "libsodium initialisation failed");
    std::array<unsigned char, crypto_generichash_BYTES> master{};
    crypto_generichash(master.data(), master.size(), reinterpret_cast<const unsigned char*>(cfg_.key.data()),
                       cfg_.key.size(), nullptr, 0);
    for (int field = 0; field < kFieldCount; ++field) {
      for (int which = 0; which < 2; ++which) {
        const std::string label = "hhlink/bloom/field" + std::to_string(field) + "/h" + std::to_string(which + 1);
        crypto_generichash(keys_[field][which].data(), keys_[field][which].size(),
                           reinterpret_cast<const unsigned char*>(label.data()), label.size(), master.data(),
                           master.size());
      }
    }
    sodium_memzero(master.data(), master.size());
  }

  Encoder(const Encoder&) = default;
  Encoder& operator=(const Encoder&) = default;
  ~Encoder() {
    for (auto& field : keys_)
      for (auto& key : field) sodium_memzero(key.data(), key.size());
  }

  const EncoderConfig& config() const noexcept { return cfg_; }

  /// Bit positions set for one q-gram of field `field_index`.
  std::vector<int> positions(std::string_view gram, int field_index) const {
    const std::uint64_t h1 = keyed_hash(gram, field_index, 0);
    // Odd step so that, for power-of-two m, the k probes are distinct.
    const std::uint64_t h2 = keyed_hash(gram, field_index, 1) | 1ULL;
    std::vector<int> out(static_cast<std::size_t>(cfg_.k));
    const auto m = static_cast<std::uint64_t>(cfg_.m);
    for (int i = 0; i < cfg_.k; ++i) {
      out[static_cast<std::size_t>(i)] = static_cast<int>((h1 + static_cast<std::uint64_t>(i) * h2) % m);
    }
    return out;
  }

  /// Encodes an already-normalized field. Throws E_EMPTY_FIELD on empty input.
  BloomVector encode_field(std::string_view s, int field_index) const {
    if (field_index < 0 || field_index >= kFieldCount) throw Error(ErrorCode::InvalidArgument, "field index out of range");
    if (s.empty()) throw Error(ErrorCode::EmptyField, "field " + std::string(kFieldNames[field_index]) + " is empty");
    BloomVector v(cfg_.m);
    for (const auto& gram : qgrams(s)) {
      for (int pos : positions(gram, field_index)) v.set(pos);
    }
    return v;
  }

  EncodedProfile encode_profile(const PlainProfile& p) const {
    validate(p);
    EncodedProfile out;
    out.profile_id = p.profile_id;
    const auto values = normalized_fields(p);
    for (int l = 0; l < kFieldCount; ++l) {
      if (values[l].empty()) {
        out.fields[l] = BloomVector(cfg_.m);
        out.empty_mask |= static_cast<std::uint8_t>(1u << l);
      } else {
        out.fields[l] = encode_field(values[l], l);
      }
    }
    return out;
  }

 private:
  std::uint64_t keyed_hash(std::string_view gram, int field_index, int which) const {
    unsigned char out[crypto_shorthash_BYTES];
    crypto_shorthash(out, reinterpret_cast<const unsigned char*>(gram.data()), gram.size(),
                     keys_[field_index][which].data());
    std::uint64_t h = 0;
    for (int i = 7; i >= 0; --i) h = (h << 8) | out[i];
    return h;
  }

  EncoderConfig cfg_;
  std::array<std::array<std::array<unsigned char, crypto_shorthash_KEYBYTES>, 2>, kFieldCount> keys_{};
};

inline BloomVector encode_field(std::string_view s, const EncoderConfig& cfg, int field_index) {
  return Encoder(cfg).encode_field(s, field_index);
}

inline EncodedProfile encode_profile(const PlainProfile& p, const EncoderConfig& cfg) {
  return Encoder(cfg).encode_profile(p);
}

}  // namespace hhlink
