#pragma once

// Dice coefficients over Bloom vectors and Levenshtein distance.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <string_view>
#include <vector>

#include "hhlink/bloom.hpp"
#include "hhlink/encoder.hpp"
#include "hhlink/error.hpp"

namespace hhlink {

struct FeatureVector {
  std::array<double, kFieldCount> d{};
  double d_all = 0.0;
  /// Bit l set when field l had no set bits on either side.
  std::uint8_t empty_mask = 0;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline int common_ones(const BloomVector& a, const BloomVector& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "bit vectors differ in length");
  return std::popcount(a.word() & b.word());
}

/// Dice coefficient over set bits: 2|a & b| / (|a| + |b|).
inline double dice(const BloomVector& a, const BloomVector& b) {
  const int common = common_ones(a, b);
  const int denom = a.popcount() + b.popcount();
  if (denom == 0) throw Error(ErrorCode::BothEmpty, "both vectors are all-zero");
  return 2.0 * common / denom;
}

/// Pooled Dice over all fields (sums of counts, not a mean of ratios).
inline double dice_all(const EncodedProfile& p0, const EncodedProfile& p1) {
  if (p0.m() != p1.m()) throw Error(ErrorCode::MMismatch, "profiles encoded with different m");
  int common = 0;
  int denom = 0;
  for (int l = 0; l < kFieldCount; ++l) {
    common += std::popcount(p0.fields[l].word() & p1.fields[l].word());
    denom += p0.fields[l].popcount() + p1.fields[l].popcount();
  }
  if (denom == 0) throw Error(ErrorCode::BothEmpty, "both profiles are all-zero");
  return 2.0 * common / denom;
}

/// Per-field Dice plus pooled Dice. Fields empty on both sides score 0 and are flagged.
inline FeatureVector features(const EncodedProfile& p0, const EncodedProfile& p1) {
  if (p0.m() != p1.m()) throw Error(ErrorCode::MMismatch, "profiles encoded with different m");
  FeatureVector fv;
  int common_total = 0;
  int denom_total = 0;
  for (int l = 0; l < kFieldCount; ++l) {
    const std::uint64_t a = p0.fields[l].word();
    const std::uint64_t b = p1.fields[l].word();
    const int common = std::popcount(a & b);
    const int denom = std::popcount(a) + std::popcount(b);
    common_total += common;
    denom_total += denom;
    if (denom == 0) {
      fv.d[l] = 0.0;
      fv.empty_mask |= static_cast<std::uint8_t>(1u << l);
    } else {
      fv.d[l] = 2.0 * common / denom;
    }
  }
  fv.d_all = denom_total == 0 ? 0.0 : 2.0 * common_total / denom_total;
  return fv;
}

/// Levenshtein distance with unit costs, two-row DP.
inline std::size_t edit_distance(std::string_view s, std::string_view t) {
  if (s.size() < t.size()) std::swap(s, t);
  std::vector<std::size_t> row(t.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= s.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= t.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (s[i - 1] == t[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[t.size()];
}

}  // namespace hhlink
