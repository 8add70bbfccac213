#pragma once

// Synthetic duplicated corpus generation with ground truth.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "hhlink/clustering.hpp"
#include "hhlink/encoder.hpp"
#include "hhlink/error.hpp"
#include "hhlink/rng.hpp"
#include "hhlink/roster_names.hpp"
#include "hhlink/similarity.hpp"

namespace hhlink {

inline constexpr int kMinBirthYear = 1900;
inline constexpr int kMaxBirthYear = 2024;

/// Discrete distribution over cluster sizes.
struct ClusterSizeDistribution {
  std::vector<int> sizes;
  std::vector<double> probabilities;

  void validate() const {
    if (sizes.empty() || sizes.size() != probabilities.size()) throw Error(ErrorCode::BadDist, "size/probability mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      if (sizes[i] < 1) throw Error(ErrorCode::BadDist, "cluster sizes must be >= 1");
      if (!(probabilities[i] >= 0.0 && probabilities[i] <= 1.0)) throw Error(ErrorCode::BadDist, "probability out of range");
      total += probabilities[i];
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::BadDist, "probabilities sum to " + std::to_string(total));
  }

  /// Manually matched cluster sizes (60, 96, 53, 34, 29 of 326 for sizes 1-5,
  /// 54 of 326 above 5). The >5 mass is spread over sizes 6-10 with
  /// geometric decay `tail_ratio`.
  static ClusterSizeDistribution manual_match(double tail_ratio = 0.8) {
    ClusterSizeDistribution d;
    const std::array<int, 5> counts = {60, 96, 53, 34, 29};
    constexpr double kTotal = 326.0;
    for (int s = 1; s <= 5; ++s) {
      d.sizes.push_back(s);
      d.probabilities.push_back(counts[static_cast<std::size_t>(s - 1)] / kTotal);
    }
    double norm = 0.0;
    for (int s = 6; s <= 10; ++s) norm += std::pow(tail_ratio, s - 6);
    for (int s = 6; s <= 10; ++s) {
      d.sizes.push_back(s);
      d.probabilities.push_back(54.0 / kTotal * std::pow(tail_ratio, s - 6) / norm);
    }
    return d;
  }

  static ClusterSizeDistribution point_mass(int size) { return {{size}, {1.0}}; }
};

struct ErrorPattern {
  /// Edit distances for (first, last, day, month, year).
  std::array<int, kFieldCount> distances{};
  double probability = 0.0;

  bool identical() const {
    return std::all_of(distances.begin(), distances.end(), [](int d) { return d == 0; });
  }
};

struct PatternDistribution {
  std::vector<ErrorPattern> patterns;

  void validate() const {
    if (patterns.empty()) throw Error(ErrorCode::BadDist, "empty pattern distribution");
    double total = 0.0;
    bool has_identity = false;
    for (const auto& p : patterns) {
      if (p.probability < 0.0) throw Error(ErrorCode::BadDist, "negative pattern probability");
      for (int d : p.distances)
        if (d < 0) throw Error(ErrorCode::BadDist, "negative edit distance in pattern");
      total += p.probability;
      has_identity = has_identity || p.identical();
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::BadDist, "pattern probabilities sum to " + std::to_string(total));
    if (!has_identity) throw Error(ErrorCode::BadDist, "pattern (0,0,0,0,0) missing");
  }

  /// The ten most common manually matched error patterns (counts out of 775)
  /// with the remaining 186/775 spread uniformly over `remainder_patterns()`.
  static PatternDistribution manual_match() {
    struct Row {
      int count;
      std::array<int, kFieldCount> d;
    };
    const std::array<Row, 10> top = {{{417, {0, 0, 0, 0, 0}},
                                      {30, {0, 1, 0, 0, 0}},
                                      {29, {3, 0, 0, 0, 0}},
                                      {21, {1, 0, 0, 0, 0}},
                                      {19, {0, 0, 1, 0, 0}},
                                      {17, {0, 5, 0, 0, 0}},
                                      {16, {0, 2, 0, 0, 0}},
                                      {16, {4, 0, 0, 0, 0}},
                                      {12, {0, 0, 0, 0, 1}},
                                      {12, {6, 0, 0, 0, 0}}}};
    PatternDistribution dist;
    int used = 0;
    for (const auto& row : top) {
      dist.patterns.push_back({row.d, row.count / 775.0});
      used += row.count;
    }
    const auto rest = remainder_patterns();
    const double each = (775 - used) / 775.0 / static_cast<double>(rest.size());
    for (const auto& d : rest) dist.patterns.push_back({d, each});
    return dist;
  }

  /// Patterns outside the published top ten that share the leftover mass.
  static std::vector<std::array<int, kFieldCount>> remainder_patterns() {
    return {{2, 0, 0, 0, 0}, {5, 0, 0, 0, 0}, {0, 3, 0, 0, 0}, {0, 4, 0, 0, 0}, {0, 6, 0, 0, 0},
            {0, 0, 2, 0, 0}, {0, 0, 0, 1, 0}, {0, 0, 0, 0, 2}, {1, 1, 0, 0, 0}, {0, 0, 1, 1, 0}};
  }
};

/// One cluster size per original, i.i.d.
inline std::vector<int> sample_cluster_sizes(std::size_t n_originals, const ClusterSizeDistribution& dist,
                                             std::uint64_t seed) {
  if (n_originals == 0) throw Error(ErrorCode::InvalidArgument, "need at least one original");
  dist.validate();
  std::vector<double> cumulative(dist.probabilities.size());
  std::partial_sum(dist.probabilities.begin(), dist.probabilities.end(), cumulative.begin());
  Rng rng(derive_seed(seed, "cluster-sizes"));
  std::vector<int> sizes(n_originals);
  for (auto& s : sizes) s = dist.sizes[sample_discrete(rng, cumulative)];
  return sizes;
}

namespace detail {

inline char random_letter(Rng& rng) { return static_cast<char>('a' + uniform_index(rng, 26)); }

/// Applies exactly `distance` random edits (insert/delete/substitute with
/// equal likelihood) and retries until the Levenshtein distance is exact.
inline std::string corrupt_name(const std::string& name, int distance, Rng& rng) {
  if (distance == 0) return name;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::string s = name;
    for (int e = 0; e < distance; ++e) {
      int op = static_cast<int>(uniform_index(rng, 3));
      if (s.size() <= 1 && op == 1) op = s.empty() ? 0 : 2;
      if (op == 0) {
        s.insert(s.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng, s.size() + 1)), random_letter(rng));
      } else if (op == 1) {
        s.erase(s.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng, s.size())));
      } else {
        const auto pos = uniform_index(rng, s.size());
        char c;
        do {
          c = random_letter(rng);
        } while (c == s[pos]);
        s[pos] = c;
      }
    }
    if (!s.empty() && edit_distance(name, s) == static_cast<std::size_t>(distance)) return s;
  }
  throw Error(ErrorCode::PatternInfeasible, "could not reach edit distance " + std::to_string(distance));
}

inline std::vector<int> values_at_distance(int current, int width, int lo, int hi, int distance) {
  std::vector<int> out;
  const std::string cur = render_number(current, width);
  for (int v = lo; v <= hi; ++v) {
    if (edit_distance(cur, render_number(v, width)) == static_cast<std::size_t>(distance)) out.push_back(v);
  }
  return out;
}

}  // namespace detail

/// A duplicate of `original` whose normalized per-field edit distances equal
/// the pattern exactly. DOB components stay a valid calendar date.
inline PlainProfile corrupt(const PlainProfile& original, const ErrorPattern& pattern, std::string new_id, Rng& rng) {
  validate(original);
  PlainProfile dup = original;
  dup.profile_id = std::move(new_id);
  dup.first_name = detail::corrupt_name(normalize_field(original.first_name), pattern.distances[0], rng);
  dup.last_name = detail::corrupt_name(normalize_field(original.last_name), pattern.distances[1], rng);

  const int dd = pattern.distances[2], dm = pattern.distances[3], dy = pattern.distances[4];
  if (dd == 0 && dm == 0 && dy == 0) return dup;
  const auto days = dd == 0 ? std::vector<int>{original.dob_day} : detail::values_at_distance(original.dob_day, 2, 1, 31, dd);
  const auto months =
      dm == 0 ? std::vector<int>{original.dob_month} : detail::values_at_distance(original.dob_month, 2, 1, 12, dm);
  const auto years = dy == 0 ? std::vector<int>{original.dob_year}
                             : detail::values_at_distance(original.dob_year, 4, kMinBirthYear, kMaxBirthYear, dy);
  if (days.empty() || months.empty() || years.empty()) {
    throw Error(ErrorCode::PatternInfeasible, "no valid date of birth at the requested distances");
  }
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const int d = days[uniform_index(rng, days.size())];
    const int m = months[uniform_index(rng, months.size())];
    const int y = years[uniform_index(rng, years.size())];
    if (is_valid_date(y, m, d)) {
      dup.dob_day = d;
      dup.dob_month = m;
      dup.dob_year = y;
      return dup;
    }
  }
  throw Error(ErrorCode::PatternInfeasible, "no valid date of birth at the requested distances");
}

/// Per-field edit distances between the normalized fields of two profiles.
inline std::array<int, kFieldCount> field_distances(const PlainProfile& a, const PlainProfile& b) {
  const auto fa = normalized_fields(a);
  const auto fb = normalized_fields(b);
  std::array<int, kFieldCount> out{};
  for (int l = 0; l < kFieldCount; ++l) out[l] = static_cast<int>(edit_distance(fa[l], fb[l]));
  return out;
}

struct SynthStats {
  std::size_t originals = 0;
  std::size_t profiles = 0;
  std::size_t duplicates = 0;
  /// Realized cluster-size counts keyed by size.
  std::map<int, std::size_t> size_counts;
  /// Realized pattern counts over duplicates.
  std::map<std::array<int, kFieldCount>, std::size_t> pattern_counts;

  double singleton_share() const {
    const auto it = size_counts.find(1);
    return originals == 0 || it == size_counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(originals);
  }
  double identical_share() const {
    const auto it = pattern_counts.find({0, 0, 0, 0, 0});
    return duplicates == 0 || it == pattern_counts.end() ? 0.0
                                                          : static_cast<double>(it->second) / static_cast<double>(duplicates);
  }
};

struct SyntheticCorpus {
  std::vector<PlainProfile> profiles;
  Clustering truth;
  /// Pattern drawn for each duplicate, keyed by duplicate profile ID.
  std::map<std::string, std::array<int, kFieldCount>> drawn_patterns;
  SynthStats stats;
};

inline std::string duplicate_id(const std::string& original_id, int index) {
  return original_id + "-d" + std::to_string(index);
}

/// Emits each original plus (size - 1) independently corrupted duplicates.
/// Each original uses its own seed derived from the master seed.
inline SyntheticCorpus generate_corpus(const std::vector<PlainProfile>& originals, const ClusterSizeDistribution& size_dist,
                                       const PatternDistribution& pattern_dist, std::uint64_t seed,
                                       int max_pattern_retries = 20) {
  pattern_dist.validate();
  {
    std::set<std::string> ids;
    for (const auto& o : originals) {
      validate(o);
      if (normalize_field(o.first_name).empty() || normalize_field(o.last_name).empty()) {
        throw Error(ErrorCode::InvalidArgument, "original " + o.profile_id + " has an empty name field");
      }
      if (!ids.insert(o.profile_id).second) throw Error(ErrorCode::DuplicateId, "duplicate original " + o.profile_id);
    }
  }
  const auto sizes = sample_cluster_sizes(originals.size(), size_dist, seed);
  std::vector<double> cumulative;
  for (const auto& p : pattern_dist.patterns) cumulative.push_back((cumulative.empty() ? 0.0 : cumulative.back()) + p.probability);

  SyntheticCorpus out;
  std::vector<std::pair<std::string, std::string>> rows;
  out.stats.originals = originals.size();
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const auto& o = originals[i];
    Rng rng(derive_seed(seed, 1000003ULL + i));
    out.profiles.push_back(o);
    rows.emplace_back(o.profile_id, o.profile_id);
    ++out.stats.size_counts[sizes[i]];
    for (int d = 1; d < sizes[i]; ++d) {
      const std::string id = duplicate_id(o.profile_id, d);
      for (int attempt = 0;; ++attempt) {
        const auto& pattern = pattern_dist.patterns[sample_discrete(rng, cumulative)];
        try {
          out.profiles.push_back(corrupt(o, pattern, id, rng));
          out.drawn_patterns[id] = pattern.distances;
          ++out.stats.pattern_counts[pattern.distances];
          break;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::PatternInfeasible || attempt + 1 >= max_pattern_retries) throw;
        }
      }
      rows.emplace_back(o.profile_id, id);
    }
  }
  out.truth = Clustering::from_assignments(rows);
  if (out.truth.profile_count() != out.profiles.size()) {
    throw Error(ErrorCode::DuplicateId, "generated profile IDs collide with original IDs");
  }
  out.stats.profiles = out.profiles.size();
  out.stats.duplicates = out.profiles.size() - originals.size();
  return out;
}

/// Bundled roster of unique plausible originals ("rec-000000", ...).
inline std::vector<PlainProfile> generate_roster(std::size_t n, std::uint64_t seed, int min_year = 1935,
                                                 int max_year = 2005) {
  Rng rng(derive_seed(seed, "roster"));
  std::set<std::tuple<std::string_view, std::string_view, int, int, int>> seen;
  std::vector<PlainProfile> out;
  out.reserve(n);
  std::size_t guard = 0;
  while (out.size() < n) {
    if (++guard > 100 * n + 1000) throw Error(ErrorCode::InvalidArgument, "roster too large for the bundled name lists");
    const auto first = roster_names::kFirst[uniform_index(rng, roster_names::kFirst.size())];
    const auto last = roster_names::kLast[uniform_index(rng, roster_names::kLast.size())];
    const int year = static_cast<int>(uniform_int(rng, min_year, max_year));
    const int month = static_cast<int>(uniform_int(rng, 1, 12));
    int day;
    do {
      day = static_cast<int>(uniform_int(rng, 1, 31));
    } while (!is_valid_date(year, month, day));
    if (!seen.emplace(first, last, day, month, year).second) continue;
    PlainProfile p;
    p.profile_id = "rec-" + render_number(static_cast<int>(out.size()), 6);
    p.first_name = std::string(first);
    p.last_name = std::string(last);
    p.dob_day = day;
    p.dob_month = month;
    p.dob_year = year;
    out.push_back(std::move(p));
  }
  return out;
}

struct PatternRow {
  std::array<int, kFieldCount> distances{};
  std::size_t count = 0;
  double share = 0.0;
  /// Mean per-field Dice over the duplicates with this pattern.
  std::array<double, kFieldCount> mean_dice{};
};

struct ValidationReport {
  std::size_t originals = 0;
  std::size_t duplicates = 0;
  std::map<int, std::size_t> size_counts;
  /// Pattern table sorted by descending count, then pattern.
  std::vector<PatternRow> patterns;
  double singleton_share = 0.0;
  double identical_share = 0.0;
  double singleton_divergence = 0.0;
  double identical_divergence = 0.0;
};

/// Recomputes cluster sizes and (edit distance, Dice) pattern tables from
/// scratch. Each duplicate is compared with its cluster's original, i.e. the
/// member whose profile_id equals the cluster id.
inline ValidationReport validate_corpus(const std::vector<PlainProfile>& corpus, const Clustering& truth,
                                        const EncoderConfig& cfg, double target_singleton = 848.0 / 4750.0,
                                        double target_identical = 6039.0 / 11308.0) {
  const Encoder encoder(cfg);
  std::map<std::string, const PlainProfile*> by_id;
  for (const auto& p : corpus) by_id[p.profile_id] = &p;
  ValidationReport report;
  std::map<std::array<int, kFieldCount>, std::pair<std::size_t, std::array<double, kFieldCount>>> table;
  for (const auto& c : truth.clusters()) {
    ++report.originals;
    ++report.size_counts[static_cast<int>(c.size())];
    const auto orig_it = by_id.find(c.id);
    if (orig_it == by_id.end()) throw Error(ErrorCode::UnknownProfile, "cluster " + c.id + " has no original profile");
    const auto enc_orig = encoder.encode_profile(*orig_it->second);
    for (const auto& m : c.members) {
      if (m == c.id) continue;
      const auto it = by_id.find(m);
      if (it == by_id.end()) throw Error(ErrorCode::UnknownProfile, "unknown profile " + m);
      const auto dist = field_distances(*orig_it->second, *it->second);
      const auto fv = features(enc_orig, encoder.encode_profile(*it->second));
      auto& [count, sums] = table[dist];
      ++count;
      for (int l = 0; l < kFieldCount; ++l) sums[l] += fv.d[l];
      ++report.duplicates;
    }
  }
  for (const auto& [dist, entry] : table) {
    PatternRow row;
    row.distances = dist;
    row.count = entry.first;
    row.share = static_cast<double>(entry.first) / static_cast<double>(report.duplicates);
    for (int l = 0; l < kFieldCount; ++l) row.mean_dice[l] = entry.second[l] / static_cast<double>(entry.first);
    report.patterns.push_back(row);
  }
  std::stable_sort(report.patterns.begin(), report.patterns.end(),
                   [](const PatternRow& a, const PatternRow& b) { return a.count > b.count; });
  report.singleton_share =
      report.originals == 0 ? 0.0 : static_cast<double>(report.size_counts[1]) / static_cast<double>(report.originals);
  const auto ident = table.find({0, 0, 0, 0, 0});
  report.identical_share = ident == table.end() || report.duplicates == 0
                               ? 0.0
                               : static_cast<double>(ident->second.first) / static_cast<double>(report.duplicates);
  report.singleton_divergence = report.singleton_share - target_singleton;
  report.identical_divergence = report.identical_share - target_identical;
  return report;
}

}  // namespace hhlink
