#pragma once

// Shelter utilization metrics on linked data: episodes, total stays, tenure
// and shelters visited, for all persons and the top-percentile cohort.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hhlink/clustering.hpp"
#include "hhlink/error.hpp"
#include "hhlink/rng.hpp"

namespace hhlink {

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD.
inline Date parse_date(std::string_view s) {
  auto digits = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (s[i] < '0' || s[i] > '9') throw Error(ErrorCode::Parse, "bad date '" + std::string(s) + "'");
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw Error(ErrorCode::Parse, "bad date '" + std::string(s) + "'");
  const std::chrono::year_month_day ymd{std::chrono::year{digits(0, 4)},
                                        std::chrono::month{static_cast<unsigned>(digits(5, 2))},
                                        std::chrono::day{static_cast<unsigned>(digits(8, 2))}};
  if (!ymd.ok()) throw Error(ErrorCode::Parse, "invalid calendar date '" + std::string(s) + "'");
  return Date{ymd};
}

inline std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

struct StayRecord {
  std::string profile_id;
  std::string shelter_id;
  Date date;

  friend bool operator==(const StayRecord&, const StayRecord&) = default;
};

/// One (shelter, date) use by a person.
struct Stay {
  Date date;
  std::string shelter_id;

  friend auto operator<=>(const Stay&, const Stay&) = default;
  friend bool operator==(const Stay&, const Stay&) = default;
};

/// Person ID -> deduplicated stays sorted by (date, shelter).
using PersonStays = std::map<std::string, std::vector<Stay>>;

/// Maps each stay to its cluster (the person) and removes exact duplicate
/// (person, shelter, date) triples. Profiles outside the clustering are
/// their own person.
inline PersonStays merge_stays(const std::vector<StayRecord>& stays, const Clustering& clustering) {
  std::map<std::string, std::set<Stay>> grouped;
  for (const auto& s : stays) {
    const auto idx = clustering.find(s.profile_id);
    const std::string& person = idx == Clustering::npos ? s.profile_id : clustering[idx].id;
    grouped[person].insert(Stay{s.date, s.shelter_id});
  }
  PersonStays out;
  for (auto& [person, set] : grouped) out.emplace(person, std::vector<Stay>(set.begin(), set.end()));
  return out;
}

/// Per-profile view: every profile is its own person.
inline PersonStays unmerged_stays(const std::vector<StayRecord>& stays) { return merge_stays(stays, Clustering{}); }

inline constexpr int kEpisodeGapDays = 30;

struct Episode {
  std::string person_id;
  Date start;
  Date end;
  std::size_t stays = 0;

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Splits a person's stays wherever consecutive stay dates are 30 or more
/// days apart.
inline std::vector<Episode> episodes(const std::string& person_id, std::vector<Stay> stays) {
  std::sort(stays.begin(), stays.end());
  std::vector<Episode> out;
  for (const auto& s : stays) {
    if (out.empty() || (s.date - out.back().end).count() >= kEpisodeGapDays) {
      out.push_back(Episode{person_id, s.date, s.date, 0});
    }
    out.back().end = s.date;
    ++out.back().stays;
  }
  return out;
}

struct PersonUsage {
  std::string person_id;
  std::size_t total_stays = 0;
  std::int64_t tenure_days = 0;
  std::size_t shelters_visited = 0;
  std::size_t episodes = 0;

  friend bool operator==(const PersonUsage&, const PersonUsage&) = default;
};

enum class TenureMode { Exclusive, Inclusive };

/// Tenure is last - first in whole days (Exclusive) or that plus one (Inclusive).
inline PersonUsage usage(const std::string& person_id, const std::vector<Stay>& stays,
                         TenureMode mode = TenureMode::Exclusive) {
  if (stays.empty()) throw Error(ErrorCode::Empty, "person " + person_id + " has no stays");
  const std::set<Stay> unique(stays.begin(), stays.end());
  PersonUsage u;
  u.person_id = person_id;
  u.total_stays = unique.size();
  u.tenure_days = (unique.rbegin()->date - unique.begin()->date).count() + (mode == TenureMode::Inclusive ? 1 : 0);
  std::set<std::string> shelters;
  for (const auto& s : unique) shelters.insert(s.shelter_id);
  u.shelters_visited = shelters.size();
  u.episodes = episodes(person_id, std::vector<Stay>(unique.begin(), unique.end())).size();
  return u;
}

inline std::vector<PersonUsage> all_usage(const PersonStays& persons, TenureMode mode = TenureMode::Exclusive) {
  std::vector<PersonUsage> out;
  out.reserve(persons.size());
  for (const auto& [person, stays] : persons) out.push_back(usage(person, stays, mode));
  return out;
}

struct CohortRow {
  std::string metric;
  double all_mean = 0.0;
  double all_median = 0.0;
  double top_mean = 0.0;
  double top_median = 0.0;
  std::size_t top_count = 0;
  /// Smallest metric value admitted to the top cohort.
  double top_threshold = 0.0;
};

struct CohortReport {
  int percentile = 5;
  std::size_t persons = 0;
  /// Set when there were too few persons for a top cohort; top fields are then unset.
  bool too_small = false;
  std::vector<CohortRow> rows;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// v must be sorted.
inline double median_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace detail

inline constexpr std::size_t kMinCohortPersons = 20;

/// Mean/median for all persons and for the top `percentile` percent per
/// metric. The top cohort is every person whose value is at least the k-th
/// largest value, k = ceil(N * percentile / 100), so ties are included.
inline CohortReport cohort_report(const std::vector<PersonUsage>& usages, int percentile = 5) {
  if (percentile < 1 || percentile > 100) throw Error(ErrorCode::InvalidArgument, "percentile must be in [1, 100]");
  CohortReport report;
  report.percentile = percentile;
  report.persons = usages.size();
  report.too_small = usages.size() < kMinCohortPersons;
  const std::vector<std::pair<std::string, double (*)(const PersonUsage&)>> metrics = {
      {"total_stays", [](const PersonUsage& u) { return static_cast<double>(u.total_stays); }},
      {"tenure_days", [](const PersonUsage& u) { return static_cast<double>(u.tenure_days); }},
      {"shelters_visited", [](const PersonUsage& u) { return static_cast<double>(u.shelters_visited); }},
  };
  for (const auto& [name, get] : metrics) {
    CohortRow row;
    row.metric = name;
    std::vector<double> values;
    values.reserve(usages.size());
    for (const auto& u : usages) values.push_back(get(u));
    std::sort(values.begin(), values.end());
    row.all_mean = detail::mean_of(values);
    row.all_median = detail::median_of(values);
    if (!report.too_small) {
      const auto k = static_cast<std::size_t>(
          std::ceil(static_cast<double>(values.size()) * static_cast<double>(percentile) / 100.0 - 1e-9));
      row.top_threshold = values[values.size() - std::max<std::size_t>(k, 1)];
      const auto first = std::lower_bound(values.begin(), values.end(), row.top_threshold);
      const std::vector<double> top(first, values.end());
      row.top_count = top.size();
      row.top_mean = detail::mean_of(top);
      row.top_median = detail::median_of(top);
    }
    report.rows.push_back(row);
  }
  return report;
}

/// Episode stay-count -> number of episodes.
inline std::map<std::size_t, std::size_t> episode_length_histogram(const std::vector<Episode>& eps) {
  std::map<std::size_t, std::size_t> hist;
  for (const auto& e : eps) ++hist[e.stays];
  return hist;
}

inline std::vector<Episode> all_episodes(const PersonStays& persons) {
  std::vector<Episode> out;
  for (const auto& [person, stays] : persons) {
    auto eps = episodes(person, stays);
    out.insert(out.end(), eps.begin(), eps.end());
  }
  return out;
}

/// Demo shelter-use records for end-to-end runs without real data. Each
/// profile gets a few episodes of near-daily stays at a handful of shelters.
inline std::vector<StayRecord> generate_demo_stays(const std::vector<std::string>& profile_ids, std::uint64_t seed,
                                                   int shelters = 12) {
  const Date first = Date{std::chrono::year{2016} / 1 / 1};
  const Date last = Date{std::chrono::year{2021} / 12 / 31};
  const auto span = (last - first).count();
  std::vector<StayRecord> out;
  for (const auto& id : profile_ids) {
    Rng rng(derive_seed(seed, "stays/" + id));
    int episodes_left = 1;
    while (episodes_left < 8 && uniform_real(rng) < 0.35) ++episodes_left;
    const auto home = uniform_index(rng, static_cast<std::uint64_t>(shelters));
    for (int e = 0; e < episodes_left; ++e) {
      Date day = first + std::chrono::days{uniform_int(rng, 0, span)};
      // Heavy-tailed episode lengths: mostly short, occasionally very long.
      const double u = std::max(uniform_real(rng), 1e-9);
      const auto length = std::min<std::int64_t>(static_cast<std::int64_t>(std::pow(u, -0.9)), 400);
      for (std::int64_t k = 0; k < length && day <= last; ++k) {
        const auto shelter = uniform_real(rng) < 0.85 ? home : uniform_index(rng, static_cast<std::uint64_t>(shelters));
        out.push_back(StayRecord{id, "S" + std::to_string(shelter + 1), day});
        day += std::chrono::days{uniform_real(rng) < 0.9 ? 1 : uniform_int(rng, 2, 20)};
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const StayRecord& a, const StayRecord& b) {
    if (a.profile_id != b.profile_id) return a.profile_id < b.profile_id;
    if (a.date != b.date) return a.date < b.date;
    return a.shelter_id < b.shelter_id;
  });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace hhlink
