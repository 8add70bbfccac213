#pragma once

// Manual ground-truth workflow: serve a random anchor with its closest
// candidates, record accept/reject decisions, export truth clusters.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhlink/clustering.hpp"
#include "hhlink/csv.hpp"
#include "hhlink/encoder.hpp"
#include "hhlink/error.hpp"
#include "hhlink/rng.hpp"
#include "hhlink/similarity.hpp"

namespace hhlink {

/// Normalized first + last + zero-padded DOB, the string candidates are ranked on.
inline std::string concatenated_key(const PlainProfile& p) {
  const auto f = normalized_fields(p);
  std::string out;
  for (const auto& s : f) out += s;
  return out;
}

inline std::array<std::size_t, kFieldCount> field_edit_distances(const PlainProfile& a, const PlainProfile& b) {
  const auto fa = normalized_fields(a), fb = normalized_fields(b);
  std::array<std::size_t, kFieldCount> out{};
  for (std::size_t l = 0; l < kFieldCount; ++l) out[l] = edit_distance(fa[l], fb[l]);
  return out;
}

struct AdjudicationCandidate {
  PlainProfile profile;
  std::array<std::size_t, kFieldCount> field_distances{};
  std::size_t distance = 0;
};

struct AdjudicationTask {
  std::string task_id;
  PlainProfile anchor;
  std::vector<AdjudicationCandidate> candidates;
  std::chrono::system_clock::time_point lease_expires;
};

struct Decision {
  std::string anchor_id;
  std::set<std::string> accepted;
  std::set<std::string> rejected;
  std::string reviewer;
  std::string timestamp;
};

struct AdjudicationStats {
  std::size_t adjudicated = 0;
  std::size_t remaining = 0;
  std::size_t clusters = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;

  double accept_rate() const {
    return accepted + rejected == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(accepted + rejected);
  }
};

struct TruthExport {
  Clustering truth;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kCandidateCount = 10;

/// Top min(10, N-1) profiles by edit distance of the concatenated strings,
/// ties by profile_id. The anchor itself is excluded.
inline std::vector<AdjudicationCandidate> rank_candidates(const std::vector<PlainProfile>& corpus, std::size_t anchor,
                                                          std::size_t limit = kCandidateCount) {
  const auto key = concatenated_key(corpus[anchor]);
  std::vector<std::pair<std::size_t, std::size_t>> scored;  // (distance, index)
  scored.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (i != anchor) scored.emplace_back(edit_distance(key, concatenated_key(corpus[i])), i);
  }
  const auto n = std::min(limit, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), [&](auto x, auto y) {
    return x.first != y.first ? x.first < y.first : corpus[x.second].profile_id < corpus[y.second].profile_id;
  });
  std::vector<AdjudicationCandidate> out;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& p = corpus[scored[r].second];
    out.push_back({p, field_edit_distances(corpus[anchor], p), scored[r].first});
  }
  return out;
}

inline std::string iso_timestamp(std::chrono::system_clock::time_point t) {
  const auto secs = std::chrono::floor<std::chrono::seconds>(t);
  const auto days = std::chrono::floor<std::chrono::days>(secs);
  const std::chrono::year_month_day ymd{days};
  const std::chrono::hh_mm_ss hms{secs - days};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(hms.hours().count()), static_cast<long long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()));
  return buf;
}

/// Thread-safe service state. Decisions are appended to an NDJSON log that
/// is replayed on construction, so a restarted service resumes where it stopped.
class AdjudicationService {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  struct Options {
    std::uint64_t seed = 0;
    std::chrono::minutes lease{15};
    /// Empty keeps decisions in memory only.
    std::string log_path;
    Clock clock = [] { return std::chrono::system_clock::now(); };
  };

  AdjudicationService(std::vector<PlainProfile> corpus, Options opts)
      : corpus_(std::move(corpus)), opts_(std::move(opts)) {
    if (corpus_.size() < 2) throw Error(ErrorCode::InvalidArgument, "adjudication needs at least 2 profiles");
    std::sort(corpus_.begin(), corpus_.end(),
              [](const PlainProfile& a, const PlainProfile& b) { return a.profile_id < b.profile_id; });
    for (std::size_t i = 0; i < corpus_.size(); ++i) {
      if (!index_.emplace(corpus_[i].profile_id, i).second) {
        throw Error(ErrorCode::DuplicateId, "profile " + corpus_[i].profile_id + " appears twice");
      }
    }
    order_.resize(corpus_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(derive_seed(opts_.seed, "adjudication/anchors"));
    shuffle(std::span<std::size_t>(order_), rng);
    if (!opts_.log_path.empty()) replay();
  }

  std::size_t corpus_size() const noexcept { return corpus_.size(); }

  /// Serves the session's outstanding task, or checks out the next anchor in
  /// the seeded order that is neither decided nor leased to another session.
  AdjudicationTask next_task(const std::string& session) {
    std::lock_guard lock(mu_);
    const auto now = opts_.clock();
    for (auto& [anchor, lease] : leases_) {
      if (lease.session == session && lease.expires > now && !decided_.count(anchor)) {
        lease.expires = now + opts_.lease;
        return make_task(anchor, lease.expires);
      }
    }
    for (const auto idx : order_) {
      if (decided_.count(idx)) continue;
      const auto it = leases_.find(idx);
      if (it != leases_.end() && it->second.expires > now && it->second.session != session) continue;
      leases_[idx] = Lease{session, now + opts_.lease};
      served_.insert(idx);
      return make_task(idx, now + opts_.lease);
    }
    throw Error(ErrorCode::Exhausted, "every profile has been adjudicated or is checked out");
  }

  /// Records a decision. Resubmitting an identical decision is a no-op.
  void submit_decision(Decision d) {
    std::lock_guard lock(mu_);
    const auto it = index_.find(d.anchor_id);
    if (it == index_.end() || !served_.count(it->second)) {
      throw Error(ErrorCode::UnknownTask, "no task was served for anchor '" + d.anchor_id + "'");
    }
    check_ids(it->second, d);
    if (const auto prev = decided_.find(it->second); prev != decided_.end()) {
      const auto& old = decisions_[prev->second];
      if (old.accepted == d.accepted && old.rejected == d.rejected) return;
      throw Error(ErrorCode::InvalidIds, "anchor '" + d.anchor_id + "' was already decided differently");
    }
    if (d.timestamp.empty()) d.timestamp = iso_timestamp(opts_.clock());
    if (!opts_.log_path.empty()) append(d);
    decided_[it->second] = decisions_.size();
    decisions_.push_back(std::move(d));
    leases_.erase(it->second);
  }

  /// Anchor + accepted sets, merged transitively where they overlap.
  TruthExport export_truth() const {
    std::lock_guard lock(mu_);
    return build_truth();
  }

  AdjudicationStats stats() const {
    std::lock_guard lock(mu_);
    AdjudicationStats s;
    s.adjudicated = decisions_.size();
    s.remaining = corpus_.size() - decisions_.size();
    s.clusters = build_truth().truth.size();
    for (const auto& d : decisions_) {
      s.accepted += d.accepted.size();
      s.rejected += d.rejected.size();
    }
    return s;
  }

  std::vector<Decision> decisions() const {
    std::lock_guard lock(mu_);
    return decisions_;
  }

  static nlohmann::json decision_to_json(const Decision& d) {
    nlohmann::ordered_json j;
    j["anchor_id"] = d.anchor_id;
    j["accepted"] = std::vector<std::string>(d.accepted.begin(), d.accepted.end());
    j["rejected"] = std::vector<std::string>(d.rejected.begin(), d.rejected.end());
    j["reviewer"] = d.reviewer;
    j["timestamp"] = d.timestamp;
    return j;
  }

  static Decision decision_from_json(const nlohmann::json& j) {
    try {
      Decision d;
      d.anchor_id = j.at("anchor_id").get<std::string>();
      for (const auto& id : j.value("accepted", nlohmann::json::array())) {
        if (!d.accepted.insert(id.get<std::string>()).second) throw Error(ErrorCode::InvalidIds, "repeated id in accepted");
      }
      for (const auto& id : j.value("rejected", nlohmann::json::array())) {
        if (!d.rejected.insert(id.get<std::string>()).second) throw Error(ErrorCode::InvalidIds, "repeated id in rejected");
      }
      d.reviewer = j.value("reviewer", std::string{});
      d.timestamp = j.value("timestamp", std::string{});
      return d;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Schema, std::string("decision: ") + e.what());
    }
  }

 private:
  struct Lease {
    std::string session;
    std::chrono::system_clock::time_point expires;
  };

  AdjudicationTask make_task(std::size_t anchor, std::chrono::system_clock::time_point expires) const {
    return {corpus_[anchor].profile_id, corpus_[anchor], rank_candidates(corpus_, anchor), expires};
  }

  void check_ids(std::size_t anchor, const Decision& d) const {
    std::set<std::string> allowed;
    for (const auto& c : rank_candidates(corpus_, anchor)) allowed.insert(c.profile.profile_id);
    for (const auto& id : d.accepted) {
      if (d.rejected.count(id)) throw Error(ErrorCode::InvalidIds, id + " is both accepted and rejected");
      if (!allowed.count(id)) throw Error(ErrorCode::InvalidIds, id + " is not a candidate of this task");
    }
    for (const auto& id : d.rejected) {
      if (!allowed.count(id)) throw Error(ErrorCode::InvalidIds, id + " is not a candidate of this task");
    }
  }

  void append(const Decision& d) {
    std::ofstream out(opts_.log_path, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot append to " + opts_.log_path);
    out << decision_to_json(d).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write failed for " + opts_.log_path);
  }

  void replay() {
    std::ifstream in(opts_.log_path, std::ios::binary);
    if (!in) return;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      Decision d;
      try {
        d = decision_from_json(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, opts_.log_path + " line " + std::to_string(n) + ": " + e.what());
      }
      const auto it = index_.find(d.anchor_id);
      if (it == index_.end()) {
        throw Error(ErrorCode::UnknownProfile, opts_.log_path + " line " + std::to_string(n) + ": unknown anchor " + d.anchor_id);
      }
      check_ids(it->second, d);
      if (decided_.count(it->second)) continue;
      served_.insert(it->second);
      decided_[it->second] = decisions_.size();
      decisions_.push_back(std::move(d));
    }
  }

  TruthExport build_truth() const {
    std::vector<std::size_t> parent(corpus_.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::vector<bool> included(corpus_.size());
    std::map<std::size_t, std::string> claimed;  // profile -> first anchor that included it
    TruthExport out;
    for (const auto& d : decisions_) {
      const auto a = index_.at(d.anchor_id);
      std::vector<std::size_t> group{a};
      for (const auto& id : d.accepted) group.push_back(index_.at(id));
      for (const auto g : group) {
        const auto [it, fresh] = claimed.emplace(g, d.anchor_id);
        if (!fresh && it->second != d.anchor_id) {
          out.warnings.push_back("profile " + corpus_[g].profile_id + " appears under anchors " + it->second + " and " +
                                 d.anchor_id + "; clusters merged");
        }
        included[g] = true;
        parent[find(g)] = find(a);
      }
    }
    std::map<std::size_t, std::vector<std::string>> groups;
    for (std::size_t i = 0; i < corpus_.size(); ++i)
      if (included[i]) groups[find(i)].push_back(corpus_[i].profile_id);
    std::vector<Cluster> clusters;
    for (auto& [root, members] : groups) {
      std::sort(members.begin(), members.end());
      clusters.push_back(Cluster{members.front(), members.front(), members, {}});
    }
    out.truth = Clustering(std::move(clusters));
    return out;
  }

  std::vector<PlainProfile> corpus_;
  Options opts_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::size_t> order_;
  std::map<std::size_t, Lease> leases_;
  std::set<std::size_t> served_;
  std::map<std::size_t, std::size_t> decided_;
  std::vector<Decision> decisions_;
  mutable std::mutex mu_;
};

inline nlohmann::json profile_to_json(const PlainProfile& p) {
  nlohmann::ordered_json j;
  j["profile_id"] = p.profile_id;
  j["first_name"] = p.first_name;
  j["last_name"] = p.last_name;
  j["dob_day"] = p.dob_day;
  j["dob_month"] = p.dob_month;
  j["dob_year"] = p.dob_year;
  return j;
}

inline nlohmann::json task_to_json(const AdjudicationTask& t) {
  nlohmann::ordered_json j;
  j["task_id"] = t.task_id;
  j["anchor"] = profile_to_json(t.anchor);
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : t.candidates) {
    nlohmann::ordered_json cj;
    cj["profile"] = profile_to_json(c.profile);
    nlohmann::ordered_json fd;
    for (std::size_t l = 0; l < kFieldCount; ++l) fd[std::string(kFieldNames[l])] = c.field_distances[l];
    cj["field_distances"] = fd;
    cj["distance"] = c.distance;
    j["candidates"].push_back(cj);
  }
  j["lease_expires"] = iso_timestamp(t.lease_expires);
  return j;
}

inline nlohmann::json stats_to_json(const AdjudicationStats& s) {
  nlohmann::ordered_json j;
  j["adjudicated"] = s.adjudicated;
  j["remaining"] = s.remaining;
  j["clusters"] = s.clusters;
  j["accepted"] = s.accepted;
  j["rejected"] = s.rejected;
  j["accept_rate"] = s.accept_rate();
  return j;
}

}  // namespace hhlink
