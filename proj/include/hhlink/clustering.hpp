#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "hhlink/error.hpp"

namespace hhlink {

/// One latent person: a set of profile IDs.
struct Cluster {
  std::string id;
  /// Designated center; equals `id` for clusters produced by the clustering algorithms.
  std::string center;
  /// Sorted member IDs.
  std::vector<std::string> members;
  /// Member-to-center confidence aligned with `members`; the center carries 1.0.
  /// Empty for ground-truth clusters.
  std::vector<double> confidence;

  std::size_t size() const noexcept { return members.size(); }
  bool contains(const std::string& profile) const { return std::binary_search(members.begin(), members.end(), profile); }

  friend bool operator==(const Cluster&, const Cluster&) = default;
};

/// A partition of profile IDs into clusters, kept sorted by cluster id.
class Clustering {
 public:
  Clustering() = default;
  explicit Clustering(std::vector<Cluster> clusters) : clusters_(std::move(clusters)) { finalize(); }

  const std::vector<Cluster>& clusters() const noexcept { return clusters_; }
  std::size_t size() const noexcept { return clusters_.size(); }
  std::size_t profile_count() const noexcept { return owner_.size(); }

  /// Index of the cluster holding `profile`, or npos.
  std::size_t find(const std::string& profile) const {
    const auto it = owner_.find(profile);
    return it == owner_.end() ? npos : it->second;
  }
  bool contains(const std::string& profile) const { return owner_.count(profile) != 0; }

  const Cluster& operator[](std::size_t i) const { return clusters_[i]; }

  /// Builds a ground-truth style clustering from (cluster_id, profile_id) rows.
  static Clustering from_assignments(const std::vector<std::pair<std::string, std::string>>& rows) {
    std::map<std::string, std::vector<std::string>> grouped;
    for (const auto& [cluster_id, profile_id] : rows) grouped[cluster_id].push_back(profile_id);
    std::vector<Cluster> clusters;
    clusters.reserve(grouped.size());
    for (auto& [id, members] : grouped) {
      Cluster c;
      c.id = id;
      c.center = std::find(members.begin(), members.end(), id) != members.end() ? id : std::string{};
      c.members = std::move(members);
      clusters.push_back(std::move(c));
    }
    return Clustering(std::move(clusters));
  }

  /// Every profile in its own cluster.
  static Clustering singletons(std::vector<std::string> profiles) {
    std::sort(profiles.begin(), profiles.end());
    std::vector<Cluster> clusters;
    clusters.reserve(profiles.size());
    for (auto& p : profiles) clusters.push_back(Cluster{p, p, {p}, {1.0}});
    return Clustering(std::move(clusters));
  }

  /// Rows (cluster_id, profile_id) sorted by cluster then profile.
  std::vector<std::pair<std::string, std::string>> assignments() const {
    std::vector<std::pair<std::string, std::string>> rows;
    rows.reserve(owner_.size());
    for (const auto& c : clusters_)
      for (const auto& m : c.members) rows.emplace_back(c.id, m);
    return rows;
  }

  friend bool operator==(const Clustering& a, const Clustering& b) { return a.clusters_ == b.clusters_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  void finalize() {
    for (auto& c : clusters_) {
      if (c.members.empty()) throw Error(ErrorCode::InvalidArgument, "cluster " + c.id + " has no members");
      if (c.confidence.empty()) {
        std::sort(c.members.begin(), c.members.end());
      } else {
        if (c.confidence.size() != c.members.size()) {
          throw Error(ErrorCode::InvalidArgument, "cluster " + c.id + " confidence/member size mismatch");
        }
        std::vector<std::size_t> order(c.members.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](auto x, auto y) { return c.members[x] < c.members[y]; });
        std::vector<std::string> members;
        std::vector<double> conf;
        for (auto i : order) {
          members.push_back(std::move(c.members[i]));
          conf.push_back(c.confidence[i]);
        }
        c.members = std::move(members);
        c.confidence = std::move(conf);
      }
    }
    std::sort(clusters_.begin(), clusters_.end(), [](const Cluster& a, const Cluster& b) { return a.id < b.id; });
    owner_.clear();
    for (std::size_t i = 0; i < clusters_.size(); ++i) {
      if (i > 0 && clusters_[i].id == clusters_[i - 1].id) {
        throw Error(ErrorCode::DuplicateId, "cluster id " + clusters_[i].id + " appears twice");
      }
      for (const auto& m : clusters_[i].members) {
        if (!owner_.emplace(m, i).second) {
          throw Error(ErrorCode::DuplicateId, "profile " + m + " appears in more than one cluster");
        }
      }
    }
  }

  std::vector<Cluster> clusters_;
  std::unordered_map<std::string, std::size_t> owner_;
};

}  // namespace hhlink
