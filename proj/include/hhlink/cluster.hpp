#pragma once

// Single-scan CENTER and MERGE-CENTER clustering over a weighted link graph.

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "hhlink/clustering.hpp"
#include "hhlink/error.hpp"

namespace hhlink {

struct LinkEdge {
  std::string id_a;
  std::string id_b;
  double weight = 0.0;

  friend bool operator==(const LinkEdge&, const LinkEdge&) = default;
};

/// Puts endpoints in canonical order and checks the weight.
inline LinkEdge make_edge(std::string a, std::string b, double weight) {
  if (a == b) throw Error(ErrorCode::InvalidArgument, "self-link on " + a);
  if (!(weight > 0.0 && weight <= 1.0)) throw Error(ErrorCode::InvalidArgument, "edge weight must be in (0, 1]");
  if (b < a) std::swap(a, b);
  return {std::move(a), std::move(b), weight};
}

/// Descending weight, then (id_a, id_b) ascending.
inline std::vector<LinkEdge> sort_edges(std::vector<LinkEdge> edges) {
  for (auto& e : edges)
    if (e.id_b < e.id_a) std::swap(e.id_a, e.id_b);
  std::sort(edges.begin(), edges.end(), [](const LinkEdge& x, const LinkEdge& y) {
    if (x.weight != y.weight) return x.weight > y.weight;
    if (x.id_a != y.id_a) return x.id_a < y.id_a;
    return x.id_b < y.id_b;
  });
  return edges;
}

enum class ClusterAlgorithm { Center, MergeCenter };

namespace detail {

/// Scan state shared by both algorithms. Node roles (center / member /
/// unassigned) evolve identically in CENTER and MERGE-CENTER; the latter
/// additionally unions the groups of centers.
class CenterScan {
 public:
  explicit CenterScan(const std::vector<std::string>& profiles) {
    ids_ = profiles;
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], i);
    role_.assign(ids_.size(), Role::Unassigned);
    center_of_.assign(ids_.size(), kNone);
    conf_.assign(ids_.size(), 1.0);
  }

  void run(const std::vector<LinkEdge>& sorted, bool merge) {
    for (const auto& e : sorted) {
      const std::size_t u = lookup(e.id_a), v = lookup(e.id_b);
      step(u, v, e.weight, merge);
    }
  }

  Clustering result() {
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (role_[i] == Role::Unassigned) {
        groups[i].push_back(i);
      } else {
        groups[find(center_of_[i])].push_back(i);
      }
    }
    std::vector<Cluster> clusters;
    clusters.reserve(groups.size());
    for (const auto& [root, members] : groups) {
      Cluster c;
      const std::size_t center = role_[root] == Role::Unassigned ? root : survivor_[root];
      c.id = ids_[center];
      c.center = ids_[center];
      for (auto m : members) {
        c.members.push_back(ids_[m]);
        c.confidence.push_back(m == center ? 1.0 : conf_[m]);
      }
      clusters.push_back(std::move(c));
    }
    return Clustering(std::move(clusters));
  }

 private:
  enum class Role { Unassigned, Center, Member };
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  std::size_t lookup(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorCode::UnknownEndpoint, "edge endpoint " + id + " is not a known profile");
    return it->second;
  }

  // Union-find over centers; each root remembers its surviving (oldest) center.
  std::size_t find(std::size_t c) {
    while (parent_.at(c) != c) {
      parent_[c] = parent_[parent_[c]];
      c = parent_[c];
    }
    return c;
  }

  void make_center(std::size_t c) {
    role_[c] = Role::Center;
    center_of_[c] = c;
    parent_[c] = c;
    created_[c] = next_created_++;
    survivor_[c] = c;
  }

  void join(std::size_t node, std::size_t center, double w) {
    role_[node] = Role::Member;
    center_of_[node] = center;
    conf_[node] = w;
  }

  /// Merges the groups of centers a and b; the older center survives. The
  /// absorbed center records the merging edge weight, which is its maximal
  /// member-center edge because edges arrive in descending order.
  void merge_groups(std::size_t a, std::size_t b, double w) {
    std::size_t ra = find(a), rb = find(b);
    if (ra == rb) return;
    if (created_[survivor_[rb]] < created_[survivor_[ra]]) std::swap(ra, rb);
    conf_[survivor_[rb]] = w;
    parent_[rb] = ra;
  }

  void step(std::size_t u, std::size_t v, double w, bool merge) {
    const Role ru = role_[u], rv = role_[v];
    if (ru == Role::Unassigned && rv == Role::Unassigned) {
      // Lexicographically smaller endpoint becomes the center; u < v by index.
      make_center(u);
      join(v, u, w);
      return;
    }
    if (ru == Role::Unassigned || rv == Role::Unassigned) {
      const std::size_t free = ru == Role::Unassigned ? u : v;
      const std::size_t other = free == u ? v : u;
      if (role_[other] == Role::Center) join(free, other, w);
      return;
    }
    if (!merge) return;
    // Both assigned: merge when one endpoint is a center of a different group.
    if (rv == Role::Center || ru == Role::Center) {
      merge_groups(center_of_[u], center_of_[v], w);
    }
  }

  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Role> role_;
  std::vector<std::size_t> center_of_;
  std::vector<double> conf_;
  std::unordered_map<std::size_t, std::size_t> parent_;
  std::unordered_map<std::size_t, std::size_t> created_;
  std::unordered_map<std::size_t, std::size_t> survivor_;
  std::size_t next_created_ = 0;
};

}  // namespace detail

/// CENTER: scan edges by descending weight. Two unassigned endpoints form a
/// new cluster centered on the smaller ID; an unassigned node adjacent to a
/// center joins it; every other edge is ignored. Leftover nodes are singletons.
inline Clustering center_cluster(const std::vector<std::string>& profiles, const std::vector<LinkEdge>& sorted_edges) {
  detail::CenterScan scan(profiles);
  scan.run(sorted_edges, false);
  return scan.result();
}

/// MERGE-CENTER: CENTER plus merging the clusters of both endpoints whenever
/// an edge joins an assigned node to the center of another cluster. The
/// earlier-created center survives; absorbed centers keep attracting
/// unassigned nodes into the merged cluster.
inline Clustering merge_center_cluster(const std::vector<std::string>& profiles,
                                       const std::vector<LinkEdge>& sorted_edges) {
  detail::CenterScan scan(profiles);
  scan.run(sorted_edges, true);
  return scan.result();
}

inline Clustering run_clustering(ClusterAlgorithm algo, const std::vector<std::string>& profiles,
                                 const std::vector<LinkEdge>& edges) {
  const auto sorted = sort_edges(edges);
  return algo == ClusterAlgorithm::Center ? center_cluster(profiles, sorted) : merge_center_cluster(profiles, sorted);
}

/// Audit-only: connected components of the link graph.
inline Clustering transitive_closure(const std::vector<std::string>& profiles, const std::vector<LinkEdge>& edges) {
  std::vector<std::string> ids = profiles;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  std::vector<std::size_t> parent(ids.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : edges) {
    const auto a = index.find(e.id_a), b = index.find(e.id_b);
    if (a == index.end() || b == index.end()) throw Error(ErrorCode::UnknownEndpoint, "unknown edge endpoint");
    const auto ra = find(a->second), rb = find(b->second);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::map<std::size_t, std::vector<std::string>> groups;
  for (std::size_t i = 0; i < ids.size(); ++i) groups[find(i)].push_back(ids[i]);
  std::vector<Cluster> clusters;
  for (auto& [root, members] : groups) clusters.push_back(Cluster{ids[root], ids[root], std::move(members), {}});
  return Clustering(std::move(clusters));
}

struct ClusterStats {
  /// Buckets "1".."5" and ">5".
  std::vector<std::pair<std::string, std::size_t>> histogram;
  std::size_t clusters = 0;
  std::size_t profiles = 0;
  /// Member-to-center confidences over non-center members.
  std::size_t confidence_count = 0;
  double confidence_mean = 0.0;
  double confidence_median = 0.0;
  double confidence_min = 0.0;

  double share(std::size_t bucket) const {
    return clusters == 0 ? 0.0 : static_cast<double>(histogram[bucket].second) / static_cast<double>(clusters);
  }
};

inline ClusterStats cluster_stats(const Clustering& c) {
  ClusterStats s;
  s.histogram = {{"1", 0}, {"2", 0}, {"3", 0}, {"4", 0}, {"5", 0}, {">5", 0}};
  std::vector<double> conf;
  for (const auto& cl : c.clusters()) {
    ++s.clusters;
    s.profiles += cl.size();
    ++s.histogram[std::min<std::size_t>(cl.size(), 6) - 1].second;
    for (std::size_t i = 0; i < cl.members.size() && i < cl.confidence.size(); ++i) {
      if (cl.members[i] != cl.center) conf.push_back(cl.confidence[i]);
    }
  }
  s.confidence_count = conf.size();
  if (!conf.empty()) {
    std::sort(conf.begin(), conf.end());
    double sum = 0;
    for (double v : conf) sum += v;
    s.confidence_mean = sum / static_cast<double>(conf.size());
    const std::size_t n = conf.size();
    s.confidence_median = n % 2 ? conf[n / 2] : (conf[n / 2 - 1] + conf[n / 2]) / 2.0;
    s.confidence_min = conf.front();
  }
  return s;
}

}  // namespace hhlink
