#pragma once

// Pairwise confusion-matrix metrics and cluster-level precision/recall
// against ground-truth clusters.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hhlink/clustering.hpp"
#include "hhlink/error.hpp"

namespace hhlink {

struct PairMetrics {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Set when a ratio had a zero denominator and was reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }

  /// Recomputes precision, recall and F1 from the counts.
  void finalize() {
    precision_undefined = tp + fp == 0;
    recall_undefined = tp + fn == 0;
    precision = precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    recall = recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }

  static PairMetrics from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
    PairMetrics m{tp, fp, fn, tn};
    m.finalize();
    return m;
  }

  PairMetrics& operator+=(const PairMetrics& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    finalize();
    return *this;
  }
};

inline PairMetrics pair_metrics(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
  if (predictions.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "predictions and labels differ in length");
  PairMetrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] && labels[i]) ++m.tp;
    else if (predictions[i]) ++m.fp;
    else if (labels[i]) ++m.fn;
    else ++m.tn;
  }
  m.finalize();
  return m;
}

/// Index of the estimated cluster sharing the most profiles with `g`; ties go
/// to the smaller cluster, then the smaller cluster id. nullopt when nothing
/// overlaps.
inline std::optional<std::size_t> best_overlap_map(const Cluster& g, const Clustering& estimated) {
  if (g.members.empty()) throw Error(ErrorCode::InvalidArgument, "ground-truth cluster is empty");
  std::map<std::size_t, std::size_t> overlap;
  for (const auto& m : g.members) {
    const auto idx = estimated.find(m);
    if (idx != Clustering::npos) ++overlap[idx];
  }
  std::optional<std::size_t> best;
  std::size_t best_count = 0;
  for (const auto& [idx, count] : overlap) {
    // Clusters are sorted by id, so iteration order already breaks the final tie.
    if (!best || count > best_count || (count == best_count && estimated[idx].size() < estimated[*best].size())) {
      best = idx;
      best_count = count;
    }
  }
  return best;
}

struct ClusterScore {
  std::string truth_id;
  /// Empty when no estimated cluster overlaps.
  std::string estimated_id;
  std::size_t overlap = 0;
  double precision = 0.0;
  double recall = 0.0;
};

struct ClusterMetrics {
  std::vector<ClusterScore> per_cluster;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t no_overlap = 0;
};

/// Per ground-truth cluster g with best-overlap estimate f(g):
/// precision |f(g) & g| / |f(g)|, recall |f(g) & g| / |g|; aggregates are
/// unweighted means over ground-truth clusters, F1 their harmonic mean.
inline ClusterMetrics cluster_metrics(const Clustering& truth, const Clustering& estimated) {
  ClusterMetrics out;
  double psum = 0.0, rsum = 0.0;
  for (const auto& g : truth.clusters()) {
    ClusterScore s;
    s.truth_id = g.id;
    if (const auto f = best_overlap_map(g, estimated)) {
      const auto& fc = estimated[*f];
      s.estimated_id = fc.id;
      for (const auto& m : g.members) s.overlap += fc.contains(m) ? 1 : 0;
      s.precision = static_cast<double>(s.overlap) / static_cast<double>(fc.size());
      s.recall = static_cast<double>(s.overlap) / static_cast<double>(g.size());
    } else {
      ++out.no_overlap;
    }
    psum += s.precision;
    rsum += s.recall;
    out.per_cluster.push_back(std::move(s));
  }
  if (!truth.clusters().empty()) {
    out.precision = psum / static_cast<double>(truth.size());
    out.recall = rsum / static_cast<double>(truth.size());
  }
  out.f1 = out.precision + out.recall > 0 ? 2 * out.precision * out.recall / (out.precision + out.recall) : 0.0;
  return out;
}

}  // namespace hhlink
