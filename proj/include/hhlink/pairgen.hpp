#pragma once

// Pair enumeration: parallel all-pairs comparison, ground-truth labelling,
// stratified train/test splitting and stratified k-fold assignment.

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "hhlink/clustering.hpp"
#include "hhlink/encoder.hpp"
#include "hhlink/error.hpp"
#include "hhlink/rng.hpp"
#include "hhlink/similarity.hpp"

namespace hhlink {

enum class Label : std::uint8_t { NonMatch = 0, Match = 1 };

struct CandidatePair {
  std::string id_a;
  std::string id_b;
  FeatureVector features;
  std::optional<Label> label;
  std::optional<double> confidence;

  friend bool operator==(const CandidatePair&, const CandidatePair&) = default;
};

/// Labelled pairs. Pairs whose pooled Dice fell below the emission floor are
/// not materialized; only their per-class counts are kept.
struct LabeledDataset {
  std::vector<CandidatePair> pairs;
  std::size_t implicit_positive = 0;
  std::size_t implicit_negative = 0;

  std::size_t materialized_positive() const {
    return static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.label == Label::Match; }));
  }
  std::size_t positive_count() const { return materialized_positive() + implicit_positive; }
  std::size_t negative_count() const { return pairs.size() - materialized_positive() + implicit_negative; }
  std::size_t total() const { return pairs.size() + implicit_positive + implicit_negative; }
};

constexpr std::uint64_t pair_count(std::uint64_t k) { return k < 2 ? 0 : k * (k - 1) / 2; }

struct CompareOptions {
  double floor = 0.5;
  unsigned workers = 1;
  std::size_t block_size = 2048;
};

/// Index pair into an id-sorted profile sequence, a < b.
struct PairIndex {
  std::uint32_t a;
  std::uint32_t b;
  friend bool operator==(const PairIndex&, const PairIndex&) = default;
  friend auto operator<=>(const PairIndex&, const PairIndex&) = default;
};

/// Sorts profiles by ID and rejects duplicates and mixed vector lengths.
inline void canonicalize(std::vector<EncodedProfile>& profiles) {
  std::sort(profiles.begin(), profiles.end(),
            [](const EncodedProfile& x, const EncodedProfile& y) { return x.profile_id < y.profile_id; });
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].m() != profiles[0].m()) throw Error(ErrorCode::MMismatch, "mixed bit-vector lengths in corpus");
    if (i > 0 && profiles[i].profile_id == profiles[i - 1].profile_id) {
      throw Error(ErrorCode::DuplicateId, "duplicate profile_id " + profiles[i].profile_id);
    }
  }
}

namespace detail {

struct PackedProfile {
  std::array<std::uint64_t, kFieldCount> words;
  int weight;
};

inline std::vector<PackedProfile> pack(const std::vector<EncodedProfile>& profiles) {
  std::vector<PackedProfile> packed(profiles.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    int w = 0;
    for (int l = 0; l < kFieldCount; ++l) {
      packed[i].words[l] = profiles[i].fields[l].word();
      w += profiles[i].fields[l].popcount();
    }
    packed[i].weight = w;
  }
  return packed;
}

inline double pooled_dice(const PackedProfile& x, const PackedProfile& y) {
  const int denom = x.weight + y.weight;
  if (denom == 0) return 0.0;
  int common = 0;
  for (int l = 0; l < kFieldCount; ++l) common += std::popcount(x.words[l] & y.words[l]);
  return 2.0 * common / denom;
}

}  // namespace detail

/// All index pairs (a < b) of an id-sorted corpus with pooled Dice >= floor,
/// sorted ascending. Work is split into block-pair tasks over disjoint index
/// ranges; the result does not depend on the worker count.
inline std::vector<PairIndex> compare_all_indices(const std::vector<EncodedProfile>& sorted, const CompareOptions& opts) {
  if (!(opts.floor >= 0.0 && opts.floor < 1.0)) throw Error(ErrorCode::InvalidArgument, "floor must be in [0, 1)");
  if (opts.block_size == 0) throw Error(ErrorCode::InvalidArgument, "block size must be positive");
  for (const auto& p : sorted) {
    if (p.m() != sorted.front().m()) throw Error(ErrorCode::MMismatch, "mixed bit-vector lengths in corpus");
  }
  const auto packed = detail::pack(sorted);
  const std::size_t n = sorted.size();
  const std::size_t blocks = (n + opts.block_size - 1) / opts.block_size;

  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t bi = 0; bi < blocks; ++bi)
    for (std::size_t bj = bi; bj < blocks; ++bj) tasks.emplace_back(bi, bj);

  std::vector<std::vector<PairIndex>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next.fetch_add(1); t < tasks.size(); t = next.fetch_add(1)) {
      const auto [bi, bj] = tasks[t];
      const std::size_t i0 = bi * opts.block_size, i1 = std::min(n, i0 + opts.block_size);
      const std::size_t j0 = bj * opts.block_size, j1 = std::min(n, j0 + opts.block_size);
      auto& out = results[t];
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = (bi == bj ? i + 1 : j0); j < j1; ++j) {
          if (detail::pooled_dice(packed[i], packed[j]) >= opts.floor) {
            out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
          }
        }
      }
    }
  };
  const unsigned workers = std::max(1u, opts.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::size_t total = 0;
  for (const auto& r : results) total += r.size();
  std::vector<PairIndex> merged;
  merged.reserve(total);
  for (auto& r : results) {
    merged.insert(merged.end(), r.begin(), r.end());
    r.clear();
    r.shrink_to_fit();
  }
  std::sort(merged.begin(), merged.end());
  return merged;
}

inline CandidatePair make_pair(const EncodedProfile& x, const EncodedProfile& y) {
  CandidatePair cp;
  const bool in_order = x.profile_id < y.profile_id;
  cp.id_a = in_order ? x.profile_id : y.profile_id;
  cp.id_b = in_order ? y.profile_id : x.profile_id;
  cp.features = features(x, y);
  return cp;
}

/// Emits every pair with pooled Dice >= floor, sorted by (id_a, id_b).
inline std::vector<CandidatePair> compare_all(std::vector<EncodedProfile> profiles, const CompareOptions& opts) {
  canonicalize(profiles);
  const auto indices = compare_all_indices(profiles, opts);
  std::vector<CandidatePair> out;
  out.reserve(indices.size());
  for (const auto& ix : indices) out.push_back(make_pair(profiles[ix.a], profiles[ix.b]));
  return out;
}

/// Labels every unordered pair against the ground truth. Pairs with pooled
/// Dice below `floor` are counted, not materialized; floor = 0 materializes all.
inline LabeledDataset label_pairs(std::vector<EncodedProfile> profiles, const Clustering& truth, double floor = 0.0,
                                  unsigned workers = 1, std::size_t block_size = 2048) {
  canonicalize(profiles);
  std::unordered_map<std::string, std::uint32_t> index;
  for (std::uint32_t i = 0; i < profiles.size(); ++i) index.emplace(profiles[i].profile_id, i);
  // Cluster number per profile; profiles outside the truth are their own cluster.
  std::vector<std::size_t> owner(profiles.size(), Clustering::npos);
  for (std::size_t c = 0; c < truth.size(); ++c) {
    for (const auto& m : truth[c].members) {
      const auto it = index.find(m);
      if (it == index.end()) throw Error(ErrorCode::UnknownProfile, "ground truth references unknown profile " + m);
      owner[it->second] = c;
    }
  }
  auto same = [&](std::uint32_t a, std::uint32_t b) { return owner[a] != Clustering::npos && owner[a] == owner[b]; };

  std::uint64_t positives_total = 0;
  for (const auto& c : truth.clusters()) positives_total += pair_count(c.size());

  LabeledDataset ds;
  const auto indices = compare_all_indices(profiles, CompareOptions{floor, workers, block_size});
  ds.pairs.reserve(indices.size());
  std::uint64_t positives_emitted = 0;
  for (const auto& ix : indices) {
    auto cp = make_pair(profiles[ix.a], profiles[ix.b]);
    const bool match = same(ix.a, ix.b);
    cp.label = match ? Label::Match : Label::NonMatch;
    positives_emitted += match;
    ds.pairs.push_back(std::move(cp));
  }
  const std::uint64_t all = pair_count(profiles.size());
  ds.implicit_positive = positives_total - positives_emitted;
  ds.implicit_negative = all - indices.size() - ds.implicit_positive;
  return ds;
}

namespace detail {

inline std::size_t round_fraction(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
}

inline void check_classes(const LabeledDataset& ds, std::size_t minimum) {
  for (const auto& p : ds.pairs) {
    if (!p.label) throw Error(ErrorCode::InvalidArgument, "dataset contains unlabelled pairs");
  }
  if (ds.positive_count() < minimum || ds.negative_count() < minimum) {
    throw Error(ErrorCode::Degenerate, "each class needs at least " + std::to_string(minimum) + " members (have " +
                                           std::to_string(ds.positive_count()) + " positive, " +
                                           std::to_string(ds.negative_count()) + " negative)");
  }
}

}  // namespace detail

struct Split {
  LabeledDataset train;
  LabeledDataset test;
};

/// Stratified split: per class, floor(fraction * n + 0.5) members go to train.
/// Materialized and implicit members of a class are rounded separately.
inline Split stratified_split(const LabeledDataset& ds, double train_fraction, std::uint64_t seed) {
  detail::check_classes(ds, 1);
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "train fraction must be in (0, 1)");
  }
  std::vector<bool> in_train(ds.pairs.size(), false);
  for (Label cls : {Label::NonMatch, Label::Match}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.pairs.size(); ++i)
      if (ds.pairs[i].label == cls) members.push_back(i);
    Rng rng(derive_seed(seed, cls == Label::Match ? "split/pos" : "split/neg"));
    shuffle(std::span<std::size_t>(members), rng);
    const std::size_t take = detail::round_fraction(train_fraction, members.size());
    for (std::size_t i = 0; i < take; ++i) in_train[members[i]] = true;
  }
  Split split;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) (in_train[i] ? split.train : split.test).pairs.push_back(ds.pairs[i]);
  split.train.implicit_positive = detail::round_fraction(train_fraction, ds.implicit_positive);
  split.test.implicit_positive = ds.implicit_positive - split.train.implicit_positive;
  split.train.implicit_negative = detail::round_fraction(train_fraction, ds.implicit_negative);
  split.test.implicit_negative = ds.implicit_negative - split.train.implicit_negative;
  return split;
}

struct FoldAssignment {
  int folds = 0;
  /// Fold of each materialized pair.
  std::vector<int> fold_of;
  std::vector<std::size_t> implicit_positive;
  std::vector<std::size_t> implicit_negative;

  /// Training portion for rotation `fold` (all other folds).
  LabeledDataset training(const LabeledDataset& ds, int fold) const { return select(ds, fold, false); }
  /// Held-out portion for rotation `fold`.
  LabeledDataset held_out(const LabeledDataset& ds, int fold) const { return select(ds, fold, true); }

 private:
  LabeledDataset select(const LabeledDataset& ds, int fold, bool held) const {
    LabeledDataset out;
    for (std::size_t i = 0; i < ds.pairs.size(); ++i)
      if ((fold_of[i] == fold) == held) out.pairs.push_back(ds.pairs[i]);
    for (int f = 0; f < folds; ++f) {
      if ((f == fold) != held) continue;
      out.implicit_positive += implicit_positive[static_cast<std::size_t>(f)];
      out.implicit_negative += implicit_negative[static_cast<std::size_t>(f)];
    }
    return out;
  }
};

/// Stratified k-fold assignment over per-pair class flags plus implicit
/// class counts: per class, shuffled members are dealt round-robin.
inline FoldAssignment stratified_kfold(const std::vector<bool>& is_positive, std::size_t implicit_positive,
                                       std::size_t implicit_negative, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 folds");
  const auto pos = static_cast<std::size_t>(std::count(is_positive.begin(), is_positive.end(), true));
  const std::size_t neg = is_positive.size() - pos;
  const auto minimum = static_cast<std::size_t>(folds);
  if (pos + implicit_positive < minimum || neg + implicit_negative < minimum) {
    throw Error(ErrorCode::Degenerate, "each class needs at least " + std::to_string(folds) + " members for " +
                                           std::to_string(folds) + "-fold assignment");
  }
  FoldAssignment fa;
  fa.folds = folds;
  fa.fold_of.assign(is_positive.size(), -1);
  for (bool cls : {false, true}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < is_positive.size(); ++i)
      if (is_positive[i] == cls) members.push_back(i);
    Rng rng(derive_seed(seed, cls ? "kfold/pos" : "kfold/neg"));
    shuffle(std::span<std::size_t>(members), rng);
    const auto f = static_cast<std::size_t>(folds);
    for (std::size_t i = 0; i < members.size(); ++i) fa.fold_of[members[i]] = static_cast<int>(i % f);
    // Continue the round-robin with the implicit members so per-class fold
    // sizes still differ by at most one.
    auto& implicit = cls ? fa.implicit_positive : fa.implicit_negative;
    const std::size_t count = cls ? implicit_positive : implicit_negative;
    implicit.assign(f, 0);
    for (std::size_t k = 0; k < f; ++k) implicit[(members.size() + k) % f] = count / f + (k < count % f ? 1 : 0);
  }
  return fa;
}

inline FoldAssignment stratified_kfold(const LabeledDataset& ds, int folds, std::uint64_t seed) {
  std::vector<bool> is_positive(ds.pairs.size());
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    if (!ds.pairs[i].label) throw Error(ErrorCode::InvalidArgument, "dataset contains unlabelled pairs");
    is_positive[i] = ds.pairs[i].label == Label::Match;
  }
  return stratified_kfold(is_positive, ds.implicit_positive, ds.implicit_negative, folds, seed);
}

}  // namespace hhlink
