#include <gtest/gtest.h>

#include <map>

#include "hhlink/encoder.hpp"
#include "hhlink/pairgen.hpp"
#include "hhlink/synth.hpp"

using namespace hhlink;

namespace {

std::vector<EncodedProfile> encoded_corpus(std::size_t originals, std::uint64_t seed, int m = 64) {
  const auto corpus = generate_corpus(generate_roster(originals, seed), ClusterSizeDistribution::manual_match(),
                                      PatternDistribution::manual_match(), seed);
  const Encoder enc(EncoderConfig{m, 2, 2, "pairgen-test"});
  std::vector<EncodedProfile> out;
  for (const auto& p : corpus.profiles) out.push_back(enc.encode_profile(p));
  return out;
}

EncodedProfile toy(std::string id, std::uint64_t w) {
  EncodedProfile p;
  p.profile_id = std::move(id);
  p.fields.fill(BloomVector(64, w));
  return p;
}

Clustering truth_of(std::vector<std::vector<std::string>> groups) {
  std::vector<Cluster> cs;
  for (auto& g : groups) cs.push_back(Cluster{g.front(), g.front(), g, {}});
  return Clustering(std::move(cs));
}

}  // namespace

TEST(PairCount, Identities) {
  EXPECT_EQ(pair_count(16058), 128921653u);
  EXPECT_EQ(pair_count(1101), 605550u);
  EXPECT_EQ(pair_count(2), 1u);
  EXPECT_EQ(pair_count(1), 0u);
  EXPECT_EQ(pair_count(0), 0u);
  for (std::uint64_t k = 0; k <= 10000; ++k) {
    std::uint64_t sum = 0;
    if (k > 0) sum = pair_count(k - 1) + (k - 1);
    ASSERT_EQ(pair_count(k), sum) << k;
  }
}

TEST(LabelPairs, SmallExample) {
  std::vector<EncodedProfile> ps{toy("c", 0xFF), toy("a", 0xFF), toy("b", 0xFE)};
  const auto ds = label_pairs(ps, truth_of({{"a", "b"}, {"c"}}));
  ASSERT_EQ(ds.pairs.size(), 3u);
  EXPECT_EQ(ds.pairs[0].id_a, "a");
  EXPECT_EQ(ds.pairs[0].id_b, "b");
  EXPECT_EQ(ds.pairs[0].label, Label::Match);
  EXPECT_EQ(ds.pairs[1].id_a, "a");
  EXPECT_EQ(ds.pairs[1].id_b, "c");
  EXPECT_EQ(ds.pairs[1].label, Label::NonMatch);
  EXPECT_EQ(ds.pairs[2].label, Label::NonMatch);
  EXPECT_EQ(ds.positive_count(), 1u);
  EXPECT_EQ(ds.negative_count(), 2u);
}

TEST(LabelPairs, UnknownProfileInTruth) {
  std::vector<EncodedProfile> ps{toy("a", 1), toy("b", 1)};
  EXPECT_THROW(label_pairs(ps, truth_of({{"a", "z"}})), Error);
}

TEST(LabelPairs, ImplicitCountsAddUp) {
  const auto ps = encoded_corpus(300, 4);
  std::vector<std::pair<std::string, std::string>> rows;
  const auto corpus = generate_corpus(generate_roster(300, 4), ClusterSizeDistribution::manual_match(),
                                      PatternDistribution::manual_match(), 4);
  const auto full = label_pairs(ps, corpus.truth, 0.0);
  const auto floored = label_pairs(ps, corpus.truth, 0.6);
  EXPECT_EQ(full.total(), pair_count(ps.size()));
  EXPECT_EQ(floored.total(), pair_count(ps.size()));
  EXPECT_EQ(full.implicit_positive + full.implicit_negative, 0u);
  EXPECT_EQ(full.positive_count(), floored.positive_count());
  EXPECT_EQ(full.negative_count(), floored.negative_count());
  std::uint64_t expected_pos = 0;
  for (const auto& c : corpus.truth.clusters()) expected_pos += pair_count(c.size());
  EXPECT_EQ(full.positive_count(), expected_pos);
  std::size_t below_pos = 0, below_neg = 0;
  for (const auto& p : full.pairs) {
    if (p.features.d_all >= 0.6) continue;
    (p.label == Label::Match ? below_pos : below_neg)++;
  }
  EXPECT_EQ(floored.implicit_positive, below_pos);
  EXPECT_EQ(floored.implicit_negative, below_neg);
}

TEST(CompareAll, MatchesNaiveLoop) {
  const auto ps = encoded_corpus(1000, 8);
  ASSERT_GT(ps.size(), 1500u);
  auto sorted = ps;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.profile_id < b.profile_id; });
  for (double floor : {0.0, 0.5, 0.75}) {
    std::vector<CandidatePair> naive;
    for (std::size_t i = 0; i < sorted.size(); ++i)
      for (std::size_t j = i + 1; j < sorted.size(); ++j)
        if (dice_all(sorted[i], sorted[j]) >= floor) naive.push_back(make_pair(sorted[i], sorted[j]));
    const auto got = compare_all(ps, CompareOptions{floor, 1, 97});
    ASSERT_EQ(got.size(), naive.size()) << floor;
    EXPECT_TRUE(got == naive) << floor;
  }
}

TEST(CompareAll, WorkerCountAndBlockSizeDoNotChangeOutput) {
  const auto ps = encoded_corpus(500, 12);
  const auto base = compare_all(ps, CompareOptions{0.5, 1, 2048});
  for (unsigned w : {2u, 8u})
    for (std::size_t b : {std::size_t{1}, std::size_t{33}, std::size_t{4096}}) {
      EXPECT_TRUE(compare_all(ps, CompareOptions{0.5, w, b}) == base) << w << "/" << b;
    }
  auto shuffled = ps;
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_TRUE(compare_all(shuffled, CompareOptions{0.5, 8, 64}) == base);
}

TEST(CompareAll, Errors) {
  std::vector<EncodedProfile> ps{toy("a", 1), toy("b", 1)};
  ps[1].fields.fill(BloomVector(32, 1));
  try {
    compare_all(ps, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MMismatch);
  }
  std::vector<EncodedProfile> dup{toy("a", 1), toy("a", 2)};
  try {
    compare_all(dup, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateId);
  }
  EXPECT_TRUE(compare_all({}, {}).empty());
  EXPECT_TRUE(compare_all({toy("a", 1)}, {}).empty());
}

TEST(Split, StratifiedCounts) {
  LabeledDataset ds;
  for (int i = 0; i < 1000; ++i) {
    CandidatePair p;
    p.id_a = "a" + std::to_string(1000 + i);
    p.id_b = "b";
    p.label = i < 10 ? Label::Match : Label::NonMatch;
    ds.pairs.push_back(p);
  }
  const auto s = stratified_split(ds, 0.7, 1);
  EXPECT_EQ(s.train.positive_count(), 7u);
  EXPECT_EQ(s.train.negative_count(), 693u);
  EXPECT_EQ(s.test.positive_count(), 3u);
  EXPECT_EQ(s.test.negative_count(), 297u);
  const auto again = stratified_split(ds, 0.7, 1);
  EXPECT_TRUE(again.train.pairs == s.train.pairs);
  EXPECT_FALSE(stratified_split(ds, 0.7, 2).train.pairs == s.train.pairs);
  ds.implicit_positive = 5;
  ds.implicit_negative = 1000;
  const auto t = stratified_split(ds, 0.7, 1);
  EXPECT_EQ(t.train.implicit_positive + t.test.implicit_positive, 5u);
  EXPECT_EQ(t.train.implicit_negative, 700u);
  EXPECT_THROW(stratified_split(ds, 1.0, 1), Error);
}

TEST(Split, DegenerateClass) {
  LabeledDataset ds;
  CandidatePair p{"a", "b", {}, Label::NonMatch, {}};
  ds.pairs.push_back(p);
  try {
    stratified_split(ds, 0.7, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Degenerate);
  }
}

TEST(KFold, FoldSizes) {
  std::vector<bool> flags(112, false);
  for (int i = 0; i < 12; ++i) flags[static_cast<std::size_t>(i * 9)] = true;
  const auto fa = stratified_kfold(flags, 0, 0, 5, 3);
  std::vector<int> pos(5, 0), neg(5, 0);
  for (std::size_t i = 0; i < flags.size(); ++i) (flags[i] ? pos : neg)[static_cast<std::size_t>(fa.fold_of[i])]++;
  std::vector<int> sorted_pos = pos;
  std::sort(sorted_pos.rbegin(), sorted_pos.rend());
  EXPECT_EQ(sorted_pos, (std::vector<int>{3, 3, 2, 2, 2}));
  for (int n : neg) EXPECT_EQ(n, 20);

  std::vector<bool> ten(50, false);
  for (int i = 0; i < 10; ++i) ten[static_cast<std::size_t>(i)] = true;
  const auto fb = stratified_kfold(ten, 0, 0, 5, 3);
  std::vector<int> p2(5, 0);
  for (int i = 0; i < 10; ++i) p2[static_cast<std::size_t>(fb.fold_of[static_cast<std::size_t>(i)])]++;
  for (int n : p2) EXPECT_EQ(n, 2);
}

TEST(KFold, ImplicitMembersBalanced) {
  std::vector<bool> flags{true, true, true, false, false};
  const auto fa = stratified_kfold(flags, 4, 1000, 5, 1);
  std::vector<std::size_t> pos(5, 0), neg(5, 0);
  for (std::size_t i = 0; i < flags.size(); ++i) (flags[i] ? pos : neg)[static_cast<std::size_t>(fa.fold_of[i])]++;
  for (int f = 0; f < 5; ++f) {
    pos[static_cast<std::size_t>(f)] += fa.implicit_positive[static_cast<std::size_t>(f)];
    neg[static_cast<std::size_t>(f)] += fa.implicit_negative[static_cast<std::size_t>(f)];
  }
  EXPECT_LE(*std::max_element(pos.begin(), pos.end()) - *std::min_element(pos.begin(), pos.end()), 1u);
  EXPECT_LE(*std::max_element(neg.begin(), neg.end()) - *std::min_element(neg.begin(), neg.end()), 1u);
}

TEST(KFold, PartitionAndErrors) {
  LabeledDataset ds;
  for (int i = 0; i < 40; ++i) ds.pairs.push_back(CandidatePair{"a" + std::to_string(100 + i), "b", {}, i % 4 ? Label::NonMatch : Label::Match, {}});
  ds.implicit_negative = 17;
  const auto fa = stratified_kfold(ds, 5, 9);
  std::size_t held = 0, held_implicit = 0;
  for (int f = 0; f < 5; ++f) {
    const auto tr = fa.training(ds, f), ho = fa.held_out(ds, f);
    EXPECT_EQ(tr.total() + ho.total(), ds.total());
    held += ho.pairs.size();
    held_implicit += ho.implicit_negative;
  }
  EXPECT_EQ(held, ds.pairs.size());
  EXPECT_EQ(held_implicit, 17u);
  EXPECT_THROW(stratified_kfold(ds, 1, 9), Error);
  ds.pairs.resize(4);  // one positive left
  try {
    stratified_kfold(ds, 5, 9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Degenerate);
  }
}
