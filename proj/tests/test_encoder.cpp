#include <gtest/gtest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <set>

#include "hhlink/encoder.hpp"
#include "hhlink/rng.hpp"
#include "hhlink/synth.hpp"

using namespace hhlink;

namespace {

EncoderConfig cfg(std::string key = "test-key", int m = 64, int k = 2) { return EncoderConfig{m, 2, k, std::move(key)}; }

std::string random_string(Rng& rng, std::size_t len) {
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += static_cast<char>('a' + uniform_index(rng, 26));
  return s;
}

}  // namespace

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize_field("  Geoff "), "geoff");
  EXPECT_EQ(normalize_field("O'Neil"), "oneil");
  EXPECT_EQ(normalize_field("Mary-Jane 2nd"), "maryjane2nd");
  EXPECT_EQ(normalize_field(""), "");
  EXPECT_EQ(normalize_field(" \t-' "), "");
}

TEST(Normalize, DobZeroPadding) {
  EXPECT_EQ(render_number(7, 2), "07");
  EXPECT_EQ(render_number(3, 2), "03");
  EXPECT_EQ(render_number(1985, 4), "1985");
  PlainProfile p{"x", "A", "B", 7, 3, 1985};
  const auto f = normalized_fields(p);
  EXPECT_EQ(f[2], "07");
  EXPECT_EQ(f[3], "03");
  EXPECT_EQ(f[4], "1985");
  EXPECT_EQ(qgrams(f[2]), (std::vector<std::string>{"_0", "07", "7_"}));
}

TEST(Qgrams, Examples) {
  EXPECT_EQ(qgrams("ab"), (std::vector<std::string>{"_a", "ab", "b_"}));
  EXPECT_EQ(qgrams("07"), (std::vector<std::string>{"_0", "07", "7_"}));
  EXPECT_EQ(qgrams("geoff"), (std::vector<std::string>{"_g", "ge", "eo", "of", "ff", "f_"}));
  EXPECT_TRUE(qgrams("").empty());
  EXPECT_EQ(qgrams("a"), (std::vector<std::string>{"_a", "a_"}));
  EXPECT_EQ(qgrams("aaa").size(), 4u);
}

TEST(Config, Validation) {
  EXPECT_NO_THROW(cfg().validate());
  EXPECT_THROW(cfg("k", 48).validate(), Error);
  EXPECT_THROW(cfg("").validate(), Error);
  EXPECT_THROW(cfg("k", 64, 0).validate(), Error);
  auto c = cfg();
  c.q = 3;
  EXPECT_THROW(c.validate(), Error);
}

TEST(EncodeField, DeterministicAndBounded) {
  const Encoder enc(cfg());
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const auto s = random_string(rng, 1 + uniform_index(rng, 12));
    const auto field = static_cast<int>(uniform_index(rng, kFieldCount));
    const auto v = enc.encode_field(s, field);
    EXPECT_EQ(v, enc.encode_field(s, field));
    EXPECT_EQ(v, encode_field(s, cfg(), field));
    EXPECT_GE(v.popcount(), 1);
    EXPECT_LE(v.popcount(), static_cast<int>(qgrams(s).size()) * 2);
  }
  EXPECT_LE(enc.encode_field("ab", 0).popcount(), 6);
}

TEST(EncodeField, SetsExactlyTheDoubleHashPositions) {
  for (int m : {32, 64}) {
    for (int k : {1, 2, 3, 5}) {
      const Encoder enc(cfg("pos-key", m, k));
      const std::string s = "geoffrey";
      std::set<int> expected;
      for (const auto& g : qgrams(s)) {
        const auto pos = enc.positions(g, 0);
        ASSERT_EQ(pos.size(), static_cast<std::size_t>(k));
        for (int p : pos) {
          ASSERT_GE(p, 0);
          ASSERT_LT(p, m);
          expected.insert(p);
        }
      }
      const auto v = enc.encode_field(s, 0);
      for (int p = 0; p < m; ++p) EXPECT_EQ(v.test(p), expected.count(p) == 1) << "m=" << m << " k=" << k << " p=" << p;
    }
  }
}

TEST(EncodeField, OddStepGivesDistinctProbes) {
  const Encoder enc(cfg("probe", 64, 8));
  for (const auto& g : qgrams("thequickbrownfox")) {
    const auto pos = enc.positions(g, 1);
    EXPECT_EQ(std::set<int>(pos.begin(), pos.end()).size(), pos.size());
  }
}

TEST(EncodeField, EmptyFieldErrors) {
  const Encoder enc(cfg());
  try {
    enc.encode_field("", 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyField);
  }
}

TEST(EncodeField, DifferentKeysDiffer) {
  const Encoder a(cfg("key-one")), b(cfg("key-two"));
  Rng rng(5);
  int differ = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto s = random_string(rng, 3 + uniform_index(rng, 8));
    differ += a.encode_field(s, 0) != b.encode_field(s, 0);
  }
  EXPECT_GE(differ, 990);
}

TEST(EncodeField, FieldSpecificKeying) {
  const Encoder enc(cfg());
  int differ = 0;
  for (const char* s : {"12", "07", "smith", "anna", "1985", "01"}) {
    for (int a = 0; a < kFieldCount; ++a)
      for (int b = a + 1; b < kFieldCount; ++b) differ += enc.encode_field(s, a) != enc.encode_field(s, b);
  }
  EXPECT_GE(differ, 58);  // 60 pairs; an accidental collision is possible but rare
}

TEST(EncodeProfile, FieldIsolation) {
  const Encoder enc(cfg());
  PlainProfile a{"p1", "Geoff", "Smith", 7, 3, 1985};
  PlainProfile b = a;
  b.first_name = "Jeoff";
  const auto ea = enc.encode_profile(a), eb = enc.encode_profile(b);
  EXPECT_NE(ea.fields[0], eb.fields[0]);
  for (int l = 1; l < kFieldCount; ++l) EXPECT_EQ(ea.fields[l], eb.fields[l]);
  EXPECT_EQ(enc.encode_profile(a), encode_profile(a, cfg()));
  for (int l = 0; l < kFieldCount; ++l) {
    PlainProfile c = a;
    switch (l) {
      case 0: c.first_name = "Bob"; break;
      case 1: c.last_name = "Jones"; break;
      case 2: c.dob_day = 8; break;
      case 3: c.dob_month = 4; break;
      case 4: c.dob_year = 1986; break;
    }
    const auto ec = enc.encode_profile(c);
    for (int f = 0; f < kFieldCount; ++f) EXPECT_EQ(ec.fields[f] == ea.fields[f], f != l) << "changed " << l;
  }
}

TEST(EncodeProfile, EmptyFieldFlaggedNotFatal) {
  const Encoder enc(cfg());
  PlainProfile p{"p1", "'-", "Smith", 1, 1, 1990};
  const auto e = enc.encode_profile(p);
  EXPECT_TRUE(e.flagged());
  EXPECT_EQ(e.empty_mask, 1u);
  EXPECT_TRUE(e.fields[0].empty());
  EXPECT_FALSE(e.fields[1].empty());
}

TEST(EncodeProfile, InvalidProfileRejected) {
  const Encoder enc(cfg());
  EXPECT_THROW(enc.encode_profile(PlainProfile{"", "a", "b", 1, 1, 1990}), Error);
  EXPECT_THROW(enc.encode_profile(PlainProfile{"x", "a", "b", 30, 2, 1990}), Error);
  EXPECT_THROW(enc.encode_profile(PlainProfile{"x", "a", "b", 29, 2, 1991}), Error);
  EXPECT_NO_THROW(enc.encode_profile(PlainProfile{"x", "a", "b", 29, 2, 1992}));
}

TEST(EncodeProfile, CorpusIdsUnique) {
  const auto roster = generate_roster(4750, 3);
  const Encoder enc(cfg());
  std::set<std::string> ids;
  for (const auto& p : roster) ids.insert(enc.encode_profile(p).profile_id);
  EXPECT_EQ(ids.size(), 4750u);
}

TEST(Bloom, HexIsBigEndianBitZeroFirst) {
  BloomVector v(32);
  v.set(0);
  EXPECT_EQ(v.to_hex(), "80000000");
  v.set(31);
  EXPECT_EQ(v.to_hex(), "80000001");
  BloomVector w(64);
  w.set(4);
  EXPECT_EQ(w.to_hex(), "0800000000000000");
  EXPECT_EQ(BloomVector::from_hex("0800000000000000", 64), w);
  EXPECT_EQ(BloomVector::from_hex("80000001", 32), v);
  EXPECT_THROW(BloomVector::from_hex("800000", 32), Error);
  EXPECT_THROW(BloomVector::from_hex("8000000g", 32), Error);
}

TEST(Bloom, HexRoundTrip) {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const int m = i % 2 ? 32 : 64;
    const BloomVector v(m, rng());
    EXPECT_EQ(BloomVector::from_hex(v.to_hex(), m), v);
  }
}

// Without the key, the first probe position of a known bigram should be
// uniform over [0, m). Chi-squared goodness of fit over 10,000 keys.
TEST(KeyPrivacy, PositionsUniformAcrossKeys) {
  for (int m : {32, 64}) {
    std::vector<double> counts(static_cast<std::size_t>(m), 0.0);
    constexpr int kKeys = 10000;
    for (int k = 0; k < kKeys; ++k) {
      const Encoder enc(cfg("key-" + std::to_string(k), m));
      counts[static_cast<std::size_t>(enc.positions("ab", 0)[0])] += 1;
    }
    const double expected = static_cast<double>(kKeys) / m;
    double chi2 = 0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    const double p = boost::math::gamma_q((m - 1) / 2.0, chi2 / 2.0);
    EXPECT_GT(p, 0.01) << "m=" << m << " chi2=" << chi2;
  }
}
