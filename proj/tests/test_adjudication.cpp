#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "hhlink/adjudication_http.hpp"
#include "hhlink/pairgen.hpp"
#include "hhlink/synth.hpp"

using namespace hhlink;
namespace fs = std::filesystem;

namespace {

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) t[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) t[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      t[i][j] = std::min({t[i - 1][j] + 1, t[i][j - 1] + 1, t[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
  return t[a.size()][b.size()];
}

struct FakeClock {
  std::chrono::system_clock::time_point now = std::chrono::sys_days{std::chrono::year{2024} / 3 / 1};
  AdjudicationService::Clock fn() {
    return [this] { return now; };
  }
};

std::vector<PlainProfile> small_corpus() {
  return {
      {"p1", "Geoffrey", "Smith", 14, 7, 1985}, {"p2", "Jeoffrey", "Smith", 14, 7, 1985},
      {"p3", "Geoffrey", "Smyth", 14, 7, 1985}, {"p4", "Maria", "Lopez", 2, 2, 1990},
      {"p5", "Mario", "Lopez", 2, 2, 1990},     {"p6", "Anne", "Nguyen", 30, 11, 1971},
  };
}

AdjudicationService::Options opts(FakeClock& clock, std::string log = {}) {
  AdjudicationService::Options o;
  o.seed = 7;
  o.clock = clock.fn();
  o.log_path = std::move(log);
  return o;
}

Decision decide(const AdjudicationTask& t, std::size_t accept_first) {
  Decision d;
  d.anchor_id = t.task_id;
  d.reviewer = "r";
  for (std::size_t i = 0; i < t.candidates.size(); ++i)
    (i < accept_first ? d.accepted : d.rejected).insert(t.candidates[i].profile.profile_id);
  return d;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

fs::path temp_log(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("hhlink_adj_" + name + "_" + std::to_string(::getpid()) + ".ndjson");
  fs::remove(p);
  return p;
}

}  // namespace

TEST(Ranking, TwoProfilesServeEachOther) {
  FakeClock clock;
  AdjudicationService svc({{"a", "Ann", "Lee", 1, 1, 1980}, {"b", "Anne", "Lee", 1, 1, 1980}}, opts(clock));
  const auto t = svc.next_task("s");
  ASSERT_EQ(t.candidates.size(), 1u);
  EXPECT_NE(t.candidates[0].profile.profile_id, t.task_id);
  EXPECT_EQ(t.candidates[0].distance, 1u);
  EXPECT_EQ(t.candidates[0].field_distances[0], 1u);
  EXPECT_EQ(code_of([&] { AdjudicationService({{"a", "x", "y", 1, 1, 1980}}, opts(clock)); }),
            ErrorCode::InvalidArgument);
}

TEST(Ranking, ExactDuplicateRanksFirst) {
  auto corpus = generate_roster(200, 3);
  auto dup = corpus[17];
  dup.profile_id = "zz-dup";
  corpus.push_back(dup);
  const auto c = rank_candidates(corpus, 17);
  ASSERT_EQ(c.size(), kCandidateCount);
  EXPECT_EQ(c[0].profile.profile_id, "zz-dup");
  EXPECT_EQ(c[0].distance, 0u);
}

TEST(Ranking, MatchesNaiveOracle) {
  const auto corpus = generate_roster(1000, 8);
  for (std::size_t anchor : {0u, 1u, 250u, 999u}) {
    std::vector<std::pair<std::size_t, std::string>> all;
    const auto key = concatenated_key(corpus[anchor]);
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (i != anchor) all.emplace_back(levenshtein(key, concatenated_key(corpus[i])), corpus[i].profile_id);
    std::sort(all.begin(), all.end());
    const auto got = rank_candidates(corpus, anchor);
    ASSERT_EQ(got.size(), 10u);
    for (std::size_t r = 0; r < got.size(); ++r) {
      EXPECT_EQ(got[r].distance, all[r].first);
      EXPECT_EQ(got[r].profile.profile_id, all[r].second);
    }
  }
}

TEST(Workflow, AcceptTwoGivesThreeProfileCluster) {
  FakeClock clock;
  AdjudicationService svc(small_corpus(), opts(clock));
  const auto t = svc.next_task("s");
  svc.submit_decision(decide(t, 2));
  const auto ex = svc.export_truth();
  ASSERT_EQ(ex.truth.size(), 1u);
  EXPECT_EQ(ex.truth[0].size(), 3u);
  EXPECT_TRUE(ex.truth.contains(t.task_id));
  EXPECT_TRUE(ex.warnings.empty());
  const auto s = svc.stats();
  EXPECT_EQ(s.adjudicated, 1u);
  EXPECT_EQ(s.remaining, 5u);
  EXPECT_EQ(s.accepted, 2u);
  EXPECT_EQ(s.rejected, 3u);
  EXPECT_DOUBLE_EQ(s.accept_rate(), 0.4);
}

TEST(Workflow, RejectAllGivesSingletonAndResubmitIsIdempotent) {
  FakeClock clock;
  AdjudicationService svc(small_corpus(), opts(clock));
  const auto t = svc.next_task("s");
  const auto d = decide(t, 0);
  svc.submit_decision(d);
  svc.submit_decision(d);
  EXPECT_EQ(svc.decisions().size(), 1u);
  const auto ex = svc.export_truth();
  ASSERT_EQ(ex.truth.size(), 1u);
  EXPECT_EQ(ex.truth[0].members, std::vector<std::string>{t.task_id});
  EXPECT_EQ(code_of([&] { svc.submit_decision(decide(t, 1)); }), ErrorCode::InvalidIds);
}

TEST(Workflow, Errors) {
  FakeClock clock;
  AdjudicationService svc(small_corpus(), opts(clock));
  EXPECT_EQ(code_of([&] { svc.submit_decision(Decision{"p1", {}, {}, "r", ""}); }), ErrorCode::UnknownTask);
  EXPECT_EQ(code_of([&] { svc.submit_decision(Decision{"nope", {}, {}, "r", ""}); }), ErrorCode::UnknownTask);
  const auto t = svc.next_task("s");
  EXPECT_EQ(code_of([&] { svc.submit_decision(Decision{t.task_id, {t.task_id}, {}, "r", ""}); }), ErrorCode::InvalidIds);
  const auto c0 = t.candidates[0].profile.profile_id;
  EXPECT_EQ(code_of([&] { svc.submit_decision(Decision{t.task_id, {c0}, {c0}, "r", ""}); }), ErrorCode::InvalidIds);
  EXPECT_EQ(code_of([] { AdjudicationService::decision_from_json({{"anchor_id", "a"}, {"accepted", {"x", "x"}}}); }),
            ErrorCode::InvalidIds);
  EXPECT_EQ(code_of([] { AdjudicationService::decision_from_json({{"accepted", {"x"}}}); }), ErrorCode::Schema);

  for (int i = 0; i < 6; ++i) {
    const auto next = i == 0 ? t : svc.next_task("s");
    svc.submit_decision(decide(next, 0));
  }
  EXPECT_EQ(code_of([&] { svc.next_task("s"); }), ErrorCode::Exhausted);
  EXPECT_EQ(svc.stats().remaining, 0u);
}

TEST(Leases, SessionsDoNotCollideUntilExpiry) {
  FakeClock clock;
  AdjudicationService svc(small_corpus(), opts(clock));
  const auto a = svc.next_task("A");
  EXPECT_EQ(svc.next_task("A").task_id, a.task_id);
  const auto b = svc.next_task("B");
  EXPECT_NE(a.task_id, b.task_id);
  clock.now += std::chrono::minutes(14);
  EXPECT_NE(svc.next_task("C").task_id, a.task_id);
  // A's lease was refreshed at 0 minutes; at 16 it has lapsed and another session may take it.
  clock.now += std::chrono::minutes(2);
  const auto c2 = svc.next_task("D");
  EXPECT_EQ(c2.task_id, a.task_id);
  // The original session can still submit its served task.
  svc.submit_decision(decide(a, 0));
  EXPECT_NE(svc.next_task("D").task_id, a.task_id);
}

TEST(Leases, OrderIsSeeded) {
  FakeClock clock;
  std::vector<std::string> x, y;
  AdjudicationService s1(small_corpus(), opts(clock)), s2(small_corpus(), opts(clock));
  for (int i = 0; i < 6; ++i) {
    x.push_back(s1.next_task("s" + std::to_string(i)).task_id);
    y.push_back(s2.next_task("s" + std::to_string(i)).task_id);
  }
  EXPECT_EQ(x, y);
  EXPECT_EQ(std::set<std::string>(x.begin(), x.end()).size(), 6u);
}

TEST(Log, ReplayResumes) {
  const auto log = temp_log("replay");
  FakeClock clock;
  std::vector<Decision> made;
  {
    AdjudicationService svc(small_corpus(), opts(clock, log.string()));
    for (std::size_t i = 0; i < 3; ++i) {
      auto d = decide(svc.next_task("s"), i % 2 ? 1 : 0);
      svc.submit_decision(d);
    }
    made = svc.decisions();
  }
  AdjudicationService again(small_corpus(), opts(clock, log.string()));
  const auto replayed = again.decisions();
  ASSERT_EQ(replayed.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(replayed[i].anchor_id, made[i].anchor_id);
    EXPECT_EQ(replayed[i].accepted, made[i].accepted);
    EXPECT_EQ(replayed[i].timestamp, "2024-03-01T00:00:00Z");
  }
  std::set<std::string> done;
  for (const auto& d : made) done.insert(d.anchor_id);
  for (int i = 0; i < 3; ++i) {
    const auto t = again.next_task("s");
    EXPECT_FALSE(done.count(t.task_id));
    again.submit_decision(decide(t, 0));
  }
  EXPECT_EQ(code_of([&] { again.next_task("s"); }), ErrorCode::Exhausted);
  fs::remove(log);
}

TEST(Log, CorruptLineIsReported) {
  const auto log = temp_log("corrupt");
  {
    std::ofstream(log) << "{not json\n";
  }
  FakeClock clock;
  EXPECT_EQ(code_of([&] { AdjudicationService(small_corpus(), opts(clock, log.string())); }), ErrorCode::Parse);
  {
    std::ofstream(log) << R"({"anchor_id":"ghost","accepted":[],"rejected":[]})" << '\n';
  }
  EXPECT_EQ(code_of([&] { AdjudicationService(small_corpus(), opts(clock, log.string())); }), ErrorCode::UnknownProfile);
  fs::remove(log);
}

TEST(Export, OverlapMergesWithWarning) {
  FakeClock clock;
  AdjudicationService svc(small_corpus(), opts(clock));
  // Accept the closest candidate for every anchor: overlapping groups must merge.
  for (int i = 0; i < 6; ++i) svc.submit_decision(decide(svc.next_task("s"), 1));
  const auto ex = svc.export_truth();
  EXPECT_FALSE(ex.warnings.empty());
  EXPECT_EQ(ex.truth.profile_count(), 6u);
  EXPECT_TRUE(ex.truth.find("p1") == ex.truth.find("p2"));
  EXPECT_TRUE(ex.truth.find("p4") == ex.truth.find("p5"));
  for (const auto& c : ex.truth.clusters()) EXPECT_EQ(c.id, *std::min_element(c.members.begin(), c.members.end()));
}

TEST(Export, FeedsLabelPairs) {
  FakeClock clock;
  AdjudicationService svc(small_corpus(), opts(clock));
  for (int i = 0; i < 6; ++i) {
    const auto t = svc.next_task("s");
    Decision d{t.task_id, {}, {}, "r", ""};
    for (const auto& c : t.candidates)
      (c.distance <= 2 ? d.accepted : d.rejected).insert(c.profile.profile_id);
    svc.submit_decision(d);
  }
  const auto csv_text = io::format_truth(svc.export_truth().truth);
  const auto truth = io::parse_truth(csv::Table("export", csv_text, {"cluster_id", "profile_id"}));
  EXPECT_EQ(truth, svc.export_truth().truth);
  const EncoderConfig cfg{64, 2, 2, "adjudication-key"};
  std::vector<EncodedProfile> enc;
  for (const auto& p : small_corpus()) enc.push_back(encode_profile(p, cfg));
  const auto ds = label_pairs(enc, truth);
  std::uint64_t expected = 0;
  for (const auto& c : truth.clusters()) expected += pair_count(c.size());
  EXPECT_EQ(ds.positive_count(), expected);
  EXPECT_EQ(ds.total(), pair_count(6));
  EXPECT_GE(expected, 4u);  // {p1,p2,p3} and {p4,p5}
}

TEST(Http, RoundTrip) {
  FakeClock clock;
  AdjudicationService svc(small_corpus(), opts(clock));
  httplib::Server server;
  std::vector<std::string> warnings;
  register_adjudication_routes(server, svc, [&](const std::string& w) { warnings.push_back(w); });
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto r = cli.Get("/api/next-task");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  r = cli.Get("/api/next-task?session=web");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const auto task = nlohmann::json::parse(r->body);
  EXPECT_EQ(task["candidates"].size(), 5u);
  EXPECT_TRUE(task["candidates"][0]["field_distances"].contains("first"));
  EXPECT_EQ(task["lease_expires"], "2024-03-01T00:15:00Z");

  nlohmann::json body{{"anchor_id", task["task_id"]},
                      {"accepted", {task["candidates"][0]["profile"]["profile_id"]}},
                      {"rejected", nlohmann::json::array()},
                      {"reviewer", "web"}};
  r = cli.Post("/api/decision", body.dump(), "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  r = cli.Post("/api/decision", "{", "application/json");
  EXPECT_EQ(r->status, 400);
  r = cli.Post("/api/decision", R"({"anchor_id":"p6x"})", "application/json");
  EXPECT_EQ(r->status, 404);
  EXPECT_EQ(nlohmann::json::parse(r->body)["error"], "E_UNKNOWN_TASK");
  body["accepted"] = {task["task_id"]};
  r = cli.Post("/api/decision", body.dump(), "application/json");
  EXPECT_EQ(r->status, 422);

  r = cli.Get("/api/stats");
  const auto stats = nlohmann::json::parse(r->body);
  EXPECT_EQ(stats["adjudicated"], 1);
  EXPECT_EQ(stats["accepted"], 1);
  r = cli.Get("/api/export");
  ASSERT_EQ(r->status, 200);
  const auto exported = io::parse_truth(csv::Table("http", r->body, {"cluster_id", "profile_id"}));
  EXPECT_EQ(exported.profile_count(), 2u);

  for (int i = 0; i < 5; ++i) svc.submit_decision(decide(svc.next_task("other"), 0));
  r = cli.Get("/api/next-task?session=web");
  EXPECT_EQ(r->status, 410);
  server.stop();
  th.join();
}
