// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include <chrono>
#include <cstdio>
#include <functional>
#include <thread>

#include "hhlink/evaluate.hpp"
#include "hhlink/hhsc_metrics.hpp"
#include "hhlink/pairgen.hpp"
#include "hhlink/synth.hpp"
#include "hhlink/tuner.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"

using namespace hhlink;
using namespace hhlink::oracle;

namespace {

// Pinned tolerances and targets.
constexpr int kOracleTrials = 10000;
constexpr std::size_t kMaxStringLength = 20;
constexpr int kGradInstances = 25;
constexpr double kSingletonTarget = 17.85, kSingletonTolerance = 2.0;
constexpr double kIdenticalTarget = 53.40, kIdenticalTolerance = 3.0;
constexpr std::size_t kOriginals = 4750;
constexpr double kBeta = 0.75;
constexpr double kTrainFraction = 0.7;
constexpr double kMinPrecision = 0.90, kMinF1 = 0.85;
constexpr double kPairFloor = 0.5;
constexpr int kMinClusterGraphs = 1000;
constexpr int kCoarseningTrials = 500;
constexpr int kHhscInstances = 1000;
constexpr std::size_t kPipelineOriginals = 1000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome pair_counts() {
  const bool a = pair_count(16058) == 128921653ULL;
  const bool b = pair_count(1101) == 605550ULL;
  return {a && b, fmt("pair_count(16058)=%llu pair_count(1101)=%llu", static_cast<unsigned long long>(pair_count(16058)),
                      static_cast<unsigned long long>(pair_count(1101)))};
}

Outcome dice_oracle() {
  Rng rng(2);
  std::size_t mismatches = 0, checked = 0;
  for (int m : {32, 64}) {
    for (int i = 0; i < kOracleTrials; ++i) {
      const auto a = random_vector(rng, m), b = random_vector(rng, m);
      const int denom = naive_weight(a) + naive_weight(b);
      if (denom > 0) mismatches += dice(a, b) != 2.0 * naive_common(a, b) / denom;
      const auto p0 = random_profile(rng, m), p1 = random_profile(rng, m);
      int common = 0, total = 0;
      for (int l = 0; l < kFieldCount; ++l) {
        common += naive_common(p0.fields[l], p1.fields[l]);
        total += naive_weight(p0.fields[l]) + naive_weight(p1.fields[l]);
      }
      if (total > 0) mismatches += dice_all(p0, p1) != 2.0 * common / total;
      checked += 2;
    }
  }
  return {mismatches == 0, fmt("%zu comparisons at m=32,64, %zu mismatches", checked, mismatches)};
}

Outcome edit_oracle() {
  Rng rng(3);
  std::size_t mismatches = 0;
  for (int i = 0; i < kOracleTrials; ++i) {
    const int alphabet = i % 3 == 0 ? 3 : 26;
    const auto s = random_string(rng, kMaxStringLength, alphabet), t = random_string(rng, kMaxStringLength, alphabet);
    mismatches += edit_distance(s, t) != dp_edit_distance(s, t);
  }
  const auto geoff = edit_distance("Geoff", "Jeoff");
  return {mismatches == 0 && geoff == 1, fmt("%d pairs, %zu mismatches, Geoff/Jeoff=%zu", kOracleTrials, mismatches, geoff)};
}

Outcome gradient_checks() {
  double worst_lr = 0, worst_mlp15 = 0, worst_mlp103 = 0;
  Rng rng(4);
  for (int i = 0; i < kGradInstances; ++i) {
    worst_lr = std::max({worst_lr, lr_gradient_error(rng, Penalty::L2), lr_gradient_error(rng, Penalty::L1)});
    // NaN (no usable draw) must fail, so compare through !(x < worst).
    for (auto [hidden, worst] : {std::pair{std::vector<int>{15}, &worst_mlp15}, std::pair{std::vector<int>{10, 3}, &worst_mlp103}}) {
      const double e = mlp_gradient_error(rng, hidden);
      if (!(e <= *worst)) *worst = std::isnan(e) ? std::numeric_limits<double>::infinity() : e;
    }
  }
  const bool pass = worst_lr < kGradTolerance && worst_mlp15 < kGradTolerance && worst_mlp103 < kGradTolerance;
  return {pass, fmt("max relative error: LR %.2e, MLP(15) %.2e, MLP(10,3) %.2e over %d instances each (tol %.0e)", worst_lr,
                    worst_mlp15, worst_mlp103, kGradInstances, kGradTolerance)};
}

Outcome corpus_fidelity() {
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto c = generate_corpus(generate_roster(kOriginals, seed), ClusterSizeDistribution::manual_match(),
                                   PatternDistribution::manual_match(), seed);
    const double single = c.stats.singleton_share() * 100, ident = c.stats.identical_share() * 100;
    std::map<std::string, const PlainProfile*> by_id;
    for (const auto& p : c.profiles) by_id[p.profile_id] = &p;
    std::size_t wrong = 0;
    for (const auto& cl : c.truth.clusters())
      for (const auto& m : cl.members)
        if (m != cl.id) wrong += field_distances(*by_id.at(cl.id), *by_id.at(m)) != c.drawn_patterns.at(m);
    pass = pass && std::abs(single - kSingletonTarget) <= kSingletonTolerance &&
           std::abs(ident - kIdenticalTarget) <= kIdenticalTolerance && wrong == 0;
    detail += fmt("seed %llu: singleton %.2f%% identical %.2f%% pattern mismatches %zu; ",
                  static_cast<unsigned long long>(seed), single, ident, wrong);
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

Outcome end_to_end() {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = 2024;
  const auto corpus = generate_corpus(generate_roster(kOriginals, seed), ClusterSizeDistribution::manual_match(),
                                      PatternDistribution::manual_match(), seed);
  const Encoder encoder(EncoderConfig{64, 2, 2, "acceptance-linkage-key"});
  std::vector<EncodedProfile> encoded;
  for (const auto& p : corpus.profiles) encoded.push_back(encoder.encode_profile(p));
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  // Every pair is compared; those below the floor are counted, which is
  // exact for a threshold model with beta above the floor.
  const auto labeled = label_pairs(encoded, corpus.truth, kPairFloor, workers);
  const auto split = stratified_split(labeled, kTrainFraction, seed);
  const auto test = TrainingData::from(split.test);
  ThresholdModel model;
  model.beta = kBeta;
  const auto m = score(Model{model}, test);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {m.precision >= kMinPrecision && m.f1 >= kMinF1,
          fmt("%zu profiles, %llu comparisons, test tp=%llu fp=%llu fn=%llu: precision %.4f recall %.4f F1 %.4f "
              "(%u workers, %.0f s)",
              encoded.size(), static_cast<unsigned long long>(pair_count(encoded.size())),
              static_cast<unsigned long long>(m.tp), static_cast<unsigned long long>(m.fp),
              static_cast<unsigned long long>(m.fn), m.precision, m.recall, m.f1, workers, secs)};
}

Outcome clustering_oracle() {
  Rng rng(7);
  std::size_t graphs = 0, mismatches = 0;
  const auto check = [&](const std::vector<std::string>& nodes, const std::vector<LinkEdge>& edges) {
    for (bool merge : {false, true}) {
      const auto got = run_clustering(merge ? ClusterAlgorithm::MergeCenter : ClusterAlgorithm::Center, nodes, edges);
      mismatches += layout_of(got) != reference_clustering(nodes, edges, merge);
    }
    ++graphs;
  };
  for (int n = 2; n <= 6; ++n) {
    const auto nodes = node_names(n);
    std::vector<std::pair<std::string, std::string>> all_pairs;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) all_pairs.emplace_back(nodes[static_cast<std::size_t>(i)], nodes[static_cast<std::size_t>(j)]);
    const int draws = n <= 5 ? 8 : 1;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << all_pairs.size()); ++mask) {
      for (int d = 0; d < draws; ++d) {
        std::vector<LinkEdge> edges;
        for (std::size_t k = 0; k < all_pairs.size(); ++k)
          if (mask >> k & 1) edges.push_back(make_edge(all_pairs[k].first, all_pairs[k].second, draw_weight(rng)));
        check(nodes, edges);
      }
    }
  }
  for (int d = 0; d < 2000; ++d) check(node_names(6), random_graph(rng, node_names(6), 0.8));

  const auto nodes = node_names(4);
  const std::vector<LinkEdge> e{make_edge("A", "B", .9), make_edge("C", "D", .8), make_edge("A", "C", .7)};
  const auto cc = run_clustering(ClusterAlgorithm::Center, nodes, e);
  const auto cmc = run_clustering(ClusterAlgorithm::MergeCenter, nodes, e);
  const bool hand = cc.size() == 2 && cc[0].members == std::vector<std::string>{"A", "B"} &&
                    cc[1].members == std::vector<std::string>{"C", "D"} && cmc.size() == 1 && cmc[0].members == nodes;
  return {mismatches == 0 && hand && graphs >= static_cast<std::size_t>(kMinClusterGraphs),
          fmt("%zu graphs on <= 6 nodes, %zu mismatches; hand example {A,B},{C,D} -> {A,B,C,D} %s", graphs, mismatches,
              hand ? "reproduced" : "differs")};
}

Outcome coarsening() {
  Rng rng(8);
  std::size_t violations = 0;
  for (int trial = 0; trial < kCoarseningTrials; ++trial) {
    const int n = 3 + static_cast<int>(uniform_index(rng, 60));
    std::vector<std::string> nodes;
    for (int i = 0; i < n; ++i) nodes.push_back("p" + std::to_string(1000 + i));
    const auto edges = random_graph(rng, nodes, uniform_real(rng, 0.01, 0.3));
    const auto cc = run_clustering(ClusterAlgorithm::Center, nodes, edges);
    const auto cmc = run_clustering(ClusterAlgorithm::MergeCenter, nodes, edges);
    violations += !is_coarsening(cc, cmc);
    const auto truth = random_truth(rng, nodes, 1 + uniform_index(rng, static_cast<std::uint64_t>(n)));
    const auto mc = cluster_metrics(truth, cc), mm = cluster_metrics(truth, cmc);
    for (std::size_t g = 0; g < truth.size(); ++g) violations += mm.per_cluster[g].recall < mc.per_cluster[g].recall;
  }
  return {violations == 0, fmt("%d random graphs, %zu violations", kCoarseningTrials, violations)};
}

Outcome cluster_metrics_check() {
  const Clustering truth({Cluster{"g", "p1", {"p1", "p2", "p3"}, {}}});
  const Clustering est({Cluster{"f", "p1", {"p1", "p2", "p9"}, {}}, Cluster{"h", "p3", {"p3"}, {}}});
  const auto m = cluster_metrics(truth, est);
  const bool example = std::abs(m.precision - 2.0 / 3) < 1e-15 && std::abs(m.recall - 2.0 / 3) < 1e-15;
  const auto id = cluster_metrics(est, est);
  const bool identity = id.precision == 1.0 && id.recall == 1.0 && id.f1 == 1.0;
  return {example && identity, fmt("example precision %.6f recall %.6f; identity (%.1f, %.1f, %.1f)", m.precision, m.recall,
                                   id.precision, id.recall, id.f1)};
}

Outcome hhsc() {
  const Date d0 = parse_date("2020-01-01");
  const auto at = [&](int day) { return Stay{d0 + std::chrono::days{day}, "A"}; };
  const bool gaps = episodes("p", {at(0), at(29)}).size() == 1 && episodes("p", {at(0), at(30)}).size() == 2;

  Rng rng(10);
  std::size_t violations = 0;
  for (int inst = 0; inst < kHhscInstances; ++inst) {
    const std::size_t n = 1 + uniform_index(rng, 12);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("p" + std::to_string(10 + i));
    std::vector<StayRecord> stays;
    for (const auto& id : ids)
      for (std::size_t k = 0, c = 1 + uniform_index(rng, 15); k < c; ++k)
        stays.push_back({id, "S" + std::to_string(uniform_index(rng, 4)), d0 + std::chrono::days{uniform_index(rng, 200)}});
    std::vector<std::pair<std::string, std::string>> rows;
    for (const auto& id : ids) rows.emplace_back("c" + std::to_string(uniform_index(rng, 1 + n / 3)), id);
    const auto clustering = Clustering::from_assignments(rows);
    const auto merged = merge_stays(stays, clustering);
    const auto unmerged = unmerged_stays(stays);

    std::set<std::tuple<std::string, std::string, Date>> triples;
    for (const auto& s : stays) triples.insert({clustering[clustering.find(s.profile_id)].id, s.shelter_id, s.date});
    std::size_t total = 0, episode_stays = 0;
    for (const auto& u : all_usage(merged)) total += u.total_stays;
    for (const auto& e : all_episodes(merged)) episode_stays += e.stays;
    violations += total != triples.size() || episode_stays != total;
    for (const auto& id : ids) {
      const auto mu = usage("x", merged.at(clustering[clustering.find(id)].id));
      const auto pu = usage("x", unmerged.at(id));
      violations += mu.total_stays < pu.total_stays || mu.tenure_days < pu.tenure_days ||
                    mu.shelters_visited < pu.shelters_visited;
    }
    std::vector<std::pair<std::string, std::string>> identity;
    for (const auto& id : ids) identity.emplace_back(id, id);
    violations += merge_stays(stays, Clustering::from_assignments(identity)) != unmerged;
  }

  std::vector<PersonUsage> us;
  for (int i = 1; i <= 100; ++i) us.push_back(PersonUsage{"p" + std::to_string(i), static_cast<std::size_t>(i), i, 1, 1});
  const auto report = cohort_report(us);
  const bool rows = report.rows.size() == 3 && report.rows[0].metric == "total_stays" &&
                    report.rows[1].metric == "tenure_days" && report.rows[2].metric == "shelters_visited" &&
                    report.rows[0].top_count == 5;
  return {gaps && violations == 0 && rows,
          fmt("gap 29/30 rule %s; %d instances, %zu violations; cohort rows %s", gaps ? "ok" : "wrong", kHhscInstances,
              violations, rows ? "ok" : "wrong")};
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const auto root = fs::temp_directory_path() / ("hhlink_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  testing::PipelineOptions o;
  o.originals = kPipelineOriginals;
  o.seed = 31;
  o.key_file = (root / "key.txt").string();
  std::ofstream(o.key_file) << "acceptance-determinism-key\n";
  std::string failure;
  std::vector<std::map<std::string, std::string>> trees;
  for (unsigned w : {1u, 1u, 8u}) {
    o.workers = w;
    const auto dir = root / ("run" + std::to_string(trees.size()));
    if (failure = testing::run_pipeline(dir, o); !failure.empty()) break;
    trees.push_back(testing::snapshot(dir));
  }
  fs::remove_all(root);
  if (!failure.empty()) return {false, "pipeline failed: " + failure};
  std::size_t differing = 0;
  for (std::size_t r = 1; r < trees.size(); ++r) {
    if (trees[r].size() != trees[0].size()) ++differing;
    for (const auto& [name, bytes] : trees[0]) differing += !trees[r].count(name) || trees[r].at(name) != bytes;
  }
  return {differing == 0, fmt("%zu files per run; runs workers=1, workers=1, workers=8; %zu differing files",
                              trees[0].size(), differing)};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, pair_counts},  {2, dice_oracle},       {3, edit_oracle},           {4, gradient_checks},
      {5, corpus_fidelity}, {6, end_to_end},     {7, clustering_oracle},     {8, coarsening},
      {9, cluster_metrics_check}, {10, hhsc},    {11, determinism},
  };
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
