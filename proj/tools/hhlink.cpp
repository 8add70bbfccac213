// hhlink: command-line pipeline for Bloom-filter record linkage.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hhlink/adjudication.hpp"
#include "hhlink/adjudication_http.hpp"
#include "hhlink/cluster.hpp"
#include "hhlink/data_io.hpp"
#include "hhlink/encoder.hpp"
#include "hhlink/evaluate.hpp"
#include "hhlink/hhsc_metrics.hpp"
#include "hhlink/models.hpp"
#include "hhlink/pairgen.hpp"
#include "hhlink/synth.hpp"
#include "hhlink/tuner.hpp"

namespace fs = std::filesystem;
using namespace hhlink;
using nlohmann::json;

namespace {

void info(const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); }

std::string dir_of(const std::string& file) {
  const auto parent = fs::path(file).parent_path();
  return parent.empty() ? "." : parent.string();
}

std::string name_of(const std::string& file) { return fs::path(file).filename().string(); }

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

void ensure_parent(const std::string& file) { ensure_dir(dir_of(file)); }

std::string load_key(const std::string& key_file) {
  std::string key;
  if (!key_file.empty()) {
    key = csv::read_file(key_file);
    while (!key.empty() && (key.back() == '\n' || key.back() == '\r')) key.pop_back();
  } else if (const char* env = std::getenv("HHLINK_KEY")) {
    key = env;
  }
  if (key.empty()) throw Error(ErrorCode::InvalidArgument, "no encoding key: set HHLINK_KEY or pass --key-file");
  return key;
}

/// Implicit (below-floor) class counts for one split recorded by `pairs`.
std::pair<std::size_t, std::size_t> implicit_counts(const std::string& summary, const std::string& split) {
  if (summary.empty()) return {0, 0};
  const auto j = io::read_json(summary);
  try {
    const auto& s = j.at("splits").at(split);
    return {s.at("implicit_positive").get<std::size_t>(), s.at("implicit_negative").get<std::size_t>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, summary + ": no implicit counts for split '" + split + "': " + e.what());
  }
}

LabeledDataset load_labeled(const std::string& pairs, const std::string& summary, const std::string& split) {
  LabeledDataset ds;
  ds.pairs = io::read_pairs(pairs);
  for (const auto& p : ds.pairs) {
    if (!p.label) throw Error(ErrorCode::Schema, pairs + ": missing column 'label'");
  }
  std::tie(ds.implicit_positive, ds.implicit_negative) = implicit_counts(summary, split);
  return ds;
}

json metrics_json(const PairMetrics& m) {
  json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["fn"] = m.fn;
  j["tn"] = m.tn;
  j["precision_undefined"] = m.precision_undefined;
  j["recall_undefined"] = m.recall_undefined;
  return j;
}

std::vector<std::string> profile_ids_of(const std::string& encoded, const std::string& profiles) {
  std::vector<std::string> ids;
  if (!encoded.empty()) {
    for (const auto& p : io::read_encoded(encoded)) ids.push_back(p.profile_id);
  } else if (!profiles.empty()) {
    for (const auto& p : io::read_profiles(profiles)) ids.push_back(p.profile_id);
  }
  return ids;
}

std::string stem_of(const std::string& spec, std::string& path) {
  const auto eq = spec.find('=');
  if (eq != std::string::npos) {
    path = spec.substr(eq + 1);
    return spec.substr(0, eq);
  }
  path = spec;
  return fs::path(spec).stem().string();
}

json cohort_json(const CohortReport& r, TenureMode mode) {
  json j;
  j["persons"] = r.persons;
  j["percentile"] = r.percentile;
  j["tenure"] = mode == TenureMode::Exclusive ? "exclusive" : "inclusive";
  j["too_small"] = r.too_small;
  j["tables"] = json::array();
  const std::string top = "Top " + std::to_string(r.percentile) + "%";
  for (const auto& row : r.rows) {
    json t;
    t["metric"] = row.metric;
    t["rows"] = json::array();
    t["rows"].push_back({{"cohort", "All"}, {"mean", row.all_mean}, {"median", row.all_median}, {"count", r.persons}});
    if (!r.too_small) {
      t["rows"].push_back({{"cohort", top},
                           {"mean", row.top_mean},
                           {"median", row.top_median},
                           {"count", row.top_count},
                           {"threshold", row.top_threshold}});
    }
    j["tables"].push_back(t);
  }
  return j;
}

struct Common {
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string key_file;
};

// ---------------------------------------------------------------------------

void cmd_encode(const Common& c, const std::string& profiles_path, const std::string& out, int m, int k) {
  EncoderConfig cfg{m, 2, k, load_key(c.key_file)};
  cfg.validate();
  const auto profiles = io::read_profiles(profiles_path);
  const Encoder encoder(cfg);
  std::vector<EncodedProfile> encoded;
  encoded.reserve(profiles.size());
  std::size_t flagged = 0;
  for (const auto& p : profiles) {
    encoded.push_back(encoder.encode_profile(p));
    flagged += encoded.back().flagged();
  }
  ensure_parent(out);
  io::write_encoded(out, encoded);
  if (flagged) info(std::to_string(flagged) + " profiles have empty fields encoded as zero vectors");
  io::record_stage(dir_of(out), {"encode",
                                 {{profiles_path, digest_file(profiles_path)}},
                                 {},
                                 {{"m", m}, {"q", 2}, {"k", k}, {"profiles", profiles.size()}, {"flagged", flagged}},
                                 {name_of(out)}});
}

void cmd_synth(const Common& c, const std::string& roster_path, std::size_t roster_size, const std::string& size_path,
               const std::string& pattern_path, const std::string& out) {
  ensure_dir(out);
  std::vector<PlainProfile> roster;
  std::map<std::string, std::string> inputs;
  if (!roster_path.empty()) {
    roster = io::read_profiles(roster_path);
    inputs[roster_path] = digest_file(roster_path);
  } else {
    roster = generate_roster(roster_size, c.seed);
  }
  auto sizes = ClusterSizeDistribution::manual_match();
  if (!size_path.empty()) {
    sizes = io::read_size_dist(size_path);
    inputs[size_path] = digest_file(size_path);
  }
  auto patterns = PatternDistribution::manual_match();
  if (!pattern_path.empty()) {
    patterns = io::read_patterns(pattern_path);
    inputs[pattern_path] = digest_file(pattern_path);
  }
  const auto corpus = generate_corpus(roster, sizes, patterns, c.seed);

  std::map<std::string, const PlainProfile*> by_id;
  for (const auto& p : corpus.profiles) by_id[p.profile_id] = &p;
  std::size_t mismatches = 0;
  for (const auto& cl : corpus.truth.clusters()) {
    for (const auto& mbr : cl.members) {
      if (mbr == cl.id) continue;
      if (field_distances(*by_id.at(cl.id), *by_id.at(mbr)) != corpus.drawn_patterns.at(mbr)) ++mismatches;
    }
  }

  io::write_profiles((fs::path(out) / "profiles.csv").string(), corpus.profiles);
  io::write_truth((fs::path(out) / "truth.csv").string(), corpus.truth);
  csv::write_file((fs::path(out) / "size_dist.csv").string(), io::format_size_dist(sizes));
  csv::write_file((fs::path(out) / "patterns.csv").string(), io::format_patterns(patterns));

  json stats;
  stats["originals"] = corpus.stats.originals;
  stats["profiles"] = corpus.stats.profiles;
  stats["duplicates"] = corpus.stats.duplicates;
  stats["clusters"] = corpus.truth.size();
  stats["singleton_share"] = corpus.stats.singleton_share();
  stats["identical_share"] = corpus.stats.identical_share();
  stats["pattern_mismatches"] = mismatches;
  stats["size_counts"] = json::object();
  for (const auto& [s, n] : corpus.stats.size_counts) stats["size_counts"][std::to_string(s)] = n;
  stats["patterns"] = json::array();
  for (const auto& [p, n] : corpus.stats.pattern_counts) {
    stats["patterns"].push_back(
        {{"distances", p}, {"count", n}, {"share", static_cast<double>(n) / static_cast<double>(corpus.stats.duplicates)}});
  }
  io::write_json((fs::path(out) / "synth_stats.json").string(), stats);
  info("synthesized " + std::to_string(corpus.profiles.size()) + " profiles in " + std::to_string(corpus.truth.size()) +
       " clusters");
  io::record_stage(out, {"synth",
                         inputs,
                         {{"seed", c.seed}},
                         {{"originals", roster.size()}, {"roster", roster_path.empty() ? "bundled" : "file"}},
                         {"profiles.csv", "truth.csv", "size_dist.csv", "patterns.csv", "synth_stats.json"}});
}

void cmd_pairs(const Common& c, const std::string& encoded_path, const std::string& truth_path, const std::string& out,
               double floor, std::size_t block_size, double train_fraction) {
  ensure_dir(out);
  auto profiles = io::read_encoded(encoded_path);
  std::map<std::string, std::string> inputs{{encoded_path, digest_file(encoded_path)}};
  json summary;
  summary["profiles"] = profiles.size();
  summary["total_pairs"] = pair_count(profiles.size());
  summary["floor"] = floor;
  std::vector<std::string> outputs;
  if (truth_path.empty()) {
    const auto pairs = compare_all(std::move(profiles), CompareOptions{floor, c.workers, block_size});
    summary["materialized"] = pairs.size();
    summary["below_floor"] = summary["total_pairs"].get<std::uint64_t>() - pairs.size();
    io::write_pairs((fs::path(out) / "pairs.csv").string(), pairs, false);
    outputs.push_back("pairs.csv");
  } else {
    inputs[truth_path] = digest_file(truth_path);
    const auto truth = io::read_truth(truth_path);
    const auto ds = label_pairs(std::move(profiles), truth, floor, c.workers, block_size);
    const auto split = stratified_split(ds, train_fraction, c.seed);
    summary["materialized"] = ds.pairs.size();
    summary["positives"] = ds.positive_count();
    summary["negatives"] = ds.negative_count();
    summary["implicit_positive"] = ds.implicit_positive;
    summary["implicit_negative"] = ds.implicit_negative;
    summary["train_fraction"] = train_fraction;
    for (const auto& [name, part] : {std::pair<std::string, const LabeledDataset*>{"train", &split.train},
                                     std::pair<std::string, const LabeledDataset*>{"test", &split.test}}) {
      summary["splits"][name] = {{"materialized", part->pairs.size()},
                                 {"positives", part->positive_count()},
                                 {"negatives", part->negative_count()},
                                 {"implicit_positive", part->implicit_positive},
                                 {"implicit_negative", part->implicit_negative}};
      io::write_pairs((fs::path(out) / (name + "_pairs.csv")).string(), part->pairs, true);
      outputs.push_back(name + "_pairs.csv");
    }
  }
  io::write_json((fs::path(out) / "pairs_summary.json").string(), summary);
  outputs.push_back("pairs_summary.json");
  info("compared " + summary["total_pairs"].dump() + " pairs, kept " + summary["materialized"].dump());
  io::record_stage(out, {"pairs", inputs, {{"seed", c.seed}},
                         {{"floor", floor}, {"block_size", block_size}, {"train_fraction", train_fraction}}, outputs});
}

void cmd_tune(const Common& c, const std::string& model, const std::string& pairs, const std::string& summary,
              const std::string& grid_path, int folds, const std::string& out) {
  const auto ds = load_labeled(pairs, summary, "train");
  const Grid grid = grid_path.empty() ? Grid::defaults(parse_model_type(model)) : Grid::from_json(io::read_json(grid_path));
  if (!grid_path.empty() && grid.type != parse_model_type(model)) {
    throw Error(ErrorCode::InvalidArgument, "grid is for model '" + to_string(grid.type) + "', not '" + model + "'");
  }
  const auto result = grid_search(TrainingData::from(ds), grid, folds, c.seed, c.workers);
  for (const auto& w : result.warnings) info("warning: " + w);
  ensure_parent(out);
  io::write_json(out, tuning_report_json(result));
  info("best " + describe(result.best_hyperparameters()) + " mean F1 " +
       std::to_string(result.combinations[result.best].mean_f1));
  std::map<std::string, std::string> inputs{{pairs, digest_file(pairs)}};
  if (!summary.empty()) inputs[summary] = digest_file(summary);
  if (!grid_path.empty()) inputs[grid_path] = digest_file(grid_path);
  io::record_stage(dir_of(out), {"tune", inputs, {{"seed", c.seed}}, {{"model", model}, {"folds", folds}}, {name_of(out)}});
}

void cmd_train(const Common& c, const std::string& model, const std::string& pairs, const std::string& summary,
               const std::string& hyper, const std::string& tuning, const std::string& out) {
  const auto type = parse_model_type(model);
  const auto ds = load_labeled(pairs, summary, "train");
  HyperParams hp;
  if (!tuning.empty()) {
    const auto report = io::read_json(tuning);
    if (report.at("model").get<std::string>() != to_string(type)) {
      throw Error(ErrorCode::InvalidArgument, "tuning report is for a different model type");
    }
    hp = hyper_params_from_json(report.at("winner").at("hyperparameters"));
  }
  if (!hyper.empty()) {
    try {
      for (const auto& [k, v] : hyper_params_from_json(json::parse(hyper))) hp[k] = v;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, std::string("--hyper: ") + e.what());
    }
  }
  const auto outcome = final_fit(TrainingData::from(ds), type, hp, c.seed);
  if (outcome.warning) info("warning: " + *outcome.warning);
  ensure_parent(out);
  io::write_json(out, model_to_json(outcome.model, training_digest(ds)));
  std::map<std::string, std::string> inputs{{pairs, digest_file(pairs)}};
  if (!summary.empty()) inputs[summary] = digest_file(summary);
  if (!tuning.empty()) inputs[tuning] = digest_file(tuning);
  io::record_stage(dir_of(out), {"train", inputs, {{"seed", c.seed}},
                                 {{"model", model}, {"hyperparameters", to_json(model_hyperparameters(outcome.model))}},
                                 {name_of(out)}});
}

void cmd_link(const Common& c, const std::string& model_path, const std::string& encoded_path, const std::string& out,
              double floor, std::size_t block_size) {
  const auto model = model_from_json(io::read_json(model_path));
  const auto pairs = compare_all(io::read_encoded(encoded_path), CompareOptions{floor, c.workers, block_size});
  std::vector<LinkEdge> links;
  for (const auto& p : pairs) {
    const auto pred = predict(model, p.features);
    if (pred.match) links.push_back(make_edge(p.id_a, p.id_b, pred.confidence));
  }
  ensure_parent(out);
  io::write_links(out, links);
  info(std::to_string(links.size()) + " links from " + std::to_string(pairs.size()) + " candidate pairs");
  io::record_stage(dir_of(out), {"link",
                                 {{model_path, digest_file(model_path)}, {encoded_path, digest_file(encoded_path)}},
                                 {},
                                 {{"floor", floor}, {"block_size", block_size}},
                                 {name_of(out)}});
}

void cmd_cluster(const std::string& links_path, const std::string& encoded, const std::string& profiles,
                 const std::string& algo, const std::string& out) {
  ClusterAlgorithm a;
  if (algo == "center") a = ClusterAlgorithm::Center;
  else if (algo == "merge-center") a = ClusterAlgorithm::MergeCenter;
  else throw Error(ErrorCode::InvalidArgument, "--algo must be center or merge-center");
  const auto links = io::read_links(links_path);
  auto ids = profile_ids_of(encoded, profiles);
  if (ids.empty()) {
    for (const auto& e : links) {
      ids.push_back(e.id_a);
      ids.push_back(e.id_b);
    }
  }
  const auto clustering = run_clustering(a, ids, links);
  ensure_parent(out);
  io::write_clusters(out, clustering);
  info(std::to_string(clustering.size()) + " clusters over " + std::to_string(clustering.profile_count()) + " profiles");
  std::map<std::string, std::string> inputs{{links_path, digest_file(links_path)}};
  if (!encoded.empty()) inputs[encoded] = digest_file(encoded);
  if (!profiles.empty()) inputs[profiles] = digest_file(profiles);
  io::record_stage(dir_of(out), {"cluster", inputs, {}, {{"algo", algo}}, {name_of(out)}});
}

void cmd_eval(const std::string& truth_path, const std::vector<std::string>& cluster_specs,
              const std::vector<std::string>& model_specs, const std::string& pairs, const std::string& summary,
              const std::string& split, const std::string& out) {
  std::map<std::string, std::string> inputs;
  json report;
  report["pairwise"] = json::array();
  if (!model_specs.empty()) {
    if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "--model needs --pairs");
    const auto ds = load_labeled(pairs, summary, split);
    const auto td = TrainingData::from(ds);
    inputs[pairs] = digest_file(pairs);
    if (!summary.empty()) inputs[summary] = digest_file(summary);
    for (const auto& spec : model_specs) {
      std::string path;
      const auto name = stem_of(spec, path);
      const auto model = model_from_json(io::read_json(path));
      inputs[path] = digest_file(path);
      json row = metrics_json(score(model, td));
      row["name"] = name;
      row["model"] = to_string(model_type(model));
      row["dataset"] = split;
      row["hyperparameters"] = to_json(model_hyperparameters(model));
      report["pairwise"].push_back(row);
    }
  }
  report["clusters"] = json::array();
  report["histograms"] = json::array();
  if (!cluster_specs.empty()) {
    if (truth_path.empty()) throw Error(ErrorCode::InvalidArgument, "--clusters needs --truth");
    const auto truth = io::read_truth(truth_path);
    inputs[truth_path] = digest_file(truth_path);
    for (const auto& spec : cluster_specs) {
      std::string path;
      const auto name = stem_of(spec, path);
      const auto est = io::read_clusters(path);
      inputs[path] = digest_file(path);
      const auto cm = cluster_metrics(truth, est);
      report["clusters"].push_back({{"name", name},
                                    {"precision", cm.precision},
                                    {"recall", cm.recall},
                                    {"f1", cm.f1},
                                    {"truth_clusters", truth.size()},
                                    {"estimated_clusters", est.size()},
                                    {"no_overlap", cm.no_overlap}});
      const auto st = cluster_stats(est);
      json hist = json::object(), share = json::object();
      for (std::size_t b = 0; b < st.histogram.size(); ++b) {
        hist[st.histogram[b].first] = st.histogram[b].second;
        share[st.histogram[b].first] = st.share(b);
      }
      report["histograms"].push_back({{"name", name},
                                      {"clusters", st.clusters},
                                      {"profiles", st.profiles},
                                      {"size_counts", hist},
                                      {"size_shares", share},
                                      {"confidence",
                                       {{"count", st.confidence_count},
                                        {"mean", st.confidence_mean},
                                        {"median", st.confidence_median},
                                        {"min", st.confidence_min}}}});
    }
  }
  ensure_parent(out);
  io::write_json(out, report);
  io::record_stage(dir_of(out), {"eval", inputs, {}, {{"split", split}}, {name_of(out)}});
}

void cmd_metrics(const std::string& stays_path, const std::string& clusters_path, const std::string& out, int percentile,
                 bool inclusive) {
  ensure_dir(out);
  const auto stays = io::read_stays(stays_path);
  const auto mode = inclusive ? TenureMode::Inclusive : TenureMode::Exclusive;
  std::map<std::string, std::string> inputs{{stays_path, digest_file(stays_path)}};
  json report;
  const auto unmerged = unmerged_stays(stays);
  report["unmerged"] = cohort_json(cohort_report(all_usage(unmerged, mode), percentile), mode);
  PersonStays persons = unmerged;
  if (!clusters_path.empty()) {
    inputs[clusters_path] = digest_file(clusters_path);
    persons = merge_stays(stays, io::read_clusters(clusters_path));
    report["merged"] = cohort_json(cohort_report(all_usage(persons, mode), percentile), mode);
  }
  const auto eps = all_episodes(persons);
  std::size_t total = 0;
  for (const auto& [p, s] : persons) total += s.size();
  report["stays"] = total;
  report["episodes"] = eps.size();
  if (report.value("merged", json()).is_object() && report["merged"]["too_small"].get<bool>()) {
    info("warning: fewer than " + std::to_string(kMinCohortPersons) + " persons, top cohort omitted");
  }
  io::write_json((fs::path(out) / "usage_report.json").string(), report);
  std::string hist;
  csv::append_row(hist, {"episode_stays", "episodes", "log2_bucket"});
  for (const auto& [len, n] : episode_length_histogram(eps)) {
    csv::append_row(hist, {std::to_string(len), std::to_string(n),
                           std::to_string(static_cast<int>(std::floor(std::log2(static_cast<double>(len)))))});
  }
  csv::write_file((fs::path(out) / "episode_hist.csv").string(), hist);
  io::record_stage(out, {"metrics", inputs, {}, {{"percentile", percentile}, {"tenure", inclusive ? "inclusive" : "exclusive"}},
                         {"usage_report.json", "episode_hist.csv"}});
}

void cmd_demo_stays(const Common& c, const std::string& profiles, const std::string& encoded, const std::string& out) {
  const auto ids = profile_ids_of(encoded, profiles);
  if (ids.empty()) throw Error(ErrorCode::InvalidArgument, "demo-stays needs --profiles or --encoded with at least one profile");
  const auto stays = generate_demo_stays(ids, c.seed);
  ensure_parent(out);
  io::write_stays(out, stays);
  std::map<std::string, std::string> inputs;
  if (!profiles.empty()) inputs[profiles] = digest_file(profiles);
  if (!encoded.empty()) inputs[encoded] = digest_file(encoded);
  io::record_stage(dir_of(out), {"demo-stays", inputs, {{"seed", c.seed}}, {{"stays", stays.size()}}, {name_of(out)}});
}

void cmd_serve(const Common& c, const std::string& profiles, const std::string& decisions, const std::string& host, int port,
               const std::string& static_dir) {
  AdjudicationService::Options opts;
  opts.seed = c.seed;
  opts.log_path = decisions;
  AdjudicationService service(io::read_profiles(profiles), opts);
  httplib::Server server;
  register_adjudication_routes(server, service, [](const std::string& w) { info("warning: " + w); });
  if (!static_dir.empty() && !server.set_mount_point("/", static_dir)) {
    throw Error(ErrorCode::Io, "cannot serve static files from " + static_dir);
  }
  info("serving " + std::to_string(service.corpus_size()) + " profiles on http://" + host + ":" + std::to_string(port));
  if (!server.listen(host, port)) throw Error(ErrorCode::Io, "cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-preserving record linkage over Bloom-filter encoded profiles"};
  app.set_config("--config", "", "Flat key=value file of option values ([subcommand] sections allowed)");
  app.require_subcommand(1);
  Common common;
  auto add_seed = [&](CLI::App* s) { s->add_option("--seed", common.seed, "Random seed")->capture_default_str(); };
  auto add_workers = [&](CLI::App* s) {
    s->add_option("--workers", common.workers, "Worker threads")->check(CLI::Range(1u, 1024u))->capture_default_str();
  };

  std::string profiles, encoded, out, truth, pairs_path, summary, model, grid, hyper, tuning, links, algo = "merge-center",
                                                                                                     split = "test",
                                                                                                     stays, clusters_path,
                                                                                                     roster, size_dist,
                                                                                                     patterns_path, decisions,
                                                                                                     host = "127.0.0.1",
                                                                                                     static_dir;
  std::vector<std::string> cluster_specs, model_specs;
  int m = 64, k = 2, folds = 5, percentile = 5, port = 8080;
  double floor = 0.5, train_fraction = 0.7;
  std::size_t block_size = 2048, roster_size = 4750;
  bool inclusive = false;

  auto* enc = app.add_subcommand("encode", "Encode plaintext profiles into Bloom-filter vectors");
  enc->add_option("--profiles", profiles, "profiles.csv")->required();
  enc->add_option("--out", out, "encoded.jsonl")->required();
  enc->add_option("--m", m, "Bits per field vector")->check(CLI::IsMember({32, 64}))->capture_default_str();
  enc->add_option("--k", k, "Hash functions per bigram")->check(CLI::PositiveNumber)->capture_default_str();
  enc->add_option("--key-file", common.key_file, "File holding the encoding key (else HHLINK_KEY)");

  auto* syn = app.add_subcommand("synth", "Generate a synthetic corpus with known duplicates");
  syn->add_option("--roster", roster, "Originals as profiles.csv (default: bundled roster)");
  syn->add_option("--roster-size", roster_size, "Bundled roster size when --roster is absent")->capture_default_str();
  syn->add_option("--size-dist", size_dist, "size_dist.csv (size,probability)");
  syn->add_option("--patterns", patterns_path, "patterns.csv (d_first..d_year,probability)");
  syn->add_option("--out", out, "Output directory")->required();
  add_seed(syn);

  auto* prs = app.add_subcommand("pairs", "Compare all profile pairs; with --truth, label and split them");
  prs->add_option("--encoded", encoded, "encoded.jsonl")->required();
  prs->add_option("--truth", truth, "truth.csv");
  prs->add_option("--out", out, "Output directory")->required();
  prs->add_option("--floor", floor, "Minimum pooled Dice to emit a pair")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  prs->add_option("--block-size", block_size, "Profiles per comparison block")->check(CLI::PositiveNumber)->capture_default_str();
  prs->add_option("--train-fraction", train_fraction, "Stratified train share")->capture_default_str();
  add_seed(prs);
  add_workers(prs);

  auto* tun = app.add_subcommand("tune", "Grid search with stratified k-fold cross-validation");
  tun->add_option("--model", model, "threshold | lr | tree | mlp")->required();
  tun->add_option("--pairs", pairs_path, "Labelled training pairs")->required();
  tun->add_option("--summary", summary, "pairs_summary.json for below-floor counts");
  tun->add_option("--grid", grid, "Grid JSON (default: built-in grid)");
  tun->add_option("--folds", folds, "Folds")->check(CLI::Range(2, 100))->capture_default_str();
  tun->add_option("--out", out, "tuning_report.json")->required();
  add_seed(tun);
  add_workers(tun);

  auto* trn = app.add_subcommand("train", "Fit one model and write its JSON artifact");
  trn->add_option("--model", model, "threshold | lr | tree | mlp")->required();
  trn->add_option("--pairs", pairs_path, "Labelled training pairs")->required();
  trn->add_option("--summary", summary, "pairs_summary.json for below-floor counts");
  trn->add_option("--hyper", hyper, "Hyperparameters as a JSON object");
  trn->add_option("--tuning", tuning, "Take the winner of a tuning_report.json");
  trn->add_option("--out", out, "model.json")->required();
  add_seed(trn);

  auto* lnk = app.add_subcommand("link", "Apply a model to every candidate pair");
  lnk->add_option("--model", model, "model.json")->required();
  lnk->add_option("--encoded", encoded, "encoded.jsonl")->required();
  lnk->add_option("--out", out, "links.csv")->required();
  lnk->add_option("--floor", floor, "Minimum pooled Dice to consider a pair")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  lnk->add_option("--block-size", block_size, "Profiles per comparison block")->check(CLI::PositiveNumber)->capture_default_str();
  add_workers(lnk);

  auto* clu = app.add_subcommand("cluster", "Group linked profiles into persons");
  clu->add_option("--links", links, "links.csv")->required();
  clu->add_option("--encoded", encoded, "encoded.jsonl (profiles without links become singletons)");
  clu->add_option("--profiles", profiles, "profiles.csv alternative to --encoded");
  clu->add_option("--algo", algo, "center | merge-center")->capture_default_str();
  clu->add_option("--out", out, "clusters.csv")->required();

  auto* evl = app.add_subcommand("eval", "Pairwise and cluster-level evaluation");
  evl->add_option("--truth", truth, "truth.csv");
  evl->add_option("--clusters", cluster_specs, "clusters.csv, optionally name=path; repeatable");
  evl->add_option("--model", model_specs, "model.json, optionally name=path; repeatable");
  evl->add_option("--pairs", pairs_path, "Labelled pairs to score models on");
  evl->add_option("--summary", summary, "pairs_summary.json for below-floor counts");
  evl->add_option("--split", split, "Split name inside the summary")->capture_default_str();
  evl->add_option("--out", out, "eval_report.json")->required();

  auto* met = app.add_subcommand("metrics", "Shelter utilization metrics");
  met->add_option("--stays", stays, "stays.csv")->required();
  met->add_option("--clusters", clusters_path, "clusters.csv to merge profiles into persons");
  met->add_option("--percentile", percentile, "Top cohort percentile")->check(CLI::Range(1, 100))->capture_default_str();
  met->add_flag("--inclusive-tenure", inclusive, "Count both the first and last day");
  met->add_option("--out", out, "Output directory")->required();

  auto* dst = app.add_subcommand("demo-stays", "Generate demo shelter stays for a profile list");
  dst->add_option("--profiles", profiles, "profiles.csv");
  dst->add_option("--encoded", encoded, "encoded.jsonl");
  dst->add_option("--out", out, "stays.csv")->required();
  add_seed(dst);

  auto* srv = app.add_subcommand("serve", "Run the adjudication service");
  srv->add_option("--profiles", profiles, "Plaintext profiles.csv")->required();
  srv->add_option("--decisions", decisions, "Append-only decision log (NDJSON)")->required();
  srv->add_option("--host", host, "Bind address")->capture_default_str();
  srv->add_option("--port", port, "Port")->capture_default_str();
  srv->add_option("--static", static_dir, "Directory of UI assets to serve at /");
  add_seed(srv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*enc) cmd_encode(common, profiles, out, m, k);
    else if (*syn) cmd_synth(common, roster, roster_size, size_dist, patterns_path, out);
    else if (*prs) cmd_pairs(common, encoded, truth, out, floor, block_size, train_fraction);
    else if (*tun) cmd_tune(common, model, pairs_path, summary, grid, folds, out);
    else if (*trn) cmd_train(common, model, pairs_path, summary, hyper, tuning, out);
    else if (*lnk) cmd_link(common, model, encoded, out, floor, block_size);
    else if (*clu) cmd_cluster(links, encoded, profiles, algo, out);
    else if (*evl) cmd_eval(truth, cluster_specs, model_specs, pairs_path, summary, split, out);
    else if (*met) cmd_metrics(stays, clusters_path, out, percentile, inclusive);
    else if (*dst) cmd_demo_stays(common, profiles, encoded, out);
    else if (*srv) cmd_serve(common, profiles, decisions, host, port, static_dir);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
  return 0;
}
