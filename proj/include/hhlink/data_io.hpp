#pragma once

// Readers and writers for every pipeline file, plus the per-directory
// manifest. Writers sort rows canonically so output is byte-stable.

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhlink/cluster.hpp"
#include "hhlink/clustering.hpp"
#include "hhlink/csv.hpp"
#include "hhlink/digest.hpp"
#include "hhlink/encoder.hpp"
#include "hhlink/hhsc_metrics.hpp"
#include "hhlink/pairgen.hpp"
#include "hhlink/synth.hpp"

namespace hhlink::io {

inline constexpr std::string_view kVersion = "1.0.0";

// profiles.csv

inline const std::vector<std::string> kProfileColumns = {"profile_id", "first_name", "last_name",
                                                         "dob_day",    "dob_month",  "dob_year"};

inline std::vector<PlainProfile> parse_profiles(const csv::Table& t) {
  std::vector<PlainProfile> out;
  out.reserve(t.rows());
  std::map<std::string, std::size_t> seen;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    PlainProfile p;
    p.profile_id = t.get(r, "profile_id");
    p.first_name = t.get(r, "first_name");
    p.last_name = t.get(r, "last_name");
    p.dob_day = static_cast<int>(t.get_int(r, "dob_day"));
    p.dob_month = static_cast<int>(t.get_int(r, "dob_month"));
    p.dob_year = static_cast<int>(t.get_int(r, "dob_year"));
    if (p.profile_id.empty()) t.fail(r, "profile_id", "profile id");
    if (!is_valid_date(p.dob_year, p.dob_month, p.dob_day)) t.fail(r, "dob_day", "calendar date with that month and year");
    if (const auto [it, fresh] = seen.emplace(p.profile_id, t.line(r)); !fresh) {
      throw Error(ErrorCode::DuplicateId, t.source() + " line " + std::to_string(t.line(r)) + ": profile_id " +
                                              p.profile_id + " already on line " + std::to_string(it->second));
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<PlainProfile> read_profiles(const std::string& path) {
  return parse_profiles(csv::Table::load(path, kProfileColumns));
}

inline std::string format_profiles(std::vector<PlainProfile> profiles) {
  std::sort(profiles.begin(), profiles.end(),
            [](const PlainProfile& a, const PlainProfile& b) { return a.profile_id < b.profile_id; });
  std::string out;
  csv::append_row(out, kProfileColumns);
  for (const auto& p : profiles) {
    csv::append_row(out, {p.profile_id, p.first_name, p.last_name, std::to_string(p.dob_day), std::to_string(p.dob_month),
                          std::to_string(p.dob_year)});
  }
  return out;
}

inline void write_profiles(const std::string& path, const std::vector<PlainProfile>& profiles) {
  csv::write_file(path, format_profiles(profiles));
}

// encoded.jsonl

inline std::string format_encoded(std::vector<EncodedProfile> profiles) {
  std::sort(profiles.begin(), profiles.end(),
            [](const EncodedProfile& a, const EncodedProfile& b) { return a.profile_id < b.profile_id; });
  std::string out;
  for (const auto& p : profiles) {
    nlohmann::ordered_json j;
    j["profile_id"] = p.profile_id;
    j["m"] = p.m();
    j["fields"] = nlohmann::json::array();
    for (const auto& f : p.fields) j["fields"].push_back(f.to_hex());
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline void write_encoded(const std::string& path, const std::vector<EncodedProfile>& profiles) {
  csv::write_file(path, format_encoded(profiles));
}

inline std::vector<EncodedProfile> parse_encoded(const std::string& source, std::string_view text) {
  std::vector<EncodedProfile> out;
  std::map<std::string, std::size_t> seen;
  std::size_t line = 0, pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line;
    if (raw.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto where = source + " line " + std::to_string(line);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("profile_id") || !j.contains("m") || !j.contains("fields")) {
      throw Error(ErrorCode::Schema, where + ": expected keys profile_id, m, fields");
    }
    if (!j["profile_id"].is_string() || !j["m"].is_number_integer() || !j["fields"].is_array() ||
        j["fields"].size() != kFieldCount) {
      throw Error(ErrorCode::Schema, where + ": profile_id must be a string, m an integer, fields an array of 5");
    }
    EncodedProfile p;
    p.profile_id = j["profile_id"].get<std::string>();
    const int m = j["m"].get<int>();
    if (m != 32 && m != 64) throw Error(ErrorCode::Parse, where + ": m must be 32 or 64");
    for (int l = 0; l < kFieldCount; ++l) {
      const auto& f = j["fields"][static_cast<std::size_t>(l)];
      if (!f.is_string()) throw Error(ErrorCode::Parse, where + ": field " + std::to_string(l) + " is not a string");
      try {
        p.fields[static_cast<std::size_t>(l)] = BloomVector::from_hex(f.get<std::string>(), m);
      } catch (const Error& e) {
        throw Error(ErrorCode::Parse, where + ": field " + std::string(kFieldNames[static_cast<std::size_t>(l)]) + ": " +
                                          e.what());
      }
      if (p.fields[static_cast<std::size_t>(l)].empty()) p.empty_mask |= static_cast<std::uint8_t>(1u << l);
    }
    if (const auto [it, fresh] = seen.emplace(p.profile_id, line); !fresh) {
      throw Error(ErrorCode::DuplicateId,
                  where + ": profile_id " + p.profile_id + " already on line " + std::to_string(it->second));
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<EncodedProfile> read_encoded(const std::string& path) {
  return parse_encoded(path, csv::read_file(path));
}

// pairs.csv

inline const std::vector<std::string> kPairColumns = {"id_a",   "id_b",    "d_first", "d_last",
                                                      "d_day",  "d_month", "d_year",  "d_all"};

inline std::string format_pairs(std::vector<CandidatePair> pairs, bool with_label) {
  std::sort(pairs.begin(), pairs.end(), [](const CandidatePair& a, const CandidatePair& b) {
    return a.id_a != b.id_a ? a.id_a < b.id_a : a.id_b < b.id_b;
  });
  auto header = kPairColumns;
  if (with_label) header.push_back("label");
  std::string out;
  csv::append_row(out, header);
  for (const auto& p : pairs) {
    std::vector<std::string> row = {p.id_a, p.id_b};
    for (double d : p.features.d) row.push_back(csv::fixed(d));
    row.push_back(csv::fixed(p.features.d_all));
    if (with_label) {
      if (!p.label) throw Error(ErrorCode::InvalidArgument, "pair " + p.id_a + "," + p.id_b + " has no label");
      row.push_back(*p.label == Label::Match ? "1" : "0");
    }
    csv::append_row(out, row);
  }
  return out;
}

inline void write_pairs(const std::string& path, const std::vector<CandidatePair>& pairs, bool with_label) {
  csv::write_file(path, format_pairs(pairs, with_label));
}

inline std::vector<CandidatePair> parse_pairs(const csv::Table& t) {
  std::vector<CandidatePair> out;
  out.reserve(t.rows());
  const bool labelled = t.has("label");
  static const std::array<std::string, kFieldCount> cols = {"d_first", "d_last", "d_day", "d_month", "d_year"};
  for (std::size_t r = 0; r < t.rows(); ++r) {
    CandidatePair p;
    p.id_a = t.get(r, "id_a");
    p.id_b = t.get(r, "id_b");
    for (int l = 0; l < kFieldCount; ++l) p.features.d[static_cast<std::size_t>(l)] = t.get_double(r, cols[static_cast<std::size_t>(l)]);
    p.features.d_all = t.get_double(r, "d_all");
    if (labelled) {
      const auto& s = t.get(r, "label");
      if (s == "1") p.label = Label::Match;
      else if (s == "0") p.label = Label::NonMatch;
      else t.fail(r, "label", "label (0 or 1)");
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<CandidatePair> read_pairs(const std::string& path) {
  return parse_pairs(csv::Table::load(path, kPairColumns));
}

// links.csv

inline std::string format_links(std::vector<LinkEdge> links) {
  for (auto& e : links)
    if (e.id_b < e.id_a) std::swap(e.id_a, e.id_b);
  std::sort(links.begin(), links.end(), [](const LinkEdge& a, const LinkEdge& b) {
    return a.id_a != b.id_a ? a.id_a < b.id_a : a.id_b < b.id_b;
  });
  std::string out;
  csv::append_row(out, {"id_a", "id_b", "confidence"});
  for (const auto& e : links) csv::append_row(out, {e.id_a, e.id_b, csv::shortest(e.weight)});
  return out;
}

inline void write_links(const std::string& path, const std::vector<LinkEdge>& links) {
  csv::write_file(path, format_links(links));
}

inline std::vector<LinkEdge> read_links(const std::string& path) {
  const auto t = csv::Table::load(path, {"id_a", "id_b", "confidence"});
  std::vector<LinkEdge> out;
  out.reserve(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const double w = t.get_double(r, "confidence");
    if (!(w > 0.0 && w <= 1.0)) t.fail(r, "confidence", "confidence in (0, 1]");
    if (t.get(r, "id_a") == t.get(r, "id_b")) t.fail(r, "id_b", "distinct endpoint");
    out.push_back(make_edge(t.get(r, "id_a"), t.get(r, "id_b"), w));
  }
  return out;
}

// clusters.csv

inline std::string format_clusters(const Clustering& c) {
  std::string out;
  csv::append_row(out, {"profile_id", "cluster_id", "is_center", "confidence"});
  for (const auto& cl : c.clusters()) {
    for (std::size_t i = 0; i < cl.members.size(); ++i) {
      const double conf = i < cl.confidence.size() ? cl.confidence[i] : 1.0;
      csv::append_row(out, {cl.members[i], cl.id, cl.members[i] == cl.center ? "1" : "0", csv::shortest(conf)});
    }
  }
  return out;
}

inline void write_clusters(const std::string& path, const Clustering& c) { csv::write_file(path, format_clusters(c)); }

inline Clustering read_clusters(const std::string& path) {
  const auto t = csv::Table::load(path, {"profile_id", "cluster_id", "is_center", "confidence"});
  std::map<std::string, Cluster> grouped;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto& cl = grouped[t.get(r, "cluster_id")];
    cl.id = t.get(r, "cluster_id");
    const auto& flag = t.get(r, "is_center");
    if (flag != "0" && flag != "1") t.fail(r, "is_center", "flag (0 or 1)");
    if (flag == "1") {
      if (!cl.center.empty()) t.fail(r, "is_center", "flag: cluster already has a center");
      cl.center = t.get(r, "profile_id");
    }
    cl.members.push_back(t.get(r, "profile_id"));
    cl.confidence.push_back(t.get_double(r, "confidence"));
  }
  std::vector<Cluster> clusters;
  for (auto& [id, cl] : grouped) clusters.push_back(std::move(cl));
  return Clustering(std::move(clusters));
}

// truth.csv

inline std::string format_truth(const Clustering& c) {
  std::string out;
  csv::append_row(out, {"cluster_id", "profile_id"});
  for (const auto& [cid, pid] : c.assignments()) csv::append_row(out, {cid, pid});
  return out;
}

inline void write_truth(const std::string& path, const Clustering& c) { csv::write_file(path, format_truth(c)); }

inline Clustering parse_truth(const csv::Table& t) {
  std::vector<std::pair<std::string, std::string>> rows;
  rows.reserve(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    if (t.get(r, "profile_id").empty()) t.fail(r, "profile_id", "profile id");
    rows.emplace_back(t.get(r, "cluster_id"), t.get(r, "profile_id"));
  }
  return Clustering::from_assignments(rows);
}

inline Clustering read_truth(const std::string& path) {
  return parse_truth(csv::Table::load(path, {"cluster_id", "profile_id"}));
}

// stays.csv

inline std::string format_stays(std::vector<StayRecord> stays) {
  std::sort(stays.begin(), stays.end(), [](const StayRecord& a, const StayRecord& b) {
    if (a.profile_id != b.profile_id) return a.profile_id < b.profile_id;
    if (a.date != b.date) return a.date < b.date;
    return a.shelter_id < b.shelter_id;
  });
  std::string out;
  csv::append_row(out, {"profile_id", "shelter_id", "date"});
  for (const auto& s : stays) csv::append_row(out, {s.profile_id, s.shelter_id, format_date(s.date)});
  return out;
}

inline void write_stays(const std::string& path, const std::vector<StayRecord>& stays) {
  csv::write_file(path, format_stays(stays));
}

inline std::vector<StayRecord> read_stays(const std::string& path) {
  const auto t = csv::Table::load(path, {"profile_id", "shelter_id", "date"});
  std::vector<StayRecord> out;
  out.reserve(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    StayRecord s{t.get(r, "profile_id"), t.get(r, "shelter_id"), {}};
    try {
      s.date = parse_date(t.get(r, "date"));
    } catch (const Error&) {
      t.fail(r, "date", "ISO-8601 date");
    }
    out.push_back(std::move(s));
  }
  return out;
}

// size_dist.csv and patterns.csv

inline ClusterSizeDistribution read_size_dist(const std::string& path) {
  const auto t = csv::Table::load(path, {"size", "probability"});
  ClusterSizeDistribution d;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    d.sizes.push_back(static_cast<int>(t.get_int(r, "size")));
    d.probabilities.push_back(t.get_double(r, "probability"));
  }
  d.validate();
  return d;
}

inline std::string format_size_dist(const ClusterSizeDistribution& d) {
  std::string out;
  csv::append_row(out, {"size", "probability"});
  for (std::size_t i = 0; i < d.sizes.size(); ++i) csv::append_row(out, {std::to_string(d.sizes[i]), csv::shortest(d.probabilities[i])});
  return out;
}

inline const std::vector<std::string> kPatternColumns = {"d_first", "d_last", "d_day", "d_month", "d_year", "probability"};

inline PatternDistribution read_patterns(const std::string& path) {
  const auto t = csv::Table::load(path, kPatternColumns);
  PatternDistribution d;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    ErrorPattern p;
    for (int l = 0; l < kFieldCount; ++l) p.distances[static_cast<std::size_t>(l)] = static_cast<int>(t.get_int(r, kPatternColumns[static_cast<std::size_t>(l)]));
    p.probability = t.get_double(r, "probability");
    d.patterns.push_back(p);
  }
  d.validate();
  return d;
}

inline std::string format_patterns(const PatternDistribution& d) {
  std::string out;
  csv::append_row(out, kPatternColumns);
  for (const auto& p : d.patterns) {
    std::vector<std::string> row;
    for (int v : p.distances) row.push_back(std::to_string(v));
    row.push_back(csv::shortest(p.probability));
    csv::append_row(out, row);
  }
  return out;
}

// JSON reports

inline void write_json(const std::string& path, const nlohmann::json& j) { csv::write_file(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(csv::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path + ": " + e.what());
  }
}

// manifest.json

/// Provenance for one stage written into an output directory.
struct StageRecord {
  std::string stage;
  /// Input file path -> content digest.
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::uint64_t> seeds;
  nlohmann::json config = nlohmann::json::object();
  /// Output file names in the directory.
  std::vector<std::string> outputs;
};

/// Adds or replaces the stage entry in `dir/manifest.json`, recording the
/// digest of each output. Inputs are keyed by file name so the manifest does
/// not depend on where the directory lives.
inline void record_stage(const std::string& dir, const StageRecord& s) {
  namespace fs = std::filesystem;
  const auto path = (fs::path(dir) / "manifest.json").string();
  nlohmann::json m = fs::exists(path) ? read_json(path) : nlohmann::json::object();
  m["tool"] = "hhlink";
  m["format_version"] = 1;
  m["version"] = std::string(kVersion);
  nlohmann::json entry;
  entry["inputs"] = nlohmann::json::object();
  for (const auto& [name, digest] : s.inputs) entry["inputs"][fs::path(name).filename().string()] = digest;
  entry["seeds"] = s.seeds;
  entry["config"] = s.config;
  entry["outputs"] = nlohmann::json::object();
  for (const auto& name : s.outputs) entry["outputs"][name] = digest_file((fs::path(dir) / name).string());
  m["stages"][s.stage] = entry;
  write_json(path, m);
}

}  // namespace hhlink::io
