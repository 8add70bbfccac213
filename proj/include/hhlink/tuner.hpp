#pragma once

// Grid search with stratified k-fold cross-validation.

#include <atomic>
#include <cmath>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhlink/evaluate.hpp"
#include "hhlink/models.hpp"
#include "hhlink/pairgen.hpp"

namespace hhlink {

/// Scores a model on a dataset. Pairs below the emission floor are never
/// offered to a model, so implicit positives count as misses and implicit
/// negatives as correct rejections.
inline PairMetrics score(const Model& model, const TrainingData& data) {
  PairMetrics m;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool predicted = predict(model, data.features[i]).match;
    const bool actual = data.y[i] > 0.5;
    if (predicted && actual) ++m.tp;
    else if (predicted) ++m.fp;
    else if (actual) ++m.fn;
    else ++m.tn;
  }
  m.fn += data.implicit_positive;
  m.tn += data.implicit_negative;
  m.finalize();
  return m;
}

struct Grid {
  ModelType type = ModelType::Threshold;
  /// Axis name and the values to try, in the order given.
  std::vector<std::pair<std::string, std::vector<HyperValue>>> axes;

  std::size_t combination_count() const {
    std::size_t n = 1;
    for (const auto& [name, values] : axes) n *= values.size();
    return axes.empty() ? 0 : n;
  }

  /// Mixed-radix decode; the last axis varies fastest.
  HyperParams combination(std::size_t index) const {
    HyperParams hp;
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
      hp[it->first] = it->second[index % it->second.size()];
      index /= it->second.size();
    }
    return hp;
  }

  void validate() const {
    if (axes.empty()) throw Error(ErrorCode::InvalidArgument, "grid has no axes");
    for (const auto& [name, values] : axes) {
      if (values.empty()) throw Error(ErrorCode::InvalidArgument, "grid axis " + name + " is empty");
    }
  }

  static Grid defaults(ModelType type) {
    Grid g;
    g.type = type;
    auto numbers = [](std::initializer_list<double> v) { return std::vector<HyperValue>(v.begin(), v.end()); };
    switch (type) {
      case ModelType::Threshold: {
        std::vector<HyperValue> betas;
        for (int i = 1; i <= 20; ++i) betas.emplace_back(i / 20.0);
        g.axes = {{"beta", betas}};
        break;
      }
      case ModelType::Logistic:
        g.axes = {{"C", numbers({1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0})},
                  {"class_weight", numbers({0.01, 0.1, 1.0, 10.0, 100.0, 500.0})},
                  {"max_iter", numbers({50, 100, 200})},
                  {"penalty", {std::string("l1"), std::string("l2")}}};
        break;
      case ModelType::Tree:
        g.axes = {{"ccp_alpha", numbers({1e-4, 1e-5})}, {"max_leaf_nodes", numbers({5, 6})}};
        break;
      case ModelType::Mlp: {
        std::vector<HyperValue> alphas;
        for (int e = -7; e <= 0; ++e) alphas.emplace_back(std::pow(10.0, e));
        g.axes = {{"alpha", alphas},
                  {"hidden", {std::vector<int>{15}, std::vector<int>{10}, std::vector<int>{20}, std::vector<int>{10, 3},
                              std::vector<int>{6, 2}}}};
        break;
      }
    }
    return g;
  }

  /// {"model": "lr", "axes": {"C": [1e-5, 1], "penalty": ["l1"]}}
  static Grid from_json(const nlohmann::json& j) {
    Grid g;
    try {
      g.type = parse_model_type(j.at("model").get<std::string>());
      for (const auto& [name, values] : j.at("axes").items()) {
        std::vector<HyperValue> vs;
        for (const auto& v : values) vs.push_back(hyper_from_json(v));
        g.axes.emplace_back(name, std::move(vs));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Schema, std::string("grid file: ") + e.what());
    }
    g.validate();
    return g;
  }

  nlohmann::json to_json() const {
    nlohmann::json axes_json = nlohmann::json::object();
    for (const auto& [name, values] : axes) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& v : values) arr.push_back(hhlink::to_json(v));
      axes_json[name] = arr;
    }
    return {{"model", to_string(type)}, {"axes", axes_json}};
  }
};

struct FoldScore {
  std::size_t combination = 0;
  int fold = 0;
  PairMetrics metrics;
};

struct CombinationSummary {
  HyperParams hyperparameters;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f1 = 0.0;
};

struct TuningResult {
  ModelType type = ModelType::Threshold;
  int folds = 0;
  std::vector<CombinationSummary> combinations;
  /// One row per (combination, fold), ordered by combination then fold.
  std::vector<FoldScore> scores;
  std::size_t best = 0;
  std::vector<std::string> tie_trail;
  std::vector<std::string> warnings;

  const HyperParams& best_hyperparameters() const { return combinations[best].hyperparameters; }
};

/// Evaluates every combination on every fold rotation (train on the other
/// folds, score the held-out one). Selection: highest mean F1, then highest
/// mean precision, then the lexicographically smallest hyperparameter map.
inline TuningResult grid_search(const TrainingData& train, const Grid& grid, int folds, std::uint64_t seed,
                                unsigned workers = 1) {
  grid.validate();
  std::vector<bool> is_positive(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) is_positive[i] = train.y[i] > 0.5;
  const auto assignment = stratified_kfold(is_positive, train.implicit_positive, train.implicit_negative, folds, seed);

  std::vector<TrainingData> fold_train, fold_test;
  for (int f = 0; f < folds; ++f) {
    std::vector<bool> held(train.size());
    std::vector<bool> rest(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      held[i] = assignment.fold_of[i] == f;
      rest[i] = !held[i];
    }
    std::size_t ip = 0, in = 0;
    for (int g = 0; g < folds; ++g) {
      if (g == f) continue;
      ip += assignment.implicit_positive[static_cast<std::size_t>(g)];
      in += assignment.implicit_negative[static_cast<std::size_t>(g)];
    }
    const auto fi = static_cast<std::size_t>(f);
    fold_train.push_back(train.subset(rest, ip, in));
    fold_test.push_back(train.subset(held, assignment.implicit_positive[fi], assignment.implicit_negative[fi]));
  }

  const std::size_t combos = grid.combination_count();
  TuningResult result;
  result.type = grid.type;
  result.folds = folds;
  result.scores.resize(combos * static_cast<std::size_t>(folds));
  std::vector<std::string> warnings(result.scores.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next.fetch_add(1); t < result.scores.size(); t = next.fetch_add(1)) {
      const std::size_t c = t / static_cast<std::size_t>(folds);
      const int f = static_cast<int>(t % static_cast<std::size_t>(folds));
      const auto hp = grid.combination(c);
      const auto outcome = train_model(grid.type, hp, fold_train[static_cast<std::size_t>(f)], seed);
      result.scores[t] = {c, f, score(outcome.model, fold_test[static_cast<std::size_t>(f)])};
      if (outcome.warning) warnings[t] = describe(hp) + " fold " + std::to_string(f) + ": " + *outcome.warning;
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (auto& w : warnings)
    if (!w.empty()) result.warnings.push_back(std::move(w));

  for (std::size_t c = 0; c < combos; ++c) {
    CombinationSummary s;
    s.hyperparameters = grid.combination(c);
    for (int f = 0; f < folds; ++f) {
      const auto& m = result.scores[c * static_cast<std::size_t>(folds) + static_cast<std::size_t>(f)].metrics;
      s.mean_precision += m.precision / folds;
      s.mean_recall += m.recall / folds;
      s.mean_f1 += m.f1 / folds;
    }
    result.combinations.push_back(std::move(s));
  }

  std::size_t best = 0;
  for (std::size_t c = 1; c < combos; ++c) {
    const auto& a = result.combinations[c];
    const auto& b = result.combinations[best];
    if (a.mean_f1 != b.mean_f1) {
      if (a.mean_f1 > b.mean_f1) best = c;
      continue;
    }
    if (a.mean_precision != b.mean_precision) {
      result.tie_trail.push_back("F1 tie between " + describe(a.hyperparameters) + " and " + describe(b.hyperparameters) +
                                 " broken by mean precision");
      if (a.mean_precision > b.mean_precision) best = c;
      continue;
    }
    result.tie_trail.push_back("F1 and precision tie between " + describe(a.hyperparameters) + " and " +
                               describe(b.hyperparameters) + " broken lexicographically");
    if (a.hyperparameters < b.hyperparameters) best = c;
  }
  result.best = best;
  return result;
}

/// Refits the chosen configuration on the whole training set.
inline TrainOutcome final_fit(const TrainingData& train, ModelType type, const HyperParams& best, std::uint64_t seed) {
  return train_model(type, best, train, seed);
}

inline nlohmann::json tuning_report_json(const TuningResult& r) {
  nlohmann::json combos = nlohmann::json::array();
  for (std::size_t c = 0; c < r.combinations.size(); ++c) {
    const auto& s = r.combinations[c];
    nlohmann::json folds = nlohmann::json::array();
    for (int f = 0; f < r.folds; ++f) {
      const auto& m = r.scores[c * static_cast<std::size_t>(r.folds) + static_cast<std::size_t>(f)].metrics;
      folds.push_back({{"fold", f}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
                       {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}});
    }
    combos.push_back({{"index", c}, {"hyperparameters", to_json(s.hyperparameters)}, {"mean_precision", s.mean_precision},
                      {"mean_recall", s.mean_recall}, {"mean_f1", s.mean_f1}, {"folds", folds}});
  }
  return {{"model", to_string(r.type)},
          {"folds", r.folds},
          {"combination_count", r.combinations.size()},
          {"selection_metric", "mean_f1"},
          {"combinations", combos},
          {"winner", {{"index", r.best}, {"hyperparameters", to_json(r.best_hyperparameters())},
                      {"mean_f1", r.combinations[r.best].mean_f1}}},
          {"tie_break_trail", r.tie_trail},
          {"warnings", r.warnings}};
}

}  // namespace hhlink
