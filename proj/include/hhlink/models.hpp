#pragma once

// Pairwise match classifiers over Dice feature vectors: threshold on pooled
// Dice, logistic regression, CART decision tree and a small MLP.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhlink/digest.hpp"
#include "hhlink/error.hpp"
#include "hhlink/pairgen.hpp"
#include "hhlink/rng.hpp"
#include "hhlink/similarity.hpp"

namespace hhlink {

using FeatureRow = std::array<double, kFieldCount>;

enum class ModelType { Threshold, Logistic, Tree, Mlp };

inline std::string to_string(ModelType t) {
  switch (t) {
    case ModelType::Threshold: return "threshold";
    case ModelType::Logistic: return "lr";
    case ModelType::Tree: return "tree";
    case ModelType::Mlp: return "mlp";
  }
  return "unknown";
}

inline ModelType parse_model_type(std::string_view s) {
  if (s == "threshold") return ModelType::Threshold;
  if (s == "lr") return ModelType::Logistic;
  if (s == "tree") return ModelType::Tree;
  if (s == "mlp") return ModelType::Mlp;
  throw Error(ErrorCode::InvalidArgument, "unknown model type '" + std::string(s) + "'");
}

/// A hyperparameter value: a number, a name, or an integer tuple (layer sizes).
using HyperValue = std::variant<double, std::string, std::vector<int>>;
using HyperParams = std::map<std::string, HyperValue>;

inline nlohmann::json to_json(const HyperValue& v) {
  return std::visit([](const auto& x) { return nlohmann::json(x); }, v);
}

inline HyperValue hyper_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  if (j.is_array()) return j.get<std::vector<int>>();
  throw Error(ErrorCode::Parse, "unsupported hyperparameter value " + j.dump());
}

inline nlohmann::json to_json(const HyperParams& hp) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : hp) j[k] = to_json(v);
  return j;
}

inline HyperParams hyper_params_from_json(const nlohmann::json& j) {
  HyperParams hp;
  for (const auto& [k, v] : j.items()) hp[k] = hyper_from_json(v);
  return hp;
}

inline std::string describe(const HyperParams& hp) { return to_json(hp).dump(); }

namespace detail {

inline double get_number(const HyperParams& hp, const std::string& key, double fallback) {
  const auto it = hp.find(key);
  if (it == hp.end()) return fallback;
  if (const auto* d = std::get_if<double>(&it->second)) return *d;
  throw Error(ErrorCode::InvalidArgument, "hyperparameter " + key + " must be numeric");
}

inline std::string get_string(const HyperParams& hp, const std::string& key, std::string fallback) {
  const auto it = hp.find(key);
  if (it == hp.end()) return fallback;
  if (const auto* s = std::get_if<std::string>(&it->second)) return *s;
  throw Error(ErrorCode::InvalidArgument, "hyperparameter " + key + " must be a string");
}

inline std::vector<int> get_tuple(const HyperParams& hp, const std::string& key, std::vector<int> fallback) {
  const auto it = hp.find(key);
  if (it == hp.end()) return fallback;
  if (const auto* v = std::get_if<std::vector<int>>(&it->second)) return *v;
  throw Error(ErrorCode::InvalidArgument, "hyperparameter " + key + " must be an integer tuple");
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace detail

/// Dense view of a labelled dataset: materialized feature rows with 0/1
/// targets, plus the per-class counts of pairs below the emission floor.
struct TrainingData {
  std::vector<FeatureVector> features;
  std::vector<double> y;
  std::size_t implicit_positive = 0;
  std::size_t implicit_negative = 0;

  static TrainingData from(const LabeledDataset& ds) {
    TrainingData td;
    td.features.reserve(ds.pairs.size());
    td.y.reserve(ds.pairs.size());
    for (const auto& p : ds.pairs) {
      if (!p.label) throw Error(ErrorCode::InvalidArgument, "training pair without label");
      td.features.push_back(p.features);
      td.y.push_back(*p.label == Label::Match ? 1.0 : 0.0);
    }
    td.implicit_positive = ds.implicit_positive;
    td.implicit_negative = ds.implicit_negative;
    return td;
  }

  std::size_t size() const noexcept { return features.size(); }
  std::size_t positives() const { return static_cast<std::size_t>(std::count(y.begin(), y.end(), 1.0)); }

  std::vector<FeatureRow> rows() const {
    std::vector<FeatureRow> x(features.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = features[i].d;
    return x;
  }

  /// Materialized subset selected by `keep` plus the given implicit counts.
  TrainingData subset(const std::vector<bool>& keep, std::size_t implicit_pos, std::size_t implicit_neg) const {
    TrainingData out;
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (!keep[i]) continue;
      out.features.push_back(features[i]);
      out.y.push_back(y[i]);
    }
    out.implicit_positive = implicit_pos;
    out.implicit_negative = implicit_neg;
    return out;
  }
};

/// Provenance digest over the ordered (id_a, id_b, label) triples.
inline std::string training_digest(const LabeledDataset& ds) {
  Digest d;
  for (const auto& p : ds.pairs) {
    d.update(p.id_a).update(",").update(p.id_b).update(",");
    d.update(p.label == Label::Match ? "1\n" : "0\n");
  }
  d.update("implicit:" + std::to_string(ds.implicit_positive) + "," + std::to_string(ds.implicit_negative));
  return d.hex();
}

/// Per-feature mean/variance standardization.
struct Standardizer {
  FeatureRow mean{};
  FeatureRow scale{1.0, 1.0, 1.0, 1.0, 1.0};

  static Standardizer fit(const std::vector<FeatureRow>& x) {
    Standardizer s;
    if (x.empty()) return s;
    const double n = static_cast<double>(x.size());
    for (const auto& row : x)
      for (int f = 0; f < kFieldCount; ++f) s.mean[f] += row[f] / n;
    FeatureRow var{};
    for (const auto& row : x)
      for (int f = 0; f < kFieldCount; ++f) var[f] += (row[f] - s.mean[f]) * (row[f] - s.mean[f]) / n;
    for (int f = 0; f < kFieldCount; ++f) s.scale[f] = var[f] > 1e-24 ? std::sqrt(var[f]) : 1.0;
    return s;
  }

  FeatureRow apply(const FeatureRow& row) const {
    FeatureRow out;
    for (int f = 0; f < kFieldCount; ++f) out[f] = (row[f] - mean[f]) / scale[f];
    return out;
  }

  std::vector<FeatureRow> apply(const std::vector<FeatureRow>& rows) const {
    std::vector<FeatureRow> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = apply(rows[i]);
    return out;
  }
};

struct Prediction {
  bool match = false;
  double confidence = 0.0;
  /// Match probability (the pooled Dice for the threshold model).
  double probability = 0.0;
};

/// Probabilistic decision rule: match iff p >= 0.5; confidence max(p, 1 - p).
inline Prediction decide(double p) { return {p >= 0.5, p >= 0.5 ? p : 1.0 - p, p}; }

// ---------------------------------------------------------------------------
// Threshold

struct ThresholdModel {
  double beta = 0.75;

  void validate() const {
    if (!(beta > 0.0 && beta <= 1.0)) throw Error(ErrorCode::InvalidArgument, "beta must be in (0, 1]");
  }
};

inline Prediction threshold_predict(const ThresholdModel& m, double d_all) {
  const bool match = d_all >= m.beta;
  return {match, match ? d_all : 1.0 - d_all, d_all};
}

// ---------------------------------------------------------------------------
// Logistic regression

enum class Penalty { L1, L2 };

struct LogisticHyper {
  /// Weight on positive-class samples; negatives weigh 1.
  double class_weight = 1.0;
  Penalty penalty = Penalty::L2;
  /// Inverse regularization strength.
  double C = 1.0;
  int max_iter = 100;
  double tol = 1e-6;

  static LogisticHyper from(const HyperParams& hp) {
    LogisticHyper h;
    h.class_weight = detail::get_number(hp, "class_weight", h.class_weight);
    const auto pen = detail::get_string(hp, "penalty", "l2");
    if (pen == "l1") h.penalty = Penalty::L1;
    else if (pen == "l2") h.penalty = Penalty::L2;
    else throw Error(ErrorCode::InvalidArgument, "penalty must be l1 or l2");
    h.C = detail::get_number(hp, "C", h.C);
    h.max_iter = static_cast<int>(detail::get_number(hp, "max_iter", h.max_iter));
    h.tol = detail::get_number(hp, "tol", h.tol);
    if (!(h.class_weight > 0) || !(h.C > 0) || h.max_iter < 1) throw Error(ErrorCode::InvalidArgument, "invalid LR hyperparameters");
    return h;
  }

  HyperParams to_params() const {
    return {{"class_weight", class_weight},
            {"penalty", std::string(penalty == Penalty::L1 ? "l1" : "l2")},
            {"C", C},
            {"max_iter", static_cast<double>(max_iter)}};
  }
};

struct LogisticModel {
  LogisticHyper hyper;
  FeatureRow weights{};
  double bias = 0.0;
  Standardizer standardizer;
  bool trained = false;
  bool converged = false;
  int iterations = 0;
  double final_loss = 0.0;

  double probability(const FeatureRow& raw) const {
    const auto x = standardizer.apply(raw);
    double z = bias;
    for (int f = 0; f < kFieldCount; ++f) z += weights[f] * x[f];
    return detail::sigmoid(z);
  }
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Smooth part of the LR objective on standardized rows:
///   (1/n) sum_i s_i * logloss_i  [+ ||w||^2 / (2 C n) for L2]
/// Gradient is ordered (w_0..w_4, bias). The L1 term is handled by the
/// proximal step and is excluded here.
inline LossAndGradient lr_loss_and_gradient(const FeatureRow& w, double b, const std::vector<FeatureRow>& x,
                                            const std::vector<double>& y, const LogisticHyper& hp) {
  const double n = static_cast<double>(x.size());
  LossAndGradient out;
  out.gradient.assign(kFieldCount + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = b;
    for (int f = 0; f < kFieldCount; ++f) z += w[f] * x[i][f];
    const double s = y[i] > 0.5 ? hp.class_weight : 1.0;
    // logloss = softplus(z) - y z
    out.loss += s * (detail::softplus(z) - y[i] * z) / n;
    const double r = s * (detail::sigmoid(z) - y[i]) / n;
    for (int f = 0; f < kFieldCount; ++f) out.gradient[f] += r * x[i][f];
    out.gradient[kFieldCount] += r;
  }
  if (hp.penalty == Penalty::L2) {
    for (int f = 0; f < kFieldCount; ++f) {
      out.loss += w[f] * w[f] / (2.0 * hp.C * n);
      out.gradient[f] += w[f] / (hp.C * n);
    }
  }
  return out;
}

struct LogisticTrainResult {
  LogisticModel model;
  std::optional<std::string> warning;
};

/// Proximal gradient descent with backtracking line search. Deterministic.
inline LogisticTrainResult lr_train(const TrainingData& data, const LogisticHyper& hp) {
  if (data.positives() == 0 || data.positives() == data.size()) {
    throw Error(ErrorCode::Degenerate, "logistic regression needs both classes among materialized pairs");
  }
  LogisticModel m;
  m.hyper = hp;
  const auto raw = data.rows();
  m.standardizer = Standardizer::fit(raw);
  const auto x = m.standardizer.apply(raw);
  const double n = static_cast<double>(x.size());
  const double l1 = hp.penalty == Penalty::L1 ? 1.0 / (hp.C * n) : 0.0;
  auto l1_term = [&](const FeatureRow& w) {
    double s = 0;
    for (double v : w) s += std::abs(v);
    return l1 * s;
  };

  FeatureRow w{};
  double b = 0.0;
  double step = 1.0;
  auto cur = lr_loss_and_gradient(w, b, x, data.y, hp);
  int it = 0;
  bool converged = false;
  for (; it < hp.max_iter && !converged; ++it) {
    for (int bt = 0; bt < 60; ++bt) {
      FeatureRow w_new;
      for (int f = 0; f < kFieldCount; ++f) {
        const double v = w[f] - step * cur.gradient[f];
        const double shrink = step * l1;
        w_new[f] = v > shrink ? v - shrink : (v < -shrink ? v + shrink : 0.0);
      }
      const double b_new = b - step * cur.gradient[kFieldCount];
      auto next = lr_loss_and_gradient(w_new, b_new, x, data.y, hp);
      double lin = 0.0, sq = 0.0;
      for (int f = 0; f < kFieldCount; ++f) {
        const double d = w_new[f] - w[f];
        lin += cur.gradient[f] * d;
        sq += d * d;
      }
      const double db = b_new - b;
      lin += cur.gradient[kFieldCount] * db;
      sq += db * db;
      if (next.loss <= cur.loss + lin + sq / (2.0 * step) + 1e-15) {
        const double prev_obj = cur.loss + l1_term(w);
        w = w_new;
        b = b_new;
        cur = std::move(next);
        const double obj = cur.loss + l1_term(w);
        converged = std::sqrt(sq) / step < hp.tol || std::abs(prev_obj - obj) <= hp.tol * std::max(1.0, std::abs(obj));
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
  }
  m.weights = w;
  m.bias = b;
  m.trained = true;
  m.converged = converged;
  m.iterations = it;
  m.final_loss = cur.loss + l1_term(w);
  LogisticTrainResult res{m, std::nullopt};
  if (!converged) {
    res.warning = std::string(to_string(ErrorCode::NoConvergence)) + ": logistic regression stopped after " +
                  std::to_string(it) + " iterations";
  }
  return res;
}

inline LogisticTrainResult lr_train(const LabeledDataset& ds, const LogisticHyper& hp) {
  return lr_train(TrainingData::from(ds), hp);
}

// ---------------------------------------------------------------------------
// Decision tree

struct TreeHyper {
  int max_leaf_nodes = 5;
  double ccp_alpha = 1e-4;

  static TreeHyper from(const HyperParams& hp) {
    TreeHyper h;
    h.max_leaf_nodes = static_cast<int>(detail::get_number(hp, "max_leaf_nodes", h.max_leaf_nodes));
    h.ccp_alpha = detail::get_number(hp, "ccp_alpha", h.ccp_alpha);
    if (h.max_leaf_nodes < 1 || h.ccp_alpha < 0) throw Error(ErrorCode::InvalidArgument, "invalid tree hyperparameters");
    return h;
  }

  HyperParams to_params() const {
    return {{"max_leaf_nodes", static_cast<double>(max_leaf_nodes)}, {"ccp_alpha", ccp_alpha}};
  }
};

struct TreeNode {
  /// -1 for leaves.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  /// Fraction of positive training samples reaching the node.
  double value = 0.0;
  std::size_t samples = 0;
  double impurity = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }
};

struct TreeModel {
  TreeHyper hyper;
  /// Node 0 is the root. Samples with x[feature] <= threshold go left.
  std::vector<TreeNode> nodes;
  bool trained = false;

  double probability(const FeatureRow& x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }

  int leaf_count() const {
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.is_leaf(); }));
  }

  /// Removes nodes unreachable from the root and renumbers in preorder.
  void compact() {
    std::vector<TreeNode> out;
    auto visit = [&](auto&& self, int i) -> int {
      const int id = static_cast<int>(out.size());
      out.push_back(nodes[static_cast<std::size_t>(i)]);
      if (!out.back().is_leaf()) {
        const int l = self(self, nodes[static_cast<std::size_t>(i)].left);
        const int r = self(self, nodes[static_cast<std::size_t>(i)].right);
        out[static_cast<std::size_t>(id)].left = l;
        out[static_cast<std::size_t>(id)].right = r;
      }
      return id;
    };
    if (!nodes.empty()) visit(visit, 0);
    nodes = std::move(out);
  }
};

namespace detail {

inline double gini(double pos, double total) {
  if (total <= 0) return 0.0;
  const double p = pos / total;
  return 2.0 * p * (1.0 - p);
}

struct SplitCandidate {
  bool valid = false;
  int feature = -1;
  double threshold = 0.0;
  /// Weighted impurity decrease (fraction of all samples).
  double decrease = 0.0;
};

inline SplitCandidate best_split(const std::vector<FeatureRow>& x, const std::vector<double>& y,
                                 const std::vector<std::size_t>& idx, double total_samples) {
  SplitCandidate best;
  const double n = static_cast<double>(idx.size());
  double pos = 0;
  for (auto i : idx) pos += y[i];
  const double parent = gini(pos, n) * n / total_samples;
  std::vector<std::size_t> order = idx;
  for (int f = 0; f < kFieldCount; ++f) {
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a][f] < x[b][f]; });
    double left_pos = 0;
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      left_pos += y[order[k]];
      const double lo = x[order[k]][f], hi = x[order[k + 1]][f];
      if (!(lo < hi)) continue;
      const double nl = static_cast<double>(k + 1), nr = n - nl;
      const double child = (gini(left_pos, nl) * nl + gini(pos - left_pos, nr) * nr) / total_samples;
      const double decrease = parent - child;
      if (decrease > best.decrease + 1e-15) {
        best = {true, f, lo + (hi - lo) / 2.0, decrease};
      }
    }
  }
  return best;
}

}  // namespace detail

/// Best-first Gini CART limited to max_leaf_nodes, then minimal
/// cost-complexity pruning at ccp_alpha. Ties prefer the lower feature index,
/// then the lower threshold; among leaves, the earlier-created one.
inline TreeModel tree_train(const TrainingData& td, const TreeHyper& hp) {
  struct {
    std::vector<FeatureRow> x;
    std::vector<double> y;
    std::size_t size() const { return x.size(); }
  } data{td.rows(), td.y};
  if (data.size() == 0) throw Error(ErrorCode::Degenerate, "tree training set is empty");
  const double total = static_cast<double>(data.size());
  TreeModel tree;
  tree.hyper = hp;

  struct Pending {
    int node;
    std::vector<std::size_t> idx;
    detail::SplitCandidate split;
  };
  auto make_node = [&](const std::vector<std::size_t>& idx) {
    TreeNode node;
    double pos = 0;
    for (auto i : idx) pos += data.y[i];
    node.samples = idx.size();
    node.value = idx.empty() ? 0.0 : pos / static_cast<double>(idx.size());
    node.impurity = detail::gini(pos, static_cast<double>(idx.size()));
    tree.nodes.push_back(node);
    return static_cast<int>(tree.nodes.size() - 1);
  };

  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<Pending> frontier;
  {
    const int root = make_node(all);
    auto split = detail::best_split(data.x, data.y, all, total);
    frontier.push_back({root, std::move(all), split});
  }
  int leaves = 1;
  while (leaves < hp.max_leaf_nodes) {
    std::size_t pick = frontier.size();
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      if (!frontier[k].split.valid) continue;
      if (pick == frontier.size() || frontier[k].split.decrease > frontier[pick].split.decrease + 1e-15) pick = k;
    }
    if (pick == frontier.size()) break;
    Pending cur = std::move(frontier[pick]);
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(pick));
    std::vector<std::size_t> li, ri;
    for (auto i : cur.idx) (data.x[i][cur.split.feature] <= cur.split.threshold ? li : ri).push_back(i);
    const int l = make_node(li);
    const int r = make_node(ri);
    auto& node = tree.nodes[static_cast<std::size_t>(cur.node)];
    node.feature = cur.split.feature;
    node.threshold = cur.split.threshold;
    node.left = l;
    node.right = r;
    auto ls = detail::best_split(data.x, data.y, li, total);
    auto rs = detail::best_split(data.x, data.y, ri, total);
    frontier.push_back({l, std::move(li), ls});
    frontier.push_back({r, std::move(ri), rs});
    ++leaves;
  }

  // Minimal cost-complexity pruning. R(t) = impurity(t) * samples(t) / N.
  auto risk = [&](const TreeNode& n) { return n.impurity * static_cast<double>(n.samples) / total; };
  for (;;) {
    double best_alpha = std::numeric_limits<double>::infinity();
    int best_node = -1;
    auto subtree = [&](auto&& self, int i) -> std::pair<double, int> {
      const auto& n = tree.nodes[static_cast<std::size_t>(i)];
      if (n.is_leaf()) return {risk(n), 1};
      const auto [rl, cl] = self(self, n.left);
      const auto [rr, cr] = self(self, n.right);
      const double r_sub = rl + rr;
      const int c = cl + cr;
      const double alpha = (risk(n) - r_sub) / static_cast<double>(c - 1);
      if (alpha < best_alpha - 1e-15) {
        best_alpha = alpha;
        best_node = i;
      }
      return {r_sub, c};
    };
    subtree(subtree, 0);
    if (best_node < 0 || best_alpha > hp.ccp_alpha) break;
    auto& n = tree.nodes[static_cast<std::size_t>(best_node)];
    n.feature = -1;
    n.left = n.right = -1;
  }
  tree.compact();
  tree.trained = true;
  return tree;
}

inline TreeModel tree_train(const LabeledDataset& ds, const TreeHyper& hp) { return tree_train(TrainingData::from(ds), hp); }

// ---------------------------------------------------------------------------
// Multi-layer perceptron

struct MlpHyper {
  std::vector<int> hidden = {15};
  double alpha = 1e-4;
  double learning_rate = 1e-3;
  int batch_size = 200;
  int max_epochs = 200;
  double tol = 1e-4;
  int n_iter_no_change = 10;

  static MlpHyper from(const HyperParams& hp) {
    MlpHyper h;
    h.hidden = detail::get_tuple(hp, "hidden", h.hidden);
    h.alpha = detail::get_number(hp, "alpha", h.alpha);
    h.learning_rate = detail::get_number(hp, "learning_rate", h.learning_rate);
    h.batch_size = static_cast<int>(detail::get_number(hp, "batch_size", h.batch_size));
    h.max_epochs = static_cast<int>(detail::get_number(hp, "max_epochs", h.max_epochs));
    h.tol = detail::get_number(hp, "tol", h.tol);
    h.n_iter_no_change = static_cast<int>(detail::get_number(hp, "n_iter_no_change", h.n_iter_no_change));
    if (h.hidden.empty() || std::any_of(h.hidden.begin(), h.hidden.end(), [](int s) { return s < 1; }) ||
        h.alpha < 0 || !(h.learning_rate > 0) || h.batch_size < 1 || h.max_epochs < 1) {
      throw Error(ErrorCode::InvalidArgument, "invalid MLP hyperparameters");
    }
    return h;
  }

  HyperParams to_params() const {
    return {{"hidden", hidden}, {"alpha", alpha}, {"learning_rate", learning_rate},
            {"batch_size", static_cast<double>(batch_size)}, {"max_epochs", static_cast<double>(max_epochs)}};
  }
};

/// Dense layer; weights row-major (out x in).
struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
};

struct MlpModel {
  MlpHyper hyper;
  std::vector<DenseLayer> layers;
  Standardizer standardizer;
  bool trained = false;
  bool converged = false;
  int epochs = 0;
  double final_loss = 0.0;

  std::vector<int> layer_sizes() const {
    std::vector<int> s;
    if (layers.empty()) return s;
    s.push_back(layers.front().in);
    for (const auto& l : layers) s.push_back(l.out);
    return s;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  /// Flattened parameters: per layer, weights then biases.
  std::vector<double> flat() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    for (const auto& l : layers) {
      p.insert(p.end(), l.weights.begin(), l.weights.end());
      p.insert(p.end(), l.bias.begin(), l.bias.end());
    }
    return p;
  }

  void set_flat(const std::vector<double>& p) {
    std::size_t k = 0;
    for (auto& l : layers) {
      for (auto& w : l.weights) w = p[k++];
      for (auto& b : l.bias) b = p[k++];
    }
  }

  /// Logit of the output unit for a standardized input.
  double logit(const FeatureRow& x) const {
    std::vector<double> a(x.begin(), x.end());
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const auto& l = layers[li];
      std::vector<double> z(static_cast<std::size_t>(l.out));
      for (int o = 0; o < l.out; ++o) {
        double s = l.bias[static_cast<std::size_t>(o)];
        for (int i = 0; i < l.in; ++i) s += l.weights[static_cast<std::size_t>(o * l.in + i)] * a[static_cast<std::size_t>(i)];
        z[static_cast<std::size_t>(o)] = li + 1 < layers.size() ? std::max(0.0, s) : s;
      }
      a = std::move(z);
    }
    return a[0];
  }

  double probability(const FeatureRow& raw) const { return detail::sigmoid(logit(standardizer.apply(raw))); }
};

/// Glorot-uniform initialization (gain 2 instead of 6 on the logistic output).
inline MlpModel mlp_init(const MlpHyper& hp, std::uint64_t seed) {
  MlpModel m;
  m.hyper = hp;
  Rng rng(derive_seed(seed, "mlp/init"));
  std::vector<int> sizes = {kFieldCount};
  sizes.insert(sizes.end(), hp.hidden.begin(), hp.hidden.end());
  sizes.push_back(1);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    DenseLayer l;
    l.in = sizes[i];
    l.out = sizes[i + 1];
    const double gain = i + 2 == sizes.size() ? 2.0 : 6.0;
    const double bound = std::sqrt(gain / (l.in + l.out));
    l.weights.resize(static_cast<std::size_t>(l.in * l.out));
    l.bias.resize(static_cast<std::size_t>(l.out));
    for (auto& w : l.weights) w = uniform_real(rng, -bound, bound);
    for (auto& b : l.bias) b = uniform_real(rng, -bound, bound);
    m.layers.push_back(std::move(l));
  }
  return m;
}

/// Mean binary cross-entropy over the rows in `batch` plus
/// alpha * ||W||^2 / (2 |batch|), and its gradient in flat() order.
/// Rows must already be standardized.
inline LossAndGradient mlp_loss_and_gradient(const MlpModel& m, const std::vector<FeatureRow>& x,
                                             const std::vector<double>& y, const std::vector<std::size_t>& batch) {
  const std::size_t L = m.layers.size();
  const double n = static_cast<double>(batch.size());
  LossAndGradient out;
  out.gradient.assign(m.parameter_count(), 0.0);
  std::vector<std::size_t> offset(L);
  {
    std::size_t k = 0;
    for (std::size_t li = 0; li < L; ++li) {
      offset[li] = k;
      k += m.layers[li].weights.size() + m.layers[li].bias.size();
    }
  }
  std::vector<std::vector<double>> act(L + 1);
  std::vector<double> delta, prev_delta;
  for (auto row : batch) {
    act[0].assign(x[row].begin(), x[row].end());
    for (std::size_t li = 0; li < L; ++li) {
      const auto& l = m.layers[li];
      auto& a = act[li + 1];
      a.assign(static_cast<std::size_t>(l.out), 0.0);
      for (int o = 0; o < l.out; ++o) {
        double s = l.bias[static_cast<std::size_t>(o)];
        for (int i = 0; i < l.in; ++i) s += l.weights[static_cast<std::size_t>(o * l.in + i)] * act[li][static_cast<std::size_t>(i)];
        a[static_cast<std::size_t>(o)] = li + 1 < L ? std::max(0.0, s) : s;
      }
    }
    const double z = act[L][0];
    out.loss += (detail::softplus(z) - y[row] * z) / n;
    delta.assign(1, (detail::sigmoid(z) - y[row]) / n);
    for (std::size_t li = L; li-- > 0;) {
      const auto& l = m.layers[li];
      double* g = out.gradient.data() + offset[li];
      for (int o = 0; o < l.out; ++o) {
        const double d = delta[static_cast<std::size_t>(o)];
        for (int i = 0; i < l.in; ++i) g[o * l.in + i] += d * act[li][static_cast<std::size_t>(i)];
        g[l.weights.size() + static_cast<std::size_t>(o)] += d;
      }
      if (li == 0) break;
      prev_delta.assign(static_cast<std::size_t>(l.in), 0.0);
      for (int i = 0; i < l.in; ++i) {
        if (act[li][static_cast<std::size_t>(i)] <= 0.0) continue;
        double s = 0;
        for (int o = 0; o < l.out; ++o) s += l.weights[static_cast<std::size_t>(o * l.in + i)] * delta[static_cast<std::size_t>(o)];
        prev_delta[static_cast<std::size_t>(i)] = s;
      }
      std::swap(delta, prev_delta);
    }
  }
  for (std::size_t li = 0; li < L; ++li) {
    const auto& l = m.layers[li];
    double* g = out.gradient.data() + offset[li];
    for (std::size_t k = 0; k < l.weights.size(); ++k) {
      out.loss += m.hyper.alpha * l.weights[k] * l.weights[k] / (2.0 * n);
      g[k] += m.hyper.alpha * l.weights[k] / n;
    }
  }
  return out;
}

struct MlpTrainResult {
  MlpModel model;
  std::optional<std::string> warning;
};

/// Mini-batch Adam. Batch order per epoch comes from a seed-derived shuffle.
/// Stops when the epoch loss fails to improve by `tol` for
/// `n_iter_no_change` consecutive epochs.
inline MlpTrainResult mlp_train(const TrainingData& data, const MlpHyper& hp, std::uint64_t seed) {
  if (data.positives() == 0 || data.positives() == data.size()) {
    throw Error(ErrorCode::Degenerate, "MLP needs both classes among materialized pairs");
  }
  MlpModel m = mlp_init(hp, seed);
  const auto raw = data.rows();
  m.standardizer = Standardizer::fit(raw);
  const auto x = m.standardizer.apply(raw);

  auto params = m.flat();
  std::vector<double> first(params.size(), 0.0), second(params.size(), 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  double beta1_t = 1.0, beta2_t = 1.0;

  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "mlp/batches"));
  const auto batch = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(hp.batch_size), x.size()));

  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  int epoch = 0;
  bool converged = false;
  double epoch_loss = 0.0;
  std::vector<std::size_t> rows;
  for (; epoch < hp.max_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
      m.set_flat(params);
      const auto lg = mlp_loss_and_gradient(m, x, data.y, rows);
      epoch_loss += lg.loss * static_cast<double>(rows.size());
      beta1_t *= kBeta1;
      beta2_t *= kBeta2;
      const double lr = hp.learning_rate * std::sqrt(1.0 - beta2_t) / (1.0 - beta1_t);
      for (std::size_t k = 0; k < params.size(); ++k) {
        first[k] = kBeta1 * first[k] + (1 - kBeta1) * lg.gradient[k];
        second[k] = kBeta2 * second[k] + (1 - kBeta2) * lg.gradient[k] * lg.gradient[k];
        params[k] -= lr * first[k] / (std::sqrt(second[k]) + kEps);
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    if (epoch_loss > best - hp.tol) {
      if (++stale >= hp.n_iter_no_change) {
        converged = true;
        ++epoch;
        break;
      }
    } else {
      stale = 0;
    }
    best = std::min(best, epoch_loss);
  }
  m.set_flat(params);
  m.trained = true;
  m.converged = converged;
  m.epochs = epoch;
  m.final_loss = epoch_loss;
  MlpTrainResult res{m, std::nullopt};
  if (!converged) {
    res.warning = std::string(to_string(ErrorCode::NoConvergence)) + ": MLP stopped after " + std::to_string(epoch) + " epochs";
  }
  return res;
}

inline MlpTrainResult mlp_train(const LabeledDataset& ds, const MlpHyper& hp, std::uint64_t seed) {
  return mlp_train(TrainingData::from(ds), hp, seed);
}

// ---------------------------------------------------------------------------
// Uniform model interface

using Model = std::variant<ThresholdModel, LogisticModel, TreeModel, MlpModel>;

inline ModelType model_type(const Model& m) {
  return std::visit(
      [](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ThresholdModel>) return ModelType::Threshold;
        else if constexpr (std::is_same_v<T, LogisticModel>) return ModelType::Logistic;
        else if constexpr (std::is_same_v<T, TreeModel>) return ModelType::Tree;
        else return ModelType::Mlp;
      },
      m);
}

inline Prediction predict(const Model& model, const FeatureVector& fv) {
  return std::visit(
      [&](const auto& m) -> Prediction {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ThresholdModel>) {
          return threshold_predict(m, fv.d_all);
        } else {
          if (!m.trained) throw Error(ErrorCode::Untrained, "model has not been trained");
          return decide(m.probability(fv.d));
        }
      },
      model);
}

struct TrainOutcome {
  Model model;
  std::optional<std::string> warning;
};

inline HyperParams model_hyperparameters(const Model& model) {
  return std::visit(
      [](const auto& m) -> HyperParams {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ThresholdModel>) return {{"beta", m.beta}};
        else return m.hyper.to_params();
      },
      model);
}

/// Trains one model type on the materialized pairs of `ds`.
inline TrainOutcome train_model(ModelType type, const HyperParams& hp, const TrainingData& ds, std::uint64_t seed) {
  switch (type) {
    case ModelType::Threshold: {
      ThresholdModel m{detail::get_number(hp, "beta", 0.75)};
      m.validate();
      return {m, std::nullopt};
    }
    case ModelType::Logistic: {
      auto r = lr_train(ds, LogisticHyper::from(hp));
      return {r.model, r.warning};
    }
    case ModelType::Tree:
      return {tree_train(ds, TreeHyper::from(hp)), std::nullopt};
    case ModelType::Mlp: {
      auto r = mlp_train(ds, MlpHyper::from(hp), seed);
      return {r.model, r.warning};
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model type");
}

inline TrainOutcome train_model(ModelType type, const HyperParams& hp, const LabeledDataset& ds, std::uint64_t seed) {
  return train_model(type, hp, TrainingData::from(ds), seed);
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json standardizer_json(const Standardizer& s) { return {{"mean", s.mean}, {"scale", s.scale}}; }

inline Standardizer standardizer_from_json(const nlohmann::json& j) {
  Standardizer s;
  s.mean = j.at("mean").get<FeatureRow>();
  s.scale = j.at("scale").get<FeatureRow>();
  return s;
}

inline nlohmann::json model_to_json(const Model& model, const std::string& digest) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["model_type"] = to_string(model_type(model));
  j["hyperparameters"] = to_json(model_hyperparameters(model));
  j["training_digest"] = digest;
  j["standardization"] = nullptr;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ThresholdModel>) {
          j["parameters"] = {{"beta", m.beta}};
        } else if constexpr (std::is_same_v<T, LogisticModel>) {
          j["parameters"] = {{"weights", m.weights}, {"bias", m.bias}, {"converged", m.converged},
                             {"iterations", m.iterations}, {"final_loss", m.final_loss}};
          j["standardization"] = standardizer_json(m.standardizer);
        } else if constexpr (std::is_same_v<T, TreeModel>) {
          nlohmann::json nodes = nlohmann::json::array();
          for (const auto& n : m.nodes) {
            nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right},
                             {"value", n.value}, {"samples", n.samples}, {"impurity", n.impurity}});
          }
          j["parameters"] = {{"nodes", nodes}};
        } else {
          nlohmann::json layers = nlohmann::json::array();
          for (const auto& l : m.layers) {
            layers.push_back({{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}});
          }
          j["parameters"] = {{"layers", layers}, {"converged", m.converged}, {"epochs", m.epochs},
                             {"final_loss", m.final_loss}};
          j["standardization"] = standardizer_json(m.standardizer);
        }
      },
      model);
  return j;
}

inline Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorCode::Schema, "unsupported model format version");
    }
    const auto type = parse_model_type(j.at("model_type").get<std::string>());
    const auto hp = hyper_params_from_json(j.at("hyperparameters"));
    const auto& p = j.at("parameters");
    switch (type) {
      case ModelType::Threshold: {
        ThresholdModel m{p.at("beta").get<double>()};
        m.validate();
        return m;
      }
      case ModelType::Logistic: {
        LogisticModel m;
        m.hyper = LogisticHyper::from(hp);
        m.weights = p.at("weights").get<FeatureRow>();
        m.bias = p.at("bias").get<double>();
        m.converged = p.at("converged").get<bool>();
        m.iterations = p.at("iterations").get<int>();
        m.final_loss = p.at("final_loss").get<double>();
        m.standardizer = standardizer_from_json(j.at("standardization"));
        m.trained = true;
        return m;
      }
      case ModelType::Tree: {
        TreeModel m;
        m.hyper = TreeHyper::from(hp);
        for (const auto& n : p.at("nodes")) {
          TreeNode node;
          node.feature = n.at("feature").get<int>();
          node.threshold = n.at("threshold").get<double>();
          node.left = n.at("left").get<int>();
          node.right = n.at("right").get<int>();
          node.value = n.at("value").get<double>();
          node.samples = n.at("samples").get<std::size_t>();
          node.impurity = n.at("impurity").get<double>();
          m.nodes.push_back(node);
        }
        const int count = static_cast<int>(m.nodes.size());
        for (const auto& n : m.nodes) {
          if (!n.is_leaf() && (n.feature >= kFieldCount || n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count)) {
            throw Error(ErrorCode::Schema, "malformed tree node");
          }
        }
        if (m.nodes.empty()) throw Error(ErrorCode::Schema, "tree has no nodes");
        m.trained = true;
        return m;
      }
      case ModelType::Mlp: {
        MlpModel m;
        m.hyper = MlpHyper::from(hp);
        for (const auto& l : p.at("layers")) {
          DenseLayer layer;
          layer.in = l.at("in").get<int>();
          layer.out = l.at("out").get<int>();
          layer.weights = l.at("weights").get<std::vector<double>>();
          layer.bias = l.at("bias").get<std::vector<double>>();
          if (layer.weights.size() != static_cast<std::size_t>(layer.in * layer.out) ||
              layer.bias.size() != static_cast<std::size_t>(layer.out)) {
            throw Error(ErrorCode::Schema, "MLP layer shape mismatch");
          }
          m.layers.push_back(std::move(layer));
        }
        if (m.layers.empty() || m.layers.front().in != kFieldCount || m.layers.back().out != 1) {
          throw Error(ErrorCode::Schema, "MLP must map 5 inputs to 1 output");
        }
        for (std::size_t i = 1; i < m.layers.size(); ++i) {
          if (m.layers[i].in != m.layers[i - 1].out) throw Error(ErrorCode::Schema, "MLP layer shapes are inconsistent");
        }
        m.converged = p.at("converged").get<bool>();
        m.epochs = p.at("epochs").get<int>();
        m.final_loss = p.at("final_loss").get<double>();
        m.standardizer = standardizer_from_json(j.at("standardization"));
        m.trained = true;
        return m;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("model file: ") + e.what());
  }
  throw Error(ErrorCode::Schema, "unknown model type");
}

}  // namespace hhlink
