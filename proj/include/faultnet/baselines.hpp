#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "faultnet/errors.hpp"
#include "faultnet/features.hpp"
#include "faultnet/model.hpp"
#include "faultnet/rng.hpp"

namespace faultnet {

// ---------------------------------------------------------------------------
// Feature matrix

struct FeatureMatrix {
  std::size_t n_features = 0;
  std::vector<double> values;  // N x n_features, row-major
  std::vector<int> labels;
  std::vector<std::string> feature_names;

  std::size_t n_rows() const { return labels.size(); }
  const double* row(std::size_t i) const { return values.data() + i * n_features; }

  void validate() const {
    if (labels.empty()) throw EmptyMatrix("FeatureMatrix: no rows");
    if (values.size() != labels.size() * n_features) {
      throw ShapeMismatch("FeatureMatrix: values/labels size mismatch");
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw NonFinite("FeatureMatrix: non-finite entry");
    }
  }
};

inline FeatureMatrix to_feature_matrix(const std::vector<FeatureVector>& fvs) {
  FeatureMatrix m;
  m.n_features = FeatureVector::kCount;
  m.feature_names.assign(FeatureVector::names().begin(),
                         FeatureVector::names().end());
  m.values.reserve(fvs.size() * m.n_features);
  m.labels.reserve(fvs.size());
  for (const FeatureVector& f : fvs) {
    const auto arr = f.as_array();
    m.values.insert(m.values.end(), arr.begin(), arr.end());
    m.labels.push_back(f.label);
  }
  return m;
}

// Per-feature z-score statistics, fitted on training rows only and then
// applied unchanged to anything else (no leakage by construction).
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std;

  static Standardizer fit(const FeatureMatrix& m) {
    m.validate();
    Standardizer s;
    s.mean.assign(m.n_features, 0.0);
    s.std.assign(m.n_features, 0.0);
    const double n = static_cast<double>(m.n_rows());
    for (std::size_t j = 0; j < m.n_features; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < m.n_rows(); ++i) sum += m.row(i)[j];
      const double mu = sum / n;
      double var = 0.0;
      for (std::size_t i = 0; i < m.n_rows(); ++i) {
        const double d = m.row(i)[j] - mu;
        var += d * d;
      }
      var /= n;
      s.mean[j] = mu;
      s.std[j] = var < 1e-24 ? 1.0 : std::sqrt(var);
    }
    return s;
  }

  FeatureMatrix apply(const FeatureMatrix& m) const {
    FeatureMatrix out = m;
    for (std::size_t i = 0; i < out.n_rows(); ++i) {
      double* row = out.values.data() + i * out.n_features;
      for (std::size_t j = 0; j < out.n_features; ++j) {
        row[j] = (row[j] - mean[j]) / std[j];
      }
    }
    return out;
  }
};

namespace detail {

inline int count_classes(const std::vector<int>& labels) {
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw BadLabel("negative class label");
    max_label = std::max(max_label, l);
  }
  return max_label + 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Random forest: CART trees with Gini splits over bootstrap samples, a random
// sqrt-sized feature subset per node, grown until pure (min 1 sample per
// leaf). Importances are the forest-normalized impurity decreases. Exact
// Gini-gain ties break to the lowest feature index, then lowest threshold,
// so the forest is identical no matter how tree training is scheduled; each
// tree draws from its own seed derived from the master.

struct TreeNode {
  int feature = -1;          // -1 for leaves
  double threshold = 0.0;    // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  std::vector<std::size_t> class_counts;  // leaves only
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  int predict(const double* row) const {
    int idx = 0;
    while (nodes[idx].feature >= 0) {
      idx = row[nodes[idx].feature] <= nodes[idx].threshold ? nodes[idx].left
                                                            : nodes[idx].right;
    }
    const auto& counts = nodes[idx].class_counts;
    return static_cast<int>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::vector<double> importances;  // per feature, summing to 1
  int n_classes = 0;
};

struct ForestOptions {
  std::size_t n_trees = 100;
  std::uint64_t seed = 0;
  // Features considered per node; 0 applies the usual ceil(sqrt(D)) rule.
  std::size_t max_features = 0;
};

namespace detail {

struct TreeBuilder {
  const FeatureMatrix& data;
  int n_classes;
  std::size_t max_features;
  Rng rng;
  DecisionTree tree;
  std::vector<double>& importance_accum;  // impurity decrease per feature
  double n_total;

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = -1.0;
  };

  static double gini(const std::vector<std::size_t>& counts, double n) {
    double g = 1.0;
    for (std::size_t c : counts) {
      const double p = static_cast<double>(c) / n;
      g -= p * p;
    }
    return g;
  }

  Split best_split(const std::vector<std::size_t>& rows,
                   const std::vector<std::size_t>& counts) {
    const std::size_t n_features = data.n_features;
    // Random feature subset of size max_features, Fisher-Yates prefix.
    std::vector<std::size_t> features(n_features);
    std::iota(features.begin(), features.end(), 0);
    for (std::size_t i = 0; i < max_features && i + 1 < n_features; ++i) {
      const std::size_t j = i + rng.uniform_index(n_features - i);
      std::swap(features[i], features[j]);
    }
    features.resize(std::min(max_features, n_features));
    // Deterministic tie-breaking needs an ordered scan.
    std::sort(features.begin(), features.end());

    const double n_node = static_cast<double>(rows.size());
    const double parent_gini = gini(counts, n_node);

    Split best;
    std::vector<std::pair<double, int>> sorted;  // (value, label)
    std::vector<std::size_t> left_counts(static_cast<std::size_t>(n_classes));
    for (std::size_t f : features) {
      sorted.clear();
      sorted.reserve(rows.size());
      for (std::size_t r : rows) {
        sorted.emplace_back(data.row(r)[f], data.labels[r]);
      }
      std::sort(sorted.begin(), sorted.end());
      std::fill(left_counts.begin(), left_counts.end(), 0);
      std::size_t n_left = 0;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        ++left_counts[static_cast<std::size_t>(sorted[i].second)];
        ++n_left;
        if (sorted[i].first == sorted[i + 1].first) continue;
        const double nl = static_cast<double>(n_left);
        const double nr = n_node - nl;
        double gl = 1.0, gr = 1.0;
        for (int c = 0; c < n_classes; ++c) {
          const double pl = static_cast<double>(left_counts[static_cast<std::size_t>(c)]) / nl;
          const double pr =
              static_cast<double>(counts[static_cast<std::size_t>(c)] -
                                  left_counts[static_cast<std::size_t>(c)]) /
              nr;
          gl -= pl * pl;
          gr -= pr * pr;
        }
        const double gain = parent_gini - (nl / n_node) * gl - (nr / n_node) * gr;
        if (gain > best.gain + 1e-15) {
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (sorted[i].first + sorted[i + 1].first);
          best.gain = gain;
        }
        // Equal gains keep the earlier (lower feature, lower threshold) split.
      }
    }
    return best;
  }

  int build(const std::vector<std::size_t>& rows) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
    for (std::size_t r : rows) {
      ++counts[static_cast<std::size_t>(data.labels[r])];
    }
    const std::size_t n_present =
        static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(),
                                               [](std::size_t c) { return c > 0; }));

    const int node_idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    Split split;
    if (rows.size() >= 2 && n_present >= 2) split = best_split(rows, counts);

    if (split.feature < 0 || split.gain <= 0.0) {
      tree.nodes[static_cast<std::size_t>(node_idx)].class_counts = counts;
      return node_idx;
    }

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
      if (data.row(r)[split.feature] <= split.threshold) {
        left_rows.push_back(r);
      } else {
        right_rows.push_back(r);
      }
    }
    // Weighted impurity decrease, accumulated per feature.
    importance_accum[static_cast<std::size_t>(split.feature)] +=
        (static_cast<double>(rows.size()) / n_total) * split.gain;

    const int left = build(left_rows);
    const int right = build(right_rows);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(node_idx)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return node_idx;
  }
};

}  // namespace detail

inline ForestModel train_random_forest(const FeatureMatrix& matrix,
                                       const ForestOptions& opt = {}) {
  matrix.validate();
  const int n_classes = detail::count_classes(matrix.labels);
  if (std::set<int>(matrix.labels.begin(), matrix.labels.end()).size() < 2) {
    throw SingleClass("train_random_forest: single-class training data");
  }
  const std::size_t n = matrix.n_rows();
  const std::size_t max_features =
      opt.max_features > 0
          ? std::min(opt.max_features, matrix.n_features)
          : static_cast<std::size_t>(
                std::ceil(std::sqrt(static_cast<double>(matrix.n_features))));

  ForestModel model;
  model.n_classes = n_classes;
  model.importances.assign(matrix.n_features, 0.0);
  model.trees.reserve(opt.n_trees);

  for (std::size_t t = 0; t < opt.n_trees; ++t) {
    detail::TreeBuilder builder{matrix,
                                n_classes,
                                max_features,
                                Rng(derive_seed(opt.seed, t)),
                                {},
                                model.importances,
                                static_cast<double>(n)};
    std::vector<std::size_t> bootstrap(n);
    for (std::size_t i = 0; i < n; ++i) {
      bootstrap[i] = builder.rng.uniform_index(n);
    }
    builder.build(bootstrap);
    model.trees.push_back(std::move(builder.tree));
  }

  double total = 0.0;
  for (double v : model.importances) total += v;
  if (total > 0.0) {
    for (double& v : model.importances) v /= total;
  }
  return model;
}

inline std::vector<int> predict_forest(const ForestModel& model,
                                       const FeatureMatrix& rows) {
  if (rows.n_features == 0 || rows.n_rows() == 0) {
    throw EmptyMatrix("predict_forest: no query rows");
  }
  std::vector<int> out(rows.n_rows());
  std::vector<std::size_t> votes(static_cast<std::size_t>(model.n_classes));
  for (std::size_t i = 0; i < rows.n_rows(); ++i) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const DecisionTree& tree : model.trees) {
      ++votes[static_cast<std::size_t>(tree.predict(rows.row(i)))];
    }
    out[i] = static_cast<int>(std::max_element(votes.begin(), votes.end()) -
                              votes.begin());
  }
  return out;
}

// Importance report CSV (feature_name, importance), sorted descending.
inline void write_importance_csv(const std::string& path,
                                 const std::vector<std::string>& names,
                                 const std::vector<double>& importances) {
  if (names.size() != importances.size()) {
    throw LengthMismatch("write_importance_csv: names/importances mismatch");
  }
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return importances[a] > importances[b];
  });
  std::ofstream out(path);
  if (!out) throw IoError("cannot write importance CSV: " + path);
  out << "feature,importance\n";
  char buf[64];
  for (std::size_t i : order) {
    std::snprintf(buf, sizeof(buf), "%.17g", importances[i]);
    out << names[i] << ',' << buf << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// k-nearest neighbors. Expects pre-standardized features (z-scores from the
// training statistics). Euclidean distance; majority vote among the k
// nearest, distance ties to the lower row index, vote ties to the smallest
// class label.

inline std::vector<int> knn_classify(const FeatureMatrix& train,
                                     const FeatureMatrix& queries,
                                     std::size_t k = 5) {
  train.validate();
  if (queries.n_features != train.n_features) {
    throw ShapeMismatch("knn_classify: feature count mismatch");
  }
  if (k == 0 || k > train.n_rows()) {
    throw KTooLarge("knn_classify: k=" + std::to_string(k) + " with " +
                    std::to_string(train.n_rows()) + " training rows");
  }
  const int n_classes = detail::count_classes(train.labels);
  std::vector<int> out(queries.n_rows());
  std::vector<std::pair<double, std::size_t>> dist(train.n_rows());
  std::vector<std::size_t> votes(static_cast<std::size_t>(n_classes));
  for (std::size_t q = 0; q < queries.n_rows(); ++q) {
    const double* qrow = queries.row(q);
    for (std::size_t i = 0; i < train.n_rows(); ++i) {
      const double* trow = train.row(i);
      double d2 = 0.0;
      for (std::size_t j = 0; j < train.n_features; ++j) {
        const double d = qrow[j] - trow[j];
        d2 += d * d;
      }
      dist[i] = {d2, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k),
                      dist.end());
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
      ++votes[static_cast<std::size_t>(train.labels[dist[i].second])];
    }
    out[q] = static_cast<int>(std::max_element(votes.begin(), votes.end()) -
                              votes.begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression by full-batch gradient descent on softmax
// cross-entropy with L2 on the weights (not the bias). Expects standardized
// features.

struct LogRegModel {
  Tensor weights;  // D x C
  Tensor bias;     // C
};

struct LogRegOptions {
  double l2 = 1e-4;
  double lr = 0.01;
  std::size_t epochs = 500;
  std::uint64_t seed = 0;
};

inline LogRegModel train_logreg(const FeatureMatrix& matrix,
                                const LogRegOptions& opt = {}) {
  matrix.validate();
  const int n_classes = detail::count_classes(matrix.labels);
  if (std::set<int>(matrix.labels.begin(), matrix.labels.end()).size() < 2) {
    throw SingleClass("train_logreg: single-class training data");
  }
  const std::size_t n = matrix.n_rows(), d = matrix.n_features;
  const std::size_t c = static_cast<std::size_t>(n_classes);

  LogRegModel model;
  model.weights = Tensor({d, c});
  model.bias = Tensor({c});
  Rng rng(opt.seed);
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    model.weights[i] = rng.uniform(-1e-3, 1e-3);
  }

  Tensor x = Tensor::from_values({n, d}, matrix.values);
  // The L2 term is applied proximally (w <- (w - lr*g) / (1 + lr*l2)), which
  // stays stable for arbitrarily strong regularization and matches the plain
  // penalty gradient to first order in lr.
  const double shrink = 1.0 / (1.0 + opt.lr * opt.l2);
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    Tensor logits = nn::fully_connected(x, model.weights, model.bias);
    nn::SoftmaxCrossEntropy sce = nn::softmax_cross_entropy(logits, matrix.labels);
    nn::DenseGrads g = nn::fully_connected_backward(sce.grad_logits, x,
                                                    model.weights);
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
      model.weights[i] = (model.weights[i] - opt.lr * g.weights[i]) * shrink;
    }
    for (std::size_t i = 0; i < model.bias.size(); ++i) {
      model.bias[i] -= opt.lr * g.bias[i];
    }
  }
  return model;
}

inline std::vector<int> predict_logreg(const LogRegModel& model,
                                       const FeatureMatrix& rows) {
  Tensor x = Tensor::from_values({rows.n_rows(), rows.n_features}, rows.values);
  Tensor logits = nn::fully_connected(x, model.weights, model.bias);
  std::vector<int> out(rows.n_rows());
  for (std::size_t i = 0; i < rows.n_rows(); ++i) {
    out[i] = detail::argmax_row(logits.data() + i * logits.dim(1), logits.dim(1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// MLP baseline: one 256-unit ReLU hidden layer on the 14 features, trained
// with the same minibatch Adam loop as FaultNet.

struct MlpOptions {
  std::size_t hidden = 256;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double lr = 0.001;
  std::uint64_t seed = 0;
};

struct MlpModel {
  nn::Network net;
  std::vector<EpochStats> history;
  std::size_t n_features = 0;
  int n_classes = 0;
};

inline MlpModel train_mlp_baseline(const FeatureMatrix& matrix,
                                   const MlpOptions& opt = {}) {
  matrix.validate();
  const int n_classes = detail::count_classes(matrix.labels);
  if (std::set<int>(matrix.labels.begin(), matrix.labels.end()).size() < 2) {
    throw SingleClass("train_mlp_baseline: single-class training data");
  }
  MlpModel model;
  model.n_features = matrix.n_features;
  model.n_classes = n_classes;

  Rng init(derive_seed(opt.seed, 0));
  model.net.add<nn::DenseLayer>(matrix.n_features,
                                opt.hidden, init);
  model.net.add<nn::ReluLayer>();
  model.net.add<nn::DenseLayer>(opt.hidden, static_cast<std::size_t>(n_classes),
                                init);

  std::vector<Tensor> samples;
  samples.reserve(matrix.n_rows());
  for (std::size_t i = 0; i < matrix.n_rows(); ++i) {
    samples.push_back(Tensor::from_values(
        {matrix.n_features},
        std::vector<double>(matrix.row(i), matrix.row(i) + matrix.n_features)));
  }

  TrainOptions train_opt;
  train_opt.epochs = opt.epochs;
  train_opt.batch_size = opt.batch_size;
  train_opt.adam.lr = opt.lr;
  train_opt.shuffle_seed = derive_seed(opt.seed, 2);
  model.history = train_network(model.net, samples, matrix.labels, train_opt);
  return model;
}

inline std::vector<int> predict_mlp(MlpModel& model, const FeatureMatrix& rows) {
  if (rows.n_features != model.n_features) {
    throw ShapeMismatch("predict_mlp: feature count mismatch");
  }
  Tensor x = Tensor::from_values({rows.n_rows(), rows.n_features}, rows.values);
  Tensor logits = model.net.forward(x, nn::Mode::kEval);
  std::vector<int> out(rows.n_rows());
  for (std::size_t i = 0; i < rows.n_rows(); ++i) {
    out[i] = detail::argmax_row(logits.data() + i * logits.dim(1), logits.dim(1));
  }
  return out;
}

}  // namespace faultnet
