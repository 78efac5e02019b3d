#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "faultnet/baselines.hpp"
#include "faultnet/rng.hpp"
#include "support/gradcheck.hpp"

using namespace faultnet;

namespace {

// 14 noise features except one informative column that separates the two
// classes by a wide margin.
FeatureMatrix single_informative_fixture(std::size_t rows_per_class,
                                         std::size_t informative,
                                         std::uint64_t seed) {
  FeatureMatrix m;
  m.n_features = 14;
  m.feature_names.assign(FeatureVector::names().begin(),
                         FeatureVector::names().end());
  Rng rng(seed);
  for (int label = 0; label < 2; ++label) {
    for (std::size_t i = 0; i < rows_per_class; ++i) {
      for (std::size_t j = 0; j < m.n_features; ++j) {
        if (j == informative) {
          m.values.push_back(rng.normal(label == 0 ? 0.0 : 10.0, 1.0));
        } else {
          m.values.push_back(rng.normal(0.0, 1.0));
        }
      }
      m.labels.push_back(label);
    }
  }
  return m;
}

FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows,
                        const std::vector<int>& labels) {
  FeatureMatrix m;
  m.n_features = rows[0].size();
  for (const auto& r : rows) {
    m.values.insert(m.values.end(), r.begin(), r.end());
  }
  m.labels = labels;
  for (std::size_t j = 0; j < m.n_features; ++j) {
    m.feature_names.push_back("f" + std::to_string(j));
  }
  return m;
}

}  // namespace

// --- random forest -----------------------------------------------------------

TEST(RandomForest, InformativeFeatureDominatesImportance) {
  const FeatureMatrix m = single_informative_fixture(100, 4, 21);
  const ForestModel model = train_random_forest(m, {.n_trees = 50, .seed = 9});

  double sum = 0.0;
  for (double v : model.importances) {
    EXPECT_GE(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_GT(model.importances[4], 0.5);
  EXPECT_EQ(std::max_element(model.importances.begin(), model.importances.end()) -
                model.importances.begin(),
            4);

  const std::vector<int> preds = predict_forest(model, m);
  for (std::size_t i = 0; i < m.n_rows(); ++i) {
    EXPECT_EQ(preds[i], m.labels[i]);
  }
}

TEST(RandomForest, SingleClassRejected) {
  FeatureMatrix m = single_informative_fixture(10, 0, 22);
  m.labels.assign(m.labels.size(), 0);
  EXPECT_THROW(train_random_forest(m), SingleClass);
}

TEST(RandomForest, DeterministicUnderSeed) {
  const FeatureMatrix m = single_informative_fixture(30, 2, 23);
  const ForestModel a = train_random_forest(m, {.n_trees = 20, .seed = 5});
  const ForestModel b = train_random_forest(m, {.n_trees = 20, .seed = 5});
  EXPECT_EQ(a.importances, b.importances);
  EXPECT_EQ(predict_forest(a, m), predict_forest(b, m));
}

TEST(RandomForest, ImportancePermutationEquivariance) {
  // With every feature considered at each node, permuting the columns must
  // permute the importances identically.
  const FeatureMatrix m = single_informative_fixture(40, 3, 24);
  ForestOptions opt;
  opt.n_trees = 10;
  opt.seed = 6;
  opt.max_features = m.n_features;
  const ForestModel base = train_random_forest(m, opt);

  // Swap columns 3 and 7.
  FeatureMatrix swapped = m;
  for (std::size_t i = 0; i < m.n_rows(); ++i) {
    std::swap(swapped.values[i * m.n_features + 3],
              swapped.values[i * m.n_features + 7]);
  }
  const ForestModel perm = train_random_forest(swapped, opt);
  EXPECT_NEAR(perm.importances[7], base.importances[3], 1e-12);
  EXPECT_NEAR(perm.importances[3], base.importances[7], 1e-12);
  for (std::size_t j = 0; j < m.n_features; ++j) {
    if (j == 3 || j == 7) continue;
    EXPECT_NEAR(perm.importances[j], base.importances[j], 1e-12);
  }
}

TEST(RandomForest, SingleStumpMatchesHandEvaluation) {
  // One tree on one threshold: f0 <= 0.5 -> class 0, else class 1.
  const FeatureMatrix train = from_rows(
      {{0.0, 0.0}, {0.2, 1.0}, {1.0, 0.0}, {0.8, 1.0}}, {0, 0, 1, 1});
  ForestOptions opt;
  opt.n_trees = 1;
  opt.seed = 3;
  opt.max_features = 2;
  const ForestModel model = train_random_forest(train, opt);

  const FeatureMatrix queries = from_rows(
      {{0.1, 5.0}, {0.49, -3.0}, {0.9, 0.0}, {2.0, 1.0}}, {0, 0, 1, 1});
  const std::vector<int> preds = predict_forest(model, queries);
  EXPECT_EQ(preds, (std::vector<int>{0, 0, 1, 1}));
}

TEST(RandomForest, EmptyMatrixRejected) {
  FeatureMatrix empty;
  empty.n_features = 14;
  EXPECT_THROW(train_random_forest(empty), EmptyMatrix);
}

// --- kNN ------------------------------------------------------------------------

TEST(Knn, ExactTrainingRowWithKOne) {
  const FeatureMatrix train = from_rows(
      {{0.0, 0.0}, {5.0, 5.0}, {-3.0, 2.0}}, {2, 0, 1});
  const FeatureMatrix q = from_rows({{5.0, 5.0}}, {0});
  EXPECT_EQ(knn_classify(train, q, 1), (std::vector<int>{0}));
}

TEST(Knn, HandComputedToyVote) {
  const FeatureMatrix train = from_rows(
      {{0.0, 0.0}, {1.0, 0.0}, {10.0, 10.0}}, {0, 0, 1});
  const FeatureMatrix q = from_rows({{0.4, 0.0}}, {0});
  EXPECT_EQ(knn_classify(train, q, 3), (std::vector<int>{0}));
}

TEST(Knn, KTooLargeRejected) {
  const FeatureMatrix train = from_rows({{0.0}, {1.0}}, {0, 1});
  const FeatureMatrix q = from_rows({{0.5}}, {0});
  EXPECT_THROW(knn_classify(train, q, 3), KTooLarge);
}

TEST(Knn, DistanceTieBreaksToLowerRowIndex) {
  // Two training rows at the same point with different labels.
  const FeatureMatrix train = from_rows({{1.0, 1.0}, {1.0, 1.0}}, {1, 0});
  const FeatureMatrix q = from_rows({{1.0, 1.0}}, {0});
  EXPECT_EQ(knn_classify(train, q, 1), (std::vector<int>{1}));
}

TEST(Knn, VoteTieBreaksToSmallestLabel) {
  const FeatureMatrix train = from_rows(
      {{0.0, 0.0}, {2.0, 0.0}}, {1, 0});
  const FeatureMatrix q = from_rows({{1.0, 0.0}}, {0});
  // k=2: one vote each; the tie goes to class 0.
  EXPECT_EQ(knn_classify(train, q, 2), (std::vector<int>{0}));
}

TEST(Knn, SelfClassificationWithKOne) {
  Rng rng(25);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) {
    rows.push_back({rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)});
    labels.push_back(i % 3);
  }
  const FeatureMatrix train = from_rows(rows, labels);
  EXPECT_EQ(knn_classify(train, train, 1), labels);
}

// --- logistic regression -----------------------------------------------------------

TEST(LogReg, SeparablePointsReachPerfectTrainingAccuracy) {
  const FeatureMatrix train = from_rows({{-1.0}, {1.0}}, {0, 1});
  const LogRegModel model = train_logreg(train, {.epochs = 2000});
  EXPECT_EQ(predict_logreg(model, train), (std::vector<int>{0, 1}));
}

TEST(LogReg, GradientAtInitMatchesFiniteDifferences) {
  Rng rng(26);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) {
    rows.push_back({rng.normal(0.0, 1.0), rng.normal(0.0, 1.0),
                    rng.normal(0.0, 1.0)});
    labels.push_back(i % 3);
  }
  const FeatureMatrix m = from_rows(rows, labels);
  const double l2 = 0.01;

  Tensor w({3, 3});
  Tensor b({3});
  Rng wrng(27);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = wrng.uniform(-0.5, 0.5);

  const Tensor x = Tensor::from_values({m.n_rows(), 3}, m.values);
  auto objective = [&](const Tensor& wt, const Tensor& bt) {
    const auto sce =
        nn::softmax_cross_entropy(nn::fully_connected(x, wt, bt), m.labels);
    double reg = 0.0;
    for (std::size_t i = 0; i < wt.size(); ++i) reg += wt[i] * wt[i];
    return sce.loss + 0.5 * l2 * reg;
  };

  const auto sce = nn::softmax_cross_entropy(nn::fully_connected(x, w, b), m.labels);
  const auto g = nn::fully_connected_backward(sce.grad_logits, x, w);

  const double h = 1e-6;
  for (std::size_t i = 0; i < w.size(); ++i) {
    Tensor wp = w;
    wp[i] += h;
    const double fp = objective(wp, b);
    wp[i] = w[i] - h;
    const double fm = objective(wp, b);
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = g.weights[i] + l2 * w[i];
    EXPECT_LT(faultnet_test::grad_rel_err(analytic, numeric), 1e-6);
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    Tensor bp = b;
    bp[i] += h;
    const double fp = objective(w, bp);
    bp[i] = b[i] - h;
    const double fm = objective(w, bp);
    const double numeric = (fp - fm) / (2.0 * h);
    EXPECT_LT(faultnet_test::grad_rel_err(g.bias[i], numeric), 1e-6);
  }
}

TEST(LogReg, ExtremeRegularizationFallsBackToMajorityClass) {
  // 3:1 class imbalance; with l2 = 1e6 the weights collapse and the
  // unregularized bias carries the majority prior.
  const FeatureMatrix train = from_rows(
      {{-5.0}, {-4.0}, {-6.0}, {5.0}}, {0, 0, 0, 1});
  const LogRegModel model = train_logreg(train, {.l2 = 1e6, .epochs = 500});
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    EXPECT_NEAR(model.weights[i], 0.0, 1e-4);
  }
  const FeatureMatrix q = from_rows({{-5.0}, {5.0}, {100.0}}, {0, 0, 0});
  EXPECT_EQ(predict_logreg(model, q), (std::vector<int>{0, 0, 0}));
}

TEST(LogReg, SingleClassRejected) {
  const FeatureMatrix train = from_rows({{0.0}, {1.0}}, {1, 1});
  EXPECT_THROW(train_logreg(train), SingleClass);
}

// --- MLP baseline --------------------------------------------------------------------

TEST(Mlp, SeparableFixtureTrainsToHighAccuracy) {
  FeatureMatrix m = single_informative_fixture(40, 0, 28);
  const Standardizer st = Standardizer::fit(m);
  m = st.apply(m);
  MlpModel model = train_mlp_baseline(m, {.hidden = 16, .epochs = 60, .batch_size = 16, .lr = 0.01, .seed = 1});
  const std::vector<int> preds = predict_mlp(model, m);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < m.n_rows(); ++i) {
    if (preds[i] == m.labels[i]) ++correct;
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(m.n_rows()), 0.99);
}

TEST(Mlp, ZeroEpochsGivesUntrainedNetwork) {
  const FeatureMatrix m = single_informative_fixture(10, 0, 29);
  MlpModel model = train_mlp_baseline(m, {.hidden = 8, .epochs = 0});
  EXPECT_TRUE(model.history.empty());
  EXPECT_EQ(predict_mlp(model, m).size(), m.n_rows());
}

TEST(Mlp, DeterministicUnderSeed) {
  const FeatureMatrix m = single_informative_fixture(10, 1, 30);
  MlpModel a = train_mlp_baseline(m, {.hidden = 8, .epochs = 5, .seed = 4});
  MlpModel b = train_mlp_baseline(m, {.hidden = 8, .epochs = 5, .seed = 4});
  EXPECT_EQ(predict_mlp(a, m), predict_mlp(b, m));
}

// --- standardizer -----------------------------------------------------------------------

TEST(Standardizer, StatsComeFromTrainingRowsOnly) {
  const FeatureMatrix train = single_informative_fixture(20, 0, 31);
  const Standardizer st = Standardizer::fit(train);
  const std::vector<double> mean_before = st.mean;
  const std::vector<double> std_before = st.std;

  FeatureMatrix test = single_informative_fixture(20, 0, 32);
  for (double& v : test.values) v += 100.0;  // shifted test distribution
  const FeatureMatrix applied = st.apply(test);

  // Applying to test rows never mutates the fitted statistics.
  EXPECT_EQ(st.mean, mean_before);
  EXPECT_EQ(st.std, std_before);
  // And the standardized training matrix is centered, test is not.
  const FeatureMatrix train_applied = st.apply(train);
  double train_mean = 0.0, test_mean = 0.0;
  for (std::size_t i = 0; i < train_applied.n_rows(); ++i) {
    train_mean += train_applied.row(i)[5];
    test_mean += applied.row(i)[5];
  }
  train_mean /= static_cast<double>(train_applied.n_rows());
  test_mean /= static_cast<double>(applied.n_rows());
  EXPECT_NEAR(train_mean, 0.0, 1e-9);
  EXPECT_GT(test_mean, 50.0);
}
