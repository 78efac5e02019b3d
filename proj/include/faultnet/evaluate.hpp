#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "faultnet/baselines.hpp"
#include "faultnet/channels.hpp"
#include "faultnet/errors.hpp"
#include "faultnet/features.hpp"
#include "faultnet/ingest.hpp"
#include "faultnet/model.hpp"
#include "faultnet/rng.hpp"

namespace faultnet {

// ---------------------------------------------------------------------------
// Stratified k-fold plans

struct FoldPlan {
  std::vector<std::vector<std::size_t>> folds;
  std::uint64_t seed = 0;

  std::size_t k() const { return folds.size(); }
};

// Within each class the indices are shuffled by a seeded rng and dealt
// round-robin, so per-class counts across folds differ by at most one.
inline FoldPlan stratified_kfold(const std::vector<int>& labels,
                                 std::size_t k = 5, std::uint64_t seed = 0) {
  if (k < 1) throw InvalidSpec("stratified_kfold: k must be >= 1");
  if (labels.empty()) throw EmptyDataset("stratified_kfold: no labels");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw BadLabel("stratified_kfold: negative label");
    by_class[labels[i]].push_back(i);
  }
  for (const auto& [label, idx] : by_class) {
    if (idx.size() < k) {
      throw ClassTooSmall("stratified_kfold: class " + std::to_string(label) +
                          " has " + std::to_string(idx.size()) +
                          " members, fewer than k=" + std::to_string(k));
    }
  }

  FoldPlan plan;
  plan.seed = seed;
  plan.folds.assign(k, {});
  for (auto& [label, idx] : by_class) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label)));
    rng.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      plan.folds[i % k].push_back(idx[i]);
    }
  }
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

inline void validate_fold_plan(const FoldPlan& plan, std::size_t n) {
  std::vector<bool> seen(n, false);
  std::size_t total = 0;
  for (const auto& fold : plan.folds) {
    for (std::size_t idx : fold) {
      if (idx >= n || seen[idx]) {
        throw FoldMismatch("fold plan does not partition the dataset");
      }
      seen[idx] = true;
      ++total;
    }
  }
  if (total != n) throw FoldMismatch("fold plan does not cover the dataset");
}

// ---------------------------------------------------------------------------
// Metrics

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

inline ConfusionMatrix confusion_matrix(const std::vector<int>& y_true,
                                        const std::vector<int>& y_pred,
                                        std::size_t n_classes) {
  if (y_true.size() != y_pred.size()) {
    throw LengthMismatch("confusion_matrix: prediction count mismatch");
  }
  ConfusionMatrix cm(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= n_classes ||
        static_cast<std::size_t>(p) >= n_classes) {
      throw BadLabel("confusion_matrix: label out of range");
    }
    ++cm[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return cm;
}

inline double confusion_accuracy(const ConfusionMatrix& cm) {
  std::size_t trace = 0, total = 0;
  for (std::size_t i = 0; i < cm.size(); ++i) {
    trace += cm[i][i];
    for (std::size_t v : cm[i]) total += v;
  }
  return total == 0 ? 0.0 : static_cast<double>(trace) / static_cast<double>(total);
}

enum class Averaging { kMacro, kMicro };

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Per-class precision/recall with the 0/0 -> 0 convention, then either the
// unweighted class mean (macro) or the pooled counts (micro; for single-label
// data micro P = R = F1 = accuracy).
inline Prf prf_from_confusion(const ConfusionMatrix& cm,
                              Averaging averaging = Averaging::kMacro) {
  const std::size_t c = cm.size();
  if (averaging == Averaging::kMicro) {
    const double acc = confusion_accuracy(cm);
    return {acc, acc, acc};
  }
  Prf out;
  for (std::size_t i = 0; i < c; ++i) {
    std::size_t col_sum = 0, row_sum = 0;
    for (std::size_t j = 0; j < c; ++j) {
      col_sum += cm[j][i];
      row_sum += cm[i][j];
    }
    const double p = col_sum == 0 ? 0.0
                                  : static_cast<double>(cm[i][i]) /
                                        static_cast<double>(col_sum);
    const double r = row_sum == 0 ? 0.0
                                  : static_cast<double>(cm[i][i]) /
                                        static_cast<double>(row_sum);
    const double f1 = (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    out.precision += p;
    out.recall += r;
    out.f1 += f1;
  }
  const double dc = static_cast<double>(c);
  out.precision /= dc;
  out.recall /= dc;
  out.f1 /= dc;
  return out;
}

inline Prf macro_prf(const ConfusionMatrix& cm) {
  return prf_from_confusion(cm, Averaging::kMacro);
}

// ---------------------------------------------------------------------------
// AWGN injection: noise variance = signal power / 10^(snr_db/10).

inline std::vector<double> add_awgn(const std::vector<double>& values,
                                    double snr_db, Rng& rng) {
  if (values.empty()) throw ZeroPowerSignal("add_awgn: empty signal");
  double power = 0.0;
  for (double v : values) power += v * v;
  power /= static_cast<double>(values.size());
  if (!(power > 0.0)) {
    throw ZeroPowerSignal("add_awgn: signal power is zero");
  }
  const double noise_std = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = values[i] + rng.normal(0.0, noise_std);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline descriptors and fitted classifiers

enum class PipelineKind { kFaultNet, kRandomForest, kKnn, kLogReg, kMlp };

inline std::string pipeline_kind_name(PipelineKind k) {
  switch (k) {
    case PipelineKind::kFaultNet: return "faultnet";
    case PipelineKind::kRandomForest: return "rf";
    case PipelineKind::kKnn: return "knn";
    case PipelineKind::kLogReg: return "logreg";
    case PipelineKind::kMlp: return "mlp";
  }
  return "?";
}

struct PipelineDesc {
  PipelineKind kind = PipelineKind::kFaultNet;
  // FaultNet settings
  ChannelFlags channels;            // raw channel always present
  std::size_t channel_window = 10;  // sliding-window length for mean/median
  FaultNetConfig faultnet;          // input dims/classes/seed filled at fit time
  // Feature-based baselines
  FeatureDomain domain = FeatureDomain::kTime;
  ForestOptions forest;
  std::size_t knn_k = 5;
  LogRegOptions logreg;
  MlpOptions mlp;
};

// A classifier fitted on one training split. predict_segments must not
// mutate fitted state, so folds and sweep points can share instances.
class FittedClassifier {
 public:
  virtual ~FittedClassifier() = default;
  virtual std::vector<int> predict_segments(const std::vector<Segment>& segments) = 0;
  // Optional introspection for report writers.
  virtual const std::vector<EpochStats>* history() const { return nullptr; }
  virtual const ForestModel* forest() const { return nullptr; }
};

using ClassifierFactory = std::function<std::unique_ptr<FittedClassifier>(
    const std::vector<Segment>& train_segments, std::size_t n_classes,
    const PipelineDesc& desc, std::uint64_t seed)>;

namespace detail {

class FaultNetClassifier : public FittedClassifier {
 public:
  FaultNetClassifier(const std::vector<Segment>& train, std::size_t n_classes,
                     const PipelineDesc& desc, std::uint64_t seed)
      : flags_(desc.channels), window_(desc.channel_window) {
    if (train.empty()) throw EmptyDataset("faultnet fit: no training segments");
    side_ = square_side(train[0].values.size());
    FaultNetConfig cfg = desc.faultnet;
    cfg.input_h = side_;
    cfg.input_w = side_;
    cfg.in_channels = flags_.count();
    cfg.n_classes = n_classes;
    cfg.seed = seed;
    model_ = train_faultnet(cfg, channelize_segments(train, flags_, side_, side_,
                                                     window_));
  }

  std::vector<int> predict_segments(const std::vector<Segment>& segments) override {
    return predict(model_, channelize_segments(segments, flags_, side_, side_,
                                               window_))
        .labels;
  }

  const std::vector<EpochStats>* history() const override {
    return &model_.history;
  }

  TrainedModel& model() { return model_; }

 private:
  ChannelFlags flags_;
  std::size_t window_;
  std::size_t side_ = 0;
  TrainedModel model_;
};

class ForestClassifier : public FittedClassifier {
 public:
  ForestClassifier(const std::vector<Segment>& train, std::size_t n_classes,
                   const PipelineDesc& desc, std::uint64_t seed)
      : domain_(desc.domain) {
    FeatureMatrix m = to_feature_matrix(featurize_segments(train, domain_));
    ForestOptions opt = desc.forest;
    opt.seed = seed;
    model_ = train_random_forest(m, opt);
    model_.n_classes = std::max(model_.n_classes, static_cast<int>(n_classes));
  }

  std::vector<int> predict_segments(const std::vector<Segment>& segments) override {
    return predict_forest(model_,
                          to_feature_matrix(featurize_segments(segments, domain_)));
  }

  const ForestModel* forest() const override { return &model_; }

 private:
  FeatureDomain domain_;
  ForestModel model_;
};

class KnnClassifier : public FittedClassifier {
 public:
  KnnClassifier(const std::vector<Segment>& train, std::size_t,
                const PipelineDesc& desc, std::uint64_t)
      : domain_(desc.domain), k_(desc.knn_k) {
    FeatureMatrix m = to_feature_matrix(featurize_segments(train, domain_));
    standardizer_ = Standardizer::fit(m);
    train_ = standardizer_.apply(m);
    if (k_ == 0 || k_ > train_.n_rows()) {
      throw KTooLarge("knn fit: k=" + std::to_string(k_) + " with " +
                      std::to_string(train_.n_rows()) + " training rows");
    }
  }

  std::vector<int> predict_segments(const std::vector<Segment>& segments) override {
    FeatureMatrix q =
        standardizer_.apply(to_feature_matrix(featurize_segments(segments, domain_)));
    return knn_classify(train_, q, k_);
  }

 private:
  FeatureDomain domain_;
  std::size_t k_;
  Standardizer standardizer_;
  FeatureMatrix train_;
};

class LogRegClassifier : public FittedClassifier {
 public:
  LogRegClassifier(const std::vector<Segment>& train, std::size_t,
                   const PipelineDesc& desc, std::uint64_t seed)
      : domain_(desc.domain) {
    FeatureMatrix m = to_feature_matrix(featurize_segments(train, domain_));
    standardizer_ = Standardizer::fit(m);
    LogRegOptions opt = desc.logreg;
    opt.seed = seed;
    model_ = train_logreg(standardizer_.apply(m), opt);
  }

  std::vector<int> predict_segments(const std::vector<Segment>& segments) override {
    FeatureMatrix q =
        standardizer_.apply(to_feature_matrix(featurize_segments(segments, domain_)));
    return predict_logreg(model_, q);
  }

 private:
  FeatureDomain domain_;
  Standardizer standardizer_;
  LogRegModel model_;
};

class MlpClassifier : public FittedClassifier {
 public:
  MlpClassifier(const std::vector<Segment>& train, std::size_t,
                const PipelineDesc& desc, std::uint64_t seed)
      : domain_(desc.domain) {
    FeatureMatrix m = to_feature_matrix(featurize_segments(train, domain_));
    standardizer_ = Standardizer::fit(m);
    MlpOptions opt = desc.mlp;
    opt.seed = seed;
    model_ = train_mlp_baseline(standardizer_.apply(m), opt);
  }

  std::vector<int> predict_segments(const std::vector<Segment>& segments) override {
    FeatureMatrix q =
        standardizer_.apply(to_feature_matrix(featurize_segments(segments, domain_)));
    return predict_mlp(model_, q);
  }

  const std::vector<EpochStats>* history() const override {
    return &model_.history;
  }

 private:
  FeatureDomain domain_;
  Standardizer standardizer_;
  MlpModel model_;
};

}  // namespace detail

inline std::unique_ptr<FittedClassifier> fit_classifier(
    const std::vector<Segment>& train_segments, std::size_t n_classes,
    const PipelineDesc& desc, std::uint64_t seed) {
  switch (desc.kind) {
    case PipelineKind::kFaultNet:
      return std::make_unique<detail::FaultNetClassifier>(train_segments,
                                                          n_classes, desc, seed);
    case PipelineKind::kRandomForest:
      return std::make_unique<detail::ForestClassifier>(train_segments,
                                                        n_classes, desc, seed);
    case PipelineKind::kKnn:
      return std::make_unique<detail::KnnClassifier>(train_segments, n_classes,
                                                     desc, seed);
    case PipelineKind::kLogReg:
      return std::make_unique<detail::LogRegClassifier>(train_segments,
                                                        n_classes, desc, seed);
    case PipelineKind::kMlp:
      return std::make_unique<detail::MlpClassifier>(train_segments, n_classes,
                                                     desc, seed);
  }
  throw InvalidSpec("fit_classifier: unknown pipeline kind");
}

// ---------------------------------------------------------------------------
// Cross-validation

struct NoisePoint {
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

struct NoiseSpec {
  std::vector<double> snr_db = {-4.0, -2.0, 0.0, 2.0, 6.0, 8.0, 10.0};
  std::uint64_t seed = 0;
};

struct EvalOptions {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  Averaging averaging = Averaging::kMacro;
  // Comparison mode: corrupt the training segments too (default trains clean
  // so the sweep isolates test-time robustness).
  bool noisy_train = false;
};

struct EvalReport {
  std::vector<double> per_fold_accuracy;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over folds
  double overall_accuracy = 0.0;
  Prf metrics;
  Averaging averaging = Averaging::kMacro;
  ConfusionMatrix confusion;
  std::size_t n_classes = 0;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> fold_seeds;
  std::optional<NoisePoint> noise;
  // Per-fold training histories when the pipeline trains a network.
  std::vector<std::vector<EpochStats>> fold_histories;
  // Fold-averaged forest importances when the pipeline is a random forest.
  std::vector<double> forest_importances;
};

namespace detail {

inline std::size_t dataset_n_classes(const Dataset& ds) {
  if (ds.class_names.empty()) throw EmptyDataset("dataset has no classes");
  return static_cast<std::size_t>(ds.class_names.rbegin()->first) + 1;
}

inline std::vector<Segment> gather_segments(const Dataset& ds,
                                            const std::vector<std::size_t>& idx) {
  std::vector<Segment> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(ds.segments[i]);
  return out;
}

inline void apply_noise(std::vector<Segment>& segments, double snr_db, Rng& rng) {
  for (Segment& s : segments) {
    s.values = add_awgn(s.values, snr_db, rng);
  }
}

inline void finalize_report(EvalReport& report) {
  const double k = static_cast<double>(report.per_fold_accuracy.size());
  double mean = 0.0;
  for (double a : report.per_fold_accuracy) mean += a;
  mean /= k;
  double var = 0.0;
  for (double a : report.per_fold_accuracy) var += (a - mean) * (a - mean);
  var /= k;
  report.mean_accuracy = mean;
  report.std_accuracy = std::sqrt(var);
  report.overall_accuracy = confusion_accuracy(report.confusion);
  report.metrics = prf_from_confusion(report.confusion, report.averaging);
}

}  // namespace detail

// Fits on k-1 folds and evaluates on the held-out fold, for each fold. Noise
// (when given) corrupts test segments only, after fitting and before
// channelization/featurization; the trained models are therefore identical
// with and without it.
inline EvalReport run_cv(const Dataset& dataset, const PipelineDesc& desc,
                         const FoldPlan& plan,
                         const std::optional<NoisePoint>& noise,
                         const EvalOptions& opt,
                         const ClassifierFactory& factory = fit_classifier) {
  validate_fold_plan(plan, dataset.segments.size());
  const std::size_t n_classes = detail::dataset_n_classes(dataset);
  const std::size_t k = plan.k();

  EvalReport report;
  report.averaging = opt.averaging;
  report.n_classes = n_classes;
  report.master_seed = opt.seed;
  report.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  if (noise) report.noise = *noise;

  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < k; ++g) {
      if (g == f) continue;
      train_idx.insert(train_idx.end(), plan.folds[g].begin(), plan.folds[g].end());
    }
    std::sort(train_idx.begin(), train_idx.end());

    std::vector<Segment> train_segments = detail::gather_segments(dataset, train_idx);
    if (noise && opt.noisy_train) {
      Rng rng(derive_seed(noise->seed, k + f));
      detail::apply_noise(train_segments, noise->snr_db, rng);
    }

    const std::uint64_t fold_seed = derive_seed(opt.seed, f);
    report.fold_seeds.push_back(fold_seed);
    std::unique_ptr<FittedClassifier> classifier =
        factory(train_segments, n_classes, desc, fold_seed);

    std::vector<Segment> test_segments =
        detail::gather_segments(dataset, plan.folds[f]);
    if (noise) {
      Rng rng(derive_seed(noise->seed, f));
      detail::apply_noise(test_segments, noise->snr_db, rng);
    }

    const std::vector<int> preds = classifier->predict_segments(test_segments);
    std::vector<int> truth;
    truth.reserve(test_segments.size());
    for (const Segment& s : test_segments) truth.push_back(s.label);

    const ConfusionMatrix cm = confusion_matrix(truth, preds, n_classes);
    report.per_fold_accuracy.push_back(confusion_accuracy(cm));
    for (std::size_t i = 0; i < n_classes; ++i) {
      for (std::size_t j = 0; j < n_classes; ++j) {
        report.confusion[i][j] += cm[i][j];
      }
    }
    if (const auto* hist = classifier->history()) {
      report.fold_histories.push_back(*hist);
    }
    if (const auto* forest = classifier->forest()) {
      if (report.forest_importances.empty()) {
        report.forest_importances.assign(forest->importances.size(), 0.0);
      }
      for (std::size_t i = 0; i < forest->importances.size(); ++i) {
        report.forest_importances[i] += forest->importances[i] / static_cast<double>(k);
      }
    }
  }
  detail::finalize_report(report);
  return report;
}

struct SweepRow {
  double snr_db = 0.0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

// One run_cv per SNR with clean training throughout, rows ordered by snr_db
// ascending. Since clean training is independent of the noise point, each
// fold is trained once and reused across SNRs; results are identical to
// calling run_cv per SNR. (With noisy_train set there is no shared model, so
// it falls back to the per-SNR loop.)
inline std::vector<SweepRow> noise_sweep(const Dataset& dataset,
                                         const PipelineDesc& desc,
                                         const FoldPlan& plan,
                                         const EvalOptions& opt,
                                         const NoiseSpec& spec,
                                         const ClassifierFactory& factory =
                                             fit_classifier) {
  if (spec.snr_db.empty()) throw InvalidSpec("noise_sweep: empty SNR list");
  std::vector<double> snrs = spec.snr_db;
  std::sort(snrs.begin(), snrs.end());

  std::vector<SweepRow> rows;
  if (opt.noisy_train) {
    for (double snr : snrs) {
      EvalReport r = run_cv(dataset, desc, plan,
                            NoisePoint{snr, spec.seed}, opt, factory);
      rows.push_back({snr, r.mean_accuracy, r.std_accuracy});
    }
    return rows;
  }

  validate_fold_plan(plan, dataset.segments.size());
  const std::size_t n_classes = detail::dataset_n_classes(dataset);
  const std::size_t k = plan.k();

  std::vector<std::unique_ptr<FittedClassifier>> fold_models;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < k; ++g) {
      if (g == f) continue;
      train_idx.insert(train_idx.end(), plan.folds[g].begin(), plan.folds[g].end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    fold_models.push_back(factory(detail::gather_segments(dataset, train_idx),
                                  n_classes, desc, derive_seed(opt.seed, f)));
  }

  for (double snr : snrs) {
    std::vector<double> fold_acc;
    for (std::size_t f = 0; f < k; ++f) {
      std::vector<Segment> test_segments =
          detail::gather_segments(dataset, plan.folds[f]);
      Rng rng(derive_seed(spec.seed, f));
      detail::apply_noise(test_segments, snr, rng);
      const std::vector<int> preds = fold_models[f]->predict_segments(test_segments);
      std::vector<int> truth;
      truth.reserve(test_segments.size());
      for (const Segment& s : test_segments) truth.push_back(s.label);
      fold_acc.push_back(
          confusion_accuracy(confusion_matrix(truth, preds, n_classes)));
    }
    double mean = 0.0;
    for (double a : fold_acc) mean += a;
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (double a : fold_acc) var += (a - mean) * (a - mean);
    var /= static_cast<double>(k);
    rows.push_back({snr, mean, std::sqrt(var)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report serialization

inline nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["schema"] = "faultnet-report-v1";
  j["folds"] = {{"k", report.per_fold_accuracy.size()},
                {"per_fold_accuracy", report.per_fold_accuracy},
                {"mean_accuracy", report.mean_accuracy},
                {"std_accuracy", report.std_accuracy}};
  j["metrics"] = {{"overall_accuracy", report.overall_accuracy},
                  {"precision", report.metrics.precision},
                  {"recall", report.metrics.recall},
                  {"f1", report.metrics.f1},
                  {"averaging", report.averaging == Averaging::kMacro
                                    ? "macro"
                                    : "micro"}};
  j["confusion_matrix"] = report.confusion;
  j["n_classes"] = report.n_classes;
  j["seeds"] = {{"master", report.master_seed}, {"fold", report.fold_seeds}};
  if (report.noise) {
    j["noise"] = {{"snr_db", report.noise->snr_db}, {"seed", report.noise->seed}};
  }
  if (!report.forest_importances.empty()) {
    j["forest_importances"] = report.forest_importances;
  }
  return j;
}

inline void write_confusion_csv(const std::string& path,
                                const ConfusionMatrix& cm) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write confusion CSV: " + path);
  out << "true\\pred";
  for (std::size_t j = 0; j < cm.size(); ++j) out << ',' << j;
  out << '\n';
  for (std::size_t i = 0; i < cm.size(); ++i) {
    out << i;
    for (std::size_t j = 0; j < cm.size(); ++j) out << ',' << cm[i][j];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void write_sweep_csv(const std::string& path,
                            const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write sweep CSV: " + path);
  out << "snr_db,mean_accuracy,std_accuracy\n";
  char buf[128];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%g,%.17g,%.17g\n", r.snr_db,
                  r.mean_accuracy, r.std_accuracy);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace faultnet
