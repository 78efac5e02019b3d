// Batch front end: dataset synthesis, experiment runs and noise sweeps driven
// by a key-value config file. Results go to plot-ready CSV and JSON report
// files; nothing is printed that is not also in the written files. Exit
// codes: 0 success, 1 error, 2 bad usage.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "faultnet/faultnet.hpp"

namespace fs = std::filesystem;
using namespace faultnet;

namespace {

// Outputs are written to a temp file and renamed into place, so an
// interrupted run never leaves a truncated table; files renamed before a
// failure are removed again.
class OutputTracker {
 public:
  void write_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw IoError("cannot write " + tmp.string());
      out << content;
      if (!out) throw IoError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
    written_.push_back(path);
  }

  void discard_all() {
    for (const fs::path& p : written_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    written_.clear();
  }

 private:
  std::vector<fs::path> written_;
};

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::optional<std::uint64_t> seed_override;
};

ExperimentConfig load_config(const CommonArgs& args, bool config_required) {
  ExperimentConfig cfg;
  if (!args.config_path.empty()) {
    cfg = ExperimentConfig::from_file(args.config_path);
  } else if (config_required) {
    throw InvalidSpec("a --config file is required for this command");
  }
  if (!args.out_override.empty()) cfg.out_dir = args.out_override;
  return cfg;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Synthetic records: one per (class, record) pair, with per-record seeds
// derived from the master synth seed.
std::vector<SignalRecord> make_synth_records(const ExperimentConfig& cfg) {
  if (cfg.synth_records_per_class == 0) {
    throw InvalidSpec("synth.records_per_class must be >= 1");
  }
  cfg.synth.validate();
  std::vector<SignalRecord> records;
  for (int c = 0; c < cfg.synth.n_classes; ++c) {
    for (std::size_t r = 0; r < cfg.synth_records_per_class; ++r) {
      SynthSpec spec = cfg.synth;
      spec.seed = derive_seed(cfg.synth.seed, r);
      records.push_back(synth_generate(spec, c));
    }
  }
  return records;
}

Dataset make_dataset(const ExperimentConfig& cfg) {
  DatasetOptions opt;
  opt.synthetic_window = cfg.dataset_window;
  opt.paderborn_window = cfg.dataset_window;
  if (cfg.scheme == Scheme::kSynthetic && cfg.manifest.empty()) {
    return build_dataset(make_synth_records(cfg), Scheme::kSynthetic, opt);
  }
  if (cfg.manifest.empty()) {
    throw InvalidSpec("dataset.manifest is required for scheme " +
                      scheme_name(cfg.scheme));
  }
  return build_dataset(load_manifest(cfg.manifest), cfg.scheme, opt);
}

nlohmann::json dataset_summary(const Dataset& ds) {
  nlohmann::json names;
  for (const auto& [label, name] : ds.class_names) {
    names[std::to_string(label)] = name;
  }
  nlohmann::json counts;
  for (const auto& [label, count] : ds.counts_per_class()) {
    counts[std::to_string(label)] = count;
  }
  return {{"scheme", scheme_name(ds.scheme)},
          {"n_segments", ds.segments.size()},
          {"segment_length", ds.segments.empty() ? 0 : ds.segments[0].values.size()},
          {"class_names", names},
          {"segments_per_class", counts}};
}

std::string history_csv(const std::vector<std::vector<EpochStats>>& folds) {
  std::ostringstream out;
  out << "fold,epoch,loss,accuracy\n";
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (std::size_t e = 0; e < folds[f].size(); ++e) {
      out << f << ',' << e + 1 << ',' << format_double(folds[f][e].loss) << ','
          << format_double(folds[f][e].accuracy) << '\n';
    }
  }
  return out.str();
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "true\\pred";
  for (std::size_t j = 0; j < cm.size(); ++j) out << ',' << j;
  out << '\n';
  for (std::size_t i = 0; i < cm.size(); ++i) {
    out << i;
    for (std::size_t j = 0; j < cm.size(); ++j) out << ',' << cm[i][j];
    out << '\n';
  }
  return out.str();
}

std::string importance_csv(const std::vector<double>& importances) {
  const auto& names = FeatureVector::names();
  std::vector<std::size_t> order(importances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return importances[a] > importances[b];
  });
  std::ostringstream out;
  out << "feature,importance\n";
  for (std::size_t i : order) {
    out << names[i] << ',' << format_double(importances[i]) << '\n';
  }
  return out.str();
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "snr_db,mean_accuracy,std_accuracy\n";
  for (const SweepRow& r : rows) {
    out << format_double(r.snr_db) << ',' << format_double(r.mean_accuracy)
        << ',' << format_double(r.std_accuracy) << '\n';
  }
  return out.str();
}

int cmd_synth(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args, /*config_required=*/false);
  if (args.seed_override) cfg.synth.seed = *args.seed_override;

  OutputTracker tracker;
  try {
    fs::create_directories(cfg.out_dir);
    std::ostringstream manifest;
    manifest << "# faultnet dataset manifest v1\n"
             << "# record = <path>[#<mat-variable>] <label> <sampling_rate_hz>\n";
    for (int c = 0; c < cfg.synth.n_classes; ++c) {
      for (std::size_t r = 0; r < std::max<std::size_t>(cfg.synth_records_per_class, 1); ++r) {
        SynthSpec spec = cfg.synth;
        spec.seed = derive_seed(cfg.synth.seed, r);
        const SignalRecord rec = synth_generate(spec, c);
        const std::string name =
            "class" + std::to_string(c) + "_rec" + std::to_string(r) + ".csv";
        std::ostringstream body;
        for (double v : rec.samples) body << format_double(v) << '\n';
        tracker.write_atomic(fs::path(cfg.out_dir) / name, body.str());
        manifest << "record = " << name << ' ' << c << ' '
                 << format_double(cfg.synth.sampling_rate_hz) << '\n';
      }
    }
    tracker.write_atomic(fs::path(cfg.out_dir) / "manifest.txt", manifest.str());
  } catch (...) {
    tracker.discard_all();
    throw;
  }
  std::cout << "wrote "
            << cfg.synth.n_classes *
                   static_cast<int>(std::max<std::size_t>(cfg.synth_records_per_class, 1))
            << " signal files and manifest.txt to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_run(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args, /*config_required=*/true);
  if (args.seed_override) cfg.eval.seed = *args.seed_override;

  OutputTracker tracker;
  try {
    const Dataset dataset = make_dataset(cfg);
    std::vector<int> labels;
    labels.reserve(dataset.segments.size());
    for (const Segment& s : dataset.segments) labels.push_back(s.label);
    const FoldPlan plan = stratified_kfold(labels, cfg.eval.k, cfg.eval.seed);

    std::optional<NoisePoint> noise;
    if (cfg.run_snr_db) noise = NoisePoint{*cfg.run_snr_db, cfg.noise.seed};

    const EvalReport report = run_cv(dataset, cfg.pipeline, plan, noise, cfg.eval);

    fs::create_directories(cfg.out_dir);
    nlohmann::json j = report_to_json(report);
    j["config"] = cfg.to_json();
    if (args.seed_override) j["config"]["eval"]["seed"] = *args.seed_override;
    j["dataset"] = dataset_summary(dataset);
    tracker.write_atomic(fs::path(cfg.out_dir) / "report.json", j.dump(2) + "\n");
    tracker.write_atomic(fs::path(cfg.out_dir) / "confusion.csv",
                         confusion_csv(report.confusion));
    if (!report.fold_histories.empty()) {
      tracker.write_atomic(fs::path(cfg.out_dir) / "history.csv",
                           history_csv(report.fold_histories));
    }
    if (!report.forest_importances.empty()) {
      tracker.write_atomic(fs::path(cfg.out_dir) / "importance.csv",
                           importance_csv(report.forest_importances));
    }

    std::cout << "pipeline " << pipeline_kind_name(cfg.pipeline.kind) << " on "
              << scheme_name(cfg.scheme) << ": mean accuracy "
              << report.mean_accuracy << " (std " << report.std_accuracy
              << "), macro F1 " << report.metrics.f1 << "\n"
              << "report written to " << (fs::path(cfg.out_dir) / "report.json").string()
              << "\n";
  } catch (...) {
    tracker.discard_all();
    throw;
  }
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args, /*config_required=*/true);
  if (args.seed_override) cfg.eval.seed = *args.seed_override;
  if (cfg.noise.snr_db.empty()) {
    throw InvalidSpec("sweep requires a non-empty noise.snr_db list");
  }

  OutputTracker tracker;
  try {
    const Dataset dataset = make_dataset(cfg);
    std::vector<int> labels;
    labels.reserve(dataset.segments.size());
    for (const Segment& s : dataset.segments) labels.push_back(s.label);
    const FoldPlan plan = stratified_kfold(labels, cfg.eval.k, cfg.eval.seed);

    const std::vector<SweepRow> rows =
        noise_sweep(dataset, cfg.pipeline, plan, cfg.eval, cfg.noise);

    fs::create_directories(cfg.out_dir);
    tracker.write_atomic(fs::path(cfg.out_dir) / "sweep.csv", sweep_csv(rows));
    nlohmann::json j;
    j["schema"] = "faultnet-sweep-v1";
    j["config"] = cfg.to_json();
    if (args.seed_override) j["config"]["eval"]["seed"] = *args.seed_override;
    j["dataset"] = dataset_summary(dataset);
    nlohmann::json table = nlohmann::json::array();
    for (const SweepRow& r : rows) {
      table.push_back({{"snr_db", r.snr_db},
                       {"mean_accuracy", r.mean_accuracy},
                       {"std_accuracy", r.std_accuracy}});
    }
    j["rows"] = table;
    tracker.write_atomic(fs::path(cfg.out_dir) / "sweep.json", j.dump(2) + "\n");

    for (const SweepRow& r : rows) {
      std::cout << "snr " << r.snr_db << " dB: mean accuracy " << r.mean_accuracy
                << " (std " << r.std_accuracy << ")\n";
    }
    std::cout << "sweep written to " << (fs::path(cfg.out_dir) / "sweep.csv").string()
              << "\n";
  } catch (...) {
    tracker.discard_all();
    throw;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bearing fault classification laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  std::uint64_t seed_value = 0;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* copt = sub->add_option("--config", args.config_path,
                                 "key-value experiment config file");
    if (config_required) copt->required();
    sub->add_option("--out", args.out_override, "output directory override");
    sub->add_option("--seed", seed_value, "seed override")
        ->each([&](const std::string&) { args.seed_override = seed_value; });
  };

  CLI::App* synth = app.add_subcommand(
      "synth", "generate synthetic signal CSVs and a manifest");
  add_common(synth, false);
  CLI::App* run = app.add_subcommand(
      "run", "run one experiment: ingest, train, cross-validate, report");
  add_common(run, true);
  CLI::App* sweep = app.add_subcommand(
      "sweep", "noise-robustness sweep over the configured SNR list");
  add_common(sweep, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(args);
    if (run->parsed()) return cmd_run(args);
    if (sweep->parsed()) return cmd_sweep(args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
