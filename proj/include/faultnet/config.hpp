#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "faultnet/errors.hpp"
#include "faultnet/evaluate.hpp"
#include "faultnet/ingest.hpp"

namespace faultnet {

// Experiment configuration: a plain-text key-value file (one "key = value"
// per line, '#' comments). Every key has a default; unknown keys are
// rejected. The full resolved configuration is echoed into every report so a
// run can be reproduced from its own output.

struct ExperimentConfig {
  // dataset
  Scheme scheme = Scheme::kSynthetic;
  std::string manifest;          // required for cwru/paderborn
  std::size_t dataset_window = 2500;

  // synthetic generation (scheme=synthetic without a manifest)
  SynthSpec synth;
  std::size_t synth_records_per_class = 1;

  // pipeline
  PipelineDesc pipeline;

  // evaluation
  EvalOptions eval;
  std::optional<double> run_snr_db;  // single noise point for `run`
  NoiseSpec noise;                   // SNR list for `sweep`

  // output
  std::string out_dir = "out";

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_kv(const std::map<std::string, std::string>& kv,
                                  const std::string& source);
  nlohmann::json to_json() const;
};

namespace config_detail {

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  auto strip = [](std::string& s) {
    const std::size_t b = s.find_first_not_of(" \t");
    const std::size_t e = s.find_last_not_of(" \t");
    s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string trimmed = line;
    strip(trimmed);
    if (trimmed.empty()) continue;
    const std::size_t eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    std::string key = trimmed.substr(0, eq);
    std::string value = trimmed.substr(eq + 1);
    strip(key);
    strip(value);
    if (key.empty()) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": empty key");
    }
    if (kv.count(key)) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": duplicate key '" + key + "'");
    }
    kv[key] = value;
  }
  return kv;
}

class KvReader {
 public:
  KvReader(const std::map<std::string, std::string>& kv, std::string source)
      : kv_(kv), source_(std::move(source)) {}

  std::string str(const std::string& key, const std::string& def) {
    seen_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return kv_.count(key) != 0;
  }

  double num(const std::string& key, double def) {
    seen_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    return to_double(key, it->second);
  }

  std::size_t index(const std::string& key, std::size_t def) {
    const double v = num(key, static_cast<double>(def));
    if (v < 0 || v != std::floor(v)) {
      throw ParseError(source_ + ": " + key + " must be a non-negative integer");
    }
    return static_cast<std::size_t>(v);
  }

  std::uint64_t seed(const std::string& key, std::uint64_t def) {
    seen_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw ParseError(source_ + ": " + key + ": not a valid seed: '" +
                       it->second + "'");
    }
  }

  bool flag(const std::string& key, bool def) {
    seen_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw ParseError(source_ + ": " + key + ": expected true/false, got '" +
                     it->second + "'");
  }

  std::vector<double> num_list(const std::string& key,
                               const std::vector<double>& def) {
    seen_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      out.push_back(to_double(key, tok));
    }
    if (out.empty()) throw ParseError(source_ + ": " + key + ": empty list");
    return out;
  }

  std::vector<std::string> str_list(const std::string& key,
                                    const std::vector<std::string>& def) {
    seen_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<std::string> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const std::size_t b = tok.find_first_not_of(" \t");
      const std::size_t e = tok.find_last_not_of(" \t");
      if (b != std::string::npos) out.push_back(tok.substr(b, e - b + 1));
    }
    return out;
  }

  void check_all_consumed() const {
    for (const auto& [key, value] : kv_) {
      if (!seen_.count(key)) {
        throw ParseError(source_ + ": unknown key '" + key + "'");
      }
    }
  }

 private:
  double to_double(const std::string& key, const std::string& s) {
    try {
      std::size_t consumed = 0;
      const double v = std::stod(s, &consumed);
      while (consumed < s.size() && (s[consumed] == ' ' || s[consumed] == '\t')) {
        ++consumed;
      }
      if (consumed != s.size()) throw std::invalid_argument("trailing garbage");
      return v;
    } catch (const std::exception&) {
      throw ParseError(source_ + ": " + key + ": not a number: '" + s + "'");
    }
  }

  const std::map<std::string, std::string>& kv_;
  std::string source_;
  std::set<std::string> seen_;
};

}  // namespace config_detail

inline ExperimentConfig ExperimentConfig::from_kv(
    const std::map<std::string, std::string>& kv, const std::string& source) {
  config_detail::KvReader r(kv, source);
  ExperimentConfig c;

  const std::string scheme = r.str("dataset.scheme", "synthetic");
  if (scheme == "synthetic") {
    c.scheme = Scheme::kSynthetic;
  } else if (scheme == "cwru") {
    c.scheme = Scheme::kCwru10;
  } else if (scheme == "paderborn") {
    c.scheme = Scheme::kPaderborn3;
  } else {
    throw ParseError(source + ": dataset.scheme must be synthetic|cwru|paderborn");
  }
  c.manifest = r.str("dataset.manifest", "");
  c.dataset_window = r.index("dataset.window", 2500);

  c.synth.n_classes = static_cast<int>(r.index("synth.classes", 3));
  c.synth.fault_freq_hz = r.num_list("synth.fault_freqs_hz", {13.0, 29.0, 47.0});
  c.synth.resonance_freq_hz = r.num("synth.resonance_hz", 2000.0);
  c.synth.decay_rate = r.num("synth.decay_rate", 400.0);
  c.synth.impulse_amplitude = r.num("synth.impulse_amplitude", 1.0);
  c.synth.noise_std = r.num("synth.noise_std", 0.1);
  c.synth.duration_s = r.num("synth.duration_s", 2.0);
  c.synth.sampling_rate_hz = r.num("synth.sampling_rate_hz", 25000.0);
  c.synth.seed = r.seed("synth.seed", 1);
  c.synth_records_per_class = r.index("synth.records_per_class", 1);

  const std::string kind = r.str("pipeline.kind", "faultnet");
  if (kind == "faultnet") {
    c.pipeline.kind = PipelineKind::kFaultNet;
  } else if (kind == "rf") {
    c.pipeline.kind = PipelineKind::kRandomForest;
  } else if (kind == "knn") {
    c.pipeline.kind = PipelineKind::kKnn;
  } else if (kind == "logreg") {
    c.pipeline.kind = PipelineKind::kLogReg;
  } else if (kind == "mlp") {
    c.pipeline.kind = PipelineKind::kMlp;
  } else {
    throw ParseError(source + ": pipeline.kind must be faultnet|rf|knn|logreg|mlp");
  }

  const std::vector<std::string> channels =
      r.str_list("pipeline.channels", {"raw", "mean", "median"});
  bool saw_raw = false;
  c.pipeline.channels = {};
  for (const std::string& ch : channels) {
    if (ch == "raw") {
      saw_raw = true;
    } else if (ch == "mean") {
      c.pipeline.channels.mean = true;
    } else if (ch == "median") {
      c.pipeline.channels.median = true;
    } else {
      throw ParseError(source + ": pipeline.channels entries must be raw|mean|median");
    }
  }
  if (!saw_raw) {
    throw ParseError(source + ": pipeline.channels must include 'raw'");
  }
  c.pipeline.channel_window = r.index("pipeline.window", 10);

  const std::string features = r.str("pipeline.features", "time");
  if (features == "time") {
    c.pipeline.domain = FeatureDomain::kTime;
  } else if (features == "wavelet_l1") {
    c.pipeline.domain = FeatureDomain::kWaveletL1;
  } else if (features == "wavelet_l2") {
    c.pipeline.domain = FeatureDomain::kWaveletL2;
  } else if (features == "wavelet_l3") {
    c.pipeline.domain = FeatureDomain::kWaveletL3;
  } else {
    throw ParseError(source +
                     ": pipeline.features must be time|wavelet_l1|wavelet_l2|wavelet_l3");
  }

  c.pipeline.faultnet.epochs = r.index("faultnet.epochs", 100);
  c.pipeline.faultnet.batch_size = r.index("faultnet.batch_size", 128);
  c.pipeline.faultnet.lr = r.num("faultnet.lr", 0.001);
  c.pipeline.faultnet.conv_channels1 = r.index("faultnet.conv1", 32);
  c.pipeline.faultnet.conv_channels2 = r.index("faultnet.conv2", 64);
  c.pipeline.faultnet.kernel = r.index("faultnet.kernel", 5);
  c.pipeline.faultnet.hidden_units = r.index("faultnet.hidden", 256);
  c.pipeline.faultnet.dropout_p = r.num("faultnet.dropout", 0.25);
  c.pipeline.faultnet.batchnorm = r.flag("faultnet.batchnorm", true);
  c.pipeline.faultnet.standardize = r.flag("faultnet.standardize", true);
  c.pipeline.faultnet.dropout_on_logits = r.flag("faultnet.dropout_on_logits", false);

  c.pipeline.forest.n_trees = r.index("rf.trees", 100);
  c.pipeline.knn_k = r.index("knn.k", 5);
  c.pipeline.logreg.l2 = r.num("logreg.l2", 1e-4);
  c.pipeline.logreg.lr = r.num("logreg.lr", 0.01);
  c.pipeline.logreg.epochs = r.index("logreg.epochs", 500);
  c.pipeline.mlp.hidden = r.index("mlp.hidden", 256);
  c.pipeline.mlp.epochs = r.index("mlp.epochs", 100);
  c.pipeline.mlp.batch_size = r.index("mlp.batch_size", 128);
  c.pipeline.mlp.lr = r.num("mlp.lr", 0.001);

  c.eval.k = r.index("eval.k", 5);
  if (c.eval.k < 2) throw ParseError(source + ": eval.k must be >= 2");
  c.eval.seed = r.seed("eval.seed", 42);
  const std::string avg = r.str("eval.averaging", "macro");
  if (avg == "macro") {
    c.eval.averaging = Averaging::kMacro;
  } else if (avg == "micro") {
    c.eval.averaging = Averaging::kMicro;
  } else {
    throw ParseError(source + ": eval.averaging must be macro|micro");
  }
  c.eval.noisy_train = r.flag("eval.noisy_train", false);

  if (r.has("run.snr_db")) {
    c.run_snr_db = r.num("run.snr_db", 0.0);
  }
  c.noise.snr_db = r.num_list("noise.snr_db", {-4, -2, 0, 2, 6, 8, 10});
  c.noise.seed = r.seed("noise.seed", 7);

  c.out_dir = r.str("out.dir", "out");

  r.check_all_consumed();
  return c;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_kv(config_detail::parse_kv_file(path), path);
}

inline nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["dataset"] = {{"scheme", scheme_name(scheme)},
                  {"manifest", manifest},
                  {"window", dataset_window}};
  j["synth"] = {{"classes", synth.n_classes},
                {"records_per_class", synth_records_per_class},
                {"fault_freqs_hz", synth.fault_freq_hz},
                {"resonance_hz", synth.resonance_freq_hz},
                {"decay_rate", synth.decay_rate},
                {"impulse_amplitude", synth.impulse_amplitude},
                {"noise_std", synth.noise_std},
                {"duration_s", synth.duration_s},
                {"sampling_rate_hz", synth.sampling_rate_hz},
                {"seed", synth.seed}};
  nlohmann::json channels = nlohmann::json::array();
  channels.push_back("raw");
  if (pipeline.channels.mean) channels.push_back("mean");
  if (pipeline.channels.median) channels.push_back("median");
  j["pipeline"] = {{"kind", pipeline_kind_name(pipeline.kind)},
                   {"channels", channels},
                   {"window", pipeline.channel_window},
                   {"features", feature_domain_name(pipeline.domain)}};
  j["faultnet"] = {{"epochs", pipeline.faultnet.epochs},
                   {"batch_size", pipeline.faultnet.batch_size},
                   {"lr", pipeline.faultnet.lr},
                   {"conv1", pipeline.faultnet.conv_channels1},
                   {"conv2", pipeline.faultnet.conv_channels2},
                   {"kernel", pipeline.faultnet.kernel},
                   {"hidden", pipeline.faultnet.hidden_units},
                   {"dropout", pipeline.faultnet.dropout_p},
                   {"batchnorm", pipeline.faultnet.batchnorm},
                   {"standardize", pipeline.faultnet.standardize},
                   {"dropout_on_logits", pipeline.faultnet.dropout_on_logits}};
  j["rf"] = {{"trees", pipeline.forest.n_trees}};
  j["knn"] = {{"k", pipeline.knn_k}};
  j["logreg"] = {{"l2", pipeline.logreg.l2},
                 {"lr", pipeline.logreg.lr},
                 {"epochs", pipeline.logreg.epochs}};
  j["mlp"] = {{"hidden", pipeline.mlp.hidden},
              {"epochs", pipeline.mlp.epochs},
              {"batch_size", pipeline.mlp.batch_size},
              {"lr", pipeline.mlp.lr}};
  j["eval"] = {{"k", eval.k},
               {"seed", eval.seed},
               {"averaging", eval.averaging == Averaging::kMacro ? "macro" : "micro"},
               {"noisy_train", eval.noisy_train}};
  if (run_snr_db) {
    j["run"] = {{"snr_db", *run_snr_db}};
  }
  j["noise"] = {{"snr_db", noise.snr_db}, {"seed", noise.seed}};
  j["out"] = {{"dir", out_dir}};
  return j;
}

}  // namespace faultnet
