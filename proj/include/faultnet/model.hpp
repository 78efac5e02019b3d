#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "faultnet/channels.hpp"
#include "faultnet/errors.hpp"
#include "faultnet/nn.hpp"
#include "faultnet/rng.hpp"
#include "faultnet/tensor.hpp"

namespace faultnet {

// ---------------------------------------------------------------------------
// FaultNet: conv(c1,K) -> [bn] -> relu -> pool -> conv(c2,K) -> [bn] -> relu
// -> pool -> flatten -> dense(hidden) -> relu -> dropout -> dense(classes).
// With 50x50 input and the defaults the flatten width is 64*9*9 = 5184; with
// 40x40 it is 64*7*7 = 3136.

struct FaultNetConfig {
  std::size_t input_h = 50;
  std::size_t input_w = 50;
  std::size_t in_channels = 1;
  std::size_t n_classes = 2;
  std::size_t conv_channels1 = 32;
  std::size_t conv_channels2 = 64;
  std::size_t kernel = 5;
  std::size_t hidden_units = 256;
  double dropout_p = 0.25;
  double lr = 0.001;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  bool batchnorm = true;
  bool standardize = true;
  bool dropout_on_logits = false;  // move dropout after the output layer

  void validate() const {
    if (n_classes < 2) throw InvalidConfig("FaultNet: need at least 2 classes");
    if (in_channels < 1 || in_channels > 3) {
      throw InvalidConfig("FaultNet: in_channels must be 1..3");
    }
    if (kernel < 1) throw InvalidConfig("FaultNet: kernel must be >= 1");
    if (batch_size < 1) throw InvalidConfig("FaultNet: batch size must be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
      throw InvalidConfig("FaultNet: dropout must be in [0, 1)");
    }
    conv_output_hw();  // throws when the spatial size collapses
  }

  // Spatial size after conv(K)/pool/conv(K)/pool.
  std::pair<std::size_t, std::size_t> conv_output_hw() const {
    auto chain = [this](std::size_t d) -> std::size_t {
      if (d < kernel) throw InvalidConfig("FaultNet: input smaller than kernel");
      std::size_t a = d - kernel + 1;
      if (a < 2) throw InvalidConfig("FaultNet: spatial size collapses at pool 1");
      a /= 2;
      if (a < kernel) throw InvalidConfig("FaultNet: spatial size collapses at conv 2");
      a = a - kernel + 1;
      if (a < 2) throw InvalidConfig("FaultNet: spatial size collapses at pool 2");
      return a / 2;
    };
    return {chain(input_h), chain(input_w)};
  }

  std::size_t flatten_width() const {
    const auto [h, w] = conv_output_hw();
    return conv_channels2 * h * w;
  }
};

inline nn::Network build_faultnet(const FaultNetConfig& cfg) {
  cfg.validate();
  Rng init(derive_seed(cfg.seed, 0));
  const std::uint64_t dropout_seed = derive_seed(cfg.seed, 1);

  nn::Network net;
  net.add<nn::Conv2dLayer>(cfg.in_channels, cfg.conv_channels1, cfg.kernel, init);
  if (cfg.batchnorm) net.add<nn::BatchNorm2dLayer>(cfg.conv_channels1);
  net.add<nn::ReluLayer>();
  net.add<nn::MaxPool2Layer>();
  net.add<nn::Conv2dLayer>(cfg.conv_channels1, cfg.conv_channels2, cfg.kernel, init);
  if (cfg.batchnorm) net.add<nn::BatchNorm2dLayer>(cfg.conv_channels2);
  net.add<nn::ReluLayer>();
  net.add<nn::MaxPool2Layer>();
  net.add<nn::FlattenLayer>();
  net.add<nn::DenseLayer>(cfg.flatten_width(), cfg.hidden_units, init);
  net.add<nn::ReluLayer>();
  if (!cfg.dropout_on_logits) net.add<nn::DropoutLayer>(cfg.dropout_p, dropout_seed);
  net.add<nn::DenseLayer>(cfg.hidden_units, cfg.n_classes, init);
  if (cfg.dropout_on_logits) net.add<nn::DropoutLayer>(cfg.dropout_p, dropout_seed);
  return net;
}

// ---------------------------------------------------------------------------
// Generic minibatch training loop (shared by FaultNet and the MLP baseline).

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  nn::AdamConfig adam;
  std::uint64_t shuffle_seed = 0;
  bool batchnorm_present = false;
};

namespace detail {

inline Tensor stack_samples(const std::vector<Tensor>& samples,
                            const std::vector<std::size_t>& indices,
                            std::size_t begin, std::size_t end) {
  std::vector<std::size_t> shape = {end - begin};
  for (std::size_t d : samples[indices[begin]].shape()) shape.push_back(d);
  Tensor out(shape);
  const std::size_t stride = samples[indices[begin]].size();
  for (std::size_t i = begin; i < end; ++i) {
    const Tensor& s = samples[indices[i]];
    std::copy(s.data(), s.data() + stride, out.data() + (i - begin) * stride);
  }
  return out;
}

inline int argmax_row(const double* row, std::size_t c) {
  int best = 0;
  for (std::size_t j = 1; j < c; ++j) {
    if (row[j] > row[best]) best = static_cast<int>(j);
  }
  return best;
}

}  // namespace detail

// Minibatch Adam on softmax cross-entropy. Data is reshuffled each epoch by
// a seeded rng and the final partial batch is kept. When batchnorm is in the
// stack a trailing singleton batch is folded into the previous batch (batch
// statistics are undefined for one sample).
inline std::vector<EpochStats> train_network(nn::Network& net,
                                             const std::vector<Tensor>& samples,
                                             const std::vector<int>& labels,
                                             const TrainOptions& opt) {
  if (samples.empty()) throw EmptyDataset("train_network: no samples");
  if (samples.size() != labels.size()) {
    throw LengthMismatch("train_network: samples/labels size mismatch");
  }
  for (const Tensor& s : samples) {
    if (!s.same_shape(samples[0])) {
      throw ShapeMismatch("train_network: inconsistent sample shapes");
    }
  }

  nn::Adam adam(opt.adam);
  std::vector<EpochStats> history;
  history.reserve(opt.epochs);
  Rng shuffle_rng(opt.shuffle_seed);

  std::vector<std::size_t> indices(samples.size());
  std::iota(indices.begin(), indices.end(), 0);
  const std::size_t n = samples.size();

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    shuffle_rng.shuffle(indices);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t begin = 0;
    while (begin < n) {
      std::size_t end = std::min(begin + opt.batch_size, n);
      if (opt.batchnorm_present && end < n && n - end == 1) {
        end = n;  // fold the trailing singleton into this batch
      }
      Tensor batch = detail::stack_samples(samples, indices, begin, end);
      std::vector<int> batch_labels(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        batch_labels[i - begin] = labels[indices[i]];
      }
      Tensor logits = net.forward(batch, nn::Mode::kTrain);
      nn::SoftmaxCrossEntropy sce = nn::softmax_cross_entropy(logits, batch_labels);
      net.zero_grads();
      net.backward(sce.grad_logits);
      adam.step(net.params(), net.grads());

      loss_sum += sce.loss * static_cast<double>(end - begin);
      const std::size_t c = logits.dim(1);
      for (std::size_t i = 0; i < end - begin; ++i) {
        if (detail::argmax_row(logits.data() + i * c, c) == batch_labels[i]) {
          ++correct;
        }
      }
      begin = end;
    }
    history.push_back({loss_sum / static_cast<double>(n),
                       static_cast<double>(correct) / static_cast<double>(n)});
  }
  return history;
}

// ---------------------------------------------------------------------------
// Trained FaultNet

struct TrainedModel {
  FaultNetConfig config;
  nn::Network net;
  std::vector<EpochStats> history;
  // Per-channel standardization fitted on the training split (empty when
  // standardization is off).
  std::vector<double> channel_mean;
  std::vector<double> channel_std;
};

namespace detail {

inline void standardize_sample(Tensor& t, const std::vector<double>& mean,
                               const std::vector<double>& std) {
  const std::size_t c = t.dim(0), plane = t.dim(1) * t.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double* p = t.data() + ch * plane;
    const double mu = mean[ch], inv = 1.0 / std[ch];
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mu) * inv;
  }
}

}  // namespace detail

inline TrainedModel train_faultnet(const FaultNetConfig& config,
                                   const std::vector<ChannelTensor>& data) {
  config.validate();
  if (data.empty()) throw EmptyDataset("train_faultnet: no training tensors");

  std::set<int> classes;
  for (const ChannelTensor& ct : data) {
    if (ct.data.rank() != 3 || ct.data.dim(0) != config.in_channels ||
        ct.data.dim(1) != config.input_h || ct.data.dim(2) != config.input_w) {
      throw ShapeMismatch("train_faultnet: tensor " + ct.data.shape_str() +
                          " does not match the configured input shape");
    }
    if (ct.label < 0 || static_cast<std::size_t>(ct.label) >= config.n_classes) {
      throw BadLabel("train_faultnet: label " + std::to_string(ct.label) +
                     " out of range");
    }
    classes.insert(ct.label);
  }
  if (classes.size() < 2) {
    throw SingleClass("train_faultnet: training data holds a single class");
  }

  TrainedModel model;
  model.config = config;

  std::vector<Tensor> samples;
  samples.reserve(data.size());
  std::vector<int> labels;
  labels.reserve(data.size());
  for (const ChannelTensor& ct : data) {
    samples.push_back(ct.data);
    labels.push_back(ct.label);
  }

  if (config.standardize) {
    const std::size_t c = config.in_channels;
    const std::size_t plane = config.input_h * config.input_w;
    model.channel_mean.assign(c, 0.0);
    model.channel_std.assign(c, 0.0);
    const double count = static_cast<double>(samples.size() * plane);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (const Tensor& s : samples) {
        const double* p = s.data() + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mean = sum / count;
      double var = 0.0;
      for (const Tensor& s : samples) {
        const double* p = s.data() + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          var += d * d;
        }
      }
      var /= count;
      model.channel_mean[ch] = mean;
      model.channel_std[ch] = var < 1e-24 ? 1.0 : std::sqrt(var);
    }
    for (Tensor& s : samples) {
      detail::standardize_sample(s, model.channel_mean, model.channel_std);
    }
  }

  model.net = build_faultnet(config);
  TrainOptions opt;
  opt.epochs = config.epochs;
  opt.batch_size = config.batch_size;
  opt.adam.lr = config.lr;
  opt.shuffle_seed = derive_seed(config.seed, 2);
  opt.batchnorm_present = config.batchnorm;
  model.history = train_network(model.net, samples, labels, opt);
  return model;
}

struct Prediction {
  std::vector<int> labels;
  Tensor probabilities;  // N x C
};

// Inference: dropout off, batchnorm running statistics. Outputs are
// independent of batch composition; eval-mode forwards write no layer state,
// so a shared model may serve concurrent calls.
inline Prediction predict(TrainedModel& model,
                          const std::vector<ChannelTensor>& inputs,
                          std::size_t chunk = 256) {
  const FaultNetConfig& cfg = model.config;
  Prediction pred;
  pred.probabilities = Tensor({inputs.size(), cfg.n_classes});
  pred.labels.resize(inputs.size());
  if (inputs.empty()) return pred;

  std::vector<Tensor> samples;
  samples.reserve(inputs.size());
  for (const ChannelTensor& ct : inputs) {
    if (ct.data.rank() != 3 || ct.data.dim(0) != cfg.in_channels ||
        ct.data.dim(1) != cfg.input_h || ct.data.dim(2) != cfg.input_w) {
      throw ShapeMismatch("predict: tensor " + ct.data.shape_str() +
                          " does not match the model input shape");
    }
    Tensor t = ct.data;
    if (cfg.standardize) {
      detail::standardize_sample(t, model.channel_mean, model.channel_std);
    }
    samples.push_back(std::move(t));
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t begin = 0; begin < samples.size(); begin += chunk) {
    const std::size_t end = std::min(begin + chunk, samples.size());
    Tensor batch = detail::stack_samples(samples, order, begin, end);
    Tensor logits = model.net.forward(batch, nn::Mode::kEval);
    Tensor probs = nn::softmax_rows(logits);
    const std::size_t c = probs.dim(1);
    for (std::size_t i = 0; i < end - begin; ++i) {
      const double* row = probs.data() + i * c;
      std::copy(row, row + c, pred.probabilities.data() + (begin + i) * c);
      pred.labels[begin + i] = detail::argmax_row(row, c);
    }
  }
  return pred;
}

// ---------------------------------------------------------------------------
// Checkpoint container: versioned JSON holding the config, layer kinds and
// state tensors, standardization statistics, training history and seed.

inline constexpr const char* kCheckpointSchema = "faultnet-checkpoint-v1";

namespace detail {

inline nlohmann::json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"values", t.values()}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor::from_values(j.at("shape").get<std::vector<std::size_t>>(),
                             j.at("values").get<std::vector<double>>());
}

inline nlohmann::json config_to_json(const FaultNetConfig& c) {
  return {{"input_h", c.input_h},
          {"input_w", c.input_w},
          {"in_channels", c.in_channels},
          {"n_classes", c.n_classes},
          {"conv_channels1", c.conv_channels1},
          {"conv_channels2", c.conv_channels2},
          {"kernel", c.kernel},
          {"hidden_units", c.hidden_units},
          {"dropout_p", c.dropout_p},
          {"lr", c.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"batchnorm", c.batchnorm},
          {"standardize", c.standardize},
          {"dropout_on_logits", c.dropout_on_logits}};
}

inline FaultNetConfig config_from_json(const nlohmann::json& j) {
  FaultNetConfig c;
  c.input_h = j.at("input_h").get<std::size_t>();
  c.input_w = j.at("input_w").get<std::size_t>();
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.conv_channels1 = j.at("conv_channels1").get<std::size_t>();
  c.conv_channels2 = j.at("conv_channels2").get<std::size_t>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.hidden_units = j.at("hidden_units").get<std::size_t>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.lr = j.at("lr").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.batchnorm = j.at("batchnorm").get<bool>();
  c.standardize = j.at("standardize").get<bool>();
  c.dropout_on_logits = j.at("dropout_on_logits").get<bool>();
  return c;
}

}  // namespace detail

inline void save_checkpoint(TrainedModel& model, const std::string& path) {
  nlohmann::json j;
  j["schema"] = kCheckpointSchema;
  j["config"] = detail::config_to_json(model.config);
  j["standardization"] = {{"mean", model.channel_mean},
                          {"std", model.channel_std}};
  nlohmann::json hist = nlohmann::json::array();
  for (const EpochStats& e : model.history) {
    hist.push_back({{"loss", e.loss}, {"accuracy", e.accuracy}});
  }
  j["history"] = hist;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t i = 0; i < model.net.n_layers(); ++i) {
    nn::Layer& layer = model.net.layer(i);
    nlohmann::json lj;
    lj["kind"] = layer.kind();
    nlohmann::json state;
    for (auto& [name, tensor] : layer.state()) {
      state[name] = detail::tensor_to_json(*tensor);
    }
    lj["state"] = state;
    layers.push_back(lj);
  }
  j["layers"] = layers;

  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": invalid checkpoint JSON: " + e.what());
  }
  if (j.value("schema", "") != kCheckpointSchema) {
    throw ParseError(path + ": unknown checkpoint schema");
  }
  TrainedModel model;
  model.config = detail::config_from_json(j.at("config"));
  model.channel_mean = j.at("standardization").at("mean").get<std::vector<double>>();
  model.channel_std = j.at("standardization").at("std").get<std::vector<double>>();
  for (const auto& e : j.at("history")) {
    model.history.push_back({e.at("loss").get<double>(),
                             e.at("accuracy").get<double>()});
  }
  model.net = build_faultnet(model.config);
  const auto& layers = j.at("layers");
  if (layers.size() != model.net.n_layers()) {
    throw ParseError(path + ": layer count does not match the config");
  }
  for (std::size_t i = 0; i < model.net.n_layers(); ++i) {
    nn::Layer& layer = model.net.layer(i);
    const auto& lj = layers.at(i);
    if (lj.at("kind").get<std::string>() != layer.kind()) {
      throw ParseError(path + ": layer " + std::to_string(i) + " kind mismatch");
    }
    for (auto& [name, tensor] : layer.state()) {
      Tensor loaded = detail::tensor_from_json(lj.at("state").at(name));
      check_same_shape(loaded, *tensor, "load_checkpoint");
      *tensor = std::move(loaded);
    }
  }
  return model;
}

// Training history CSV: epoch,loss,accuracy.
inline void write_history_csv(const std::string& path,
                              const std::vector<EpochStats>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write history CSV: " + path);
  out << "epoch,loss,accuracy\n";
  char buf[96];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i + 1,
                  history[i].loss, history[i].accuracy);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace faultnet
