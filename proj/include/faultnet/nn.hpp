#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "faultnet/errors.hpp"
#include "faultnet/rng.hpp"
#include "faultnet/tensor.hpp"

namespace faultnet::nn {

enum class Mode { kTrain, kEval };

// ---------------------------------------------------------------------------
// Per-sample primitives. Shapes follow the CNN convention: activations are
// C x H x W, kernels C_out x C_in x K x K. "Convolution" is cross-correlation
// (no kernel flip), valid padding, stride 1.

// Scatters an input patch matrix: cols is (C*K*K) x (OH*OW) with
// cols[(c*K+a)*K+b][i*OW+j] = input[c][i+a][j+b].
inline void im2col(const Tensor& input, std::size_t k, std::vector<double>& cols) {
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  cols.assign(c_in * k * k * oh * ow, 0.0);
  const double* in = input.data();
  double* out = cols.data();
  for (std::size_t c = 0; c < c_in; ++c) {
    const double* plane = in + c * h * w;
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        double* row = out + ((c * k + a) * k + b) * (oh * ow);
        for (std::size_t i = 0; i < oh; ++i) {
          const double* src = plane + (i + a) * w + b;
          double* dst = row + i * ow;
          for (std::size_t j = 0; j < ow; ++j) dst[j] = src[j];
        }
      }
    }
  }
}

inline void col2im_accum(const std::vector<double>& cols, std::size_t c_in,
                         std::size_t h, std::size_t w, std::size_t k,
                         Tensor& grad_input) {
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  double* out = grad_input.data();
  const double* in = cols.data();
  for (std::size_t c = 0; c < c_in; ++c) {
    double* plane = out + c * h * w;
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        const double* row = in + ((c * k + a) * k + b) * (oh * ow);
        for (std::size_t i = 0; i < oh; ++i) {
          double* dst = plane + (i + a) * w + b;
          const double* src = row + i * ow;
          for (std::size_t j = 0; j < ow; ++j) dst[j] += src[j];
        }
      }
    }
  }
}

inline void conv2d_check_shapes(const Tensor& input, const Tensor& kernels,
                                const Tensor& bias) {
  if (input.rank() != 3) {
    throw ShapeMismatch("conv2d: input must be CxHxW, got " + input.shape_str());
  }
  if (kernels.rank() != 4) {
    throw ShapeMismatch("conv2d: kernels must be OxCxKxK, got " +
                        kernels.shape_str());
  }
  if (kernels.dim(2) != kernels.dim(3)) {
    throw ShapeMismatch("conv2d: kernels must be square");
  }
  if (kernels.dim(1) != input.dim(0)) {
    throw ShapeMismatch("conv2d: kernel channels " +
                        std::to_string(kernels.dim(1)) + " != input channels " +
                        std::to_string(input.dim(0)));
  }
  const std::size_t k = kernels.dim(2);
  if (k > input.dim(1) || k > input.dim(2)) {
    throw ShapeMismatch("conv2d: kernel larger than input plane");
  }
  if (bias.rank() != 1 || bias.dim(0) != kernels.dim(0)) {
    throw ShapeMismatch("conv2d: bias must have one entry per output channel");
  }
}

inline Tensor conv2d(const Tensor& input, const Tensor& kernels,
                     const Tensor& bias) {
  conv2d_check_shapes(input, kernels, bias);
  const std::size_t c_out = kernels.dim(0), k = kernels.dim(2);
  const std::size_t oh = input.dim(1) - k + 1, ow = input.dim(2) - k + 1;
  const std::size_t ckk = input.dim(0) * k * k;

  std::vector<double> cols;
  im2col(input, k, cols);

  Tensor out({c_out, oh, ow});
  for (std::size_t o = 0; o < c_out; ++o) {
    const double b = bias[o];
    double* plane = out.data() + o * oh * ow;
    for (std::size_t i = 0; i < oh * ow; ++i) plane[i] = b;
  }
  gemm_accum(c_out, oh * ow, ckk, kernels.data(), cols.data(), out.data());
  return out;
}

struct Conv2dGrads {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};

inline Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& input,
                                   const Tensor& kernels) {
  if (grad_out.rank() != 3 || grad_out.dim(0) != kernels.dim(0)) {
    throw ShapeMismatch("conv2d_backward: bad grad_out shape " +
                        grad_out.shape_str());
  }
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = kernels.dim(0), k = kernels.dim(2);
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  if (grad_out.dim(1) != oh || grad_out.dim(2) != ow) {
    throw ShapeMismatch("conv2d_backward: grad_out plane mismatch");
  }
  const std::size_t ckk = c_in * k * k;

  std::vector<double> cols;
  im2col(input, k, cols);

  Conv2dGrads g;
  g.input = Tensor({c_in, h, w});
  g.kernels = Tensor({c_out, c_in, k, k});
  g.bias = Tensor({c_out});

  for (std::size_t o = 0; o < c_out; ++o) {
    const double* plane = grad_out.data() + o * oh * ow;
    double acc = 0.0;
    for (std::size_t i = 0; i < oh * ow; ++i) acc += plane[i];
    g.bias[o] = acc;
  }

  // dK = dOut (C_out x OHW) * cols^T
  gemm_bt_accum(c_out, ckk, oh * ow, grad_out.data(), cols.data(),
                g.kernels.data());

  // dCols = K^T (CKK x C_out) * dOut, then scatter back to the input plane.
  std::vector<double> dcols(ckk * oh * ow, 0.0);
  gemm_at_accum(ckk, oh * ow, c_out, kernels.data(), grad_out.data(),
                dcols.data());
  col2im_accum(dcols, c_in, h, w, k, g.input);
  return g;
}

// 2x2 max pooling with stride 2; trailing odd row/column dropped. The argmax
// map stores, per output element, the flat input index the max came from
// (ties resolved to the first element in row-major window order).
struct MaxPoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;
};

inline MaxPoolResult maxpool2(const Tensor& input) {
  if (input.rank() != 3) {
    throw ShapeMismatch("maxpool2: input must be CxHxW, got " + input.shape_str());
  }
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h < 2 || w < 2) throw ShapeMismatch("maxpool2: plane smaller than 2x2");
  const std::size_t oh = h / 2, ow = w / 2;
  MaxPoolResult res;
  res.output = Tensor({c, oh, ow});
  res.argmax.resize(c * oh * ow);
  const double* in = input.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t base = (ch * h + 2 * i) * w + 2 * j;
        std::size_t best = base;
        double best_v = in[base];
        const std::size_t cands[3] = {base + 1, base + w, base + w + 1};
        for (std::size_t idx : cands) {
          if (in[idx] > best_v) {
            best_v = in[idx];
            best = idx;
          }
        }
        const std::size_t out_idx = (ch * oh + i) * ow + j;
        res.output[out_idx] = best_v;
        res.argmax[out_idx] = best;
      }
    }
  }
  return res;
}

inline Tensor maxpool2_backward(const Tensor& grad_out,
                                const std::vector<std::size_t>& argmax,
                                const std::vector<std::size_t>& input_shape) {
  Tensor grad_in(input_shape);
  if (argmax.size() != grad_out.size()) {
    throw ShapeMismatch("maxpool2_backward: argmax map mismatch");
  }
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    grad_in[argmax[i]] += grad_out[i];
  }
  return grad_in;
}

// max(0, x); the derivative at exactly 0 is defined as 0.
inline Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 0.0) out[i] = 0.0;
  }
  return out;
}

inline Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
  check_same_shape(grad_out, input, "relu_backward");
  Tensor grad = grad_out;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (input[i] <= 0.0) grad[i] = 0.0;
  }
  return grad;
}

// Affine map: input N x F, weights F x U, bias U -> N x U.
inline Tensor fully_connected(const Tensor& input, const Tensor& weights,
                              const Tensor& bias) {
  if (input.rank() != 2 || weights.rank() != 2 ||
      input.dim(1) != weights.dim(0) || bias.dim(0) != weights.dim(1)) {
    throw ShapeMismatch("fully_connected: " + input.shape_str() + " x " +
                        weights.shape_str() + " + " + bias.shape_str());
  }
  const std::size_t n = input.dim(0), f = input.dim(1), u = weights.dim(1);
  Tensor out({n, u});
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * u;
    for (std::size_t j = 0; j < u; ++j) row[j] = bias[j];
  }
  gemm_accum(n, u, f, input.data(), weights.data(), out.data());
  return out;
}

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

inline DenseGrads fully_connected_backward(const Tensor& grad_out,
                                           const Tensor& input,
                                           const Tensor& weights) {
  const std::size_t n = input.dim(0), f = input.dim(1), u = weights.dim(1);
  if (grad_out.rank() != 2 || grad_out.dim(0) != n || grad_out.dim(1) != u) {
    throw ShapeMismatch("fully_connected_backward: bad grad_out shape");
  }
  DenseGrads g;
  g.input = Tensor({n, f});
  g.weights = Tensor({f, u});
  g.bias = Tensor({u});
  // dW = X^T * dOut
  gemm_at_accum(f, u, n, input.data(), grad_out.data(), g.weights.data());
  // db = column sums of dOut
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = grad_out.data() + i * u;
    for (std::size_t j = 0; j < u; ++j) g.bias[j] += row[j];
  }
  // dX = dOut * W^T
  gemm_bt_accum(n, f, u, grad_out.data(), weights.data(), g.input.data());
  return g;
}

// Mean softmax cross-entropy over a batch, computed with max-subtraction.
struct SoftmaxCrossEntropy {
  double loss = 0.0;
  Tensor grad_logits;   // (softmax - one_hot) / N
  Tensor probabilities; // N x C
};

inline SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits,
                                                 const std::vector<int>& labels) {
  if (logits.rank() != 2) {
    throw ShapeMismatch("softmax_cross_entropy: logits must be NxC");
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeMismatch("softmax_cross_entropy: one label per row required");
  }
  SoftmaxCrossEntropy res;
  res.grad_logits = Tensor({n, c});
  res.probabilities = Tensor({n, c});
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw BadLabel("softmax_cross_entropy: label " + std::to_string(label) +
                     " out of range for " + std::to_string(c) + " classes");
    }
    const double* row = logits.data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z);
    total += mx + log_z - row[static_cast<std::size_t>(label)];
    double* prow = res.probabilities.data() + i * c;
    double* grow = res.grad_logits.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(row[j] - mx) / z;
      prow[j] = p;
      grow[j] = p / static_cast<double>(n);
    }
    grow[static_cast<std::size_t>(label)] -= 1.0 / static_cast<double>(n);
  }
  res.loss = total / static_cast<double>(n);
  return res;
}

// Row-wise stable softmax, for inference.
inline Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw ShapeMismatch("softmax_rows: logits must be NxC");
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data() + i * c;
    double* orow = out.data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (std::size_t j = 0; j < c; ++j) orow[j] /= z;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layers: batched wrappers (leading N dimension) around the primitives, with
// cached activations for the backward pass. Gradients accumulate serially
// over the batch so results are independent of any outer parallelism.

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::string kind() const = 0;
  virtual std::vector<Tensor*> params() { return {}; }
  virtual std::vector<Tensor*> grads() { return {}; }
  // Named persistent state (parameters + running statistics) for checkpoints.
  virtual std::vector<std::pair<std::string, Tensor*>> state() { return {}; }
  void zero_grads() {
    for (Tensor* g : grads()) g->fill(0.0);
  }
};

namespace detail {

inline Tensor slice_sample(const Tensor& batch, std::size_t n) {
  std::vector<std::size_t> shape(batch.shape().begin() + 1, batch.shape().end());
  Tensor t(shape);
  const std::size_t stride = t.size();
  std::copy(batch.data() + n * stride, batch.data() + (n + 1) * stride, t.data());
  return t;
}

inline void store_sample(Tensor& batch, std::size_t n, const Tensor& sample) {
  std::copy(sample.data(), sample.data() + sample.size(),
            batch.data() + n * sample.size());
}

}  // namespace detail

class Conv2dLayer : public Layer {
 public:
  Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t k,
              Rng& init_rng)
      : kernels_({out_channels, in_channels, k, k}),
        bias_({out_channels}),
        grad_kernels_({out_channels, in_channels, k, k}),
        grad_bias_({out_channels}) {
    const double bound =
        std::sqrt(6.0 / static_cast<double>(in_channels * k * k));
    for (std::size_t i = 0; i < kernels_.size(); ++i) {
      kernels_[i] = init_rng.uniform(-bound, bound);
    }
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    if (x.rank() != 4) {
      throw ShapeMismatch("conv layer expects NxCxHxW, got " + x.shape_str());
    }
    if (mode == Mode::kTrain) input_ = x;  // eval forward stays read-only
    const std::size_t n = x.dim(0);
    const std::size_t k = kernels_.dim(2);
    const std::size_t oh = x.dim(2) - k + 1, ow = x.dim(3) - k + 1;
    Tensor out({n, kernels_.dim(0), oh, ow});
    for (std::size_t i = 0; i < n; ++i) {
      detail::store_sample(out, i,
                           conv2d(detail::slice_sample(x, i), kernels_, bias_));
    }
    check_finite(out, "conv2d forward");
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    const std::size_t n = input_.dim(0);
    Tensor grad_in(input_.shape());
    grad_kernels_.fill(0.0);
    grad_bias_.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      Conv2dGrads g = conv2d_backward(detail::slice_sample(grad_out, i),
                                      detail::slice_sample(input_, i), kernels_);
      detail::store_sample(grad_in, i, g.input);
      for (std::size_t j = 0; j < grad_kernels_.size(); ++j) {
        grad_kernels_[j] += g.kernels[j];
      }
      for (std::size_t j = 0; j < grad_bias_.size(); ++j) {
        grad_bias_[j] += g.bias[j];
      }
    }
    check_finite(grad_in, "conv2d backward");
    return grad_in;
  }

  std::string kind() const override { return "conv2d"; }
  std::vector<Tensor*> params() override { return {&kernels_, &bias_}; }
  std::vector<Tensor*> grads() override { return {&grad_kernels_, &grad_bias_}; }
  std::vector<std::pair<std::string, Tensor*>> state() override {
    return {{"kernels", &kernels_}, {"bias", &bias_}};
  }

 private:
  Tensor kernels_, bias_;
  Tensor grad_kernels_, grad_bias_;
  Tensor input_;
};

class BatchNorm2dLayer : public Layer {
 public:
  explicit BatchNorm2dLayer(std::size_t channels, double momentum = 0.9,
                            double eps = 1e-5)
      : momentum_(momentum),
        eps_(eps),
        gamma_({channels}, 1.0),
        beta_({channels}),
        running_mean_({channels}),
        running_var_({channels}, 1.0),
        grad_gamma_({channels}),
        grad_beta_({channels}) {}

  Tensor forward(const Tensor& x, Mode mode) override {
    if (x.rank() != 4 || x.dim(1) != gamma_.dim(0)) {
      throw ShapeMismatch("batchnorm expects NxCxHxW with C=" +
                          std::to_string(gamma_.dim(0)) + ", got " +
                          x.shape_str());
    }
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t m = n * h * w;
    last_mode_ = mode;
    Tensor out(x.shape());

    if (mode == Mode::kTrain) {
      if (n < 2) {
        throw InvalidMode("batchnorm training requires a batch of at least 2");
      }
      input_ = x;
      xhat_ = Tensor(x.shape());
      inv_std_ = Tensor({c});
      for (std::size_t ch = 0; ch < c; ++ch) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double* plane = x.data() + (i * c + ch) * h * w;
          for (std::size_t p = 0; p < h * w; ++p) mean += plane[p];
        }
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double* plane = x.data() + (i * c + ch) * h * w;
          for (std::size_t p = 0; p < h * w; ++p) {
            const double d = plane[p] - mean;
            var += d * d;
          }
        }
        var /= static_cast<double>(m);
        const double inv = 1.0 / std::sqrt(var + eps_);
        inv_std_[ch] = inv;
        const double g = gamma_[ch], b = beta_[ch];
        for (std::size_t i = 0; i < n; ++i) {
          const double* plane = x.data() + (i * c + ch) * h * w;
          double* xh = xhat_.data() + (i * c + ch) * h * w;
          double* o = out.data() + (i * c + ch) * h * w;
          for (std::size_t p = 0; p < h * w; ++p) {
            const double v = (plane[p] - mean) * inv;
            xh[p] = v;
            o[p] = g * v + b;
          }
        }
        running_mean_[ch] = momentum_ * running_mean_[ch] + (1.0 - momentum_) * mean;
        running_var_[ch] = momentum_ * running_var_[ch] + (1.0 - momentum_) * var;
      }
    } else {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double inv = 1.0 / std::sqrt(running_var_[ch] + eps_);
        const double g = gamma_[ch], b = beta_[ch], mu = running_mean_[ch];
        for (std::size_t i = 0; i < n; ++i) {
          const double* plane = x.data() + (i * c + ch) * h * w;
          double* o = out.data() + (i * c + ch) * h * w;
          for (std::size_t p = 0; p < h * w; ++p) {
            o[p] = g * (plane[p] - mu) * inv + b;
          }
        }
      }
    }
    check_finite(out, "batchnorm forward");
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    if (last_mode_ != Mode::kTrain) {
      throw InvalidMode("batchnorm backward requires a training-mode forward");
    }
    const std::size_t n = input_.dim(0), c = input_.dim(1);
    const std::size_t h = input_.dim(2), w = input_.dim(3);
    const std::size_t m = n * h * w;
    Tensor grad_in(input_.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* dy = grad_out.data() + (i * c + ch) * h * w;
        const double* xh = xhat_.data() + (i * c + ch) * h * w;
        for (std::size_t p = 0; p < h * w; ++p) {
          sum_dy += dy[p];
          sum_dy_xhat += dy[p] * xh[p];
        }
      }
      grad_gamma_[ch] += sum_dy_xhat;
      grad_beta_[ch] += sum_dy;
      const double scale = gamma_[ch] * inv_std_[ch] / static_cast<double>(m);
      for (std::size_t i = 0; i < n; ++i) {
        const double* dy = grad_out.data() + (i * c + ch) * h * w;
        const double* xh = xhat_.data() + (i * c + ch) * h * w;
        double* dx = grad_in.data() + (i * c + ch) * h * w;
        for (std::size_t p = 0; p < h * w; ++p) {
          dx[p] = scale * (static_cast<double>(m) * dy[p] - sum_dy -
                           xh[p] * sum_dy_xhat);
        }
      }
    }
    check_finite(grad_in, "batchnorm backward");
    return grad_in;
  }

  std::string kind() const override { return "batchnorm2d"; }
  std::vector<Tensor*> params() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> grads() override { return {&grad_gamma_, &grad_beta_}; }
  std::vector<std::pair<std::string, Tensor*>> state() override {
    return {{"gamma", &gamma_},
            {"beta", &beta_},
            {"running_mean", &running_mean_},
            {"running_var", &running_var_}};
  }

 private:
  double momentum_, eps_;
  Tensor gamma_, beta_, running_mean_, running_var_;
  Tensor grad_gamma_, grad_beta_;
  Tensor input_, xhat_, inv_std_;
  Mode last_mode_ = Mode::kEval;
};

class ReluLayer : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override {
    if (mode == Mode::kTrain) input_ = x;
    return relu(x);
  }
  Tensor backward(const Tensor& grad_out) override {
    return relu_backward(grad_out, input_);
  }
  std::string kind() const override { return "relu"; }

 private:
  Tensor input_;
};

class MaxPool2Layer : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override {
    if (x.rank() != 4) {
      throw ShapeMismatch("maxpool layer expects NxCxHxW, got " + x.shape_str());
    }
    const bool train = mode == Mode::kTrain;
    if (train) {
      input_shape_.assign(x.shape().begin() + 1, x.shape().end());
      argmax_.assign(x.dim(0), {});
    }
    const std::size_t n = x.dim(0);
    Tensor out;
    for (std::size_t i = 0; i < n; ++i) {
      MaxPoolResult r = maxpool2(detail::slice_sample(x, i));
      if (i == 0) {
        std::vector<std::size_t> out_shape = {n};
        for (std::size_t d : r.output.shape()) out_shape.push_back(d);
        out = Tensor(out_shape);
      }
      if (train) argmax_[i] = std::move(r.argmax);
      detail::store_sample(out, i, r.output);
    }
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    const std::size_t n = grad_out.dim(0);
    std::vector<std::size_t> in_shape = {n};
    for (std::size_t d : input_shape_) in_shape.push_back(d);
    Tensor grad_in(in_shape);
    for (std::size_t i = 0; i < n; ++i) {
      Tensor g = maxpool2_backward(detail::slice_sample(grad_out, i), argmax_[i],
                                   input_shape_);
      detail::store_sample(grad_in, i, g);
    }
    return grad_in;
  }

  std::string kind() const override { return "maxpool2"; }

 private:
  std::vector<std::size_t> input_shape_;
  std::vector<std::vector<std::size_t>> argmax_;
};

class FlattenLayer : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override {
    if (mode == Mode::kTrain) input_shape_ = x.shape();
    std::size_t features = 1;
    for (std::size_t i = 1; i < x.rank(); ++i) features *= x.dim(i);
    return Tensor::from_values({x.dim(0), features}, x.values());
  }
  Tensor backward(const Tensor& grad_out) override {
    return Tensor::from_values(input_shape_, grad_out.values());
  }
  std::string kind() const override { return "flatten"; }

 private:
  std::vector<std::size_t> input_shape_;
};

class DenseLayer : public Layer {
 public:
  DenseLayer(std::size_t in_features, std::size_t out_features, Rng& init_rng)
      : weights_({in_features, out_features}),
        bias_({out_features}),
        grad_weights_({in_features, out_features}),
        grad_bias_({out_features}) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_features));
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      weights_[i] = init_rng.uniform(-bound, bound);
    }
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    if (mode == Mode::kTrain) input_ = x;
    Tensor out = fully_connected(x, weights_, bias_);
    check_finite(out, "dense forward");
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    DenseGrads g = fully_connected_backward(grad_out, input_, weights_);
    for (std::size_t i = 0; i < grad_weights_.size(); ++i) {
      grad_weights_[i] += g.weights[i];
    }
    for (std::size_t i = 0; i < grad_bias_.size(); ++i) {
      grad_bias_[i] += g.bias[i];
    }
    check_finite(g.input, "dense backward");
    return g.input;
  }

  std::string kind() const override { return "dense"; }
  std::vector<Tensor*> params() override { return {&weights_, &bias_}; }
  std::vector<Tensor*> grads() override { return {&grad_weights_, &grad_bias_}; }
  std::vector<std::pair<std::string, Tensor*>> state() override {
    return {{"weights", &weights_}, {"bias", &bias_}};
  }

 private:
  Tensor weights_, bias_;
  Tensor grad_weights_, grad_bias_;
  Tensor input_;
};

// Inverted dropout: survivors are scaled by 1/(1-p) in training; inference
// is the identity. Masks are drawn from the layer's own seeded stream.
class DropoutLayer : public Layer {
 public:
  DropoutLayer(double p, std::uint64_t seed) : p_(p), rng_(seed) {
    if (!(p >= 0.0 && p < 1.0)) {
      throw InvalidP("dropout: p must be in [0, 1), got " + std::to_string(p));
    }
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    if (mode == Mode::kEval) return x;  // identity, no state touched
    if (p_ == 0.0) {
      mask_.assign(x.size(), 1.0);
      return x;
    }
    const double scale = 1.0 / (1.0 - p_);
    mask_.resize(x.size());
    Tensor out = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (rng_.uniform() < p_) {
        mask_[i] = 0.0;
        out[i] = 0.0;
      } else {
        mask_[i] = scale;
        out[i] *= scale;
      }
    }
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    if (mask_.size() != grad_out.size()) {
      throw ShapeMismatch("dropout backward: stale mask");
    }
    Tensor grad = grad_out;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= mask_[i];
    return grad;
  }

  std::string kind() const override { return "dropout"; }

 private:
  double p_;
  Rng rng_;
  std::vector<double> mask_;
};

// ---------------------------------------------------------------------------
// Network: an ordered layer stack.

class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x, Mode mode) {
    Tensor cur = x;
    for (auto& layer : layers_) cur = layer->forward(cur, mode);
    return cur;
  }

  Tensor backward(const Tensor& grad) {
    Tensor cur = grad;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      cur = (*it)->backward(cur);
    }
    return cur;
  }

  std::vector<Tensor*> params() {
    std::vector<Tensor*> out;
    for (auto& l : layers_) {
      for (Tensor* p : l->params()) out.push_back(p);
    }
    return out;
  }

  std::vector<Tensor*> grads() {
    std::vector<Tensor*> out;
    for (auto& l : layers_) {
      for (Tensor* g : l->grads()) out.push_back(g);
    }
    return out;
  }

  void zero_grads() {
    for (auto& l : layers_) l->zero_grads();
  }

  std::size_t n_layers() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// ---------------------------------------------------------------------------
// Adam with bias correction.

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  std::size_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  void step(const std::vector<Tensor*>& params,
            const std::vector<Tensor*>& grads) {
    if (params.size() != grads.size()) {
      throw ShapeMismatch("adam: params/grads count mismatch");
    }
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i]->size(), 0.0);
        v_[i].assign(params[i]->size(), 0.0);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i];
      const Tensor& g = *grads[i];
      if (p.size() != g.size() || p.size() != m_[i].size()) {
        throw ShapeMismatch("adam: parameter/gradient shape mismatch");
      }
      std::vector<double>& m = m_[i];
      std::vector<double>& v = v_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = g[j];
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace faultnet::nn
