#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ser/rng.hpp"
#include "ser/tensor.hpp"

namespace ser {

/// 1-D cross-correlation, stride 1, zero 'same' padding. Kernel width must
/// be odd so the padding is symmetric.
class Conv1d {
 public:
  Conv1d(size_t in_channels, size_t out_channels, size_t kernel);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);   // [B, Cin, L] -> [B, Cout, L]
  Tensor backward(const Tensor& dy); // accumulates into weight.grad/bias.grad

  Tensor weight;  // [out, in, kernel]
  Tensor bias;    // [out]

 private:
  Tensor x_;
  bool has_input_ = false;
};

/// Per-channel batch normalization over (batch, length) with affine output.
/// Training mode uses batch statistics and updates the running estimates;
/// inference mode uses the running estimates.
class BatchNorm1d {
 public:
  explicit BatchNorm1d(size_t channels, double eps = 1e-5,
                       double momentum = 0.1);

  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& dy);

  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double eps;
  double momentum;

 private:
  Tensor x_hat_;
  std::vector<double> batch_mean_, batch_inv_std_;
  bool trained_forward_ = false;
  bool has_input_ = false;
};

class Relu {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  std::vector<uint8_t> mask_;
};

/// Max over a sliding window (odd width, stride 1, 'same' padding with -inf).
/// Backward routes each position's gradient to the first maximal index.
class MaxPool1d {
 public:
  explicit MaxPool1d(size_t window = 7);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  size_t window() const { return window_; }

 private:
  size_t window_;
  std::vector<size_t> argmax_;
  std::vector<size_t> in_shape_;
};

/// Squeeze-and-excitation gate: per-channel weights from globally pooled
/// statistics, sigmoid(mlp(avgpool) + mlp(maxpool)), with the two branches
/// sharing the bias-free MLP. ReLU follows the first matrix.
class ChannelAttention {
 public:
  ChannelAttention(size_t channels, size_t reduction);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  Tensor w0;  // [C/r, C]
  Tensor w1;  // [C, C/r]
  size_t reduction() const { return reduction_; }

 private:
  size_t channels_, reduction_;
  Tensor x_;
  // Saved per-sample intermediates (row-major over batch).
  std::vector<double> avg_, mx_, hidden_avg_, hidden_max_, gate_;
  std::vector<size_t> argmax_;
  bool has_input_ = false;
};

/// Per-position gate from channel statistics: the channel mean and channel
/// max form a 2-row map convolved with one odd-width kernel, then sigmoid.
class SpatialAttention {
 public:
  explicit SpatialAttention(size_t kernel = 7);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  Tensor weight;  // [2, kernel]
  Tensor bias;    // [1]

 private:
  size_t kernel_;
  Tensor x_;
  std::vector<double> mean_map_, max_map_, gate_;
  std::vector<size_t> argmax_channel_;
  bool has_input_ = false;
};

/// Fully connected layer on [B, F] inputs.
class Dense {
 public:
  Dense(size_t in_features, size_t out_features);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

 private:
  Tensor x_;
  bool has_input_ = false;
};

struct ModelConfig {
  size_t in_channels = 1;
  size_t input_len = 20;
  size_t classes = 8;
  size_t conv_channels = 256;
  size_t kernel = 7;
  size_t conv_blocks = 2;
  size_t pool_window = 7;
  size_t reduction = 8;
  size_t dense_units = 64;
  uint64_t init_seed = 1;

  void validate() const;  // throws ConfigError
};

/// Attention CNN classifier: repeated [conv -> batchnorm -> relu -> maxpool]
/// blocks, channel then spatial attention, dense+relu, and a linear head
/// producing logits.
class AttentionCnn {
 public:
  explicit AttentionCnn(const ModelConfig& cfg);

  /// [B, in_channels, input_len] -> logits [B, classes].
  Tensor forward(const Tensor& x, bool training);

  /// Backpropagates d(loss)/d(logits), accumulating parameter gradients.
  /// Throws StateError if no forward pass is recorded.
  void backward(const Tensor& dlogits);

  std::vector<ParamRef> params();       // learnable tensors
  std::vector<ParamRef> state();        // params + batch-norm running stats
  void zero_grad();

  const ModelConfig& config() const { return cfg_; }

 private:
  struct ConvBlock {
    Conv1d conv;
    BatchNorm1d bn;
    Relu relu;
    MaxPool1d pool;
  };

  ModelConfig cfg_;
  std::vector<ConvBlock> blocks_;
  ChannelAttention ca_;
  SpatialAttention sa_;
  Dense dense_;
  Relu dense_relu_;
  Dense head_;
  bool has_forward_ = false;
  std::vector<size_t> pre_flatten_shape_;
};

/// Snapshot of every state tensor, used for best-epoch checkpointing.
std::vector<std::vector<double>> snapshot_state(AttentionCnn& model);
void restore_state(AttentionCnn& model,
                   const std::vector<std::vector<double>>& snap);

/// Versioned binary checkpoint ("SERM"). Every architecture dimension is
/// recovered from the stored header and tensor shapes except the pool
/// window, which leaves no shape footprint; `base` supplies it when a
/// non-default model is being reloaded.
void save_checkpoint(const std::string& path, AttentionCnn& model);
AttentionCnn load_checkpoint(const std::string& path,
                             const ModelConfig& base = ModelConfig{});

}  // namespace ser
