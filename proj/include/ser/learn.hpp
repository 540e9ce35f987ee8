#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "ser/corpus.hpp"
#include "ser/nn.hpp"
#include "ser/tensor.hpp"

namespace ser {

struct TrainConfig {
  double learning_rate = 1e-5;
  size_t batch_size = 64;
  size_t max_epochs = 100;
  double split_ratio = 0.8;
  uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;  // throws ConfigError
};

/// Numerically stable softmax (max subtraction). Outputs sum to 1.
std::vector<double> softmax(const std::vector<double>& logits);

/// -log p[true_class], with the probability floored at 1e-12; `floored`
/// reports whether the floor was hit.
double cross_entropy(const std::vector<double>& probs, size_t true_class,
                     bool* floored = nullptr);

/// Loss computed from logits through log-sum-exp; never materializes
/// probabilities. Used on the training path.
double cross_entropy_from_logits(const std::vector<double>& logits,
                                 size_t true_class);

/// Bias-corrected Adam over a fixed parameter registry. A non-finite
/// gradient aborts the whole step and reports the offending parameter.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<ParamRef> params, double learning_rate,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step();
  size_t step_count() const { return step_; }

 private:
  std::vector<ParamRef> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  size_t step_ = 0;
};

struct SplitResult {
  std::vector<ManifestRow> train;
  std::vector<ManifestRow> test;
  std::vector<std::string> warnings;
};

/// Stratified-by-label seeded split. Falls back to a global split (with a
/// warning) when some class has fewer than two rows.
SplitResult split_dataset(const std::vector<ManifestRow>& rows,
                          const TrainConfig& cfg);

/// In-memory training set: features as [N, C, L] plus class indices.
struct Dataset {
  Tensor features;
  std::vector<size_t> labels;

  size_t size() const { return labels.size(); }
};

struct EpochStats {
  size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> log;
  double best_val_acc = 0.0;
  size_t best_epoch = 0;
};

/// Mini-batch training loop with per-epoch validation. The model is left
/// holding the state of the best-validation-accuracy epoch. When `log_jsonl`
/// is given, one JSON object per epoch is streamed to it.
TrainResult train(AttentionCnn& model, const Dataset& train_set,
                  const Dataset& val_set, const TrainConfig& cfg,
                  std::ostream* log_jsonl = nullptr);

struct EvalReport {
  double accuracy = 0.0;
  size_t total = 0;
  std::vector<std::vector<size_t>> confusion;  // [true][predicted]
  std::vector<double> precision, recall;       // per class
};

/// Confusion-matrix statistics from predicted/true index pairs.
EvalReport eval_from_predictions(const std::vector<size_t>& y_true,
                                 const std::vector<size_t>& y_pred,
                                 size_t classes);

/// Runs the model in inference mode over the set and tabulates the report.
/// Throws LabelError if a label index falls outside the model's classes.
EvalReport evaluate(AttentionCnn& model, const Dataset& test_set);

/// Inference-mode logits for every row of the set, batched.
Tensor predict_logits(AttentionCnn& model, const Dataset& set,
                      size_t batch_size = 64);

}  // namespace ser
