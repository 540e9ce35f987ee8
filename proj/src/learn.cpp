#include "ser/learn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>

#include "ser/errors.hpp"
#include "ser/rng.hpp"

namespace ser {

void TrainConfig::validate() const {
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ConfigError("split_ratio must lie in (0, 1)");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
}

std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw ShapeError("softmax of empty vector");
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - hi);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

double cross_entropy(const std::vector<double>& probs, size_t true_class,
                     bool* floored) {
  if (true_class >= probs.size()) {
    throw ShapeError("true class index out of range");
  }
  constexpr double kFloor = 1e-12;
  const double p = probs[true_class];
  if (floored) *floored = p < kFloor;
  return -std::log(std::max(p, kFloor));
}

double cross_entropy_from_logits(const std::vector<double>& logits,
                                 size_t true_class) {
  if (true_class >= logits.size()) {
    throw ShapeError("true class index out of range");
  }
  const double hi = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double h : logits) sum += std::exp(h - hi);
  return std::log(sum) + hi - logits[true_class];
}

AdamOptimizer::AdamOptimizer(std::vector<ParamRef> params, double learning_rate,
                             double beta1, double beta2, double eps)
    : params_(std::move(params)),
      lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  for (auto& p : params_) {
    p.tensor->ensure_grad();
    m_.emplace_back(p.tensor->data.size(), 0.0);
    v_.emplace_back(p.tensor->data.size(), 0.0);
  }
}

void AdamOptimizer::step() {
  for (auto& p : params_) {
    if (p.tensor->grad.size() != p.tensor->data.size()) {
      throw ShapeError("parameter '" + p.name + "' has no gradient");
    }
    for (double g : p.tensor->grad) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradient("non-finite gradient in parameter '" + p.name +
                                "'");
      }
    }
  }

  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& data = params_[i].tensor->data;
    const auto& grad = params_[i].tensor->grad;
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < data.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * grad[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * grad[j] * grad[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      data[j] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

SplitResult split_dataset(const std::vector<ManifestRow>& rows,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (rows.empty()) throw EmptyInput("cannot split an empty manifest");

  SplitResult result;
  std::map<std::string, std::vector<size_t>> by_label;
  for (size_t i = 0; i < rows.size(); ++i) by_label[rows[i].label].push_back(i);

  bool stratified = true;
  for (const auto& [label, idx] : by_label) {
    if (idx.size() < 2) {
      result.warnings.push_back("class '" + label + "' has " +
                                std::to_string(idx.size()) +
                                " sample(s); falling back to a global split");
      stratified = false;
    }
  }

  Rng rng(cfg.seed);
  auto assign = [&](std::vector<size_t> idx, Rng& r) {
    if (cfg.shuffle) r.shuffle(idx);
    const auto n_train = static_cast<size_t>(
        std::llround(cfg.split_ratio * static_cast<double>(idx.size())));
    for (size_t i = 0; i < idx.size(); ++i) {
      ManifestRow row = rows[idx[i]];
      row.split = i < n_train ? Split::kTrain : Split::kTest;
      (i < n_train ? result.train : result.test).push_back(std::move(row));
    }
  };

  if (stratified) {
    size_t stream = 0;
    for (const auto& [label, idx] : by_label) {
      Rng r = rng.split(stream++);
      assign(idx, r);
    }
  } else {
    std::vector<size_t> all(rows.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    assign(std::move(all), rng);
  }
  return result;
}

namespace {

Tensor gather_batch(const Dataset& set, const std::vector<size_t>& order,
                    size_t begin, size_t end) {
  const size_t channels = set.features.dim(1), len = set.features.dim(2);
  const size_t per_row = channels * len;
  Tensor batch({end - begin, channels, len});
  for (size_t i = begin; i < end; ++i) {
    std::copy_n(set.features.data.begin() +
                    static_cast<long>(order[i] * per_row),
                per_row, batch.data.begin() + static_cast<long>((i - begin) * per_row));
  }
  return batch;
}

struct BatchEval {
  double loss_sum = 0.0;
  size_t correct = 0;
};

// Softmax cross-entropy on a batch of logits; fills dlogits with the mean
// loss gradient when requested.
BatchEval batch_loss(const Tensor& logits, const std::vector<size_t>& labels,
                     Tensor* dlogits) {
  const size_t batch = logits.dim(0), classes = logits.dim(1);
  BatchEval out;
  if (dlogits) *dlogits = Tensor({batch, classes});
  std::vector<double> row(classes);
  for (size_t b = 0; b < batch; ++b) {
    std::copy_n(logits.data.begin() + static_cast<long>(b * classes), classes,
                row.begin());
    out.loss_sum += cross_entropy_from_logits(row, labels[b]);
    const auto argmax = static_cast<size_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
    if (argmax == labels[b]) ++out.correct;
    if (dlogits) {
      const auto p = softmax(row);
      for (size_t j = 0; j < classes; ++j) {
        dlogits->data[b * classes + j] =
            (p[j] - (j == labels[b] ? 1.0 : 0.0)) / static_cast<double>(batch);
      }
    }
  }
  return out;
}

}  // namespace

Tensor predict_logits(AttentionCnn& model, const Dataset& set,
                      size_t batch_size) {
  const size_t n = set.size();
  const size_t classes = model.config().classes;
  Tensor all({n, classes});
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  for (size_t begin = 0; begin < n; begin += batch_size) {
    const size_t end = std::min(n, begin + batch_size);
    const Tensor batch = gather_batch(set, order, begin, end);
    const Tensor logits = model.forward(batch, /*training=*/false);
    std::copy(logits.data.begin(), logits.data.end(),
              all.data.begin() + static_cast<long>(begin * classes));
  }
  return all;
}

TrainResult train(AttentionCnn& model, const Dataset& train_set,
                  const Dataset& val_set, const TrainConfig& cfg,
                  std::ostream* log_jsonl) {
  cfg.validate();
  if (train_set.size() == 0) throw EmptyInput("empty training set");
  for (size_t label : train_set.labels) {
    if (label >= model.config().classes) {
      throw LabelError("label index " + std::to_string(label) +
                       " outside the model's " +
                       std::to_string(model.config().classes) + " classes");
    }
  }

  AdamOptimizer opt(model.params(), cfg.learning_rate);
  TrainResult result;
  auto best_state = snapshot_state(model);
  result.best_val_acc = -1.0;

  const size_t n = train_set.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    if (cfg.shuffle) {
      Rng epoch_rng = Rng(cfg.seed).split(epoch);
      epoch_rng.shuffle(order);
    }

    // Batch boundaries; a trailing single sample is folded into the previous
    // batch because batch statistics need at least two rows.
    std::vector<std::pair<size_t, size_t>> batches;
    for (size_t begin = 0; begin < n; begin += cfg.batch_size) {
      batches.emplace_back(begin, std::min(n, begin + cfg.batch_size));
    }
    if (batches.size() > 1 &&
        batches.back().second - batches.back().first < 2) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }

    double loss_sum = 0.0;
    size_t correct = 0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const auto [begin, end] = batches[bi];
      const Tensor batch = gather_batch(train_set, order, begin, end);
      std::vector<size_t> labels(end - begin);
      for (size_t i = begin; i < end; ++i) {
        labels[i - begin] = train_set.labels[order[i]];
      }

      const Tensor logits = model.forward(batch, /*training=*/true);
      Tensor dlogits;
      const BatchEval ev = batch_loss(logits, labels, &dlogits);
      loss_sum += ev.loss_sum;
      correct += ev.correct;

      model.zero_grad();
      model.backward(dlogits);
      try {
        opt.step();
      } catch (const NonFiniteGradient& e) {
        throw NonFiniteGradient("epoch " + std::to_string(epoch) + " batch " +
                                std::to_string(bi + 1) + ": " + e.what());
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(n);
    stats.train_acc = static_cast<double>(correct) / static_cast<double>(n);

    if (val_set.size() > 0) {
      const Tensor val_logits = predict_logits(model, val_set, cfg.batch_size);
      const BatchEval ev = batch_loss(val_logits, val_set.labels, nullptr);
      stats.val_loss = ev.loss_sum / static_cast<double>(val_set.size());
      stats.val_acc =
          static_cast<double>(ev.correct) / static_cast<double>(val_set.size());
    }

    stats.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t_start)
                        .count();
    result.log.push_back(stats);

    if (log_jsonl) {
      (*log_jsonl) << std::setprecision(17) << "{\"epoch\":" << stats.epoch
                   << ",\"train_loss\":"
                   << stats.train_loss << ",\"train_acc\":" << stats.train_acc
                   << ",\"val_loss\":" << stats.val_loss
                   << ",\"val_acc\":" << stats.val_acc
                   << ",\"seconds\":" << stats.seconds << "}\n";
      log_jsonl->flush();
    }

    if (stats.val_acc > result.best_val_acc) {
      result.best_val_acc = stats.val_acc;
      result.best_epoch = epoch;
      best_state = snapshot_state(model);
    }
  }

  restore_state(model, best_state);
  if (result.best_val_acc < 0.0) result.best_val_acc = 0.0;
  return result;
}

EvalReport eval_from_predictions(const std::vector<size_t>& y_true,
                                 const std::vector<size_t>& y_pred,
                                 size_t classes) {
  if (y_true.size() != y_pred.size()) {
    throw ShapeError("prediction/label count mismatch");
  }
  EvalReport report;
  report.total = y_true.size();
  report.confusion.assign(classes, std::vector<size_t>(classes, 0));
  size_t correct = 0;
  for (size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] >= classes || y_pred[i] >= classes) {
      throw LabelError("class index out of range in evaluation");
    }
    report.confusion[y_true[i]][y_pred[i]]++;
    if (y_true[i] == y_pred[i]) ++correct;
  }
  report.accuracy = report.total == 0
                        ? 0.0
                        : static_cast<double>(correct) /
                              static_cast<double>(report.total);

  report.precision.assign(classes, 0.0);
  report.recall.assign(classes, 0.0);
  for (size_t c = 0; c < classes; ++c) {
    size_t col_sum = 0, row_sum = 0;
    for (size_t r = 0; r < classes; ++r) {
      col_sum += report.confusion[r][c];
      row_sum += report.confusion[c][r];
    }
    report.precision[c] =
        col_sum == 0 ? 0.0
                     : static_cast<double>(report.confusion[c][c]) / col_sum;
    report.recall[c] =
        row_sum == 0 ? 0.0
                     : static_cast<double>(report.confusion[c][c]) / row_sum;
  }
  return report;
}

EvalReport evaluate(AttentionCnn& model, const Dataset& test_set) {
  const size_t classes = model.config().classes;
  for (size_t label : test_set.labels) {
    if (label >= classes) {
      throw LabelError("label index " + std::to_string(label) +
                       " outside the model's " + std::to_string(classes) +
                       " classes");
    }
  }
  const Tensor logits = predict_logits(model, test_set);
  std::vector<size_t> y_pred(test_set.size());
  for (size_t i = 0; i < test_set.size(); ++i) {
    const auto begin = logits.data.begin() + static_cast<long>(i * classes);
    y_pred[i] =
        static_cast<size_t>(std::max_element(begin, begin + classes) - begin);
  }
  return eval_from_predictions(test_set.labels, y_pred, classes);
}

}  // namespace ser
