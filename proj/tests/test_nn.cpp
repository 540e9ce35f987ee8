#include "ser/nn.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

#include "doctest.h"
#include "ser/errors.hpp"
#include "ser/learn.hpp"
#include "ser/rng.hpp"

using namespace ser;

namespace {

Tensor random_tensor(std::vector<size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

// Central finite differences against an analytic gradient. `loss` must
// evaluate the full forward pass from scratch; `compute_grads` runs one
// forward+backward and leaves gradients in the tensors.
struct GradCheck {
  double max_rel_err = 0.0;
  std::string worst;
};

double rel_err(double analytic, double numeric) {
  const double denom = std::max(std::abs(analytic), std::abs(numeric));
  if (denom < 1e-8) return 0.0;  // both effectively zero
  return std::abs(analytic - numeric) / denom;
}

GradCheck check_gradients(const std::vector<ParamRef>& params,
                          const std::function<double()>& loss,
                          const std::function<void()>& compute_grads,
                          double h = 1e-5) {
  compute_grads();
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.push_back(p.tensor->grad);

  GradCheck result;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor* t = params[pi].tensor;
    for (size_t j = 0; j < t->data.size(); ++j) {
      const double saved = t->data[j];
      t->data[j] = saved + h;
      const double up = loss();
      t->data[j] = saved - h;
      const double down = loss();
      t->data[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double e = rel_err(analytic[pi][j], numeric);
      if (e > result.max_rel_err) {
        result.max_rel_err = e;
        result.worst = params[pi].name + "[" + std::to_string(j) + "]";
      }
    }
  }
  return result;
}

// Fixed random linear functional of the output; smooth and generic.
double probe_loss(const Tensor& y, const std::vector<double>& coeffs) {
  double acc = 0.0;
  for (size_t i = 0; i < y.data.size(); ++i) acc += coeffs[i] * y.data[i];
  return acc;
}

std::vector<double> probe_coeffs(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> c(n);
  for (auto& v : c) v = rng.uniform(-1.0, 1.0);
  return c;
}

Tensor probe_grad(const std::vector<double>& coeffs,
                  const std::vector<size_t>& shape) {
  Tensor g(shape);
  g.data = coeffs;
  return g;
}

}  // namespace

TEST_CASE("conv1d identity kernel reproduces the input") {
  Conv1d conv(1, 1, 7);
  conv.weight.data.assign(7, 0.0);
  conv.weight.data[3] = 1.0;  // center tap
  conv.bias.data[0] = 0.0;

  Rng rng(2);
  const Tensor x = random_tensor({2, 1, 12}, rng);
  const Tensor y = conv.forward(x);
  REQUIRE(y.shape == x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) {
    CHECK(y.data[i] == doctest::Approx(x.data[i]).epsilon(1e-15));
  }
}

TEST_CASE("conv1d all-ones kernel on a constant input") {
  Conv1d conv(1, 1, 7);
  conv.weight.data.assign(7, 1.0);
  conv.bias.data[0] = 0.0;

  Tensor x({1, 1, 16});
  x.data.assign(16, 0.5);
  const Tensor y = conv.forward(x);
  // Interior positions see all 7 taps; the first/last see 4, 5, 6.
  CHECK(y.data[0] == doctest::Approx(4 * 0.5));
  CHECK(y.data[1] == doctest::Approx(5 * 0.5));
  CHECK(y.data[2] == doctest::Approx(6 * 0.5));
  for (size_t l = 3; l < 13; ++l) CHECK(y.data[l] == doctest::Approx(7 * 0.5));
  CHECK(y.data[15] == doctest::Approx(4 * 0.5));
}

TEST_CASE("conv1d matches brute-force cross-correlation") {
  Rng rng(3);
  Conv1d conv(3, 4, 5);
  conv.init(rng);
  for (auto& b : conv.bias.data) b = rng.uniform(-0.5, 0.5);
  const Tensor x = random_tensor({2, 3, 9}, rng);
  const Tensor y = conv.forward(x);

  const long pad = 2;
  for (size_t b = 0; b < 2; ++b) {
    for (size_t oc = 0; oc < 4; ++oc) {
      for (size_t l = 0; l < 9; ++l) {
        double acc = conv.bias.data[oc];
        for (size_t ic = 0; ic < 3; ++ic) {
          for (size_t j = 0; j < 5; ++j) {
            const long t = static_cast<long>(l) + static_cast<long>(j) - pad;
            if (t < 0 || t >= 9) continue;
            acc += conv.weight.data[(oc * 3 + ic) * 5 + j] *
                   x.at3(b, ic, static_cast<size_t>(t));
          }
        }
        CHECK(y.at3(b, oc, l) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("conv1d rejects channel mismatches") {
  Conv1d conv(3, 4, 5);
  Tensor x({1, 2, 8});
  CHECK_THROWS_AS(conv.forward(x), ShapeError);
}

TEST_CASE("conv1d gradients match finite differences") {
  Rng rng(5);
  Conv1d conv(3, 2, 5);
  conv.init(rng);
  const Tensor x = random_tensor({2, 3, 8}, rng);
  const auto coeffs = probe_coeffs(2 * 2 * 8, 11);

  Tensor x_var = x;
  std::vector<ParamRef> params = {{"weight", &conv.weight},
                                  {"bias", &conv.bias},
                                  {"input", &x_var}};
  auto loss = [&] { return probe_loss(conv.forward(x_var), coeffs); };
  auto grads = [&] {
    conv.weight.ensure_grad();
    conv.weight.zero_grad();
    conv.bias.ensure_grad();
    conv.bias.zero_grad();
    conv.forward(x_var);
    Tensor dx = conv.backward(probe_grad(coeffs, {2, 2, 8}));
    x_var.grad = dx.data;
  };
  const auto res = check_gradients(params, loss, grads);
  INFO("worst: " << res.worst);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("maxpool of a constant is the constant") {
  MaxPool1d pool(7);
  Tensor x({1, 2, 10});
  x.data.assign(20, 0.3);
  const Tensor y = pool.forward(x);
  for (double v : y.data) CHECK(v == doctest::Approx(0.3));
}

TEST_CASE("maxpool spreads a spike over the window reach") {
  MaxPool1d pool(7);
  Tensor x({1, 1, 15});
  x.data.assign(15, 0.0);
  x.data[7] = 1.0;
  const Tensor y = pool.forward(x);
  for (size_t l = 0; l < 15; ++l) {
    const bool in_reach = l + 3 >= 7 && l <= 10;
    CHECK(y.data[l] == doctest::Approx(in_reach ? 1.0 : 0.0));
  }
}

TEST_CASE("maxpool of an increasing ramp looks three steps ahead") {
  MaxPool1d pool(7);
  Tensor x({1, 1, 12});
  for (size_t l = 0; l < 12; ++l) x.data[l] = static_cast<double>(l);
  const Tensor y = pool.forward(x);
  for (size_t l = 0; l < 12; ++l) {
    CHECK(y.data[l] == doctest::Approx(static_cast<double>(std::min<size_t>(l + 3, 11))));
  }
}

TEST_CASE("maxpool matches a brute-force window scan") {
  Rng rng(7);
  MaxPool1d pool(7);
  const Tensor x = random_tensor({2, 3, 11}, rng);
  const Tensor y = pool.forward(x);
  for (size_t b = 0; b < 2; ++b) {
    for (size_t c = 0; c < 3; ++c) {
      for (size_t l = 0; l < 11; ++l) {
        double best = -1e300;
        for (long t = static_cast<long>(l) - 3; t <= static_cast<long>(l) + 3; ++t) {
          if (t < 0 || t >= 11) continue;
          best = std::max(best, x.at3(b, c, static_cast<size_t>(t)));
        }
        CHECK(y.at3(b, c, l) == doctest::Approx(best));
      }
    }
  }
}

TEST_CASE("maxpool input gradient matches finite differences") {
  Rng rng(9);
  MaxPool1d pool(3);
  Tensor x = random_tensor({1, 2, 9}, rng);
  const auto coeffs = probe_coeffs(1 * 2 * 9, 13);

  std::vector<ParamRef> params = {{"input", &x}};
  auto loss = [&] { return probe_loss(pool.forward(x), coeffs); };
  auto grads = [&] {
    pool.forward(x);
    Tensor dx = pool.backward(probe_grad(coeffs, {1, 2, 9}));
    x.grad = dx.data;
  };
  const auto res = check_gradients(params, loss, grads);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("batchnorm normalizes per channel in training mode") {
  Rng rng(11);
  BatchNorm1d bn(3);
  const Tensor x = random_tensor({4, 3, 6}, rng, 2.0);
  const Tensor y = bn.forward(x, /*training=*/true);

  for (size_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (size_t b = 0; b < 4; ++b) {
      for (size_t l = 0; l < 6; ++l) mean += y.at3(b, c, l);
    }
    mean /= 24.0;
    for (size_t b = 0; b < 4; ++b) {
      for (size_t l = 0; l < 6; ++l) {
        var += (y.at3(b, c, l) - mean) * (y.at3(b, c, l) - mean);
      }
    }
    var /= 24.0;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(std::abs(mean) < 1e-10);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps deflates slightly
  }
}

TEST_CASE("batchnorm maps a constant channel to beta") {
  BatchNorm1d bn(2);
  bn.beta.data = {0.7, -0.2};
  Tensor x({3, 2, 4});
  for (size_t b = 0; b < 3; ++b) {
    for (size_t l = 0; l < 4; ++l) {
      x.at3(b, 0, l) = 5.0;
      x.at3(b, 1, l) = -3.0;
    }
  }
  const Tensor y = bn.forward(x, true);
  for (size_t b = 0; b < 3; ++b) {
    for (size_t l = 0; l < 4; ++l) {
      CHECK(y.at3(b, 0, l) == doctest::Approx(0.7));
      CHECK(y.at3(b, 1, l) == doctest::Approx(-0.2));
    }
  }
}

TEST_CASE("batchnorm inference is frozen and repeatable") {
  Rng rng(13);
  BatchNorm1d bn(2);
  const Tensor warm = random_tensor({4, 2, 5}, rng);
  bn.forward(warm, true);
  const auto mean_after = bn.running_mean.data;

  const Tensor x = random_tensor({3, 2, 5}, rng);
  const Tensor a = bn.forward(x, false);
  const Tensor b = bn.forward(x, false);
  CHECK(a.data == b.data);
  CHECK(bn.running_mean.data == mean_after);
}

TEST_CASE("batchnorm rejects degenerate batches") {
  BatchNorm1d bn(2);
  Tensor single({1, 2, 4});
  CHECK_THROWS_AS(bn.forward(single, true), ShapeError);
  Tensor empty({0, 2, 4});
  CHECK_THROWS_AS(bn.forward(empty, true), ShapeError);
  CHECK_THROWS_AS(bn.forward(empty, false), ShapeError);
}

TEST_CASE("batchnorm gradients match finite differences") {
  Rng rng(15);
  BatchNorm1d bn(2);
  bn.gamma.data = {1.3, 0.8};
  bn.beta.data = {0.1, -0.4};
  Tensor x = random_tensor({3, 2, 4}, rng);
  const auto coeffs = probe_coeffs(3 * 2 * 4, 17);

  std::vector<ParamRef> params = {{"gamma", &bn.gamma},
                                  {"beta", &bn.beta},
                                  {"input", &x}};
  auto loss = [&] { return probe_loss(bn.forward(x, true), coeffs); };
  auto grads = [&] {
    bn.gamma.ensure_grad();
    bn.gamma.zero_grad();
    bn.beta.ensure_grad();
    bn.beta.zero_grad();
    bn.forward(x, true);
    Tensor dx = bn.backward(probe_grad(coeffs, {3, 2, 4}));
    x.grad = dx.data;
  };
  const auto res = check_gradients(params, loss, grads);
  INFO("worst: " << res.worst);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("channel attention with zero weights halves the input") {
  ChannelAttention ca(4, 2);
  // Weights default to zero.
  Rng rng(19);
  const Tensor x = random_tensor({2, 4, 6}, rng);
  const Tensor y = ca.forward(x);
  for (size_t i = 0; i < x.data.size(); ++i) {
    CHECK(y.data[i] == doctest::Approx(0.5 * x.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("channel attention gates stay strictly inside (0, 1)") {
  Rng rng(21);
  ChannelAttention ca(4, 2);
  ca.init(rng);
  const Tensor x = random_tensor({3, 4, 5}, rng, 3.0);
  const Tensor y = ca.forward(x);
  for (size_t i = 0; i < x.data.size(); ++i) {
    if (x.data[i] == 0.0) continue;
    const double gate = y.data[i] / x.data[i];
    CHECK(gate > 0.0);
    CHECK(gate < 1.0);
  }
}

TEST_CASE("channel attention matches hand-rolled arithmetic") {
  Rng rng(23);
  ChannelAttention ca(4, 2);
  ca.init(rng);
  const Tensor x = random_tensor({1, 4, 3}, rng);
  const Tensor y = ca.forward(x);

  // Recompute with plain loops.
  std::vector<double> avg(4, 0.0), mx(4, -1e300);
  for (size_t c = 0; c < 4; ++c) {
    for (size_t l = 0; l < 3; ++l) {
      avg[c] += x.at3(0, c, l) / 3.0;
      mx[c] = std::max(mx[c], x.at3(0, c, l));
    }
  }
  auto mlp = [&](const std::vector<double>& in) {
    std::vector<double> hidden(2, 0.0);
    for (size_t h = 0; h < 2; ++h) {
      for (size_t c = 0; c < 4; ++c) hidden[h] += ca.w0.data[h * 4 + c] * in[c];
      hidden[h] = std::max(0.0, hidden[h]);
    }
    std::vector<double> out(4, 0.0);
    for (size_t c = 0; c < 4; ++c) {
      for (size_t h = 0; h < 2; ++h) out[c] += ca.w1.data[c * 2 + h] * hidden[h];
    }
    return out;
  };
  const auto ua = mlp(avg);
  const auto um = mlp(mx);
  for (size_t c = 0; c < 4; ++c) {
    const double gate = 1.0 / (1.0 + std::exp(-(ua[c] + um[c])));
    for (size_t l = 0; l < 3; ++l) {
      CHECK(y.at3(0, c, l) ==
            doctest::Approx(x.at3(0, c, l) * gate).epsilon(1e-12));
    }
  }
}

TEST_CASE("channel attention rejects indivisible reductions") {
  CHECK_THROWS_AS(ChannelAttention(6, 4), ConfigError);
}

TEST_CASE("channel attention gradients match finite differences") {
  Rng rng(25);
  ChannelAttention ca(4, 2);
  ca.init(rng);
  Tensor x = random_tensor({2, 4, 5}, rng);
  const auto coeffs = probe_coeffs(2 * 4 * 5, 27);

  std::vector<ParamRef> params = {{"w0", &ca.w0}, {"w1", &ca.w1}, {"input", &x}};
  auto loss = [&] { return probe_loss(ca.forward(x), coeffs); };
  auto grads = [&] {
    ca.w0.ensure_grad();
    ca.w0.zero_grad();
    ca.w1.ensure_grad();
    ca.w1.zero_grad();
    ca.forward(x);
    Tensor dx = ca.backward(probe_grad(coeffs, {2, 4, 5}));
    x.grad = dx.data;
  };
  const auto res = check_gradients(params, loss, grads);
  INFO("worst: " << res.worst);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("spatial attention with zero parameters halves the input") {
  SpatialAttention sa(7);
  Rng rng(29);
  const Tensor x = random_tensor({2, 3, 8}, rng);
  const Tensor y = sa.forward(x);
  for (size_t i = 0; i < x.data.size(); ++i) {
    CHECK(y.data[i] == doctest::Approx(0.5 * x.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("spatial attention matches a direct evaluation") {
  Rng rng(31);
  SpatialAttention sa(7);
  sa.init(rng);
  sa.bias.data[0] = 0.15;
  const Tensor x = random_tensor({1, 3, 9}, rng);
  const Tensor y = sa.forward(x);

  for (size_t l = 0; l < 9; ++l) {
    double z = sa.bias.data[0];
    for (size_t j = 0; j < 7; ++j) {
      const long t = static_cast<long>(l) + static_cast<long>(j) - 3;
      if (t < 0 || t >= 9) continue;
      double mean = 0.0, mx = -1e300;
      for (size_t c = 0; c < 3; ++c) {
        mean += x.at3(0, c, static_cast<size_t>(t)) / 3.0;
        mx = std::max(mx, x.at3(0, c, static_cast<size_t>(t)));
      }
      z += sa.weight.data[j] * mean + sa.weight.data[7 + j] * mx;
    }
    const double gate = 1.0 / (1.0 + std::exp(-z));
    for (size_t c = 0; c < 3; ++c) {
      CHECK(y.at3(0, c, l) ==
            doctest::Approx(x.at3(0, c, l) * gate).epsilon(1e-12));
    }
  }
}

TEST_CASE("spatial attention gradients match finite differences") {
  Rng rng(33);
  SpatialAttention sa(5);
  sa.init(rng);
  Tensor x = random_tensor({2, 3, 7}, rng);
  const auto coeffs = probe_coeffs(2 * 3 * 7, 35);

  std::vector<ParamRef> params = {{"weight", &sa.weight},
                                  {"bias", &sa.bias},
                                  {"input", &x}};
  auto loss = [&] { return probe_loss(sa.forward(x), coeffs); };
  auto grads = [&] {
    sa.weight.ensure_grad();
    sa.weight.zero_grad();
    sa.bias.ensure_grad();
    sa.bias.zero_grad();
    sa.forward(x);
    Tensor dx = sa.backward(probe_grad(coeffs, {2, 3, 7}));
    x.grad = dx.data;
  };
  const auto res = check_gradients(params, loss, grads);
  INFO("worst: " << res.worst);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("dense gradients match finite differences") {
  Rng rng(37);
  Dense dense(6, 4);
  dense.init(rng);
  Tensor x = random_tensor({3, 6}, rng);
  const auto coeffs = probe_coeffs(3 * 4, 39);

  std::vector<ParamRef> params = {{"weight", &dense.weight},
                                  {"bias", &dense.bias},
                                  {"input", &x}};
  auto loss = [&] { return probe_loss(dense.forward(x), coeffs); };
  auto grads = [&] {
    dense.weight.ensure_grad();
    dense.weight.zero_grad();
    dense.bias.ensure_grad();
    dense.bias.zero_grad();
    dense.forward(x);
    Tensor dx = dense.backward(probe_grad(coeffs, {3, 4}));
    x.grad = dx.data;
  };
  const auto res = check_gradients(params, loss, grads);
  CHECK(res.max_rel_err < 1e-6);
}

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.in_channels = 1;
  cfg.input_len = 8;
  cfg.classes = 3;
  cfg.conv_channels = 4;
  cfg.kernel = 3;
  cfg.conv_blocks = 2;
  cfg.pool_window = 3;
  cfg.reduction = 2;
  cfg.dense_units = 64;
  cfg.init_seed = 404;
  return cfg;
}

}  // namespace

TEST_CASE("model forward of zeros with zero parameters gives equal logits") {
  ModelConfig cfg = tiny_config();
  AttentionCnn model(cfg);
  for (auto& p : model.params()) {
    std::fill(p.tensor->data.begin(), p.tensor->data.end(), 0.0);
  }
  Tensor x({4, 1, 8});
  const Tensor logits = model.forward(x, true);
  REQUIRE(logits.shape == std::vector<size_t>{4, 3});
  for (double v : logits.data) CHECK(v == doctest::Approx(logits.data[0]));
}

TEST_CASE("model output shape is (batch, classes) for 8 classes") {
  ModelConfig cfg = tiny_config();
  cfg.classes = 8;
  AttentionCnn model(cfg);
  Rng rng(41);
  const Tensor x = random_tensor({5, 1, 8}, rng);
  const Tensor logits = model.forward(x, false);
  CHECK(logits.shape == std::vector<size_t>{5, 8});
}

TEST_CASE("permuting the batch permutes the logits in inference mode") {
  AttentionCnn model(tiny_config());
  Rng rng(43);
  const Tensor x = random_tensor({3, 1, 8}, rng);
  const Tensor y = model.forward(x, false);

  Tensor permuted({3, 1, 8});
  const size_t perm[3] = {2, 0, 1};
  for (size_t b = 0; b < 3; ++b) {
    for (size_t l = 0; l < 8; ++l) {
      permuted.at3(b, 0, l) = x.at3(perm[b], 0, l);
    }
  }
  const Tensor yp = model.forward(permuted, false);
  for (size_t b = 0; b < 3; ++b) {
    for (size_t j = 0; j < 3; ++j) {
      CHECK(yp.at2(b, j) == doctest::Approx(y.at2(perm[b], j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("inference-mode forward is bitwise repeatable") {
  AttentionCnn model(tiny_config());
  Rng rng(45);
  const Tensor x = random_tensor({2, 1, 8}, rng);
  const Tensor a = model.forward(x, false);
  const Tensor b = model.forward(x, false);
  CHECK(a.data == b.data);
}

TEST_CASE("attention blocks become identities when gates saturate at 1") {
  ChannelAttention ca(4, 2);
  std::fill(ca.w0.data.begin(), ca.w0.data.end(), 50.0);
  std::fill(ca.w1.data.begin(), ca.w1.data.end(), 50.0);
  SpatialAttention sa(7);
  sa.bias.data[0] = 1e4;

  Rng rng(47);
  Tensor x = random_tensor({2, 4, 6}, rng);
  for (auto& v : x.data) v = std::abs(v) + 0.1;  // positive input

  const Tensor yc = ca.forward(x);
  for (size_t i = 0; i < x.data.size(); ++i) {
    CHECK(yc.data[i] == doctest::Approx(x.data[i]).epsilon(1e-9));
  }
  const Tensor ys = sa.forward(x);
  for (size_t i = 0; i < x.data.size(); ++i) {
    CHECK(ys.data[i] == doctest::Approx(x.data[i]).epsilon(1e-9));
  }
}

TEST_CASE("model backward before forward is a state error") {
  AttentionCnn model(tiny_config());
  Tensor dlogits({2, 3});
  CHECK_THROWS_AS(model.backward(dlogits), StateError);
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
  AttentionCnn model(tiny_config());
  Rng rng(49);
  const Tensor x = random_tensor({3, 1, 8}, rng);
  model.forward(x, true);
  model.zero_grad();
  model.backward(Tensor({3, 3}));
  for (auto& p : model.params()) {
    for (double g : p.tensor->grad) CHECK(g == 0.0);
  }
}

TEST_CASE("doubling the upstream gradient doubles parameter gradients") {
  AttentionCnn model(tiny_config());
  Rng rng(51);
  const Tensor x = random_tensor({3, 1, 8}, rng);
  Tensor dlogits = random_tensor({3, 3}, rng);

  model.forward(x, true);
  model.zero_grad();
  model.backward(dlogits);
  std::vector<std::vector<double>> g1;
  for (auto& p : model.params()) g1.push_back(p.tensor->grad);

  for (auto& v : dlogits.data) v *= 2.0;
  model.forward(x, true);
  model.zero_grad();
  model.backward(dlogits);
  size_t i = 0;
  for (auto& p : model.params()) {
    for (size_t j = 0; j < p.tensor->grad.size(); ++j) {
      CHECK(p.tensor->grad[j] == doctest::Approx(2.0 * g1[i][j]).epsilon(1e-9));
    }
    ++i;
  }
}

TEST_CASE("composed model gradients match finite differences") {
  AttentionCnn model(tiny_config());
  Rng rng(53);
  const Tensor x = random_tensor({3, 1, 8}, rng);
  const std::vector<size_t> labels = {0, 2, 1};

  auto loss = [&] {
    const Tensor logits = model.forward(x, true);
    double acc = 0.0;
    std::vector<double> row(3);
    for (size_t b = 0; b < 3; ++b) {
      for (size_t j = 0; j < 3; ++j) row[j] = logits.at2(b, j);
      acc += cross_entropy_from_logits(row, labels[b]);
    }
    return acc / 3.0;
  };
  auto grads = [&] {
    const Tensor logits = model.forward(x, true);
    Tensor dlogits({3, 3});
    std::vector<double> row(3);
    for (size_t b = 0; b < 3; ++b) {
      for (size_t j = 0; j < 3; ++j) row[j] = logits.at2(b, j);
      const auto p = softmax(row);
      for (size_t j = 0; j < 3; ++j) {
        dlogits.at2(b, j) = (p[j] - (j == labels[b] ? 1.0 : 0.0)) / 3.0;
      }
    }
    model.zero_grad();
    model.backward(dlogits);
  };

  const auto res = check_gradients(model.params(), loss, grads);
  INFO("worst: " << res.worst);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("checkpoint round trip preserves behaviour") {
  AttentionCnn model(tiny_config());
  Rng rng(55);
  const Tensor x = random_tensor({2, 1, 8}, rng);
  const Tensor before = model.forward(x, false);

  const std::string path = "/tmp/ser_ckpt_test.serm";
  save_checkpoint(path, model);
  ModelConfig base;
  base.pool_window = 3;  // not recoverable from tensor shapes
  AttentionCnn loaded = load_checkpoint(path, base);
  CHECK(loaded.config().classes == 3);
  CHECK(loaded.config().conv_blocks == 2);
  CHECK(loaded.config().conv_channels == 4);
  const Tensor after = loaded.forward(x, false);
  CHECK(after.data == before.data);
  std::remove(path.c_str());
}

TEST_CASE("load_checkpoint rejects garbage") {
  const std::string path = "/tmp/ser_ckpt_garbage.serm";
  {
    std::ofstream out(path, std::ios::binary);
    out << "definitely not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::remove(path.c_str());
}
