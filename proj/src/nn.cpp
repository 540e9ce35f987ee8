#include "ser/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "ser/errors.hpp"
#include "ser/parallel.hpp"

namespace ser {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void check_bcl(const Tensor& x, size_t channels, const char* who) {
  if (x.rank() != 3) {
    throw ShapeError(std::string(who) + ": expected rank-3 [batch, C, L] input");
  }
  if (x.dim(1) != channels) {
    throw ShapeError(std::string(who) + ": input has " +
                     std::to_string(x.dim(1)) + " channels, layer expects " +
                     std::to_string(channels));
  }
  if (x.dim(0) == 0) throw ShapeError(std::string(who) + ": zero batch");
}

void init_uniform(Tensor& t, double fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv1d

Conv1d::Conv1d(size_t in_channels, size_t out_channels, size_t kernel)
    : weight({out_channels, in_channels, kernel}), bias({out_channels}) {
  if (kernel % 2 == 0) {
    throw ConfigError("conv kernel must be odd for 'same' padding");
  }
}

void Conv1d::init(Rng& rng) {
  init_uniform(weight, static_cast<double>(weight.dim(1) * weight.dim(2)), rng);
  std::fill(bias.data.begin(), bias.data.end(), 0.0);
}

namespace {

// Unrolled patch matrix for one sample: row q = ic * k + j holds the input
// row ic shifted by j - pad, zero at the borders. Weight rows [oc][ic][j]
// then multiply it as a plain row-major matrix.
void build_patch_matrix(const double* x, size_t c_in, size_t len, size_t k,
                        std::vector<double>& col) {
  const long pad = static_cast<long>(k - 1) / 2;
  for (size_t ic = 0; ic < c_in; ++ic) {
    const double* in_row = x + ic * len;
    for (size_t j = 0; j < k; ++j) {
      double* row = &col[(ic * k + j) * len];
      const long shift = static_cast<long>(j) - pad;
      const size_t l0 = shift < 0 ? static_cast<size_t>(-shift) : 0;
      const size_t l1 = shift > 0 ? len - static_cast<size_t>(shift) : len;
      const auto off = static_cast<size_t>(shift);  // wraps when negative
      std::fill(row, row + len, 0.0);
      for (size_t l = l0; l < l1; ++l) row[l] = in_row[l + off];
    }
  }
}

}  // namespace

Tensor Conv1d::forward(const Tensor& x) {
  check_bcl(x, weight.dim(1), "conv1d");
  const size_t batch = x.dim(0), c_in = weight.dim(1), c_out = weight.dim(0);
  const size_t len = x.dim(2), k = weight.dim(2);
  const size_t q_count = c_in * k;

  x_ = x;
  has_input_ = true;

  Tensor y({batch, c_out, len});
  std::vector<double> col(q_count * len);
  const size_t n_blocks = (c_out + 3) / 4;
  for (size_t b = 0; b < batch; ++b) {
    build_patch_matrix(&x.data[b * c_in * len], c_in, len, k, col);
    // Four output channels per pass share each patch-row load.
    parallel_for(n_blocks, [&](size_t blk0, size_t blk1) {
      for (size_t blk = blk0; blk < blk1; ++blk) {
        const size_t oc = blk * 4;
        const size_t m = std::min<size_t>(4, c_out - oc);
        double* out[4];
        const double* w_row[4];
        for (size_t i = 0; i < m; ++i) {
          out[i] = &y.data[(b * c_out + oc + i) * len];
          std::fill(out[i], out[i] + len, bias.data[oc + i]);
          w_row[i] = &weight.data[(oc + i) * q_count];
        }
        if (m == 4) {
          for (size_t q = 0; q < q_count; ++q) {
            const double* cr = &col[q * len];
            const double w0 = w_row[0][q], w1 = w_row[1][q];
            const double w2 = w_row[2][q], w3 = w_row[3][q];
            for (size_t l = 0; l < len; ++l) {
              const double v = cr[l];
              out[0][l] += w0 * v;
              out[1][l] += w1 * v;
              out[2][l] += w2 * v;
              out[3][l] += w3 * v;
            }
          }
        } else {
          for (size_t i = 0; i < m; ++i) {
            for (size_t q = 0; q < q_count; ++q) {
              const double w = w_row[i][q];
              const double* cr = &col[q * len];
              for (size_t l = 0; l < len; ++l) out[i][l] += w * cr[l];
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor Conv1d::backward(const Tensor& dy) {
  if (!has_input_) throw StateError("conv1d: backward before forward");
  const size_t batch = x_.dim(0), c_in = weight.dim(1), c_out = weight.dim(0);
  const size_t len = x_.dim(2), k = weight.dim(2);
  const long pad = static_cast<long>(k - 1) / 2;
  const size_t q_count = c_in * k;
  if (dy.shape != std::vector<size_t>{batch, c_out, len}) {
    throw ShapeError("conv1d: gradient shape mismatch");
  }

  weight.ensure_grad();
  bias.ensure_grad();

  // Weight transpose [q][oc] gives unit-stride reads in the input-gradient
  // pass below.
  std::vector<double> w_t(q_count * c_out);
  for (size_t oc = 0; oc < c_out; ++oc) {
    for (size_t q = 0; q < q_count; ++q) {
      w_t[q * c_out + oc] = weight.data[oc * q_count + q];
    }
  }

  Tensor dx({batch, c_in, len});
  std::vector<double> col(q_count * len);
  std::vector<double> patch_grad(q_count * len);
  for (size_t b = 0; b < batch; ++b) {
    build_patch_matrix(&x_.data[b * c_in * len], c_in, len, k, col);
    const double* dy_base = &dy.data[b * c_out * len];

    // Weight and bias gradients: four output channels share each patch-row
    // load.
    const size_t n_blocks = (c_out + 3) / 4;
    parallel_for(n_blocks, [&](size_t blk0, size_t blk1) {
      for (size_t blk = blk0; blk < blk1; ++blk) {
        const size_t oc = blk * 4;
        const size_t m = std::min<size_t>(4, c_out - oc);
        const double* dyr[4];
        double* gw[4];
        for (size_t i = 0; i < m; ++i) {
          dyr[i] = dy_base + (oc + i) * len;
          double db = 0.0;
          for (size_t l = 0; l < len; ++l) db += dyr[i][l];
          bias.grad[oc + i] += db;
          gw[i] = &weight.grad[(oc + i) * q_count];
        }
        if (m == 4) {
          for (size_t q = 0; q < q_count; ++q) {
            const double* cr = &col[q * len];
            double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
            for (size_t l = 0; l < len; ++l) {
              const double v = cr[l];
              a0 += dyr[0][l] * v;
              a1 += dyr[1][l] * v;
              a2 += dyr[2][l] * v;
              a3 += dyr[3][l] * v;
            }
            gw[0][q] += a0;
            gw[1][q] += a1;
            gw[2][q] += a2;
            gw[3][q] += a3;
          }
        } else {
          for (size_t i = 0; i < m; ++i) {
            for (size_t q = 0; q < q_count; ++q) {
              const double* cr = &col[q * len];
              double acc = 0.0;
              for (size_t l = 0; l < len; ++l) acc += dyr[i][l] * cr[l];
              gw[i][q] += acc;
            }
          }
        }
      }
    });

    // Patch gradient, then fold the shifted rows back into dx. Four patch
    // rows per pass share each upstream-gradient row load.
    const size_t q_blocks = (q_count + 3) / 4;
    parallel_for(q_blocks, [&](size_t blk0, size_t blk1) {
      for (size_t blk = blk0; blk < blk1; ++blk) {
        const size_t q = blk * 4;
        const size_t m = std::min<size_t>(4, q_count - q);
        double* gr[4];
        const double* wt_row[4];
        for (size_t i = 0; i < m; ++i) {
          gr[i] = &patch_grad[(q + i) * len];
          std::fill(gr[i], gr[i] + len, 0.0);
          wt_row[i] = &w_t[(q + i) * c_out];
        }
        if (m == 4) {
          for (size_t oc = 0; oc < c_out; ++oc) {
            const double* dyr = dy_base + oc * len;
            const double w0 = wt_row[0][oc], w1 = wt_row[1][oc];
            const double w2 = wt_row[2][oc], w3 = wt_row[3][oc];
            for (size_t l = 0; l < len; ++l) {
              const double v = dyr[l];
              gr[0][l] += w0 * v;
              gr[1][l] += w1 * v;
              gr[2][l] += w2 * v;
              gr[3][l] += w3 * v;
            }
          }
        } else {
          for (size_t i = 0; i < m; ++i) {
            for (size_t oc = 0; oc < c_out; ++oc) {
              const double w = wt_row[i][oc];
              const double* dyr = dy_base + oc * len;
              for (size_t l = 0; l < len; ++l) gr[i][l] += w * dyr[l];
            }
          }
        }
      }
    });

    double* dx_base = &dx.data[b * c_in * len];
    for (size_t ic = 0; ic < c_in; ++ic) {
      double* dxr = dx_base + ic * len;
      for (size_t j = 0; j < k; ++j) {
        const double* gr = &patch_grad[(ic * k + j) * len];
        const long shift = static_cast<long>(j) - pad;
        const size_t l0 = shift < 0 ? static_cast<size_t>(-shift) : 0;
        const size_t l1 = shift > 0 ? len - static_cast<size_t>(shift) : len;
        const auto off = static_cast<size_t>(shift);
        for (size_t l = l0; l < l1; ++l) dxr[l + off] += gr[l];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm1d

BatchNorm1d::BatchNorm1d(size_t channels, double eps_, double momentum_)
    : gamma({channels}, 1.0),
      beta({channels}, 0.0),
      running_mean({channels}, 0.0),
      running_var({channels}, 1.0),
      eps(eps_),
      momentum(momentum_) {}

Tensor BatchNorm1d::forward(const Tensor& x, bool training) {
  check_bcl(x, gamma.dim(0), "batchnorm");
  const size_t batch = x.dim(0), channels = x.dim(1), len = x.dim(2);
  if (training && batch < 2) {
    throw ShapeError("batchnorm: training requires batch >= 2");
  }

  Tensor y({batch, channels, len});
  has_input_ = true;
  trained_forward_ = training;

  if (!training) {
    parallel_for(channels, [&](size_t c0, size_t c1) {
      for (size_t c = c0; c < c1; ++c) {
        const double inv_std = 1.0 / std::sqrt(running_var.data[c] + eps);
        const double mean = running_mean.data[c];
        const double g = gamma.data[c], b0 = beta.data[c];
        for (size_t b = 0; b < batch; ++b) {
          const double* xr = &x.data[(b * channels + c) * len];
          double* yr = &y.data[(b * channels + c) * len];
          for (size_t l = 0; l < len; ++l) {
            yr[l] = g * (xr[l] - mean) * inv_std + b0;
          }
        }
      }
    });
    return y;
  }

  const double m = static_cast<double>(batch * len);
  x_hat_ = Tensor({batch, channels, len});
  batch_mean_.assign(channels, 0.0);
  batch_inv_std_.assign(channels, 0.0);

  parallel_for(channels, [&](size_t c0, size_t c1) {
    for (size_t c = c0; c < c1; ++c) {
      double sum = 0.0, sq = 0.0;
      for (size_t b = 0; b < batch; ++b) {
        const double* xr = &x.data[(b * channels + c) * len];
        for (size_t l = 0; l < len; ++l) {
          sum += xr[l];
          sq += xr[l] * xr[l];
        }
      }
      const double mean = sum / m;
      const double var = std::max(0.0, sq / m - mean * mean);
      const double inv_std = 1.0 / std::sqrt(var + eps);
      batch_mean_[c] = mean;
      batch_inv_std_[c] = inv_std;

      const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
      running_mean.data[c] = (1.0 - momentum) * running_mean.data[c] + momentum * mean;
      running_var.data[c] = (1.0 - momentum) * running_var.data[c] + momentum * unbiased;

      const double g = gamma.data[c], b0 = beta.data[c];
      for (size_t b = 0; b < batch; ++b) {
        const double* xr = &x.data[(b * channels + c) * len];
        double* hr = &x_hat_.data[(b * channels + c) * len];
        double* yr = &y.data[(b * channels + c) * len];
        for (size_t l = 0; l < len; ++l) {
          hr[l] = (xr[l] - mean) * inv_std;
          yr[l] = g * hr[l] + b0;
        }
      }
    }
  });
  return y;
}

Tensor BatchNorm1d::backward(const Tensor& dy) {
  if (!has_input_) throw StateError("batchnorm: backward before forward");
  if (!trained_forward_) {
    throw StateError("batchnorm: backward requires a training-mode forward");
  }
  const size_t batch = x_hat_.dim(0), channels = x_hat_.dim(1),
               len = x_hat_.dim(2);
  if (dy.shape != x_hat_.shape) {
    throw ShapeError("batchnorm: gradient shape mismatch");
  }

  gamma.ensure_grad();
  beta.ensure_grad();
  const double m = static_cast<double>(batch * len);

  Tensor dx({batch, channels, len});
  parallel_for(channels, [&](size_t c0, size_t c1) {
    for (size_t c = c0; c < c1; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (size_t b = 0; b < batch; ++b) {
        const double* dyr = &dy.data[(b * channels + c) * len];
        const double* hr = &x_hat_.data[(b * channels + c) * len];
        for (size_t l = 0; l < len; ++l) {
          sum_dy += dyr[l];
          sum_dy_xhat += dyr[l] * hr[l];
        }
      }
      gamma.grad[c] += sum_dy_xhat;
      beta.grad[c] += sum_dy;

      const double g = gamma.data[c];
      const double inv_std = batch_inv_std_[c];
      for (size_t b = 0; b < batch; ++b) {
        const double* dyr = &dy.data[(b * channels + c) * len];
        const double* hr = &x_hat_.data[(b * channels + c) * len];
        double* dxr = &dx.data[(b * channels + c) * len];
        for (size_t l = 0; l < len; ++l) {
          dxr[l] = g * inv_std / m *
                   (m * dyr[l] - sum_dy - hr[l] * sum_dy_xhat);
        }
      }
    }
  });
  return dx;
}

// ---------------------------------------------------------------------------
// Relu

Tensor Relu::forward(const Tensor& x) {
  Tensor y = x;
  mask_.assign(x.numel(), 0);
  for (size_t i = 0; i < y.data.size(); ++i) {
    if (y.data[i] > 0.0) {
      mask_[i] = 1;
    } else {
      y.data[i] = 0.0;
    }
  }
  return y;
}

Tensor Relu::backward(const Tensor& dy) {
  if (mask_.size() != dy.numel()) {
    throw StateError("relu: backward before forward");
  }
  Tensor dx = dy;
  for (size_t i = 0; i < dx.data.size(); ++i) {
    if (!mask_[i]) dx.data[i] = 0.0;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// MaxPool1d

MaxPool1d::MaxPool1d(size_t window) : window_(window) {
  if (window % 2 == 0) throw ConfigError("pool window must be odd");
}

Tensor MaxPool1d::forward(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("maxpool: expected rank-3 input");
  const size_t batch = x.dim(0), channels = x.dim(1), len = x.dim(2);
  const long reach = static_cast<long>(window_ - 1) / 2;

  in_shape_ = x.shape;
  argmax_.assign(x.numel(), 0);
  Tensor y({batch, channels, len});

  parallel_for(batch * channels, [&](size_t r0, size_t r1) {
    for (size_t r = r0; r < r1; ++r) {
      const double* xr = &x.data[r * len];
      double* yr = &y.data[r * len];
      size_t* ar = &argmax_[r * len];
      for (size_t l = 0; l < len; ++l) {
        const size_t w0 =
            static_cast<long>(l) - reach < 0 ? 0 : l - static_cast<size_t>(reach);
        const size_t w1 =
            std::min(len - 1, l + static_cast<size_t>(reach));
        double best = -std::numeric_limits<double>::infinity();
        size_t best_i = w0;
        for (size_t i = w0; i <= w1; ++i) {
          if (xr[i] > best) {
            best = xr[i];
            best_i = i;
          }
        }
        yr[l] = best;
        ar[l] = best_i;
      }
    }
  });
  return y;
}

Tensor MaxPool1d::backward(const Tensor& dy) {
  if (in_shape_.empty()) throw StateError("maxpool: backward before forward");
  if (dy.shape != in_shape_) throw ShapeError("maxpool: gradient shape mismatch");
  const size_t len = in_shape_[2];

  Tensor dx(in_shape_);
  parallel_for(in_shape_[0] * in_shape_[1], [&](size_t r0, size_t r1) {
    for (size_t r = r0; r < r1; ++r) {
      const double* dyr = &dy.data[r * len];
      double* dxr = &dx.data[r * len];
      const size_t* ar = &argmax_[r * len];
      for (size_t l = 0; l < len; ++l) dxr[ar[l]] += dyr[l];
    }
  });
  return dx;
}

// ---------------------------------------------------------------------------
// ChannelAttention

ChannelAttention::ChannelAttention(size_t channels, size_t reduction)
    : w0({channels / (reduction == 0 ? 1 : reduction), channels}),
      w1({channels, channels / (reduction == 0 ? 1 : reduction)}),
      channels_(channels),
      reduction_(reduction) {
  if (reduction == 0 || channels % reduction != 0) {
    throw ConfigError("channel count " + std::to_string(channels) +
                      " is not divisible by reduction " +
                      std::to_string(reduction));
  }
}

void ChannelAttention::init(Rng& rng) {
  init_uniform(w0, static_cast<double>(channels_), rng);
  init_uniform(w1, static_cast<double>(channels_ / reduction_), rng);
}

Tensor ChannelAttention::forward(const Tensor& x) {
  check_bcl(x, channels_, "channel_attention");
  const size_t batch = x.dim(0), c = channels_, len = x.dim(2);
  const size_t hidden = c / reduction_;

  x_ = x;
  has_input_ = true;
  avg_.assign(batch * c, 0.0);
  mx_.assign(batch * c, 0.0);
  argmax_.assign(batch * c, 0);
  hidden_avg_.assign(batch * hidden, 0.0);
  hidden_max_.assign(batch * hidden, 0.0);
  gate_.assign(batch * c, 0.0);

  Tensor y({batch, c, len});
  for (size_t b = 0; b < batch; ++b) {
    for (size_t ch = 0; ch < c; ++ch) {
      const double* xr = &x.data[(b * c + ch) * len];
      double sum = 0.0;
      double best = xr[0];
      size_t best_i = 0;
      for (size_t l = 0; l < len; ++l) {
        sum += xr[l];
        if (xr[l] > best) {
          best = xr[l];
          best_i = l;
        }
      }
      avg_[b * c + ch] = sum / static_cast<double>(len);
      mx_[b * c + ch] = best;
      argmax_[b * c + ch] = best_i;
    }

    for (size_t h = 0; h < hidden; ++h) {
      double acc_a = 0.0, acc_m = 0.0;
      const double* w0r = &w0.data[h * c];
      for (size_t ch = 0; ch < c; ++ch) {
        acc_a += w0r[ch] * avg_[b * c + ch];
        acc_m += w0r[ch] * mx_[b * c + ch];
      }
      hidden_avg_[b * hidden + h] = acc_a > 0.0 ? acc_a : 0.0;
      hidden_max_[b * hidden + h] = acc_m > 0.0 ? acc_m : 0.0;
    }

    for (size_t ch = 0; ch < c; ++ch) {
      double u = 0.0;
      const double* w1r = &w1.data[ch * hidden];
      for (size_t h = 0; h < hidden; ++h) {
        u += w1r[h] * (hidden_avg_[b * hidden + h] + hidden_max_[b * hidden + h]);
      }
      const double g = sigmoid(u);
      gate_[b * c + ch] = g;
      const double* xr = &x.data[(b * c + ch) * len];
      double* yr = &y.data[(b * c + ch) * len];
      for (size_t l = 0; l < len; ++l) yr[l] = xr[l] * g;
    }
  }
  return y;
}

Tensor ChannelAttention::backward(const Tensor& dy) {
  if (!has_input_) throw StateError("channel_attention: backward before forward");
  if (dy.shape != x_.shape) {
    throw ShapeError("channel_attention: gradient shape mismatch");
  }
  const size_t batch = x_.dim(0), c = channels_, len = x_.dim(2);
  const size_t hidden = c / reduction_;

  w0.ensure_grad();
  w1.ensure_grad();
  Tensor dx({batch, c, len});

  std::vector<double> du(c), dh_avg(hidden), dh_max(hidden), davg(c), dmx(c);
  for (size_t b = 0; b < batch; ++b) {
    for (size_t ch = 0; ch < c; ++ch) {
      const double g = gate_[b * c + ch];
      const double* dyr = &dy.data[(b * c + ch) * len];
      const double* xr = &x_.data[(b * c + ch) * len];
      double* dxr = &dx.data[(b * c + ch) * len];
      double dgate = 0.0;
      for (size_t l = 0; l < len; ++l) {
        dgate += dyr[l] * xr[l];
        dxr[l] = dyr[l] * g;
      }
      du[ch] = dgate * g * (1.0 - g);
    }

    for (size_t h = 0; h < hidden; ++h) {
      const double act_a = hidden_avg_[b * hidden + h];
      const double act_m = hidden_max_[b * hidden + h];
      double acc = 0.0;
      for (size_t ch = 0; ch < c; ++ch) {
        const double d = du[ch];
        w1.grad[ch * hidden + h] += d * (act_a + act_m);
        acc += w1.data[ch * hidden + h] * d;
      }
      dh_avg[h] = act_a > 0.0 ? acc : 0.0;
      dh_max[h] = act_m > 0.0 ? acc : 0.0;
    }

    std::fill(davg.begin(), davg.end(), 0.0);
    std::fill(dmx.begin(), dmx.end(), 0.0);
    for (size_t h = 0; h < hidden; ++h) {
      const double da = dh_avg[h], dm = dh_max[h];
      const double* w0r = &w0.data[h * c];
      double* g0r = &w0.grad[h * c];
      for (size_t ch = 0; ch < c; ++ch) {
        g0r[ch] += da * avg_[b * c + ch] + dm * mx_[b * c + ch];
        davg[ch] += w0r[ch] * da;
        dmx[ch] += w0r[ch] * dm;
      }
    }

    for (size_t ch = 0; ch < c; ++ch) {
      double* dxr = &dx.data[(b * c + ch) * len];
      const double spread = davg[ch] / static_cast<double>(len);
      for (size_t l = 0; l < len; ++l) dxr[l] += spread;
      dxr[argmax_[b * c + ch]] += dmx[ch];
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// SpatialAttention

SpatialAttention::SpatialAttention(size_t kernel)
    : weight({2, kernel}), bias({1}), kernel_(kernel) {
  if (kernel % 2 == 0) throw ConfigError("spatial kernel must be odd");
}

void SpatialAttention::init(Rng& rng) {
  init_uniform(weight, static_cast<double>(2 * kernel_), rng);
  bias.data[0] = 0.0;
}

Tensor SpatialAttention::forward(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("spatial_attention: expected rank-3 input");
  const size_t batch = x.dim(0), c = x.dim(1), len = x.dim(2);
  const long pad = static_cast<long>(kernel_ - 1) / 2;

  x_ = x;
  has_input_ = true;
  mean_map_.assign(batch * len, 0.0);
  max_map_.assign(batch * len, 0.0);
  argmax_channel_.assign(batch * len, 0);
  gate_.assign(batch * len, 0.0);

  Tensor y({batch, c, len});
  for (size_t b = 0; b < batch; ++b) {
    for (size_t l = 0; l < len; ++l) {
      double sum = 0.0;
      double best = x.at3(b, 0, l);
      size_t best_c = 0;
      for (size_t ch = 0; ch < c; ++ch) {
        const double v = x.at3(b, ch, l);
        sum += v;
        if (v > best) {
          best = v;
          best_c = ch;
        }
      }
      mean_map_[b * len + l] = sum / static_cast<double>(c);
      max_map_[b * len + l] = best;
      argmax_channel_[b * len + l] = best_c;
    }

    for (size_t l = 0; l < len; ++l) {
      double z = bias.data[0];
      for (size_t j = 0; j < kernel_; ++j) {
        const long t = static_cast<long>(l) + static_cast<long>(j) - pad;
        if (t < 0 || t >= static_cast<long>(len)) continue;
        z += weight.data[j] * mean_map_[b * len + static_cast<size_t>(t)];
        z += weight.data[kernel_ + j] * max_map_[b * len + static_cast<size_t>(t)];
      }
      gate_[b * len + l] = sigmoid(z);
    }

    for (size_t ch = 0; ch < c; ++ch) {
      const double* xr = &x.data[(b * c + ch) * len];
      double* yr = &y.data[(b * c + ch) * len];
      for (size_t l = 0; l < len; ++l) yr[l] = xr[l] * gate_[b * len + l];
    }
  }
  return y;
}

Tensor SpatialAttention::backward(const Tensor& dy) {
  if (!has_input_) throw StateError("spatial_attention: backward before forward");
  if (dy.shape != x_.shape) {
    throw ShapeError("spatial_attention: gradient shape mismatch");
  }
  const size_t batch = x_.dim(0), c = x_.dim(1), len = x_.dim(2);
  const long pad = static_cast<long>(kernel_ - 1) / 2;

  weight.ensure_grad();
  bias.ensure_grad();
  Tensor dx({batch, c, len});

  std::vector<double> dz(len), dmean(len), dmax(len);
  for (size_t b = 0; b < batch; ++b) {
    for (size_t l = 0; l < len; ++l) {
      double dgate = 0.0;
      for (size_t ch = 0; ch < c; ++ch) {
        dgate += dy.at3(b, ch, l) * x_.at3(b, ch, l);
        dx.at3(b, ch, l) = dy.at3(b, ch, l) * gate_[b * len + l];
      }
      const double g = gate_[b * len + l];
      dz[l] = dgate * g * (1.0 - g);
      bias.grad[0] += dz[l];
    }

    std::fill(dmean.begin(), dmean.end(), 0.0);
    std::fill(dmax.begin(), dmax.end(), 0.0);
    for (size_t l = 0; l < len; ++l) {
      for (size_t j = 0; j < kernel_; ++j) {
        const long t = static_cast<long>(l) + static_cast<long>(j) - pad;
        if (t < 0 || t >= static_cast<long>(len)) continue;
        const auto ti = static_cast<size_t>(t);
        weight.grad[j] += dz[l] * mean_map_[b * len + ti];
        weight.grad[kernel_ + j] += dz[l] * max_map_[b * len + ti];
        dmean[ti] += weight.data[j] * dz[l];
        dmax[ti] += weight.data[kernel_ + j] * dz[l];
      }
    }

    for (size_t l = 0; l < len; ++l) {
      const double spread = dmean[l] / static_cast<double>(c);
      for (size_t ch = 0; ch < c; ++ch) dx.at3(b, ch, l) += spread;
      dx.at3(b, argmax_channel_[b * len + l], l) += dmax[l];
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(size_t in_features, size_t out_features)
    : weight({out_features, in_features}), bias({out_features}) {}

void Dense::init(Rng& rng) {
  init_uniform(weight, static_cast<double>(weight.dim(1)), rng);
  std::fill(bias.data.begin(), bias.data.end(), 0.0);
}

Tensor Dense::forward(const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw ShapeError("dense: expected [batch, " + std::to_string(weight.dim(1)) +
                     "] input");
  }
  const size_t batch = x.dim(0), in = weight.dim(1), out = weight.dim(0);
  x_ = x;
  has_input_ = true;

  Tensor y({batch, out});
  parallel_for(batch, [&](size_t b0, size_t b1) {
    for (size_t b = b0; b < b1; ++b) {
      const double* xr = &x.data[b * in];
      double* yr = &y.data[b * out];
      for (size_t o = 0; o < out; ++o) {
        const double* wr = &weight.data[o * in];
        double acc = bias.data[o];
        for (size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
      }
    }
  });
  return y;
}

Tensor Dense::backward(const Tensor& dy) {
  if (!has_input_) throw StateError("dense: backward before forward");
  const size_t batch = x_.dim(0), in = weight.dim(1), out = weight.dim(0);
  if (dy.shape != std::vector<size_t>{batch, out}) {
    throw ShapeError("dense: gradient shape mismatch");
  }

  weight.ensure_grad();
  bias.ensure_grad();

  parallel_for(out, [&](size_t o0, size_t o1) {
    for (size_t o = o0; o < o1; ++o) {
      double db = 0.0;
      double* gw = &weight.grad[o * in];
      for (size_t b = 0; b < batch; ++b) {
        const double d = dy.data[b * out + o];
        db += d;
        const double* xr = &x_.data[b * in];
        for (size_t i = 0; i < in; ++i) gw[i] += d * xr[i];
      }
      bias.grad[o] += db;
    }
  });

  Tensor dx({batch, in});
  parallel_for(batch, [&](size_t b0, size_t b1) {
    for (size_t b = b0; b < b1; ++b) {
      const double* dyr = &dy.data[b * out];
      double* dxr = &dx.data[b * in];
      for (size_t o = 0; o < out; ++o) {
        const double d = dyr[o];
        const double* wr = &weight.data[o * in];
        for (size_t i = 0; i < in; ++i) dxr[i] += d * wr[i];
      }
    }
  });
  return dx;
}

// ---------------------------------------------------------------------------
// AttentionCnn

void ModelConfig::validate() const {
  if (in_channels == 0 || input_len == 0) {
    throw ConfigError("input dimensions must be positive");
  }
  if (classes < 2) throw ConfigError("need at least two classes");
  if (conv_blocks == 0) throw ConfigError("need at least one conv block");
  if (kernel % 2 == 0 || pool_window % 2 == 0) {
    throw ConfigError("kernel and pool window must be odd");
  }
  if (reduction == 0 || conv_channels % reduction != 0) {
    throw ConfigError("conv_channels must be divisible by reduction");
  }
  if (dense_units == 0) throw ConfigError("dense_units must be positive");
}

namespace {
const ModelConfig& validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

AttentionCnn::AttentionCnn(const ModelConfig& cfg)
    : cfg_(validated(cfg)),
      ca_(cfg.conv_channels, cfg.reduction),
      sa_(cfg.kernel),
      dense_(cfg.conv_channels * cfg.input_len, cfg.dense_units),
      head_(cfg.dense_units, cfg.classes) {
  Rng root(cfg.init_seed);
  for (size_t i = 0; i < cfg.conv_blocks; ++i) {
    const size_t in = i == 0 ? cfg.in_channels : cfg.conv_channels;
    blocks_.push_back(ConvBlock{Conv1d(in, cfg.conv_channels, cfg.kernel),
                                BatchNorm1d(cfg.conv_channels), Relu{},
                                MaxPool1d(cfg.pool_window)});
  }
  size_t stream = 0;
  for (auto& block : blocks_) {
    Rng r = root.split(stream++);
    block.conv.init(r);
  }
  {
    Rng r = root.split(stream++);
    ca_.init(r);
  }
  {
    Rng r = root.split(stream++);
    sa_.init(r);
  }
  {
    Rng r = root.split(stream++);
    dense_.init(r);
  }
  {
    Rng r = root.split(stream++);
    head_.init(r);
  }
}

Tensor AttentionCnn::forward(const Tensor& x, bool training) {
  if (x.rank() != 3 || x.dim(1) != cfg_.in_channels ||
      x.dim(2) != cfg_.input_len) {
    throw ShapeError("model: expected [batch, " +
                     std::to_string(cfg_.in_channels) + ", " +
                     std::to_string(cfg_.input_len) + "] input");
  }
  Tensor h = x;
  for (auto& block : blocks_) {
    h = block.conv.forward(h);
    h = block.bn.forward(h, training);
    h = block.relu.forward(h);
    h = block.pool.forward(h);
  }
  h = ca_.forward(h);
  h = sa_.forward(h);

  pre_flatten_shape_ = h.shape;
  h = h.reshaped({h.dim(0), h.dim(1) * h.dim(2)});
  h = dense_.forward(h);
  h = dense_relu_.forward(h);
  h = head_.forward(h);
  has_forward_ = true;
  return h;
}

void AttentionCnn::backward(const Tensor& dlogits) {
  if (!has_forward_) throw StateError("model: backward before forward");
  Tensor g = head_.backward(dlogits);
  g = dense_relu_.backward(g);
  g = dense_.backward(g);
  g = g.reshaped(pre_flatten_shape_);
  g = sa_.backward(g);
  g = ca_.backward(g);
  for (size_t i = blocks_.size(); i-- > 0;) {
    g = blocks_[i].pool.backward(g);
    g = blocks_[i].relu.backward(g);
    g = blocks_[i].bn.backward(g);
    g = blocks_[i].conv.backward(g);
  }
}

std::vector<ParamRef> AttentionCnn::params() {
  std::vector<ParamRef> out;
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    out.push_back({"conv" + n + ".weight", &blocks_[i].conv.weight});
    out.push_back({"conv" + n + ".bias", &blocks_[i].conv.bias});
    out.push_back({"bn" + n + ".gamma", &blocks_[i].bn.gamma});
    out.push_back({"bn" + n + ".beta", &blocks_[i].bn.beta});
  }
  out.push_back({"ca.w0", &ca_.w0});
  out.push_back({"ca.w1", &ca_.w1});
  out.push_back({"sa.weight", &sa_.weight});
  out.push_back({"sa.bias", &sa_.bias});
  out.push_back({"dense.weight", &dense_.weight});
  out.push_back({"dense.bias", &dense_.bias});
  out.push_back({"head.weight", &head_.weight});
  out.push_back({"head.bias", &head_.bias});
  return out;
}

std::vector<ParamRef> AttentionCnn::state() {
  std::vector<ParamRef> out = params();
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    out.push_back({"bn" + n + ".running_mean", &blocks_[i].bn.running_mean});
    out.push_back({"bn" + n + ".running_var", &blocks_[i].bn.running_var});
  }
  return out;
}

void AttentionCnn::zero_grad() {
  for (auto& p : params()) {
    p.tensor->ensure_grad();
    p.tensor->zero_grad();
  }
}

std::vector<std::vector<double>> snapshot_state(AttentionCnn& model) {
  std::vector<std::vector<double>> snap;
  for (auto& p : model.state()) snap.push_back(p.tensor->data);
  return snap;
}

void restore_state(AttentionCnn& model,
                   const std::vector<std::vector<double>>& snap) {
  auto refs = model.state();
  if (refs.size() != snap.size()) {
    throw ShapeError("state snapshot does not match model");
  }
  for (size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].tensor->data.size() != snap[i].size()) {
      throw ShapeError("state snapshot tensor size mismatch: " + refs[i].name);
    }
    refs[i].tensor->data = snap[i];
  }
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr uint16_t kCheckpointVersion = 1;

void put_u16(std::ofstream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<char*>(b), 2);
}

void put_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<char*>(b), 4);
}

void put_f64(std::ofstream& out, double v) {
  uint64_t u;
  std::memcpy(&u, &v, sizeof(u));
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<char*>(b), 8);
}

uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, sizeof(v));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, AttentionCnn& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  const auto& cfg = model.config();
  out.write("SERM", 4);
  put_u16(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(cfg.classes));
  put_u32(out, static_cast<uint32_t>(cfg.input_len));
  put_u32(out, static_cast<uint32_t>(cfg.reduction));
  for (auto& p : model.state()) {
    put_u32(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<uint32_t>(p.tensor->rank()));
    for (size_t d : p.tensor->shape) put_u32(out, static_cast<uint32_t>(d));
    for (double v : p.tensor->data) put_f64(out, v);
  }
  if (!out) throw IoError("write failed: " + path);
}

AttentionCnn load_checkpoint(const std::string& path, const ModelConfig& base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SERM", 4) != 0) {
    throw IoError("bad checkpoint magic: " + path);
  }
  const uint16_t version = get_u16(in);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }

  ModelConfig cfg = base;
  cfg.classes = get_u32(in);
  cfg.input_len = get_u32(in);
  cfg.reduction = get_u32(in);
  if (!in) throw IoError("truncated checkpoint header: " + path);

  struct Entry {
    std::vector<size_t> shape;
    std::vector<double> data;
  };
  std::map<std::string, Entry> entries;
  while (true) {
    const uint32_t name_len = get_u32(in);
    if (in.eof()) break;
    if (!in || name_len == 0 || name_len > 4096) {
      throw IoError("corrupt checkpoint tensor header: " + path);
    }
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    Entry e;
    const uint32_t rank = get_u32(in);
    if (!in || rank > 8) throw IoError("corrupt checkpoint tensor rank: " + path);
    size_t count = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      const uint32_t d = get_u32(in);
      e.shape.push_back(d);
      count *= d;
    }
    e.data.resize(count);
    for (auto& v : e.data) v = get_f64(in);
    if (!in) throw IoError("truncated checkpoint tensor '" + name + "'");
    entries.emplace(std::move(name), std::move(e));
  }

  const auto conv1 = entries.find("conv1.weight");
  if (conv1 == entries.end() || conv1->second.shape.size() != 3) {
    throw IoError("checkpoint is missing conv1.weight");
  }
  cfg.conv_channels = conv1->second.shape[0];
  cfg.in_channels = conv1->second.shape[1];
  cfg.kernel = conv1->second.shape[2];
  cfg.conv_blocks = 0;
  while (entries.count("conv" + std::to_string(cfg.conv_blocks + 1) +
                       ".weight")) {
    ++cfg.conv_blocks;
  }
  const auto dense = entries.find("dense.weight");
  if (dense == entries.end() || dense->second.shape.size() != 2) {
    throw IoError("checkpoint is missing dense.weight");
  }
  cfg.dense_units = dense->second.shape[0];

  AttentionCnn model(cfg);
  auto refs = model.state();
  if (refs.size() != entries.size()) {
    throw IoError("checkpoint has " + std::to_string(entries.size()) +
                  " tensors, model expects " + std::to_string(refs.size()));
  }
  for (auto& ref : refs) {
    const auto it = entries.find(ref.name);
    if (it == entries.end()) {
      throw IoError("checkpoint is missing tensor '" + ref.name + "'");
    }
    if (it->second.shape != ref.tensor->shape) {
      throw IoError("checkpoint tensor '" + ref.name + "' has wrong shape");
    }
    ref.tensor->data = std::move(it->second.data);
  }
  return model;
}

}  // namespace ser
