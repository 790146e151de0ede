#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ulma/error.hpp"
#include "ulma/matrix.hpp"
#include "ulma/random.hpp"

namespace ulma::model {

/// A trainable tensor and its accumulated gradient.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

  void zero_grad() { grad.fill(0.0); }
};

using ParamList = std::vector<Param*>;

inline void zero_grad(const ParamList& params) {
  for (Param* p : params) p->zero_grad();
}

/// Plain gradient descent: value -= step · grad.
inline void sgd_update(const ParamList& params, double step_size) {
  for (Param* p : params) {
    auto& v = p->value.data();
    const auto& g = p->grad.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= step_size * g[i];
  }
}

// ---------------------------------------------------------------------------
// Elementwise activations. Backward functions take the pre-activation input.

inline Matrix relu(Matrix x) {
  for (double& v : x.data()) v = v > 0.0 ? v : 0.0;
  return x;
}

inline Matrix relu_backward(const Matrix& pre, Matrix dy) {
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!(pre.data()[i] > 0.0)) dy.data()[i] = 0.0;
  return dy;
}

namespace detail {
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;
}  // namespace detail

// tanh approximation
inline Matrix gelu(Matrix x) {
  using namespace detail;
  for (double& v : x.data()) v = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  return x;
}

inline Matrix gelu_backward(const Matrix& pre, Matrix dy) {
  using namespace detail;
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const double x = pre.data()[i];
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double th = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    dy.data()[i] *= 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
  }
  return dy;
}

/// Row-wise numerically stable softmax.
inline Matrix softmax_rows(Matrix x) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      s += v;
    }
    for (double& v : r) v /= s;
  }
  return x;
}

// dS = P ⊙ (dP - rowsum(dP ⊙ P))
inline Matrix softmax_rows_backward(const Matrix& probs, const Matrix& dprobs) {
  Matrix ds(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) dot += probs(i, j) * dprobs(i, j);
    for (std::size_t j = 0; j < probs.cols(); ++j) ds(i, j) = probs(i, j) * (dprobs(i, j) - dot);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Attention

struct AttentionResult {
  Matrix output;   // n × d_v
  Matrix weights;  // n × m, rows sum to one
};

/// softmax(Q·Kᵀ/√d_k + bias)·V. A constant bias shifts every score and leaves the weights unchanged.
inline AttentionResult scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                            std::optional<double> bias = std::nullopt) {
  if (q.cols() == 0 || q.cols() != k.cols()) throw Error(Errc::ShapeMismatch, "Q and K need equal nonzero width");
  if (k.rows() != v.rows() || k.rows() == 0) throw Error(Errc::ShapeMismatch, "K and V need equal nonzero row counts");
  Matrix scores = matmul_nt(q, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (double& s : scores.data()) s = s * scale + bias.value_or(0.0);
  AttentionResult res;
  res.weights = softmax_rows(std::move(scores));
  res.output = matmul(res.weights, v);
  return res;
}

/// Attention of Ism frames (queries) over Fil frames (keys) carrying Harf values. The optional
/// chirps bias is added to every score before the softmax.
inline Matrix component_attention(const Matrix& ism_feats, const Matrix& fil_feats, const Matrix& harf_feats,
                                  std::optional<double> chirps_bias = std::nullopt) {
  return scaled_dot_attention(ism_feats, fil_feats, harf_feats, chirps_bias).output;
}

/// Sinusoidal position table: sin at even columns, cos at odd, wavelengths 2π … 10000·2π.
inline Matrix positional_encoding(std::size_t max_pos, std::size_t d_model) {
  if (d_model % 2 != 0) throw Error(Errc::OddDim, "d_model must be even");
  Matrix pe(max_pos, d_model);
  for (std::size_t pos = 0; pos < max_pos; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d_model));
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// Layers. forward() is const and side-effect free; backward() accumulates into Param::grad.

struct Linear {
  Param weight;  // in × out
  Param bias;    // 1 × out

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out)
      : weight(name + ".weight", in, out), bias(name + ".bias", 1, out) {}

  std::size_t in_dim() const noexcept { return weight.value.rows(); }
  std::size_t out_dim() const noexcept { return weight.value.cols(); }

  void init(Rng& rng, double stddev) {
    fill_normal(weight.value, stddev, rng);
    bias.value.fill(0.0);
  }

  Matrix forward(const Matrix& x) const {
    Matrix y = matmul(x, weight.value);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      auto r = y.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias.value(0, j);
    }
    return y;
  }

  Matrix backward(const Matrix& x, const Matrix& dy) {
    add_inplace(weight.grad, matmul_tn(x, dy));
    for (std::size_t i = 0; i < dy.rows(); ++i)
      for (std::size_t j = 0; j < dy.cols(); ++j) bias.grad(0, j) += dy(i, j);
    return matmul_nt(dy, weight.value);
  }

  void collect(ParamList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct LayerNorm {
  Param gain;   // 1 × d
  Param shift;  // 1 × d
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t d) : gain(name + ".gain", 1, d), shift(name + ".shift", 1, d) {
    gain.value.fill(1.0);
  }

  Matrix forward(const Matrix& x) const {
    Matrix y(x.rows(), x.cols());
    const auto d = static_cast<double>(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto r = x.row(i);
      double mean = 0.0;
      for (double v : r) mean += v;
      mean /= d;
      double var = 0.0;
      for (double v : r) var += (v - mean) * (v - mean);
      const double inv = 1.0 / std::sqrt(var / d + eps);
      for (std::size_t j = 0; j < r.size(); ++j) y(i, j) = gain.value(0, j) * (r[j] - mean) * inv + shift.value(0, j);
    }
    return y;
  }

  Matrix backward(const Matrix& x, const Matrix& dy) {
    Matrix dx(x.rows(), x.cols());
    const std::size_t n = x.cols();
    const auto d = static_cast<double>(n);
    std::vector<double> xhat(n), dxhat(n);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto r = x.row(i);
      double mean = 0.0;
      for (double v : r) mean += v;
      mean /= d;
      double var = 0.0;
      for (double v : r) var += (v - mean) * (v - mean);
      const double inv = 1.0 / std::sqrt(var / d + eps);
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        xhat[j] = (r[j] - mean) * inv;
        gain.grad(0, j) += dy(i, j) * xhat[j];
        shift.grad(0, j) += dy(i, j);
        dxhat[j] = dy(i, j) * gain.value(0, j);
        m1 += dxhat[j];
        m2 += dxhat[j] * xhat[j];
      }
      m1 /= d;
      m2 /= d;
      for (std::size_t j = 0; j < n; ++j) dx(i, j) = inv * (dxhat[j] - m1 - xhat[j] * m2);
    }
    return dx;
  }

  void collect(ParamList& out) {
    out.push_back(&gain);
    out.push_back(&shift);
  }
};

/// Strided 1-D convolution over a (length × channels) signal with "same"-style padding:
/// output length is ceil(length / stride).
struct Conv1d {
  std::size_t kernel = 1, stride = 1, in_ch = 1, out_ch = 1;
  Param weight;  // (kernel·in_ch) × out_ch
  Param bias;    // 1 × out_ch

  Conv1d() = default;
  Conv1d(const std::string& name, std::size_t k, std::size_t s, std::size_t cin, std::size_t cout)
      : kernel(k), stride(s), in_ch(cin), out_ch(cout), weight(name + ".weight", k * cin, cout),
        bias(name + ".bias", 1, cout) {}

  std::size_t out_len(std::size_t len) const noexcept { return (len + stride - 1) / stride; }
  std::size_t pad_left(std::size_t len) const noexcept {
    const std::size_t need = (out_len(len) - 1) * stride + kernel;
    return need > len ? (need - len) / 2 : 0;
  }

  Matrix forward(const Matrix& x) const {
    const std::size_t len = x.rows();
    const std::size_t tout = out_len(len);
    const auto pl = static_cast<std::ptrdiff_t>(pad_left(len));
    Matrix y(tout, out_ch);
    for (std::size_t t = 0; t < tout; ++t) {
      auto yr = y.row(t);
      for (std::size_t o = 0; o < out_ch; ++o) yr[o] = bias.value(0, o);
      for (std::size_t k = 0; k < kernel; ++k) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + k) - pl;
        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
        auto xr = x.row(static_cast<std::size_t>(pos));
        for (std::size_t c = 0; c < in_ch; ++c) {
          const double xv = xr[c];
          if (xv == 0.0) continue;
          auto wr = weight.value.row(k * in_ch + c);
          for (std::size_t o = 0; o < out_ch; ++o) yr[o] += xv * wr[o];
        }
      }
    }
    return y;
  }

  /// Accumulates parameter gradients; returns dx when `need_dx`, else an empty matrix.
  Matrix backward(const Matrix& x, const Matrix& dy, bool need_dx) {
    const std::size_t len = x.rows();
    const auto pl = static_cast<std::ptrdiff_t>(pad_left(len));
    Matrix dx = need_dx ? Matrix(len, in_ch) : Matrix();
    for (std::size_t t = 0; t < dy.rows(); ++t) {
      auto dyr = dy.row(t);
      for (std::size_t o = 0; o < out_ch; ++o) bias.grad(0, o) += dyr[o];
      for (std::size_t k = 0; k < kernel; ++k) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + k) - pl;
        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
        auto xr = x.row(static_cast<std::size_t>(pos));
        for (std::size_t c = 0; c < in_ch; ++c) {
          auto gr = weight.grad.row(k * in_ch + c);
          const double xv = xr[c];
          for (std::size_t o = 0; o < out_ch; ++o) gr[o] += xv * dyr[o];
          if (need_dx) {
            auto wr = weight.value.row(k * in_ch + c);
            double acc = 0.0;
            for (std::size_t o = 0; o < out_ch; ++o) acc += wr[o] * dyr[o];
            dx(static_cast<std::size_t>(pos), c) += acc;
          }
        }
      }
    }
    return dx;
  }

  void collect(ParamList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct MultiHeadAttention {
  std::size_t heads = 1;
  Linear wq, wk, wv, wo;

  struct Cache {
    Matrix q, k, v;
    std::vector<Matrix> probs;
    Matrix concat;
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t d_model, std::size_t n_heads)
      : heads(n_heads), wq(name + ".q", d_model, d_model), wk(name + ".k", d_model, d_model),
        wv(name + ".v", d_model, d_model), wo(name + ".o", d_model, d_model) {}

  std::size_t head_dim() const noexcept { return wq.out_dim() / heads; }

  Matrix forward(const Matrix& x, Cache* cache) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.q = wq.forward(x);
    c.k = wk.forward(x);
    c.v = wv.forward(x);
    const std::size_t dh = head_dim();
    c.concat = Matrix(x.rows(), wq.out_dim());
    c.probs.clear();
    for (std::size_t h = 0; h < heads; ++h) {
      auto res = scaled_dot_attention(col_slice(c.q, h * dh, dh), col_slice(c.k, h * dh, dh),
                                      col_slice(c.v, h * dh, dh));
      set_col_slice(c.concat, h * dh, res.output);
      c.probs.push_back(std::move(res.weights));
    }
    return wo.forward(c.concat);
  }

  Matrix backward(const Matrix& x, const Cache& c, const Matrix& dy) {
    const Matrix dconcat = wo.backward(c.concat, dy);
    const std::size_t dh = head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix dq(x.rows(), wq.out_dim()), dk(x.rows(), wq.out_dim()), dv(x.rows(), wq.out_dim());
    for (std::size_t h = 0; h < heads; ++h) {
      const Matrix qh = col_slice(c.q, h * dh, dh);
      const Matrix kh = col_slice(c.k, h * dh, dh);
      const Matrix vh = col_slice(c.v, h * dh, dh);
      const Matrix dout = col_slice(dconcat, h * dh, dh);
      const Matrix& p = c.probs[h];
      set_col_slice(dv, h * dh, matmul_tn(p, dout));
      Matrix ds = softmax_rows_backward(p, matmul_nt(dout, vh));
      for (double& v : ds.data()) v *= scale;
      set_col_slice(dq, h * dh, matmul(ds, kh));
      set_col_slice(dk, h * dh, matmul_tn(ds, qh));
    }
    Matrix dx = wq.backward(x, dq);
    add_inplace(dx, wk.backward(x, dk));
    add_inplace(dx, wv.backward(x, dv));
    return dx;
  }

  void collect(ParamList& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }
};

struct FeedForward {
  Linear in, out;

  struct Cache {
    Matrix pre, act;
  };

  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t d_model, std::size_t d_ff)
      : in(name + ".in", d_model, d_ff), out(name + ".out", d_ff, d_model) {}

  Matrix forward(const Matrix& x, Cache* cache) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.pre = in.forward(x);
    c.act = gelu(c.pre);
    return out.forward(c.act);
  }

  Matrix backward(const Matrix& x, const Cache& c, const Matrix& dy) {
    return in.backward(x, gelu_backward(c.pre, out.backward(c.act, dy)));
  }

  void collect(ParamList& outp) {
    in.collect(outp);
    out.collect(outp);
  }
};

/// Pre-norm block: x + Attn(LN(x)), then + FF(LN(·)).
struct TransformerBlock {
  LayerNorm ln1;
  MultiHeadAttention attn;
  LayerNorm ln2;
  FeedForward ff;

  struct Cache {
    Matrix x, a, x1, b;
    MultiHeadAttention::Cache attn;
    FeedForward::Cache ff;
  };

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, std::size_t d_model, std::size_t n_heads, std::size_t d_ff)
      : ln1(name + ".ln1", d_model), attn(name + ".attn", d_model, n_heads), ln2(name + ".ln2", d_model),
        ff(name + ".ff", d_model, d_ff) {}

  Matrix forward(const Matrix& x, Cache* cache) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.x = x;
    c.a = ln1.forward(x);
    c.x1 = attn.forward(c.a, &c.attn);
    add_inplace(c.x1, x);
    c.b = ln2.forward(c.x1);
    Matrix y = ff.forward(c.b, &c.ff);
    add_inplace(y, c.x1);
    return y;
  }

  Matrix backward(const Cache& c, const Matrix& dy) {
    Matrix dx1 = ln2.backward(c.x1, ff.backward(c.b, c.ff, dy));
    add_inplace(dx1, dy);
    Matrix dx = ln1.backward(c.x, attn.backward(c.a, c.attn, dx1));
    add_inplace(dx, dx1);
    return dx;
  }

  void collect(ParamList& out) {
    ln1.collect(out);
    attn.collect(out);
    ln2.collect(out);
    ff.collect(out);
  }
};

}  // namespace ulma::model
