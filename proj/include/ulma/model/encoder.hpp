#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ulma/error.hpp"
#include "ulma/matrix.hpp"
#include "ulma/model/layers.hpp"
#include "ulma/random.hpp"
#include "ulma/signal/audio.hpp"

namespace ulma::model {

using signal::AudioClip;

inline constexpr int kFramesPerSecond = 50;

struct ConvLayer {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t channels = 1;
};

struct EncoderConfig {
  int sample_rate = 16000;
  std::vector<ConvLayer> conv_layers{{10, 5, 16}, {8, 4, 16}, {4, 4, 16}, {4, 4, 16}};
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_ff = 64;
  std::size_t k_units = 16;
  std::size_t proj_dim = 16;
  double temperature = 0.1;
  std::size_t mask_span = 10;
  double mask_start_prob = 0.08;
  std::size_t max_pos = 512;

  /// Default front end for a rate: strides factor sample_rate/50, kernels twice the stride.
  static EncoderConfig for_rate(int sample_rate, std::size_t channels = 16) {
    EncoderConfig cfg;
    cfg.sample_rate = sample_rate;
    cfg.conv_layers.clear();
    if (sample_rate % kFramesPerSecond != 0)
      throw Error(Errc::InvalidArgument, "sample rate must be a multiple of 50");
    auto rest = static_cast<std::size_t>(sample_rate / kFramesPerSecond);
    for (std::size_t f : {5u, 4u, 4u, 4u, 3u, 2u}) {
      if (rest % f == 0 && rest > 1) {
        cfg.conv_layers.push_back({2 * f, f, channels});
        rest /= f;
      }
    }
    for (std::size_t f = 2; rest > 1; ++f) {
      while (rest % f == 0) {
        cfg.conv_layers.push_back({2 * f, f, channels});
        rest /= f;
      }
    }
    return cfg;
  }

  std::size_t total_stride() const noexcept {
    std::size_t s = 1;
    for (const auto& c : conv_layers) s *= c.stride;
    return s;
  }

  std::size_t receptive_field() const noexcept {
    std::size_t rf = 1, jump = 1;
    for (const auto& c : conv_layers) {
      rf += (c.kernel - 1) * jump;
      jump *= c.stride;
    }
    return rf;
  }

  std::size_t frames_for(std::size_t n_samples) const noexcept {
    std::size_t len = n_samples;
    for (const auto& c : conv_layers) len = (len + c.stride - 1) / c.stride;
    return len;
  }

  /// Default stage-2 clustering layer: the middle of the stack.
  std::size_t middle_layer() const noexcept { return n_layers / 2 == 0 ? 0 : n_layers / 2 - 1; }

  void validate() const {
    if (conv_layers.empty()) throw Error(Errc::InvalidArgument, "need at least one conv layer");
    if (total_stride() * kFramesPerSecond != static_cast<std::size_t>(sample_rate))
      throw Error(Errc::InvalidArgument, "product of conv strides must equal sample_rate/50");
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
      throw Error(Errc::InvalidArgument, "d_model must be divisible by n_heads");
    if (d_model % 2 != 0) throw Error(Errc::OddDim, "d_model must be even");
    if (!(mask_start_prob > 0.0 && mask_start_prob <= 1.0))
      throw Error(Errc::InvalidArgument, "mask_start_prob must lie in (0, 1]");
    if (!(temperature > 0.0)) throw Error(Errc::InvalidArgument, "temperature must be positive");
    if (n_layers == 0 || k_units == 0 || proj_dim == 0 || mask_span == 0)
      throw Error(Errc::InvalidArgument, "layer, unit, projection and span sizes must be positive");
  }
};

/// Activations kept by a forward pass for the backward pass.
struct EncoderTrace {
  std::vector<Matrix> conv_in;   // input to each conv layer
  std::vector<Matrix> conv_pre;  // pre-activation of each conv layer
  Matrix frontend_in;            // last conv activation, input to the projection
  std::vector<char> mask;
  std::vector<TransformerBlock::Cache> blocks;
};

/// Conv front end (50 frames/s) + sinusoidal positions + pre-norm transformer stack,
/// with the masked-unit prediction head (projection + unit embedding table).
struct EncoderModel {
  EncoderConfig config;
  std::uint64_t seed = 0;
  std::vector<Conv1d> conv;
  Linear input_proj;
  Param mask_embedding;  // 1 × d_model
  std::vector<TransformerBlock> blocks;
  Linear projection;     // d_model → proj_dim
  Param unit_embeddings; // k_units × proj_dim, rows unit-length

  EncoderModel() = default;

  EncoderModel(EncoderConfig cfg, std::uint64_t rng_seed) : config(std::move(cfg)), seed(rng_seed) {
    config.validate();
    std::size_t cin = 1;
    for (std::size_t i = 0; i < config.conv_layers.size(); ++i) {
      const auto& c = config.conv_layers[i];
      conv.emplace_back("conv." + std::to_string(i), c.kernel, c.stride, cin, c.channels);
      cin = c.channels;
    }
    input_proj = Linear("input_proj", cin, config.d_model);
    mask_embedding = Param("mask_embedding", 1, config.d_model);
    for (std::size_t l = 0; l < config.n_layers; ++l)
      blocks.emplace_back("block." + std::to_string(l), config.d_model, config.n_heads, config.d_ff);
    projection = Linear("projection", config.d_model, config.proj_dim);
    unit_embeddings = Param("unit_embeddings", config.k_units, config.proj_dim);

    Rng rng(rng_seed);
    for (auto& c : conv) {
      fill_normal(c.weight.value, std::sqrt(2.0 / static_cast<double>(c.kernel * c.in_ch)), rng);
      c.bias.value.fill(0.0);
    }
    input_proj.init(rng, std::sqrt(2.0 / static_cast<double>(cin)));
    fill_normal(mask_embedding.value, 1.0, rng);
    const double s = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    for (auto& b : blocks) {
      b.attn.wq.init(rng, s);
      b.attn.wk.init(rng, s);
      b.attn.wv.init(rng, s);
      b.attn.wo.init(rng, s);
      b.ff.in.init(rng, s);
      b.ff.out.init(rng, 1.0 / std::sqrt(static_cast<double>(config.d_ff)));
    }
    projection.init(rng, s);
    fill_normal(unit_embeddings.value, 1.0, rng);
    renormalize_unit_embeddings();
  }

  // -- parameter groups -----------------------------------------------------

  /// Conv layers and the projection to d_model: the part frozen during fine-tuning.
  ParamList frontend_params() {
    ParamList out;
    for (auto& c : conv) c.collect(out);
    input_proj.collect(out);
    return out;
  }

  ParamList transformer_params() {
    ParamList out{&mask_embedding};
    for (auto& b : blocks) b.collect(out);
    return out;
  }

  ParamList pretrain_head_params() {
    ParamList out;
    projection.collect(out);
    out.push_back(&unit_embeddings);
    return out;
  }

  ParamList all_params() {
    ParamList out = frontend_params();
    for (Param* p : transformer_params()) out.push_back(p);
    for (Param* p : pretrain_head_params()) out.push_back(p);
    return out;
  }

  void zero_grad() { model::zero_grad(all_params()); }

  /// Replaces the unit embedding table with a fresh random one for `k` units.
  void reset_unit_table(std::size_t k, Rng& rng) {
    config.k_units = k;
    unit_embeddings = Param("unit_embeddings", k, config.proj_dim);
    fill_normal(unit_embeddings.value, 1.0, rng);
    renormalize_unit_embeddings();
  }

  void renormalize_unit_embeddings() {
    for (std::size_t i = 0; i < unit_embeddings.value.rows(); ++i) {
      auto r = unit_embeddings.value.row(i);
      double n = 0.0;
      for (double v : r) n += v * v;
      n = std::sqrt(n);
      if (n > 0.0)
        for (double& v : r) v /= n;
    }
  }

  // -- forward --------------------------------------------------------------

  std::size_t frames_for(const AudioClip& clip) const { return config.frames_for(clip.size()); }

  void check_clip(const AudioClip& clip) const {
    if (clip.sample_rate != config.sample_rate)
      throw Error(Errc::RateMismatch, "clip rate " + std::to_string(clip.sample_rate) + " differs from encoder rate " +
                                          std::to_string(config.sample_rate));
    if (clip.size() < config.receptive_field())
      throw Error(Errc::ClipTooShort, "clip shorter than the conv receptive field");
    if (frames_for(clip) > config.max_pos) throw Error(Errc::InvalidArgument, "clip exceeds max_pos frames");
  }

  /// Conv stack with rectifiers followed by the linear map to d_model: T × d_model.
  Matrix conv_frontend(const AudioClip& clip, EncoderTrace* trace = nullptr) const {
    check_clip(clip);
    Matrix x(clip.size(), 1);
    std::copy(clip.samples.begin(), clip.samples.end(), x.data().begin());
    for (const auto& c : conv) {
      Matrix pre = c.forward(x);
      if (trace) {
        trace->conv_in.push_back(std::move(x));
        trace->conv_pre.push_back(pre);
      }
      x = relu(std::move(pre));
    }
    Matrix y = input_proj.forward(x);
    if (trace) trace->frontend_in = std::move(x);
    return y;
  }

  /// Hidden states after every transformer block. `mask` (per frame, nonzero = masked) swaps
  /// those frames for the mask embedding before positions are added.
  std::vector<Matrix> encode(const AudioClip& clip, const std::vector<char>* mask = nullptr,
                             EncoderTrace* trace = nullptr) const {
    Matrix x = conv_frontend(clip, trace);
    const std::size_t frames = x.rows();
    if (mask) {
      if (mask->size() != frames) throw Error(Errc::ShapeMismatch, "mask length differs from frame count");
      for (std::size_t t = 0; t < frames; ++t)
        if ((*mask)[t]) std::copy(mask_embedding.value.row(0).begin(), mask_embedding.value.row(0).end(), x.row(t).begin());
      if (trace) trace->mask = *mask;
    } else if (trace) {
      trace->mask.assign(frames, 0);
    }
    const Matrix pe = positional_encoding(frames, config.d_model);
    add_inplace(x, pe);
    std::vector<Matrix> hidden;
    hidden.reserve(blocks.size());
    if (trace) trace->blocks.resize(blocks.size());
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      x = blocks[l].forward(x, trace ? &trace->blocks[l] : nullptr);
      hidden.push_back(x);
    }
    return hidden;
  }

  Matrix hidden(const AudioClip& clip, std::size_t layer) const {
    if (layer >= blocks.size()) throw Error(Errc::LayerOutOfRange, "layer " + std::to_string(layer) + " out of range");
    return encode(clip)[layer];
  }

  // -- backward -------------------------------------------------------------

  /// Backpropagates a gradient on the final hidden state. Front-end gradients are only
  /// computed when `into_frontend` is set.
  void backward(const EncoderTrace& trace, const Matrix& d_final, bool into_frontend) {
    Matrix dx = d_final;
    for (std::size_t l = blocks.size(); l-- > 0;) dx = blocks[l].backward(trace.blocks[l], dx);
    for (std::size_t t = 0; t < dx.rows(); ++t) {
      if (!trace.mask[t]) continue;
      auto g = mask_embedding.grad.row(0);
      auto r = dx.row(t);
      for (std::size_t j = 0; j < r.size(); ++j) {
        g[j] += r[j];
        r[j] = 0.0;
      }
    }
    if (!into_frontend) return;
    Matrix d = input_proj.backward(trace.frontend_in, dx);
    for (std::size_t i = conv.size(); i-- > 0;) {
      d = relu_backward(trace.conv_pre[i], std::move(d));
      d = conv[i].backward(trace.conv_in[i], d, i > 0);
    }
  }
};

// ---------------------------------------------------------------------------
// Masked unit prediction

/// Each frame starts a span with probability mask_start_prob; spans cover mask_span frames,
/// clipped at the sequence end. Returns a per-frame mask (1 = masked).
inline std::vector<char> mask_spans(std::size_t frames, const EncoderConfig& cfg, Rng& rng) {
  std::vector<char> mask(frames, 0);
  for (std::size_t t = 0; t < frames; ++t) {
    if (uniform01(rng) < cfg.mask_start_prob)
      for (std::size_t j = t; j < std::min(frames, t + cfg.mask_span); ++j) mask[j] = 1;
  }
  return mask;
}

inline std::vector<std::size_t> masked_positions(const std::vector<char>& mask) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t]) out.push_back(t);
  return out;
}

struct MaskedPredictionStats {
  double loss = 0.0;
  std::size_t masked = 0;
  std::size_t correct = 0;
};

namespace detail {
inline constexpr double kNormEps = 1e-12;
}

/// Cosine-similarity logits between projected hidden states and unit embeddings, divided by τ.
/// Returns frames × k_units logits and optionally the projected vectors.
inline Matrix unit_logits(const EncoderModel& m, const Matrix& final_hidden, Matrix* projected = nullptr) {
  Matrix z = m.projection.forward(final_hidden);
  const Matrix& e = m.unit_embeddings.value;
  Matrix logits(z.rows(), e.rows());
  std::vector<double> enorm(e.rows());
  for (std::size_t c = 0; c < e.rows(); ++c) {
    double s = 0.0;
    for (double v : e.row(c)) s += v * v;
    enorm[c] = std::sqrt(s + detail::kNormEps);
  }
  for (std::size_t t = 0; t < z.rows(); ++t) {
    double zs = 0.0;
    for (double v : z.row(t)) zs += v * v;
    const double zn = std::sqrt(zs + detail::kNormEps);
    for (std::size_t c = 0; c < e.rows(); ++c) {
      double dot = 0.0;
      for (std::size_t j = 0; j < z.cols(); ++j) dot += z(t, j) * e(c, j);
      logits(t, c) = dot / (zn * enorm[c]) / m.config.temperature;
    }
  }
  if (projected) *projected = std::move(z);
  return logits;
}

/// Mean cross-entropy over masked frames. With `backward`, gradients are accumulated into every
/// parameter (the caller zeroes them first).
inline MaskedPredictionStats masked_prediction_loss(EncoderModel& m, const AudioClip& clip,
                                                    std::span<const std::size_t> labels, const std::vector<char>& mask,
                                                    bool backward) {
  const std::size_t frames = m.frames_for(clip);
  if (labels.size() != frames)
    throw Error(Errc::ShapeMismatch, "expected " + std::to_string(frames) + " unit labels, got " + std::to_string(labels.size()));
  for (std::size_t l : labels)
    if (l >= m.config.k_units) throw Error(Errc::LabelOutOfRange, "unit label " + std::to_string(l) + " >= k_units");
  const auto positions = masked_positions(mask);
  if (positions.empty()) throw Error(Errc::EmptyMask, "no masked positions");

  EncoderTrace trace;
  const auto hidden = m.encode(clip, &mask, backward ? &trace : nullptr);
  const Matrix& h = hidden.back();
  Matrix z;
  const Matrix logits = unit_logits(m, h, &z);
  const Matrix probs = softmax_rows(logits);

  MaskedPredictionStats st;
  st.masked = positions.size();
  const double inv_n = 1.0 / static_cast<double>(positions.size());
  for (std::size_t t : positions) {
    st.loss -= std::log(std::max(probs(t, labels[t]), 1e-300));
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols(); ++c)
      if (logits(t, c) > logits(t, best)) best = c;
    if (best == labels[t]) ++st.correct;
  }
  st.loss *= inv_n;
  if (!backward) return st;

  // dL/dlogits, then through the cosine similarity to z and the embeddings.
  const Matrix& e = m.unit_embeddings.value;
  const double tau = m.config.temperature;
  Matrix dz(z.rows(), z.cols());
  std::vector<double> enorm(e.rows());
  for (std::size_t c = 0; c < e.rows(); ++c) {
    double s = 0.0;
    for (double v : e.row(c)) s += v * v;
    enorm[c] = std::sqrt(s + detail::kNormEps);
  }
  for (std::size_t t : positions) {
    double zs = 0.0;
    for (double v : z.row(t)) zs += v * v;
    const double zn = std::sqrt(zs + detail::kNormEps);
    for (std::size_t c = 0; c < e.rows(); ++c) {
      const double dlogit = (probs(t, c) - (c == labels[t] ? 1.0 : 0.0)) * inv_n / tau;
      if (dlogit == 0.0) continue;
      const double cosv = logits(t, c) * tau;
      const double inv = 1.0 / (zn * enorm[c]);
      auto ge = m.unit_embeddings.grad.row(c);
      for (std::size_t j = 0; j < z.cols(); ++j) {
        dz(t, j) += dlogit * (e(c, j) * inv - cosv * z(t, j) / (zn * zn));
        ge[j] += dlogit * (z(t, j) * inv - cosv * e(c, j) / (enorm[c] * enorm[c]));
      }
    }
  }
  const Matrix dh = m.projection.backward(h, dz);
  m.backward(trace, dh, true);
  return st;
}

/// One masked-prediction update on a single clip. Returns statistics measured before the update.
inline MaskedPredictionStats pretrain_step_stats(EncoderModel& m, const AudioClip& clip,
                                                 std::span<const std::size_t> labels, Rng& rng, double step_size) {
  const auto mask = mask_spans(m.frames_for(clip), m.config, rng);
  m.zero_grad();
  auto st = masked_prediction_loss(m, clip, labels, mask, true);
  sgd_update(m.all_params(), step_size);
  m.renormalize_unit_embeddings();
  return st;
}

inline double pretrain_step(EncoderModel& m, const AudioClip& clip, std::span<const std::size_t> labels, Rng& rng,
                            double step_size) {
  return pretrain_step_stats(m, clip, labels, rng, step_size).loss;
}

}  // namespace ulma::model
