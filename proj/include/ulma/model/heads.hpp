#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ulma/error.hpp"
#include "ulma/model/encoder.hpp"
#include "ulma/model/layers.hpp"

namespace ulma::model {

enum class HeadKind { Classify, Detect };

/// Linear layer on the mean-pooled clip vector.
struct FineTuneHead {
  HeadKind kind = HeadKind::Classify;
  Linear fc;  // d_model × n_classes

  FineTuneHead() = default;
  FineTuneHead(HeadKind k, std::size_t d_model, std::size_t n_classes)
      : kind(k), fc(k == HeadKind::Classify ? "head.classify" : "head.detect", d_model, n_classes) {}

  std::size_t n_classes() const noexcept { return fc.out_dim(); }
  ParamList params() {
    ParamList out;
    fc.collect(out);
    return out;
  }
};

/// Mean over frames: T × d → 1 × d.
inline Matrix mean_pool(const Matrix& hidden) {
  if (hidden.rows() == 0) throw Error(Errc::EmptySequence, "cannot pool an empty sequence");
  Matrix out(1, hidden.cols());
  for (std::size_t t = 0; t < hidden.rows(); ++t)
    for (std::size_t j = 0; j < hidden.cols(); ++j) out(0, j) += hidden(t, j);
  for (double& v : out.data()) v /= static_cast<double>(hidden.rows());
  return out;
}

inline Matrix mean_pool_backward(const Matrix& d_pooled, std::size_t frames) {
  Matrix d(frames, d_pooled.cols());
  const double inv = 1.0 / static_cast<double>(frames);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t j = 0; j < d.cols(); ++j) d(t, j) = d_pooled(0, j) * inv;
  return d;
}

/// Softmax cross-entropy for one row of logits. Writes dL/dlogits when `grad` is given.
inline double softmax_cross_entropy(std::span<const double> logits, std::size_t label, std::vector<double>* grad = nullptr) {
  if (label >= logits.size()) throw Error(Errc::LabelOutOfRange, "class label out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  if (grad) {
    grad->resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) (*grad)[c] = std::exp(logits[c] - lse) - (c == label ? 1.0 : 0.0);
  }
  return lse - logits[label];
}

inline double log1p_exp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Mean binary cross-entropy of sigmoid(logits) against targets in {0, 1}.
inline double sigmoid_bce(std::span<const double> logits, std::span<const double> targets,
                          std::vector<double>* grad = nullptr) {
  if (logits.size() != targets.size()) throw Error(Errc::TargetLengthMismatch, "targets length differs from classes");
  const auto n = static_cast<double>(logits.size());
  double loss = 0.0;
  if (grad) grad->resize(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    const double x = logits[c], y = targets[c];
    // -y·log σ(x) - (1-y)·log(1-σ(x))
    loss += y * log1p_exp(-x) + (1.0 - y) * log1p_exp(x);
    if (grad) (*grad)[c] = (1.0 / (1.0 + std::exp(-x)) - y) / n;
  }
  return loss / n;
}

inline Matrix head_logits(const EncoderModel& m, const FineTuneHead& head, const AudioClip& clip) {
  return head.fc.forward(mean_pool(m.encode(clip).back()));
}

namespace detail {

// Forward through the encoder and head, apply `loss_fn` to the logits, backprop into the
// transformer and head (front end untouched), then take one gradient step on those parameters.
template <class LossFn>
double finetune_step(EncoderModel& m, FineTuneHead& head, const AudioClip& clip, double step_size, LossFn&& loss_fn) {
  EncoderTrace trace;
  const Matrix h = m.encode(clip, nullptr, &trace).back();
  const Matrix pooled = mean_pool(h);
  const Matrix logits = head.fc.forward(pooled);
  std::vector<double> g;
  const double loss = loss_fn(logits.row(0), &g);

  ParamList trainable = m.transformer_params();
  for (Param* p : head.params()) trainable.push_back(p);
  zero_grad(trainable);
  Matrix dlogits(1, g.size());
  std::copy(g.begin(), g.end(), dlogits.row(0).begin());
  const Matrix dpooled = head.fc.backward(pooled, dlogits);
  m.backward(trace, mean_pool_backward(dpooled, h.rows()), false);
  sgd_update(trainable, step_size);
  return loss;
}

}  // namespace detail

/// Clip-level classification step. The conv front end stays frozen.
inline double finetune_classify_step(EncoderModel& m, FineTuneHead& head, const AudioClip& clip, std::size_t label,
                                     double step_size) {
  if (head.kind != HeadKind::Classify) throw Error(Errc::InvalidArgument, "head is not a classification head");
  if (label >= head.n_classes()) throw Error(Errc::LabelOutOfRange, "class label out of range");
  return detail::finetune_step(m, head, clip, step_size, [label](std::span<const double> z, std::vector<double>* g) {
    return softmax_cross_entropy(z, label, g);
  });
}

/// Multi-label detection step with per-class sigmoid and mean BCE. The conv front end stays frozen.
inline double finetune_detect_step(EncoderModel& m, FineTuneHead& head, const AudioClip& clip,
                                   std::span<const double> targets, double step_size) {
  if (head.kind != HeadKind::Detect) throw Error(Errc::InvalidArgument, "head is not a detection head");
  if (targets.size() != head.n_classes()) throw Error(Errc::TargetLengthMismatch, "targets length differs from classes");
  return detail::finetune_step(m, head, clip, step_size, [targets](std::span<const double> z, std::vector<double>* g) {
    return sigmoid_bce(z, targets, g);
  });
}

inline std::size_t predict_class(const EncoderModel& m, const FineTuneHead& head, const AudioClip& clip) {
  const Matrix z = head_logits(m, head, clip);
  return static_cast<std::size_t>(std::max_element(z.row(0).begin(), z.row(0).end()) - z.row(0).begin());
}

/// Sliding-window span localization with a clip-level detection head: each window whose
/// sigmoid score for a class reaches `threshold` contributes to that class's merged spans.
struct DetectedSpan {
  std::size_t label = 0;
  double onset_s = 0.0;
  double offset_s = 0.0;
  double score = 0.0;
};

inline std::vector<DetectedSpan> sliding_window_detect(const EncoderModel& m, const FineTuneHead& head,
                                                       const AudioClip& clip, double window_s = 0.5,
                                                       double hop_s = 0.25, double threshold = 0.5) {
  const auto win = static_cast<std::size_t>(std::lround(window_s * clip.sample_rate));
  const auto hop = static_cast<std::size_t>(std::lround(hop_s * clip.sample_rate));
  if (win == 0 || hop == 0) throw Error(Errc::InvalidArgument, "window and hop must be positive");
  std::vector<DetectedSpan> spans;
  std::vector<std::ptrdiff_t> open(head.n_classes(), -1);
  auto score_window = [&](std::size_t start, std::size_t len) {
    AudioClip part;
    part.sample_rate = clip.sample_rate;
    part.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                        clip.samples.begin() + static_cast<std::ptrdiff_t>(start + len));
    return head_logits(m, head, part);
  };
  const std::size_t len = std::min(win, clip.size());
  for (std::size_t start = 0; start + len <= clip.size(); start += hop) {
    const Matrix z = score_window(start, len);
    const double t0 = static_cast<double>(start) / clip.sample_rate;
    const double t1 = static_cast<double>(start + len) / clip.sample_rate;
    for (std::size_t c = 0; c < head.n_classes(); ++c) {
      const double p = 1.0 / (1.0 + std::exp(-z(0, c)));
      if (p < threshold) {
        open[c] = -1;
        continue;
      }
      if (open[c] >= 0) {
        auto& s = spans[static_cast<std::size_t>(open[c])];
        s.offset_s = t1;
        s.score = std::max(s.score, p);
      } else {
        open[c] = static_cast<std::ptrdiff_t>(spans.size());
        spans.push_back({c, t0, t1, p});
      }
    }
    if (len == clip.size()) break;
  }
  return spans;
}

}  // namespace ulma::model
