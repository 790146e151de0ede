#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ulma/error.hpp"
#include "ulma/model/encoder.hpp"
#include "ulma/model/heads.hpp"
#include "ulma/random.hpp"

namespace ulma::reward {

using model::EncoderModel;
using signal::AudioClip;

/// Encoder → mean pool → linear head → scalar.
struct RewardModel {
  EncoderModel encoder;
  model::Linear head;  // d_model × 1

  RewardModel() = default;
  RewardModel(EncoderModel enc, std::uint64_t seed, double init_std = 0.01)
      : encoder(std::move(enc)), head("reward_head", encoder.config.d_model, 1) {
    Rng rng(seed);
    head.init(rng, init_std);
  }
};

inline double score_pooled(const RewardModel& rm, const Matrix& pooled) { return rm.head.forward(pooled)(0, 0); }

inline Matrix pooled_features(const RewardModel& rm, const AudioClip& clip) {
  return model::mean_pool(rm.encoder.encode(clip).back());
}

inline double reward_score(const RewardModel& rm, const AudioClip& clip) {
  return score_pooled(rm, pooled_features(rm, clip));
}

/// Pairwise logistic loss: -ln σ(r_chosen - r_rejected).
inline double preference_loss(double r_chosen, double r_rejected) {
  return model::log1p_exp(-(r_chosen - r_rejected));
}

/// Indices into a clip corpus.
struct PreferencePair {
  std::size_t chosen = 0;
  std::size_t rejected = 0;
  std::string annotator_id;
};

/// Fraction of pairs whose chosen clip scores strictly higher.
inline double pairwise_accuracy(std::span<const double> scores, std::span<const PreferencePair> pairs) {
  if (pairs.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& p : pairs)
    if (scores[p.chosen] > scores[p.rejected]) ++ok;
  return static_cast<double>(ok) / static_cast<double>(pairs.size());
}

inline double mean_preference_loss(std::span<const double> scores, std::span<const PreferencePair> pairs) {
  double s = 0.0;
  for (const auto& p : pairs) s += preference_loss(scores[p.chosen], scores[p.rejected]);
  return s / static_cast<double>(pairs.size());
}

struct RewardTrainOptions {
  std::size_t epochs = 200;
  double step_size = 0.1;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;  // 0 = full batch
  bool train_encoder = false;  // also update the transformer stack (conv front end stays frozen)
};

struct RewardTrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double pairwise_accuracy = 0.0;
  std::vector<double> loss_trace;  // epoch-mean loss, one entry per epoch
};

inline std::vector<double> score_all(const RewardModel& rm, std::span<const AudioClip> clips) {
  std::vector<double> s;
  s.reserve(clips.size());
  for (const auto& c : clips) s.push_back(reward_score(rm, c));
  return s;
}

/// Gradient descent on the mean pairwise loss.
inline RewardTrainReport train_reward(RewardModel& rm, std::span<const AudioClip> clips,
                                      std::span<const PreferencePair> pairs, const RewardTrainOptions& opt) {
  if (pairs.empty()) throw Error(Errc::EmptyDataset, "no preference pairs");
  for (const auto& p : pairs) {
    if (p.chosen >= clips.size() || p.rejected >= clips.size())
      throw Error(Errc::InvalidArgument, "preference pair refers to a missing clip");
    if (p.chosen == p.rejected) throw Error(Errc::InvalidArgument, "chosen and rejected clip are the same");
  }

  Rng rng(opt.seed);
  RewardTrainReport rep;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = opt.batch_size == 0 ? pairs.size() : std::min(opt.batch_size, pairs.size());

  model::ParamList trainable;
  rm.head.collect(trainable);
  if (opt.train_encoder)
    for (model::Param* p : rm.encoder.transformer_params()) trainable.push_back(p);

  // With a frozen encoder the pooled clip vectors never change.
  std::vector<Matrix> pooled;
  if (!opt.train_encoder) {
    pooled.reserve(clips.size());
    for (const auto& c : clips) pooled.push_back(pooled_features(rm, c));
  }
  auto all_scores = [&] {
    if (opt.train_encoder) return score_all(rm, clips);
    std::vector<double> s;
    for (const auto& p : pooled) s.push_back(score_pooled(rm, p));
    return s;
  };

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto scores = all_scores();
    rep.loss_trace.push_back(mean_preference_loss(scores, pairs));
    if (batch < pairs.size()) std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t start = 0; start < pairs.size(); start += batch) {
      const std::size_t end = std::min(pairs.size(), start + batch);
      const double inv = 1.0 / static_cast<double>(end - start);
      model::zero_grad(trainable);
      for (std::size_t i = start; i < end; ++i) {
        const auto& pr = pairs[order[i]];
        // d/dmargin of -ln σ(margin) = -(1 - σ(margin))
        auto grad_for = [&](std::size_t clip_idx, double sign, double dmargin) {
          Matrix dr(1, 1, sign * dmargin * inv);
          if (!opt.train_encoder) {
            rm.head.backward(pooled[clip_idx], dr);
            return;
          }
          model::EncoderTrace trace;
          const Matrix h = rm.encoder.encode(clips[clip_idx], nullptr, &trace).back();
          const Matrix pool = model::mean_pool(h);
          const Matrix dpool = rm.head.backward(pool, dr);
          rm.encoder.backward(trace, model::mean_pool_backward(dpool, h.rows()), false);
        };
        double rc, rr;
        if (opt.train_encoder) {
          rc = reward_score(rm, clips[pr.chosen]);
          rr = reward_score(rm, clips[pr.rejected]);
        } else {
          rc = score_pooled(rm, pooled[pr.chosen]);
          rr = score_pooled(rm, pooled[pr.rejected]);
        }
        const double dmargin = -1.0 / (1.0 + std::exp(rc - rr));
        grad_for(pr.chosen, 1.0, dmargin);
        grad_for(pr.rejected, -1.0, dmargin);
      }
      model::sgd_update(trainable, opt.step_size);
    }
  }

  const auto scores = all_scores();
  rep.final_loss = mean_preference_loss(scores, pairs);
  rep.initial_loss = rep.loss_trace.empty() ? rep.final_loss : rep.loss_trace.front();
  rep.pairwise_accuracy = pairwise_accuracy(scores, pairs);
  return rep;
}

}  // namespace ulma::reward
