#pragma once

#include <span>

#include "ulma/model/encoder.hpp"
#include "ulma/units.hpp"

namespace ulma::units {

/// Stage-2 units: k-means over the encoder's hidden states at `layer` for every frame of every clip.
inline Codebook refit_from_hidden(const model::EncoderModel& m, std::span<const signal::AudioClip> clips,
                                  std::size_t layer, std::size_t k, std::uint64_t seed,
                                  const KMeansOptions& opt = {}) {
  if (layer >= m.blocks.size()) throw Error(Errc::LayerOutOfRange, "layer " + std::to_string(layer) + " out of range");
  std::vector<Matrix> parts;
  std::size_t total = 0;
  for (const auto& clip : clips) {
    parts.push_back(m.hidden(clip, layer));
    total += parts.back().rows();
  }
  if (total < k) throw Error(Errc::TooFewPoints, std::to_string(total) + " hidden frames for k=" + std::to_string(k));
  Matrix all(total, m.config.d_model);
  std::size_t r = 0;
  for (const auto& p : parts)
    for (std::size_t t = 0; t < p.rows(); ++t, ++r) std::copy(p.row(t).begin(), p.row(t).end(), all.row(r).begin());
  Codebook cb = kmeans_fit(all, k, seed, opt);
  cb.stage = 2;
  cb.layer = static_cast<int>(layer);
  return cb;
}

}  // namespace ulma::units
