#pragma once

#include <string>
#include <vector>

#include "ulma/model/encoder.hpp"

namespace ulma::model {

struct EmbeddingRow {
  std::string clip_id;
  std::size_t frame = 0;
  std::vector<double> values;  // d_model
};

/// Hidden states at `layer`, one row per frame, clips in input order.
inline std::vector<EmbeddingRow> export_embeddings(const EncoderModel& m, std::span<const AudioClip> clips,
                                                   std::size_t layer) {
  if (layer >= m.blocks.size()) throw Error(Errc::LayerOutOfRange, "layer " + std::to_string(layer) + " out of range");
  std::vector<EmbeddingRow> rows;
  for (const auto& clip : clips) {
    const Matrix h = m.hidden(clip, layer);
    for (std::size_t t = 0; t < h.rows(); ++t)
      rows.push_back({clip.source_id, t, std::vector<double>(h.row(t).begin(), h.row(t).end())});
  }
  return rows;
}

}  // namespace ulma::model
