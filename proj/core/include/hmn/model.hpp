#pragma once

// The full captioning model: per-family input projections lifting raw
// features into the shared d_model space, the hierarchical encoder, and the
// caption decoder, all registered in one parameter registry in a fixed order
// so initialization is a pure function of (config, seed).

#include <cstdint>
#include <vector>

#include "hmn/config.hpp"
#include "hmn/decoder.hpp"
#include "hmn/encoder.hpp"
#include "hmn/layers.hpp"
#include "hmn/tensor.hpp"

namespace hmn {

// Marker ids every dataset vocabulary pins at the same positions.
inline constexpr int kBeginTokenId = 0;
inline constexpr int kEndTokenId = 1;

// Fills in the data-determined fields of a model config: raw feature widths
// always come from the dataset, and vocab_size 0 means "adopt the dataset
// vocabulary". A nonzero vocab_size that disagrees is a ConfigError — the
// output layer's meaning depends on the exact id mapping.
ModelConfig resolve_model_config(ModelConfig config, int vocab_size,
                                 int raw_context, int raw_motion,
                                 int raw_objects);

struct HmnModel {
  ModelConfig config;  // resolved: vocab_size > 0 and raw widths final
  ParameterRegistry reg;
  Linear context_proj;  // raw_context_dim -> d_model
  Linear motion_proj;   // raw_motion_dim -> d_model
  Linear object_proj;   // raw_object_dim -> d_model
  HierarchicalEncoder encoder;
  CaptionDecoder decoder;

  HmnModel() = default;
  HmnModel(const ModelConfig& config, std::uint64_t init_seed);

  // Lifts raw per-family feature rows into the shared width.
  VideoFeatures project(const Tensor& context, const Tensor& motion,
                        const Tensor& objects) const;

  EncodedVideo encode(const VideoFeatures& features) const;
  EncodedVideo encode_raw(const Tensor& context, const Tensor& motion,
                          const Tensor& objects) const;

  // Decoding with the pinned marker ids and the configured length cap.
  std::vector<int> caption_greedy(const EncodedVideo& encoded) const;
  std::vector<int> caption_beam(const EncodedVideo& encoded, int beam) const;
};

}  // namespace hmn
