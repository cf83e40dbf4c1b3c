#include "hmn/model.hpp"

#include <string>

#include "hmn/rng.hpp"

namespace hmn {

ModelConfig resolve_model_config(ModelConfig config, int vocab_size,
                                 int raw_context, int raw_motion,
                                 int raw_objects) {
  if (vocab_size < 2) {
    throw ConfigError("a vocabulary needs at least the two marker tokens, got " +
                      std::to_string(vocab_size));
  }
  if (config.vocab_size != 0 && config.vocab_size != vocab_size) {
    throw ConfigError("config expects a vocabulary of " +
                      std::to_string(config.vocab_size) + " words but the dataset has " +
                      std::to_string(vocab_size));
  }
  if (raw_context < 1 || raw_motion < 1 || raw_objects < 1) {
    throw ConfigError("raw feature widths must be positive");
  }
  config.vocab_size = vocab_size;
  config.raw_context_dim = raw_context;
  config.raw_motion_dim = raw_motion;
  config.raw_object_dim = raw_objects;
  config.validate();
  return config;
}

HmnModel::HmnModel(const ModelConfig& model_config, std::uint64_t init_seed)
    : config(model_config) {
  config.validate();
  if (config.vocab_size < 2) {
    throw ConfigError("model construction needs a resolved vocab_size, got " +
                      std::to_string(config.vocab_size));
  }
  Rng rng(init_seed);
  context_proj = Linear(reg, "input.context_proj", config.raw_context_dim,
                        config.d_model, rng);
  motion_proj =
      Linear(reg, "input.motion_proj", config.raw_motion_dim, config.d_model, rng);
  object_proj =
      Linear(reg, "input.object_proj", config.raw_object_dim, config.d_model, rng);
  encoder = HierarchicalEncoder(reg, config, rng);
  decoder = CaptionDecoder(reg, config, config.vocab_size, rng);
}

VideoFeatures HmnModel::project(const Tensor& context, const Tensor& motion,
                                const Tensor& objects) const {
  VideoFeatures features;
  features.context = context_proj.apply(context);
  features.motion = motion_proj.apply(motion);
  features.objects = object_proj.apply(objects);
  return features;
}

EncodedVideo HmnModel::encode(const VideoFeatures& features) const {
  return encoder.encode_video(features, config.ablation);
}

EncodedVideo HmnModel::encode_raw(const Tensor& context, const Tensor& motion,
                                  const Tensor& objects) const {
  return encode(project(context, motion, objects));
}

std::vector<int> HmnModel::caption_greedy(const EncodedVideo& encoded) const {
  return greedy_decode(decoder, encoded, kBeginTokenId, kEndTokenId,
                       config.max_len);
}

std::vector<int> HmnModel::caption_beam(const EncodedVideo& encoded,
                                        int beam) const {
  return beam_search(decoder, encoded, kBeginTokenId, kEndTokenId, beam,
                     config.max_len);
}

}  // namespace hmn
