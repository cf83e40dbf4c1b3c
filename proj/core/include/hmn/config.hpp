#pragma once

// Model and training configuration, including the ablation switches that
// remove whole modules or sever individual cross-module links. Configs load
// from JSON; unknown keys are rejected so a misspelled switch cannot
// silently fall back to the full model.

#include <cstdint>
#include <string>

#include "hmn/error.hpp"

namespace hmn {

// All switches default to off; the default-constructed value is the full
// model. A severed link replaces the attention summary flowing across it
// with a zero tensor of matching shape, so downstream widths never change.
struct AblationConfig {
  bool remove_entity = false;     // drop the entity module: its loss and every feature it feeds
  bool remove_predicate = false;  // likewise for the action/predicate module
  bool remove_sentence = false;   // likewise for the global/sentence module
  bool all_objects = false;       // skip principal-object selection; pass all object rows through
  bool cut_e2p = false;           // zero the object summaries feeding the action encoder
  bool cut_e2s = false;           // zero the object summaries feeding the global encoder
  bool cut_p2s = false;           // zero the action summaries feeding the global encoder
  bool no_content_query = false;  // entity queries without the added video content vector

  bool operator==(const AblationConfig&) const = default;
};

struct ModelConfig {
  int d_model = 512;        // shared visual feature width after input projection
  int d_s = 768;            // linguistic embedding width
  int d_w = 300;            // word embedding width
  int n_queries = 8;        // entity query count N
  int heads = 8;            // attention heads in the entity transformer
  int enc_layers = 2;       // object transformer encoder depth
  int dec_layers = 2;       // entity transformer decoder depth
  int decoder_hidden = 512; // caption LSTM state width
  int max_len = 20;         // generated caption length cap (excluding the end marker)
  int vocab_size = 0;       // 0 = take from the dataset vocabulary at build time
  int raw_context_dim = 2048;  // on-disk feature widths before input projection
  int raw_motion_dim = 2048;
  int raw_object_dim = 2048;
  AblationConfig ablation;

  void validate() const;  // throws ConfigError on out-of-range fields
  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  double lambda_e = 0.6;
  double lambda_p = 0.3;
  double lambda_s = 1.0;
  double lambda_soft = 0.5;
  double learning_rate = 1e-4;
  double clip_norm = 5.0;  // global gradient-norm ceiling; <= 0 disables clipping
  int batch_size = 64;
  int epochs = 20;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  bool operator==(const RunConfig&) const = default;
};

// Parses {"model": {...}, "train": {...}}. Both sections and every field are
// optional (defaults apply), but unknown keys or wrong value types raise
// ConfigError naming the offending key.
RunConfig parse_run_config(const std::string& json_text);

// Serializes every field; parse_run_config(run_config_to_json(c)) == c.
std::string run_config_to_json(const RunConfig& config);

// Reads and parses a config file; IoError if unreadable.
RunConfig load_run_config(const std::string& path);

}  // namespace hmn
