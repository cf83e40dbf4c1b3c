#pragma once

// Three-level video encoder. An entity stage selects the few object rows
// worth talking about (transformer queries over the object set, conditioned
// on a whole-video content vector), a predicate stage encodes motion in the
// context of those objects, and a sentence stage encodes keyframe context in
// the context of both. Each stage owns a language head projecting into the
// d_s linguistic space, trained against phrase embeddings with cosine
// distance.

#include <utility>

#include "hmn/config.hpp"
#include "hmn/layers.hpp"
#include "hmn/rng.hpp"
#include "hmn/tensor.hpp"

namespace hmn {

// Per-video inputs after projection to d_model: keyframe context rows,
// clip motion rows (same count T), and detected-object rows (count L).
struct VideoFeatures {
  Tensor context;  // [T, d_model]
  Tensor motion;   // [T, d_model]
  Tensor objects;  // [L, d_model]
};

struct EncodedVideo {
  Tensor content;          // v: whole-video summary [d_model]
  Tensor entities;         // E: selected object features [N, d_model] ([L, d_model] when selection is ablated)
  Tensor entity_embeds;    // E-bar: linguistic projections of E rows [rows(E), d_s]
  Tensor actions;          // A: object-aware motion encoding [T, d_model]
  Tensor predicate_embed;  // a-bar: linguistic projection of pooled A [d_s]
  Tensor global_features;  // G: action- and entity-aware context encoding [T, d_model]
  Tensor sentence_embed;   // g-bar: linguistic projection of pooled G [d_s]
};

struct HierarchicalEncoder {
  BiLstm content_bilstm;            // over per-step [context; motion]
  TransformerEncoder object_encoder;
  Tensor entity_queries;            // [N, d_model] learned slots
  TransformerDecoder entity_decoder;
  Linear entity_proj;               // d_model -> d_s language head
  AdditiveAttention motion_attn;    // motion row attends over entity rows
  BiLstm action_bilstm;             // over per-step [motion; object summary]
  Linear predicate_proj;            // d_model -> d_s language head
  AdditiveAttention ctx_action_attn;  // context row attends over action rows
  AdditiveAttention ctx_entity_attn;  // context row attends over entity rows
  BiLstm global_bilstm;             // over per-step [context; action summary; entity summary]
  Linear sentence_proj;             // d_model -> d_s language head
  int d_model = 0;
  int d_s = 0;
  int n_queries = 0;

  HierarchicalEncoder() = default;
  HierarchicalEncoder(ParameterRegistry& reg, const ModelConfig& config, Rng& rng);

  // v = column-max over the BiLSTM encoding of per-step [c_t; m_t].
  Tensor video_content_vector(const Tensor& context, const Tensor& motion) const;

  // Runs the object transformer: encode the object set, then decode N query
  // slots (each shifted by `content`) against it. Returns (E, E-bar).
  std::pair<Tensor, Tensor> encode_entities(const Tensor& objects,
                                            const Tensor& content) const;

  // Row t = additive-attention summary of `entities` queried by motion row t.
  Tensor motion_related_objects(const Tensor& motion, const Tensor& entities) const;

  // A = BiLSTM over per-step [m_t; object summary_t].
  Tensor encode_actions(const Tensor& motion, const Tensor& motion_entities) const;

  // a-bar = FC(column-max over A).
  Tensor predicate_head(const Tensor& actions) const;

  // Row t of the first result summarizes `actions` queried by context row t;
  // row t of the second summarizes `entities` the same way, with its own
  // attention parameters.
  std::pair<Tensor, Tensor> context_related_features(const Tensor& context,
                                                     const Tensor& actions,
                                                     const Tensor& entities) const;

  // G = BiLSTM over per-step [c_t; action summary_t; entity summary_t].
  Tensor encode_global(const Tensor& context, const Tensor& ctx_actions,
                       const Tensor& ctx_entities) const;

  // g-bar = FC(column-max over G).
  Tensor sentence_head(const Tensor& global_features) const;

  // Full chain, honoring ablation switches. A removed module leaves zero
  // tensors of the default shapes in its fields and zero summaries wherever
  // its features feed; a cut link zeroes just that link's summaries. With
  // every switch off this is exactly the chain of the methods above.
  EncodedVideo encode_video(const VideoFeatures& features,
                            const AblationConfig& ablation = {}) const;
};

// 1 - cosine(predicted embedding, target phrase embedding), in [0, 2].
// Throws ValueError when either side has zero norm.
inline Tensor predicate_loss(const Tensor& predicate_embed, const Tensor& target) {
  return cosine_distance(predicate_embed, target);
}

inline Tensor sentence_loss(const Tensor& sentence_embed, const Tensor& target) {
  return cosine_distance(sentence_embed, target);
}

}  // namespace hmn
