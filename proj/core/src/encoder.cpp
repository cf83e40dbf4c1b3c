#include "hmn/encoder.hpp"

#include <string>
#include <vector>

namespace hmn {
namespace {

// Row t of the result is the attention summary of `keys` (doubling as
// values) queried by row t of `queries`.
Tensor attend_rows(const AdditiveAttention& attn, const Tensor& queries,
                   const Tensor& keys) {
  const int steps = queries.extent(0);
  std::vector<Tensor> out;
  out.reserve(steps);
  for (int t = 0; t < steps; ++t) {
    out.push_back(attn.apply(row(queries, t), keys, keys).second);
  }
  return stack_rows(out);
}

void require_feature_matrix(const Tensor& x, const char* name, int width) {
  if (!x.defined()) {
    throw ShapeError(std::string(name) + " features are undefined");
  }
  if (x.rank() != 2 || x.extent(1) != width || x.extent(0) < 1) {
    throw ShapeError(std::string(name) + " features must be [rows," +
                     std::to_string(width) + "] with rows >= 1, got " +
                     shape_str(x.shape()));
  }
}

void require_same_steps(const Tensor& a, const Tensor& b, const char* what) {
  if (a.extent(0) != b.extent(0)) {
    throw ShapeError(std::string(what) + " must share the step count, got " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

HierarchicalEncoder::HierarchicalEncoder(ParameterRegistry& reg,
                                         const ModelConfig& config, Rng& rng)
    : content_bilstm(reg, "encoder.content_lstm", 2 * config.d_model,
                     config.d_model, rng),
      object_encoder(reg, "encoder.object_enc", config.d_model, config.heads,
                     config.enc_layers, rng),
      entity_queries(reg.create_normal("encoder.entity_queries",
                                       {config.n_queries, config.d_model}, 0.0,
                                       0.02, rng)),
      entity_decoder(reg, "encoder.entity_dec", config.d_model, config.heads,
                     config.dec_layers, rng),
      entity_proj(reg, "encoder.entity_proj", config.d_model, config.d_s, rng),
      motion_attn(reg, "encoder.motion_attn", config.d_model, config.d_model,
                  config.d_model, rng),
      action_bilstm(reg, "encoder.action_lstm", 2 * config.d_model, config.d_model,
                    rng),
      predicate_proj(reg, "encoder.predicate_proj", config.d_model, config.d_s, rng),
      ctx_action_attn(reg, "encoder.ctx_action_attn", config.d_model, config.d_model,
                      config.d_model, rng),
      ctx_entity_attn(reg, "encoder.ctx_entity_attn", config.d_model, config.d_model,
                      config.d_model, rng),
      global_bilstm(reg, "encoder.global_lstm", 3 * config.d_model, config.d_model,
                    rng),
      sentence_proj(reg, "encoder.sentence_proj", config.d_model, config.d_s, rng),
      d_model(config.d_model),
      d_s(config.d_s),
      n_queries(config.n_queries) {}

Tensor HierarchicalEncoder::video_content_vector(const Tensor& context,
                                                 const Tensor& motion) const {
  require_same_steps(context, motion, "context and motion");
  return pool_max_over_time(content_bilstm.encode(concat_cols({context, motion})));
}

std::pair<Tensor, Tensor> HierarchicalEncoder::encode_entities(
    const Tensor& objects, const Tensor& content) const {
  Tensor memory = object_encoder.encode(objects);
  Tensor selected = entity_decoder.decode(memory, entity_queries, content);
  return {selected, entity_proj.apply(selected)};
}

Tensor HierarchicalEncoder::motion_related_objects(const Tensor& motion,
                                                   const Tensor& entities) const {
  return attend_rows(motion_attn, motion, entities);
}

Tensor HierarchicalEncoder::encode_actions(const Tensor& motion,
                                           const Tensor& motion_entities) const {
  require_same_steps(motion, motion_entities, "motion and its object summaries");
  return action_bilstm.encode(concat_cols({motion, motion_entities}));
}

Tensor HierarchicalEncoder::predicate_head(const Tensor& actions) const {
  return predicate_proj.apply(pool_max_over_time(actions));
}

std::pair<Tensor, Tensor> HierarchicalEncoder::context_related_features(
    const Tensor& context, const Tensor& actions, const Tensor& entities) const {
  return {attend_rows(ctx_action_attn, context, actions),
          attend_rows(ctx_entity_attn, context, entities)};
}

Tensor HierarchicalEncoder::encode_global(const Tensor& context,
                                          const Tensor& ctx_actions,
                                          const Tensor& ctx_entities) const {
  require_same_steps(context, ctx_actions, "context and its action summaries");
  require_same_steps(context, ctx_entities, "context and its entity summaries");
  return global_bilstm.encode(concat_cols({context, ctx_actions, ctx_entities}));
}

Tensor HierarchicalEncoder::sentence_head(const Tensor& global_features) const {
  return sentence_proj.apply(pool_max_over_time(global_features));
}

EncodedVideo HierarchicalEncoder::encode_video(const VideoFeatures& features,
                                               const AblationConfig& ablation) const {
  require_feature_matrix(features.context, "context", d_model);
  require_feature_matrix(features.motion, "motion", d_model);
  require_feature_matrix(features.objects, "object", d_model);
  require_same_steps(features.context, features.motion, "context and motion");
  const int steps = features.context.extent(0);

  EncodedVideo out;
  out.content = video_content_vector(features.context, features.motion);

  if (ablation.remove_entity) {
    out.entities = Tensor::zeros({n_queries, d_model});
    out.entity_embeds = Tensor::zeros({n_queries, d_s});
  } else if (ablation.all_objects) {
    out.entities = features.objects;
    out.entity_embeds = entity_proj.apply(features.objects);
  } else {
    Tensor query_shift =
        ablation.no_content_query ? Tensor::zeros({d_model}) : out.content;
    auto selected = encode_entities(features.objects, query_shift);
    out.entities = selected.first;
    out.entity_embeds = selected.second;
  }

  if (ablation.remove_predicate) {
    out.actions = Tensor::zeros({steps, d_model});
    out.predicate_embed = Tensor::zeros({d_s});
  } else {
    Tensor object_summaries =
        (ablation.cut_e2p || ablation.remove_entity)
            ? Tensor::zeros({steps, d_model})
            : motion_related_objects(features.motion, out.entities);
    out.actions = encode_actions(features.motion, object_summaries);
    out.predicate_embed = predicate_head(out.actions);
  }

  if (ablation.remove_sentence) {
    out.global_features = Tensor::zeros({steps, d_model});
    out.sentence_embed = Tensor::zeros({d_s});
  } else {
    Tensor action_summaries =
        (ablation.cut_p2s || ablation.remove_predicate)
            ? Tensor::zeros({steps, d_model})
            : attend_rows(ctx_action_attn, features.context, out.actions);
    Tensor entity_summaries =
        (ablation.cut_e2s || ablation.remove_entity)
            ? Tensor::zeros({steps, d_model})
            : attend_rows(ctx_entity_attn, features.context, out.entities);
    out.global_features =
        encode_global(features.context, action_summaries, entity_summaries);
    out.sentence_embed = sentence_head(out.global_features);
  }
  return out;
}

}  // namespace hmn
