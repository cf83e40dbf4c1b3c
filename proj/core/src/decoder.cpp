#include "hmn/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hmn {
namespace {

void require_word_id(int id, int vocab) {
  if (id < 0 || id >= vocab) {
    throw ValueError("word id " + std::to_string(id) +
                     " is outside the vocabulary of size " + std::to_string(vocab));
  }
}

// Ordering used everywhere a set of hypotheses is ranked: higher score first,
// score ties broken by lexicographically smaller token sequence.
bool better(double score_a, const std::vector<int>& tokens_a, double score_b,
            const std::vector<int>& tokens_b) {
  if (score_a != score_b) return score_a > score_b;
  return tokens_a < tokens_b;
}

int checked_vocab(int vocab) {
  if (vocab < 2) {
    throw ConfigError("vocabulary size must be at least 2, got " +
                      std::to_string(vocab));
  }
  return vocab;
}

}  // namespace

CaptionDecoder::CaptionDecoder(ParameterRegistry& reg, const ModelConfig& config,
                               int vocab, Rng& rng)
    : word_embed(reg.create("decoder.word_embed", {checked_vocab(vocab), config.d_w},
                            config.d_w, rng)),
      global_attn(reg, "decoder.global_attn", config.decoder_hidden, config.d_model,
                  config.d_model, rng),
      action_attn(reg, "decoder.action_attn", config.decoder_hidden, config.d_model,
                  config.d_model, rng),
      entity_attn(reg, "decoder.entity_attn", config.decoder_hidden, config.d_model,
                  config.d_model, rng),
      entity_embed_attn(reg, "decoder.entity_embed_attn", config.decoder_hidden,
                        config.d_s, config.d_s, rng),
      cell(reg, "decoder.cell", 3 * (config.d_model + config.d_s) + config.d_w,
           config.decoder_hidden, rng),
      out_proj(reg, "decoder.out_proj", config.decoder_hidden, vocab, rng),
      d_model(config.d_model),
      d_s(config.d_s),
      d_w(config.d_w),
      hidden(config.decoder_hidden),
      vocab(vocab) {}

DecoderState CaptionDecoder::initial_state() const {
  return DecoderState{Tensor::zeros({hidden}), Tensor::zeros({hidden}), 1};
}

FusedContext CaptionDecoder::fuse_step(const Tensor& h_prev,
                                       const EncodedVideo& encoded) const {
  Tensor g = global_attn.apply(h_prev, encoded.global_features,
                               encoded.global_features).second;
  Tensor a = action_attn.apply(h_prev, encoded.actions, encoded.actions).second;
  Tensor e = entity_attn.apply(h_prev, encoded.entities, encoded.entities).second;
  Tensor eb = entity_embed_attn.apply(h_prev, encoded.entity_embeds,
                                      encoded.entity_embeds).second;
  return FusedContext{concat({g, encoded.sentence_embed}),
                      concat({a, encoded.predicate_embed}), concat({e, eb})};
}

std::pair<DecoderState, WordDistribution> CaptionDecoder::decode_step(
    int prev_word_id, const DecoderState& state, const FusedContext& fused) const {
  require_word_id(prev_word_id, vocab);
  Tensor x = concat({fused.global_ctx, fused.action_ctx, fused.entity_ctx,
                     row(word_embed, prev_word_id)});
  auto [h, c] = cell.step(x, state.h, state.c);
  return {DecoderState{h, c, state.t + 1},
          WordDistribution{softmax(out_proj.apply(h))}};
}

Tensor xent_loss(std::span<const WordDistribution> steps,
                 std::span<const int> tokens) {
  if (steps.size() != tokens.size()) {
    throw ShapeError("cross-entropy needs one distribution per token, got " +
                     std::to_string(steps.size()) + " distributions for " +
                     std::to_string(tokens.size()) + " tokens");
  }
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t t = 0; t < steps.size(); ++t) {
    require_word_id(tokens[t], steps[t].probs.extent(0));
    total = add(total, log(pick(steps[t].probs, tokens[t])));
  }
  return scale(total, -1.0);
}

Tensor soft_target_loss(const WordDistribution& p, const std::vector<double>& q) {
  const Tensor& probs = p.probs;
  if (probs.rank() != 1 || static_cast<std::size_t>(probs.extent(0)) != q.size()) {
    throw ShapeError("soft-target loss needs equal-length distributions, got " +
                     shape_str(probs.shape()) + " vs " + std::to_string(q.size()));
  }
  double entropy_term = 0.0;
  for (std::size_t d = 0; d < q.size(); ++d) {
    if (q[d] <= 0.0 || probs.at(static_cast<int>(d)) <= 0.0) {
      throw ValueError("soft-target loss needs strictly positive distributions; "
                       "entry " + std::to_string(d) + " is not");
    }
    entropy_term += q[d] * std::log(q[d]);
  }
  Tensor q_const = Tensor::from({static_cast<int>(q.size())}, std::vector<double>(q));
  return sub(Tensor::scalar(entropy_term), dot(q_const, log(probs)));
}

std::vector<int> greedy_decode(const CaptionDecoder& decoder,
                               const EncodedVideo& encoded, int begin_id,
                               int end_id, int max_len) {
  NoGradGuard ng;
  DecoderState state = decoder.initial_state();
  std::vector<int> out;
  int prev = begin_id;
  while (static_cast<int>(out.size()) < max_len) {
    FusedContext fused = decoder.fuse_step(state.h, encoded);
    auto [next_state, dist] = decoder.decode_step(prev, state, fused);
    int best = 0;
    for (int d = 1; d < decoder.vocab; ++d) {
      if (dist.probs.at(d) > dist.probs.at(best)) best = d;
    }
    out.push_back(best);
    if (best == end_id) break;
    state = next_state;
    prev = best;
  }
  return out;
}

std::vector<int> beam_search(const CaptionDecoder& decoder,
                             const EncodedVideo& encoded, int begin_id, int end_id,
                             int beam, int max_len) {
  if (beam < 1) {
    throw ValueError("beam width must be at least 1, got " + std::to_string(beam));
  }
  NoGradGuard ng;
  std::vector<Hypothesis> active{
      Hypothesis{{}, 0.0, decoder.initial_state(), false}};
  std::vector<Hypothesis> finished;

  for (int step = 0; step < max_len && !active.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    candidates.reserve(active.size() * decoder.vocab);
    for (const Hypothesis& hyp : active) {
      int prev = hyp.tokens.empty() ? begin_id : hyp.tokens.back();
      FusedContext fused = decoder.fuse_step(hyp.state.h, encoded);
      auto [next_state, dist] = decoder.decode_step(prev, hyp.state, fused);
      for (int d = 0; d < decoder.vocab; ++d) {
        Hypothesis child{hyp.tokens, hyp.log_prob + std::log(dist.probs.at(d)),
                         next_state, d == end_id};
        child.tokens.push_back(d);
        candidates.push_back(std::move(child));
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Hypothesis& a, const Hypothesis& b) {
                return better(a.log_prob, a.tokens, b.log_prob, b.tokens);
              });
    if (static_cast<int>(candidates.size()) > beam) candidates.resize(beam);
    active.clear();
    for (Hypothesis& cand : candidates) {
      (cand.finished ? finished : active).push_back(std::move(cand));
    }
  }
  // Anything still active at the cap competes as-is.
  for (Hypothesis& hyp : active) finished.push_back(std::move(hyp));

  const Hypothesis* best = nullptr;
  double best_score = 0.0;
  for (const Hypothesis& hyp : finished) {
    double score = hyp.log_prob / static_cast<double>(hyp.tokens.size());
    if (best == nullptr || better(score, hyp.tokens, best_score, best->tokens)) {
      best = &hyp;
      best_score = score;
    }
  }
  return best->tokens;
}

double sequence_log_prob(const CaptionDecoder& decoder, const EncodedVideo& encoded,
                         int begin_id, std::span<const int> tokens) {
  NoGradGuard ng;
  DecoderState state = decoder.initial_state();
  int prev = begin_id;
  double total = 0.0;
  for (int token : tokens) {
    FusedContext fused = decoder.fuse_step(state.h, encoded);
    auto [next_state, dist] = decoder.decode_step(prev, state, fused);
    require_word_id(token, decoder.vocab);
    total += std::log(dist.probs.at(token));
    state = next_state;
    prev = token;
  }
  return total;
}

}  // namespace hmn
