#pragma once

// LSTM caption generator. Each step re-attends over the encoder's four
// feature families (global, action, entity, entity-embedding) with the
// previous hidden state as query, fuses the summaries with their pooled
// linguistic embeddings, and feeds [fused; previous word embedding] through
// an LSTM cell into a softmax over the vocabulary. Greedy and beam decoding
// share the same step function.

#include <span>
#include <utility>
#include <vector>

#include "hmn/config.hpp"
#include "hmn/encoder.hpp"
#include "hmn/layers.hpp"
#include "hmn/rng.hpp"
#include "hmn/tensor.hpp"

namespace hmn {

struct DecoderState {
  Tensor h;   // [hidden]
  Tensor c;   // [hidden]
  int t = 1;  // 1-based index of the word about to be produced
};

struct WordDistribution {
  Tensor probs;  // [vocab], nonnegative, sums to 1
};

// Per-step fused context: each piece is an attention summary over one
// encoder feature family concatenated with that family's pooled linguistic
// embedding, all width d_model + d_s.
struct FusedContext {
  Tensor global_ctx;  // [attn over G ; sentence embed]
  Tensor action_ctx;  // [attn over A ; predicate embed]
  Tensor entity_ctx;  // [attn over E ; attn over E-bar]
};

struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;  // sum of word log-probabilities, <= 0
  DecoderState state;     // state for producing the next word
  bool finished = false;  // iff tokens ends with the end marker
};

struct CaptionDecoder {
  Tensor word_embed;  // [vocab, d_w]
  AdditiveAttention global_attn;
  AdditiveAttention action_attn;
  AdditiveAttention entity_attn;
  AdditiveAttention entity_embed_attn;
  LstmCell cell;     // input [3*(d_model+d_s) + d_w]
  Linear out_proj;   // hidden -> vocab
  int d_model = 0;
  int d_s = 0;
  int d_w = 0;
  int hidden = 0;
  int vocab = 0;

  CaptionDecoder() = default;
  // `vocab` is the resolved vocabulary size (config value 0 means "from
  // dataset", which callers resolve before constructing).
  CaptionDecoder(ParameterRegistry& reg, const ModelConfig& config, int vocab,
                 Rng& rng);

  DecoderState initial_state() const;

  // Attention summaries over encoded.{global_features, actions, entities,
  // entity_embeds}, each with its own parameters, all queried by h_prev.
  FusedContext fuse_step(const Tensor& h_prev, const EncodedVideo& encoded) const;

  // One LSTM step on [fused; word_embed(prev_word_id)]; the distribution is
  // softmax(FC(h')). Throws ValueError on an out-of-vocabulary id.
  std::pair<DecoderState, WordDistribution> decode_step(
      int prev_word_id, const DecoderState& state, const FusedContext& fused) const;
};

// Sum over steps of -log P_t[token_t]. Throws ShapeError when the step and
// token counts differ, ValueError on an out-of-range token.
Tensor xent_loss(std::span<const WordDistribution> steps,
                 std::span<const int> tokens);

// KL(q || p) for one step, gradient flowing into p only. Both distributions
// must be strictly positive; zero entries throw ValueError.
Tensor soft_target_loss(const WordDistribution& p, const std::vector<double>& q);

// Argmax decoding from the begin marker: stops at the end marker (included
// in the result) or after max_len tokens; argmax ties break to the lowest id.
std::vector<int> greedy_decode(const CaptionDecoder& decoder,
                               const EncodedVideo& encoded, int begin_id,
                               int end_id, int max_len = 20);

// Keeps the `beam` highest log-probability hypotheses per step, setting
// finished ones aside; answers with the highest length-normalized
// (sum/length) log-probability, ties broken lexicographically by token ids.
// Throws ValueError when beam < 1.
std::vector<int> beam_search(const CaptionDecoder& decoder,
                             const EncodedVideo& encoded, int begin_id,
                             int end_id, int beam = 5, int max_len = 20);

// Teacher-forced sum of log P_t[tokens_t] for an arbitrary sequence.
double sequence_log_prob(const CaptionDecoder& decoder, const EncodedVideo& encoded,
                         int begin_id, std::span<const int> tokens);

}  // namespace hmn
