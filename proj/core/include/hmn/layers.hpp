#pragma once

// Parameterized building blocks: fully connected projection, additive
// attention, LSTM cell, bidirectional LSTM encoder, and transformer
// encoder/decoder stacks without positional encodings.

#include <string>
#include <utility>
#include <vector>

#include "hmn/error.hpp"
#include "hmn/rng.hpp"
#include "hmn/tensor.hpp"

namespace hmn {

// Ordered name -> tensor table. Names are unique, path-like, and determine
// checkpoint identity; insertion order fixes optimizer slot order.
class ParameterRegistry {
 public:
  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
  Tensor create(const std::string& name, Shape shape, int fan_in, Rng& rng);
  Tensor create_normal(const std::string& name, Shape shape, double mean,
                       double stddev, Rng& rng);
  Tensor create_const(const std::string& name, Shape shape, double value);

  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t total_size() const;
  void zero_all_grads();

 private:
  Tensor adopt(const std::string& name, Tensor t);

  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Affine map along the trailing axis: y = xW + b. Accepts rank-1 (d_in)
// or rank-2 (m x d_in) input. `with_bias = false` leaves b undefined and
// the map purely linear.
struct Linear {
  Tensor W;  // [d_in, d_out]
  Tensor b;  // [d_out], optional

  Linear() = default;
  Linear(ParameterRegistry& reg, const std::string& prefix, int d_in, int d_out,
         Rng& rng, bool with_bias = true);
  Tensor apply(const Tensor& x) const;
  int d_in() const { return W.extent(0); }
  int d_out() const { return W.extent(1); }
};

// Single-query additive attention: logits l_k = w . tanh(q W + k_k U + b),
// weights = softmax(l), summary = sum_k weight_k * value_k.
struct AdditiveAttention {
  Tensor W;  // [d_q, d_h]
  Tensor U;  // [d_k, d_h]
  Tensor b;  // [d_h]
  Tensor w;  // [d_h]

  AdditiveAttention() = default;
  AdditiveAttention(ParameterRegistry& reg, const std::string& prefix, int d_q,
                    int d_k, int d_h, Rng& rng);
  // query: [d_q], keys: [K, d_k], values: [K, d_v] -> ({K} weights, {d_v} summary)
  std::pair<Tensor, Tensor> apply(const Tensor& query, const Tensor& keys,
                                  const Tensor& values) const;
};

// One LSTM step. Gate order in the packed weight columns: input, forget,
// cell candidate, output. The forget-gate bias starts at exactly 1.0.
struct LstmCell {
  Tensor W;  // [d_in, 4h]
  Tensor U;  // [h, 4h]
  Tensor b;  // [4h]
  int hidden = 0;

  LstmCell() = default;
  LstmCell(ParameterRegistry& reg, const std::string& prefix, int d_in, int hidden,
           Rng& rng);
  // x: [d_in], h/c: [hidden] -> (h', c')
  std::pair<Tensor, Tensor> step(const Tensor& x, const Tensor& h,
                                 const Tensor& c) const;
  Tensor zero_state() const { return Tensor::zeros({hidden}); }
};

// Bidirectional LSTM over a T x d_in sequence; output row t is the
// concatenation [forward_t ; backward_t], each half d_model/2 wide.
struct BiLstm {
  LstmCell fwd;
  LstmCell bwd;
  int d_model = 0;

  BiLstm() = default;
  BiLstm(ParameterRegistry& reg, const std::string& prefix, int d_in, int d_model,
         Rng& rng);
  Tensor encode(const Tensor& X) const;  // [T, d_in] -> [T, d_model]
};

// Scaled dot-product attention with h heads, no masking, no positions.
struct MultiHeadAttention {
  Linear q_proj, k_proj, v_proj, out_proj;
  int heads = 0;
  int d_model = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterRegistry& reg, const std::string& prefix, int d_model,
                     int heads, Rng& rng);
  // queries: [M, d_model], keys_values: [L, d_model] -> [M, d_model]
  Tensor apply(const Tensor& queries, const Tensor& keys_values) const;
  // Per-head attention weight matrices [M, L]; rows are convex weights.
  std::vector<Tensor> attention_weights(const Tensor& queries,
                                        const Tensor& keys_values) const;
};

// Position-wise feed-forward with the conventional 4x inner width.
struct FeedForward {
  Linear in;
  Linear out;

  FeedForward() = default;
  FeedForward(ParameterRegistry& reg, const std::string& prefix, int d_model,
              Rng& rng);
  Tensor apply(const Tensor& x) const;  // [M, d_model] -> [M, d_model]
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  LayerNormParams() = default;
  LayerNormParams(ParameterRegistry& reg, const std::string& prefix, int width);
  Tensor apply(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

// Pre-normalization encoder layer: x += attn(LN(x)); x += ff(LN(x)).
struct TransformerEncoderLayer {
  MultiHeadAttention self_attn;
  FeedForward ff;
  LayerNormParams ln1, ln2;

  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(ParameterRegistry& reg, const std::string& prefix,
                          int d_model, int heads, Rng& rng);
  Tensor apply(const Tensor& x) const;
};

struct TransformerEncoder {
  std::vector<TransformerEncoderLayer> layers;
  LayerNormParams final_ln;

  TransformerEncoder() = default;
  TransformerEncoder(ParameterRegistry& reg, const std::string& prefix, int d_model,
                     int heads, int num_layers, Rng& rng);
  Tensor encode(const Tensor& O) const;  // [L, d_model] -> [L, d_model]
};

// Pre-normalization decoder layer: slot self-attention, cross-attention
// into the encoded memory, then feed-forward. No causal masking — the
// queries form a set, not a sequence.
struct TransformerDecoderLayer {
  MultiHeadAttention self_attn;
  MultiHeadAttention cross_attn;
  FeedForward ff;
  LayerNormParams ln1, ln2, ln3;

  TransformerDecoderLayer() = default;
  TransformerDecoderLayer(ParameterRegistry& reg, const std::string& prefix,
                          int d_model, int heads, Rng& rng);
  Tensor apply(const Tensor& x, const Tensor& memory) const;
};

struct TransformerDecoder {
  std::vector<TransformerDecoderLayer> layers;
  LayerNormParams final_ln;

  TransformerDecoder() = default;
  TransformerDecoder(ParameterRegistry& reg, const std::string& prefix, int d_model,
                     int heads, int num_layers, Rng& rng);
  // Slot inputs are queries[i] + content (elementwise); the sums feed only
  // the first layer.
  Tensor decode(const Tensor& memory, const Tensor& queries,
                const Tensor& content) const;
};

}  // namespace hmn
