#include "hmn/layers.hpp"

#include <cmath>

namespace hmn {

// --- ParameterRegistry ------------------------------------------------------

Tensor ParameterRegistry::adopt(const std::string& name, Tensor t) {
  if (contains(name)) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  t.set_requires_grad(true);
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParameterRegistry::create(const std::string& name, Shape shape, int fan_in,
                                 Rng& rng) {
  if (fan_in <= 0) throw ConfigError("parameter '" + name + "': fan_in must be positive");
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(shape);
  for (double& x : t.raw_values()) x = rng.uniform(-bound, bound);
  return adopt(name, t);
}

Tensor ParameterRegistry::create_normal(const std::string& name, Shape shape,
                                        double mean, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  for (double& x : t.raw_values()) x = rng.normal(mean, stddev);
  return adopt(name, t);
}

Tensor ParameterRegistry::create_const(const std::string& name, Shape shape,
                                       double value) {
  return adopt(name, Tensor::full(shape, value));
}

bool ParameterRegistry::contains(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return true;
  }
  return false;
}

const Tensor& ParameterRegistry::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ConfigError("unknown parameter name '" + name + "'");
}

std::vector<Tensor> ParameterRegistry::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [n, t] : entries_) out.push_back(t);
  return out;
}

std::size_t ParameterRegistry::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += static_cast<std::size_t>(t.size());
  return n;
}

void ParameterRegistry::zero_all_grads() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

// --- Linear -----------------------------------------------------------------

Linear::Linear(ParameterRegistry& reg, const std::string& prefix, int d_in,
               int d_out, Rng& rng, bool with_bias) {
  W = reg.create(prefix + ".W", {d_in, d_out}, d_in, rng);
  if (with_bias) b = reg.create(prefix + ".b", {d_out}, d_in, rng);
}

Tensor Linear::apply(const Tensor& x) const {
  if (x.rank() == 1) {
    if (x.extent(0) != d_in()) {
      throw ShapeError("linear: input width " + shape_str(x.shape()) +
                       " does not match weight " + shape_str(W.shape()));
    }
    Tensor y = reshape(matmul(reshape(x, {1, d_in()}), W), {d_out()});
    return b.defined() ? add(y, b) : y;
  }
  if (x.rank() == 2) {
    if (x.extent(1) != d_in()) {
      throw ShapeError("linear: input width " + shape_str(x.shape()) +
                       " does not match weight " + shape_str(W.shape()));
    }
    Tensor y = matmul(x, W);
    return b.defined() ? add_rowwise(y, b) : y;
  }
  throw ShapeError("linear: expected rank 1 or 2 input, got " + shape_str(x.shape()));
}

// --- AdditiveAttention ------------------------------------------------------

AdditiveAttention::AdditiveAttention(ParameterRegistry& reg, const std::string& prefix,
                                     int d_q, int d_k, int d_h, Rng& rng) {
  W = reg.create(prefix + ".W", {d_q, d_h}, d_q, rng);
  U = reg.create(prefix + ".U", {d_k, d_h}, d_k, rng);
  b = reg.create(prefix + ".b", {d_h}, d_h, rng);
  w = reg.create(prefix + ".w", {d_h}, d_h, rng);
}

std::pair<Tensor, Tensor> AdditiveAttention::apply(const Tensor& query,
                                                   const Tensor& keys,
                                                   const Tensor& values) const {
  int d_h = b.extent(0);
  int K = keys.extent(0);
  if (values.extent(0) != K) {
    throw ShapeError("attention: keys " + shape_str(keys.shape()) + " and values " +
                     shape_str(values.shape()) + " disagree on row count");
  }
  Tensor qproj = reshape(matmul(reshape(query, {1, query.extent(0)}), W), {d_h});
  Tensor pre = add_rowwise(matmul(keys, U), add(qproj, b));
  Tensor logits = reshape(matmul(tanh(pre), reshape(w, {d_h, 1})), {K});
  Tensor weights = softmax(logits);
  Tensor summary = reshape(matmul(reshape(weights, {1, K}), values), {values.extent(1)});
  return {weights, summary};
}

// --- LstmCell ---------------------------------------------------------------

LstmCell::LstmCell(ParameterRegistry& reg, const std::string& prefix, int d_in,
                   int hidden_, Rng& rng)
    : hidden(hidden_) {
  W = reg.create(prefix + ".W", {d_in, 4 * hidden}, d_in, rng);
  U = reg.create(prefix + ".U", {hidden, 4 * hidden}, hidden, rng);
  b = reg.create(prefix + ".b", {4 * hidden}, hidden, rng);
  // forget-gate bias starts at exactly 1.0
  auto& bv = b.raw_values();
  for (int i = hidden; i < 2 * hidden; ++i) bv[static_cast<std::size_t>(i)] = 1.0;
}

std::pair<Tensor, Tensor> LstmCell::step(const Tensor& x, const Tensor& h,
                                         const Tensor& c) const {
  Tensor zx = reshape(matmul(reshape(x, {1, x.extent(0)}), W), {4 * hidden});
  Tensor zh = reshape(matmul(reshape(h, {1, hidden}), U), {4 * hidden});
  Tensor z = add(add(zx, zh), b);
  Tensor i = sigmoid(subvec(z, 0, hidden));
  Tensor f = sigmoid(subvec(z, hidden, hidden));
  Tensor g = tanh(subvec(z, 2 * hidden, hidden));
  Tensor o = sigmoid(subvec(z, 3 * hidden, hidden));
  Tensor c2 = add(mul(f, c), mul(i, g));
  Tensor h2 = mul(o, tanh(c2));
  return {h2, c2};
}

// --- BiLstm -----------------------------------------------------------------

BiLstm::BiLstm(ParameterRegistry& reg, const std::string& prefix, int d_in,
               int d_model_, Rng& rng)
    : d_model(d_model_) {
  if (d_model % 2 != 0) {
    throw ConfigError("bidirectional width must be even, got " + std::to_string(d_model));
  }
  fwd = LstmCell(reg, prefix + ".fwd", d_in, d_model / 2, rng);
  bwd = LstmCell(reg, prefix + ".bwd", d_in, d_model / 2, rng);
}

Tensor BiLstm::encode(const Tensor& X) const {
  int T = X.extent(0);
  std::vector<Tensor> fh(static_cast<std::size_t>(T));
  std::vector<Tensor> bh(static_cast<std::size_t>(T));
  Tensor h = fwd.zero_state(), c = fwd.zero_state();
  for (int t = 0; t < T; ++t) {
    auto [h2, c2] = fwd.step(row(X, t), h, c);
    fh[static_cast<std::size_t>(t)] = h2;
    h = h2;
    c = c2;
  }
  h = bwd.zero_state();
  c = bwd.zero_state();
  for (int t = T - 1; t >= 0; --t) {
    auto [h2, c2] = bwd.step(row(X, t), h, c);
    bh[static_cast<std::size_t>(t)] = h2;
    h = h2;
    c = c2;
  }
  std::vector<Tensor> rows(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    rows[static_cast<std::size_t>(t)] =
        concat({fh[static_cast<std::size_t>(t)], bh[static_cast<std::size_t>(t)]});
  }
  return stack_rows(rows);
}

// --- MultiHeadAttention -----------------------------------------------------

MultiHeadAttention::MultiHeadAttention(ParameterRegistry& reg, const std::string& prefix,
                                       int d_model_, int heads_, Rng& rng)
    : heads(heads_), d_model(d_model_) {
  if (heads <= 0 || d_model % heads != 0) {
    throw ConfigError("head count " + std::to_string(heads) + " must divide width " +
                      std::to_string(d_model));
  }
  q_proj = Linear(reg, prefix + ".q", d_model, d_model, rng);
  // the key projection carries no bias: a shared shift on every key moves
  // each query's logits by a constant, which softmax cancels exactly
  k_proj = Linear(reg, prefix + ".k", d_model, d_model, rng, /*with_bias=*/false);
  v_proj = Linear(reg, prefix + ".v", d_model, d_model, rng);
  out_proj = Linear(reg, prefix + ".out", d_model, d_model, rng);
}

std::vector<Tensor> MultiHeadAttention::attention_weights(
    const Tensor& queries, const Tensor& keys_values) const {
  int dh = d_model / heads;
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor Q = q_proj.apply(queries);
  Tensor K = k_proj.apply(keys_values);
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    Tensor Qh = col_slice(Q, hd * dh, dh);
    Tensor Kh = col_slice(K, hd * dh, dh);
    Tensor scores = scale(matmul(Qh, transpose(Kh)), inv_scale);
    out.push_back(softmax_rows(scores));
  }
  return out;
}

Tensor MultiHeadAttention::apply(const Tensor& queries, const Tensor& keys_values) const {
  int dh = d_model / heads;
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor Q = q_proj.apply(queries);
  Tensor K = k_proj.apply(keys_values);
  Tensor V = v_proj.apply(keys_values);
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    Tensor Qh = col_slice(Q, hd * dh, dh);
    Tensor Kh = col_slice(K, hd * dh, dh);
    Tensor Vh = col_slice(V, hd * dh, dh);
    Tensor scores = scale(matmul(Qh, transpose(Kh)), inv_scale);
    head_outputs.push_back(matmul(softmax_rows(scores), Vh));
  }
  return out_proj.apply(concat_cols(head_outputs));
}

// --- FeedForward ------------------------------------------------------------

FeedForward::FeedForward(ParameterRegistry& reg, const std::string& prefix,
                         int d_model, Rng& rng) {
  in = Linear(reg, prefix + ".in", d_model, 4 * d_model, rng);
  out = Linear(reg, prefix + ".out", 4 * d_model, d_model, rng);
}

Tensor FeedForward::apply(const Tensor& x) const { return out.apply(gelu(in.apply(x))); }

// --- LayerNormParams --------------------------------------------------------

LayerNormParams::LayerNormParams(ParameterRegistry& reg, const std::string& prefix,
                                 int width) {
  gamma = reg.create_const(prefix + ".gamma", {width}, 1.0);
  beta = reg.create_const(prefix + ".beta", {width}, 0.0);
}

// --- Transformer encoder ----------------------------------------------------

TransformerEncoderLayer::TransformerEncoderLayer(ParameterRegistry& reg,
                                                 const std::string& prefix,
                                                 int d_model, int heads, Rng& rng)
    : self_attn(reg, prefix + ".attn", d_model, heads, rng),
      ff(reg, prefix + ".ff", d_model, rng),
      ln1(reg, prefix + ".ln1", d_model),
      ln2(reg, prefix + ".ln2", d_model) {}

Tensor TransformerEncoderLayer::apply(const Tensor& x) const {
  Tensor normed = ln1.apply(x);
  Tensor y = add(x, self_attn.apply(normed, normed));
  return add(y, ff.apply(ln2.apply(y)));
}

TransformerEncoder::TransformerEncoder(ParameterRegistry& reg, const std::string& prefix,
                                       int d_model, int heads, int num_layers, Rng& rng)
    : final_ln(reg, prefix + ".final_ln", d_model) {
  for (int l = 0; l < num_layers; ++l) {
    layers.emplace_back(reg, prefix + ".layer" + std::to_string(l), d_model, heads, rng);
  }
}

Tensor TransformerEncoder::encode(const Tensor& O) const {
  Tensor x = O;
  for (const auto& layer : layers) x = layer.apply(x);
  return final_ln.apply(x);
}

// --- Transformer decoder ----------------------------------------------------

TransformerDecoderLayer::TransformerDecoderLayer(ParameterRegistry& reg,
                                                 const std::string& prefix,
                                                 int d_model, int heads, Rng& rng)
    : self_attn(reg, prefix + ".self", d_model, heads, rng),
      cross_attn(reg, prefix + ".cross", d_model, heads, rng),
      ff(reg, prefix + ".ff", d_model, rng),
      ln1(reg, prefix + ".ln1", d_model),
      ln2(reg, prefix + ".ln2", d_model),
      ln3(reg, prefix + ".ln3", d_model) {}

Tensor TransformerDecoderLayer::apply(const Tensor& x, const Tensor& memory) const {
  Tensor normed = ln1.apply(x);
  Tensor y = add(x, self_attn.apply(normed, normed));
  y = add(y, cross_attn.apply(ln2.apply(y), memory));
  return add(y, ff.apply(ln3.apply(y)));
}

TransformerDecoder::TransformerDecoder(ParameterRegistry& reg, const std::string& prefix,
                                       int d_model, int heads, int num_layers, Rng& rng)
    : final_ln(reg, prefix + ".final_ln", d_model) {
  for (int l = 0; l < num_layers; ++l) {
    layers.emplace_back(reg, prefix + ".layer" + std::to_string(l), d_model, heads, rng);
  }
}

Tensor TransformerDecoder::decode(const Tensor& memory, const Tensor& queries,
                                  const Tensor& content) const {
  Tensor x = add_rowwise(queries, content);
  for (const auto& layer : layers) x = layer.apply(x, memory);
  return final_ln.apply(x);
}

}  // namespace hmn
