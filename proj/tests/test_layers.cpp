#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hmn/error.hpp"
#include "hmn/layers.hpp"
#include "hmn/rng.hpp"
#include "hmn/tensor.hpp"

using namespace hmn;

namespace {

Tensor random_input(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.raw_values()) x = rng.normal();
  return t;
}

double check_params(const std::function<Tensor()>& loss,
                    const ParameterRegistry& reg, double eps = 1e-5) {
  auto params = reg.tensors();
  return grad_check(loss, std::span<const Tensor>(params), eps);
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("registry rejects duplicate names and finds entries") {
  ParameterRegistry reg;
  Rng rng(1);
  reg.create("a.W", {2, 2}, 2, rng);
  CHECK_THROWS_AS(reg.create("a.W", {2, 2}, 2, rng), ConfigError);
  CHECK(reg.contains("a.W"));
  CHECK_FALSE(reg.contains("a.b"));
  CHECK_THROWS_AS(reg.get("missing"), ConfigError);
  CHECK(reg.total_size() == 4);
  for (double v : reg.get("a.W").values()) {
    CHECK(std::abs(v) <= 1.0 / std::sqrt(2.0));
  }
}

TEST_CASE("fully connected: identity weights pass input through") {
  ParameterRegistry reg;
  Rng rng(2);
  Linear lin(reg, "fc", 3, 3, rng);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      lin.W.raw_values()[static_cast<std::size_t>(i) * 3 + j] = i == j ? 1.0 : 0.0;
  for (double& v : lin.b.raw_values()) v = 0.0;
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor y = lin.apply(x);
  CHECK(y.values() == x.values());

  Tensor xv = Tensor::from({3}, {7, 8, 9});
  CHECK(lin.apply(xv).values() == xv.values());
}

TEST_CASE("fully connected: zero input broadcasts the bias") {
  ParameterRegistry reg;
  Rng rng(3);
  Linear lin(reg, "fc", 3, 4, rng);
  Tensor y = lin.apply(Tensor::zeros({2, 3}));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) CHECK(y.at(i, j) == lin.b.at(j));
}

TEST_CASE("fully connected: gradient check on 2x3 -> 4") {
  ParameterRegistry reg;
  Rng rng(4);
  Linear lin(reg, "fc", 3, 4, rng);
  Tensor x = random_input({2, 3}, rng);
  x.set_requires_grad(true);
  std::vector<Tensor> params = reg.tensors();
  params.push_back(x);
  auto loss = [&]() { return sum(tanh(lin.apply(x))); };
  CHECK(grad_check(loss, std::span<const Tensor>(params)) < 1e-6);
  CHECK_THROWS_AS(lin.apply(Tensor::zeros({2, 5})), ShapeError);
}

TEST_CASE("additive attention: single key takes all the weight") {
  ParameterRegistry reg;
  Rng rng(5);
  AdditiveAttention attn(reg, "attn", 4, 3, 6, rng);
  Tensor q = random_input({4}, rng);
  Tensor keys = random_input({1, 3}, rng);
  Tensor values = random_input({1, 5}, rng);
  auto [weights, summary] = attn.apply(q, keys, values);
  CHECK(weights.at(0) == 1.0);
  for (int j = 0; j < 5; ++j)
    CHECK(summary.at(j) == doctest::Approx(values.at(0, j)).epsilon(1e-15));
}

TEST_CASE("additive attention: zero scoring vector gives uniform weights") {
  ParameterRegistry reg;
  Rng rng(6);
  AdditiveAttention attn(reg, "attn", 4, 3, 6, rng);
  for (double& v : attn.w.raw_values()) v = 0.0;
  Tensor q = random_input({4}, rng);
  Tensor keys = random_input({5, 3}, rng);
  Tensor values = random_input({5, 2}, rng);
  auto [weights, summary] = attn.apply(q, keys, values);
  for (int k = 0; k < 5; ++k)
    CHECK(weights.at(k) == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("additive attention: summary equals the explicit convex combination") {
  ParameterRegistry reg;
  Rng rng(7);
  AdditiveAttention attn(reg, "attn", 4, 3, 6, rng);
  Tensor q = random_input({4}, rng);
  Tensor keys = random_input({5, 3}, rng);
  Tensor values = random_input({5, 2}, rng);
  auto [weights, summary] = attn.apply(q, keys, values);
  double wsum = 0.0;
  for (int k = 0; k < 5; ++k) {
    CHECK(weights.at(k) >= 0.0);
    wsum += weights.at(k);
  }
  CHECK(std::abs(wsum - 1.0) < 1e-12);
  for (int j = 0; j < 2; ++j) {
    double expect = 0.0;
    for (int k = 0; k < 5; ++k) expect += weights.at(k) * values.at(k, j);
    CHECK(summary.at(j) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("additive attention: gradient check at tiny widths") {
  ParameterRegistry reg;
  Rng rng(8);
  AdditiveAttention attn(reg, "attn", 3, 2, 4, rng);
  Tensor q = random_input({3}, rng);
  Tensor keys = random_input({4, 2}, rng);
  Tensor values = random_input({4, 3}, rng);
  q.set_requires_grad(true);
  keys.set_requires_grad(true);
  values.set_requires_grad(true);
  std::vector<Tensor> params = reg.tensors();
  params.insert(params.end(), {q, keys, values});
  auto loss = [&]() {
    auto [w, s] = attn.apply(q, keys, values);
    return add(sum(tanh(s)), pick(w, 1));
  };
  CHECK(grad_check(loss, std::span<const Tensor>(params)) < 1e-5);
}

TEST_CASE("lstm step: zero weights with unit forget bias is a fixed point at zero") {
  ParameterRegistry reg;
  Rng rng(9);
  LstmCell cell(reg, "lstm", 3, 2, rng);
  for (double& v : cell.W.raw_values()) v = 0.0;
  for (double& v : cell.U.raw_values()) v = 0.0;
  for (double& v : cell.b.raw_values()) v = 0.0;
  for (int i = 2; i < 4; ++i) cell.b.raw_values()[static_cast<std::size_t>(i)] = 1.0;
  auto [h2, c2] = cell.step(Tensor::zeros({3}), cell.zero_state(), cell.zero_state());
  for (int i = 0; i < 2; ++i) {
    CHECK(c2.at(i) == 0.0);
    CHECK(h2.at(i) == 0.0);
  }
}

TEST_CASE("lstm step: scalar instance matches the hand-coded gate formulas") {
  ParameterRegistry reg;
  Rng rng(10);
  LstmCell cell(reg, "lstm", 1, 1, rng);
  double x = 0.37, h = -0.21, c = 0.63;
  auto [h2, c2] = cell.step(Tensor::from({1}, {x}), Tensor::from({1}, {h}),
                            Tensor::from({1}, {c}));
  const auto& W = cell.W.values();
  const auto& U = cell.U.values();
  const auto& b = cell.b.values();
  double zi = x * W[0] + h * U[0] + b[0];
  double zf = x * W[1] + h * U[1] + b[1];
  double zg = x * W[2] + h * U[2] + b[2];
  double zo = x * W[3] + h * U[3] + b[3];
  double c_want = sigmoid_scalar(zf) * c + sigmoid_scalar(zi) * std::tanh(zg);
  double h_want = sigmoid_scalar(zo) * std::tanh(c_want);
  CHECK(c2.item() == doctest::Approx(c_want).epsilon(1e-12));
  CHECK(h2.item() == doctest::Approx(h_want).epsilon(1e-12));
}

TEST_CASE("lstm step: forget bias initialized to one") {
  ParameterRegistry reg;
  Rng rng(11);
  LstmCell cell(reg, "lstm", 2, 3, rng);
  for (int i = 3; i < 6; ++i) CHECK(cell.b.at(i) == 1.0);
}

TEST_CASE("lstm: gradient check through three chained steps") {
  ParameterRegistry reg;
  Rng rng(12);
  LstmCell cell(reg, "lstm", 2, 3, rng);
  Tensor x0 = random_input({2}, rng).set_requires_grad(true);
  Tensor x1 = random_input({2}, rng).set_requires_grad(true);
  Tensor x2 = random_input({2}, rng).set_requires_grad(true);
  std::vector<Tensor> params = reg.tensors();
  params.insert(params.end(), {x0, x1, x2});
  auto loss = [&]() {
    auto [h1, c1] = cell.step(x0, cell.zero_state(), cell.zero_state());
    auto [h2, c2] = cell.step(x1, h1, c1);
    auto [h3, c3] = cell.step(x2, h2, c2);
    return sum(h3);
  };
  CHECK(grad_check(loss, std::span<const Tensor>(params)) < 1e-5);
}

TEST_CASE("bilstm: odd width is a configuration error") {
  ParameterRegistry reg;
  Rng rng(13);
  CHECK_THROWS_AS(BiLstm(reg, "bi", 3, 5, rng), ConfigError);
}

TEST_CASE("bilstm: length-one sequence equals single steps from zero state") {
  ParameterRegistry reg;
  Rng rng(14);
  BiLstm bi(reg, "bi", 3, 4, rng);
  Tensor X = random_input({1, 3}, rng);
  Tensor out = bi.encode(X);
  auto [hf, cf] = bi.fwd.step(row(X, 0), bi.fwd.zero_state(), bi.fwd.zero_state());
  auto [hb, cb] = bi.bwd.step(row(X, 0), bi.bwd.zero_state(), bi.bwd.zero_state());
  for (int j = 0; j < 2; ++j) {
    CHECK(out.at(0, j) == doctest::Approx(hf.at(j)).epsilon(1e-15));
    CHECK(out.at(0, 2 + j) == doctest::Approx(hb.at(j)).epsilon(1e-15));
  }
}

TEST_CASE("bilstm: swapped directions on reversed input reproduce the output") {
  ParameterRegistry reg;
  Rng rng(15);
  BiLstm bi(reg, "bi", 3, 4, rng);
  BiLstm swapped;
  swapped.fwd = bi.bwd;
  swapped.bwd = bi.fwd;
  swapped.d_model = bi.d_model;

  int T = 5;
  Tensor X = random_input({T, 3}, rng);
  std::vector<Tensor> rev_rows;
  for (int t = T - 1; t >= 0; --t) rev_rows.push_back(row(X, t));
  Tensor Xrev = stack_rows(rev_rows);

  Tensor out = bi.encode(X);
  Tensor out2 = swapped.encode(Xrev);
  // swapped net's row t' holds [backward-half ; forward-half] of original row T-1-t'
  int half = bi.d_model / 2;
  for (int t2 = 0; t2 < T; ++t2) {
    int t = T - 1 - t2;
    for (int j = 0; j < half; ++j) {
      CHECK(out2.at(t2, j) == doctest::Approx(out.at(t, half + j)).epsilon(1e-12));
      CHECK(out2.at(t2, half + j) == doctest::Approx(out.at(t, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("bilstm: gradient check at tiny widths") {
  ParameterRegistry reg;
  Rng rng(16);
  BiLstm bi(reg, "bi", 2, 4, rng);
  Tensor X = random_input({3, 2}, rng).set_requires_grad(true);
  std::vector<Tensor> params = reg.tensors();
  params.push_back(X);
  auto loss = [&]() { return sum(tanh(bi.encode(X))); };
  CHECK(grad_check(loss, std::span<const Tensor>(params)) < 1e-5);
}

TEST_CASE("multi-head attention: weights per head are convex") {
  ParameterRegistry reg;
  Rng rng(17);
  MultiHeadAttention mha(reg, "mha", 8, 2, rng);
  Tensor X = random_input({5, 8}, rng);
  Tensor M = random_input({7, 8}, rng);
  for (const Tensor& w : mha.attention_weights(X, M)) {
    CHECK(w.shape() == Shape{5, 7});
    for (int i = 0; i < 5; ++i) {
      double s = 0.0;
      for (int j = 0; j < 7; ++j) {
        CHECK(w.at(i, j) >= 0.0);
        s += w.at(i, j);
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  CHECK_THROWS_AS(MultiHeadAttention(reg, "bad", 8, 3, rng), ConfigError);
}

TEST_CASE("transformer encoder: permutation equivariance") {
  ParameterRegistry reg;
  Rng rng(18);
  TransformerEncoder enc(reg, "enc", 8, 2, 2, rng);
  Tensor O = random_input({6, 8}, rng);
  Tensor out = enc.encode(O);

  std::vector<int> perm{3, 0, 5, 1, 4, 2};
  std::vector<Tensor> rows;
  for (int p : perm) rows.push_back(row(O, p));
  Tensor out_p = enc.encode(stack_rows(rows));
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 8; ++j)
      CHECK(out_p.at(i, j) == doctest::Approx(out.at(perm[static_cast<std::size_t>(i)], j))
                                  .epsilon(1e-10));
}

TEST_CASE("transformer encoder: single row attends only to itself") {
  ParameterRegistry reg;
  Rng rng(19);
  TransformerEncoder enc(reg, "enc", 6, 2, 1, rng);
  Tensor O = random_input({1, 6}, rng);
  // with one row every attention weight is exactly 1, so the attention
  // output reduces to out_proj(v_proj(LN(x))); check the layer against that
  const auto& layer = enc.layers[0];
  for (const Tensor& w : layer.self_attn.attention_weights(layer.ln1.apply(O),
                                                           layer.ln1.apply(O))) {
    CHECK(w.at(0, 0) == 1.0);
  }
  Tensor normed = layer.ln1.apply(O);
  Tensor attn_manual = layer.self_attn.out_proj.apply(layer.self_attn.v_proj.apply(normed));
  Tensor y = add(O, attn_manual);
  Tensor want = enc.final_ln.apply(add(y, layer.ff.apply(layer.ln2.apply(y))));
  Tensor got = enc.encode(O);
  for (int j = 0; j < 6; ++j)
    CHECK(got.at(0, j) == doctest::Approx(want.at(0, j)).epsilon(1e-12));
}

TEST_CASE("transformer encoder: shape preserved across row counts") {
  ParameterRegistry reg;
  Rng rng(20);
  TransformerEncoder enc(reg, "enc", 4, 2, 2, rng);
  for (int L = 1; L <= 12; ++L) {
    Tensor out = enc.encode(random_input({L, 4}, rng));
    CHECK(out.shape() == Shape{L, 4});
  }
}

TEST_CASE("transformer encoder: gradient check at tiny widths") {
  ParameterRegistry reg;
  Rng rng(21);
  TransformerEncoder enc(reg, "enc", 4, 2, 1, rng);
  Tensor O = random_input({3, 4}, rng).set_requires_grad(true);
  std::vector<Tensor> params = reg.tensors();
  params.push_back(O);
  auto loss = [&]() { return sum(tanh(enc.encode(O))); };
  CHECK(grad_check(loss, std::span<const Tensor>(params), 1e-4) < 1e-5);
}

TEST_CASE("transformer decoder: memory permutation leaves output unchanged") {
  ParameterRegistry reg;
  Rng rng(22);
  TransformerDecoder dec(reg, "dec", 8, 2, 2, rng);
  Tensor memory = random_input({6, 8}, rng);
  Tensor queries = random_input({4, 8}, rng);
  Tensor content = random_input({8}, rng);
  Tensor out = dec.decode(memory, queries, content);

  std::vector<int> perm{5, 2, 0, 4, 1, 3};
  std::vector<Tensor> rows;
  for (int p : perm) rows.push_back(row(memory, p));
  Tensor out_p = dec.decode(stack_rows(rows), queries, content);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 8; ++j)
      CHECK(out_p.at(i, j) == doctest::Approx(out.at(i, j)).epsilon(1e-10));
}

TEST_CASE("transformer decoder: identical query slots give identical rows") {
  ParameterRegistry reg;
  Rng rng(23);
  TransformerDecoder dec(reg, "dec", 6, 2, 2, rng);
  Tensor memory = random_input({5, 6}, rng);
  Tensor q = random_input({6}, rng);
  Tensor other = random_input({6}, rng);
  Tensor queries = stack_rows({q, other, q});
  Tensor content = random_input({6}, rng);
  Tensor out = dec.decode(memory, queries, content);
  for (int j = 0; j < 6; ++j)
    CHECK(out.at(0, j) == doctest::Approx(out.at(2, j)).epsilon(1e-12));
}

TEST_CASE("transformer decoder: content vector shifts every slot input") {
  ParameterRegistry reg;
  Rng rng(24);
  TransformerDecoder dec(reg, "dec", 4, 2, 1, rng);
  Tensor memory = random_input({3, 4}, rng);
  Tensor queries = random_input({2, 4}, rng);
  Tensor content = random_input({4}, rng);
  // decoding with content c on queries Q equals decoding with zero content
  // on rows Q + c: the combination is an elementwise sum at the input only
  Tensor shifted = add_rowwise(queries, content);
  Tensor a = dec.decode(memory, queries, content);
  Tensor b = dec.decode(memory, shifted, Tensor::zeros({4}));
  CHECK(a.values() == b.values());
}

TEST_CASE("transformer decoder: gradient check at tiny widths") {
  ParameterRegistry reg;
  Rng rng(25);
  TransformerDecoder dec(reg, "dec", 4, 2, 1, rng);
  Tensor memory = random_input({3, 4}, rng).set_requires_grad(true);
  Tensor queries = random_input({2, 4}, rng).set_requires_grad(true);
  Tensor content = random_input({4}, rng).set_requires_grad(true);
  std::vector<Tensor> params = reg.tensors();
  params.insert(params.end(), {memory, queries, content});
  auto loss = [&]() { return sum(tanh(dec.decode(memory, queries, content))); };
  CHECK(grad_check(loss, std::span<const Tensor>(params), 1e-4) < 1e-5);
}
