#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hmn/error.hpp"
#include "hmn/rng.hpp"
#include "hmn/tensor.hpp"

using namespace hmn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = true) {
  int n = 1;
  for (int e : shape) n *= e;
  std::vector<double> data(static_cast<std::size_t>(n));
  for (double& x : data) x = rng.normal();
  Tensor t = Tensor::from(std::move(shape), std::move(data));
  t.set_requires_grad(grad);
  return t;
}

// Central-difference gradient of `loss_fn` w.r.t. every entry of `params`,
// compared against one reverse-mode pass. Returns the max relative error.
double fd_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                double eps = 1e-5) {
  return grad_check(loss_fn, std::span<const Tensor>(params), eps);
}

}  // namespace

TEST_CASE("construction and accessors") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.shape() == Shape{2, 3});
  CHECK(z.size() == 6);
  CHECK(z.at(1, 2) == 0.0);

  Tensor f = Tensor::full({2}, 1.5);
  CHECK(f.at(0) == 1.5);
  CHECK(f.at(1) == 1.5);

  Tensor s = Tensor::scalar(4.0);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 4.0);

  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_rows({{1.0, 2.0}, {3.0}}), ShapeError);
}

TEST_CASE("matmul identity left factor") {
  Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
  Tensor b = Tensor::from_rows({{3, 4}, {5, 6}});
  Tensor c = matmul(eye, b);
  CHECK(c.at(0, 0) == 3.0);
  CHECK(c.at(0, 1) == 4.0);
  CHECK(c.at(1, 0) == 5.0);
  CHECK(c.at(1, 1) == 6.0);
}

TEST_CASE("matmul hand arithmetic") {
  Tensor a = Tensor::from({1, 2}, {1, 2});
  Tensor b = Tensor::from({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == 11.0);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("matmul gradient matches central differences on 4x5 by 5x3") {
  Rng rng(101);
  Tensor a = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5, 3}, rng);
  Tensor w = random_tensor({4, 3}, rng, false);  // fixed mixing weights
  auto loss = [&]() { return sum(mul(matmul(a, b), w)); };
  CHECK(fd_check(loss, {a, b}) < 1e-6);
}

TEST_CASE("softmax examples") {
  Tensor u = softmax(Tensor::from({3}, {0, 0, 0}));
  for (int i = 0; i < 3; ++i) CHECK(u.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor v = softmax(Tensor::from({2}, {std::log(2.0), 0.0}));
  CHECK(v.at(0) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(v.at(1) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Rng rng(5);
  Tensor x = random_tensor({6}, rng, false);
  Tensor shifted = softmax(add(x, Tensor::full({6}, 3.7)));
  Tensor base = softmax(x);
  double total = 0.0;
  for (int i = 0; i < 6; ++i) {
    CHECK(shifted.at(i) == doctest::Approx(base.at(i)).epsilon(1e-12));
    CHECK(base.at(i) >= 0.0);
    total += base.at(i);
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("cosine distance examples") {
  Tensor u = Tensor::from({3}, {1, 2, 3});
  CHECK(cosine_distance(u, u).item() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_distance(u, scale(u, -1.0)).item() == doctest::Approx(2.0).epsilon(1e-12));
  Tensor e0 = Tensor::from({2}, {1, 0});
  Tensor e1 = Tensor::from({2}, {0, 1});
  CHECK(cosine_distance(e0, e1).item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_distance(Tensor::zeros({3}), u), ValueError);
}

TEST_CASE("pool_max_over_time examples") {
  Tensor x = Tensor::from_rows({{1, 5}, {3, 2}});
  Tensor p = pool_max_over_time(x);
  CHECK(p.at(0) == 3.0);
  CHECK(p.at(1) == 5.0);

  Tensor single = Tensor::from({1, 4}, {4, -1, 0, 2});
  Tensor q = pool_max_over_time(single);
  for (int j = 0; j < 4; ++j) CHECK(q.at(j) == single.at(0, j));
}

TEST_CASE("pool_max gradient is one-hot per column, ties to earliest row") {
  Tensor x = Tensor::from_rows({{1, 7, 2}, {1, 3, 9}, {0, 7, 9}});
  x.set_requires_grad(true);
  Tensor loss = sum(pool_max_over_time(x));
  loss.backward();
  const auto& g = x.grad();
  // column 0: tie between rows 0 and 1 -> earliest (row 0)
  // column 1: tie between rows 0 and 2 -> row 0; column 2: tie rows 1,2 -> row 1
  std::vector<double> want{1, 1, 0, 0, 0, 1, 0, 0, 0};
  CHECK(g == want);
  for (int j = 0; j < 3; ++j) {
    int hits = 0;
    for (int t = 0; t < 3; ++t) hits += g[static_cast<std::size_t>(t) * 3 + j] != 0.0;
    CHECK(hits == 1);
  }
}

TEST_CASE("grad_check on a linear loss is exact to machine precision") {
  Rng rng(17);
  Tensor theta = random_tensor({6}, rng);
  Tensor a = random_tensor({6}, rng, false);
  auto loss = [&]() { return dot(a, theta); };
  CHECK(fd_check(loss, {theta}) < 1e-10);
}

TEST_CASE("grad_check on tanh∘matmul composite") {
  Rng rng(23);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor b = random_tensor({3, 3}, rng);
  auto loss = [&]() { return sum(tanh(matmul(a, b))); };
  CHECK(fd_check(loss, {a, b}) < 1e-6);
}

TEST_CASE("grad_check rejects a non-deterministic loss") {
  Rng rng(31);
  Tensor theta = random_tensor({2}, rng);
  auto loss = [&]() {
    static int calls = 0;
    ++calls;
    return scale(sum(theta), 1.0 + 0.001 * calls);
  };
  CHECK_THROWS_AS(fd_check(loss, {theta}), ValueError);
}

TEST_CASE("every primitive op matches central differences on random shapes") {
  Rng rng(404);
  for (int trial = 0; trial < 3; ++trial) {
    int m = 1 + rng.below(8), k = 1 + rng.below(8), n = 1 + rng.below(8);

    {
      Tensor a = random_tensor({m, k}, rng);
      Tensor b = random_tensor({k, n}, rng);
      auto loss = [&]() { return sum(tanh(matmul(a, b))); };
      CHECK(fd_check(loss, {a, b}) < 1e-5);
    }
    {
      Tensor a = random_tensor({m, n}, rng);
      auto loss = [&]() { return sum(sigmoid(transpose(a))); };
      CHECK(fd_check(loss, {a}) < 1e-5);
    }
    {
      Tensor a = random_tensor({m, n}, rng);
      Tensor b = random_tensor({m, n}, rng);
      auto loss = [&]() { return sum(tanh(mul(sub(a, b), add(a, b)))); };
      CHECK(fd_check(loss, {a, b}) < 1e-5);
    }
    {
      Tensor a = random_tensor({n}, rng);
      Tensor b = Tensor::full({n}, 2.0);
      for (double& x : b.raw_values()) x += rng.uniform01();  // keep away from 0
      b.set_requires_grad(true);
      auto loss = [&]() { return sum(divide(a, b)); };
      CHECK(fd_check(loss, {a, b}) < 1e-5);
    }
    {
      Tensor x = random_tensor({m, n}, rng);
      Tensor b = random_tensor({n}, rng);
      auto loss = [&]() { return sum(gelu(add_rowwise(x, b))); };
      CHECK(fd_check(loss, {x, b}) < 1e-5);
    }
    {
      Tensor x = random_tensor({n}, rng);
      Tensor w = random_tensor({n}, rng, false);
      auto loss = [&]() { return dot(w, softmax(x)); };
      CHECK(fd_check(loss, {x}) < 1e-5);
    }
    {
      Tensor x = random_tensor({m, n}, rng);
      Tensor w = random_tensor({m, n}, rng, false);
      auto loss = [&]() { return sum(mul(w, softmax_rows(x))); };
      CHECK(fd_check(loss, {x}) < 1e-5);
    }
    {
      Tensor x = random_tensor({m, n}, rng);
      Tensor w = random_tensor({n}, rng, false);
      auto loss = [&]() { return dot(w, pool_max_over_time(x)); };
      CHECK(fd_check(loss, {x}) < 1e-5);
    }
    {
      Tensor x = random_tensor({n}, rng);
      // keep inputs strictly positive for log/sqrt
      for (double& v : x.raw_values()) v = 0.5 + std::abs(v);
      auto loss = [&]() { return sum(log(x)) + sum(sqrt(x)); };
      CHECK(fd_check(loss, {x}) < 1e-5);
    }
    {
      Tensor x = random_tensor({m, n}, rng);
      Tensor gamma = random_tensor({n}, rng);
      Tensor beta = random_tensor({n}, rng);
      Tensor w = random_tensor({m, n}, rng, false);
      // wider step: normalization makes some gradient entries nearly cancel,
      // and at the default step the difference quotient is roundoff-dominated
      auto loss = [&]() { return sum(mul(w, layer_norm(x, gamma, beta))); };
      CHECK(fd_check(loss, {x, gamma, beta}, 1e-4) < 1e-5);
    }
    {
      Tensor u = random_tensor({n}, rng);
      Tensor v = random_tensor({n}, rng);
      for (double& z : u.raw_values()) z += (z >= 0 ? 0.5 : -0.5);
      for (double& z : v.raw_values()) z += (z >= 0 ? 0.5 : -0.5);
      auto loss = [&]() { return cosine_distance(u, v); };
      CHECK(fd_check(loss, {u, v}) < 1e-5);
    }
    {
      Tensor a = random_tensor({m}, rng);
      Tensor b = random_tensor({k}, rng);
      auto loss = [&]() {
        Tensor cat = concat({a, b, a});
        return sum(tanh(cat));
      };
      CHECK(fd_check(loss, {a, b}) < 1e-5);
    }
    {
      Tensor a = random_tensor({n}, rng);
      Tensor b = random_tensor({n}, rng);
      auto loss = [&]() { return sum(tanh(matmul(stack_rows({a, b, a}), transpose(stack_rows({b, a, b}))))); };
      CHECK(fd_check(loss, {a, b}) < 1e-5);
    }
    {
      Tensor a = random_tensor({m, k}, rng);
      Tensor b = random_tensor({m, n}, rng);
      auto loss = [&]() { return sum(sigmoid(concat_cols({a, b}))); };
      CHECK(fd_check(loss, {a, b}) < 1e-5);
    }
    {
      Tensor a = random_tensor({m, n}, rng);
      auto loss = [&]() {
        Tensor r = row(a, m - 1);
        Tensor s = subvec(r, 0, n);
        Tensor c = col_slice(a, 0, n);
        return sum(tanh(c)) + pick(s, n - 1) + sum(r);
      };
      CHECK(fd_check(loss, {a}) < 1e-5);
    }
    {
      Tensor a = random_tensor({m, n}, rng);
      auto loss = [&]() { return add(sum(tanh(reshape(a, {n * m}))), scale(sum(a), 0.25)); };
      CHECK(fd_check(loss, {a}) < 1e-5);
    }
  }
}

TEST_CASE("forward passes are bitwise deterministic") {
  Rng rng(777);
  Tensor a = random_tensor({5, 4}, rng, false);
  Tensor b = random_tensor({4, 6}, rng, false);
  Tensor g = random_tensor({6}, rng, false);
  Tensor h = random_tensor({6}, rng, false);
  auto run = [&]() {
    Tensor t = layer_norm(tanh(matmul(a, b)), g, h);
    return softmax_rows(t).values();
  };
  CHECK(run() == run());
}

TEST_CASE("gradient accumulates additively across branches") {
  Rng rng(88);
  Tensor x = random_tensor({4}, rng);
  Tensor w1 = random_tensor({4}, rng, false);
  Tensor w2 = random_tensor({4}, rng, false);

  // two branches sharing x
  Tensor loss = add(dot(w1, tanh(x)), dot(w2, sigmoid(x)));
  loss.backward();
  std::vector<double> both = x.grad();

  // branch-by-branch oracle
  x.zero_grad();
  dot(w1, tanh(x)).backward();
  std::vector<double> first = x.grad();
  x.zero_grad();
  dot(w2, sigmoid(x)).backward();
  const auto& second = x.grad();
  for (int i = 0; i < 4; ++i) {
    CHECK(both[static_cast<std::size_t>(i)] ==
          doctest::Approx(first[static_cast<std::size_t>(i)] + second[static_cast<std::size_t>(i)])
              .epsilon(1e-12));
  }
}

TEST_CASE("a tensor reused twice in one expression gets both contributions") {
  Tensor x = Tensor::from({2}, {0.5, -1.0});
  x.set_requires_grad(true);
  Tensor loss = dot(x, x);  // d/dx = 2x
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(x.grad()[1] == doctest::Approx(-2.0).epsilon(1e-14));
}

TEST_CASE("NoGradGuard suppresses graph recording") {
  Tensor x = Tensor::from({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  {
    NoGradGuard ng;
    Tensor y = sum(tanh(x));
    CHECK_FALSE(y.requires_grad());
  }
  Tensor y = sum(tanh(x));
  CHECK(y.requires_grad());
}

TEST_CASE("debug checks flag non-finite forward results") {
  set_debug_checks(true);
  Tensor big = Tensor::full({2}, 1e308);
  CHECK_THROWS_AS(mul(big, big), ValueError);
  set_debug_checks(false);
  Tensor ok = mul(big, big);  // silent without debug checks
  CHECK(std::isinf(ok.at(0)));
}

TEST_CASE("backward requires a scalar") {
  Tensor x = Tensor::from({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  Tensor y = tanh(x);
  CHECK_THROWS_AS(y.backward(), ShapeError);
}

TEST_CASE("shape errors name the offending shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2 x 3]") != std::string::npos);
    CHECK(msg.find("[4 x 5]") != std::string::npos);
  }
}
