#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "../support.hpp"
#include "manifest/autograd.hpp"
#include "manifest/error.hpp"

using namespace manifest;

namespace {

using Fn = std::function<Var(const std::vector<Var>&)>;

// Projects the output on fixed random weights so every op reduces to a scalar.
double project(const Var& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Tensor r = Tensor::randn(out.shape(), rng);
  double s = 0.0;
  for (std::size_t i = 0; i < r.numel(); ++i) s += double(r[i]) * out.value()[i];
  return s;
}

void gradcheck(const Fn& f, std::vector<Tensor> inputs, double tol = 2e-2, float h = 1e-2f) {
  std::vector<Var> vars;
  for (auto& t : inputs) vars.emplace_back(t, true);
  const Var out = f(vars);
  std::mt19937_64 rng(99);
  const Var weights(Tensor::randn(out.shape(), rng));
  backward(op::sum(op::mul(out, weights)));
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto scalar = [&](const Tensor& x) {
      std::vector<Var> v;
      for (std::size_t j = 0; j < inputs.size(); ++j) v.emplace_back(j == k ? x : inputs[j]);
      return project(f(v), 99);
    };
    const Tensor numeric = testing::numeric_grad(scalar, inputs[k], h);
    INFO("input " << k);
    CHECK(testing::relative_error(vars[k].grad(), numeric) < tol);
  }
}

Tensor away_from_zero(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor t = Tensor::uniform(std::move(s), rng, 0.2f, 1.0f);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.vec()) v = sign(rng) ? v : -v;
  return t;
}

}  // namespace

TEST_CASE("elementwise ops") {
  std::mt19937_64 rng(1);
  const Tensor a = Tensor::randn({2, 3}, rng), b = Tensor::randn({2, 3}, rng);
  gradcheck([](const auto& v) { return op::add(v[0], v[1]); }, {a, b});
  gradcheck([](const auto& v) { return op::sub(v[0], v[1]); }, {a, b});
  gradcheck([](const auto& v) { return op::mul(v[0], v[1]); }, {a, b});
  gradcheck([](const auto& v) { return op::scale(v[0], -2.5f); }, {a});
  gradcheck([](const auto& v) { return op::add_scalar(v[0], 3.0f); }, {a});
  gradcheck([](const auto& v) { return op::mul_scalar(v[0], v[1]); }, {a, Tensor({1}, 0.7f)});
  gradcheck([](const auto& v) { return op::tanh(v[0]); }, {a});
  gradcheck([](const auto& v) { return op::relu(v[0]); }, {away_from_zero({2, 3}, 2)});
  gradcheck([](const auto& v) { return op::leaky_relu(v[0], 0.2f); }, {away_from_zero({2, 3}, 3)});
}

TEST_CASE("clamp passes gradient only strictly inside the bounds") {
  Var x(Tensor({3}, std::vector<float>{-2.0f, 0.3f, 1.0f}), true);
  backward(op::sum(op::clamp(x, -1.0f, 1.0f)));
  CHECK(x.grad()[0] == 0.0f);
  CHECK(x.grad()[1] == 1.0f);
  CHECK(x.grad()[2] == 0.0f);
}

TEST_CASE("convolution and linear layers") {
  std::mt19937_64 rng(4);
  gradcheck([](const auto& v) { return op::conv2d(v[0], v[1], v[2], 2, 1); },
            {Tensor::randn({2, 3, 6, 6}, rng), Tensor::randn({4, 3, 4, 4}, rng, 0.3f), Tensor::randn({4}, rng)});
  gradcheck([](const auto& v) { return op::conv2d(v[0], v[1], Var(), 1, 0); },
            {Tensor::randn({1, 2, 3, 3}, rng), Tensor::randn({3, 2, 1, 1}, rng)});
  gradcheck([](const auto& v) { return op::linear(v[0], v[1], v[2]); },
            {Tensor::randn({3, 5}, rng), Tensor::randn({4, 5}, rng), Tensor::randn({4}, rng)});
}

TEST_CASE("normalization layers") {
  std::mt19937_64 rng(5);
  const Tensor x = Tensor::randn({2, 3, 4, 4}, rng);
  gradcheck([](const auto& v) { return op::instance_norm(v[0]); }, {x});
  gradcheck([](const auto& v) { return op::adain(v[0], v[1], v[2]); },
            {x, Tensor::randn({2, 3}, rng), Tensor::randn({2, 3}, rng)});
  gradcheck([](const auto& v) { return op::layer_norm(v[0], v[1], v[2]); },
            {x, Tensor::randn({3}, rng), Tensor::randn({3}, rng)});
  gradcheck([](const auto& v) { return op::channel_stats(v[0]).first; }, {x});
  gradcheck([](const auto& v) { return op::channel_stats(v[0]).second; }, {x});
}

TEST_CASE("spatial and shape ops") {
  std::mt19937_64 rng(6);
  const Tensor x = Tensor::randn({2, 3, 4, 4}, rng);
  const Tensor m = Tensor::randn({2, 5}, rng);
  gradcheck([](const auto& v) { return op::upsample2x(v[0]); }, {x});
  gradcheck([](const auto& v) { return op::avg_pool2x(v[0]); }, {x});
  gradcheck([](const auto& v) { return op::global_avg_pool(v[0]); }, {x});
  gradcheck([](const auto& v) { return op::select_channel(v[0], 1); }, {x});
  gradcheck([](const auto& v) { return op::slice_batch(v[0], 1, 2); }, {x});
  gradcheck([](const auto& v) { return op::concat_batch({v[0], v[0]}); }, {x});
  gradcheck([](const auto& v) { return op::reshape(v[0], {6, 16}); }, {x});
  gradcheck([](const auto& v) { return op::mean_rows(v[0]); }, {m});
  gradcheck([](const auto& v) { return op::repeat_rows(op::slice_batch(v[0], 0, 1), 3); }, {m});
  gradcheck([](const auto& v) { return op::slice_cols(v[0], 1, 4); }, {m});
  gradcheck([](const auto& v) { return op::concat_cols({v[0], v[1]}); }, {m, Tensor::randn({2, 2}, rng)});
  for (int turns = 0; turns < 4; ++turns) {
    gradcheck([turns](const auto& v) { return op::crop_rotate(v[0], 1, 1, 0, 3, turns); }, {x});
  }
}

TEST_CASE("reductions and losses") {
  std::mt19937_64 rng(7);
  const Tensor a = Tensor::randn({3, 4}, rng);
  const Tensor b = Tensor::randn({3, 4}, rng);
  gradcheck([](const auto& v) { return op::sum(v[0]); }, {a});
  gradcheck([](const auto& v) { return op::mean(v[0]); }, {a});
  gradcheck([](const auto& v) { return op::l1_mean(v[0], v[1]); }, {a, b});
  gradcheck([](const auto& v) { return op::mse_to_constant(v[0], 1.0f); }, {a});
  gradcheck([](const auto& v) { return op::l2_norm(v[0]); }, {a});
  gradcheck([](const auto& v) { return op::softmax(v[0]); }, {Tensor::randn({5}, rng)});
  gradcheck([](const auto& v) { return op::index(op::softmax(v[0]), 2); }, {Tensor::randn({4}, rng)});
}

TEST_CASE("l2_norm has zero gradient at the origin") {
  Var x(Tensor::zeros({4}), true);
  backward(op::l2_norm(x));
  CHECK(x.grad().max_abs() == 0.0f);
}

TEST_CASE("crop_rotate turns a window clockwise") {
  const Var x(Tensor({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4}));
  CHECK(op::crop_rotate(x, 0, 0, 0, 2, 1).value().vec() == std::vector<float>{3, 1, 4, 2});
  CHECK(op::crop_rotate(x, 0, 0, 0, 2, 2).value().vec() == std::vector<float>{4, 3, 2, 1});
  CHECK(op::crop_rotate(x, 0, 0, 0, 2, 3).value().vec() == std::vector<float>{2, 4, 1, 3});
  CHECK_THROWS_AS(op::crop_rotate(x, 0, 1, 0, 2, 0), DimensionError);
}

TEST_CASE("gradients accumulate over backward calls and reach shared inputs") {
  Var x(Tensor({2}, std::vector<float>{1, 2}), true);
  backward(op::sum(op::mul(x, x)));
  backward(op::sum(x));
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  CHECK(x.grad()[1] == doctest::Approx(5.0));
  x.zero_grad();
  CHECK(x.grad().max_abs() == 0.0f);
}

TEST_CASE("no-grad guard and detach stop recording") {
  Var x(Tensor({2}, 1.0f), true);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    CHECK_FALSE(op::mul(x, x).requires_grad());
  }
  CHECK(grad_enabled());
  CHECK(op::mul(x, x).requires_grad());
  CHECK_FALSE(op::mul(x.detach(), x.detach()).requires_grad());
}

TEST_CASE("shape errors are reported") {
  const Var a(Tensor({2, 3})), b(Tensor({3, 2}));
  CHECK_THROWS_AS(op::add(a, b), DimensionError);
  CHECK_THROWS_AS(op::softmax(a), DimensionError);
  CHECK_THROWS_AS(op::mul_scalar(a, b), DimensionError);
  CHECK_THROWS_AS(backward(a), DimensionError);
}
