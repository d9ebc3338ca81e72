#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "../support.hpp"
#include "manifest/error.hpp"
#include "manifest/manifold.hpp"

using namespace manifest;

namespace {

AnchorStyleBank random_bank(int count, int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Var> codes;
  for (int i = 0; i < count; ++i) codes.emplace_back(Tensor::randn({n, d}, rng), true);
  return AnchorStyleBank(codes);
}

}  // namespace

TEST_CASE("anchor sets") {
  const AnchorSet two = AnchorSet::with_count(2);
  CHECK(two.names() == std::vector<std::string>{"id", "m"});
  CHECK(AnchorSet::with_count(3).names() == std::vector<std::string>{"id", "m1", "m2"});
  const AnchorSet s = AnchorSet::from_names({"id", "night", "fog"});
  CHECK(s.label("fog").index == 2);
  CHECK(s.name({1}) == "night");
  CHECK(AnchorSet::identity().index == 0);
  CHECK_THROWS_AS(s.label("rain"), DomainError);
  CHECK_THROWS(AnchorSet::from_names({"m", "id"}));
  CHECK_THROWS(AnchorSet::from_names({"id", "m", "m"}));
}

TEST_CASE("selection returns the anchor code bit for bit") {
  const AnchorStyleBank bank = random_bank(3, 2, 5, 1);
  for (int c = 0; c < 3; ++c) CHECK(select_style(bank, {c}).value().vec() == bank.code({c}).value().vec());
  CHECK_THROWS_AS(select_style(bank, {3}), DomainError);
}

TEST_CASE("interpolation with uniform weights is the mean") {
  const AnchorStyleBank bank = random_bank(2, 1, 4, 2);
  const Tensor z = interpolate_style(bank, AnchorWeights::uniform(2)).value();
  for (int i = 0; i < 4; ++i) {
    CHECK(z[i] == doctest::Approx(0.5 * (bank.code({0}).value()[i] + bank.code({1}).value()[i])));
  }
}

TEST_CASE("saturated weights select a single anchor") {
  const AnchorStyleBank bank = random_bank(3, 2, 4, 3);
  const AnchorWeights w(Var(Tensor({3}, std::vector<float>{-40.0f, 40.0f, -40.0f}), true));
  CHECK(max_abs_diff(interpolate_style(bank, w).value(), bank.code({1}).value()) < 1e-6f);
}

TEST_CASE("property: weights stay on the simplex for arbitrary logits") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + trial % 5;
    const AnchorWeights w(Var(Tensor::randn({k}, rng, 10.0f), true));
    const Tensor v = w.weight_values();
    double sum = 0.0;
    for (std::size_t i = 0; i < v.numel(); ++i) {
      CHECK(v[i] >= 0.0f);
      sum += v[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("interpolation propagates gradient to logits and codes") {
  const AnchorStyleBank bank = random_bank(2, 1, 3, 5);
  const AnchorWeights w(Var(Tensor({2}, std::vector<float>{0.3f, -0.2f}), true));
  backward(op::sum(op::mul(interpolate_style(bank, w), interpolate_style(bank, w))));
  CHECK(w.logits().grad().max_abs() > 0.0f);
  CHECK(bank.code({0}).grad().max_abs() > 0.0f);
}

TEST_CASE("mismatched weight count is rejected") {
  const AnchorStyleBank bank = random_bank(2, 1, 3, 6);
  CHECK_THROWS_AS(interpolate_style(bank, AnchorWeights::uniform(3)), DimensionError);
  CHECK_THROWS_AS(AnchorStyleBank({Var(Tensor({1, 3})), Var(Tensor({1, 4}))}), DimensionError);
}

TEST_CASE("bundle weights start uniform") {
  NetworkBundle net(testing::tiny_arch());
  const Tensor w = AnchorWeights(net.anchor_logits()).weight_values();
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(w[1] == doctest::Approx(0.5));
}

TEST_CASE("broadcast and translation helpers") {
  NetworkBundle net(testing::tiny_arch());
  const Var z(Tensor({1, 4}, 0.3f));
  CHECK(broadcast_style(z, 3).shape() == Shape{3, 4});
  const Var s(testing::images(2, 32, 7));
  const AnchorStyleBank bank = AnchorStyleBank::encode(net, {s, Var(testing::images(2, 32, 8))});
  CHECK(translate_to_anchor(net, s, bank, {1}).shape() == s.shape());
  CHECK(translate_interpolated(net, s, bank, AnchorWeights(net.anchor_logits())).shape() == s.shape());
}

TEST_CASE("mean styles are refreshed from reference batches") {
  NetworkBundle net(testing::tiny_arch());
  const Tensor a = testing::images(3, 32, 9), b = testing::images(2, 32, 10);
  update_mean_styles(net, {a, b});
  const Tensor expect = op::mean_rows(net.encode_style(Var(b), {1})).value();
  CHECK(max_abs_diff(net.mean_style({1}).value(), expect) < 1e-6f);
  const AnchorStyleBank persisted = AnchorStyleBank::persisted(net);
  CHECK(persisted.code({1}).value().vec() == net.mean_style({1}).value().vec());
  CHECK_THROWS_AS(update_mean_styles(net, {a}), DimensionError);
}
