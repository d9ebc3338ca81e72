#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "../support.hpp"
#include "manifest/error.hpp"
#include "manifest/germ.hpp"

using namespace manifest;

TEST_CASE("exemplar conditioning concatenates per-stage statistics") {
  NetworkBundle net(testing::tiny_arch());
  const Tensor t = testing::images(1, 32, 1);
  const ResidualConditioning z = exemplar_conditioning(net, t);
  CHECK(z.mode == GermMode::exemplar);
  CHECK(z.vector.shape() == Shape{1, net.arch().conditioning_dim()});
  const FeatureStatistics st = net.extract_statistics(t);
  std::size_t k = 0;
  for (int s = 0; s < st.depth(); ++s) {
    for (std::size_t c = 0; c < st.mu[s].numel(); ++c) CHECK(z.vector[k++] == st.mu[s][c]);
    for (std::size_t c = 0; c < st.sigma[s].numel(); ++c) CHECK(z.vector[k++] == st.sigma[s][c]);
  }
  CHECK(k == z.vector.numel());
  CHECK_THROWS_AS(exemplar_conditioning(net, testing::images(2, 32, 2)), DimensionError);
}

TEST_CASE("general conditioning is standard normal") {
  std::mt19937_64 rng(3);
  const ResidualConditioning z = general_conditioning(20000, rng);
  double m = 0.0, v = 0.0;
  for (float x : z.vector.vec()) m += x;
  m /= 20000;
  for (float x : z.vector.vec()) v += (x - m) * (x - m);
  v /= 20000;
  CHECK(std::abs(m) < 0.03);
  CHECK(std::abs(v - 1.0) < 0.05);
  CHECK_THROWS_AS(general_conditioning(0, rng), DimensionError);
}

TEST_CASE("residual checks the conditioning length") {
  NetworkBundle net(testing::tiny_arch());
  const Var content = net.encode_content(Var(testing::images(1, 32, 4)));
  CHECK_THROWS_AS(residual(net, content, {GermMode::general, Tensor({1, 5})}), DimensionError);
}

TEST_CASE("different conditionings give different residuals once the last layer moves") {
  NetworkBundle net(testing::tiny_arch());
  std::mt19937_64 rng(5);
  for (auto& e : net.params().entries()) {
    if (e.name.rfind("Gr.out", 0) == 0) e.var.mutable_value() = Tensor::randn(e.var.shape(), rng, 0.1f);
  }
  const Var content = net.encode_content(Var(testing::images(1, 32, 6)));
  const Tensor a = residual(net, content, general_conditioning(net.arch().conditioning_dim(), rng)).value();
  const Tensor b = residual(net, content, general_conditioning(net.arch().conditioning_dim(), rng)).value();
  CHECK(a.max_abs() > 0.0f);
  CHECK(max_abs_diff(a, b) > 0.0f);
}

TEST_CASE("compose clamps to the image range") {
  const Var a(Tensor({3}, std::vector<float>{0.9f, -0.9f, 0.1f}));
  const Var b(Tensor({3}, std::vector<float>{0.5f, -0.5f, 0.2f}));
  const Tensor c = compose(a, b).value();
  CHECK(c[0] == 1.0f);
  CHECK(c[1] == -1.0f);
  CHECK(c[2] == doctest::Approx(0.3f));
  CHECK_THROWS_AS(compose(a, Var(Tensor({2}))), DimensionError);
}

TEST_CASE("translator honours the component mask") {
  NetworkBundle net(testing::tiny_arch());
  const Var s(testing::images(2, 32, 7));
  std::mt19937_64 rng(8);
  const Translator full(net, ComponentMask{});
  CHECK(full.translate(s, GermMode::general, std::nullopt, rng).shape() == s.shape());
  CHECK(full.translate(s, GermMode::exemplar, testing::images(1, 32, 9), rng).shape() == s.shape());
  CHECK_THROWS_AS(full.translate(s, GermMode::exemplar, std::nullopt, rng), ConfigError);

  const Translator no_germ(net, ablation_switches({"no_germ"}));
  CHECK_THROWS_AS(no_germ.translate(s, GermMode::exemplar, testing::images(1, 32, 9), rng), ConfigError);

  // At initialization the residual is zero, so every mask reduces to its base image.
  const Var content = net.encode_content(s);
  CHECK(full.translate(s, GermMode::general, std::nullopt, rng).value().vec() == full.base(s, content).value().vec());
}

TEST_CASE("mode names") {
  CHECK(parse_germ_mode("general") == GermMode::general);
  CHECK(parse_germ_mode("exemplar") == GermMode::exemplar);
  CHECK(std::string(to_string(GermMode::exemplar)) == "exemplar");
  CHECK_THROWS_AS(parse_germ_mode("other"), ConfigError);
}

TEST_CASE("ablation switches") {
  CHECK(ablation_switches({}) == ComponentMask{});
  const ComponentMask lgfs = ablation_switches({"lgfs-only"});
  CHECK(lgfs.lgfs_only);
  CHECK_FALSE(lgfs.wmi);
  CHECK_FALSE(lgfs.germ);
  CHECK_FALSE(ablation_switches({"no_style"}).style_loss);
  CHECK_FALSE(ablation_switches({"no-patch"}).patch_loss);
  CHECK_FALSE(ablation_switches({"no_germ"}).germ);
  CHECK_FALSE(ablation_switches({"no_wmi"}).wmi);
  CHECK_THROWS_AS(ablation_switches({"no_colour"}), ConfigError);
  CHECK_THROWS_AS(ablation_switches({"lgfs_only", "no_style"}), ConfigError);
  CHECK_THROWS_AS(ablation_switches({"no_style", "no_patch"}), ConfigError);
  for (const auto& flags : std::vector<std::vector<std::string>>{{}, {"no_germ"}, {"no_wmi", "no_style"}, {"lgfs_only"}}) {
    const ComponentMask m = ablation_switches(flags);
    CHECK(ablation_switches(ablation_flags(m)) == m);
  }
}
