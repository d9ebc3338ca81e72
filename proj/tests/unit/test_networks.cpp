#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "../support.hpp"
#include "manifest/checkpoint.hpp"
#include "manifest/error.hpp"
#include "manifest/germ.hpp"
#include "manifest/networks.hpp"

using namespace manifest;

TEST_CASE("component shapes") {
  const ArchConfig arch = testing::tiny_arch();
  NetworkBundle net(arch);
  const Var s(testing::images(2, 32, 1));
  const Var content = net.encode_content(s);
  CHECK(content.shape() == Shape{2, arch.content_channels(), 8, 8});
  const Var z = net.encode_style(s, {1});
  CHECK(z.shape() == Shape{2, arch.style_dim});
  CHECK(net.decode(content, z).shape() == s.shape());
  const Var cond(Tensor({2, arch.conditioning_dim()}));
  CHECK(net.residual(content, cond).shape() == s.shape());
  CHECK(net.discriminate_multitarget(s, {0}).dim(1) == 1);
  const Var patches(testing::images(5, arch.patch_size, 2));
  CHECK(net.discriminate_patches(patches).shape() == Shape{5, 1, 1, 1});
}

TEST_CASE("decoder output lies in [-1,1]") {
  NetworkBundle net(testing::tiny_arch());
  const Var s(testing::images(2, 32, 3));
  const Tensor out = net.decode(net.encode_content(s), net.encode_style(s, {0})).value();
  CHECK(out.max_abs() <= 1.0f);
}

TEST_CASE("invalid inputs are rejected") {
  NetworkBundle net(testing::tiny_arch());
  const Var s(testing::images(1, 32, 4));
  CHECK_THROWS_AS(net.encode_style(s, {2}), DomainError);
  CHECK_THROWS_AS(net.encode_style(s, {-1}), DomainError);
  CHECK_THROWS_AS(net.encode_content(Var(testing::images(1, 30, 5))), DimensionError);
  CHECK_THROWS_AS(net.encode_content(Var(Tensor({1, 1, 32, 32}))), DimensionError);
  CHECK_THROWS_AS(net.discriminate_patches(Var(testing::images(1, 16, 6))), DimensionError);
  const Var content = net.encode_content(s);
  CHECK_THROWS_AS(net.decode(content, Var(Tensor({2, 4}))), DimensionError);
}

TEST_CASE("residual generator starts at exactly zero") {
  NetworkBundle net(testing::tiny_arch());
  const Var s(testing::images(3, 32, 7));
  std::mt19937_64 rng(1);
  const auto z_r = general_conditioning(net.arch().conditioning_dim(), rng);
  const Var content = net.encode_content(s);
  CHECK(residual(net, content, z_r).value().max_abs() == 0.0f);
  const Var s_w = net.decode(content, net.encode_style(s, {1}));
  CHECK(compose(s_w, residual(net, content, z_r)).value().vec() == s_w.value().vec());
}

TEST_CASE("conditioning dimension follows the extractor") {
  ArchConfig a = testing::tiny_arch();
  CHECK(a.conditioning_dim() == 2 * (8 + 8 + 16 + 16));
  a.extractor = "identity";
  CHECK(a.conditioning_dim() == 6);
  NetworkBundle net(a);
  CHECK(net.extractor().stage_channels() == std::vector<int>{3});
}

TEST_CASE("identity extractor statistics equal raw channel statistics") {
  ArchConfig a = testing::tiny_arch();
  a.extractor = "identity";
  NetworkBundle net(a);
  const Tensor x = testing::images(1, 32, 8);
  const FeatureStatistics st = net.extract_statistics(x);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, sq = 0.0;
    for (int i = 0; i < 32 * 32; ++i) mean += x[c * 1024 + i];
    mean /= 1024;
    for (int i = 0; i < 32 * 32; ++i) sq += (x[c * 1024 + i] - mean) * (x[c * 1024 + i] - mean);
    CHECK(st.mu[0][c] == doctest::Approx(mean).epsilon(1e-4));
    CHECK(st.sigma[0][c] == doctest::Approx(std::sqrt(sq / 1024 + 1e-5)).epsilon(1e-4));
  }
}

TEST_CASE("extractor parameters are frozen") {
  NetworkBundle net(testing::tiny_arch());
  CHECK_FALSE(net.extractor_parameters().empty());
  for (const auto& p : net.extractor_parameters()) CHECK_FALSE(p.requires_grad());
  for (const auto& e : net.params().entries()) {
    if (e.name.rfind("phi.", 0) == 0) CHECK_FALSE(e.trainable);
  }
}

TEST_CASE("parameter groups are disjoint and cover every trainable parameter") {
  NetworkBundle net(testing::tiny_arch());
  std::set<Node*> gen, disc;
  for (const auto& p : net.generator_parameters()) gen.insert(p.node().get());
  for (const auto& p : net.discriminator_parameters()) disc.insert(p.node().get());
  for (auto* n : gen) CHECK(disc.count(n) == 0);
  std::size_t trainable = 0;
  for (const auto& e : net.params().entries()) trainable += e.trainable;
  CHECK(gen.size() + disc.size() == trainable);
  CHECK(gen.count(net.anchor_logits().node().get()) == 1);
}

TEST_CASE("same seed gives the same weights") {
  NetworkBundle a(testing::tiny_arch()), b(testing::tiny_arch());
  ArchConfig other = testing::tiny_arch();
  other.seed = 2;
  NetworkBundle c(other);
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
    const auto& ea = a.params().entries()[i];
    all_equal &= checksum(ea.var.value()) == checksum(b.params().entries()[i].var.value());
    if (ea.name.rfind("E.", 0) == 0) any_diff |= checksum(ea.var.value()) != checksum(c.params().entries()[i].var.value());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("tensor AdaIN hits target statistics") {
  std::mt19937_64 rng(9);
  const Tensor x = Tensor::randn({2, 4, 8, 8}, rng);
  const Tensor mu({4}, std::vector<float>{0.5f, -1.0f, 2.0f, 0.0f});
  const Tensor sigma({4}, std::vector<float>{1.0f, 0.1f, 3.0f, 0.5f});
  const Tensor y = adain(x, mu, sigma);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 4; ++c) {
      double m = 0.0, v = 0.0;
      for (int i = 0; i < 64; ++i) m += y.at(n, c, i / 8, i % 8);
      m /= 64;
      for (int i = 0; i < 64; ++i) v += (y.at(n, c, i / 8, i % 8) - m) * (y.at(n, c, i / 8, i % 8) - m);
      CHECK(m == doctest::Approx(mu[c]).epsilon(1e-4));
      CHECK(std::sqrt(v / 64) == doctest::Approx(sigma[c]).epsilon(1e-3));
    }
  CHECK_THROWS_AS(adain(x, Tensor({3}), Tensor({3})), DimensionError);
  CHECK_THROWS_AS(adain(x, mu, Tensor({4}, -1.0f)), std::invalid_argument);
}

TEST_CASE("checkpoint round trip reproduces outputs") {
  testing::TempDir dir("net_ckpt");
  NetworkBundle net(testing::tiny_arch());
  net.anchor_logits().node()->value[1] = 0.7f;
  const auto path = dir.path / "net.ckpt";
  write_archive(path, bundle_to_archive(net));
  const auto loaded = bundle_from_archive(read_archive(path));
  const Var s(testing::images(2, 32, 10));
  const Var a = net.decode(net.encode_content(s), net.encode_style(s, {1}));
  const Var b = loaded->decode(loaded->encode_content(s), loaded->encode_style(s, {1}));
  CHECK(max_abs_diff(a.value(), b.value()) <= 1e-6f);
  CHECK(loaded->anchor_logits().value()[1] == 0.7f);
}

TEST_CASE("checkpoint errors name the problem") {
  testing::TempDir dir("net_ckpt_err");
  NetworkBundle net(testing::tiny_arch());
  Archive a = bundle_to_archive(net);
  ArchConfig wider = testing::tiny_arch();
  wider.base_width = 16;
  NetworkBundle other(wider);
  CHECK_THROWS_AS(load_parameters(other, a), IoError);
  CHECK_THROWS_AS(read_archive(dir.path / "missing.ckpt"), IoError);
  std::ofstream(dir.path / "junk.ckpt") << "not a checkpoint";
  CHECK_THROWS_AS(read_archive(dir.path / "junk.ckpt"), IoError);
  CHECK(a.metadata["format_version"] == kCheckpointFormatVersion);
  CHECK(arch_from_json(arch_to_json(wider)).base_width == 16);
}
