// Acceptance run: oracle suites, structural invariants, toy end-to-end
// experiments, anchor-based translation and checkpoint round trip.
// Prints one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "manifest/checkpoint.hpp"
#include "manifest/error.hpp"
#include "manifest/evaluation.hpp"
#include "manifest/losses.hpp"
#include "manifest/manifold.hpp"
#include "manifest/toy_corpus.hpp"
#include "manifest/training.hpp"

using namespace manifest;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %-3s %-44s %s\n", ok ? "PASS" : "FAIL", id.c_str(), name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& msg) {
  std::cerr << "[acceptance] " << msg << std::endl;
}

Tensor random_images(int n, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor::uniform({n, 3, size, size}, rng, -1.0f, 1.0f);
}

std::uint64_t params_checksum(const std::vector<Var>& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : params) h = (h ^ checksum(p.value())) * 1099511628211ull;
  return h;
}

ArchConfig small_arch() {
  ArchConfig a;
  a.base_width = 8;
  a.downsamples = 2;
  a.res_blocks = 1;
  a.style_dim = 4;
  a.style_width = 8;
  a.mlp_dim = 16;
  a.disc_width = 8;
  a.patch_size = 8;
  a.extractor_widths = {8, 8, 16, 16};
  return a;
}

TrainingConfig small_config() {
  TrainingConfig c;
  c.arch = small_arch();
  c.resolution = 32;
  c.patch_count = 2;
  return c;
}

TrainBatch random_batch(int size, std::uint64_t seed) {
  TrainBatch b;
  b.source = random_images(1, size, seed);
  b.anchors = {Tensor(), random_images(1, size, seed + 1)};
  b.fewshot = random_images(1, size, seed + 2);
  return b;
}

// ---- 1. oracle suites

void adain_oracle() {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 6);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const int n = dim(rng), c = dim(rng), h = dim(rng) + 2, w = dim(rng) + 2;
    Tensor x = Tensor::randn({n, c, h, w}, rng, 3.0f);
    for (auto& v : x.vec()) v += 1.5f;
    const Tensor mu = Tensor::uniform({c}, rng, -2.0f, 2.0f);
    const Tensor sigma = Tensor::uniform({c}, rng, 0.1f, 2.0f);
    const Tensor y = adain(x, mu, sigma);
    const int hw = h * w;
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        double m = 0.0, s = 0.0;
        const float* p = y.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (int q = 0; q < hw; ++q) m += p[q];
        m /= hw;
        for (int q = 0; q < hw; ++q) s += (p[q] - m) * (p[q] - m);
        s = std::sqrt(s / hw);
        worst = std::max({worst, std::abs(m - mu[ch]), std::abs(s - sigma[ch])});
      }
  }
  report("1a", "AdaIN statistics oracle", worst < 1e-4, fmt("max |error| %.2e over 100 cases", worst));
}

void frechet_oracle() {
  const int n = 10000, d = 4;
  const double mu[d] = {1.0, -0.5, 0.75, 0.25};
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  Tensor x({n, d}), y({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      x[i * d + j] = static_cast<float>(g(rng));
      y[i * d + j] = static_cast<float>(mu[j] + g(rng));
    }
  double expected = 0.0;
  for (double m : mu) expected += m * m;
  const double got = frechet_distance(x, y);
  const double self = frechet_distance(x, x);
  const double rel = std::abs(got - expected) / expected;
  report("1b", "Frechet closed-form oracle", rel < 0.05 && std::abs(self) < 1e-6,
         fmt("d=%.4f vs |mu|^2=%.4f (%.2f%%), d(X,X)=%.1e", got, expected, 100 * rel, self));
}

void style_gradient_check() {
  ArchConfig arch = small_arch();
  arch.extractor_widths = {4, 6};
  NetworkBundle net(arch);
  std::mt19937_64 rng(13);
  const Tensor x0 = Tensor::uniform({1, 3, 4, 4}, rng, -1.0f, 1.0f);
  const Tensor t = Tensor::uniform({1, 3, 4, 4}, rng, -1.0f, 1.0f);
  Var x(x0, true);
  backward(style_loss(net.extractor(), x, Var(t)));
  const Tensor analytic = x.grad();

  auto loss = [&](const Tensor& v) { return double(style_loss(net.extractor(), Var(v), Var(t)).value()[0]); };
  // Larger steps cross ReLU kinks of the extractor, smaller ones hit float roundoff.
  const float h = 3e-3f;
  Tensor numeric(x0.shape());
  Tensor probe = x0;
  for (std::size_t i = 0; i < probe.numel(); ++i) {
    const float orig = probe[i];
    probe[i] = orig + h;
    const double up = loss(probe);
    probe[i] = orig - h;
    const double down = loss(probe);
    probe[i] = orig;
    numeric[i] = static_cast<float>((up - down) / (2.0 * h));
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < numeric.numel(); ++i) {
    num += (double(analytic[i]) - numeric[i]) * (double(analytic[i]) - numeric[i]);
    den += double(numeric[i]) * numeric[i];
  }
  const double rel = std::sqrt(num / den);
  report("1c", "style loss gradient vs central differences", rel < 1e-3, fmt("relative error %.2e on 4x4", rel));
}

void patch_sampler_checks() {
  PatchSampler sampler(6, 14);
  int counts[4] = {};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[sampler.draw({1, 3, 16, 16}).quarter_turns];
  double worst = 0.0;
  for (int c : counts) worst = std::max(worst, std::abs(c / double(draws) - 0.25));

  bool exact = true;
  const Var img(random_images(1, 16, 15));
  PatchSampler one(6, 16);
  for (int k = 0; k < 200 && exact; ++k) {
    const auto state = one.rng();
    const auto placement = one.draw({1, 3, 16, 16});
    one.rng() = state;
    const Tensor patch = one.sample(img, 1).value();
    for (int c = 0; c < 3; ++c) {
      std::vector<float> a, b;
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
          a.push_back(img.value()[(c * 16 + placement.top + y) * 16 + placement.left + x]);
          b.push_back(patch[(c * 6 + y) * 6 + x]);
        }
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      exact = exact && a == b;
    }
  }
  report("1d", "patch sampler rotations and multiset", worst <= 0.02 && exact,
         fmt("freq %.4f/%.4f/%.4f/%.4f, multiset %s", counts[0] / double(draws), counts[1] / double(draws),
             counts[2] / double(draws), counts[3] / double(draws), exact ? "exact" : "differs"));
}

// ---- 2. structural invariants

void structural_invariants() {
  const TrainingConfig config = small_config();

  {
    NetworkBundle net(config.arch);
    Trainer trainer(net, config);
    for (int i = 0; i < 100; ++i) trainer.train_step(random_batch(32, 100 + i));
    const Tensor w = AnchorWeights(net.anchor_logits()).weight_values();
    double sum = 0.0;
    bool nonneg = true;
    for (std::size_t i = 0; i < w.numel(); ++i) {
      sum += w[i];
      nonneg = nonneg && w[i] >= 0.0f;
    }
    report("2a", "simplex weights after 100 steps", nonneg && std::abs(sum - 1.0) < 1e-6,
           fmt("sum %.9f, w = (%.4f, %.4f)", sum, w[0], w[1]));
  }

  {
    NetworkBundle net(config.arch);
    Translator tr(net, ComponentMask{});
    const Var s(random_images(3, 32, 200));
    std::mt19937_64 rng(1);
    const Tensor base = tr.base(s, net.encode_content(s)).value();
    const Tensor general = tr.translate(s, GermMode::general, std::nullopt, rng).value();
    const Tensor exemplar = tr.translate(s, GermMode::exemplar, random_images(1, 32, 201), rng).value();
    const bool ok = base.vec() == general.vec() && base.vec() == exemplar.vec();
    report("2b", "zero residual at initialization", ok,
           fmt("max diff general %.1e, exemplar %.1e", max_abs_diff(base, general), max_abs_diff(base, exemplar)));
  }

  {
    NetworkBundle net(config.arch);
    Trainer trainer(net, config);
    const auto phi = params_checksum(net.extractor_parameters());
    bool exclusive = true;
    for (int i = 0; i < 10; ++i) {
      const auto g0 = params_checksum(net.generator_parameters());
      const auto d0 = params_checksum(net.discriminator_parameters());
      std::uint64_t g_mid = 0, d_mid = 0;
      trainer.set_phase_hook([&](const std::string& phase) {
        if (phase == "discriminator") {
          g_mid = params_checksum(net.generator_parameters());
          d_mid = params_checksum(net.discriminator_parameters());
        }
      });
      trainer.train_step(random_batch(32, 300 + i));
      const auto g1 = params_checksum(net.generator_parameters());
      const auto d1 = params_checksum(net.discriminator_parameters());
      exclusive = exclusive && g_mid == g0 && d_mid != d0 && g1 != g_mid && d1 == d_mid;
    }
    const bool frozen = params_checksum(net.extractor_parameters()) == phi;
    report("2c", "feature extractor frozen through training", frozen, frozen ? "checksum unchanged" : "checksum changed");
    report("2d", "generator/discriminator update exclusivity", exclusive, "checksums over 10 steps");
  }

  {
    auto run = [&] {
      NetworkBundle net(config.arch);
      Trainer trainer(net, config);
      for (int i = 0; i < 5; ++i) trainer.train_step(random_batch(32, 400 + i));
      std::vector<Var> all;
      for (const auto& e : net.params().entries()) all.push_back(e.var);
      return params_checksum(all);
    };
    const auto a = run(), b = run();
    report("2e", "bitwise reproducibility under a fixed seed", a == b, fmt("checksum %016llx", (unsigned long long)a));
  }
}

// ---- 3, 4, 5. toy end-to-end

struct ToyRun {
  std::unique_ptr<NetworkBundle> bundle;
  TrainingConfig config;
  EvalReport report;
  bool diverged = false;
  std::string error;
};

ToyRun toy_run(const fs::path& corpus, const fs::path& out, const std::string& ablate, int fewshot, long iterations,
               bool baseline) {
  TrainingConfig config;
  config.data_root = corpus.string();
  config.out_dir = out.string();
  config.iterations = iterations;
  config.checkpoint_every = 0;
  config.fewshot_count = fewshot;
  config.arch.base_width = 16;
  if (!ablate.empty()) config.set("ablate", ablate);
  config.validate();

  ToyRun run;
  run.config = config;
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream sink;
  try {
    const TrainingData data = load_training_data(config, &sink);
    const FitResult fitted = fit(config, data);
    run.bundle = bundle_from_archive(read_archive(fitted.checkpoint));
    EvalData eval = load_eval_data(config);
    EvalOptions options;
    options.untrained_baseline = baseline;
    run.report = evaluate_bundle(*run.bundle, config.mask(), eval, options);
  } catch (const NumericalError& e) {
    run.diverged = true;
    run.error = e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  note(fmt("%-10s %5ld iterations, |T|=%d: %.0f s%s", ablate.empty() ? "full" : ablate.c_str(), iterations, fewshot,
           secs, run.diverged ? " (diverged)" : ""));
  return run;
}

double metric(const ToyRun& r, const std::string& key) {
  const auto it = r.report.metrics.find(key);
  return it == r.report.metrics.end() ? std::nan("") : it->second;
}

void checkpoint_round_trip(const ToyRun& full, const fs::path& dir) {
  const fs::path path = dir / "roundtrip.ckpt";
  write_archive(path, bundle_to_archive(*full.bundle));
  const auto loaded = bundle_from_archive(read_archive(path));
  const ComponentMask mask = full.config.mask();
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Tensor x = random_images(1, full.config.resolution, 500 + i);
    const Tensor ex = random_images(1, full.config.resolution, 600 + i);
    const GermMode mode = i % 2 ? GermMode::exemplar : GermMode::general;
    std::mt19937_64 ra(i), rb(i);
    const Tensor a = translate_images(*full.bundle, mask, x, mode, &ex, ra);
    const Tensor b = translate_images(*loaded, mask, x, mode, &ex, rb);
    worst = std::max(worst, double(max_abs_diff(a, b)));
  }
  report("5", "checkpoint round trip", worst <= 1e-6, fmt("max |diff| %.1e over 10 inputs", worst));
}

void toy_experiments() {
  const fs::path root = fs::temp_directory_path() / ("manifest_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  ToyCorpusSpec spec;  // 64x64, |T| = 10
  generate_toy_corpus(spec, root / "data");
  ToyCorpusSpec one = spec;
  one.fewshot_count = 1;
  generate_toy_corpus(one, root / "data_oneshot");
  note("toy corpus written to " + root.string());

  const long iterations = 2000;
  const ToyRun full = toy_run(root / "data", root / "full", "", 10, iterations, true);
  const ToyRun lgfs = toy_run(root / "data", root / "lgfs_only", "lgfs_only", 10, iterations, false);
  const ToyRun no_style = toy_run(root / "data", root / "no_style", "no_style", 10, iterations, false);
  const ToyRun oneshot = toy_run(root / "data_oneshot", root / "oneshot", "", 1, 1000, false);

  auto report_oneshot = [&] {
    const double change = oneshot.diverged ? 0.0 : metric(oneshot, "mean_abs_change");
    report("3d", "one-shot training", !oneshot.diverged && change > 0.02,
           oneshot.diverged ? "diverged: " + oneshot.error : fmt("mean |output - source| %.4f", change));
  };

  if (full.diverged) {
    for (const char* id : {"3a", "3b", "3c"}) report(id, "toy run", false, "full run diverged: " + full.error);
    report_oneshot();
    for (const char* id : {"4", "5"}) report(id, "toy run", false, "full run diverged: " + full.error);
  } else {
    const double g = metric(full, "frechet_general"), u = metric(full, "frechet_untrained_general"),
                 src = metric(full, "frechet_source");
    report("3a", "general mode Frechet vs untrained and source", g <= 0.5 * u && g < src,
           fmt("%.4f vs untrained %.4f (-%.0f%%), source %.4f", g, u, 100 * (1 - g / u), src));

    const double m = metric(full, "exemplar_fidelity_matched"), mm = metric(full, "exemplar_fidelity_mismatched");
    report("3b", "exemplar fidelity matched vs mismatched", m <= 0.8 * mm,
           fmt("matched %.4f, mismatched %.4f (-%.0f%%)", m, mm, 100 * (1 - m / mm)));

    const double c_full = metric(full, "consistency_sky"), c_lgfs = metric(lgfs, "consistency_sky");
    const double f_ns = metric(no_style, "frechet_general");
    const bool dir_ok = !lgfs.diverged && !no_style.diverged && c_lgfs > c_full && f_ns > g;
    report("3c", "ablation direction of effect", dir_ok,
           fmt("sky consistency lgfs_only %.5f vs full %.5f; Frechet no_style %.4f vs full %.4f", c_lgfs, c_full,
               f_ns, g));

    report_oneshot();

    const double corr = metric(full, "frechet_anchor_corrected"), unc = metric(full, "frechet_anchor_uncorrected");
    report("4", "residual-corrected anchor translation", corr < unc,
           fmt("corrected %.4f vs uncorrected %.4f", corr, unc));
  }

  if (!full.diverged) checkpoint_round_trip(full, root);
  std::error_code ec;
  fs::remove_all(root, ec);
}

}  // namespace

int main() {
  try {
    adain_oracle();
    frechet_oracle();
    style_gradient_check();
    patch_sampler_checks();
    structural_invariants();
    toy_experiments();
  } catch (const std::exception& e) {
    std::printf("FAIL     acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures ? 1 : 0;
}
