#include "manifest/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "manifest/checkpoint.hpp"
#include "manifest/error.hpp"

namespace manifest {
namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void check_finite(const std::string& name, const Var& v) {
  const double x = v.value()[0];
  if (!std::isfinite(x)) throw NumericalError("non-finite loss term '" + name + "' (" + std::to_string(x) + ")");
}

}  // namespace

Trainer::Trainer(NetworkBundle& bundle, const TrainingConfig& config)
    : bundle_(bundle),
      config_(config),
      mask_(config.mask()),
      state_{0,
             Adam(bundle.generator_parameters(), config.lr_gen, config.beta1, config.beta2),
             Adam(bundle.discriminator_parameters(), config.lr_disc, config.beta1, config.beta2),
             std::mt19937_64(stream_seed(config.seed, 1)),
             std::mt19937_64(stream_seed(config.seed, 2)),
             {}},
      patches_(config.arch.patch_size, stream_seed(config.seed, 3)) {
  if (config.arch.num_domains != bundle.arch().num_domains) {
    throw ConfigError("config key 'anchors' disagrees with the network's anchor count");
  }
  if (mask_.lgfs_only && bundle.arch().num_domains < 2) throw ConfigError("lgfs_only needs a non-identity anchor");
}

LossReport Trainer::train_step(const TrainBatch& batch) {
  const ArchConfig& arch = bundle_.arch();
  validate_images(batch.source, arch.downsamples);
  const int n = batch.source.dim(0);
  if (batch.fewshot.rank() != 4 || batch.fewshot.dim(0) != n) {
    throw DimensionError("few-shot batch must hold " + std::to_string(n) + " images");
  }
  if (!mask_.lgfs_only) {
    if (static_cast<int>(batch.anchors.size()) != arch.num_domains) {
      throw DimensionError("need one anchor batch per anchor");
    }
    for (int i = 1; i < arch.num_domains; ++i) {
      if (batch.anchors[i].shape() != batch.source.shape()) {
        throw DimensionError("anchor batch " + std::to_string(i) + " has shape " +
                             shape_str(batch.anchors[i].shape()));
      }
    }
  }

  if (config_.lr_decay_every > 0) {
    const float f = std::pow(config_.lr_decay_gamma, static_cast<float>(state_.step / config_.lr_decay_every));
    state_.generator.set_lr(config_.lr_gen * f);
    state_.discriminator.set_lr(config_.lr_disc * f);
  }

  // Drawn every step, whatever the mask, so the streams stay aligned.
  const DomainLabel c{std::uniform_int_distribution<int>(0, arch.num_domains - 1)(state_.schedule_rng)};
  const bool exemplar_draw = std::bernoulli_distribution(config_.exemplar_prob)(state_.schedule_rng);
  const int exemplar_index = std::uniform_int_distribution<int>(0, n - 1)(state_.schedule_rng);
  const GermMode mode = (mask_.germ && exemplar_draw) ? GermMode::exemplar : GermMode::general;
  last_mode_ = mode;
  last_anchor_ = mask_.lgfs_only ? DomainLabel{1} : c;

  const Var s(batch.source);
  const Var t(batch.fewshot);
  const Tensor t_ex = batch.fewshot.slice_batch(exemplar_index, exemplar_index + 1);
  const Var content = bundle_.encode_content(s);

  Var s_tilde, s_tilde_c, a_c;
  ReconstructionTerms recon;
  if (mask_.lgfs_only) {
    const Var z_t = bundle_.encode_style(t, {1});
    s_tilde = bundle_.decode(content, z_t);
    recon = reconstruction_losses(bundle_, s, content, s_tilde, z_t, {1});
  } else {
    std::vector<Var> codes;
    for (int i = 0; i < arch.num_domains; ++i) {
      codes.push_back(bundle_.encode_style(i == 0 ? s : Var(batch.anchors[i]), {i}));
    }
    const AnchorStyleBank bank(codes);
    const Var z_c = select_style(bank, c);
    s_tilde_c = bundle_.decode(content, z_c);
    a_c = c.index == 0 ? s : Var(batch.anchors[c.index]);
    recon = reconstruction_losses(bundle_, s, content, s_tilde_c, z_c, c);

    Var s_w;
    if (mask_.wmi) {
      s_w = bundle_.decode(content, interpolate_style(bank, AnchorWeights(bundle_.anchor_logits())));
    } else {
      s_w = c.index == 1 ? s_tilde_c : bundle_.decode(content, select_style(bank, {1}));
    }
    if (mask_.germ) {
      const ResidualConditioning z_r = mode == GermMode::exemplar
                                           ? exemplar_conditioning(bundle_, t_ex)
                                           : general_conditioning(arch.conditioning_dim(), state_.conditioning_rng);
      s_tilde = compose(s_w, residual(bundle_, content, z_r));
    } else {
      s_tilde = s_w;
    }
  }

  std::map<std::string, double> comp;
  for (const auto& name : loss_component_names()) comp[name] = 0.0;

  // Discriminators first, on detached fakes.
  state_.discriminator.zero_grad();
  std::vector<Var> d_terms;
  if (mask_.patch_loss) {
    const Var l = patch_loss_D(bundle_, patches_, s_tilde, t, config_.patch_count);
    check_finite("patch_D", l);
    comp["patch_D"] = l.value()[0];
    d_terms.push_back(l);
  }
  if (!mask_.lgfs_only) {
    const Var l = adv_loss_D(bundle_, s_tilde_c, a_c, c);
    check_finite("adv_D", l);
    comp["adv_D"] = l.value()[0];
    d_terms.push_back(l);
  }
  if (!d_terms.empty()) {
    Var total_d = d_terms[0];
    for (std::size_t i = 1; i < d_terms.size(); ++i) total_d = op::add(total_d, d_terms[i]);
    backward(total_d);
    state_.discriminator.step();
  }
  if (hook_) hook_("discriminator");

  // Generators against the updated discriminators.
  state_.generator.zero_grad();
  const LossWeights& w = config_.weights;
  std::vector<std::pair<std::string, Var>> g_terms;
  auto add_term = [&](const std::string& name, const Var& v, float weight) {
    check_finite(name, v);
    comp[name] = v.value()[0];
    g_terms.emplace_back(name, op::scale(v, weight));
  };
  if (mask_.style_loss) {
    const Var target = mode == GermMode::exemplar ? Var(t_ex) : t;
    add_term("style", style_loss(bundle_.extractor(), s_tilde, target), w.style);
  }
  if (mask_.patch_loss) add_term("patch_G", patch_loss_G(bundle_, patches_, s_tilde, config_.patch_count), w.patch);
  if (!mask_.lgfs_only) add_term("adv_G", adv_loss_G(bundle_, s_tilde_c, c), w.adv);
  add_term("recon_image", recon.image, w.recon_image);
  add_term("recon_style", recon.style, w.recon_style);
  add_term("recon_content", recon.content, w.recon_content);

  LossReport report = assemble(comp, w);
  Var total_g = g_terms[0].second;
  for (std::size_t i = 1; i < g_terms.size(); ++i) total_g = op::add(total_g, g_terms[i].second);
  backward(total_g);
  state_.generator.step();
  state_.discriminator.zero_grad();
  if (hook_) hook_("generator");

  ++state_.step;
  report.values["anchor"] = last_anchor_.index;
  report.values["exemplar_mode"] = mode == GermMode::exemplar ? 1.0 : 0.0;
  const Tensor wv = AnchorWeights(bundle_.anchor_logits()).weight_values();
  for (int i = 0; i < arch.num_domains; ++i) report.values["w." + std::to_string(i)] = wv[i];
  for (const auto& name : {"total_G", "total_D"}) {
    auto it = state_.running.find(name);
    const double v = report.at(name);
    state_.running[name] = it == state_.running.end() ? v : 0.98 * it->second + 0.02 * v;
  }
  return report;
}

Archive Trainer::to_archive() const {
  Archive a = bundle_to_archive(bundle_);
  state_.generator.save(a, "opt.gen");
  state_.discriminator.save(a, "opt.disc");
  a.metadata["train"] = {{"step", state_.step},
                         {"schedule_rng", rng_state(state_.schedule_rng)},
                         {"conditioning_rng", rng_state(state_.conditioning_rng)},
                         {"patch_rng", rng_state(const_cast<PatchSampler&>(patches_).rng())},
                         {"running", state_.running}};
  a.metadata["ablate"] = ablation_flags(mask_);
  a.metadata["config"] = config_.to_text();
  return a;
}

void Trainer::restore(const Archive& archive) {
  if (!archive.metadata.contains("train")) throw IoError("checkpoint holds no training state");
  std::vector<std::string> flags = archive.metadata.value("ablate", std::vector<std::string>{});
  if (ablation_switches(flags) != mask_) throw ConfigError("config key 'ablate' differs from the resumed checkpoint");
  load_parameters(bundle_, archive);
  state_.generator.load(archive, "opt.gen");
  state_.discriminator.load(archive, "opt.disc");
  const auto& tr = archive.metadata["train"];
  state_.step = tr.at("step").get<long>();
  restore_rng(state_.schedule_rng, tr.at("schedule_rng").get<std::string>());
  restore_rng(state_.conditioning_rng, tr.at("conditioning_rng").get<std::string>());
  restore_rng(patches_.rng(), tr.at("patch_rng").get<std::string>());
  state_.running = tr.at("running").get<std::map<std::string, double>>();
}

std::vector<Tensor> mean_style_references(const TrainingConfig& config, const TrainingData& data) {
  std::vector<Tensor> refs;
  for (std::size_t i = 0; i < data.anchors.size(); ++i) refs.push_back(data.anchors[i].first(config.mean_style_samples));
  if (config.mask().lgfs_only && refs.size() > 1) refs[1] = data.fewshot.first(config.mean_style_samples);
  return refs;
}

FitResult fit(const TrainingConfig& config, const TrainingData& data, std::ostream* progress) {
  namespace fs = std::filesystem;
  config.validate();
  const fs::path out = config.out_dir;
  const fs::path ckpt_dir = out / "checkpoints";
  std::error_code ec;
  fs::create_directories(ckpt_dir, ec);
  if (ec) throw IoError(ckpt_dir.string() + ": " + ec.message());
  config.save_file(out / "config.txt");

  NetworkBundle bundle(config.arch);
  Trainer trainer(bundle, config);
  BatchSampler source(data.source, stream_seed(config.seed, 10));
  BatchSampler fewshot(data.fewshot, stream_seed(config.seed, 11));
  std::vector<BatchSampler> anchors;
  for (std::size_t i = 0; i < data.anchors.size(); ++i) anchors.emplace_back(data.anchors[i], stream_seed(config.seed, 12 + i));

  if (!config.resume.empty()) {
    const Archive a = read_archive(config.resume);
    trainer.restore(a);
    const auto& st = a.metadata.at("samplers");
    source.restore(st.at("source"));
    fewshot.restore(st.at("fewshot"));
    for (std::size_t i = 0; i < anchors.size(); ++i) anchors[i].restore(st.at("anchors").at(i));
  }

  const std::vector<Tensor> refs = mean_style_references(config, data);
  auto save = [&](const fs::path& path) {
    update_mean_styles(bundle, refs);
    Archive a = trainer.to_archive();
    nlohmann::json anchor_states = nlohmann::json::array();
    for (const auto& s : anchors) anchor_states.push_back(s.state());
    a.metadata["samplers"] = {{"source", source.state()}, {"fewshot", fewshot.state()}, {"anchors", anchor_states}};
    write_archive(path, a);
  };

  const fs::path log_path = out / "metrics.tsv";
  std::ofstream log(log_path, config.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError(log_path.string() + ": cannot open metrics log");
  log << std::setprecision(9);

  const int report_every = std::max(1, config.iterations / 20);
  while (trainer.step() < config.iterations) {
    TrainBatch batch;
    batch.source = source.next(config.batch_size);
    batch.fewshot = fewshot.next(config.batch_size);
    batch.anchors.resize(anchors.size());
    for (std::size_t i = 1; i < anchors.size(); ++i) batch.anchors[i] = anchors[i].next(config.batch_size);
    const LossReport report = trainer.train_step(batch);
    const long step = trainer.step();
    for (const auto& [name, value] : report.values) log << step << '\t' << name << '\t' << value << '\n';
    if (!log) throw IoError(log_path.string() + ": write failed");
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%06ld.ckpt", step);
      save(ckpt_dir / name);
    }
    if (progress && (step % report_every == 0 || step == config.iterations)) {
      *progress << "step " << step << "/" << config.iterations << "  total_G " << trainer.state().running.at("total_G")
                << "  total_D " << trainer.state().running.at("total_D") << '\n';
    }
  }
  log.close();
  FitResult result;
  result.checkpoint = out / "final.ckpt";
  result.metrics_log = log_path;
  result.steps = trainer.step();
  save(result.checkpoint);
  return result;
}

}  // namespace manifest
