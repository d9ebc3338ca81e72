#include "manifest/networks.hpp"

#include <numeric>

#include "manifest/checkpoint.hpp"

namespace manifest {
namespace {

constexpr float kLeakySlope = 0.2f;

Var relu_in(const Var& x) { return op::relu(op::instance_norm(x)); }

}  // namespace

int ArchConfig::extractor_depth() const {
  if (extractor == "identity") return 1;
  if (extractor.rfind("vgg:", 0) == 0) return 4;
  return static_cast<int>(extractor_widths.size());
}

int ArchConfig::conditioning_dim() const {
  if (extractor == "identity") return 2 * 3;
  if (extractor.rfind("vgg:", 0) == 0) return 2 * (64 + 128 + 256 + 512);
  return 2 * std::accumulate(extractor_widths.begin(), extractor_widths.end(), 0);
}

void ArchConfig::validate() const {
  auto positive = [](int v, const char* key) {
    if (v <= 0) throw ConfigError(std::string("architecture key '") + key + "' must be positive");
  };
  positive(base_width, "base_width");
  positive(res_blocks, "res_blocks");
  positive(style_dim, "style_dim");
  positive(style_width, "style_width");
  positive(mlp_dim, "mlp_dim");
  positive(disc_width, "disc_width");
  positive(patch_size, "patch_size");
  if (downsamples < 1) throw ConfigError("architecture key 'downsamples' must be at least 1");
  if (base_width % 2 != 0) throw ConfigError("architecture key 'base_width' must be even");
  if (num_domains < 2) throw ConfigError("anchor set needs the identity anchor plus at least one more");
  if (patch_size % 4 != 0) throw ConfigError("architecture key 'patch_size' must be a multiple of 4");
  if (extractor == "random") {
    if (extractor_widths.empty()) throw ConfigError("random extractor needs at least one stage");
    for (int w : extractor_widths) positive(w, "extractor_widths");
  } else if (extractor != "identity" && extractor.rfind("vgg:", 0) != 0) {
    throw ConfigError("unknown extractor '" + extractor + "'");
  }
}

void validate_images(const Tensor& x, int downsamples) {
  if (x.rank() != 4 || x.dim(1) != 3) {
    throw DimensionError("expected an image batch (N,3,H,W), got " + shape_str(x.shape()));
  }
  const int step = 1 << downsamples;
  if (x.dim(2) % step != 0 || x.dim(3) % step != 0 || x.dim(2) == 0 || x.dim(3) == 0) {
    throw DimensionError("image size " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                         " is not divisible by " + std::to_string(step));
  }
}

ContentEncoder::ContentEncoder(ParameterStore& store, const ArchConfig& arch, std::mt19937_64& rng)
    : downsamples_(arch.downsamples) {
  int ch = arch.base_width;
  down_.emplace_back(store, "E.conv0", 3, ch, 7, 1, 3, rng);
  for (int i = 0; i < arch.downsamples; ++i) {
    down_.emplace_back(store, "E.down" + std::to_string(i), ch, 2 * ch, 4, 2, 1, rng);
    ch *= 2;
  }
  for (int i = 0; i < arch.res_blocks; ++i) {
    const std::string p = "E.res" + std::to_string(i);
    res_.emplace_back(Conv2d(store, p + ".conv0", ch, ch, 3, 1, 1, rng), Conv2d(store, p + ".conv1", ch, ch, 3, 1, 1, rng));
  }
}

Var ContentEncoder::operator()(const Var& images) const {
  validate_images(images.value(), downsamples_);
  Var h = images;
  for (const auto& conv : down_) h = relu_in(conv(h));
  for (const auto& [c0, c1] : res_) {
    Var r = op::instance_norm(c1(relu_in(c0(h))));
    h = op::add(h, r);
  }
  return h;
}

StyleEncoder::StyleEncoder(ParameterStore& store, const ArchConfig& arch, std::mt19937_64& rng)
    : style_dim_(arch.style_dim) {
  int ch = arch.style_width;
  trunk_.emplace_back(store, "Z.conv0", 3, ch, 7, 1, 3, rng);
  const int steps = arch.downsamples + 2;
  for (int i = 0; i < steps; ++i) {
    const int next = i < 2 ? 2 * ch : ch;
    trunk_.emplace_back(store, "Z.down" + std::to_string(i), ch, next, 3, 2, 1, rng);
    ch = next;
  }
  for (int d = 0; d < arch.num_domains; ++d) {
    heads_.emplace_back(store, "Z.head" + std::to_string(d), ch, arch.style_dim, rng);
  }
}

Var StyleEncoder::operator()(const Var& images, DomainLabel domain) const {
  if (domain.index < 0 || domain.index >= static_cast<int>(heads_.size())) {
    throw DomainError("unknown domain index " + std::to_string(domain.index));
  }
  if (images.value().rank() != 4 || images.dim(1) != 3) {
    throw DimensionError("style encoder expects (N,3,H,W), got " + shape_str(images.shape()));
  }
  Var h = images;
  for (const auto& conv : trunk_) h = op::relu(conv(h));
  return heads_[static_cast<std::size_t>(domain.index)](op::global_avg_pool(h));
}

AdainGenerator::AdainGenerator(ParameterStore& store, const std::string& name, const ArchConfig& arch,
                               int in_channels, int width, int cond_dim, bool zero_output, std::mt19937_64& rng)
    : cond_dim_(cond_dim), width_(width) {
  if (in_channels != width) {
    has_input_proj_ = true;
    input_proj_ = Conv2d(store, name + ".proj", in_channels, width, 3, 1, 1, rng);
  }
  for (int i = 0; i < arch.res_blocks; ++i) {
    const std::string p = name + ".res" + std::to_string(i);
    res_.emplace_back(Conv2d(store, p + ".conv0", width, width, 3, 1, 1, rng),
                      Conv2d(store, p + ".conv1", width, width, 3, 1, 1, rng));
  }
  adain_params_ = arch.res_blocks * 2 * 2 * width;
  mlp_ = Mlp(store, name + ".mlp", {cond_dim, arch.mlp_dim, arch.mlp_dim, adain_params_}, rng);
  int ch = width;
  for (int i = 0; i < arch.downsamples; ++i) {
    const std::string p = name + ".up" + std::to_string(i);
    const int next = std::max(ch / 2, 1);
    up_.emplace_back(Conv2d(store, p + ".conv", ch, next, 3, 1, 1, rng), LayerNorm(store, p + ".norm", next));
    ch = next;
  }
  out_ = Conv2d(store, name + ".out", ch, 3, 3, 1, 1, rng, zero_output ? Init::zeros : Init::he_normal);
}

Var AdainGenerator::operator()(const Var& content, const Var& conditioning) const {
  if (content.value().rank() != 4) throw DimensionError("generator content must be (N,C,h,w)");
  if (conditioning.value().rank() != 2 || conditioning.dim(1) != cond_dim_) {
    throw DimensionError("conditioning " + shape_str(conditioning.shape()) + " does not have length " +
                         std::to_string(cond_dim_));
  }
  if (conditioning.dim(0) != content.dim(0)) {
    throw DimensionError("batch size mismatch: content " + std::to_string(content.dim(0)) + " vs conditioning " +
                         std::to_string(conditioning.dim(0)));
  }
  Var h = content;
  if (has_input_proj_) h = op::relu(input_proj_(h));
  const Var params = mlp_(conditioning);
  int off = 0;
  auto next_adain = [&](const Var& x) {
    Var gamma = op::add_scalar(op::slice_cols(params, off, off + width_), 1.0f);
    Var beta = op::slice_cols(params, off + width_, off + 2 * width_);
    off += 2 * width_;
    return op::adain(x, gamma, beta);
  };
  for (const auto& [c0, c1] : res_) {
    Var r = op::relu(next_adain(c0(h)));
    r = next_adain(c1(r));
    h = op::add(h, r);
  }
  for (const auto& [conv, norm] : up_) h = op::relu(norm(conv(op::upsample2x(h))));
  return op::tanh(out_(h));
}

MultiTargetDiscriminator::MultiTargetDiscriminator(ParameterStore& store, const ArchConfig& arch,
                                                   std::mt19937_64& rng)
    : num_domains_(arch.num_domains) {
  int ch = arch.disc_width;
  trunk_.emplace_back(store, "Dmt.conv0", 3, ch, 4, 2, 1, rng);
  trunk_.emplace_back(store, "Dmt.conv1", ch, 2 * ch, 4, 2, 1, rng);
  trunk_.emplace_back(store, "Dmt.conv2", 2 * ch, 4 * ch, 4, 2, 1, rng);
  head_ = Conv2d(store, "Dmt.head", 4 * ch, arch.num_domains, 3, 1, 1, rng);
}

Var MultiTargetDiscriminator::operator()(const Var& images, DomainLabel domain) const {
  if (domain.index < 0 || domain.index >= num_domains_) {
    throw DomainError("unknown domain index " + std::to_string(domain.index));
  }
  if (images.value().rank() != 4 || images.dim(1) != 3) {
    throw DimensionError("discriminator expects (N,3,H,W), got " + shape_str(images.shape()));
  }
  Var h = images;
  for (const auto& conv : trunk_) h = op::leaky_relu(conv(h), kLeakySlope);
  return op::select_channel(head_(h), domain.index);
}

PatchDiscriminator::PatchDiscriminator(ParameterStore& store, const ArchConfig& arch, std::mt19937_64& rng)
    : patch_size_(arch.patch_size) {
  const int ch = arch.disc_width;
  layers_.emplace_back(store, "Dfs.conv0", 3, ch, 4, 2, 1, rng);
  layers_.emplace_back(store, "Dfs.conv1", ch, 2 * ch, 4, 2, 1, rng);
  layers_.emplace_back(store, "Dfs.head", 2 * ch, 1, arch.patch_size / 4, 1, 0, rng);
}

Var PatchDiscriminator::operator()(const Var& patches) const {
  const Tensor& p = patches.value();
  if (p.rank() != 4 || p.dim(1) != 3 || p.dim(2) != patch_size_ || p.dim(3) != patch_size_) {
    throw DimensionError("patch discriminator expects (N,3," + std::to_string(patch_size_) + "," +
                         std::to_string(patch_size_) + "), got " + shape_str(p.shape()));
  }
  Var h = op::leaky_relu(layers_[0](patches), kLeakySlope);
  h = op::leaky_relu(layers_[1](h), kLeakySlope);
  return layers_[2](h);
}

FeatureExtractor FeatureExtractor::random_pyramid(ParameterStore& store, const std::vector<int>& widths,
                                                  std::uint64_t seed) {
  FeatureExtractor fx;
  std::mt19937_64 rng(seed);
  int prev = 3;
  fx.id_ = "random-pyramid:seed=" + std::to_string(seed) + ":widths=";
  for (std::size_t k = 0; k < widths.size(); ++k) {
    Layer layer;
    layer.conv = Conv2d(store, "phi.stage" + std::to_string(k), prev, widths[k], 3, 1, 1, rng, Init::he_normal, false);
    layer.pool_before = k > 0;
    layer.stage_output = true;
    fx.layers_.push_back(layer);
    prev = widths[k];
    fx.id_ += (k ? "-" : "") + std::to_string(widths[k]);
  }
  return fx;
}

FeatureExtractor FeatureExtractor::identity(ParameterStore& store) {
  FeatureExtractor fx;
  std::mt19937_64 rng(0);
  Layer layer;
  layer.conv = Conv2d(store, "phi.identity", 3, 3, 1, 1, 0, rng, Init::identity, false);
  layer.relu = false;
  layer.stage_output = true;
  fx.layers_.push_back(layer);
  fx.id_ = "identity";
  return fx;
}

FeatureExtractor FeatureExtractor::vgg19(ParameterStore& store, const std::string& weights_path) {
  const Archive archive = read_archive(weights_path);
  struct Spec {
    const char* name;
    int in, out;
    bool pool_before, stage;
  };
  static constexpr Spec specs[] = {
      {"conv1_1", 3, 64, false, true},     {"conv1_2", 64, 64, false, false},   {"conv2_1", 64, 128, true, true},
      {"conv2_2", 128, 128, false, false}, {"conv3_1", 128, 256, true, true},   {"conv3_2", 256, 256, false, false},
      {"conv3_3", 256, 256, false, false}, {"conv3_4", 256, 256, false, false}, {"conv4_1", 256, 512, true, true},
  };
  FeatureExtractor fx;
  fx.imagenet_input_ = true;
  fx.id_ = "vgg19:" + weights_path;
  for (const auto& s : specs) {
    const Tensor* w = archive.find(std::string(s.name) + ".weight");
    const Tensor* b = archive.find(std::string(s.name) + ".bias");
    if (!w || !b) throw IoError(weights_path + ": missing VGG layer " + s.name);
    if (w->shape() != Shape{s.out, s.in, 3, 3} || b->shape() != Shape{s.out}) {
      throw IoError(weights_path + ": VGG layer " + s.name + " has shape " + shape_str(w->shape()));
    }
    Layer layer;
    layer.conv.stride = 1;
    layer.conv.pad = 1;
    layer.conv.weight = store.create(std::string("phi.") + s.name + ".weight", *w, false);
    layer.conv.bias = store.create(std::string("phi.") + s.name + ".bias", *b, false);
    layer.pool_before = s.pool_before;
    layer.stage_output = s.stage;
    fx.layers_.push_back(layer);
  }
  return fx;
}

std::vector<Var> FeatureExtractor::stages(const Var& images) const {
  Var h = images;
  if (imagenet_input_) {
    // [-1,1] RGB to ImageNet-normalized input.
    static constexpr float mean[3] = {0.485f, 0.456f, 0.406f};
    static constexpr float stdv[3] = {0.229f, 0.224f, 0.225f};
    const int n = images.dim(0), hw = images.dim(2) * images.dim(3);
    Tensor scale(images.shape()), shift(images.shape());
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c)
        for (int k = 0; k < hw; ++k) {
          const long idx = (static_cast<long>(i) * 3 + c) * hw + k;
          scale[idx] = 0.5f / stdv[c];
          shift[idx] = (0.5f - mean[c]) / stdv[c];
        }
    h = op::add(op::mul(h, Var(std::move(scale))), Var(std::move(shift)));
  }
  std::vector<Var> out;
  for (const auto& layer : layers_) {
    if (layer.pool_before) h = op::avg_pool2x(h);
    h = layer.conv(h);
    if (layer.relu) h = op::relu(h);
    if (layer.stage_output) out.push_back(h);
  }
  return out;
}

std::vector<int> FeatureExtractor::stage_channels() const {
  std::vector<int> out;
  for (const auto& layer : layers_) {
    if (layer.stage_output) out.push_back(layer.conv.weight.dim(0));
  }
  return out;
}

std::vector<std::pair<Var, Var>> feature_statistics(const FeatureExtractor& phi, const Var& images) {
  std::vector<std::pair<Var, Var>> out;
  for (const Var& stage : phi.stages(images)) {
    auto [mu, sigma] = op::channel_stats(stage);
    out.emplace_back(op::mean_rows(mu), op::mean_rows(sigma));
  }
  return out;
}

NetworkBundle::NetworkBundle(const ArchConfig& arch) : arch_(arch) {
  arch_.validate();
  std::mt19937_64 rng(arch_.seed);
  content_ = ContentEncoder(params_, arch_, rng);
  style_ = StyleEncoder(params_, arch_, rng);
  const int cc = arch_.content_channels();
  decoder_ = AdainGenerator(params_, "G", arch_, cc, cc, arch_.style_dim, false, rng);
  residual_gen_ = AdainGenerator(params_, "Gr", arch_, cc, cc / 2, arch_.conditioning_dim(), true, rng);
  disc_mt_ = MultiTargetDiscriminator(params_, arch_, rng);
  disc_fs_ = PatchDiscriminator(params_, arch_, rng);
  if (arch_.extractor == "identity") {
    phi_ = FeatureExtractor::identity(params_);
  } else if (arch_.extractor.rfind("vgg:", 0) == 0) {
    phi_ = FeatureExtractor::vgg19(params_, arch_.extractor.substr(4));
  } else {
    phi_ = FeatureExtractor::random_pyramid(params_, arch_.extractor_widths, arch_.phi_seed);
  }
  anchor_logits_ = params_.create("manifold.logits", Tensor::zeros({arch_.num_domains}));
  for (int d = 0; d < arch_.num_domains; ++d) {
    mean_styles_.push_back(params_.create("manifold.mean_style." + std::to_string(d), Tensor::zeros({1, arch_.style_dim}), false));
  }
}

void NetworkBundle::check_domain(DomainLabel d) const {
  if (d.index < 0 || d.index >= arch_.num_domains) throw DomainError("unknown domain index " + std::to_string(d.index));
}

Var NetworkBundle::encode_content(const Var& images) const { return content_(images); }

Var NetworkBundle::encode_style(const Var& images, DomainLabel domain) const { return style_(images, domain); }

Var NetworkBundle::decode(const Var& content, const Var& style) const { return decoder_(content, style); }

Var NetworkBundle::residual(const Var& content, const Var& conditioning) const {
  return residual_gen_(content, conditioning);
}

Var NetworkBundle::discriminate_multitarget(const Var& images, DomainLabel domain) const {
  return disc_mt_(images, domain);
}

Var NetworkBundle::discriminate_patches(const Var& patches) const { return disc_fs_(patches); }

FeatureStatistics NetworkBundle::extract_statistics(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(0) == 0) {
    throw DimensionError("extract_statistics expects a non-empty (N,3,H,W) batch, got " + shape_str(images.shape()));
  }
  NoGradGuard guard;
  FeatureStatistics stats;
  for (auto& [mu, sigma] : feature_statistics(phi_, Var(images))) {
    stats.mu.push_back(mu.value().reshaped({mu.dim(1)}));
    stats.sigma.push_back(sigma.value().reshaped({sigma.dim(1)}));
  }
  return stats;
}

Var NetworkBundle::mean_style(DomainLabel d) const {
  check_domain(d);
  return mean_styles_[static_cast<std::size_t>(d.index)];
}

std::vector<Var> NetworkBundle::generator_parameters() const {
  return params_.trainable_with_prefix({"E.", "Z.", "G.", "Gr.", "manifold.logits"});
}

std::vector<Var> NetworkBundle::discriminator_parameters() const {
  return params_.trainable_with_prefix({"Dmt.", "Dfs."});
}

std::vector<Var> NetworkBundle::extractor_parameters() const {
  std::vector<Var> out;
  for (const auto& e : params_.entries()) {
    if (e.name.rfind("phi.", 0) == 0) out.push_back(e.var);
  }
  return out;
}

Tensor adain(const Tensor& features, const Tensor& target_mu, const Tensor& target_sigma) {
  if (features.rank() != 4) throw DimensionError("adain expects (N,C,H,W) features");
  const int n = features.dim(0), c = features.dim(1);
  if (target_mu.numel() != static_cast<std::size_t>(c) || target_sigma.numel() != static_cast<std::size_t>(c)) {
    throw DimensionError("adain: " + std::to_string(c) + " channels but " + std::to_string(target_mu.numel()) +
                         " target statistics");
  }
  for (float s : target_sigma.vec()) {
    if (!(s >= 0.0f)) throw std::invalid_argument("adain: target sigma must be non-negative");
  }
  Tensor gamma({n, c}), beta({n, c});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      gamma[static_cast<std::size_t>(i) * c + ch] = target_sigma[ch];
      beta[static_cast<std::size_t>(i) * c + ch] = target_mu[ch];
    }
  NoGradGuard guard;
  return op::adain(Var(features), Var(std::move(gamma)), Var(std::move(beta))).value();
}

}  // namespace manifest
