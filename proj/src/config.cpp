#include "manifest/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "manifest/manifold.hpp"

namespace manifest {
namespace {

struct KeyBinding {
  ConfigKeyInfo info;
  std::function<void(TrainingConfig&, const std::string&)> set;
  std::function<std::string(const TrainingConfig&)> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out{};
  is >> out;
  if (is.fail() || !is.eof()) throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

// Shortest text that parses back to the same value.
template <typename T>
std::string format_number(T v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

#define BIND_NUM(key, field, desc)                                                                          \
  KeyBinding {                                                                                              \
    {key, desc}, [](TrainingConfig& c, const std::string& v) { c.field = parse_number<decltype(c.field)>(key, v); }, \
        [](const TrainingConfig& c) { return format_number(c.field); }                                       \
  }

#define BIND_STR(key, field, desc)                                                                       \
  KeyBinding {                                                                                           \
    {key, desc}, [](TrainingConfig& c, const std::string& v) { c.field = v; },                          \
        [](const TrainingConfig& c) { return c.field; }                                                  \
  }

const std::vector<KeyBinding>& bindings() {
  static const std::vector<KeyBinding> b = {
      BIND_STR("data_root", data_root, "corpus root holding source/, anchor_<name>/ and fewshot/"),
      BIND_STR("out_dir", out_dir, "run directory for checkpoints, metrics log and resolved config"),
      BIND_STR("resume", resume, "checkpoint to continue from (empty: fresh start)"),
      BIND_NUM("resolution", resolution, "square image size in pixels"),
      BIND_NUM("batch_size", batch_size, "source images per iteration"),
      BIND_NUM("iterations", iterations, "final step count"),
      BIND_NUM("lr_gen", lr_gen, "Adam learning rate for E, Z, G, G^r and the anchor logits"),
      BIND_NUM("lr_disc", lr_disc, "Adam learning rate for D_mt and D_fs"),
      BIND_NUM("beta1", beta1, "Adam first-moment decay"),
      BIND_NUM("beta2", beta2, "Adam second-moment decay"),
      BIND_NUM("lr_decay_every", lr_decay_every, "steps between learning-rate decays (0: constant)"),
      BIND_NUM("lr_decay_gamma", lr_decay_gamma, "multiplicative learning-rate decay"),
      BIND_NUM("lambda_style", weights.style, "weight of the feature-statistics style loss"),
      BIND_NUM("lambda_patch", weights.patch, "weight of the rotated-patch adversarial loss"),
      BIND_NUM("lambda_adv", weights.adv, "weight of the multi-target adversarial loss"),
      BIND_NUM("lambda_recon_image", weights.recon_image, "weight of the image reconstruction loss"),
      BIND_NUM("lambda_recon_style", weights.recon_style, "weight of the style-code reconstruction loss"),
      BIND_NUM("lambda_recon_content", weights.recon_content, "weight of the content-code reconstruction loss"),
      BIND_NUM("fewshot_count", fewshot_count, "|T|: number of few-shot images used (first lexicographically)"),
      KeyBinding{{"anchors", "comma separated anchor names, starting with id"},
                 [](TrainingConfig& c, const std::string& v) { c.anchors = split_list(v); },
                 [](const TrainingConfig& c) { return join_list(c.anchors); }},
      BIND_NUM("exemplar_prob", exemplar_prob, "probability of exemplar mode per iteration"),
      BIND_NUM("patch_count", patch_count, "rotated patches per image per loss evaluation"),
      BIND_NUM("seed", seed, "seed of every training-time random stream"),
      BIND_NUM("checkpoint_every", checkpoint_every, "steps between checkpoints (0: final only)"),
      BIND_NUM("source_holdout", source_holdout, "fraction of source images held out for evaluation"),
      BIND_NUM("mean_style_samples", mean_style_samples, "images per anchor for the persisted mean styles"),
      KeyBinding{{"ablate", "comma separated: no_style, no_patch, no_germ, no_wmi, lgfs_only"},
                 [](TrainingConfig& c, const std::string& v) { c.ablate = split_list(v); },
                 [](const TrainingConfig& c) { return join_list(c.ablate); }},
      BIND_NUM("base_width", arch.base_width, "first-layer channel width of E and G"),
      BIND_NUM("downsamples", arch.downsamples, "L: stride-2 stages in E (and upsampling stages in G)"),
      BIND_NUM("res_blocks", arch.res_blocks, "residual blocks in E, G and G^r"),
      BIND_NUM("style_dim", arch.style_dim, "d_s: style code length"),
      BIND_NUM("style_width", arch.style_width, "first-layer channel width of Z"),
      BIND_NUM("mlp_dim", arch.mlp_dim, "hidden width of the AdaIN parameter MLPs"),
      BIND_NUM("disc_width", arch.disc_width, "first-layer channel width of D_mt and D_fs"),
      BIND_NUM("patch_size", arch.patch_size, "side of the rotated patches seen by D_fs"),
      BIND_STR("extractor", arch.extractor, "feature extractor: random, identity or vgg:<weights file>"),
      KeyBinding{{"extractor_widths", "comma separated stage widths of the random extractor"},
                 [](TrainingConfig& c, const std::string& v) {
                   c.arch.extractor_widths.clear();
                   for (const auto& s : split_list(v)) c.arch.extractor_widths.push_back(parse_number<int>("extractor_widths", s));
                 },
                 [](const TrainingConfig& c) {
                   std::vector<std::string> parts;
                   for (int w : c.arch.extractor_widths) parts.push_back(std::to_string(w));
                   return join_list(parts);
                 }},
      BIND_NUM("phi_seed", arch.phi_seed, "seed of the random extractor weights"),
      BIND_NUM("net_seed", arch.seed, "seed of the trainable network initialization"),
  };
  return b;
}

#undef BIND_NUM
#undef BIND_STR

const KeyBinding& binding(const std::string& key) {
  for (const auto& b : bindings()) {
    if (b.info.name == key) return b;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKeyInfo>& config_keys() {
  static const std::vector<ConfigKeyInfo> keys = [] {
    std::vector<ConfigKeyInfo> out;
    for (const auto& b : bindings()) out.push_back(b.info);
    return out;
  }();
  return keys;
}

void TrainingConfig::set(const std::string& key, const std::string& value) {
  binding(key).set(*this, trim(value));
  if (key == "anchors") arch.num_domains = static_cast<int>(anchors.size());
}

std::string TrainingConfig::get(const std::string& key) const { return binding(key).get(*this); }

void TrainingConfig::load_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(path.string() + ": cannot open config file");
  std::stringstream ss;
  ss << is.rdbuf();
  load_text(ss.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                  const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void TrainingConfig::load_text(const std::string& text, const std::string& origin) {
  for (const auto& [k, v] : parse_key_values(text, origin)) set(k, v);
}

std::string TrainingConfig::to_text() const {
  std::ostringstream os;
  for (const auto& b : bindings()) os << b.info.name << " = " << b.get(*this) << '\n';
  return os.str();
}

void TrainingConfig::save_file(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError(path.string() + ": cannot write config");
  os << to_text();
}

void TrainingConfig::validate() const {
  auto positive = [](double v, const char* key) {
    if (!(v > 0)) throw ConfigError(std::string("config key '") + key + "' must be positive");
  };
  auto non_negative = [](double v, const char* key) {
    if (!(v >= 0)) throw ConfigError(std::string("config key '") + key + "' must be non-negative");
  };
  positive(resolution, "resolution");
  positive(batch_size, "batch_size");
  non_negative(iterations, "iterations");
  positive(lr_gen, "lr_gen");
  positive(lr_disc, "lr_disc");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("config key 'beta1' must lie in [0,1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("config key 'beta2' must lie in [0,1)");
  non_negative(lr_decay_every, "lr_decay_every");
  positive(lr_decay_gamma, "lr_decay_gamma");
  non_negative(weights.style, "lambda_style");
  non_negative(weights.patch, "lambda_patch");
  non_negative(weights.adv, "lambda_adv");
  non_negative(weights.recon_image, "lambda_recon_image");
  non_negative(weights.recon_style, "lambda_recon_style");
  non_negative(weights.recon_content, "lambda_recon_content");
  positive(fewshot_count, "fewshot_count");
  if (!(exemplar_prob >= 0.0 && exemplar_prob <= 1.0)) throw ConfigError("config key 'exemplar_prob' must lie in [0,1]");
  positive(patch_count, "patch_count");
  non_negative(checkpoint_every, "checkpoint_every");
  if (!(source_holdout >= 0.0 && source_holdout < 1.0)) {
    throw ConfigError("config key 'source_holdout' must lie in [0,1)");
  }
  positive(mean_style_samples, "mean_style_samples");
  AnchorSet::from_names(anchors);
  if (arch.num_domains != static_cast<int>(anchors.size())) {
    throw ConfigError("config key 'anchors' disagrees with the architecture's anchor count");
  }
  arch.validate();
  const int step = 1 << arch.downsamples;
  if (resolution % step != 0) {
    throw ConfigError("config key 'resolution' must be divisible by 2^downsamples = " + std::to_string(step));
  }
  if (arch.patch_size > resolution) throw ConfigError("config key 'patch_size' exceeds 'resolution'");
  mask();
}

}  // namespace manifest
