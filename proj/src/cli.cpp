#include "manifest/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "manifest/checkpoint.hpp"
#include "manifest/config.hpp"
#include "manifest/error.hpp"
#include "manifest/evaluation.hpp"
#include "manifest/image_io.hpp"
#include "manifest/plot.hpp"
#include "manifest/toy_corpus.hpp"
#include "manifest/training.hpp"

namespace manifest {
namespace {

std::string dashed(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return key;
}

struct KeySpec {
  std::string key;
  std::string help;
  bool flag = false;
};

// Options keyed like the config file; collects what the command line set.
struct KeyedOptions {
  KeyedOptions() = default;
  explicit KeyedOptions(std::vector<KeySpec> s) : specs(std::move(s)) {}

  std::vector<KeySpec> specs;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
  std::string config_path;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value file; flags override its entries");
    for (const auto& s : specs) {
      if (s.flag) {
        app->add_flag("--" + dashed(s.key), flags[s.key], s.help);
      } else {
        app->add_option("--" + dashed(s.key), values[s.key], s.help);
      }
    }
  }

  // Precedence: command line > config file > default (absent from the map).
  std::map<std::string, std::string> resolve(const CLI::App* app) const {
    std::set<std::string> known;
    for (const auto& s : specs) known.insert(s.key);
    std::map<std::string, std::string> out;
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) throw IoError(config_path + ": cannot open config file");
      std::stringstream ss;
      ss << is.rdbuf();
      for (const auto& [k, v] : parse_key_values(ss.str(), config_path)) {
        if (!known.count(k)) throw ConfigError(config_path + ": unknown key '" + k + "'");
        out[k] = v;
      }
    }
    for (const auto& s : specs) {
      if (app->count("--" + dashed(s.key)) == 0) continue;
      out[s.key] = s.flag ? "true" : values.at(s.key);
    }
    return out;
  }
};

bool truthy(const std::map<std::string, std::string>& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) return false;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("key '" + key + "' must be true or false");
}

std::string required(const std::map<std::string, std::string>& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end() || it->second.empty()) throw ConfigError("--" + dashed(key) + " is required");
  return it->second;
}

std::string value_or(const std::map<std::string, std::string>& m, const std::string& key, std::string fallback) {
  const auto it = m.find(key);
  return it == m.end() ? fallback : it->second;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto x = std::stoull(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': cannot parse '" + v + "'");
}

int parse_int(const std::string& key, const std::string& v) {
  return static_cast<int>(parse_u64(key, v));
}

void cmd_synth_data(const std::map<std::string, std::string>& opts, std::ostream& out) {
  ToyCorpusSpec spec;
  for (const auto& [k, v] : opts) {
    if (k != "out") spec.set(k, v);
  }
  const std::filesystem::path root = value_or(opts, "out", "data");
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError(root.string() + ": " + ec.message());
  const auto records = generate_toy_corpus(spec, root);
  std::map<std::string, int> counts;
  for (const auto& r : records) ++counts[r.domain];
  out << root.string() << "/\n";
  for (const auto& [d, n] : counts) out << "  " << d << "/  " << n << " images\n";
  out << "  manifest.tsv  " << records.size() << " records\n";
}

void cmd_train(const std::map<std::string, std::string>& opts, std::ostream& out, std::ostream& err) {
  TrainingConfig config;
  for (const auto& [k, v] : opts) config.set(k, v);
  config.validate();
  const TrainingData data = load_training_data(config, &err);
  out << "training " << config.iterations << " steps; source " << data.source.size() << ", few-shot "
      << data.fewshot.size() << ", anchors " << config.anchors.size() << '\n';
  const FitResult r = fit(config, data, &out);
  out << "checkpoint " << r.checkpoint.string() << "\nmetrics " << r.metrics_log.string() << '\n';
}

struct LoadedCheckpoint {
  Archive archive;
  std::unique_ptr<NetworkBundle> bundle;
  TrainingConfig config;
  ComponentMask mask;
};

LoadedCheckpoint load_checkpoint(const std::string& path) {
  LoadedCheckpoint c;
  c.archive = read_archive(path);
  c.bundle = bundle_from_archive(c.archive);
  c.config = checkpoint_config(c.archive);
  c.mask = checkpoint_mask(c.archive);
  return c;
}

void cmd_translate(const std::map<std::string, std::string>& opts, std::ostream& out) {
  const std::string ckpt = required(opts, "checkpoint");
  const std::filesystem::path input = required(opts, "input");
  const std::filesystem::path output = required(opts, "output");
  const GermMode mode = parse_germ_mode(value_or(opts, "mode", "general"));
  const std::string exemplar_path = value_or(opts, "exemplar", "");
  if (mode == GermMode::exemplar && exemplar_path.empty()) throw ConfigError("--exemplar is required with --mode exemplar");
  const bool from_anchor = truthy(opts, "from_anchor");

  LoadedCheckpoint c = load_checkpoint(ckpt);
  const int resolution =
      opts.count("resolution") ? parse_int("resolution", opts.at("resolution")) : c.config.resolution;
  if (from_anchor && !c.mask.germ) throw ConfigError("--from-anchor needs a checkpoint trained with GERM");
  if (mode == GermMode::exemplar && !c.mask.germ) {
    throw ConfigError("exemplar mode needs a checkpoint trained with GERM");
  }
  const DomainDataset images = load_domain(input, DomainRole::source, resolution);
  std::optional<Tensor> exemplar;
  if (!exemplar_path.empty()) exemplar = read_png_resized(exemplar_path, resolution).reshaped({1, 3, resolution, resolution});
  std::mt19937_64 rng(parse_u64("seed", value_or(opts, "seed", "1")));
  const Tensor* ex = exemplar ? &*exemplar : nullptr;
  const Tensor result = from_anchor ? anchor_based_translate(*c.bundle, c.mask, images.images, mode, ex, rng).corrected
                                    : translate_images(*c.bundle, c.mask, images.images, mode, ex, rng);
  for (int i = 0; i < images.size(); ++i) write_png(output / images.files[i], result.slice_batch(i, i + 1));
  out << "wrote " << images.size() << " images to " << output.string() << '\n';
}

void cmd_evaluate(const std::map<std::string, std::string>& opts, std::ostream& out) {
  const std::filesystem::path ckpt = required(opts, "checkpoint");
  const std::filesystem::path dest = value_or(opts, "out", (ckpt.parent_path() / "eval").string());
  EvalOptions options;
  options.seed = parse_u64("seed", value_or(opts, "seed", "1"));
  options.untrained_baseline = !truthy(opts, "no_baseline");
  const int max_sources = parse_int("max_sources", value_or(opts, "max_sources", "0"));
  const EvalReport r = evaluate_run(ckpt, value_or(opts, "data_root", ""), dest, options, max_sources);
  for (const auto& [k, v] : r.metrics) out << k << " = " << v << '\n';
  out << "report " << (dest / "metrics.txt").string() << '\n';
}

void cmd_plot(const std::map<std::string, std::string>& opts, std::ostream& out) {
  const auto files = plot_metrics(required(opts, "log"), required(opts, "out"));
  out << "wrote " << files.size() << " plots to " << required(opts, "out") << '\n';
}

void cmd_inspect_weights(const std::map<std::string, std::string>& opts, std::ostream& out) {
  const LoadedCheckpoint c = load_checkpoint(required(opts, "checkpoint"));
  const Tensor w = AnchorWeights(c.bundle->anchor_logits()).weight_values();
  const AnchorSet anchors = static_cast<int>(c.config.anchors.size()) == c.bundle->arch().num_domains
                                ? AnchorSet::from_names(c.config.anchors)
                                : AnchorSet::with_count(c.bundle->arch().num_domains);
  out.precision(6);
  for (int i = 0; i < anchors.size(); ++i) out << anchors.name({i}) << '\t' << std::fixed << w[i] << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot image translation on a learned style manifold"};
  app.require_subcommand(1);

  KeyedOptions synth{{{"out", "corpus root directory (default: data)"},
                      {"seed", "corpus seed"},
                      {"size", "image side in pixels"},
                      {"source_count", "number of source images"},
                      {"anchor_count", "number of anchor_m images"},
                      {"fewshot_count", "number of few-shot images"},
                      {"reference_count", "number of few-shot family reference images"}}};
  KeyedOptions train;
  for (const auto& k : config_keys()) train.specs.push_back({k.name, k.description});
  KeyedOptions translate{{{"checkpoint", "trained checkpoint"},
                          {"input", "directory of input PNGs"},
                          {"output", "output directory (names match the inputs)"},
                          {"mode", "general or exemplar"},
                          {"exemplar", "exemplar PNG for exemplar mode"},
                          {"from_anchor", "inputs are anchor images: anchor-based translation", true},
                          {"seed", "seed of the general-mode residual draws"},
                          {"resolution", "resize inputs to this size (default: training resolution)"}}};
  KeyedOptions evaluate{{{"checkpoint", "trained checkpoint"},
                         {"data_root", "corpus root (default: the training root)"},
                         {"out", "report directory (default: <checkpoint dir>/eval)"},
                         {"seed", "evaluation seed"},
                         {"max_sources", "cap on held-out source images (0: all)"},
                         {"no_baseline", "skip the untrained-network baseline", true}}};
  KeyedOptions plot{{{"log", "metrics log (step, name, value)"}, {"out", "output directory"}}};
  KeyedOptions inspect{{{"checkpoint", "checkpoint to inspect"}}};

  struct Command {
    CLI::App* app;
    KeyedOptions* opts;
  };
  std::vector<Command> commands = {
      {app.add_subcommand("synth-data", "write the synthetic toy corpus"), &synth},
      {app.add_subcommand("train", "train a model (all config keys are flags)"), &train},
      {app.add_subcommand("translate", "translate a directory of images"), &translate},
      {app.add_subcommand("evaluate", "compute metrics and a contact sheet"), &evaluate},
      {app.add_subcommand("plot", "render a metrics log as curves"), &plot},
      {app.add_subcommand("inspect-weights", "print the learned anchor weights"), &inspect},
  };
  for (auto& c : commands) c.opts->attach(c.app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (auto& c : commands) {
      if (!c.app->parsed()) continue;
      const auto opts = c.opts->resolve(c.app);
      const std::string name = c.app->get_name();
      if (name == "synth-data") cmd_synth_data(opts, out);
      if (name == "train") cmd_train(opts, out, err);
      if (name == "translate") cmd_translate(opts, out);
      if (name == "evaluate") cmd_evaluate(opts, out);
      if (name == "plot") cmd_plot(opts, out);
      if (name == "inspect-weights") cmd_inspect_weights(opts, out);
    }
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace manifest
