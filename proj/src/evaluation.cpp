#include "manifest/evaluation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "manifest/checkpoint.hpp"
#include "manifest/data.hpp"
#include "manifest/error.hpp"
#include "manifest/image_io.hpp"
#include "manifest/losses.hpp"
#include "manifest/toy_corpus.hpp"
#include "manifest/training.hpp"

namespace manifest {
namespace {

constexpr int kChunk = 16;

Eigen::MatrixXd to_matrix(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("embeddings must be (N,D), got " + shape_str(t.shape()));
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (int i = 0; i < t.dim(0); ++i)
    for (int j = 0; j < t.dim(1); ++j) m(i, j) = t[static_cast<std::size_t>(i) * t.dim(1) + j];
  return m;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& mean) {
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Tensor region_subset(const Tensor& labels, float keep) {
  Tensor out = labels;
  for (auto& v : out.vec()) v = v == keep ? 0.0f : -1.0f;
  return out;
}

Tensor nearest_resize(const Tensor& labels, int size) {
  const int h = labels.dim(0), w = labels.dim(1);
  if (h == size && w == size) return labels;
  Tensor out({size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      out[static_cast<std::size_t>(y) * size + x] = labels[static_cast<std::size_t>(y * h / size) * w + x * w / size];
  return out;
}

void paste(Tensor& sheet, const Tensor& img, int row, int col) {
  const int r = img.dim(2), width = sheet.dim(2);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x)
        sheet[(static_cast<std::size_t>(c) * sheet.dim(1) + row * r + y) * width + col * r + x] =
            img[(static_cast<std::size_t>(c) * r + y) * r + x];
}

}  // namespace

EmbeddingSet embed(const NetworkBundle& bundle, const Tensor& images) {
  NoGradGuard guard;
  validate_images(images, 0);
  std::vector<Tensor> rows;
  for (int b = 0; b < images.dim(0); b += kChunk) {
    const Var x(images.slice_batch(b, std::min(images.dim(0), b + kChunk)));
    rows.push_back(op::global_avg_pool(bundle.extractor().stages(x).back()).value());
  }
  return {Tensor::concat_batch(rows), bundle.extractor().id()};
}

double frechet_distance(const Tensor& x, const Tensor& y, double eps) {
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1)) {
    throw DimensionError("embedding dimensions differ: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  }
  if (x.dim(0) < 2 || y.dim(0) < 2) throw DimensionError("Frechet distance needs at least two samples per set");
  if (!x.all_finite() || !y.all_finite()) throw NumericalError("non-finite embedding values");
  const Eigen::MatrixXd mx = to_matrix(x), my = to_matrix(y);
  const Eigen::RowVectorXd mu_x = mx.colwise().mean(), mu_y = my.colwise().mean();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(mx.cols(), mx.cols());
  const Eigen::MatrixXd sx = covariance(mx, mu_x) + eps * eye;
  const Eigen::MatrixXd sy = covariance(my, mu_y) + eps * eye;
  // tr((Sx Sy)^(1/2)) = tr((A Sy A)^(1/2)) with A = Sx^(1/2), symmetric PSD.
  const Eigen::MatrixXd a = sqrt_psd(sx);
  Eigen::MatrixXd inner = a * sy * a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mu_x - mu_y).squaredNorm() + sx.trace() + sy.trace() - 2.0 * tr_sqrt;
  if (!std::isfinite(d)) throw NumericalError("Frechet distance is not finite");
  return std::max(0.0, d);
}

double frechet_distance(const EmbeddingSet& x, const EmbeddingSet& y, double eps) {
  if (x.extractor != y.extractor) {
    throw DimensionError("embeddings come from different extractors: " + x.extractor + " vs " + y.extractor);
  }
  return frechet_distance(x.matrix, y.matrix, eps);
}

Fidelity exemplar_fidelity(const FeatureExtractor& phi, const Tensor& outputs, const Tensor& exemplars,
                           std::vector<int> ids) {
  if (outputs.rank() != 4 || exemplars.rank() != 4 || outputs.dim(0) != exemplars.dim(0)) {
    throw DimensionError("exemplar_fidelity needs matched counts, got " + shape_str(outputs.shape()) + " and " +
                         shape_str(exemplars.shape()));
  }
  const int n = outputs.dim(0);
  if (ids.empty()) {
    for (int i = 0; i < n; ++i) ids.push_back(i);
  }
  if (static_cast<int>(ids.size()) != n) throw DimensionError("one exemplar id per pair is required");
  NoGradGuard guard;
  std::vector<std::vector<std::pair<Var, Var>>> so, se;
  for (int i = 0; i < n; ++i) {
    so.push_back(feature_statistics(phi, Var(outputs.slice_batch(i, i + 1))));
    se.push_back(feature_statistics(phi, Var(exemplars.slice_batch(i, i + 1))));
  }
  Fidelity f;
  double matched = 0.0, mismatched = 0.0;
  long pairs = 0;
  for (int i = 0; i < n; ++i) {
    matched += style_loss(so[i], se[i]).value()[0];
    for (int j = 0; j < n; ++j) {
      if (ids[j] == ids[i]) continue;
      mismatched += style_loss(so[i], se[j]).value()[0];
      ++pairs;
    }
  }
  f.matched = matched / n;
  f.mismatched = pairs ? mismatched / pairs : 0.0;
  return f;
}

double consistency_probe(const Tensor& inputs, const Tensor& outputs, const std::vector<Tensor>& labels) {
  if (inputs.shape() != outputs.shape() || inputs.rank() != 4 || inputs.dim(1) != 3) {
    throw DimensionError("consistency_probe needs matching (N,3,H,W) inputs and outputs");
  }
  const int n = inputs.dim(0), h = inputs.dim(2), w = inputs.dim(3);
  if (static_cast<int>(labels.size()) != n) throw DimensionError("consistency_probe: region masks missing");
  constexpr float kMinIntensity = 0.05f;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  long regions = 0;
  for (int i = 0; i < n; ++i) {
    if (labels[i].shape() != Shape{h, w}) throw DimensionError("region mask shape mismatch");
    std::map<int, std::vector<double>> ratios;
    for (std::size_t p = 0; p < plane; ++p) {
      const int region = static_cast<int>(labels[i][p]);
      if (region < 0) continue;
      double in = 0.0, out = 0.0;
      for (int c = 0; c < 3; ++c) {
        in += (inputs[(static_cast<std::size_t>(i) * 3 + c) * plane + p] + 1.0) * 0.5;
        out += (outputs[(static_cast<std::size_t>(i) * 3 + c) * plane + p] + 1.0) * 0.5;
      }
      in /= 3.0;
      out /= 3.0;
      if (in < kMinIntensity) continue;
      ratios[region].push_back(out / in);
    }
    for (const auto& [region, r] : ratios) {
      if (r.size() < 2) continue;
      double mean = 0.0;
      for (double v : r) mean += v;
      mean /= r.size();
      double var = 0.0;
      for (double v : r) var += (v - mean) * (v - mean);
      total += var / r.size();
      ++regions;
    }
  }
  if (regions == 0) throw DimensionError("consistency_probe: no region has two usable pixels");
  return total / regions;
}

Tensor translate_images(const NetworkBundle& bundle, const ComponentMask& mask, const Tensor& sources, GermMode mode,
                        const Tensor* exemplars, std::mt19937_64& rng) {
  NoGradGuard guard;
  if (mode == GermMode::exemplar && (!exemplars || exemplars->dim(0) == 0)) {
    throw ConfigError("exemplar mode requires exemplar images");
  }
  const Translator tr(bundle, mask);
  std::vector<Tensor> out;
  for (int i = 0; i < sources.dim(0); ++i) {
    std::optional<Tensor> ex;
    if (mode == GermMode::exemplar) {
      const int k = i % exemplars->dim(0);
      ex = exemplars->slice_batch(k, k + 1);
    }
    out.push_back(tr.translate(Var(sources.slice_batch(i, i + 1)), mode, ex, rng).value());
  }
  return Tensor::concat_batch(out);
}

AnchorTranslation anchor_based_translate(const NetworkBundle& bundle, const ComponentMask& mask, const Tensor& anchors,
                                         GermMode mode, const Tensor* exemplars, std::mt19937_64& rng,
                                         DomainLabel anchor) {
  if (!mask.germ) throw ConfigError("anchor-based translation needs a checkpoint trained with GERM");
  if (anchor.index < 1 || anchor.index >= bundle.arch().num_domains) {
    throw DomainError("anchor-based translation needs a non-identity anchor");
  }
  if (mode == GermMode::exemplar && (!exemplars || exemplars->dim(0) == 0)) {
    throw ConfigError("exemplar mode requires exemplar images");
  }
  validate_images(anchors, bundle.arch().downsamples);
  NoGradGuard guard;
  std::vector<Tensor> plain, fixed;
  for (int i = 0; i < anchors.dim(0); ++i) {
    const Var a(anchors.slice_batch(i, i + 1));
    const Var as_source = bundle.decode(bundle.encode_content(a), bundle.mean_style({0}));
    const Var content = bundle.encode_content(as_source);
    const Var a_prime = bundle.decode(content, bundle.mean_style(anchor));
    const ResidualConditioning z_r =
        mode == GermMode::exemplar
            ? exemplar_conditioning(bundle, exemplars->slice_batch(i % exemplars->dim(0), i % exemplars->dim(0) + 1))
            : general_conditioning(bundle.arch().conditioning_dim(), rng);
    plain.push_back(a_prime.value());
    fixed.push_back(compose(a_prime, residual(bundle, content, z_r)).value());
  }
  return {Tensor::concat_batch(plain), Tensor::concat_batch(fixed)};
}

EvalData load_eval_data(const TrainingConfig& config, int max_sources) {
  namespace fs = std::filesystem;
  const TrainingData td = load_training_data(config);
  EvalData d;
  const DomainDataset& src = td.holdout.size() > 0 ? td.holdout : td.source;
  const int n = max_sources > 0 ? std::min(max_sources, src.size()) : src.size();
  d.sources = src.first(n);
  const fs::path root = config.data_root;
  const fs::path manifest = root / "manifest.tsv";
  if (fs::exists(manifest)) {
    int size = 0;
    std::map<std::string, ToyRecord> by_file;
    for (const auto& r : read_toy_manifest(manifest, &size)) {
      if (r.domain == "source") by_file[r.file] = r;
    }
    for (int i = 0; i < n; ++i) {
      const auto it = by_file.find(src.files[i]);
      if (it == by_file.end()) {
        d.labels.clear();
        break;
      }
      d.labels.push_back(nearest_resize(region_labels(it->second, size), config.resolution));
    }
  }
  d.exemplars = td.fewshot.images;
  const fs::path refs = root / "fewshot_ref";
  d.references = fs::is_directory(refs) ? load_domain(refs, DomainRole::fewshot, config.resolution).images
                                        : td.fewshot.images;
  if (td.anchors.size() > 1) d.anchor_images = td.anchors[1].first(std::max(n, 2));
  d.style_refs = mean_style_references(config, td);
  return d;
}

EvalReport evaluate_bundle(const NetworkBundle& bundle, const ComponentMask& mask, const EvalData& data,
                           const EvalOptions& options) {
  NoGradGuard guard;
  EvalReport report;
  auto& m = report.metrics;
  std::mt19937_64 rng(options.seed);
  const EmbeddingSet refs = embed(bundle, data.references);

  const Tensor general = translate_images(bundle, mask, data.sources, GermMode::general, nullptr, rng);
  m["frechet_general"] = frechet_distance(embed(bundle, general), refs);
  m["frechet_source"] = frechet_distance(embed(bundle, data.sources), refs);
  double change = 0.0;
  for (std::size_t i = 0; i < general.numel(); ++i) change += std::abs(general[i] - data.sources[i]);
  m["mean_abs_change"] = change / general.numel();

  if (!data.labels.empty()) {
    std::vector<Tensor> sky, ground;
    for (const auto& l : data.labels) {
      sky.push_back(region_subset(l, 0.0f));
      ground.push_back(region_subset(l, 1.0f));
    }
    m["consistency_sky"] = consistency_probe(data.sources, general, sky);
    m["consistency_ground"] = consistency_probe(data.sources, general, ground);
    m["consistency"] = consistency_probe(data.sources, general, data.labels);
  }

  Tensor exemplar_out;
  if (mask.germ && data.exemplars.rank() == 4 && data.exemplars.dim(0) > 0) {
    exemplar_out = translate_images(bundle, mask, data.sources, GermMode::exemplar, &data.exemplars, rng);
    m["frechet_exemplar"] = frechet_distance(embed(bundle, exemplar_out), refs);
    std::vector<int> ids;
    std::vector<Tensor> paired;
    for (int i = 0; i < data.sources.dim(0); ++i) {
      ids.push_back(i % data.exemplars.dim(0));
      paired.push_back(data.exemplars.slice_batch(ids.back(), ids.back() + 1));
    }
    const Fidelity f = exemplar_fidelity(bundle.extractor(), exemplar_out, Tensor::concat_batch(paired), ids);
    m["exemplar_fidelity_matched"] = f.matched;
    m["exemplar_fidelity_mismatched"] = f.mismatched;
    if (data.anchor_images.rank() == 4 && data.anchor_images.dim(0) >= 2) {
      const AnchorTranslation at =
          anchor_based_translate(bundle, mask, data.anchor_images, GermMode::general, nullptr, rng);
      m["frechet_anchor_uncorrected"] = frechet_distance(embed(bundle, at.uncorrected), refs);
      m["frechet_anchor_corrected"] = frechet_distance(embed(bundle, at.corrected), refs);
    }
  }

  if (options.untrained_baseline) {
    NetworkBundle fresh(bundle.arch());
    update_mean_styles(fresh, data.style_refs);
    std::mt19937_64 base_rng(options.seed);
    const Tensor base = translate_images(fresh, mask, data.sources, GermMode::general, nullptr, base_rng);
    m["frechet_untrained_general"] = frechet_distance(embed(fresh, base), refs);
  }

  report.info["extractor"] = bundle.extractor().id();
  report.info["phi_seed"] = std::to_string(bundle.arch().phi_seed);
  report.info["seed"] = std::to_string(options.seed);
  report.info["sources"] = std::to_string(data.sources.dim(0));
  report.info["references"] = std::to_string(data.references.dim(0));
  const auto flags = ablation_flags(mask);
  std::string joined;
  for (const auto& f : flags) joined += (joined.empty() ? "" : ",") + f;
  report.info["ablate"] = joined.empty() ? "none" : joined;

  const int r = data.sources.dim(2);
  const int rows = std::min(8, data.sources.dim(0));
  report.contact_sheet = Tensor({3, rows * r, 4 * r}, 0.0f);
  for (int i = 0; i < rows; ++i) {
    paste(report.contact_sheet, data.sources.slice_batch(i, i + 1), i, 0);
    paste(report.contact_sheet, general.slice_batch(i, i + 1), i, 1);
    if (!exemplar_out.empty()) {
      const int k = i % data.exemplars.dim(0);
      paste(report.contact_sheet, exemplar_out.slice_batch(i, i + 1), i, 2);
      paste(report.contact_sheet, data.exemplars.slice_batch(k, k + 1), i, 3);
    }
  }
  return report;
}

TrainingConfig checkpoint_config(const Archive& archive) {
  TrainingConfig config;
  if (archive.metadata.contains("config")) {
    config.load_text(archive.metadata["config"].get<std::string>(), "checkpoint config");
  } else if (archive.metadata.contains("arch")) {
    config.arch = arch_from_json(archive.metadata["arch"]);
    config.anchors = AnchorSet::with_count(config.arch.num_domains).names();
  }
  return config;
}

ComponentMask checkpoint_mask(const Archive& archive) {
  return ablation_switches(archive.metadata.value("ablate", std::vector<std::string>{}));
}

EvalReport evaluate_run(const std::filesystem::path& checkpoint, const std::filesystem::path& data_root,
                        const std::filesystem::path& out_dir, const EvalOptions& options, int max_sources) {
  const Archive archive = read_archive(checkpoint);
  const auto bundle = bundle_from_archive(archive);
  TrainingConfig config = checkpoint_config(archive);
  if (!data_root.empty()) config.data_root = data_root.string();
  const EvalData data = load_eval_data(config, max_sources);
  EvalReport report = evaluate_bundle(*bundle, checkpoint_mask(archive), data, options);
  report.info["checkpoint"] = checkpoint.string();
  write_metrics(out_dir / "metrics.txt", report);
  write_png(out_dir / "contact_sheet.png", report.contact_sheet);
  return report;
}

void write_metrics(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError(path.string() + ": cannot write metrics");
  os.precision(9);
  for (const auto& [k, v] : report.info) os << "# " << k << " = " << v << '\n';
  for (const auto& [k, v] : report.metrics) os << k << " = " << v << '\n';
  if (!os) throw IoError(path.string() + ": write failed");
}

}  // namespace manifest
