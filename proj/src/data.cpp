#include "manifest/data.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "manifest/config.hpp"
#include "manifest/error.hpp"
#include "manifest/image_io.hpp"

namespace manifest {

const char* to_string(DomainRole role) {
  switch (role) {
    case DomainRole::source: return "source";
    case DomainRole::anchor: return "anchor";
    case DomainRole::fewshot: return "fewshot";
  }
  return "?";
}

Tensor DomainDataset::gather(const std::vector<int>& indices) const {
  std::vector<Tensor> parts;
  parts.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || i >= size()) throw DimensionError("dataset index " + std::to_string(i) + " out of range");
    parts.push_back(image(i));
  }
  return Tensor::concat_batch(parts);
}

DomainDataset load_domain(const std::filesystem::path& root, DomainRole role, int resolution, int max_count,
                          std::ostream* warn) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError(root.string() + ": not a directory");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root, ec)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") names.push_back(entry.path().filename().string());
  }
  if (ec) throw IoError(root.string() + ": " + ec.message());
  if (names.empty()) throw IoError(root.string() + ": no PNG images found");
  std::sort(names.begin(), names.end());
  if (role == DomainRole::fewshot && max_count > 0 && static_cast<int>(names.size()) > max_count) {
    if (warn) {
      *warn << "warning: " << root.string() << " holds " << names.size() << " images; using the first " << max_count
            << " lexicographically\n";
    }
    names.resize(max_count);
  }
  DomainDataset d;
  d.root = root;
  d.role = role;
  d.resolution = resolution;
  d.files = names;
  d.images = Tensor({static_cast<int>(names.size()), 3, resolution, resolution});
  const std::size_t per = static_cast<std::size_t>(3) * resolution * resolution;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Tensor img = read_png_resized(root / names[i], resolution);
    std::copy(img.data(), img.data() + per, d.images.data() + i * per);
  }
  return d;
}

DomainDataset subset(const DomainDataset& d, const std::vector<int>& indices) {
  DomainDataset out;
  out.root = d.root;
  out.role = d.role;
  out.resolution = d.resolution;
  for (int i : indices) out.files.push_back(d.files.at(i));
  out.images = d.gather(indices);
  return out;
}

std::pair<DomainDataset, DomainDataset> split_holdout(const DomainDataset& d, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in [0,1)");
  int held = static_cast<int>(std::lround(fraction * d.size()));
  held = std::min(held, d.size() - 1);
  std::vector<int> train, hold;
  for (int i = 0; i < d.size(); ++i) (i < d.size() - held ? train : hold).push_back(i);
  DomainDataset holdout;
  if (!hold.empty()) holdout = subset(d, hold);
  return {subset(d, train), holdout};
}

Tensor sample_batch(const DomainDataset& d, int n, std::mt19937_64& rng) {
  if (n < 1) throw DimensionError("batch size must be at least 1");
  if (d.size() == 0) throw DimensionError("cannot sample from an empty dataset");
  std::vector<int> idx;
  if (d.role == DomainRole::fewshot || n > d.size()) {
    std::uniform_int_distribution<int> pick(0, d.size() - 1);
    for (int i = 0; i < n; ++i) idx.push_back(pick(rng));
  } else {
    std::vector<int> all(d.size());
    for (int i = 0; i < d.size(); ++i) all[i] = i;
    for (int i = 0; i < n; ++i) {
      std::uniform_int_distribution<int> pick(i, d.size() - 1);
      std::swap(all[i], all[pick(rng)]);
      idx.push_back(all[i]);
    }
  }
  return d.gather(idx);
}

BatchSampler::BatchSampler(const DomainDataset& d, std::uint64_t seed) : data_(&d), rng_(seed) {
  if (d.size() == 0) throw DimensionError("cannot sample from an empty dataset");
}

void BatchSampler::reshuffle() {
  order_.resize(data_->size());
  for (int i = 0; i < data_->size(); ++i) order_[i] = i;
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

Tensor BatchSampler::next(int n) {
  if (n < 1) throw DimensionError("batch size must be at least 1");
  if (data_->role == DomainRole::fewshot) return sample_batch(*data_, n, rng_);
  std::vector<int> idx;
  while (static_cast<int>(idx.size()) < n) {
    if (cursor_ >= order_.size()) reshuffle();
    idx.push_back(order_[cursor_++]);
  }
  return data_->gather(idx);
}

nlohmann::json BatchSampler::state() const {
  return {{"rng", rng_state(rng_)}, {"order", order_}, {"cursor", cursor_}};
}

void BatchSampler::restore(const nlohmann::json& state) {
  restore_rng(rng_, state.at("rng").get<std::string>());
  order_ = state.at("order").get<std::vector<int>>();
  cursor_ = state.at("cursor").get<std::size_t>();
  for (int i : order_) {
    if (i < 0 || i >= data_->size()) throw IoError("sampler state does not match the dataset");
  }
}

std::filesystem::path anchor_directory(const std::filesystem::path& root, const std::string& name) {
  return name == "id" ? root / "source" : root / ("anchor_" + name);
}

TrainingData load_training_data(const TrainingConfig& config, std::ostream* warn) {
  const std::filesystem::path root = config.data_root;
  TrainingData data;
  const DomainDataset all = load_domain(root / "source", DomainRole::source, config.resolution);
  std::tie(data.source, data.holdout) = split_holdout(all, config.source_holdout);
  data.fewshot = load_domain(root / "fewshot", DomainRole::fewshot, config.resolution, config.fewshot_count, warn);
  data.anchors.push_back(data.source);
  for (std::size_t i = 1; i < config.anchors.size(); ++i) {
    data.anchors.push_back(
        load_domain(anchor_directory(root, config.anchors[i]), DomainRole::anchor, config.resolution));
  }
  return data;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void restore_rng(std::mt19937_64& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (is.fail()) throw IoError("corrupt random generator state");
}

}  // namespace manifest
