#include "manifest/toy_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "manifest/error.hpp"
#include "manifest/image_io.hpp"

namespace manifest {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

float uniform(std::mt19937_64& rng, float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(rng); }

float uniform(std::mt19937_64& rng, Range r) { return r.lo == r.hi ? r.lo : uniform(rng, r.lo, r.hi); }

std::string file_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d.png", i);
  return buf;
}

const char* kDomains[] = {"source", "anchor_m", "fewshot", "fewshot_ref"};

}  // namespace

void ToyCorpusSpec::set(const std::string& key, const std::string& value) {
  auto as_int = [&] {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(value, &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (used != value.size()) throw ConfigError("key '" + key + "': cannot parse '" + value + "'");
    return v;
  };
  if (key == "seed") {
    try {
      seed = std::stoull(value);
    } catch (const std::exception&) {
      throw ConfigError("key 'seed': cannot parse '" + value + "'");
    }
  } else if (key == "size") {
    size = as_int();
  } else if (key == "source_count") {
    source_count = as_int();
  } else if (key == "anchor_count") {
    anchor_count = as_int();
  } else if (key == "fewshot_count") {
    fewshot_count = as_int();
  } else if (key == "reference_count") {
    reference_count = as_int();
  } else {
    throw ConfigError("unknown corpus key '" + key + "'");
  }
}

void ToyCorpusSpec::validate() const {
  if (size < 8) throw ConfigError("key 'size' must be at least 8");
  if (source_count < 1) throw ConfigError("key 'source_count' must be positive");
  if (anchor_count < 1) throw ConfigError("key 'anchor_count' must be positive");
  if (fewshot_count < 1) throw ConfigError("key 'fewshot_count' must be positive");
  if (reference_count < 0) throw ConfigError("key 'reference_count' must be non-negative");
}

ToyScene render_scene(int size, std::uint64_t scene_seed) {
  std::mt19937_64 rng(scene_seed);
  ToyScene scene;
  const int h = size, w = size;
  scene.horizon = static_cast<int>(std::lround(uniform(rng, 0.4f, 0.6f) * h));
  scene.base = Tensor({3, h, w});
  scene.labels = Tensor({h, w});

  const float sky_top[3] = {uniform(rng, 0.35f, 0.5f), uniform(rng, 0.5f, 0.65f), uniform(rng, 0.75f, 0.9f)};
  const float sky_low[3] = {uniform(rng, 0.75f, 0.85f), uniform(rng, 0.8f, 0.88f), uniform(rng, 0.85f, 0.95f)};
  const float ground[3] = {uniform(rng, 0.3f, 0.42f), uniform(rng, 0.38f, 0.5f), uniform(rng, 0.2f, 0.3f)};

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool sky = y < scene.horizon;
      scene.labels[static_cast<std::size_t>(y) * w + x] = sky ? 0.0f : 1.0f;
      for (int c = 0; c < 3; ++c) {
        float v;
        if (sky) {
          const float a = static_cast<float>(y) / std::max(1, scene.horizon);
          v = sky_top[c] * (1 - a) + sky_low[c] * a;
        } else {
          const float a = static_cast<float>(y - scene.horizon) / std::max(1, h - scene.horizon);
          v = ground[c] * (1.0f - 0.35f * a);
        }
        scene.base[(static_cast<std::size_t>(c) * h + y) * w + x] = v;
      }
    }
  }

  const int buildings = std::uniform_int_distribution<int>(2, 5)(rng);
  for (int b = 0; b < buildings; ++b) {
    const int bw = std::uniform_int_distribution<int>(std::max(2, w / 10), std::max(3, w / 4))(rng);
    const int x0 = std::uniform_int_distribution<int>(0, w - bw)(rng);
    const int top = std::uniform_int_distribution<int>(h / 6, std::max(h / 6, scene.horizon - 2))(rng);
    const int bottom = std::min(h, scene.horizon + std::uniform_int_distribution<int>(1, std::max(1, h / 8))(rng));
    const float grey = uniform(rng, 0.3f, 0.6f);
    const float warm = uniform(rng, -0.04f, 0.04f);
    const float color[3] = {grey + warm, grey, grey - warm};
    for (int y = top; y < bottom; ++y) {
      for (int x = x0; x < x0 + bw; ++x) {
        scene.labels[static_cast<std::size_t>(y) * w + x] = 1.0f;
        for (int c = 0; c < 3; ++c) scene.base[(static_cast<std::size_t>(c) * h + y) * w + x] = color[c];
      }
    }
  }

  std::normal_distribution<float> noise(0.0f, 0.02f);
  for (auto& v : scene.base.vec()) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
  return scene;
}

Tensor render_record(const ToyRecord& record, int size) {
  const ToyScene scene = render_scene(size, record.scene_seed);
  const ToyTransform& t = record.transform;
  Tensor out({3, size, size});
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      const float gain = scene.labels[p] == 0.0f ? t.sky_gain : t.ground_gain;
      const float v = gain * t.tint[c] * std::pow(scene.base[c * plane + p], t.gamma);
      out[c * plane + p] = std::clamp(v, 0.0f, 1.0f) * 2.0f - 1.0f;
    }
  }
  return out;
}

Tensor region_labels(const ToyRecord& record, int size) { return render_scene(size, record.scene_seed).labels; }

std::vector<ToyRecord> generate_toy_corpus(const ToyCorpusSpec& spec, const std::filesystem::path& out_root) {
  spec.validate();
  std::vector<ToyRecord> records;
  const int counts[] = {spec.source_count, spec.anchor_count, spec.fewshot_count, spec.reference_count};
  for (int d = 0; d < 4; ++d) {
    for (int i = 0; i < counts[d]; ++i) {
      ToyRecord r;
      r.domain = kDomains[d];
      r.file = file_name(i);
      r.scene_seed = splitmix64(spec.seed ^ (static_cast<std::uint64_t>(d + 1) << 40) ^ static_cast<std::uint64_t>(i));
      if (d == 1) {
        r.transform = spec.anchor;
      } else if (d >= 2) {
        std::mt19937_64 jitter(splitmix64(r.scene_seed ^ 0x5eedull));
        for (int c = 0; c < 3; ++c) r.transform.tint[c] = uniform(jitter, spec.fewshot_tint[c]);
        r.transform.gamma = uniform(jitter, spec.fewshot_gamma);
        r.transform.sky_gain = uniform(jitter, spec.fewshot_sky_gain);
        r.transform.ground_gain = uniform(jitter, spec.fewshot_ground_gain);
      }
      const Tensor img = render_record(r, spec.size);
      r.horizon = render_scene(spec.size, r.scene_seed).horizon;
      write_png(out_root / r.domain / r.file, img);
      records.push_back(r);
    }
  }
  write_toy_manifest(out_root / "manifest.tsv", spec, records);
  return records;
}

void write_toy_manifest(const std::filesystem::path& path, const ToyCorpusSpec& spec,
                        const std::vector<ToyRecord>& records) {
  std::ofstream os(path);
  if (!os) throw IoError(path.string() + ": cannot write manifest");
  os << "# size=" << spec.size << " seed=" << spec.seed << '\n';
  os << "domain\tfile\tscene_seed\thorizon\ttint_r\ttint_g\ttint_b\tgamma\tsky_gain\tground_gain\n";
  os.precision(9);
  for (const auto& r : records) {
    const auto& t = r.transform;
    os << r.domain << '\t' << r.file << '\t' << r.scene_seed << '\t' << r.horizon << '\t' << t.tint[0] << '\t'
       << t.tint[1] << '\t' << t.tint[2] << '\t' << t.gamma << '\t' << t.sky_gain << '\t' << t.ground_gain << '\n';
  }
  if (!os) throw IoError(path.string() + ": write failed");
}

std::vector<ToyRecord> read_toy_manifest(const std::filesystem::path& path, int* size) {
  std::ifstream is(path);
  if (!is) throw IoError(path.string() + ": cannot open manifest");
  std::vector<ToyRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("size=");
      if (size && pos != std::string::npos) *size = std::stoi(line.substr(pos + 5));
      continue;
    }
    if (line.rfind("domain\t", 0) == 0) continue;
    std::istringstream ls(line);
    ToyRecord r;
    auto& t = r.transform;
    ls >> r.domain >> r.file >> r.scene_seed >> r.horizon >> t.tint[0] >> t.tint[1] >> t.tint[2] >> t.gamma >>
        t.sky_gain >> t.ground_gain;
    if (ls.fail()) throw IoError(path.string() + ": malformed manifest line '" + line + "'");
    out.push_back(r);
  }
  return out;
}

}  // namespace manifest
