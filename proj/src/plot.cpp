#include "manifest/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "manifest/error.hpp"
#include "manifest/image_io.hpp"

namespace manifest {
namespace {

struct Canvas {
  int w, h;
  Tensor img;
  Canvas(int width, int height) : w(width), h(height), img({3, height, width}, 1.0f) {}

  void set(int x, int y, const float rgb[3]) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    for (int c = 0; c < 3; ++c) img[(static_cast<std::size_t>(c) * h + y) * w + x] = rgb[c];
  }

  void line(int x0, int y0, int x1, int y1, const float rgb[3]) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, rgb);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

const float kAxis[3] = {-0.2f, -0.2f, -0.2f};
const float kGrid[3] = {0.7f, 0.7f, 0.7f};
const float kRaw[3] = {0.2f, 0.55f, 0.95f};
const float kSmooth[3] = {-0.9f, -0.6f, 0.1f};

std::string sanitize(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  }
  return out;
}

}  // namespace

std::map<std::string, Series> read_metrics_log(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(path.string() + ": cannot open metrics log");
  std::map<std::string, Series> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long step;
    std::string name, value;
    if (!(ls >> step) || ls.get() != '\t' || !std::getline(ls, name, '\t') || !std::getline(ls, value)) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed record");
    }
    out[name].emplace_back(step, std::strtod(value.c_str(), nullptr));
  }
  return out;
}

Tensor render_curve(const Series& series, int width, int height) {
  Canvas cv(width, height);
  const int left = 8, right = width - 8, top = 8, bottom = height - 8;
  for (int k = 1; k < 4; ++k) {
    const int y = top + (bottom - top) * k / 4;
    cv.line(left, y, right, y, kGrid);
  }
  cv.line(left, top, left, bottom, kAxis);
  cv.line(left, bottom, right, bottom, kAxis);
  if (series.empty()) return cv.img;

  double lo = series[0].second, hi = lo;
  for (const auto& [s, v] : series) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const long s0 = series.front().first, s1 = std::max(series.back().first, s0 + 1);
  auto px = [&](long s) { return left + static_cast<int>((right - left) * double(s - s0) / double(s1 - s0)); };
  auto py = [&](double v) { return bottom - static_cast<int>(std::lround((bottom - top) * (v - lo) / (hi - lo))); };

  for (std::size_t i = 1; i < series.size(); ++i) {
    cv.line(px(series[i - 1].first), py(series[i - 1].second), px(series[i].first), py(series[i].second), kRaw);
  }
  const std::size_t window = std::max<std::size_t>(1, series.size() / 25);
  double sum = 0.0;
  int prev_x = -1, prev_y = -1;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i].second;
    if (i >= window) sum -= series[i - window].second;
    const double avg = sum / std::min(i + 1, window);
    const int x = px(series[i].first), y = py(avg);
    if (prev_x >= 0) cv.line(prev_x, prev_y, x, y, kSmooth);
    prev_x = x;
    prev_y = y;
  }
  return cv.img;
}

std::vector<std::filesystem::path> plot_metrics(const std::filesystem::path& log_path,
                                                const std::filesystem::path& out_dir) {
  const auto all = read_metrics_log(log_path);
  if (all.empty()) throw IoError(log_path.string() + ": metrics log is empty");
  std::vector<std::filesystem::path> written;
  std::vector<Tensor> panels;
  for (const auto& [name, series] : all) {
    panels.push_back(render_curve(series));
    written.push_back(out_dir / (sanitize(name) + ".png"));
    write_png(written.back(), panels.back());
  }
  const int cols = 3, rows = (static_cast<int>(panels.size()) + cols - 1) / cols;
  const int ph = panels[0].dim(1), pw = panels[0].dim(2);
  Tensor sheet({3, rows * ph, cols * pw}, 1.0f);
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const int r = static_cast<int>(k) / cols, c = static_cast<int>(k) % cols;
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
          sheet[(static_cast<std::size_t>(ch) * rows * ph + r * ph + y) * (cols * pw) + c * pw + x] =
              panels[k][(static_cast<std::size_t>(ch) * ph + y) * pw + x];
  }
  written.push_back(out_dir / "overview.png");
  write_png(written.back(), sheet);
  return written;
}

}  // namespace manifest
