#include "manifest/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "manifest/error.hpp"

namespace manifest {

Tensor read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw IoError(path.string() + ": cannot decode PNG (" + img.message + ")");
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError(path.string() + ": cannot decode PNG (" + msg + ")");
  }
  const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
  Tensor out({3, h, w});
  float* o = out.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        o[(c * h + y) * w + x] = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 127.5f - 1.0f;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  Tensor t = image;
  if (t.rank() == 4 && t.dim(0) == 1) t = t.reshaped({t.dim(1), t.dim(2), t.dim(3)});
  if (t.rank() != 3 || t.dim(0) != 3) throw DimensionError("write_png expects (3,H,W), got " + shape_str(image.shape()));
  const int h = t.dim(1), w = t.dim(2);
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w * 3);
  const float* s = t.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<unsigned char>(quantize_to_byte(s[(c * h + y) * w + x]));
      }
    }
  }
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError(path.string() + ": cannot write PNG (" + img.message + ")");
  }
}

Tensor resize_bilinear(const Tensor& image, int height, int width) {
  if (image.rank() != 3) throw DimensionError("resize_bilinear expects (C,H,W)");
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == height && w == width) return image;
  Tensor out({c, height, width});
  const float sy = static_cast<float>(h) / height, sx = static_cast<float>(w) / width;
  for (int y = 0; y < height; ++y) {
    const float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(h - 1));
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, h - 1);
    const float ay = fy - y0;
    for (int x = 0; x < width; ++x) {
      const float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(w - 1));
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, w - 1);
      const float ax = fx - x0;
      for (int k = 0; k < c; ++k) {
        const float* p = image.data() + static_cast<std::size_t>(k) * h * w;
        const float top = p[y0 * w + x0] * (1 - ax) + p[y0 * w + x1] * ax;
        const float bot = p[y1 * w + x0] * (1 - ax) + p[y1 * w + x1] * ax;
        out.data()[(static_cast<std::size_t>(k) * height + y) * width + x] = top * (1 - ay) + bot * ay;
      }
    }
  }
  return out;
}

Tensor read_png_resized(const std::filesystem::path& path, int resolution) {
  return resize_bilinear(read_png(path), resolution, resolution);
}

}  // namespace manifest
