#include "bootplace/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bootplace {

FloatImage FloatImage::from(const Image& img) {
  FloatImage out;
  out.width = img.width;
  out.height = img.height;
  out.planes.assign(img.channels, std::vector<double>(static_cast<size_t>(img.width) * img.height));
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        out.planes[c][static_cast<size_t>(y) * img.width + x] = img.at(x, y, c);
      }
    }
  }
  return out;
}

Image FloatImage::to_u8() const {
  Image out = Image::blank(width, height, static_cast<int>(planes.size()));
  for (size_t c = 0; c < planes.size(); ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double v = planes[c][static_cast<size_t>(y) * width + x];
        out.at(x, y, static_cast<int>(c)) =
            static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

Image resize_bilinear(const Image& src, int w, int h) {
  if (src.empty() || w <= 0 || h <= 0) {
    throw std::invalid_argument("resize_bilinear: empty source or non-positive target size");
  }
  if (w == src.width && h == src.height) return src;
  Image out = Image::blank(w, h, src.channels);
  const double sx = static_cast<double>(src.width) / w;
  const double sy = static_cast<double>(src.height) / h;
  for (int y = 0; y < h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    y0 = std::clamp(y0, 0, src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    for (int x = 0; x < w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      x0 = std::clamp(x0, 0, src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      for (int c = 0; c < src.channels; ++c) {
        const double top = src.at(x0, y0, c) * (1.0 - wx) + src.at(x1, y0, c) * wx;
        const double bot = src.at(x0, y1, c) * (1.0 - wx) + src.at(x1, y1, c) * wx;
        const double v = top * (1.0 - wy) + bot * wy;
        out.at(x, y, c) = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

void alpha_paste(Image& dst, const Image& patch, int px, int py) {
  if (patch.channels != 4) {
    throw std::invalid_argument("alpha_paste: patch must be RGBA");
  }
  const int cc = std::min(dst.channels, 3);
  for (int y = 0; y < patch.height; ++y) {
    const int dy = py + y;
    if (dy < 0 || dy >= dst.height) continue;
    for (int x = 0; x < patch.width; ++x) {
      const int dx = px + x;
      if (dx < 0 || dx >= dst.width) continue;
      const double a = patch.at(x, y, 3) / 255.0;
      if (a <= 0.0) continue;
      for (int c = 0; c < cc; ++c) {
        const double v = a * patch.at(x, y, c) + (1.0 - a) * dst.at(dx, dy, c);
        dst.at(dx, dy, c) = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
}

void fill_rect(Image& img, int x0, int y0, int x1, int y1, const uint8_t* color) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img.width);
  y1 = std::min(y1, img.height);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      for (int c = 0; c < img.channels; ++c) img.at(x, y, c) = color[c];
    }
  }
}

void fill_ellipse(Image& img, double cx, double cy, double rx, double ry, const uint8_t* color) {
  if (rx <= 0.0 || ry <= 0.0) return;
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - rx)));
  const int x1 = std::min(img.width, static_cast<int>(std::ceil(cx + rx)) + 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - ry)));
  const int y1 = std::min(img.height, static_cast<int>(std::ceil(cy + ry)) + 1);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double nx = (x + 0.5 - cx) / rx;
      const double ny = (y + 0.5 - cy) / ry;
      if (nx * nx + ny * ny <= 1.0) {
        for (int c = 0; c < img.channels; ++c) img.at(x, y, c) = color[c];
      }
    }
  }
}

void draw_rect_outline(Image& img, int x0, int y0, int x1, int y1, const uint8_t* color) {
  auto put = [&](int x, int y) {
    if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
    for (int c = 0; c < img.channels; ++c) img.at(x, y, c) = color[c];
  };
  for (int x = x0; x <= x1; ++x) {
    put(x, y0);
    put(x, y1);
  }
  for (int y = y0; y <= y1; ++y) {
    put(x0, y);
    put(x1, y);
  }
}

}  // namespace bootplace
