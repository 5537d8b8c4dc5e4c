#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bootplace {

// Interleaved 8-bit raster, row-major. channels is 1 (gray), 3 (RGB) or
// 4 (RGBA).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;

  static Image blank(int w, int h, int c, uint8_t fill = 0) {
    Image img;
    img.width = w;
    img.height = h;
    img.channels = c;
    img.pixels.assign(static_cast<size_t>(w) * h * c, fill);
    return img;
  }

  uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return pixels.empty(); }
  bool operator==(const Image&) const = default;
};

// Planar double-precision raster used by the filtering code; values are
// whatever scale the caller chooses (typically [0, 255] or [0, 1]).
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<std::vector<double>> planes;  // one vector per channel

  static FloatImage from(const Image& img);
  Image to_u8() const;
};

// PNG I/O. Both throw bootplace::IoError on failure. write_png expects
// 1/3/4 channels at 8 bits.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bilinear resample to (w, h); preserves channel count.
Image resize_bilinear(const Image& src, int w, int h);

// Alpha-blend `patch` (RGBA) onto `dst` (RGB or RGBA) with its top-left
// corner at (x, y); regions outside dst are clipped.
void alpha_paste(Image& dst, const Image& patch, int x, int y);

// Drawing helpers for the synthetic generator and overlays. All clip to the
// image bounds.
void fill_rect(Image& img, int x0, int y0, int x1, int y1, const uint8_t* color);
void fill_ellipse(Image& img, double cx, double cy, double rx, double ry, const uint8_t* color);
void draw_rect_outline(Image& img, int x0, int y0, int x1, int y1, const uint8_t* color);

}  // namespace bootplace
