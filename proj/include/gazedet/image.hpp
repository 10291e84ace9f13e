#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace gazedet {

// Row-major RGB image with channel values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // width*height*3

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, fill) {}

  double& at(int x, int y, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

// Binary PPM (P6), 8-bit. The frame interchange format for synthetic data.
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

// Minimal PNG writer (8-bit RGB, stored deflate blocks). Used for heatmap and
// overlay exports; nothing in the project reads PNGs back.
void write_png(const std::filesystem::path& path, const Image& img);

// value in [0,1] -> RGB, cv-style jet ramp
std::array<double, 3> jet_color(double v);

// Bilinear sample with edge clamping; x, y in pixel coordinates.
std::array<double, 3> sample_bilinear(const Image& img, double x, double y);

}  // namespace gazedet
