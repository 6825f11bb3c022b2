#pragma once

#include <array>
#include <filesystem>
#include <vector>

namespace hashsurf {

// Linear-light RGB image; values clamp to [0,1] on write.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;  // row-major, 3 floats per pixel

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0.0f) {}

  float* pixel(int x, int y) { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const float* pixel(int x, int y) const {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

// Binary PPM (P6, maxval 255); no gamma, values scaled by 255 and rounded
// half-up.
void write_ppm(const Image& img, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

// Diagnostic blue-to-red colormap over [0,1].
std::array<float, 3> colormap_blue_red(float v);

}  // namespace hashsurf
