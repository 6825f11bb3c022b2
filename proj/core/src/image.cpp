#include "hashsurf/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hashsurf/common.hpp"

namespace hashsurf {

void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write image: " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    const float* src = img.pixel(0, y);
    for (size_t i = 0; i < row.size(); ++i) {
      const float v = std::clamp(src[i], 0.0f, 1.0f);
      row[i] = static_cast<unsigned char>(std::floor(v * 255.0f + 0.5f));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw ConfigError("failed writing image: " + path.string());
}

namespace {

int next_token(std::istream& in) {
  // Skips whitespace and '#' comments per the PPM grammar.
  for (;;) {
    int c = in.get();
    if (c == '#') {
      while (c != '\n' && c != EOF) c = in.get();
    } else if (!std::isspace(c)) {
      int value = 0;
      while (std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
      }
      return value;
    } else if (c == EOF) {
      throw ConfigError("truncated PPM header");
    }
  }
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read image: " + path.string());
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') {
    throw ConfigError("not a binary PPM: " + path.string());
  }
  const int w = next_token(in);
  const int h = next_token(in);
  const int maxval = next_token(in);
  if (w <= 0 || h <= 0 || maxval != 255) throw ConfigError("unsupported PPM: " + path.string());
  Image img(w, h);
  std::vector<unsigned char> data(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!in) throw ConfigError("truncated PPM data: " + path.string());
  for (size_t i = 0; i < data.size(); ++i) img.rgb[i] = static_cast<float>(data[i]) / 255.0f;
  return img;
}

std::array<float, 3> colormap_blue_red(float v) {
  v = std::clamp(v, 0.0f, 1.0f);
  return {v, 0.0f, 1.0f - v};
}

}  // namespace hashsurf
