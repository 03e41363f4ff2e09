#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace edibert {

// Interleaved row-major pixels, f32 in [0,1] (clamped on construction).
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f);

  float& at(int y, int x, int ch) { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
  float at(int y, int x, int ch) const { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
  size_t size() const { return data.size(); }

  void clamp_();
};

// 8-bit binary PGM (P5, c=1) / PPM (P6, c=3), maxval 255.
Image read_image(const std::string& path);
void write_image(const Image& img, const std::string& path);

// Quantize a float value in [0,1] to the byte written on disk.
uint8_t to_byte(float v);

}  // namespace edibert
