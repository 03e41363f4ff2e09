#include "edibert/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "edibert/errors.hpp"

namespace edibert {

Image::Image(int h, int w, int c, float fill) : h(h), w(w), c(c) {
  if (h <= 0 || w <= 0 || (c != 1 && c != 3))
    throw FormatError("bad image shape " + std::to_string(h) + "x" +
                      std::to_string(w) + "x" + std::to_string(c));
  data.assign(static_cast<size_t>(h) * w * c, fill);
}

void Image::clamp_() {
  for (float& v : data) v = std::clamp(v, 0.0f, 1.0f);
}

uint8_t to_byte(float v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

namespace {

int next_pnm_int(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments per the PNM grammar.
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  if (!in || value < 0) throw FormatError(path + ": malformed PNM header");
  return value;
}

}  // namespace

Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  char p = 0, kind = 0;
  in.get(p).get(kind);
  if (p != 'P' || (kind != '5' && kind != '6'))
    throw FormatError(path + ": not a binary PGM/PPM (P5/P6)");
  const int c = (kind == '5') ? 1 : 3;
  const int w = next_pnm_int(in, path);
  const int h = next_pnm_int(in, path);
  const int maxval = next_pnm_int(in, path);
  if (maxval != 255) throw FormatError(path + ": maxval must be 255");
  in.get();  // single whitespace before raster
  std::vector<uint8_t> raw(static_cast<size_t>(h) * w * c);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size())
    throw FormatError(path + ": truncated raster");
  Image img(h, w, c);
  for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0f;
  return img;
}

void write_image(const Image& img, const std::string& path) {
  if (img.c != 1 && img.c != 3) throw FormatError("write_image: channels must be 1 or 3");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << (img.c == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
  std::vector<uint8_t> raw(img.data.size());
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = to_byte(img.data[i]);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw FormatError(path + ": write failed");
}

}  // namespace edibert
