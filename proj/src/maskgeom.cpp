#include "edibert/maskgeom.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "edibert/errors.hpp"

namespace edibert {

PixelMask::PixelMask(int h, int w, uint8_t fill) : h(h), w(w) {
  if (h <= 0 || w <= 0)
    throw std::invalid_argument("PixelMask: bad shape " + std::to_string(h) + "x" +
                                std::to_string(w));
  data.assign(static_cast<size_t>(h) * w, fill);
}

LatentEditSet downsample_mask(const PixelMask& m, int f) {
  if (f <= 0 || m.h % f != 0 || m.w % f != 0)
    throw std::invalid_argument("downsample_mask: mask " + std::to_string(m.h) + "x" +
                                std::to_string(m.w) + " not divisible by f=" +
                                std::to_string(f));
  LatentEditSet set;
  set.grid_h = m.h / f;
  set.grid_w = m.w / f;
  for (int gy = 0; gy < set.grid_h; ++gy)
    for (int gx = 0; gx < set.grid_w; ++gx) {
      bool has_edit = false;
      for (int py = gy * f; py < (gy + 1) * f && !has_edit; ++py)
        for (int px = gx * f; px < (gx + 1) * f && !has_edit; ++px)
          if (m.at(py, px) == 0) has_edit = true;
      if (has_edit) set.base.push_back(gy * set.grid_w + gx);
    }
  set.dilated = set.base;
  return set;
}

LatentEditSet dilate(const LatentEditSet& set, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate: negative radius");
  LatentEditSet out;
  out.grid_h = set.grid_h;
  out.grid_w = set.grid_w;
  out.base = set.base;
  std::set<int> grown;
  for (int p : set.base) {
    const int y = p / set.grid_w, x = p % set.grid_w;
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) {
        const int ny = y + dy, nx = x + dx;
        if (ny >= 0 && ny < set.grid_h && nx >= 0 && nx < set.grid_w)
          grown.insert(ny * set.grid_w + nx);
      }
  }
  out.dilated.assign(grown.begin(), grown.end());
  return out;
}

namespace {

// Clockwise scan order on screen coordinates (row grows downward).
constexpr int kDy[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kDx[8] = {0, 1, 1, 1, 0, -1, -1, -1};  // N NE E SE S SW W NW

// Walk one ring of cells clockwise, hugging the outside; restarts at the
// topmost-then-leftmost unvisited cell when a component is exhausted.
void walk_ring(const std::vector<int>& ring, int grid_h, int grid_w,
               std::vector<int>& out) {
  std::set<int> unvisited(ring.begin(), ring.end());
  auto in_ring = [&](int y, int x) {
    return y >= 0 && y < grid_h && x >= 0 && x < grid_w &&
           unvisited.count(y * grid_w + x) > 0;
  };
  while (!unvisited.empty()) {
    int cur = *unvisited.begin();  // sorted set: topmost-then-leftmost
    int heading = 2;               // east
    for (;;) {
      unvisited.erase(cur);
      out.push_back(cur);
      const int y = cur / grid_w, x = cur % grid_w;
      int next = -1;
      for (int turn = 0; turn < 8; ++turn) {
        const int d = (heading + 6 + turn) % 8;  // scan from left-of-heading, clockwise
        if (in_ring(y + kDy[d], x + kDx[d])) {
          next = (y + kDy[d]) * grid_w + (x + kDx[d]);
          heading = d;
          break;
        }
      }
      if (next < 0) break;
      cur = next;
    }
  }
}

}  // namespace

std::vector<int> spiral_order(const LatentEditSet& set) {
  if (set.dilated.empty()) throw std::invalid_argument("spiral_order: empty edit set");
  std::set<int> remaining(set.dilated.begin(), set.dilated.end());
  auto inside = [&](int y, int x) {
    return y >= 0 && y < set.grid_h && x >= 0 && x < set.grid_w &&
           remaining.count(y * set.grid_w + x) > 0;
  };
  std::vector<int> order;
  while (!remaining.empty()) {
    std::vector<int> ring;
    for (int p : remaining) {
      const int y = p / set.grid_w, x = p % set.grid_w;
      bool border = false;
      for (int d = 0; d < 8 && !border; ++d)
        if (!inside(y + kDy[d], x + kDx[d])) border = true;
      if (border) ring.push_back(p);
    }
    walk_ring(ring, set.grid_h, set.grid_w, order);
    for (int p : ring) remaining.erase(p);
  }
  return order;
}

std::vector<int> random_order(const LatentEditSet& set, uint64_t seed) {
  if (set.dilated.empty()) throw std::invalid_argument("random_order: empty edit set");
  std::vector<int> order = set.dilated;
  Rng rng(seed);
  for (size_t i = order.size() - 1; i > 0; --i) {
    const size_t j = rng.uniform_u64(i + 1);
    std::swap(order[i], order[j]);
  }
  return order;
}

SoftMask gaussian_soft_mask(const PixelMask& m, float sigma) {
  if (sigma < 0.0f) throw std::invalid_argument("gaussian_soft_mask: negative sigma");
  SoftMask out;
  out.h = m.h;
  out.w = m.w;
  out.data.assign(m.data.size(), 0.0f);
  if (sigma == 0.0f) {
    for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i];
    return out;
  }
  const int r = static_cast<int>(std::ceil(3.0f * sigma));
  std::vector<double> kernel(static_cast<size_t>(2 * r + 1));
  for (int i = -r; i <= r; ++i)
    kernel[static_cast<size_t>(i + r)] =
        std::exp(-0.5 * (static_cast<double>(i) * i) / (static_cast<double>(sigma) * sigma));
  // Horizontal then vertical pass, each renormalized over in-bounds support so
  // constant regions stay exact.
  std::vector<float> tmp(m.data.size());
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      double acc = 0.0, norm = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int nx = x + i;
        if (nx < 0 || nx >= m.w) continue;
        const double wgt = kernel[static_cast<size_t>(i + r)];
        acc += wgt * m.at(y, nx);
        norm += wgt;
      }
      tmp[static_cast<size_t>(y) * m.w + x] = static_cast<float>(acc / norm);
    }
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      double acc = 0.0, norm = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int ny = y + i;
        if (ny < 0 || ny >= m.h) continue;
        const double wgt = kernel[static_cast<size_t>(i + r)];
        acc += wgt * tmp[static_cast<size_t>(ny) * m.w + x];
        norm += wgt;
      }
      out.data[static_cast<size_t>(y) * m.w + x] = static_cast<float>(acc / norm);
    }
  return out;
}

TrainingRectangle sample_training_rectangle(int grid_h, int grid_w, Rng& rng) {
  if (grid_h < 5 || grid_w < 5)
    throw std::invalid_argument("sample_training_rectangle: grid " +
                                std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                                " too small (need at least 5x5)");
  const int lo_h = static_cast<int>(std::ceil(0.2 * grid_h));
  const int hi_h = static_cast<int>(std::floor(0.5 * grid_h));
  const int lo_w = static_cast<int>(std::ceil(0.2 * grid_w));
  const int hi_w = static_cast<int>(std::floor(0.5 * grid_w));
  TrainingRectangle rect;
  rect.height = rng.uniform_int(lo_h, hi_h);
  rect.width = rng.uniform_int(lo_w, hi_w);
  rect.top = rng.uniform_int(0, grid_h - rect.height);
  rect.left = rng.uniform_int(0, grid_w - rect.width);
  return rect;
}

PixelMask read_mask(const std::string& path) {
  Image img = read_image(path);
  if (img.c != 1) throw FormatError(path + ": mask must be single-channel PGM");
  PixelMask m(img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const uint8_t b = to_byte(img.at(y, x, 0));
      if (b == 255)
        m.at(y, x) = 1;
      else if (b == 0)
        m.at(y, x) = 0;
      else
        throw FormatError(path + ": mask value " + std::to_string(b) +
                          " is neither 0 nor 255");
    }
  return m;
}

void write_mask(const PixelMask& m, const std::string& path) {
  Image img(m.h, m.w, 1);
  for (size_t i = 0; i < m.data.size(); ++i) img.data[i] = m.data[i] ? 1.0f : 0.0f;
  write_image(img, path);
}

PixelMask mask_from_image(const Image& img) {
  if (img.c != 1) throw FormatError("mask_from_image: mask must be single-channel");
  PixelMask m(img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const uint8_t b = to_byte(img.at(y, x, 0));
      if (b == 255)
        m.at(y, x) = 1;
      else if (b == 0)
        m.at(y, x) = 0;
      else
        throw FormatError("mask value " + std::to_string(b) + " is neither 0 nor 255");
    }
  return m;
}

}  // namespace edibert
