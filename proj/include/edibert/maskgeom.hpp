#pragma once

#include <string>
#include <vector>

#include "edibert/image.hpp"
#include "edibert/rng.hpp"

namespace edibert {

// Binary pixel mask; 1 = preserved source region, 0 = edit region.
struct PixelMask {
  int h = 0, w = 0;
  std::vector<uint8_t> data;  // 0 or 1

  PixelMask() = default;
  PixelMask(int h, int w, uint8_t fill = 1);
  uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
};

// Latent positions eligible for editing; base = randomized/edited,
// dilated ⊇ base = resampled. Stored as sorted row-major position indices.
struct LatentEditSet {
  int grid_h = 0, grid_w = 0;
  std::vector<int> base;
  std::vector<int> dilated;
};

// Blurred pixel mask; 1 farther than ceil(3*sigma) inside the preserved region.
struct SoftMask {
  int h = 0, w = 0;
  std::vector<float> data;
  float at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
};

struct TrainingRectangle {
  int top = 0, left = 0, height = 0, width = 0;
};

// Latent position p is in the base set iff its f x f pixel cell contains at
// least one edit pixel.
LatentEditSet downsample_mask(const PixelMask& m, int f);

// Chebyshev dilation of the base set by `radius`, clipped to the grid.
LatentEditSet dilate(const LatentEditSet& set, int radius);

// Erosion-peel layers from the set border inward; within a layer, clockwise
// boundary-walk order starting at the topmost-then-leftmost position.
std::vector<int> spiral_order(const LatentEditSet& set);

std::vector<int> random_order(const LatentEditSet& set, uint64_t seed);

// Truncated, renormalized gaussian blur (kernel radius ceil(3*sigma));
// sigma = 0 returns the mask unchanged.
SoftMask gaussian_soft_mask(const PixelMask& m, float sigma);

// Side lengths uniform over [ceil(0.2*dim), floor(0.5*dim)], position uniform
// over valid placements.
TrainingRectangle sample_training_rectangle(int grid_h, int grid_w, Rng& rng);

// Mask files are binary PGM: 255 = preserved, 0 = edit; anything else is an error.
PixelMask read_mask(const std::string& path);
void write_mask(const PixelMask& m, const std::string& path);

PixelMask mask_from_image(const Image& img);  // same 255/0 convention, in memory

}  // namespace edibert
