#pragma once

#include <string>
#include <vector>

#include "edibert/image.hpp"
#include "edibert/rng.hpp"
#include "edibert/tensor.hpp"

namespace edibert {

// Dictionary of N codewords of dimension d = f*f*c.
struct Codebook {
  Mat vecs;  // N x d
  int n() const { return static_cast<int>(vecs.rows()); }
  int dim() const { return static_cast<int>(vecs.cols()); }
};

struct TokenGrid {
  int h = 0, w = 0;       // latent grid shape
  std::vector<int> idx;   // row-major, length h*w

  int at(int gy, int gx) const { return idx[static_cast<size_t>(gy) * w + gx]; }
  int& at(int gy, int gx) { return idx[static_cast<size_t>(gy) * w + gx]; }
  int len() const { return h * w; }
};

struct SequenceDataset {
  int grid_h = 0, grid_w = 0;
  std::vector<TokenGrid> grids;
  std::vector<std::string> ids;   // source image ids, parallel to grids
  std::vector<std::string> tags;  // split tags, parallel to grids
};

// Row i is the flattened f x f x c patch at grid position i (row-major grid
// order, pixels interleaved as in Image).
Mat patchify(const Image& img, int f);
Image unpatchify(const Mat& patches, int h, int w, int c, int f);

// Nearest codeword per row under Euclidean distance; ties -> smallest index.
TokenGrid quantize(const Mat& vectors, const Codebook& cb, int grid_h, int grid_w);

Image decode(const TokenGrid& grid, const Codebook& cb, int f, int channels);

TokenGrid encode_image(const Image& img, const Codebook& cb, int f);

// k-means with k-means++ seeding over all patches of the dataset; empty
// clusters and duplicate centroids are reseeded from the farthest patch.
Codebook learn_codebook(const std::vector<Image>& images, int n, int f, int iters,
                        uint64_t seed);

SequenceDataset build_sequence_dataset(const std::vector<Image>& images,
                                       const std::vector<std::string>& ids,
                                       const Codebook& cb, int f);

// Codebook file: magic "EDBK", u32 version, u32 N, u32 d, N*d f32 little-endian.
void save_codebook(const Codebook& cb, const std::string& path);
Codebook load_codebook(const std::string& path);

}  // namespace edibert
