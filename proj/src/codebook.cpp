#include "edibert/codebook.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "edibert/errors.hpp"

namespace edibert {

Mat patchify(const Image& img, int f) {
  if (f <= 0 || img.h % f != 0 || img.w % f != 0)
    throw std::invalid_argument("patchify: image " + std::to_string(img.h) + "x" +
                                std::to_string(img.w) + " not divisible by f=" +
                                std::to_string(f));
  const int gh = img.h / f, gw = img.w / f, d = f * f * img.c;
  Mat out(gh * gw, d);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      double* row = out.row(gy * gw + gx).data();
      int k = 0;
      for (int py = 0; py < f; ++py)
        for (int px = 0; px < f; ++px)
          for (int ch = 0; ch < img.c; ++ch)
            row[k++] = img.at(gy * f + py, gx * f + px, ch);
    }
  return out;
}

Image unpatchify(const Mat& patches, int h, int w, int c, int f) {
  const int gh = h / f, gw = w / f;
  if (patches.rows() != gh * gw || patches.cols() != f * f * c)
    throw std::invalid_argument("unpatchify: patch matrix (" +
                                std::to_string(patches.rows()) + "x" +
                                std::to_string(patches.cols()) +
                                ") inconsistent with target shape");
  Image img(h, w, c);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      const double* row = patches.row(gy * gw + gx).data();
      int k = 0;
      for (int py = 0; py < f; ++py)
        for (int px = 0; px < f; ++px)
          for (int ch = 0; ch < c; ++ch)
            img.at(gy * f + py, gx * f + px, ch) =
                static_cast<float>(row[k++]);
    }
  img.clamp_();
  return img;
}

namespace {

int nearest_codeword(const Codebook& cb, const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cb.n(); ++k) {
    const double d = (cb.vecs.row(k) - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

TokenGrid quantize(const Mat& vectors, const Codebook& cb, int grid_h, int grid_w) {
  if (vectors.cols() != cb.dim())
    throw std::invalid_argument("quantize: vector dim " + std::to_string(vectors.cols()) +
                                " != codebook dim " + std::to_string(cb.dim()));
  if (vectors.rows() != grid_h * grid_w)
    throw std::invalid_argument("quantize: row count != grid size");
  TokenGrid grid;
  grid.h = grid_h;
  grid.w = grid_w;
  grid.idx.resize(static_cast<size_t>(vectors.rows()));
  for (Eigen::Index i = 0; i < vectors.rows(); ++i)
    grid.idx[static_cast<size_t>(i)] = nearest_codeword(cb, vectors.row(i));
  return grid;
}

Image decode(const TokenGrid& grid, const Codebook& cb, int f, int channels) {
  Mat patches(grid.len(), cb.dim());
  for (int i = 0; i < grid.len(); ++i) {
    const int t = grid.idx[static_cast<size_t>(i)];
    if (t < 0 || t >= cb.n())
      throw std::out_of_range("decode: token " + std::to_string(t) +
                              " outside codebook of size " + std::to_string(cb.n()));
    patches.row(i) = cb.vecs.row(t);
  }
  return unpatchify(patches, grid.h * f, grid.w * f, channels, f);
}

TokenGrid encode_image(const Image& img, const Codebook& cb, int f) {
  return quantize(patchify(img, f), cb, img.h / f, img.w / f);
}

namespace {

size_t count_distinct_rows(const Mat& m) {
  std::set<std::vector<double>> seen;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    seen.insert(std::vector<double>(m.row(i).data(), m.row(i).data() + m.cols()));
  return seen.size();
}

// Index of the patch with the largest distance to its assigned centroid.
Eigen::Index farthest_patch(const Mat& patches, const Codebook& cb,
                            const std::vector<int>& assign) {
  Eigen::Index best = 0;
  double best_d = -1.0;
  for (Eigen::Index i = 0; i < patches.rows(); ++i) {
    const double d =
        (patches.row(i) - cb.vecs.row(assign[static_cast<size_t>(i)]))
            .squaredNorm();
    if (d > best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

Codebook learn_codebook(const std::vector<Image>& images, int n, int f, int iters,
                        uint64_t seed) {
  if (images.empty()) throw std::invalid_argument("learn_codebook: empty dataset");
  if (n <= 0) throw std::invalid_argument("learn_codebook: n must be positive");
  std::vector<Mat> per_image;
  Eigen::Index total = 0;
  for (const Image& img : images) {
    per_image.push_back(patchify(img, f));
    total += per_image.back().rows();
  }
  Mat patches(total, per_image.front().cols());
  Eigen::Index at = 0;
  for (const Mat& m : per_image) {
    patches.middleRows(at, m.rows()) = m;
    at += m.rows();
  }
  const size_t distinct = count_distinct_rows(patches);
  if (static_cast<size_t>(n) > distinct)
    throw std::invalid_argument("learn_codebook: n=" + std::to_string(n) +
                                " exceeds " + std::to_string(distinct) +
                                " distinct patches");

  Rng rng(seed, /*stream=*/0xC0DE);
  Codebook cb;
  cb.vecs.resize(n, patches.cols());

  // k-means++ seeding (distances in f64).
  std::vector<double> d2(static_cast<size_t>(patches.rows()),
                         std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(rng.uniform_u64(
      static_cast<uint64_t>(patches.rows())));
  cb.vecs.row(0) = patches.row(first);
  for (int k = 1; k < n; ++k) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < patches.rows(); ++i) {
      const double d = (patches.row(i) - cb.vecs.row(k - 1)).squaredNorm();
      d2[static_cast<size_t>(i)] = std::min(d2[static_cast<size_t>(i)], d);
      sum += d2[static_cast<size_t>(i)];
    }
    Eigen::Index chosen = 0;
    if (sum <= 0.0) {
      // All remaining patches coincide with existing centroids; fall back to a
      // uniform draw (cannot happen when n <= distinct and duplicates are fixed).
      chosen = static_cast<Eigen::Index>(
          rng.uniform_u64(static_cast<uint64_t>(patches.rows())));
    } else {
      double target = rng.uniform() * sum, acc = 0.0;
      for (Eigen::Index i = 0; i < patches.rows(); ++i) {
        acc += d2[static_cast<size_t>(i)];
        if (acc >= target) {
          chosen = i;
          break;
        }
      }
    }
    cb.vecs.row(k) = patches.row(chosen);
  }

  std::vector<int> assign(static_cast<size_t>(patches.rows()), 0);
  for (int it = 0; it < iters; ++it) {
    for (Eigen::Index i = 0; i < patches.rows(); ++i)
      assign[static_cast<size_t>(i)] = nearest_codeword(cb, patches.row(i));
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n, patches.cols());
    std::vector<long> counts(static_cast<size_t>(n), 0);
    for (Eigen::Index i = 0; i < patches.rows(); ++i) {
      sums.row(assign[static_cast<size_t>(i)]) += patches.row(i);
      counts[static_cast<size_t>(assign[static_cast<size_t>(i)])] += 1;
    }
    for (int k = 0; k < n; ++k)
      if (counts[static_cast<size_t>(k)] > 0)
        // Round centroids to f32 so a learned codebook reloads bit-identically
        // from its on-disk (f32) form.
        cb.vecs.row(k) =
            (sums.row(k) / static_cast<double>(counts[static_cast<size_t>(k)]))
                .cast<float>()
                .cast<double>();
    // Reseed empty clusters from the currently worst-served patch.
    for (int k = 0; k < n; ++k)
      if (counts[static_cast<size_t>(k)] == 0) {
        for (Eigen::Index i = 0; i < patches.rows(); ++i)
          assign[static_cast<size_t>(i)] = nearest_codeword(cb, patches.row(i));
        const Eigen::Index far = farthest_patch(patches, cb, assign);
        cb.vecs.row(k) = patches.row(far);
      }
  }
  // Final pass: split any duplicate codewords so the dictionary is injective.
  for (int attempts = 0; attempts < n; ++attempts) {
    bool fixed_any = false;
    for (int a = 0; a < n && !fixed_any; ++a)
      for (int b = a + 1; b < n && !fixed_any; ++b)
        if (cb.vecs.row(a) == cb.vecs.row(b)) {
          for (Eigen::Index i = 0; i < patches.rows(); ++i)
            assign[static_cast<size_t>(i)] = nearest_codeword(cb, patches.row(i));
          cb.vecs.row(b) = patches.row(farthest_patch(patches, cb, assign));
          fixed_any = true;
        }
    if (!fixed_any) break;
  }
  return cb;
}

SequenceDataset build_sequence_dataset(const std::vector<Image>& images,
                                       const std::vector<std::string>& ids,
                                       const Codebook& cb, int f) {
  if (!ids.empty() && ids.size() != images.size())
    throw std::invalid_argument("build_sequence_dataset: ids/images size mismatch");
  SequenceDataset ds;
  for (size_t i = 0; i < images.size(); ++i) {
    TokenGrid g = encode_image(images[i], cb, f);
    if (ds.grids.empty()) {
      ds.grid_h = g.h;
      ds.grid_w = g.w;
    } else if (g.h != ds.grid_h || g.w != ds.grid_w) {
      throw std::invalid_argument("build_sequence_dataset: inconsistent grid shapes");
    }
    ds.grids.push_back(std::move(g));
    ds.ids.push_back(ids.empty() ? std::to_string(i) : ids[i]);
    ds.tags.push_back("");
  }
  return ds;
}

// ---- codebook io ---------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'E', 'D', 'B', 'K'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_codebook(const Codebook& cb, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out.write(kMagic, 4);
  auto put_u32 = [&out](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(kVersion);
  put_u32(static_cast<uint32_t>(cb.n()));
  put_u32(static_cast<uint32_t>(cb.dim()));
  for (Eigen::Index i = 0; i < cb.vecs.size(); ++i) {
    uint32_t v;
    const float f =
        static_cast<float>(cb.vecs(i / cb.vecs.cols(), i % cb.vecs.cols()));
    std::memcpy(&v, &f, 4);
    put_u32(v);
  }
  if (!out) throw FormatError(path + ": write failed");
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad codebook magic");
  auto get_u32 = [&in, &path]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw FormatError(path + ": truncated codebook");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  };
  const uint32_t version = get_u32();
  if (version != kVersion)
    throw FormatError(path + ": unsupported codebook version " + std::to_string(version));
  const uint32_t n = get_u32();
  const uint32_t d = get_u32();
  if (n == 0 || d == 0) throw FormatError(path + ": empty codebook");
  Codebook cb;
  cb.vecs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < cb.vecs.size(); ++i) {
    const uint32_t v = get_u32();
    float f;
    std::memcpy(&f, &v, 4);
    cb.vecs(i / cb.vecs.cols(), i % cb.vecs.cols()) = f;
  }
  char extra;
  if (in.read(&extra, 1) && in.gcount() == 1)
    throw FormatError(path + ": trailing bytes");
  if (!cb.vecs.allFinite()) throw FormatError(path + ": non-finite codeword");
  return cb;
}

}  // namespace edibert
