#include "edibert/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "edibert/errors.hpp"
#include "edibert/rng.hpp"

namespace edibert {

SceneSpec SceneSpec::defaults() {
  SceneSpec s;
  s.palette = {{0.0f, 0.0f, 0.0f}, {1.0f, 1.0f, 1.0f}, {1.0f, 0.0f, 0.0f},
               {0.0f, 1.0f, 0.0f}, {0.0f, 0.0f, 1.0f}, {1.0f, 1.0f, 0.0f}};
  return s;
}

namespace {

struct CellRect {  // occupied area in snap-cell units
  int top, left, h, w;
  bool overlaps(const CellRect& o) const {
    return top < o.top + o.h && o.top < top + h && left < o.left + o.w &&
           o.left < left + w;
  }
};

void paint_rect(Image& img, int top, int left, int h, int w,
                const std::array<float, 3>& col) {
  for (int y = top; y < top + h; ++y)
    for (int x = left; x < left + w; ++x)
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = col[static_cast<size_t>(ch)];
}

// Disc inscribed in the 2r x 2r box at (top,left); integer-exact membership.
void paint_disc(Image& img, int top, int left, int r,
                const std::array<float, 3>& col) {
  for (int y = top; y < top + 2 * r; ++y)
    for (int x = left; x < left + 2 * r; ++x) {
      const long dy = 2 * (y - top - r) + 1;
      const long dx = 2 * (x - left - r) + 1;
      if (dy * dy + dx * dx < 4L * r * r)
        for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = col[static_cast<size_t>(ch)];
    }
}

}  // namespace

std::vector<Image> generate_scenes(const SceneSpec& spec, int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_scenes: n must be >= 1");
  if (spec.palette.size() < 2)
    throw std::invalid_argument("generate_scenes: palette needs >= 2 colors");
  if (spec.h % spec.cell != 0 || spec.w % spec.cell != 0)
    throw std::invalid_argument("generate_scenes: canvas not divisible by cell");
  const int cells_h = spec.h / spec.cell, cells_w = spec.w / spec.cell;
  const int n_colors = static_cast<int>(spec.palette.size()) - 1;
  std::vector<Image> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(seed, static_cast<uint64_t>(i) + 1);
    Image img(spec.h, spec.w, 3);
    if (spec.background == SceneSpec::Background::kFlat) {
      paint_rect(img, 0, 0, spec.h, spec.w, spec.palette[0]);
    } else {
      for (int y = 0; y < spec.h; ++y) {
        const float t = (spec.h == 1) ? 0.0f : static_cast<float>(y) / (spec.h - 1);
        for (int x = 0; x < spec.w; ++x)
          for (int ch = 0; ch < 3; ++ch)
            img.at(y, x, ch) = (1.0f - t) * spec.palette[0][static_cast<size_t>(ch)] +
                               t * spec.palette[1][static_cast<size_t>(ch)];
      }
    }
    const int want = rng.uniform_int(spec.min_shapes, spec.max_shapes);
    std::vector<CellRect> used;
    int placed = 0;
    // Every 10th scene leads with a large disc, cycling through the palette,
    // so the rarer curved patch patterns exist without dominating the corpus.
    const bool want_big_disc = spec.discs && (i % 10 == 7) &&
                               cells_h >= 4 && cells_w >= 4;
    for (int s = 0; s < want; ++s) {
      const bool big_disc = want_big_disc && s == 0;
      bool is_disc;
      if (spec.discs && spec.rects)
        is_disc = big_disc || rng.uniform() < 0.35;
      else
        is_disc = spec.discs;
      const auto& col =
          big_disc ? spec.palette[static_cast<size_t>(1 + (i / 10) % n_colors)]
                   : spec.palette[static_cast<size_t>(rng.uniform_int(1, n_colors))];
      bool done = false;
      for (int attempt = 0; attempt < 128 && !done; ++attempt) {
        CellRect cr{};
        if (is_disc) {
          const int rc = big_disc ? 4 : 2;  // radius in half-cells: r = rc*cell/2
          cr.h = cr.w = rc;
          if (cells_h < rc || cells_w < rc) break;
          cr.top = rng.uniform_int(0, cells_h - rc);
          cr.left = rng.uniform_int(0, cells_w - rc);
        } else {
          cr.h = rng.uniform_int(1, std::max(1, cells_h / 2));
          cr.w = rng.uniform_int(1, std::max(1, cells_w / 2));
          cr.top = rng.uniform_int(0, cells_h - cr.h);
          cr.left = rng.uniform_int(0, cells_w - cr.w);
        }
        bool clash = false;
        for (const CellRect& u : used) clash = clash || cr.overlaps(u);
        if (clash) continue;
        used.push_back(cr);
        if (is_disc)
          paint_disc(img, cr.top * spec.cell, cr.left * spec.cell,
                     cr.h * spec.cell / 2, col);
        else
          paint_rect(img, cr.top * spec.cell, cr.left * spec.cell, cr.h * spec.cell,
                     cr.w * spec.cell, col);
        ++placed;
        done = true;
      }
    }
    if (placed < spec.min_shapes)
      throw std::runtime_error("generate_scenes: could not place " +
                               std::to_string(spec.min_shapes) +
                               " shapes after bounded retries");
    out.push_back(std::move(img));
  }
  return out;
}

// ---- toy language --------------------------------------------------------

namespace {

void check_toy_spec(const ToyLanguageSpec& spec) {
  if (spec.grid_h < 2 || spec.grid_w < 2)
    throw std::invalid_argument("toy language: grid must be at least 2x2");
  if (spec.vocab < 2) throw std::invalid_argument("toy language: vocab must be >= 2");
  if (spec.rule != 0 && spec.rule != 1)
    throw std::invalid_argument("toy language: unknown rule id " +
                                std::to_string(spec.rule));
  if (spec.noise < 0.0f || spec.noise >= 1.0f)
    throw std::invalid_argument("toy language: noise rate outside [0,1)");
}

}  // namespace

int toy_forced_value(const ToyLanguageSpec& spec, const TokenGrid& g, int r, int c) {
  if (r < 1 || r >= g.h || c < 1 || c >= g.w)
    throw std::out_of_range("toy_forced_value: not an interior position");
  const int north = g.at(r - 1, c), west = g.at(r, c - 1);
  if (spec.rule == 1) return (north + west) % spec.vocab;
  if (r == 1) return north;
  if (c == 1) return west;
  return ((r + c) % 2 == 0) ? north : west;
}

int toy_rule_violations(const ToyLanguageSpec& spec, const TokenGrid& g) {
  int bad = 0;
  for (int r = 1; r < g.h; ++r)
    for (int c = 1; c < g.w; ++c)
      if (g.at(r, c) != toy_forced_value(spec, g, r, c)) ++bad;
  return bad;
}

ToyGrids generate_toy_language(const ToyLanguageSpec& spec, int n, uint64_t seed) {
  check_toy_spec(spec);
  if (n < 1) throw std::invalid_argument("generate_toy_language: n must be >= 1");
  ToyGrids out;
  for (int i = 0; i < n; ++i) {
    Rng rng(seed, static_cast<uint64_t>(i) + 1);
    TokenGrid g;
    g.h = spec.grid_h;
    g.w = spec.grid_w;
    g.idx.assign(static_cast<size_t>(g.h) * g.w, 0);
    const auto draw = [&]() {
      return static_cast<int>(rng.uniform_u64(static_cast<uint64_t>(spec.vocab)));
    };
    if (spec.rule == 0) {
      const int u[2] = {draw(), draw()};
      const int v[2] = {draw(), draw()};
      for (int c = 0; c < g.w; ++c) g.at(0, c) = u[c % 2];
      for (int r = 1; r < g.h; ++r) g.at(r, 0) = v[(r - 1) % 2];
    } else {
      for (int c = 0; c < g.w; ++c) g.at(0, c) = draw();
      for (int r = 1; r < g.h; ++r) g.at(r, 0) = draw();
    }
    for (int r = 1; r < g.h; ++r)
      for (int c = 1; c < g.w; ++c) g.at(r, c) = toy_forced_value(spec, g, r, c);
    out.clean.push_back(g);
    if (spec.noise > 0.0f) {
      for (int p = 0; p < g.len(); ++p)
        if (rng.uniform() < spec.noise) g.idx[static_cast<size_t>(p)] = draw();
    }
    out.noisy.push_back(std::move(g));
  }
  return out;
}

// ---- ingestion and splits ------------------------------------------------

std::vector<Image> load_image_dir(const std::string& path, int expected_h,
                                  int expected_w, std::vector<std::string>* names) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(path)) throw FormatError(path + ": not a directory");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> images;
  for (const std::string& file : files) {
    Image img = read_image(file);  // throws FormatError naming the file
    if ((expected_h > 0 && img.h != expected_h) ||
        (expected_w > 0 && img.w != expected_w))
      throw FormatError(file + ": size " + std::to_string(img.h) + "x" +
                        std::to_string(img.w) + ", expected " +
                        std::to_string(expected_h) + "x" + std::to_string(expected_w));
    images.push_back(std::move(img));
    if (names) names->push_back(fs::path(file).filename().string());
  }
  return images;
}

std::pair<std::vector<size_t>, std::vector<size_t>> split(size_t n, double ratio,
                                                          uint64_t seed) {
  if (n < 2) throw std::invalid_argument("split: need at least 2 items");
  if (ratio <= 0.0 || ratio >= 1.0)
    throw std::invalid_argument("split: ratio must be in (0,1)");
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed, /*stream=*/0x5817);
  for (size_t i = n - 1; i > 0; --i) {
    const size_t j = rng.uniform_u64(i + 1);
    std::swap(order[i], order[j]);
  }
  const size_t n_train = static_cast<size_t>(
      std::lround(ratio * static_cast<double>(n)));
  std::vector<size_t> train(order.begin(), order.begin() + static_cast<long>(n_train));
  std::vector<size_t> val(order.begin() + static_cast<long>(n_train), order.end());
  return {train, val};
}

}  // namespace edibert
