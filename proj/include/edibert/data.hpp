#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "edibert/codebook.hpp"
#include "edibert/image.hpp"

namespace edibert {

// Synthetic scenes: palette shapes on a flat or vertically graded background.
// Shapes snap to the tokenizer cell grid and never overlap, which keeps the
// distinct-patch vocabulary small enough for a near-lossless toy codebook.
struct SceneSpec {
  int h = 32, w = 32;
  int cell = 4;  // snap granularity (tokenizer patch size)
  std::vector<std::array<float, 3>> palette;  // entry 0 is the background color
  int min_shapes = 1, max_shapes = 3;
  bool rects = true, discs = true;
  enum class Background { kFlat, kVGradient };
  Background background = Background::kFlat;

  static SceneSpec defaults();
};

// Scene i depends only on (seed, i): bit-identical under regeneration.
std::vector<Image> generate_scenes(const SceneSpec& spec, int n, uint64_t seed);

// Deterministic token grammar over the latent grid, used as an exact oracle
// for the samplers. Rule 0: periodic seed lines (row 0 alternates two values,
// column 0 two more) with a copy-routing interior. Rule 1: classic additive
// interior t = (north + west) mod N with i.i.d. seed lines.
struct ToyLanguageSpec {
  int grid_h = 8, grid_w = 8;
  int vocab = 64;
  int rule = 0;
  float noise = 0.0f;  // fraction of cells replaced by uniform tokens
};

struct ToyGrids {
  std::vector<TokenGrid> noisy;  // == clean when noise = 0
  std::vector<TokenGrid> clean;
};

ToyGrids generate_toy_language(const ToyLanguageSpec& spec, int n, uint64_t seed);

// Value the rule forces at interior position (r, c) given its neighbors.
int toy_forced_value(const ToyLanguageSpec& spec, const TokenGrid& g, int r, int c);

// Number of interior positions violating the rule.
int toy_rule_violations(const ToyLanguageSpec& spec, const TokenGrid& g);

// All PGM/PPM files in the directory, sorted by filename. expected_h/w of 0
// skip the size check.
std::vector<Image> load_image_dir(const std::string& path, int expected_h,
                                  int expected_w,
                                  std::vector<std::string>* names = nullptr);

// Seeded shuffle split of {0..n-1}; |train| = round(ratio * n).
std::pair<std::vector<size_t>, std::vector<size_t>> split(size_t n, double ratio,
                                                          uint64_t seed);

}  // namespace edibert
