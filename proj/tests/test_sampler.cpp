#include <doctest.h>

#include <cmath>
#include <vector>

#include "edibert/errors.hpp"
#include "edibert/sampler.hpp"

using namespace edibert;

namespace {

ModelConfig sampler_cfg() {
  ModelConfig cfg;
  cfg.vocab = 8;
  cfg.grid_h = cfg.grid_w = 4;
  cfg.layers = 1;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.ff_mult = 2;
  cfg.seed = 12;
  return cfg;
}

// Scalar codebook: codeword k decodes to the gray level k/(n-1), f = 1.
Codebook gray_codebook(int n) {
  Codebook cb;
  cb.vecs = Mat(n, 1);
  for (int k = 0; k < n; ++k) cb.vecs(k, 0) = k / static_cast<float>(n - 1);
  return cb;
}

Image gray_image(int h, int w, std::vector<float> px) {
  Image img(h, w, 1);
  img.data = std::move(px);
  return img;
}

PixelMask hole_mask(int h, int w, int top, int left, int bh, int bw) {
  PixelMask m(h, w, 1);
  for (int y = top; y < top + bh; ++y)
    for (int x = left; x < left + bw; ++x) m.at(y, x) = 0;
  return m;
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("config validation") {
  SamplerConfig sc;
  CHECK_NOTHROW(sc.validate());
  sc.epochs = 0;
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
  sc = SamplerConfig{};
  sc.top_k = 0;
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
  sc = SamplerConfig{};
  sc.sigma = -0.5f;
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
  sc = SamplerConfig{};
  sc.collages_per_epoch = -1;
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
}

TEST_CASE("suspicious-position selection favors unlikely tokens") {
  // Weights 1/q: position 0 carries 100 / (100 + 3/0.99) ~ 97.06% of the mass.
  Eigen::VectorXf q(4);
  q << 0.01f, 0.99f, 0.99f, 0.99f;
  Rng rng(3, 0);
  int hits = 0;
  const int trials = 20000;
  for (int it = 0; it < trials; ++it)
    if (select_suspicious_position(q, rng) == 0) ++hits;
  CHECK(hits / static_cast<double>(trials) == doctest::Approx(0.9706).epsilon(0.01));
}

TEST_CASE("suspicious-position selection is symmetric for uniform heat") {
  Eigen::VectorXf q = Eigen::VectorXf::Constant(5, 0.2f);
  Rng rng(4, 0);
  std::vector<int> counts(5, 0);
  const int trials = 20000;
  for (int it = 0; it < trials; ++it) ++counts[select_suspicious_position(q, rng)];
  for (int c : counts)
    CHECK(c / static_cast<double>(trials) == doctest::Approx(0.2).epsilon(0.1));
}

TEST_CASE("suspicious-position selection edge cases") {
  Eigen::VectorXf one(1);
  one << 0.5f;
  Rng rng(5, 0);
  for (int it = 0; it < 10; ++it) CHECK(select_suspicious_position(one, rng) == 0);
  Eigen::VectorXf empty(0);
  CHECK_THROWS_AS(select_suspicious_position(empty, rng), std::invalid_argument);
}

TEST_CASE("top-k draw with k=1 is the argmax, ties to the smaller index") {
  Eigen::VectorXf d(4);
  d << 0.1f, 0.4f, 0.4f, 0.1f;
  Rng rng(6, 0);
  for (int it = 0; it < 20; ++it) CHECK(top_k_multinomial(d, 1, rng) == 1);
}

TEST_CASE("top-k draw renormalizes over the kept probabilities") {
  // Top-2 of {0.5, 0.3, 0.2}: P(0) = 0.5/0.8 = 0.625, P(1) = 0.375, P(2) = 0.
  Eigen::VectorXf d(3);
  d << 0.5f, 0.3f, 0.2f;
  Rng rng(7, 0);
  int c0 = 0, c2 = 0;
  const int trials = 20000;
  for (int it = 0; it < trials; ++it) {
    const int pick = top_k_multinomial(d, 2, rng);
    if (pick == 0) ++c0;
    if (pick == 2) ++c2;
  }
  CHECK(c2 == 0);
  CHECK(c0 / static_cast<double>(trials) == doctest::Approx(0.625).epsilon(0.02));
}

TEST_CASE("top-k draw with k >= n matches the full distribution") {
  Eigen::VectorXf d(3);
  d << 0.2f, 0.5f, 0.3f;
  Rng rng(8, 0);
  std::vector<int> counts(3, 0);
  const int trials = 30000;
  for (int it = 0; it < trials; ++it) ++counts[top_k_multinomial(d, 99, rng)];
  CHECK(counts[0] / static_cast<double>(trials) == doctest::Approx(0.2).epsilon(0.05));
  CHECK(counts[1] / static_cast<double>(trials) == doctest::Approx(0.5).epsilon(0.05));
  CHECK(counts[2] / static_cast<double>(trials) == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("top-k draw handles degenerate inputs") {
  Rng rng(9, 0);
  Eigen::VectorXf zeros = Eigen::VectorXf::Zero(4);
  for (int it = 0; it < 5; ++it) CHECK(top_k_multinomial(zeros, 2, rng) == 0);
  Eigen::VectorXf empty(0);
  CHECK_THROWS_AS(top_k_multinomial(empty, 1, rng), std::invalid_argument);
  Eigen::VectorXf d(2);
  d << 0.5f, 0.5f;
  CHECK_THROWS_AS(top_k_multinomial(d, 0, rng), std::invalid_argument);
}

TEST_CASE("collage schedule spaces c collages over n updates") {
  CHECK(collage_schedule(8, 4) == std::vector<int>({2, 4, 6, 8}));
  CHECK(collage_schedule(5, 4) == std::vector<int>({2, 3, 4, 5}));
  CHECK(collage_schedule(3, 4) == std::vector<int>({1, 2, 3, 3}));
  CHECK(collage_schedule(1, 4) == std::vector<int>({1, 1, 1, 1}));
  CHECK(collage_schedule(10, 4) == std::vector<int>({3, 5, 8, 10}));
  CHECK(collage_schedule(10, 0).empty());
  CHECK(collage_schedule(64, 4).size() == 4);
  CHECK_THROWS_AS(collage_schedule(0, 4), std::invalid_argument);
}

TEST_CASE("heatmap reports the probability of each current token") {
  const ModelConfig cfg = sampler_cfg();
  const ModelParams p = init_params(cfg);
  std::vector<int> s(16);
  for (int i = 0; i < 16; ++i) s[static_cast<size_t>(i)] = i % 8;
  const Eigen::VectorXf q = token_likelihood_heatmap(cfg, p, s);
  REQUIRE(q.size() == 16);
  for (int i = 0; i < 16; ++i) {
    CHECK(q(i) > 0.0f);
    CHECK(q(i) < 1.0f);
    const Eigen::VectorXf dist = conditional_distribution(cfg, p, s, i);
    CHECK(q(i) == doctest::Approx(dist(s[static_cast<size_t>(i)])).epsilon(1e-6));
  }
}

TEST_CASE("denoise with zero rounds is the identity") {
  const ModelConfig cfg = sampler_cfg();
  const ModelParams p = init_params(cfg);
  TokenGrid g;
  g.h = g.w = 4;
  for (int i = 0; i < 16; ++i) g.idx.push_back(i % 8);
  const TokenGrid out = denoise(cfg, p, g, 0, 100, 1);
  CHECK(out.idx == g.idx);
}

TEST_CASE("denoise is seed-deterministic and stays in the vocabulary") {
  const ModelConfig cfg = sampler_cfg();
  const ModelParams p = init_params(cfg);
  TokenGrid g;
  g.h = g.w = 4;
  for (int i = 0; i < 16; ++i) g.idx.push_back((3 * i) % 8);
  const TokenGrid a = denoise(cfg, p, g, 12, 100, 5);
  const TokenGrid b = denoise(cfg, p, g, 12, 100, 5);
  CHECK(a.idx == b.idx);
  for (int t : a.idx) {
    CHECK(t >= 0);
    CHECK(t < 8);
  }
  CHECK_THROWS_AS(denoise(cfg, p, g, -1, 100, 5), std::invalid_argument);
  TokenGrid bad;
  bad.h = bad.w = 2;
  bad.idx = {0, 1, 2, 3};
  CHECK_THROWS_AS(denoise(cfg, p, bad, 1, 100, 5), std::invalid_argument);
}

TEST_CASE("soft blending interpolates pixelwise") {
  const Image src = gray_image(1, 3, {1.0f, 1.0f, 1.0f});
  const Image cur = gray_image(1, 3, {0.0f, 0.5f, 1.0f});
  SoftMask soft;
  soft.h = 1;
  soft.w = 3;
  soft.data = {1.0f, 0.5f, 0.0f};
  const Image out = blend_soft(src, cur, soft);
  CHECK(out.data[0] == 1.0f);
  CHECK(out.data[1] == doctest::Approx(0.75f));
  CHECK(out.data[2] == 1.0f);

  const Image wrong = gray_image(2, 3, std::vector<float>(6, 0.0f));
  CHECK_THROWS_AS(blend_soft(src, wrong, soft), std::invalid_argument);
}

TEST_CASE("collage re-encoding respects the soft mask") {
  const Codebook cb = gray_codebook(8);
  EditSession session;
  session.source = gray_image(2, 2, {0.0f, 1.0f, 3 / 7.0f, 5 / 7.0f});
  session.s = encode_image(session.source, cb, 1);
  const std::vector<int> orig = session.s.idx;

  session.soft.h = session.soft.w = 2;
  session.soft.data = {1.0f, 1.0f, 1.0f, 1.0f};
  session.s.idx = {7, 7, 7, 7};
  collage_reencode(session, cb, 1);
  CHECK(session.s.idx == orig);  // full-source blend restores the encoding

  session.soft.data = {0.0f, 0.0f, 0.0f, 0.0f};
  session.s.idx = {7, 0, 1, 2};
  collage_reencode(session, cb, 1);
  CHECK(session.s.idx == std::vector<int>({7, 0, 1, 2}));  // pure round trip
}

TEST_CASE("inpainting preserves every masked-in pixel bit for bit") {
  const ModelConfig cfg = sampler_cfg();
  const ModelParams p = init_params(cfg);
  const Codebook cb = gray_codebook(8);
  std::vector<float> px(16);
  for (int i = 0; i < 16; ++i) px[static_cast<size_t>(i)] = (i % 8) / 7.0f;
  const Image img = gray_image(4, 4, px);
  const PixelMask m = hole_mask(4, 4, 1, 1, 2, 2);

  SamplerConfig sc;
  sc.seed = 42;
  const Image out = inpaint(cfg, p, cb, 1, img, m, sc);
  REQUIRE(out.h == 4);
  REQUIRE(out.w == 4);
  bool edited = false;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      if (m.at(y, x) == 1)
        CHECK(out.at(y, x, 0) == img.at(y, x, 0));
      else if (out.at(y, x, 0) != img.at(y, x, 0))
        edited = true;
    }
  CHECK(edited);

  const Image again = inpaint(cfg, p, cb, 1, img, m, sc);
  CHECK(out.data == again.data);
  SamplerConfig sc2 = sc;
  sc2.seed = 43;
  const Image other = inpaint(cfg, p, cb, 1, img, m, sc2);
  CHECK(out.data != other.data);
}

TEST_CASE("compositing preserves masked-in pixels and is deterministic") {
  const ModelConfig cfg = sampler_cfg();
  const ModelParams p = init_params(cfg);
  const Codebook cb = gray_codebook(8);
  std::vector<float> px(16);
  for (int i = 0; i < 16; ++i) px[static_cast<size_t>(i)] = ((5 * i) % 8) / 7.0f;
  const Image img = gray_image(4, 4, px);
  const PixelMask m = hole_mask(4, 4, 2, 0, 2, 2);

  SamplerConfig sc;
  sc.randomize_init = false;
  sc.seed = 9;
  const Image out = composite(cfg, p, cb, 1, img, m, sc);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      if (m.at(y, x) == 1) CHECK(out.at(y, x, 0) == img.at(y, x, 0));
  const Image again = composite(cfg, p, cb, 1, img, m, sc);
  CHECK(out.data == again.data);
}

TEST_CASE("mode flags must match the entry point") {
  const ModelConfig cfg = sampler_cfg();
  const ModelParams p = init_params(cfg);
  const Codebook cb = gray_codebook(8);
  const Image img = gray_image(4, 4, std::vector<float>(16, 0.5f));
  const PixelMask m = hole_mask(4, 4, 0, 0, 2, 2);

  SamplerConfig sc;
  sc.randomize_init = false;
  CHECK_THROWS_AS(inpaint(cfg, p, cb, 1, img, m, sc), std::invalid_argument);
  sc.randomize_init = true;
  CHECK_THROWS_AS(composite(cfg, p, cb, 1, img, m, sc), std::invalid_argument);
}

TEST_CASE("degenerate masks") {
  const ModelConfig cfg = sampler_cfg();
  const ModelParams p = init_params(cfg);
  const Codebook cb = gray_codebook(8);
  std::vector<float> px(16);
  for (int i = 0; i < 16; ++i) px[static_cast<size_t>(i)] = (i % 8) / 7.0f;
  const Image img = gray_image(4, 4, px);

  const PixelMask all_edit(4, 4, 0);
  SamplerConfig sc;
  CHECK_THROWS_WITH_AS(inpaint(cfg, p, cb, 1, img, all_edit, sc),
                       "degenerate mask: nothing preserved", std::invalid_argument);
  SamplerConfig scc;
  scc.randomize_init = false;
  CHECK_THROWS_AS(composite(cfg, p, cb, 1, img, all_edit, scc),
                  std::invalid_argument);

  const PixelMask all_keep(4, 4, 1);
  CHECK_THROWS_WITH_AS(inpaint(cfg, p, cb, 1, img, all_keep, sc),
                       "degenerate mask: nothing to edit", std::invalid_argument);
  // Compositing with nothing to edit hands the input straight back.
  const Image out = composite(cfg, p, cb, 1, img, all_keep, scc);
  CHECK(out.data == img.data);

  const PixelMask wrong(3, 3, 1);
  CHECK_THROWS_AS(composite(cfg, p, cb, 1, img, wrong, scc), std::invalid_argument);
}

}  // TEST_SUITE
