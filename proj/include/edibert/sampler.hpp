#pragma once

#include <vector>

#include "edibert/codebook.hpp"
#include "edibert/maskgeom.hpp"
#include "edibert/model.hpp"

namespace edibert {

struct SamplerConfig {
  int epochs = 2;
  int collages_per_epoch = 4;
  int top_k = 100;  // clamped to the vocabulary size at use
  int dilation = 1;
  float sigma = 0.0f;
  enum class Order { kSpiral, kRandom };
  Order order = Order::kSpiral;
  bool randomize_init = true;
  bool re_randomize_second_epoch = true;
  uint64_t seed = 0;

  void validate() const;
};

struct EditSession {
  TokenGrid s;
  LatentEditSet sets;
  Image source;
  PixelMask mask;
  SoftMask soft;
  std::vector<int> order;
  int steps_done = 0;
};

// q_i = p_theta^i(s_i | s) for every position.
Eigen::VectorXf token_likelihood_heatmap(const ModelConfig& cfg,
                                         const ModelParams& params,
                                         const std::vector<int>& s);

// Categorical draw over positions with weight proportional to 1/q_i.
int select_suspicious_position(const Eigen::VectorXf& q, Rng& rng);

// Keep the k largest probabilities (ties -> smaller index), renormalize, draw.
int top_k_multinomial(const Eigen::VectorXf& dist, int k, Rng& rng);

// Update counts (1-based, nondecreasing, possibly repeated) after which a
// collage runs: ceil(n*t/c) for t = 1..c. Always exactly c entries.
std::vector<int> collage_schedule(int n, int c);

// T rounds of suspicious-position resampling.
TokenGrid denoise(const ModelConfig& cfg, const ModelParams& params,
                  const TokenGrid& s, int T, int top_k, uint64_t seed);

// Decode, blend with the source under the soft mask, re-encode.
void collage_reencode(EditSession& session, const Codebook& cb, int f);

Image inpaint(const ModelConfig& cfg, const ModelParams& params, const Codebook& cb,
              int f, const Image& i_m, const PixelMask& m, const SamplerConfig& sc);

// Same loop without initial randomization or second-epoch re-randomization;
// serves compositing, crossover and scribble edits.
Image composite(const ModelConfig& cfg, const ModelParams& params, const Codebook& cb,
                int f, const Image& i_e, const PixelMask& m, const SamplerConfig& sc);

// Pixelwise src*soft + cur*(1-soft).
Image blend_soft(const Image& src, const Image& cur, const SoftMask& soft);

}  // namespace edibert
