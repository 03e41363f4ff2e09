#include "edibert/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edibert/errors.hpp"

namespace edibert {

void SamplerConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("SamplerConfig: epochs must be >= 1");
  if (top_k < 1) throw std::invalid_argument("SamplerConfig: top_k must be >= 1");
  if (collages_per_epoch < 0)
    throw std::invalid_argument("SamplerConfig: collages_per_epoch must be >= 0");
  if (dilation < 0) throw std::invalid_argument("SamplerConfig: dilation must be >= 0");
  if (sigma < 0.0f) throw std::invalid_argument("SamplerConfig: sigma must be >= 0");
}

Eigen::VectorXf token_likelihood_heatmap(const ModelConfig& cfg,
                                         const ModelParams& params,
                                         const std::vector<int>& s) {
  const Mat logits = forward_logits(cfg, params, s);
  const Mat probs = softmax_rows_plain(logits);
  Eigen::VectorXf q(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    q(i) = static_cast<float>(probs(i, s[static_cast<size_t>(i)]));
  return q;
}

int select_suspicious_position(const Eigen::VectorXf& q, Rng& rng) {
  if (q.size() == 0)
    throw std::invalid_argument("select_suspicious_position: empty heatmap");
  std::vector<double> w(static_cast<size_t>(q.size()));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    w[static_cast<size_t>(i)] = 1.0 / (static_cast<double>(q(i)) + 1e-12);
    sum += w[static_cast<size_t>(i)];
  }
  const double target = rng.uniform() * sum;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    acc += w[static_cast<size_t>(i)];
    if (acc >= target) return static_cast<int>(i);
  }
  return static_cast<int>(q.size()) - 1;
}

int top_k_multinomial(const Eigen::VectorXf& dist, int k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("top_k_multinomial: k must be >= 1");
  const int n = static_cast<int>(dist.size());
  if (n == 0) throw std::invalid_argument("top_k_multinomial: empty distribution");
  k = std::min(k, n);
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&dist](int a, int b) {
    if (dist(a) != dist(b)) return dist(a) > dist(b);
    return a < b;
  });
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += static_cast<double>(dist(order[static_cast<size_t>(i)]));
  if (sum <= 0.0) return order[0];
  const double target = rng.uniform() * sum;
  double acc = 0.0;
  for (int i = 0; i < k; ++i) {
    acc += static_cast<double>(dist(order[static_cast<size_t>(i)]));
    if (acc >= target) return order[static_cast<size_t>(i)];
  }
  return order[static_cast<size_t>(k - 1)];
}

std::vector<int> collage_schedule(int n, int c) {
  if (n < 1) throw std::invalid_argument("collage_schedule: n must be >= 1");
  if (c < 0) throw std::invalid_argument("collage_schedule: c must be >= 0");
  std::vector<int> at(static_cast<size_t>(c));
  for (int t = 1; t <= c; ++t)
    at[static_cast<size_t>(t) - 1] =
        static_cast<int>(std::ceil(static_cast<double>(n) * t / c));
  return at;
}

TokenGrid denoise(const ModelConfig& cfg, const ModelParams& params,
                  const TokenGrid& s, int T, int top_k, uint64_t seed) {
  if (T < 0) throw std::invalid_argument("denoise: T must be >= 0");
  if (s.len() != cfg.seq_len())
    throw std::invalid_argument("denoise: grid size != model sequence length");
  TokenGrid grid = s;
  Rng rng(seed, /*stream=*/0xD12);
  for (int t = 0; t < T; ++t) {
    const Mat logits = forward_logits(cfg, params, grid.idx);
    const Mat probs = softmax_rows_plain(logits);
    Eigen::VectorXf q(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
      q(i) = static_cast<float>(probs(i, grid.idx[static_cast<size_t>(i)]));
    const int pos = select_suspicious_position(q, rng);
    const Eigen::VectorXf dist = probs.row(pos).transpose().cast<float>();
    grid.idx[static_cast<size_t>(pos)] =
        top_k_multinomial(dist, std::min(top_k, cfg.vocab), rng);
  }
  return grid;
}

Image blend_soft(const Image& src, const Image& cur, const SoftMask& soft) {
  if (src.h != cur.h || src.w != cur.w || src.c != cur.c ||
      src.h != soft.h || src.w != soft.w)
    throw std::invalid_argument("blend_soft: shape mismatch");
  Image out(src.h, src.w, src.c);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      const float a = soft.at(y, x);
      for (int ch = 0; ch < src.c; ++ch)
        out.at(y, x, ch) = src.at(y, x, ch) * a + cur.at(y, x, ch) * (1.0f - a);
    }
  return out;
}

void collage_reencode(EditSession& session, const Codebook& cb, int f) {
  const Image decoded = decode(session.s, cb, f, session.source.c);
  const Image blended = blend_soft(session.source, decoded, session.soft);
  session.s = encode_image(blended, cb, f);
}

namespace {

Image run_edit_session(const ModelConfig& cfg, const ModelParams& params,
                       const Codebook& cb, int f, const Image& source,
                       const PixelMask& m, const SamplerConfig& sc,
                       bool randomize) {
  sc.validate();
  if (source.h != m.h || source.w != m.w)
    throw std::invalid_argument("edit: image and mask shapes differ");

  bool has_preserved = false, has_edit = false;
  for (uint8_t v : m.data) (v ? has_preserved : has_edit) = true;
  if (!has_preserved)
    throw std::invalid_argument("degenerate mask: nothing preserved");
  if (randomize && !has_edit)
    throw std::invalid_argument("degenerate mask: nothing to edit");

  EditSession session;
  session.source = source;
  session.mask = m;
  session.soft = gaussian_soft_mask(m, sc.sigma);
  session.s = encode_image(source, cb, f);
  if (session.s.len() != cfg.seq_len())
    throw std::invalid_argument("edit: latent grid size != model sequence length");

  session.sets = dilate(downsample_mask(m, f), sc.dilation);

  Rng rng(sc.seed, /*stream=*/0xA19);
  if (randomize)
    for (int p : session.sets.base)
      session.s.idx[static_cast<size_t>(p)] =
          static_cast<int>(rng.uniform_u64(static_cast<uint64_t>(cfg.vocab)));

  if (session.sets.dilated.empty()) {  // composite with nothing to edit
    const Image decoded = decode(session.s, cb, f, source.c);
    return blend_soft(source, decoded, session.soft);
  }

  session.order = (sc.order == SamplerConfig::Order::kSpiral)
                      ? spiral_order(session.sets)
                      : random_order(session.sets, rng.next_u64());
  const int n = static_cast<int>(session.order.size());
  // Duplicate schedule entries at tiny n keep the per-epoch count at exactly c.
  std::vector<int> collage_after(static_cast<size_t>(n) + 1, 0);
  for (int u : collage_schedule(n, sc.collages_per_epoch))
    collage_after[static_cast<size_t>(u)] += 1;

  for (int epoch = 1; epoch <= sc.epochs; ++epoch) {
    int update = 0;
    for (int p : session.order) {
      if (epoch == 2 && sc.re_randomize_second_epoch && randomize)
        session.s.idx[static_cast<size_t>(p)] =
            static_cast<int>(rng.uniform_u64(static_cast<uint64_t>(cfg.vocab)));
      const Eigen::VectorXf dist =
          conditional_distribution(cfg, params, session.s.idx, p);
      session.s.idx[static_cast<size_t>(p)] =
          top_k_multinomial(dist, std::min(sc.top_k, cfg.vocab), rng);
      session.steps_done += 1;
      ++update;
      for (int times = 0; times < collage_after[static_cast<size_t>(update)]; ++times)
        collage_reencode(session, cb, f);
    }
  }

  const Image decoded = decode(session.s, cb, f, source.c);
  return blend_soft(source, decoded, session.soft);
}

}  // namespace

Image inpaint(const ModelConfig& cfg, const ModelParams& params, const Codebook& cb,
              int f, const Image& i_m, const PixelMask& m, const SamplerConfig& sc) {
  if (!sc.randomize_init)
    throw std::invalid_argument("inpaint: randomize_init must be true");
  return run_edit_session(cfg, params, cb, f, i_m, m, sc, /*randomize=*/true);
}

Image composite(const ModelConfig& cfg, const ModelParams& params, const Codebook& cb,
                int f, const Image& i_e, const PixelMask& m, const SamplerConfig& sc) {
  if (sc.randomize_init)
    throw std::invalid_argument("composite: randomize_init must be false");
  return run_edit_session(cfg, params, cb, f, i_e, m, sc, /*randomize=*/false);
}

}  // namespace edibert
