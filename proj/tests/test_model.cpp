#include <doctest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "edibert/data.hpp"
#include "edibert/errors.hpp"
#include "edibert/model.hpp"

using namespace edibert;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.vocab = 5;
  cfg.grid_h = 2;
  cfg.grid_w = 2;
  cfg.layers = 1;
  cfg.width = 4;
  cfg.heads = 1;
  cfg.ff_mult = 2;
  cfg.seed = 3;
  return cfg;
}

// Parameters with nontrivial norms/biases so the oracle exercises every term.
ModelParams scrambled_params(const ModelConfig& cfg, uint64_t seed) {
  ModelParams p = init_params(cfg);
  Rng rng(seed, 0x5C);
  ModelParams::visit(p, [&](const std::string&, Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      // Float arithmetic on purpose: values must survive an f32 checkpoint
      // round trip bit-exactly.
      const float base = (m.rows() > 1) ? 0.0f : static_cast<float>(m(i));
      const float scale = (m.rows() > 1) ? 0.3f : 0.15f;
      m(i) = scale * static_cast<float>(rng.normal()) + base;
    }
  });
  return p;
}

Mat ln_ref(const Mat& x, const Mat& g, const Mat& b) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mean = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) mean += x(r, c);
    mean /= x.cols();
    double var = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double d = x(r, c) - mean;
      var += d * d;
    }
    var /= x.cols();
    const float istd = static_cast<float>(1.0 / std::sqrt(var + 1e-5));
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      out(r, c) =
          (x(r, c) - static_cast<float>(mean)) * istd * g(0, c) + b(0, c);
  }
  return out;
}

Mat gelu_ref(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const float v = x(i);
    out(i) = 0.5f * v *
             (1.0f + std::tanh(0.7978845608028654f * (v + 0.044715f * v * v * v)));
  }
  return out;
}

std::vector<std::vector<int>> toy_batch(const ToyLanguageSpec& spec, int n,
                                        uint64_t seed) {
  const ToyGrids grids = generate_toy_language(spec, n, seed);
  std::vector<std::vector<int>> out;
  for (const TokenGrid& g : grids.clean) out.push_back(g.idx);
  return out;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
  bool eq = true;
  size_t i = 0;
  std::vector<const Mat*> bm;
  ModelParams::visit(b, [&](const std::string&, const Mat& m) { bm.push_back(&m); });
  ModelParams::visit(a, [&](const std::string&, const Mat& m) {
    const Mat& other = *bm[i++];
    if (m.rows() != other.rows() || m.cols() != other.cols() ||
        (m - other).cwiseAbs().maxCoeff() != 0.0f)
      eq = false;
  });
  return eq;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config validation") {
  ModelConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.width = 62;  // not divisible by 4 heads
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ModelConfig{};
  cfg.p_rand = 1.5f;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ModelConfig{};
  cfg.layers = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("initialization: deterministic, norms at one, biases zero") {
  ModelConfig cfg = tiny_cfg();
  const ModelParams a = init_params(cfg);
  const ModelParams b = init_params(cfg);
  CHECK(params_equal(a, b));

  cfg.seed = 4;
  const ModelParams c = init_params(cfg);
  CHECK_FALSE(params_equal(a, c));

  CHECK((a.blocks[0].ln1_g.array() == 1.0f).all());
  CHECK((a.blocks[0].ln2_b.array() == 0.0f).all());
  CHECK((a.lnf_g.array() == 1.0f).all());
  CHECK((a.blocks[0].fc1_b.array() == 0.0f).all());
}

TEST_CASE("initialization scale is 0.02") {
  ModelConfig cfg;
  cfg.seed = 1;
  const ModelParams p = init_params(cfg);
  const double n = static_cast<double>(p.tok_emb.size());
  const double mean = p.tok_emb.cast<double>().sum() / n;
  const double var =
      (p.tok_emb.cast<double>().array() - mean).square().sum() / n;
  CHECK(std::abs(std::sqrt(var) - 0.02) < 0.003);
  CHECK(std::abs(mean) < 0.003);
}

TEST_CASE("perturb with p_rand 0 changes nothing") {
  Rng rng(5, 0);
  const std::vector<int> s = {0, 1, 2, 3, 4, 5};
  const PerturbedSample ps = perturb(s, {1, 3, 5}, 0.0f, 8, rng);
  CHECK(ps.s_tilde == s);
  CHECK(ps.targets == s);
  CHECK(ps.active == std::vector<int>({1, 3, 5}));
}

TEST_CASE("perturb never touches positions outside phi") {
  Rng rng(6, 0);
  const std::vector<int> s = {3, 3, 3, 3, 3, 3, 3, 3};
  for (int it = 0; it < 200; ++it) {
    const PerturbedSample ps = perturb(s, {2, 5}, 1.0f, 64, rng);
    for (size_t i = 0; i < s.size(); ++i)
      if (i != 2 && i != 5) CHECK(ps.s_tilde[i] == s[i]);
    CHECK(ps.targets == s);
  }
}

TEST_CASE("perturb replacement rate matches p_rand") {
  // With a large vocab the chance that a replacement reproduces the original
  // token is 1/vocab, so the observed change rate is p*(1 - 1/vocab).
  const int vocab = 1000, trials = 100000;
  Rng rng(7, 0);
  const std::vector<int> s = {0};
  int changed = 0;
  for (int it = 0; it < trials; ++it) {
    const PerturbedSample ps = perturb(s, {0}, 0.9f, vocab, rng);
    if (ps.s_tilde[0] != 0) ++changed;
  }
  const double expect = 0.9 * (1.0 - 1.0 / vocab);
  CHECK(std::abs(changed / static_cast<double>(trials) - expect) < 0.004);
}

TEST_CASE("perturb rejects positions outside the sequence") {
  Rng rng(8, 0);
  CHECK_THROWS_AS(perturb({0, 1}, {2}, 0.5f, 4, rng), std::out_of_range);
}

TEST_CASE("forward matches a hand-rolled reference") {
  const ModelConfig cfg = tiny_cfg();
  const ModelParams p = scrambled_params(cfg, 21);
  const std::vector<int> seq = {1, 4, 0, 2};

  // Reference: embeddings, one pre-norm block (single head), final norm.
  Mat x(4, 4);
  for (int i = 0; i < 4; ++i)
    x.row(i) = p.tok_emb.row(seq[static_cast<size_t>(i)]) + p.pos_emb.row(i);
  const BlockParams& b = p.blocks[0];
  const Mat h = ln_ref(x, b.ln1_g, b.ln1_b);
  const Mat q = h * b.wq, k = h * b.wk, v = h * b.wv;
  const Mat scores = (q * k.transpose()) * (1.0f / std::sqrt(4.0f));
  const Mat att = softmax_rows_plain(scores) * v;
  x += att * b.wo;
  const Mat h2 = ln_ref(x, b.ln2_g, b.ln2_b);
  Mat f = h2 * b.fc1_w;
  f.rowwise() += b.fc1_b.row(0);
  f = gelu_ref(f);
  Mat ff = f * b.fc2_w;
  ff.rowwise() += b.fc2_b.row(0);
  x += ff;
  const Mat want = ln_ref(x, p.lnf_g, p.lnf_b) * p.out_w;

  const Mat got = forward_logits(cfg, p, seq);
  REQUIRE(got.rows() == 4);
  REQUIRE(got.cols() == 5);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-4f);
}

TEST_CASE("tape forward and inference forward agree exactly") {
  const ModelConfig cfg = tiny_cfg();
  const ModelParams p = scrambled_params(cfg, 22);
  const std::vector<int> seq = {0, 2, 3, 1};
  Tape tape;
  ModelOnTape model(tape, cfg, p, /*trainable=*/true);
  const Mat a = model.forward(seq).val();
  const Mat b = forward_logits(cfg, p, seq);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("predictions at one position depend on later positions") {
  const ModelConfig cfg = tiny_cfg();
  const ModelParams p = scrambled_params(cfg, 23);
  std::vector<int> s = {1, 2, 3, 4};
  const Eigen::VectorXf before = conditional_distribution(cfg, p, s, 0);
  s[3] = 0;  // change only the last position
  const Eigen::VectorXf after = conditional_distribution(cfg, p, s, 0);
  CHECK((before - after).cwiseAbs().maxCoeff() > 1e-6f);
}

TEST_CASE("forward input validation") {
  const ModelConfig cfg = tiny_cfg();
  const ModelParams p = init_params(cfg);
  CHECK_THROWS_AS(forward_logits(cfg, p, {0, 1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(forward_logits(cfg, p, {0, 1, 2, 9}), std::out_of_range);
  CHECK_THROWS_AS(conditional_distribution(cfg, p, {0, 1, 2, 3}, 4),
                  std::out_of_range);
}

TEST_CASE("a fresh model is close to uniform") {
  ModelConfig cfg;
  cfg.vocab = 64;
  cfg.seed = 11;
  const ModelParams p = init_params(cfg);
  std::vector<int> s(static_cast<size_t>(cfg.seq_len()));
  Rng rng(1, 0);
  for (auto& t : s) t = static_cast<int>(rng.uniform_u64(64));
  const Eigen::VectorXf probs = conditional_distribution(cfg, p, s, 20);
  CHECK(probs.sum() == doctest::Approx(1.0f).epsilon(1e-4));
  double entropy = 0.0;
  for (int i = 0; i < probs.size(); ++i)
    if (probs(i) > 0) entropy -= probs(i) * std::log(static_cast<double>(probs(i)));
  CHECK(entropy > 0.9 * std::log(64.0));
}

TEST_CASE("training reduces the masked loss on structured data") {
  ModelConfig cfg;
  cfg.vocab = 8;
  cfg.grid_h = cfg.grid_w = 5;
  cfg.layers = 1;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.ff_mult = 2;
  cfg.seed = 2;
  Trainer tr;
  tr.cfg = cfg;
  tr.params = init_params(cfg);
  tr.lr = 1e-3f;

  ToyLanguageSpec spec;
  spec.grid_h = spec.grid_w = 5;
  spec.vocab = 8;
  const auto data = toy_batch(spec, 64, 99);

  Rng rng(17, 0);
  double first = 0.0, last = 0.0;
  const int steps = 200;
  for (int step = 0; step < steps; ++step) {
    std::vector<std::vector<int>> batch;
    for (int b = 0; b < 8; ++b)
      batch.push_back(data[rng.uniform_u64(data.size())]);
    const float loss = tr.step(batch, rng);
    if (step < 20) first += loss;
    if (step >= steps - 20) last += loss;
  }
  CHECK(last < 0.8 * first);
}

TEST_CASE("training is invariant to the worker count") {
  ModelConfig cfg;
  cfg.vocab = 6;
  cfg.grid_h = cfg.grid_w = 5;
  cfg.layers = 1;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.ff_mult = 2;
  cfg.seed = 5;

  ToyLanguageSpec spec;
  spec.grid_h = spec.grid_w = 5;
  spec.vocab = 6;
  const auto data = toy_batch(spec, 8, 3);

  auto run = [&](int threads) {
    Trainer tr;
    tr.cfg = cfg;
    tr.params = init_params(cfg);
    tr.threads = threads;
    Rng rng(4, 0);
    for (int step = 0; step < 3; ++step) tr.step(data, rng);
    return tr.params;
  };
  const ModelParams p1 = run(1);
  const ModelParams p2 = run(2);
  const ModelParams p4 = run(4);
  CHECK(params_equal(p1, p2));
  CHECK(params_equal(p1, p4));
}

TEST_CASE("empty batches are rejected") {
  Trainer tr;
  tr.cfg = tiny_cfg();
  tr.cfg.grid_h = tr.cfg.grid_w = 5;
  tr.params = init_params(tr.cfg);
  Rng rng(1, 0);
  CHECK_THROWS_AS(tr.step({}, rng), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is exact") {
  const fs::path dir =
      fs::temp_directory_path() / ("edibert_ckpt_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string p1 = (dir / "a.edbt").string();
  const std::string p2 = (dir / "b.edbt").string();

  const ModelConfig cfg = tiny_cfg();
  const ModelParams params = scrambled_params(cfg, 31);
  save_checkpoint(cfg, params, p1);
  const auto [cfg2, params2] = load_checkpoint(p1);
  CHECK(cfg2.vocab == cfg.vocab);
  CHECK(cfg2.grid_h == cfg.grid_h);
  CHECK(cfg2.layers == cfg.layers);
  CHECK(cfg2.width == cfg.width);
  CHECK(cfg2.heads == cfg.heads);
  CHECK(cfg2.ff_mult == cfg.ff_mult);
  CHECK(cfg2.p_rand == cfg.p_rand);
  CHECK(cfg2.seed == cfg.seed);
  CHECK(params_equal(params, params2));

  // Same logits after the round trip, and identical bytes after re-saving.
  const std::vector<int> seq = {1, 0, 4, 2};
  CHECK((forward_logits(cfg, params, seq) - forward_logits(cfg2, params2, seq))
            .cwiseAbs()
            .maxCoeff() == 0.0f);
  save_checkpoint(cfg2, params2, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  fs::remove_all(dir);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const fs::path dir =
      fs::temp_directory_path() / ("edibert_ckpt2_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const ModelConfig cfg = tiny_cfg();
  const ModelParams params = init_params(cfg);
  const std::string good = (dir / "good.edbt").string();
  save_checkpoint(cfg, params, good);

  {
    std::ofstream out((dir / "magic.edbt").string(), std::ios::binary);
    out << "XXXX1234";
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "magic.edbt").string()), FormatError);

  {
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() / 2);
    std::ofstream out((dir / "trunc.edbt").string(), std::ios::binary);
    out << bytes;
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "trunc.edbt").string()), FormatError);

  {
    std::ofstream out(good, std::ios::binary | std::ios::app);
    out << "z";
  }
  CHECK_THROWS_AS(load_checkpoint(good), FormatError);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.edbt").string()), FormatError);
  fs::remove_all(dir);
}

}  // TEST_SUITE
