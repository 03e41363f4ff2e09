#include "edibert/model.hpp"

#include <atomic>
#include <cstring>
#include <fstream>
#include <memory>
#include <thread>

#include "edibert/errors.hpp"
#include "edibert/maskgeom.hpp"

namespace edibert {

void ModelConfig::validate() const {
  if (vocab <= 0 || grid_h <= 0 || grid_w <= 0 || layers <= 0 || width <= 0 ||
      heads <= 0 || ff_mult <= 0)
    throw std::invalid_argument("ModelConfig: all dimensions must be positive");
  if (width % heads != 0)
    throw std::invalid_argument("ModelConfig: width " + std::to_string(width) +
                                " not divisible by heads " + std::to_string(heads));
  if (p_rand < 0.0f || p_rand > 1.0f)
    throw std::invalid_argument("ModelConfig: p_rand outside [0,1]");
}

ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  const int w = cfg.width, ff = cfg.ff_mult * cfg.width;
  p.tok_emb.resize(cfg.vocab, w);
  p.pos_emb.resize(cfg.seq_len(), w);
  p.blocks.resize(static_cast<size_t>(cfg.layers));
  for (auto& b : p.blocks) {
    b.ln1_g = Mat::Ones(1, w);
    b.ln1_b = Mat::Zero(1, w);
    b.wq.resize(w, w);
    b.wk.resize(w, w);
    b.wv.resize(w, w);
    b.wo.resize(w, w);
    b.ln2_g = Mat::Ones(1, w);
    b.ln2_b = Mat::Zero(1, w);
    b.fc1_w.resize(w, ff);
    b.fc1_b = Mat::Zero(1, ff);
    b.fc2_w.resize(ff, w);
    b.fc2_b = Mat::Zero(1, w);
  }
  p.lnf_g = Mat::Ones(1, w);
  p.lnf_b = Mat::Zero(1, w);
  p.out_w.resize(w, cfg.vocab);
  Rng rng(cfg.seed, /*stream=*/0xED1B);
  ModelParams::visit(p, [&rng](const std::string& name, Mat& m) {
    if (m.rows() > 1)  // weight matrices; 1-row tensors are norms/biases
      for (Eigen::Index i = 0; i < m.size(); ++i)
        m(i) = static_cast<float>(rng.normal() * 0.02);
    (void)name;
  });
  return p;
}

PerturbedSample perturb(const std::vector<int>& s, const std::vector<int>& phi,
                        float p_rand, int vocab, Rng& rng) {
  PerturbedSample out;
  out.s_tilde = s;
  out.targets = s;
  out.active = phi;
  for (int pos : phi) {
    if (pos < 0 || pos >= static_cast<int>(s.size()))
      throw std::out_of_range("perturb: phi position " + std::to_string(pos) +
                              " outside sequence");
    if (rng.uniform() < p_rand)
      out.s_tilde[static_cast<size_t>(pos)] =
          static_cast<int>(rng.uniform_u64(static_cast<uint64_t>(vocab)));
  }
  return out;
}

namespace {
constexpr float kLnEps = 1e-5f;
}

ModelOnTape::ModelOnTape(Tape& tape, const ModelConfig& cfg,
                         const ModelParams& params, bool trainable)
    : cfg_(cfg) {
  ModelParams::visit(params, [&](const std::string&, const Mat& m) {
    leaves_.push_back(tape.leaf(m, trainable));
  });
}

Tensor ModelOnTape::forward(const std::vector<int>& seq) const {
  if (static_cast<int>(seq.size()) != cfg_.seq_len())
    throw std::invalid_argument("forward: sequence length " +
                                std::to_string(seq.size()) + " != " +
                                std::to_string(cfg_.seq_len()));
  for (int t : seq)
    if (t < 0 || t >= cfg_.vocab)
      throw std::out_of_range("forward: token " + std::to_string(t) +
                              " outside vocab " + std::to_string(cfg_.vocab));
  size_t li = 0;
  auto next = [&]() { return leaves_[li++]; };
  Tensor tok = next(), pos = next();
  Tensor x = add(gather_rows(tok, seq), pos);
  for (int layer = 0; layer < cfg_.layers; ++layer) {
    Tensor ln1_g = next(), ln1_b = next();
    Tensor wq = next(), wk = next(), wv = next(), wo = next();
    Tensor ln2_g = next(), ln2_b = next();
    Tensor fc1_w = next(), fc1_b = next(), fc2_w = next(), fc2_b = next();
    Tensor h = layer_norm(x, ln1_g, ln1_b, kLnEps);
    Tensor y = attention(matmul(h, wq), matmul(h, wk), matmul(h, wv), cfg_.heads);
    x = add(x, matmul(y, wo));
    Tensor h2 = layer_norm(x, ln2_g, ln2_b, kLnEps);
    Tensor f = gelu(add_bias_row(matmul(h2, fc1_w), fc1_b));
    x = add(x, add_bias_row(matmul(f, fc2_w), fc2_b));
  }
  Tensor lnf_g = next(), lnf_b = next();
  Tensor out_w = next();
  return matmul(layer_norm(x, lnf_g, lnf_b, kLnEps), out_w);
}

void ModelOnTape::add_param_grads(ModelParams& grad_accum) const {
  size_t li = 0;
  ModelParams::visit(grad_accum, [&](const std::string&, Mat& g) {
    g += leaves_[li++].grad();
  });
}

Mat forward_logits(const ModelConfig& cfg, const ModelParams& params,
                   const std::vector<int>& seq) {
  Tape tape;
  ModelOnTape model(tape, cfg, params, /*trainable=*/false);
  return model.forward(seq).val();
}

Eigen::VectorXf conditional_distribution(const ModelConfig& cfg,
                                         const ModelParams& params,
                                         const std::vector<int>& s, int i) {
  if (i < 0 || i >= cfg.seq_len())
    throw std::out_of_range("conditional_distribution: position " +
                            std::to_string(i) + " out of range");
  Mat logits = forward_logits(cfg, params, s);
  Mat probs = softmax_rows_plain(logits.row(i));
  return probs.row(0).transpose().cast<float>();
}

namespace {

ModelParams zero_like(const ModelConfig& cfg) {
  ModelParams z = init_params(cfg);
  ModelParams::visit(z, [](const std::string&, Mat& m) { m.setZero(); });
  return z;
}

}  // namespace

float Trainer::step(const std::vector<std::vector<int>>& batch, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("training step: empty batch");
  const int B = static_cast<int>(batch.size());
  // All randomness is drawn serially up front so the result is independent of
  // the worker count.
  std::vector<PerturbedSample> samples;
  samples.reserve(batch.size());
  for (const auto& seq : batch) {
    TrainingRectangle rect = sample_training_rectangle(cfg.grid_h, cfg.grid_w, rng);
    std::vector<int> phi;
    for (int r = rect.top; r < rect.top + rect.height; ++r)
      for (int c = rect.left; c < rect.left + rect.width; ++c)
        phi.push_back(r * cfg.grid_w + c);
    samples.push_back(perturb(seq, phi, cfg.p_rand, cfg.vocab, rng));
  }

  struct MemberResult {
    std::unique_ptr<Tape> tape;
    std::unique_ptr<ModelOnTape> model;
    double loss = 0.0;
  };
  std::vector<MemberResult> results(static_cast<size_t>(B));
  auto run_member = [&](int b) {
    auto& r = results[static_cast<size_t>(b)];
    r.tape = std::make_unique<Tape>();
    r.model = std::make_unique<ModelOnTape>(*r.tape, cfg, params, /*trainable=*/true);
    const auto& sample = samples[static_cast<size_t>(b)];
    Tensor logits = r.model->forward(sample.s_tilde);
    Tensor loss = cross_entropy_from_logits(logits, sample.targets, sample.active);
    r.tape->backward(loss);
    r.loss = loss.val()(0, 0);
  };
  const int workers = std::max(1, std::min(threads, B));
  if (workers == 1) {
    for (int b = 0; b < B; ++b) run_member(b);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> cursor{0};
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&]() {
        for (int b = cursor.fetch_add(1); b < B; b = cursor.fetch_add(1)) run_member(b);
      });
    for (auto& th : pool) th.join();
  }

  double loss_sum = 0.0;
  ModelParams grads = zero_like(cfg);
  for (auto& r : results) {  // fixed member order keeps summation reproducible
    if (!std::isfinite(r.loss))
      throw NumericalError("training step: non-finite loss");
    loss_sum += r.loss;
    r.model->add_param_grads(grads);
  }
  const double inv_b = 1.0 / static_cast<double>(B);
  std::vector<Mat*> param_ptrs;
  std::vector<const Mat*> grad_ptrs;
  ModelParams::visit(params, [&](const std::string&, Mat& m) { param_ptrs.push_back(&m); });
  ModelParams::visit(grads, [&](const std::string&, Mat& g) {
    g *= inv_b;
    grad_ptrs.push_back(&g);
  });
  adam_step(param_ptrs, grad_ptrs, opt, lr);
  return static_cast<float>(loss_sum / B);
}

// ---- checkpoint io -------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'E', 'D', 'B', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw FormatError(path + ": truncated checkpoint");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& in, const std::string& path) {
  const uint32_t v = get_u32(in, path);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace

void save_checkpoint(const ModelConfig& cfg, const ModelParams& params,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(cfg.vocab));
  put_u32(out, static_cast<uint32_t>(cfg.grid_h));
  put_u32(out, static_cast<uint32_t>(cfg.grid_w));
  put_u32(out, static_cast<uint32_t>(cfg.layers));
  put_u32(out, static_cast<uint32_t>(cfg.width));
  put_u32(out, static_cast<uint32_t>(cfg.heads));
  put_u32(out, static_cast<uint32_t>(cfg.ff_mult));
  put_f32(out, cfg.p_rand);
  put_u32(out, cfg.seed);
  ModelParams::visit(params, [&out](const std::string&, const Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
      put_f32(out, static_cast<float>(m(i)));
  });
  if (!out) throw FormatError(path + ": write failed");
}

std::pair<ModelConfig, ModelParams> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad checkpoint magic");
  const uint32_t version = get_u32(in, path);
  if (version != kVersion)
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(version));
  ModelConfig cfg;
  cfg.vocab = static_cast<int>(get_u32(in, path));
  cfg.grid_h = static_cast<int>(get_u32(in, path));
  cfg.grid_w = static_cast<int>(get_u32(in, path));
  cfg.layers = static_cast<int>(get_u32(in, path));
  cfg.width = static_cast<int>(get_u32(in, path));
  cfg.heads = static_cast<int>(get_u32(in, path));
  cfg.ff_mult = static_cast<int>(get_u32(in, path));
  cfg.p_rand = get_f32(in, path);
  cfg.seed = get_u32(in, path);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(path + ": invalid config: " + e.what());
  }
  ModelParams params = init_params(cfg);
  ModelParams::visit(params, [&](const std::string&, Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = get_f32(in, path);
  });
  char extra;
  if (in.read(&extra, 1) && in.gcount() == 1)
    throw FormatError(path + ": trailing bytes after parameters");
  return {cfg, params};
}

}  // namespace edibert
