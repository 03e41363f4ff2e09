#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edibert/adam.hpp"
#include "edibert/rng.hpp"
#include "edibert/tensor.hpp"

namespace edibert {

struct ModelConfig {
  int vocab = 64;
  int grid_h = 8, grid_w = 8;
  int layers = 4;
  int width = 64;
  int heads = 4;
  int ff_mult = 4;
  float p_rand = 0.9f;
  uint32_t seed = 0;

  int seq_len() const { return grid_h * grid_w; }
  void validate() const;
};

struct BlockParams {
  Mat ln1_g, ln1_b;
  Mat wq, wk, wv, wo;
  Mat ln2_g, ln2_b;
  Mat fc1_w, fc1_b, fc2_w, fc2_b;
};

struct ModelParams {
  Mat tok_emb;  // vocab x width
  Mat pos_emb;  // seq_len x width
  std::vector<BlockParams> blocks;
  Mat lnf_g, lnf_b;
  Mat out_w;  // width x vocab

  // Visits every parameter matrix in declaration order; this order defines
  // the checkpoint layout and the optimizer slot order.
  template <class Self, class F>
  static void visit(Self& p, F&& f) {
    f("tok_emb", p.tok_emb);
    f("pos_emb", p.pos_emb);
    for (size_t i = 0; i < p.blocks.size(); ++i) {
      auto& b = p.blocks[i];
      const std::string tag = "block" + std::to_string(i) + ".";
      f(tag + "ln1_g", b.ln1_g);
      f(tag + "ln1_b", b.ln1_b);
      f(tag + "wq", b.wq);
      f(tag + "wk", b.wk);
      f(tag + "wv", b.wv);
      f(tag + "wo", b.wo);
      f(tag + "ln2_g", b.ln2_g);
      f(tag + "ln2_b", b.ln2_b);
      f(tag + "fc1_w", b.fc1_w);
      f(tag + "fc1_b", b.fc1_b);
      f(tag + "fc2_w", b.fc2_w);
      f(tag + "fc2_b", b.fc2_b);
    }
    f("lnf_g", p.lnf_g);
    f("lnf_b", p.lnf_b);
    f("out_w", p.out_w);
  }
};

// Weight matrices drawn N(0, 0.02) from cfg.seed; norms at identity, biases zero.
ModelParams init_params(const ModelConfig& cfg);

struct PerturbedSample {
  std::vector<int> s_tilde;
  std::vector<int> targets;  // original tokens (read at active positions)
  std::vector<int> active;   // the phi positions
};

// Each phi position independently: uniform random token with prob p_rand,
// else kept. No mask token exists.
PerturbedSample perturb(const std::vector<int>& s, const std::vector<int>& phi,
                        float p_rand, int vocab, Rng& rng);

// Bidirectional forward pass recorded on `tape`; returns logits (seq_len x vocab).
// When `trainable`, parameter leaves require grad; collect_param_grads then
// reads them back in visit order after tape.backward().
class ModelOnTape {
 public:
  ModelOnTape(Tape& tape, const ModelConfig& cfg, const ModelParams& params,
              bool trainable);
  Tensor forward(const std::vector<int>& seq) const;
  void add_param_grads(ModelParams& grad_accum) const;

 private:
  const ModelConfig& cfg_;
  std::vector<Tensor> leaves_;
};

// Inference helpers (no gradient bookkeeping).
Mat forward_logits(const ModelConfig& cfg, const ModelParams& params,
                   const std::vector<int>& seq);
// Softmax of forward row i: p_theta^i(.|s).
Eigen::VectorXf conditional_distribution(const ModelConfig& cfg,
                                         const ModelParams& params,
                                         const std::vector<int>& s, int i);

struct Trainer {
  ModelConfig cfg;
  ModelParams params;
  AdamState opt;
  float lr = 3e-4f;
  int threads = 1;

  // One optimizer update on a batch of sequences: per sequence draw a training
  // rectangle, perturb it, take the masked cross-entropy on those positions
  // only; returns the batch mean loss.
  float step(const std::vector<std::vector<int>>& batch, Rng& rng);
};

// Checkpoint: magic "EDBT", u32 version, fixed-order config fields, then
// parameters in visit order as f32 little-endian.
void save_checkpoint(const ModelConfig& cfg, const ModelParams& params,
                     const std::string& path);
std::pair<ModelConfig, ModelParams> load_checkpoint(const std::string& path);

}  // namespace edibert
