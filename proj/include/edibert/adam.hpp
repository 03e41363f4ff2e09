#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "edibert/tensor.hpp"

namespace edibert {

struct AdamState {
  std::vector<Mat> m, v;
  long step = 0;
};

// Standard Adam with bias correction. Parameter order must stay fixed across
// calls; state buffers are allocated lazily on the first step.
inline void adam_step(const std::vector<Mat*>& params,
                      const std::vector<const Mat*>& grads, AdamState& state,
                      float lr, float beta1 = 0.9f, float beta2 = 0.999f,
                      float eps = 1e-8f) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (const Mat* p : params) {
      state.m.push_back(Mat::Zero(p->rows(), p->cols()));
      state.v.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state size mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(beta1), state.step);
  const double bc2 = 1.0 - std::pow(static_cast<double>(beta2), state.step);
  for (size_t i = 0; i < params.size(); ++i) {
    Mat& p = *params[i];
    const Mat& g = *grads[i];
    if (p.rows() != g.rows() || p.cols() != g.cols())
      throw std::invalid_argument("adam_step: param/grad shape mismatch at index " +
                                  std::to_string(i));
    Mat& m = state.m[i];
    Mat& v = state.v[i];
    m = beta1 * m + (1.0f - beta1) * g;
    v = beta2 * v + (1.0f - beta2) * g.cwiseProduct(g);
    const Mat mhat = m / bc1;
    const Mat vhat = v / bc2;
    p.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
  }
}

}  // namespace edibert
