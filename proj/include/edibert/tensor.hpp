#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace edibert {

// Double precision throughout: gradient checks at eps = 1e-4 need more
// headroom than f32 evaluation noise leaves. Disk formats stay f32.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

// Lightweight handle into a tape node. Value-semantics, cheap to copy.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& val() const;
  const Mat& grad() const;
  int rows() const;
  int cols() const;
};

// Reverse-mode tape: append-only list of nodes, each op records a backward
// closure over node ids. Single-owner, rebuilt per forward pass.
class Tape {
 public:
  Tensor leaf(Mat value, bool requires_grad = false);

  void backward(Tensor loss);
  size_t size() const { return nodes_.size(); }

  // Throws NumericalError naming `where` if any node value is non-finite.
  void check_finite(const std::string& where) const;

 private:
  struct Node {
    Mat val;
    Mat grad;
    bool requires_grad = false;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;

  Tensor emplace(Mat value, bool requires_grad, std::function<void()> back);

  friend struct Tensor;
  friend class OpAccess;
};

// ---- differentiable primitives ------------------------------------------

Tensor matmul(Tensor a, Tensor b);
Tensor add(Tensor a, Tensor b);                  // same shape
Tensor mul(Tensor a, Tensor b);                  // elementwise, same shape
Tensor scale(Tensor x, float s);
Tensor add_bias_row(Tensor x, Tensor bias);      // bias is 1 x cols, broadcast over rows
Tensor softmax(Tensor x, int axis = 1);          // axis 1 = along each row
Tensor layer_norm(Tensor x, Tensor gamma, Tensor beta, float eps);
Tensor gelu(Tensor x);                           // tanh approximation
Tensor gather_rows(Tensor table, const std::vector<int>& indices);
Tensor attention(Tensor q, Tensor k, Tensor v, int heads);  // fused multi-head
Tensor sum_all(Tensor x);                        // 1x1
// Mean over `active` positions of -log softmax(logits)[target].
Tensor cross_entropy_from_logits(Tensor logits, const std::vector<int>& targets,
                                 const std::vector<int>& active);

// ---- plain (non-recorded) helpers ---------------------------------------

Mat softmax_rows_plain(const Mat& x);  // f64 denominators, stable

// ---- gradient checking ---------------------------------------------------

using ScalarFn = std::function<Tensor(Tape&, Tensor)>;

// Central finite differences vs. tape gradient; returns max relative error
// with denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(const ScalarFn& f, const Mat& x, double eps);

}  // namespace edibert
