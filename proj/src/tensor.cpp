#include "edibert/tensor.hpp"

#include <cmath>

#include "edibert/errors.hpp"

namespace edibert {

namespace {

std::string shape_str(const Mat& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

class OpAccess {
 public:
  static Tensor emplace(Tape& t, Mat value, bool rg) {
    return t.emplace(std::move(value), rg, nullptr);
  }
  static void set_back(Tensor out, std::function<void()> back) {
    out.tape->nodes_[out.id].back = std::move(back);
  }
  static const Mat& val(Tensor x) { return x.tape->nodes_[x.id].val; }
  static Mat& grad(Tensor x) { return x.tape->nodes_[x.id].grad; }
  static bool rg(Tensor x) { return x.tape->nodes_[x.id].requires_grad; }
};

const Mat& Tensor::val() const { return OpAccess::val(*this); }
const Mat& Tensor::grad() const { return OpAccess::grad(*this); }
int Tensor::rows() const { return static_cast<int>(val().rows()); }
int Tensor::cols() const { return static_cast<int>(val().cols()); }

Tensor Tape::leaf(Mat value, bool requires_grad) {
  return emplace(std::move(value), requires_grad, nullptr);
}

Tensor Tape::emplace(Mat value, bool requires_grad, std::function<void()> back) {
  Node n;
  n.val = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Tensor{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Tensor loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss from another tape");
  Node& top = nodes_[loss.id];
  if (top.val.rows() != 1 || top.val.cols() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(top.val));
  if (!top.requires_grad)
    throw std::invalid_argument("backward: loss does not require grad");
  for (Node& n : nodes_)
    if (n.requires_grad) n.grad.setZero();
  top.grad(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i)
    if (nodes_[i].back && nodes_[i].requires_grad) nodes_[i].back();
}

void Tape::check_finite(const std::string& where) const {
  for (const Node& n : nodes_)
    if (!n.val.allFinite()) throw NumericalError(where + ": non-finite value on tape");
}

// ---- ops -----------------------------------------------------------------

namespace {

bool any_rg(std::initializer_list<Tensor> xs) {
  for (const Tensor& x : xs)
    if (OpAccess::rg(x)) return true;
  return false;
}

void require_same_tape(std::initializer_list<Tensor> xs) {
  const Tape* t = xs.begin()->tape;
  for (const Tensor& x : xs)
    if (x.tape != t) throw std::invalid_argument("op: tensors from different tapes");
}

}  // namespace

Tensor matmul(Tensor a, Tensor b) {
  require_same_tape({a, b});
  const Mat& A = OpAccess::val(a);
  const Mat& B = OpAccess::val(b);
  if (A.cols() != B.rows())
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(A) +
                                " x " + shape_str(B));
  Tensor out = OpAccess::emplace(*a.tape, A * B, any_rg({a, b}));
  if (OpAccess::rg(out)) {
    OpAccess::set_back(out, [a, b, out]() {
      const Mat& g = OpAccess::grad(out);
      if (OpAccess::rg(a)) OpAccess::grad(a).noalias() += g * OpAccess::val(b).transpose();
      if (OpAccess::rg(b)) OpAccess::grad(b).noalias() += OpAccess::val(a).transpose() * g;
    });
  }
  return out;
}

Tensor add(Tensor a, Tensor b) {
  require_same_tape({a, b});
  const Mat& A = OpAccess::val(a);
  const Mat& B = OpAccess::val(b);
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("add: shape mismatch " + shape_str(A) + " vs " + shape_str(B));
  Tensor out = OpAccess::emplace(*a.tape, A + B, any_rg({a, b}));
  if (OpAccess::rg(out)) {
    OpAccess::set_back(out, [a, b, out]() {
      const Mat& g = OpAccess::grad(out);
      if (OpAccess::rg(a)) OpAccess::grad(a) += g;
      if (OpAccess::rg(b)) OpAccess::grad(b) += g;
    });
  }
  return out;
}

Tensor mul(Tensor a, Tensor b) {
  require_same_tape({a, b});
  const Mat& A = OpAccess::val(a);
  const Mat& B = OpAccess::val(b);
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("mul: shape mismatch " + shape_str(A) + " vs " + shape_str(B));
  Tensor out = OpAccess::emplace(*a.tape, A.cwiseProduct(B), any_rg({a, b}));
  if (OpAccess::rg(out)) {
    OpAccess::set_back(out, [a, b, out]() {
      const Mat& g = OpAccess::grad(out);
      if (OpAccess::rg(a)) OpAccess::grad(a) += g.cwiseProduct(OpAccess::val(b));
      if (OpAccess::rg(b)) OpAccess::grad(b) += g.cwiseProduct(OpAccess::val(a));
    });
  }
  return out;
}

Tensor scale(Tensor x, float s) {
  Tensor out = OpAccess::emplace(*x.tape, OpAccess::val(x) * s, OpAccess::rg(x));
  if (OpAccess::rg(out)) {
    OpAccess::set_back(out, [x, out, s]() { OpAccess::grad(x) += OpAccess::grad(out) * s; });
  }
  return out;
}

Tensor add_bias_row(Tensor x, Tensor bias) {
  require_same_tape({x, bias});
  const Mat& X = OpAccess::val(x);
  const Mat& B = OpAccess::val(bias);
  if (B.rows() != 1 || B.cols() != X.cols())
    throw std::invalid_argument("add_bias_row: bias " + shape_str(B) +
                                " incompatible with " + shape_str(X));
  Mat out = X;
  out.rowwise() += B.row(0);
  Tensor t = OpAccess::emplace(*x.tape, std::move(out), any_rg({x, bias}));
  if (OpAccess::rg(t)) {
    OpAccess::set_back(t, [x, bias, t]() {
      const Mat& g = OpAccess::grad(t);
      if (OpAccess::rg(x)) OpAccess::grad(x) += g;
      if (OpAccess::rg(bias)) OpAccess::grad(bias).row(0) += g.colwise().sum();
    });
  }
  return t;
}

namespace {

// Stable row softmax with f64 denominator accumulation.
Mat softmax_rows_impl(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    double denom = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double e = std::exp(x(r, c) - mx);
      out(r, c) = e;
      denom += e;
    }
    out.row(r) /= denom;
  }
  return out;
}

}  // namespace

Mat softmax_rows_plain(const Mat& x) { return softmax_rows_impl(x); }

Tensor softmax(Tensor x, int axis) {
  if (axis != 0 && axis != 1)
    throw std::invalid_argument("softmax: axis must be 0 or 1, got " + std::to_string(axis));
  const Mat& X = OpAccess::val(x);
  Mat out = (axis == 1) ? softmax_rows_impl(X) : Mat(softmax_rows_impl(X.transpose()).transpose());
  Tensor t = OpAccess::emplace(*x.tape, std::move(out), OpAccess::rg(x));
  if (OpAccess::rg(t)) {
    OpAccess::set_back(t, [x, t, axis]() {
      const Mat& p = OpAccess::val(t);
      const Mat& g = OpAccess::grad(t);
      Mat& gx = OpAccess::grad(x);
      if (axis == 1) {
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
          const double dot = p.row(r).dot(g.row(r));
          gx.row(r) += p.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
        }
      } else {
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
          const double dot = p.col(c).dot(g.col(c));
          gx.col(c) += p.col(c).cwiseProduct((g.col(c).array() - dot).matrix());
        }
      }
    });
  }
  return t;
}

Tensor layer_norm(Tensor x, Tensor gamma, Tensor beta, float eps) {
  require_same_tape({x, gamma, beta});
  const Mat& X = OpAccess::val(x);
  const Mat& G = OpAccess::val(gamma);
  const Mat& B = OpAccess::val(beta);
  if (X.cols() == 0) throw std::invalid_argument("layer_norm: zero-length axis");
  if (G.rows() != 1 || G.cols() != X.cols() || B.rows() != 1 || B.cols() != X.cols())
    throw std::invalid_argument("layer_norm: gamma/beta must be 1x" +
                                std::to_string(X.cols()));
  const Eigen::Index R = X.rows(), C = X.cols();
  Mat xhat(R, C), out(R, C);
  std::vector<double> inv_std(static_cast<size_t>(R));
  for (Eigen::Index r = 0; r < R; ++r) {
    double mean = 0.0;
    for (Eigen::Index c = 0; c < C; ++c) mean += X(r, c);
    mean /= C;
    double var = 0.0;
    for (Eigen::Index c = 0; c < C; ++c) {
      const double d = X(r, c) - mean;
      var += d * d;
    }
    var /= C;
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = istd;
    for (Eigen::Index c = 0; c < C; ++c)
      xhat(r, c) = (X(r, c) - mean) * istd;
  }
  for (Eigen::Index r = 0; r < R; ++r)
    out.row(r) = xhat.row(r).cwiseProduct(G.row(0)) + B.row(0);
  Tensor t = OpAccess::emplace(*x.tape, std::move(out), any_rg({x, gamma, beta}));
  if (OpAccess::rg(t)) {
    OpAccess::set_back(t, [x, gamma, beta, t, xhat, inv_std]() {
      const Mat& g = OpAccess::grad(t);
      const Mat& G = OpAccess::val(gamma);
      const Eigen::Index R = g.rows(), C = g.cols();
      if (OpAccess::rg(gamma)) {
        Mat& gg = OpAccess::grad(gamma);
        for (Eigen::Index r = 0; r < R; ++r)
          gg.row(0) += g.row(r).cwiseProduct(xhat.row(r));
      }
      if (OpAccess::rg(beta)) OpAccess::grad(beta).row(0) += g.colwise().sum();
      if (OpAccess::rg(x)) {
        Mat& gx = OpAccess::grad(x);
        for (Eigen::Index r = 0; r < R; ++r) {
          Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(G.row(0));
          const double m1 = dxhat.mean();
          const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
          gx.row(r) += inv_std[static_cast<size_t>(r)] *
                       (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
        }
      }
    });
  }
  return t;
}

Tensor gelu(Tensor x) {
  const Mat& X = OpAccess::val(x);
  Mat out(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.size(); ++i) {
    const double v = X(i);
    const double u = kGeluC * (v + kGeluA * v * v * v);
    out(i) = 0.5 * v * (1.0 + std::tanh(u));
  }
  Tensor t = OpAccess::emplace(*x.tape, std::move(out), OpAccess::rg(x));
  if (OpAccess::rg(t)) {
    OpAccess::set_back(t, [x, t]() {
      const Mat& X = OpAccess::val(x);
      const Mat& g = OpAccess::grad(t);
      Mat& gx = OpAccess::grad(x);
      for (Eigen::Index i = 0; i < X.size(); ++i) {
        const double v = X(i);
        const double u = kGeluC * (v + kGeluA * v * v * v);
        const double th = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        gx(i) += g(i) * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
      }
    });
  }
  return t;
}

Tensor gather_rows(Tensor table, const std::vector<int>& indices) {
  const Mat& T = OpAccess::val(table);
  Mat out(static_cast<Eigen::Index>(indices.size()), T.cols());
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= T.rows())
      throw std::out_of_range("gather_rows: index " + std::to_string(indices[i]) +
                              " outside table with " + std::to_string(T.rows()) + " rows");
    out.row(static_cast<Eigen::Index>(i)) = T.row(indices[i]);
  }
  Tensor t = OpAccess::emplace(*table.tape, std::move(out), OpAccess::rg(table));
  if (OpAccess::rg(t)) {
    OpAccess::set_back(t, [table, t, indices]() {
      const Mat& g = OpAccess::grad(t);
      Mat& gt = OpAccess::grad(table);
      for (size_t i = 0; i < indices.size(); ++i)
        gt.row(indices[i]) += g.row(static_cast<Eigen::Index>(i));
    });
  }
  return t;
}

Tensor attention(Tensor q, Tensor k, Tensor v, int heads) {
  require_same_tape({q, k, v});
  const Mat& Q = OpAccess::val(q);
  const Mat& K = OpAccess::val(k);
  const Mat& V = OpAccess::val(v);
  if (Q.rows() != K.rows() || Q.rows() != V.rows() || Q.cols() != K.cols() ||
      Q.cols() != V.cols())
    throw std::invalid_argument("attention: q/k/v shapes differ, " + shape_str(Q) + " " +
                                shape_str(K) + " " + shape_str(V));
  if (heads <= 0 || Q.cols() % heads != 0)
    throw std::invalid_argument("attention: width " + std::to_string(Q.cols()) +
                                " not divisible by heads " + std::to_string(heads));
  const Eigen::Index l = Q.rows(), hd = Q.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  Mat out(l, Q.cols());
  std::vector<Mat> probs(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    auto qh = Q.middleCols(h * hd, hd);
    auto kh = K.middleCols(h * hd, hd);
    auto vh = V.middleCols(h * hd, hd);
    Mat scores = (qh * kh.transpose()) * inv_sqrt;
    probs[static_cast<size_t>(h)] = softmax_rows_impl(scores);
    out.middleCols(h * hd, hd).noalias() = probs[static_cast<size_t>(h)] * vh;
  }
  Tensor t = OpAccess::emplace(*q.tape, std::move(out), any_rg({q, k, v}));
  if (OpAccess::rg(t)) {
    OpAccess::set_back(t, [q, k, v, t, heads, hd, inv_sqrt, probs]() {
      const Mat& Q = OpAccess::val(q);
      const Mat& K = OpAccess::val(k);
      const Mat& V = OpAccess::val(v);
      const Mat& g = OpAccess::grad(t);
      for (int h = 0; h < heads; ++h) {
        const Mat& p = probs[static_cast<size_t>(h)];
        auto gh = g.middleCols(h * hd, hd);
        auto qh = Q.middleCols(h * hd, hd);
        auto kh = K.middleCols(h * hd, hd);
        auto vh = V.middleCols(h * hd, hd);
        if (OpAccess::rg(v))
          OpAccess::grad(v).middleCols(h * hd, hd).noalias() += p.transpose() * gh;
        Mat dprobs = gh * vh.transpose();
        Mat dscores(p.rows(), p.cols());
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
          const double dot = p.row(r).dot(dprobs.row(r));
          dscores.row(r) =
              p.row(r).cwiseProduct((dprobs.row(r).array() - dot).matrix());
        }
        dscores *= inv_sqrt;
        if (OpAccess::rg(q))
          OpAccess::grad(q).middleCols(h * hd, hd).noalias() += dscores * kh;
        if (OpAccess::rg(k))
          OpAccess::grad(k).middleCols(h * hd, hd).noalias() += dscores.transpose() * qh;
      }
    });
  }
  return t;
}

Tensor sum_all(Tensor x) {
  double s = 0.0;
  const Mat& X = OpAccess::val(x);
  for (Eigen::Index i = 0; i < X.size(); ++i) s += X(i);
  Mat out(1, 1);
  out(0, 0) = s;
  Tensor t = OpAccess::emplace(*x.tape, std::move(out), OpAccess::rg(x));
  if (OpAccess::rg(t)) {
    OpAccess::set_back(t, [x, t]() {
      OpAccess::grad(x).array() += OpAccess::grad(t)(0, 0);
    });
  }
  return t;
}

Tensor cross_entropy_from_logits(Tensor logits, const std::vector<int>& targets,
                                 const std::vector<int>& active) {
  const Mat& L = OpAccess::val(logits);
  if (active.empty())
    throw std::invalid_argument("cross_entropy_from_logits: empty active set (k=0)");
  if (targets.size() != static_cast<size_t>(L.rows()))
    throw std::invalid_argument("cross_entropy_from_logits: targets size " +
                                std::to_string(targets.size()) + " != rows " +
                                std::to_string(L.rows()));
  for (int pos : active) {
    if (pos < 0 || pos >= L.rows())
      throw std::out_of_range("cross_entropy_from_logits: active position " +
                              std::to_string(pos) + " out of range");
    if (targets[static_cast<size_t>(pos)] < 0 ||
        targets[static_cast<size_t>(pos)] >= L.cols())
      throw std::out_of_range("cross_entropy_from_logits: target out of vocab");
  }
  Mat probs = softmax_rows_impl(L);
  double loss = 0.0;
  for (int pos : active)
    loss -= std::log(static_cast<double>(
        probs(pos, targets[static_cast<size_t>(pos)])));
  loss /= static_cast<double>(active.size());
  Mat out(1, 1);
  out(0, 0) = loss;
  Tensor t = OpAccess::emplace(*logits.tape, std::move(out), OpAccess::rg(logits));
  if (OpAccess::rg(t)) {
    OpAccess::set_back(t, [logits, t, targets, active, probs]() {
      const double g = OpAccess::grad(t)(0, 0) / static_cast<double>(active.size());
      Mat& gl = OpAccess::grad(logits);
      for (int pos : active) {
        gl.row(pos) += g * probs.row(pos);
        gl(pos, targets[static_cast<size_t>(pos)]) -= g;
      }
    });
  }
  return t;
}

// ---- grad check ----------------------------------------------------------

double grad_check(const ScalarFn& f, const Mat& x, double eps) {
  Mat analytic;
  {
    Tape tape;
    Tensor xt = tape.leaf(x, true);
    Tensor loss = f(tape, xt);
    tape.backward(loss);
    analytic = xt.grad();
  }
  auto eval = [&f](const Mat& xv) -> double {
    Tape tape;
    Tensor xt = tape.leaf(xv, false);
    Tensor loss = f(tape, xt);
    return static_cast<double>(loss.val()(0, 0));
  };
  double max_rel = 0.0;
  Mat xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp(i);
    xp(i) = orig + eps;
    const double up = eval(xp);
    xp(i) = orig - eps;
    const double down = eval(xp);
    xp(i) = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = static_cast<double>(analytic(i));
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace edibert
