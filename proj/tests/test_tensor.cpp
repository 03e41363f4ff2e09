#include <doctest.h>

#include <cmath>
#include <vector>

#include "edibert/errors.hpp"
#include "edibert/rng.hpp"
#include "edibert/tensor.hpp"

using namespace edibert;

namespace {

Mat randm(int r, int c, uint64_t seed, float scale = 0.7f) {
  Rng rng(seed, 0);
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = static_cast<float>(rng.normal()) * scale;
  return m;
}

// Weighted sum gives a dense, sign-varying cotangent.
Tensor weigh(Tape& t, Tensor x, uint64_t seed) {
  Tensor w = t.leaf(randm(x.rows(), x.cols(), seed));
  return sum_all(mul(x, w));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul forward oracle") {
  Tape t;
  Mat a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  const Mat c = matmul(t.leaf(a), t.leaf(b)).val();
  CHECK(c(0, 0) == doctest::Approx(19));
  CHECK(c(0, 1) == doctest::Approx(22));
  CHECK(c(1, 0) == doctest::Approx(43));
  CHECK(c(1, 1) == doctest::Approx(50));
}

TEST_CASE("softmax forward oracle") {
  Tape t;
  Mat x(1, 3);
  x << 1, 2, 3;
  const Mat p = softmax(t.leaf(x)).val();
  CHECK(p(0, 0) == doctest::Approx(0.09003057).epsilon(1e-5));
  CHECK(p(0, 1) == doctest::Approx(0.24472847).epsilon(1e-5));
  CHECK(p(0, 2) == doctest::Approx(0.66524096).epsilon(1e-5));
  CHECK(p.row(0).sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("softmax is shift invariant and stable at large logits") {
  Tape t;
  Mat x(1, 3), y(1, 3);
  x << 1, 2, 3;
  y << 1001, 1002, 1003;
  const Mat px = softmax(t.leaf(x)).val();
  const Mat py = softmax(t.leaf(y)).val();
  for (int j = 0; j < 3; ++j) CHECK(px(0, j) == doctest::Approx(py(0, j)).epsilon(1e-6));
}

TEST_CASE("layer_norm forward oracle") {
  Tape t;
  Mat x(1, 3), g(1, 3), b(1, 3);
  x << 1, 2, 3;
  g << 1, 1, 1;
  b << 0, 0, 0;
  const Mat y = layer_norm(t.leaf(x), t.leaf(g), t.leaf(b), 0.0f).val();
  CHECK(y(0, 0) == doctest::Approx(-1.22474487).epsilon(1e-5));
  CHECK(y(0, 1) == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(y(0, 2) == doctest::Approx(1.22474487).epsilon(1e-5));
}

TEST_CASE("layer_norm applies gamma and beta per column") {
  Tape t;
  Mat x(1, 3), g(1, 3), b(1, 3);
  x << 1, 2, 3;
  g << 2, 2, 2;
  b << 1, 1, 1;
  const Mat y = layer_norm(t.leaf(x), t.leaf(g), t.leaf(b), 0.0f).val();
  CHECK(y(0, 0) == doctest::Approx(-1.44948975).epsilon(1e-5));
  CHECK(y(0, 2) == doctest::Approx(3.44948975).epsilon(1e-5));
}

TEST_CASE("gelu forward oracle (tanh form)") {
  Tape t;
  Mat x(1, 4);
  x << -1.0f, 0.0f, 0.5f, 1.0f;
  const Mat y = gelu(t.leaf(x)).val();
  CHECK(y(0, 0) == doctest::Approx(-0.15880801).epsilon(1e-5));
  CHECK(y(0, 1) == doctest::Approx(0.0));
  CHECK(y(0, 2) == doctest::Approx(0.34571401).epsilon(1e-5));
  CHECK(y(0, 3) == doctest::Approx(0.84119199).epsilon(1e-5));
}

TEST_CASE("gather_rows picks rows and repeats them") {
  Tape t;
  Mat table = randm(4, 3, 9);
  const std::vector<int> idx = {2, 0, 2};
  const Mat y = gather_rows(t.leaf(table), idx).val();
  CHECK(y.rows() == 3);
  CHECK((y.row(0) - table.row(2)).norm() == doctest::Approx(0.0));
  CHECK((y.row(1) - table.row(0)).norm() == doctest::Approx(0.0));
  CHECK((y.row(2) - table.row(2)).norm() == doctest::Approx(0.0));
}

TEST_CASE("cross entropy on uniform logits equals ln(vocab)") {
  Tape t;
  Mat logits = Mat::Zero(4, 8);
  const std::vector<int> targets = {1, 2, 3, 4};
  const std::vector<int> active = {0, 2};
  const Mat loss =
      cross_entropy_from_logits(t.leaf(logits), targets, active).val();
  CHECK(loss(0, 0) == doctest::Approx(std::log(8.0)).epsilon(1e-6));
}

TEST_CASE("cross entropy ignores inactive rows") {
  Tape t;
  Mat logits = Mat::Zero(3, 4);
  logits.row(1).setConstant(50.0f);  // wild values on an inactive row
  logits(1, 2) = -50.0f;
  const std::vector<int> targets = {0, 0, 0};
  const Mat loss =
      cross_entropy_from_logits(t.leaf(logits), targets, {0, 2}).val();
  CHECK(loss(0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("backward seeds the loss gradient with one") {
  Tape t;
  Tensor x = t.leaf(randm(2, 3, 11), true);
  Tensor loss = sum_all(x);
  t.backward(loss);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(x.grad()(i, j) == doctest::Approx(1.0));
}

TEST_CASE("backward requires a scalar loss") {
  Tape t;
  Tensor x = t.leaf(randm(2, 3, 12), true);
  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
}

TEST_CASE("check_finite flags non-finite values") {
  Tape t;
  Mat bad(1, 2);
  bad << 1.0f, std::numeric_limits<float>::quiet_NaN();
  t.leaf(bad);
  CHECK_THROWS_AS(t.check_finite("here"), NumericalError);
}

TEST_CASE("grad_check matmul both operands") {
  const Mat b = randm(3, 2, 21);
  const ScalarFn left = [&b](Tape& t, Tensor x) {
    return weigh(t, matmul(x, t.leaf(b)), 31);
  };
  CHECK(grad_check(left, randm(2, 3, 22), 1e-4) < 1e-3);
  const Mat a = randm(2, 3, 23);
  const ScalarFn right = [&a](Tape& t, Tensor x) {
    return weigh(t, matmul(t.leaf(a), x), 32);
  };
  CHECK(grad_check(right, randm(3, 2, 24), 1e-4) < 1e-3);
}

TEST_CASE("grad_check elementwise ops") {
  const Mat other = randm(3, 3, 41);
  const ScalarFn fadd = [&other](Tape& t, Tensor x) {
    return weigh(t, add(x, t.leaf(other)), 42);
  };
  CHECK(grad_check(fadd, randm(3, 3, 43), 1e-4) < 1e-3);
  const ScalarFn fmul = [&other](Tape& t, Tensor x) {
    return weigh(t, mul(x, t.leaf(other)), 44);
  };
  CHECK(grad_check(fmul, randm(3, 3, 45), 1e-4) < 1e-3);
  const ScalarFn fscale = [](Tape& t, Tensor x) {
    return weigh(t, scale(x, -1.7f), 46);
  };
  CHECK(grad_check(fscale, randm(3, 3, 47), 1e-4) < 1e-3);
  const ScalarFn fgelu = [](Tape& t, Tensor x) { return weigh(t, gelu(x), 48); };
  CHECK(grad_check(fgelu, randm(3, 3, 49), 1e-4) < 1e-3);
}

TEST_CASE("grad_check bias broadcast") {
  const Mat x = randm(4, 3, 51);
  const ScalarFn fb = [&x](Tape& t, Tensor bias) {
    return weigh(t, add_bias_row(t.leaf(x), bias), 52);
  };
  CHECK(grad_check(fb, randm(1, 3, 53), 1e-4) < 1e-3);
  const Mat bias = randm(1, 3, 54);
  const ScalarFn fx = [&bias](Tape& t, Tensor xx) {
    return weigh(t, add_bias_row(xx, t.leaf(bias)), 55);
  };
  CHECK(grad_check(fx, randm(4, 3, 56), 1e-4) < 1e-3);
}

TEST_CASE("grad_check softmax along both axes") {
  const ScalarFn frow = [](Tape& t, Tensor x) {
    return weigh(t, softmax(x, 1), 61);
  };
  CHECK(grad_check(frow, randm(3, 4, 62), 1e-4) < 1e-3);
  const ScalarFn fcol = [](Tape& t, Tensor x) {
    return weigh(t, softmax(x, 0), 63);
  };
  CHECK(grad_check(fcol, randm(3, 4, 64), 1e-4) < 1e-3);
}

TEST_CASE("grad_check layer_norm inputs and parameters") {
  const Mat g = randm(1, 5, 71, 0.3f);
  const Mat b = randm(1, 5, 72, 0.3f);
  const ScalarFn fx = [&g, &b](Tape& t, Tensor x) {
    return weigh(t, layer_norm(x, t.leaf(g), t.leaf(b), 1e-5f), 73);
  };
  CHECK(grad_check(fx, randm(3, 5, 74), 1e-4) < 1e-3);
  const Mat x = randm(3, 5, 75);
  const ScalarFn fg = [&x, &b](Tape& t, Tensor gg) {
    return weigh(t, layer_norm(t.leaf(x), gg, t.leaf(b), 1e-5f), 76);
  };
  CHECK(grad_check(fg, randm(1, 5, 77, 0.3f), 1e-4) < 1e-3);
}

TEST_CASE("grad_check gather_rows with repeated indices") {
  const std::vector<int> idx = {1, 3, 1, 0};
  const ScalarFn f = [&idx](Tape& t, Tensor table) {
    return weigh(t, gather_rows(table, idx), 81);
  };
  CHECK(grad_check(f, randm(4, 3, 82), 1e-4) < 1e-3);
}

TEST_CASE("grad_check fused attention all inputs") {
  const Mat q = randm(5, 4, 91), k = randm(5, 4, 92), v = randm(5, 4, 93);
  const ScalarFn fq = [&k, &v](Tape& t, Tensor x) {
    return weigh(t, attention(x, t.leaf(k), t.leaf(v), 2), 94);
  };
  CHECK(grad_check(fq, q, 1e-4) < 1e-3);
  const ScalarFn fk = [&q, &v](Tape& t, Tensor x) {
    return weigh(t, attention(t.leaf(q), x, t.leaf(v), 2), 95);
  };
  CHECK(grad_check(fk, k, 1e-4) < 1e-3);
  const ScalarFn fv = [&q, &k](Tape& t, Tensor x) {
    return weigh(t, attention(t.leaf(q), t.leaf(k), x, 2), 96);
  };
  CHECK(grad_check(fv, v, 1e-4) < 1e-3);
}

TEST_CASE("fused attention matches a single-head composition") {
  Tape t;
  const Mat qm = randm(4, 4, 101), km = randm(4, 4, 102), vm = randm(4, 4, 103);
  Tensor fused = attention(t.leaf(qm), t.leaf(km), t.leaf(vm), 1);
  Tensor q = t.leaf(qm), k = t.leaf(km), v = t.leaf(vm);
  // scores = q k^T / sqrt(d); probs rowwise; out = probs v
  Tape t2;
  Mat scores = (qm * km.transpose()) / std::sqrt(4.0f);
  Mat probs = softmax_rows_plain(scores);
  Mat ref = probs * vm;
  CHECK((fused.val() - ref).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("grad_check cross entropy") {
  const std::vector<int> targets = {2, 0, 1, 3};
  const std::vector<int> active = {0, 1, 3};
  const ScalarFn f = [&](Tape& t, Tensor logits) {
    return cross_entropy_from_logits(logits, targets, active);
  };
  CHECK(grad_check(f, randm(4, 4, 111), 1e-4) < 1e-3);
}

}  // TEST_SUITE
