#include "edibert/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <vector>

#include "edibert/errors.hpp"
#include "edibert/rng.hpp"

namespace edibert {

double masked_l1(const Image& generated, const Image& source, const PixelMask& m) {
  if (generated.h != source.h || generated.w != source.w || generated.c != source.c)
    throw std::invalid_argument("masked_l1: image shapes differ");
  if (generated.h != m.h || generated.w != m.w)
    throw std::invalid_argument("masked_l1: mask shape differs");
  double sum = 0.0;
  long count = 0;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      if (!m.at(y, x)) continue;
      ++count;
      for (int ch = 0; ch < generated.c; ++ch)
        sum += std::abs(static_cast<double>(generated.at(y, x, ch)) -
                        static_cast<double>(source.at(y, x, ch)));
    }
  if (count == 0) throw std::invalid_argument("masked_l1: empty preserved region");
  return sum / (static_cast<double>(count) * generated.c);
}

FeatureSet extract_features_latent(const std::vector<Image>& images,
                                   const Codebook& cb, int f,
                                   const std::string& tag) {
  FeatureSet out;
  out.tag = tag;
  out.feats = Mat(static_cast<Eigen::Index>(images.size()), cb.dim());
  for (size_t i = 0; i < images.size(); ++i) {
    const TokenGrid grid = encode_image(images[i], cb, f);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(cb.dim());
    for (int tok : grid.idx) acc += cb.vecs.row(tok);
    acc /= static_cast<double>(grid.len());
    out.feats.row(static_cast<Eigen::Index>(i)) = acc.transpose();
  }
  return out;
}

FeatureSet extract_features_randproj(const std::vector<Image>& images,
                                     const std::string& tag) {
  FeatureSet out;
  out.tag = tag;
  out.feats = Mat(static_cast<Eigen::Index>(images.size()), kRandProjDim);
  if (images.empty()) return out;
  const int h = images[0].h, w = images[0].w, c = images[0].c;
  const Eigen::Index dim = static_cast<Eigen::Index>(h) * w * c;
  Rng rng(0x52503634ull, 0);  // fixed: same-shape image sets share a projection
  Eigen::MatrixXd proj(dim, kRandProjDim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index r = 0; r < dim; ++r)
    for (Eigen::Index q = 0; q < kRandProjDim; ++q)
      proj(r, q) = rng.normal() * scale;
  for (size_t i = 0; i < images.size(); ++i) {
    const Image& img = images[i];
    if (img.h != h || img.w != w || img.c != c)
      throw std::invalid_argument("extract_features_randproj: images differ in shape");
    Eigen::VectorXd flat(dim);
    for (Eigen::Index j = 0; j < dim; ++j)
      flat(j) = static_cast<double>(img.data[static_cast<size_t>(j)]);
    out.feats.row(static_cast<Eigen::Index>(i)) =
        (proj.transpose() * flat).transpose();
  }
  return out;
}

namespace {

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& mu) {
  const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
  Eigen::MatrixXd s =
      (centered.adjoint() * centered) / static_cast<double>(x.rows() - 1);
  s += 1e-6 * Eigen::MatrixXd::Identity(s.rows(), s.cols());
  return s;
}

}  // namespace

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  if (a.feats.rows() < 2 || b.feats.rows() < 2)
    throw std::invalid_argument("frechet_distance: need at least 2 samples per set");
  if (a.feats.cols() != b.feats.cols())
    throw std::invalid_argument("frechet_distance: feature dimensions differ");
  if (!a.feats.allFinite() || !b.feats.allFinite())
    throw NumericalError("frechet_distance: non-finite features");

  const Eigen::MatrixXd xa = a.feats.cast<double>();
  const Eigen::MatrixXd xb = b.feats.cast<double>();
  const Eigen::VectorXd mu_a = xa.colwise().mean();
  const Eigen::VectorXd mu_b = xb.colwise().mean();
  const Eigen::MatrixXd sa = covariance(xa, mu_a);
  const Eigen::MatrixXd sb = covariance(xb, mu_b);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(sa);
  if (es_a.info() != Eigen::Success)
    throw NumericalError("frechet_distance: eigendecomposition failed");
  const Eigen::VectorXd root_a = es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a =
      es_a.eigenvectors() * root_a.asDiagonal() * es_a.eigenvectors().transpose();

  Eigen::MatrixXd prod = sqrt_a * sb * sqrt_a;
  prod = 0.5 * (prod + prod.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_p(prod);
  if (es_p.info() != Eigen::Success)
    throw NumericalError("frechet_distance: eigendecomposition failed");
  const double tr_sqrt = es_p.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double d = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() -
                   2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

namespace {

// Squared radius of the k-NN ball of each real point, self excluded.
Eigen::VectorXd knn_sq_radii(const Eigen::MatrixXd& real, int k) {
  const Eigen::Index n = real.rows();
  Eigen::VectorXd radii(n);
  std::vector<double> d2(static_cast<size_t>(n) - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    size_t m = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) d2[m++] = (real.row(i) - real.row(j)).squaredNorm();
    std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
    radii(i) = d2[static_cast<size_t>(k) - 1];
  }
  return radii;
}

void check_knn_args(const FeatureSet& real, const FeatureSet& fake, int k) {
  if (k < 1 || k >= real.feats.rows())
    throw std::invalid_argument("density/coverage: need 1 <= k < |real|");
  if (real.feats.cols() != fake.feats.cols())
    throw std::invalid_argument("density/coverage: feature dimensions differ");
  if (fake.feats.rows() < 1)
    throw std::invalid_argument("density/coverage: empty fake set");
}

}  // namespace

double density(const FeatureSet& real, const FeatureSet& fake, int k) {
  check_knn_args(real, fake, k);
  const Eigen::MatrixXd r = real.feats.cast<double>();
  const Eigen::MatrixXd f = fake.feats.cast<double>();
  const Eigen::VectorXd radii = knn_sq_radii(r, k);
  long hits = 0;
  for (Eigen::Index j = 0; j < f.rows(); ++j)
    for (Eigen::Index i = 0; i < r.rows(); ++i)
      if ((f.row(j) - r.row(i)).squaredNorm() < radii(i)) ++hits;
  return static_cast<double>(hits) /
         (static_cast<double>(k) * static_cast<double>(f.rows()));
}

double coverage(const FeatureSet& real, const FeatureSet& fake, int k) {
  check_knn_args(real, fake, k);
  const Eigen::MatrixXd r = real.feats.cast<double>();
  const Eigen::MatrixXd f = fake.feats.cast<double>();
  const Eigen::VectorXd radii = knn_sq_radii(r, k);
  long covered = 0;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < f.rows(); ++j)
      best = std::min(best, (f.row(j) - r.row(i)).squaredNorm());
    if (best < radii(i)) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(r.rows());
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

KvPairs metric_report_kv(const MetricReport& r) {
  KvPairs kv;
  kv.emplace_back("feature_mode", r.feature_mode);
  kv.emplace_back("n_real", std::to_string(r.n_real));
  kv.emplace_back("n_fake", std::to_string(r.n_fake));
  kv.emplace_back("k", std::to_string(r.k));
  kv.emplace_back("frechet", format_double(r.frechet));
  kv.emplace_back("density", format_double(r.density));
  kv.emplace_back("coverage", format_double(r.coverage));
  if (r.masked_l1) kv.emplace_back("masked_l1", format_double(*r.masked_l1));
  return kv;
}

}  // namespace edibert
