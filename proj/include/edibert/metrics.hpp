#pragma once

#include <optional>
#include <string>
#include <vector>

#include "edibert/codebook.hpp"
#include "edibert/image.hpp"
#include "edibert/kvfile.hpp"
#include "edibert/maskgeom.hpp"

namespace edibert {

struct FeatureSet {
  Mat feats;        // n x q, row per sample
  std::string tag;  // "real" | "generated"
};

// Mean |generated - source| over preserved pixels (m = 1), averaged over
// channels. Throws if nothing is preserved.
double masked_l1(const Image& generated, const Image& source, const PixelMask& m);

// Mean over grid positions of the codeword vector of each token.
FeatureSet extract_features_latent(const std::vector<Image>& images,
                                   const Codebook& cb, int f,
                                   const std::string& tag);

// Fixed seeded random projection of raw pixels to kRandProjDim dims.
inline constexpr int kRandProjDim = 64;
FeatureSet extract_features_randproj(const std::vector<Image>& images,
                                     const std::string& tag);

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 sqrt(sqrt(Sa) Sb sqrt(Sa))), covariances
// regularized by +1e-6 I. Double precision throughout.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

// k-NN manifold metrics with Euclidean distance; the k-th nearest-neighbour
// radius of a real point excludes the point itself.
double density(const FeatureSet& real, const FeatureSet& fake, int k);
double coverage(const FeatureSet& real, const FeatureSet& fake, int k);

struct MetricReport {
  std::string feature_mode;  // "latent" | "randproj"
  int n_real = 0;
  int n_fake = 0;
  int k = 0;
  double frechet = 0.0;
  double density = 0.0;
  double coverage = 0.0;
  std::optional<double> masked_l1;  // only when source/mask pairs were given
};

KvPairs metric_report_kv(const MetricReport& r);
std::string format_double(double v);  // shortest round-trip-ish, %.9g

}  // namespace edibert
