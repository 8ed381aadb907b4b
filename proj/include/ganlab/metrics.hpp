#pragma once

#include <cstdint>
#include <string>

#include "ganlab/tensor.hpp"

namespace ganlab {

// Moment summary of a feature-space sample cloud.
struct GaussianStats {
    Tensor mu;     // [d]
    Tensor sigma;  // [d, d] symmetric, PSD up to tolerance
};

// fit over rows; unbiased covariance (n-1 divisor), explicitly symmetrized.
GaussianStats fit_gaussian(const Tensor& samples);

// Symmetric PSD square root via eigendecomposition with eigenvalue clamping.
// Rejects inputs that are asymmetric beyond 1e-10 or indefinite beyond a
// scaled -1e-8 tolerance.
Tensor matrix_sqrt_psd(const Tensor& sigma);

// Wasserstein-2 distance between two Gaussians:
//   |mu_r - mu_g|^2 + Tr(S_r + S_g - 2 (S_r^1/2 S_g S_r^1/2)^1/2),
// clamped to 0 when rounding drives it slightly negative.
double frechet_distance(const GaussianStats& real, const GaussianStats& gen);

struct InceptionScore {
    double mean = 0.0;
    double stddev = 0.0;
};

// probs: [n, K] class posteriors, rows summing to 1. Per contiguous split,
// exp(mean KL(p(y|x) || split marginal)); returns mean and population std
// over splits. Always lands in [1, K].
InceptionScore inception_score(const Tensor& probs, std::size_t n_splits = 10);

// Gaussian-bump mixture geometry standing in for a pretrained classifier.
struct ModeSpec {
    Tensor centers;  // [K, d], pairwise distinct
    double std = 0.05;
    double quality_radius = 3.0;
};

// Row i = softmax_k(-|x_i - c_k|^2 / (2 std^2)).
Tensor mode_classifier_probs(const Tensor& samples, const ModeSpec& spec);

struct ModeCoverage {
    std::size_t modes_covered = 0;
    double high_quality_fraction = 0.0;
};

// A sample is high-quality when within quality_radius*std of its nearest
// center; a mode counts as covered once it owns at least max(1, n/(10K))
// high-quality samples.
ModeCoverage mode_coverage(const Tensor& samples, const ModeSpec& spec);

// Fixed seeded Gaussian projection used as the image-mode feature map, so
// distances stay comparable across runs. Entries ~ N(0, 1/in_dim).
inline constexpr std::uint64_t kDefaultProjectionSeed = 42;
Tensor random_projection_matrix(std::size_t in_dim, std::size_t out_dim,
                                std::uint64_t seed = kDefaultProjectionSeed);

// Binary stats cache so real-data moments are computed once per dataset.
void save_stats(const GaussianStats& stats, const std::string& path);
GaussianStats load_stats(const std::string& path);

}  // namespace ganlab
