#include "ganlab/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

#include "ganlab/error.hpp"
#include "ganlab/rng.hpp"

namespace ganlab {

namespace {

using RowMajorMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajorMat> as_eigen(const Tensor& t) {
    return {t.vec().data(), static_cast<Eigen::Index>(t.rows()),
            static_cast<Eigen::Index>(t.cols())};
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
    Tensor out(Shape{std::size_t(m.rows()), std::size_t(m.cols())});
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out.at(std::size_t(i), std::size_t(j)) = m(i, j);
    return out;
}

void require_square_symmetric(const Tensor& sigma, const char* what) {
    if (sigma.rows() != sigma.cols())
        throw ShapeError(std::string(what) + ": expected a square matrix, got " +
                         shape_str(sigma.shape()));
    double worst = 0.0;
    for (std::size_t i = 0; i < sigma.rows(); ++i)
        for (std::size_t j = i + 1; j < sigma.cols(); ++j)
            worst = std::max(worst, std::fabs(sigma.at(i, j) - sigma.at(j, i)));
    if (worst > 1e-10)
        throw DomainError(std::string(what) + ": matrix is asymmetric by " +
                          std::to_string(worst));
}

double trace(const Tensor& m) {
    double t = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) t += m.at(i, i);
    return t;
}

}  // namespace

GaussianStats fit_gaussian(const Tensor& samples) {
    if (samples.shape().size() != 2)
        throw ShapeError("fit_gaussian: expected [n, d] samples, got " +
                         shape_str(samples.shape()));
    const std::size_t n = samples.rows();
    const std::size_t d = samples.cols();
    if (n < 2)
        throw ShapeError("fit_gaussian: needs at least 2 samples, got " + std::to_string(n));

    GaussianStats stats{Tensor(Shape{d}, 0.0), Tensor(Shape{d, d}, 0.0)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) stats.mu[j] += samples.at(i, j);
    for (std::size_t j = 0; j < d; ++j) stats.mu[j] /= double(n);

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            const double da = samples.at(i, a) - stats.mu[a];
            for (std::size_t b = a; b < d; ++b)
                stats.sigma.at(a, b) += da * (samples.at(i, b) - stats.mu[b]);
        }
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            const double v = stats.sigma.at(a, b) / double(n - 1);
            stats.sigma.at(a, b) = v;
            stats.sigma.at(b, a) = v;
        }
    return stats;
}

Tensor matrix_sqrt_psd(const Tensor& sigma) {
    require_square_symmetric(sigma, "matrix_sqrt_psd");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(as_eigen(sigma));
    if (solver.info() != Eigen::Success)
        throw DomainError("matrix_sqrt_psd: eigendecomposition failed");
    Eigen::VectorXd evals = solver.eigenvalues();
    const double lam_max = evals.size() ? evals.maxCoeff() : 0.0;
    const double floor = -1e-8 * std::max(1.0, std::fabs(lam_max));
    for (Eigen::Index i = 0; i < evals.size(); ++i) {
        if (evals(i) < floor)
            throw DomainError("matrix_sqrt_psd: matrix is indefinite, eigenvalue " +
                              std::to_string(evals(i)));
        evals(i) = std::sqrt(std::max(0.0, evals(i)));
    }
    Eigen::MatrixXd s =
        solver.eigenvectors() * evals.asDiagonal() * solver.eigenvectors().transpose();
    // rounding can leave the product asymmetric in the last bits
    s = 0.5 * (s + s.transpose()).eval();
    return from_eigen(s);
}

double frechet_distance(const GaussianStats& real, const GaussianStats& gen) {
    if (real.mu.shape() != gen.mu.shape() || real.sigma.shape() != gen.sigma.shape())
        throw ShapeError("frechet_distance: stats dimensions differ, " +
                         shape_str(real.mu.shape()) + " vs " + shape_str(gen.mu.shape()));

    double mean_sq = 0.0;
    for (std::size_t j = 0; j < real.mu.numel(); ++j) {
        const double d = real.mu[j] - gen.mu[j];
        mean_sq += d * d;
    }

    Tensor s_real = matrix_sqrt_psd(real.sigma);
    Eigen::MatrixXd inner =
        as_eigen(s_real) * as_eigen(gen.sigma) * as_eigen(s_real);
    inner = 0.5 * (inner + inner.transpose()).eval();
    Tensor cross = matrix_sqrt_psd(from_eigen(inner));

    double fid = mean_sq + trace(real.sigma) + trace(gen.sigma) - 2.0 * trace(cross);
    if (fid < 0.0) {
        if (fid < -1e-8)
            throw DomainError("frechet_distance: negative beyond tolerance: " +
                              std::to_string(fid));
        fid = 0.0;
    }
    return fid;
}

InceptionScore inception_score(const Tensor& probs, std::size_t n_splits) {
    if (probs.shape().size() != 2)
        throw ShapeError("inception_score: expected [n, K] probabilities, got " +
                         shape_str(probs.shape()));
    const std::size_t n = probs.rows();
    const std::size_t k = probs.cols();
    if (n_splits < 1 || n_splits > n)
        throw DomainError("inception_score: need 1 <= splits <= samples, got " +
                          std::to_string(n_splits) + " splits for " + std::to_string(n) +
                          " rows");
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = probs.at(i, j);
            if (p < 0.0 || !std::isfinite(p))
                throw DomainError("inception_score: row " + std::to_string(i) +
                                  " has an invalid probability " + std::to_string(p));
            row_sum += p;
        }
        if (std::fabs(row_sum - 1.0) > 1e-9)
            throw DomainError("inception_score: row " + std::to_string(i) + " sums to " +
                              std::to_string(row_sum));
    }

    std::vector<double> split_scores;
    for (std::size_t s = 0; s < n_splits; ++s) {
        const std::size_t lo = s * n / n_splits;
        const std::size_t hi = (s + 1) * n / n_splits;
        std::vector<double> marginal(k, 0.0);
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = 0; j < k; ++j) marginal[j] += probs.at(i, j);
        for (double& q : marginal) q /= double(hi - lo);

        double mean_kl = 0.0;
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const double p = probs.at(i, j);
                if (p > 0.0) mean_kl += p * (std::log(p) - std::log(marginal[j]));
            }
        mean_kl /= double(hi - lo);
        split_scores.push_back(std::exp(mean_kl));
    }

    InceptionScore score;
    for (double v : split_scores) score.mean += v;
    score.mean /= double(split_scores.size());
    double var = 0.0;
    for (double v : split_scores) var += (v - score.mean) * (v - score.mean);
    score.stddev = std::sqrt(var / double(split_scores.size()));
    return score;
}

namespace {

void require_mode_spec(const ModeSpec& spec, const Tensor& samples, std::size_t min_modes) {
    if (spec.centers.shape().size() != 2)
        throw ShapeError("mode spec: centers must be [K, d], got " +
                         shape_str(spec.centers.shape()));
    if (spec.centers.rows() < min_modes)
        throw DomainError("mode spec: needs at least " + std::to_string(min_modes) +
                          " modes, got " + std::to_string(spec.centers.rows()));
    if (!(spec.std > 0.0))
        throw DomainError("mode spec: std must be positive, got " + std::to_string(spec.std));
    if (samples.shape().size() != 2 || samples.cols() != spec.centers.cols())
        throw ShapeError("mode spec: samples " + shape_str(samples.shape()) +
                         " do not match centers " + shape_str(spec.centers.shape()));
}

double sq_dist_to_center(const Tensor& samples, std::size_t i, const Tensor& centers,
                         std::size_t kidx) {
    double sq = 0.0;
    for (std::size_t j = 0; j < samples.cols(); ++j) {
        const double d = samples.at(i, j) - centers.at(kidx, j);
        sq += d * d;
    }
    return sq;
}

}  // namespace

Tensor mode_classifier_probs(const Tensor& samples, const ModeSpec& spec) {
    require_mode_spec(spec, samples, 2);
    const std::size_t n = samples.rows();
    const std::size_t k = spec.centers.rows();
    Tensor probs(Shape{n, k});
    std::vector<double> logits(k);
    const double inv = 1.0 / (2.0 * spec.std * spec.std);
    for (std::size_t i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            logits[c] = -sq_dist_to_center(samples, i, spec.centers, c) * inv;
            best = std::max(best, logits[c]);
        }
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            logits[c] = std::exp(logits[c] - best);
            z += logits[c];
        }
        for (std::size_t c = 0; c < k; ++c) probs.at(i, c) = logits[c] / z;
    }
    return probs;
}

ModeCoverage mode_coverage(const Tensor& samples, const ModeSpec& spec) {
    require_mode_spec(spec, samples, 1);
    const std::size_t n = samples.rows();
    const std::size_t k = spec.centers.rows();
    const double radius_sq =
        (spec.quality_radius * spec.std) * (spec.quality_radius * spec.std);

    std::vector<std::size_t> hits(k, 0);
    std::size_t hq = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t nearest = 0;
        double nearest_sq = sq_dist_to_center(samples, i, spec.centers, 0);
        for (std::size_t c = 1; c < k; ++c) {
            const double sq = sq_dist_to_center(samples, i, spec.centers, c);
            if (sq < nearest_sq) {
                nearest_sq = sq;
                nearest = c;
            }
        }
        if (nearest_sq <= radius_sq) {
            ++hq;
            ++hits[nearest];
        }
    }

    const double threshold = std::max(1.0, double(n) / (10.0 * double(k)));
    ModeCoverage cov;
    for (std::size_t c = 0; c < k; ++c)
        if (double(hits[c]) >= threshold) ++cov.modes_covered;
    cov.high_quality_fraction = double(hq) / double(n);
    return cov;
}

Tensor random_projection_matrix(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed) {
    RngStream rng(seed, Substream::Init);
    return rng.gaussian_tensor({in_dim, out_dim}, 1.0 / std::sqrt(double(in_dim)));
}

namespace {
constexpr char kStatsMagic[4] = {'G', 'L', 'S', 'T'};
}

void save_stats(const GaussianStats& stats, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open stats cache for writing: " + path);
    const std::uint32_t dim = static_cast<std::uint32_t>(stats.mu.numel());
    out.write(kStatsMagic, 4);
    out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
    out.write(reinterpret_cast<const char*>(stats.mu.vec().data()),
              std::streamsize(dim * sizeof(double)));
    out.write(reinterpret_cast<const char*>(stats.sigma.vec().data()),
              std::streamsize(dim * dim * sizeof(double)));
    if (!out) throw IoError("short write to stats cache: " + path);
}

GaussianStats load_stats(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open stats cache: " + path);
    char magic[4];
    std::uint32_t dim = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&dim), sizeof dim);
    if (!in || std::memcmp(magic, kStatsMagic, 4) != 0)
        throw ParseError("stats cache " + path + ": bad header");
    if (dim == 0) throw ParseError("stats cache " + path + ": zero dimension");
    GaussianStats stats{Tensor(Shape{dim}, 0.0), Tensor(Shape{dim, dim}, 0.0)};
    in.read(reinterpret_cast<char*>(stats.mu.vec().data()),
            std::streamsize(dim * sizeof(double)));
    in.read(reinterpret_cast<char*>(stats.sigma.vec().data()),
            std::streamsize(dim * dim * sizeof(double)));
    if (!in) throw ParseError("stats cache " + path + ": truncated payload");
    return stats;
}

}  // namespace ganlab
