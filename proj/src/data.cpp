#include "ganlab/data.hpp"

#include <cmath>

#include "ganlab/error.hpp"

namespace ganlab {

SyntheticKind parse_synthetic_kind(const std::string& name) {
    if (name == "ring8") return SyntheticKind::Ring8;
    if (name == "grid25") return SyntheticKind::Grid25;
    if (name == "spiral") return SyntheticKind::Spiral;
    throw ConfigError("unknown synthetic dataset '" + name +
                      "' (expected ring8, grid25, spiral)");
}

std::string synthetic_kind_name(SyntheticKind kind) {
    switch (kind) {
        case SyntheticKind::Ring8: return "ring8";
        case SyntheticKind::Grid25: return "grid25";
        case SyntheticKind::Spiral: return "spiral";
    }
    throw Error("unknown synthetic kind value");
}

Tensor synthetic_centers(const SyntheticSpec& spec) {
    if (!(spec.mode_std >= 0.0))
        throw ConfigError("synthetic mode std must be non-negative");
    if (!(spec.radius > 0.0)) throw ConfigError("synthetic radius must be positive");
    const double pi = std::acos(-1.0);
    switch (spec.kind) {
        case SyntheticKind::Ring8: {
            Tensor c(Shape{8, 2});
            for (std::size_t k = 0; k < 8; ++k) {
                c.at(k, 0) = spec.radius * std::cos(2.0 * pi * double(k) / 8.0);
                c.at(k, 1) = spec.radius * std::sin(2.0 * pi * double(k) / 8.0);
            }
            return c;
        }
        case SyntheticKind::Grid25: {
            Tensor c(Shape{25, 2});
            for (std::size_t iy = 0; iy < 5; ++iy)
                for (std::size_t ix = 0; ix < 5; ++ix) {
                    c.at(iy * 5 + ix, 0) = spec.radius * (double(ix) - 2.0) / 2.0;
                    c.at(iy * 5 + ix, 1) = spec.radius * (double(iy) - 2.0) / 2.0;
                }
            return c;
        }
        case SyntheticKind::Spiral: {
            // 20 centers on r = radius * t, t in [0.15, 1], winding 1.375 turns.
            Tensor c(Shape{20, 2});
            for (std::size_t k = 0; k < 20; ++k) {
                const double t = 0.15 + 0.85 * double(k) / 19.0;
                const double theta = 2.75 * pi * double(k) / 19.0;
                c.at(k, 0) = spec.radius * t * std::cos(theta);
                c.at(k, 1) = spec.radius * t * std::sin(theta);
            }
            return c;
        }
    }
    throw Error("unknown synthetic kind value");
}

Tensor sample_real(const SyntheticSpec& spec, std::size_t n, RngStream& rng) {
    if (n < 1) throw DomainError("sample_real: need at least 1 sample");
    const Tensor centers = synthetic_centers(spec);
    Tensor out(Shape{n, 2});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = std::size_t(rng.next_below(centers.rows()));
        out.at(i, 0) = centers.at(k, 0) + spec.mode_std * rng.next_gaussian();
        out.at(i, 1) = centers.at(k, 1) + spec.mode_std * rng.next_gaussian();
    }
    return out;
}

Tensor sample_latent(std::size_t n, std::size_t dim, RngStream& rng) {
    if (n < 1 || dim < 1)
        throw DomainError("sample_latent: need n >= 1 and dim >= 1, got n=" +
                          std::to_string(n) + " dim=" + std::to_string(dim));
    return rng.gaussian_tensor({n, dim});
}

}  // namespace ganlab
