#pragma once

#include <cstdint>
#include <string>

#include "ganlab/rng.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

enum class SyntheticKind { Ring8, Grid25, Spiral };

SyntheticKind parse_synthetic_kind(const std::string& name);
std::string synthetic_kind_name(SyntheticKind kind);

// Two-dimensional Gaussian-mixture benchmark families:
//   ring8:  8 centers at angle 2*pi*k/8 on a circle of the given radius
//   grid25: 5x5 lattice spanning [-radius, radius] per axis
//   spiral: 20 centers along an Archimedean spiral reaching the radius
struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::Ring8;
    double radius = 2.0;
    double mode_std = 0.05;
    std::uint64_t seed = 0;
};

// Mode centers, [K, 2].
Tensor synthetic_centers(const SyntheticSpec& spec);

// n samples, each a uniformly chosen center plus isotropic Gaussian noise.
Tensor sample_real(const SyntheticSpec& spec, std::size_t n, RngStream& rng);

// n x dim i.i.d. standard normal latent batch.
Tensor sample_latent(std::size_t n, std::size_t dim, RngStream& rng);

}  // namespace ganlab
