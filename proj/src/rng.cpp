#include "ganlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace ganlab {

namespace {

// splitmix64 finalizer; full-period bijection on 64-bit words.
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t RngStream::next_u64() {
    std::uint64_t word = mix64(mix64(mix64(seed_) ^ substream_) ^ counter_);
    ++counter_;
    return word;
}

double RngStream::next_double() {
    // 53 high bits -> [0, 1) on the dyadic grid.
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
    // Bounded draw via the 53-bit uniform; bias is negligible for the
    // small bounds used here (mode counts, dataset sizes).
    return static_cast<std::uint64_t>(next_double() * static_cast<double>(bound)) % bound;
}

double RngStream::next_gaussian() {
    // Box-Muller, one output per pair of uniforms. u1 shifted into (0, 1]
    // so the log is always defined.
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor RngStream::gaussian_tensor(Shape shape, double stddev) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = stddev * next_gaussian();
    return t;
}

}  // namespace ganlab
