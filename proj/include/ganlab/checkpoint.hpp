#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ganlab/adam.hpp"
#include "ganlab/nn.hpp"

namespace ganlab {

/// Frozen training state: both network architectures, every parameter,
/// batch-norm running statistics, spectral-norm direction estimates, Adam
/// accumulators, and the RNG counters of the training streams. Reloading and
/// rebuilding reproduces forward outputs bitwise and lets a resumed run
/// follow the exact trajectory of an uninterrupted one.
///
/// Alongside the live generator, a "sample."-prefixed section stores the
/// sampling generator: the averaged weights and re-estimated running
/// statistics that evaluation and generation draw from. When no separate
/// sampling network is supplied it duplicates the live generator.
struct Checkpoint {
    std::uint64_t config_hash = 0;
    std::uint64_t step = 0;
    std::uint64_t data_counter = 0;
    std::uint64_t latent_counter = 0;
    std::int64_t adam_g_steps = 0;
    std::int64_t adam_d_steps = 0;
    NetworkSpec g_spec;
    NetworkSpec d_spec;
    std::vector<std::pair<std::string, Tensor>> named;

    bool has(const std::string& name) const;
    const Tensor& tensor(const std::string& name) const;
};

Checkpoint make_checkpoint(const NetworkSpec& g_spec, Mlp& g, const NetworkSpec& d_spec,
                           Mlp& d, const AdamState& adam_g, const AdamState& adam_d,
                           std::uint64_t step, std::uint64_t config_hash,
                           std::uint64_t data_counter, std::uint64_t latent_counter,
                           Mlp* sampling_g = nullptr);

/// Writes saved tensors back into freshly built networks; shapes must match.
void restore_networks(const Checkpoint& c, Mlp& g, Mlp& d);
void restore_adam(const Checkpoint& c, AdamState& adam_g, AdamState& adam_d);
/// Writes the "sample." section into a generator-shaped network.
void restore_sampling(const Checkpoint& c, Mlp& g);

/// Rebuilds the sampling generator from the stored spec alone.
Mlp rebuild_generator(const Checkpoint& c);
/// Rebuilds the discriminator from the stored spec alone and restores it.
Mlp rebuild_discriminator(const Checkpoint& c);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ganlab
