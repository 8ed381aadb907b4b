#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ganlab/adam.hpp"
#include "ganlab/data.hpp"
#include "ganlab/losses.hpp"

namespace ganlab {

/// One training experiment, fully determined together with its seed. The
/// tuned hyperparameter values (layer sizes, batch size, learning rate, ...)
/// ship in the JSON files under configs/; every key listed in config_keys()
/// that has no default below must be present in the file.
struct ExperimentConfig {
    LossKind loss = LossKind::RMCos;
    SyntheticSpec data;
    double quality_radius = 3.0;
    std::size_t latent_dim = 0;
    std::vector<std::size_t> g_layers;  // latent_dim, hidden..., data dim
    std::vector<std::size_t> d_layers;  // data dim, hidden... (head appended)
    std::size_t batch_size = 0;
    std::uint64_t steps = 0;
    std::size_t d_steps_per_g = 1;
    AdamConfig adam;
    double scale = 10.0;   // margin cosine scale s
    double margin = 0.15;  // margin cosine margin m, read only by RMCos
    std::uint64_t eval_interval = 500;
    std::size_t eval_samples = 2000;
    std::uint64_t seed = 0;
    std::string out_dir;

    bool batchnorm = true;      // generator hidden blocks
    bool spectral_norm = true;  // discriminator dense weights
    double init_std = 0.02;
    double leaky_slope = 0.2;
    std::size_t spectral_warmup = 5;
    std::uint64_t checkpoint_interval = 0;  // 0 = final checkpoint only
    std::size_t real_stats_samples = 10000;
    std::size_t is_splits = 10;
    std::string lr_decay = "none";  // "none" or "linear" (to zero across steps)
    double ema_decay = 0.0;         // generator weight averaging for eval; 0 = off
};

/// Every accepted config key, sorted.
const std::vector<std::string>& config_keys();

/// Strict parse: unknown keys, missing required keys, wrong types, and
/// invariant violations all raise ConfigError naming the offending key.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);

/// Reads a JSON config file, applies "key=value" overrides (values parsed as
/// JSON when possible, as strings otherwise), then parses strictly.
ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides = {});

void apply_override(nlohmann::json& j, const std::string& assignment);

/// Canonical echo holding all keys; parsing it back reproduces the config.
nlohmann::json experiment_config_json(const ExperimentConfig& cfg);

/// FNV-1a over the canonical echo; stable across key order in source files.
std::uint64_t config_hash(const ExperimentConfig& cfg);

void validate_config(const ExperimentConfig& cfg);

}  // namespace ganlab
