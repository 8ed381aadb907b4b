#include "ganlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ganlab/error.hpp"

namespace ganlab {

namespace {

const std::vector<std::string> kRequiredKeys = {
    "batch_size", "beta1",         "beta2",  "d_layers", "d_steps_per_g", "dataset",
    "epsilon",    "eval_interval", "eval_samples", "g_layers", "latent_dim", "loss",
    "lr",         "margin",        "out_dir", "scale",   "seed",          "steps",
};

const std::vector<std::string> kOptionalKeys = {
    "batchnorm",      "checkpoint_interval", "ema_decay", "init_std",
    "is_splits",      "leaky_slope",         "lr_decay",  "mode_std",
    "quality_radius", "radius",              "real_stats_samples",
    "spectral_norm",  "spectral_warmup",
};

std::string joined_keys() {
    std::string out;
    for (const auto& k : config_keys()) {
        if (!out.empty()) out += ", ";
        out += k;
    }
    return out;
}

[[noreturn]] void bad_type(const std::string& key, const std::string& expected) {
    throw ConfigError("config key '" + key + "' must be " + expected);
}

double get_number(const nlohmann::json& j, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_number()) bad_type(key, "a number");
    return v.get<double>();
}

std::uint64_t get_count(const nlohmann::json& j, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_number_integer()) bad_type(key, "a non-negative integer");
    if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)
        bad_type(key, "a non-negative integer");
    return v.get<std::uint64_t>();
}

bool get_bool(const nlohmann::json& j, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_boolean()) bad_type(key, "a boolean");
    return v.get<bool>();
}

std::string get_string(const nlohmann::json& j, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_string()) bad_type(key, "a string");
    return v.get<std::string>();
}

std::vector<std::size_t> get_size_list(const nlohmann::json& j, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_array()) bad_type(key, "an array of positive integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
        if (!e.is_number_integer()) bad_type(key, "an array of positive integers");
        if (!e.is_number_unsigned() && e.get<std::int64_t>() <= 0)
            bad_type(key, "an array of positive integers");
        if (e.get<std::uint64_t>() == 0) bad_type(key, "an array of positive integers");
        out.push_back(e.get<std::size_t>());
    }
    return out;
}

void require_positive(double v, const std::string& key) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw ConfigError("config key '" + key + "' must be positive and finite");
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> all = [] {
        std::vector<std::string> keys = kRequiredKeys;
        keys.insert(keys.end(), kOptionalKeys.begin(), kOptionalKeys.end());
        std::sort(keys.begin(), keys.end());
        return keys;
    }();
    return all;
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    const auto& keys = config_keys();
    for (const auto& item : j.items()) {
        if (!std::binary_search(keys.begin(), keys.end(), item.key()))
            throw ConfigError("unknown config key '" + item.key() +
                              "'; valid keys: " + joined_keys());
    }
    for (const auto& k : kRequiredKeys) {
        if (!j.contains(k)) throw ConfigError("missing required config key '" + k + "'");
    }

    ExperimentConfig cfg;
    cfg.loss = parse_loss_kind(get_string(j, "loss"));
    cfg.data.kind = parse_synthetic_kind(get_string(j, "dataset"));
    cfg.latent_dim = get_count(j, "latent_dim");
    cfg.g_layers = get_size_list(j, "g_layers");
    cfg.d_layers = get_size_list(j, "d_layers");
    cfg.batch_size = get_count(j, "batch_size");
    cfg.steps = get_count(j, "steps");
    cfg.d_steps_per_g = get_count(j, "d_steps_per_g");
    cfg.adam.lr = get_number(j, "lr");
    cfg.adam.beta1 = get_number(j, "beta1");
    cfg.adam.beta2 = get_number(j, "beta2");
    cfg.adam.epsilon = get_number(j, "epsilon");
    cfg.scale = get_number(j, "scale");
    cfg.margin = get_number(j, "margin");
    cfg.eval_interval = get_count(j, "eval_interval");
    cfg.eval_samples = get_count(j, "eval_samples");
    cfg.seed = get_count(j, "seed");
    cfg.out_dir = get_string(j, "out_dir");

    if (j.contains("radius")) cfg.data.radius = get_number(j, "radius");
    if (j.contains("mode_std")) cfg.data.mode_std = get_number(j, "mode_std");
    if (j.contains("quality_radius")) cfg.quality_radius = get_number(j, "quality_radius");
    if (j.contains("batchnorm")) cfg.batchnorm = get_bool(j, "batchnorm");
    if (j.contains("spectral_norm")) cfg.spectral_norm = get_bool(j, "spectral_norm");
    if (j.contains("init_std")) cfg.init_std = get_number(j, "init_std");
    if (j.contains("leaky_slope")) cfg.leaky_slope = get_number(j, "leaky_slope");
    if (j.contains("spectral_warmup")) cfg.spectral_warmup = get_count(j, "spectral_warmup");
    if (j.contains("checkpoint_interval"))
        cfg.checkpoint_interval = get_count(j, "checkpoint_interval");
    if (j.contains("real_stats_samples"))
        cfg.real_stats_samples = get_count(j, "real_stats_samples");
    if (j.contains("is_splits")) cfg.is_splits = get_count(j, "is_splits");
    if (j.contains("lr_decay")) cfg.lr_decay = get_string(j, "lr_decay");
    if (j.contains("ema_decay")) cfg.ema_decay = get_number(j, "ema_decay");

    cfg.data.seed = cfg.seed;
    validate_config(cfg);
    return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.latent_dim == 0) throw ConfigError("config key 'latent_dim' must be positive");
    if (cfg.batch_size < 2)
        throw ConfigError("config key 'batch_size' must be at least 2, got " +
                          std::to_string(cfg.batch_size));
    if (cfg.d_steps_per_g == 0)
        throw ConfigError("config key 'd_steps_per_g' must be positive");
    require_positive(cfg.adam.lr, "lr");
    if (!(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0))
        throw ConfigError("config key 'beta1' must lie in [0, 1)");
    if (!(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0))
        throw ConfigError("config key 'beta2' must lie in [0, 1)");
    require_positive(cfg.adam.epsilon, "epsilon");
    require_positive(cfg.scale, "scale");
    if (!std::isfinite(cfg.margin)) throw ConfigError("config key 'margin' must be finite");
    if (cfg.eval_interval == 0) throw ConfigError("config key 'eval_interval' must be positive");
    if (cfg.eval_samples < 2)
        throw ConfigError("config key 'eval_samples' must be at least 2");
    if (cfg.out_dir.empty()) throw ConfigError("config key 'out_dir' must be non-empty");
    if (cfg.g_layers.size() < 2)
        throw ConfigError("config key 'g_layers' needs an input and an output size");
    if (cfg.d_layers.size() < 2)
        throw ConfigError("config key 'd_layers' needs an input and a feature size");
    if (cfg.g_layers.front() != cfg.latent_dim)
        throw ConfigError("config key 'g_layers' must start with latent_dim (" +
                          std::to_string(cfg.latent_dim) + "), got " +
                          std::to_string(cfg.g_layers.front()));
    if (cfg.g_layers.back() != 2)
        throw ConfigError("config key 'g_layers' must end with the data dimension 2");
    if (cfg.d_layers.front() != 2)
        throw ConfigError("config key 'd_layers' must start with the data dimension 2");
    require_positive(cfg.data.radius, "radius");
    if (cfg.data.mode_std < 0.0 || !std::isfinite(cfg.data.mode_std))
        throw ConfigError("config key 'mode_std' must be non-negative and finite");
    require_positive(cfg.quality_radius, "quality_radius");
    require_positive(cfg.init_std, "init_std");
    if (!(cfg.leaky_slope >= 0.0 && cfg.leaky_slope < 1.0))
        throw ConfigError("config key 'leaky_slope' must lie in [0, 1)");
    if (cfg.real_stats_samples < 2)
        throw ConfigError("config key 'real_stats_samples' must be at least 2");
    if (cfg.is_splits == 0) throw ConfigError("config key 'is_splits' must be positive");
    if (cfg.lr_decay != "none" && cfg.lr_decay != "linear")
        throw ConfigError("config key 'lr_decay' must be \"none\" or \"linear\"");
    if (!(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0))
        throw ConfigError("config key 'ema_decay' must lie in [0, 1)");
    if (cfg.eval_samples < cfg.is_splits)
        throw ConfigError("config key 'eval_samples' must be at least is_splits");
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + assignment + "' must have the form key=value");
    std::string key = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);
    nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;
    j[key] = parsed;
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j = nlohmann::json::parse(buf.str(), nullptr, false);
    if (j.is_discarded())
        throw ConfigError("config file '" + path + "' is not valid JSON");
    for (const auto& o : overrides) apply_override(j, o);
    return parse_experiment_config(j);
}

nlohmann::json experiment_config_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["loss"] = loss_kind_name(cfg.loss);
    j["dataset"] = synthetic_kind_name(cfg.data.kind);
    j["radius"] = cfg.data.radius;
    j["mode_std"] = cfg.data.mode_std;
    j["quality_radius"] = cfg.quality_radius;
    j["latent_dim"] = cfg.latent_dim;
    j["g_layers"] = cfg.g_layers;
    j["d_layers"] = cfg.d_layers;
    j["batch_size"] = cfg.batch_size;
    j["steps"] = cfg.steps;
    j["d_steps_per_g"] = cfg.d_steps_per_g;
    j["lr"] = cfg.adam.lr;
    j["beta1"] = cfg.adam.beta1;
    j["beta2"] = cfg.adam.beta2;
    j["epsilon"] = cfg.adam.epsilon;
    j["scale"] = cfg.scale;
    j["margin"] = cfg.margin;
    j["eval_interval"] = cfg.eval_interval;
    j["eval_samples"] = cfg.eval_samples;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["batchnorm"] = cfg.batchnorm;
    j["spectral_norm"] = cfg.spectral_norm;
    j["init_std"] = cfg.init_std;
    j["leaky_slope"] = cfg.leaky_slope;
    j["spectral_warmup"] = cfg.spectral_warmup;
    j["checkpoint_interval"] = cfg.checkpoint_interval;
    j["real_stats_samples"] = cfg.real_stats_samples;
    j["is_splits"] = cfg.is_splits;
    j["lr_decay"] = cfg.lr_decay;
    j["ema_decay"] = cfg.ema_decay;
    return j;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    std::string dump = experiment_config_json(cfg).dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace ganlab
