#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ganlab/checkpoint.hpp"
#include "ganlab/config.hpp"
#include "ganlab/error.hpp"

using namespace ganlab;
using nlohmann::json;

namespace {

json full_config_json() {
    return json{
        {"loss", "rmcos"},
        {"dataset", "ring8"},
        {"latent_dim", 16},
        {"g_layers", {16, 128, 128, 2}},
        {"d_layers", {2, 128, 128}},
        {"batch_size", 64},
        {"steps", 20000},
        {"d_steps_per_g", 1},
        {"lr", 2e-4},
        {"beta1", 0.5},
        {"beta2", 0.999},
        {"epsilon", 1e-8},
        {"scale", 10.0},
        {"margin", 0.15},
        {"eval_interval", 500},
        {"eval_samples", 2000},
        {"seed", 7},
        {"out_dir", "runs/test"},
    };
}

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "ganlab_config_test";
    std::filesystem::create_directories(dir);
    return dir;
}

NetworkSpec small_g_spec() {
    NetworkSpec s;
    s.sizes = {4, 8, 2};
    s.role = Role::Generator;
    s.batchnorm = true;
    return s;
}

NetworkSpec small_d_spec() {
    NetworkSpec s;
    s.sizes = {2, 8, 6};
    s.role = Role::Discriminator;
    s.head = HeadVariant::Cosine;
    s.spectral_norm = true;
    s.hidden_act = Activation::LeakyRelu;
    return s;
}

struct SmallRig {
    Mlp g;
    Mlp d;
    AdamState adam_g;
    AdamState adam_d;

    SmallRig(std::uint64_t seed)
        : g(make_g(seed)), d(make_d(seed)), adam_g({}, g.parameters()), adam_d({}, d.parameters()) {}

    static Mlp make_g(std::uint64_t seed) {
        RngStream rng(seed, Substream::Init);
        return build_network(small_g_spec(), rng);
    }
    static Mlp make_d(std::uint64_t seed) {
        RngStream rng(seed + 1, Substream::Init);
        return build_network(small_d_spec(), rng);
    }
};

Tensor forward_eval(Mlp& net, const Tensor& x) {
    Tape t;
    return net.forward(t, t.constant(x), false).value();
}

}  // namespace

TEST_CASE("full config json parses to the expected fields") {
    ExperimentConfig cfg = parse_experiment_config(full_config_json());
    CHECK(cfg.loss == LossKind::RMCos);
    CHECK(cfg.data.kind == SyntheticKind::Ring8);
    CHECK(cfg.data.radius == 2.0);
    CHECK(cfg.data.mode_std == 0.05);
    CHECK(cfg.data.seed == 7);
    CHECK(cfg.latent_dim == 16);
    CHECK(cfg.g_layers == std::vector<std::size_t>{16, 128, 128, 2});
    CHECK(cfg.d_layers == std::vector<std::size_t>{2, 128, 128});
    CHECK(cfg.batch_size == 64);
    CHECK(cfg.steps == 20000);
    CHECK(cfg.d_steps_per_g == 1);
    CHECK(cfg.adam.lr == 2e-4);
    CHECK(cfg.adam.beta1 == 0.5);
    CHECK(cfg.adam.beta2 == 0.999);
    CHECK(cfg.adam.epsilon == 1e-8);
    CHECK(cfg.scale == 10.0);
    CHECK(cfg.margin == 0.15);
    CHECK(cfg.eval_interval == 500);
    CHECK(cfg.eval_samples == 2000);
    CHECK(cfg.seed == 7);
    CHECK(cfg.out_dir == "runs/test");
    CHECK(cfg.batchnorm);
    CHECK(cfg.spectral_norm);
    CHECK(cfg.init_std == 0.02);
    CHECK(cfg.checkpoint_interval == 0);
    CHECK(cfg.real_stats_samples == 10000);
    CHECK(cfg.is_splits == 10);
    CHECK(cfg.lr_decay == "none");
    CHECK(cfg.ema_decay == 0.0);
}

TEST_CASE("optional keys override their defaults") {
    json j = full_config_json();
    j["radius"] = 1.5;
    j["mode_std"] = 0.1;
    j["quality_radius"] = 2.0;
    j["batchnorm"] = false;
    j["spectral_norm"] = false;
    j["init_std"] = 0.05;
    j["leaky_slope"] = 0.1;
    j["spectral_warmup"] = 9;
    j["checkpoint_interval"] = 100;
    j["real_stats_samples"] = 500;
    j["is_splits"] = 5;
    j["lr_decay"] = "linear";
    j["ema_decay"] = 0.999;
    ExperimentConfig cfg = parse_experiment_config(j);
    CHECK(cfg.data.radius == 1.5);
    CHECK(cfg.data.mode_std == 0.1);
    CHECK(cfg.quality_radius == 2.0);
    CHECK_FALSE(cfg.batchnorm);
    CHECK_FALSE(cfg.spectral_norm);
    CHECK(cfg.init_std == 0.05);
    CHECK(cfg.leaky_slope == 0.1);
    CHECK(cfg.spectral_warmup == 9);
    CHECK(cfg.checkpoint_interval == 100);
    CHECK(cfg.real_stats_samples == 500);
    CHECK(cfg.is_splits == 5);
    CHECK(cfg.lr_decay == "linear");
    CHECK(cfg.ema_decay == 0.999);
}

TEST_CASE("unknown config key is rejected with the full valid-key list") {
    json j = full_config_json();
    j["learning_rate"] = 1e-3;
    try {
        parse_experiment_config(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("unknown config key 'learning_rate'") != std::string::npos);
        for (const auto& key : config_keys())
            CHECK(msg.find(key) != std::string::npos);
    }
}

TEST_CASE("each missing required key is named") {
    const json base = full_config_json();
    for (const auto& item : base.items()) {
        json j = base;
        j.erase(item.key());
        try {
            parse_experiment_config(j);
            FAIL("expected ConfigError for missing ", item.key());
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("'" + item.key() + "'") != std::string::npos);
        }
    }
}

TEST_CASE("type errors name the offending key") {
    json j = full_config_json();
    j["batch_size"] = "many";
    CHECK_THROWS_WITH_AS(parse_experiment_config(j),
                         "config key 'batch_size' must be a non-negative integer", ConfigError);
    j = full_config_json();
    j["lr"] = true;
    CHECK_THROWS_WITH_AS(parse_experiment_config(j), "config key 'lr' must be a number",
                         ConfigError);
    j = full_config_json();
    j["g_layers"] = {16, 0, 2};
    CHECK_THROWS_WITH_AS(parse_experiment_config(j),
                         "config key 'g_layers' must be an array of positive integers",
                         ConfigError);
    j = full_config_json();
    j["steps"] = -5;
    CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
}

TEST_CASE("invariant violations raise ConfigError naming the key") {
    auto expect_reject = [](const char* key, json value) {
        json j = full_config_json();
        j[key] = value;
        try {
            parse_experiment_config(j);
            FAIL("expected ConfigError for ", key, "=", value.dump());
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(key) != std::string::npos);
        }
    };
    expect_reject("batch_size", 1);
    expect_reject("d_steps_per_g", 0);
    expect_reject("lr", 0.0);
    expect_reject("lr", -1.0);
    expect_reject("beta1", 1.0);
    expect_reject("beta2", -0.1);
    expect_reject("epsilon", 0.0);
    expect_reject("scale", 0.0);
    expect_reject("scale", -3.0);
    expect_reject("eval_interval", 0);
    expect_reject("eval_samples", 1);
    expect_reject("out_dir", "");
    expect_reject("g_layers", json::array({16}));
    expect_reject("g_layers", {8, 128, 2});   // must start with latent_dim
    expect_reject("g_layers", {16, 128, 3});  // must end with the data dim
    expect_reject("d_layers", {3, 128});
    expect_reject("radius", 0.0);
    expect_reject("mode_std", -0.01);
    expect_reject("leaky_slope", 1.0);
    expect_reject("is_splits", 0);
    expect_reject("eval_samples", 5);  // below is_splits
    expect_reject("lr_decay", "cosine");
    expect_reject("ema_decay", 1.0);
    expect_reject("ema_decay", -0.1);
}

TEST_CASE("unknown loss kind message lists all eight kinds") {
    json j = full_config_json();
    j["loss"] = "foo";
    try {
        parse_experiment_config(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        for (const char* name :
             {"CE", "R-CE", "Ra-CE", "LS", "Ra-LS", "Hinge", "Ra-Hinge", "RMCos"})
            CHECK(msg.find(name) != std::string::npos);
    }
}

TEST_CASE("margin is accepted but ignored for non-cosine losses") {
    json j = full_config_json();
    j["loss"] = "hinge";
    j["margin"] = 0.9;
    ExperimentConfig cfg = parse_experiment_config(j);
    CHECK(cfg.loss == LossKind::Hinge);
    CHECK(cfg.margin == 0.9);
}

TEST_CASE("config echo round-trips through the parser") {
    json j = full_config_json();
    j["spectral_warmup"] = 11;
    ExperimentConfig cfg = parse_experiment_config(j);
    ExperimentConfig again = parse_experiment_config(experiment_config_json(cfg));
    CHECK(experiment_config_json(cfg) == experiment_config_json(again));
    CHECK(config_hash(cfg) == config_hash(again));
}

TEST_CASE("config hash ignores key order but tracks values") {
    ExperimentConfig a = parse_experiment_config(full_config_json());

    std::string reordered = "{\"out_dir\":\"runs/test\",\"seed\":7,\"loss\":\"rmcos\","
                            "\"dataset\":\"ring8\",\"latent_dim\":16,"
                            "\"g_layers\":[16,128,128,2],\"d_layers\":[2,128,128],"
                            "\"batch_size\":64,\"steps\":20000,\"d_steps_per_g\":1,"
                            "\"lr\":2e-4,\"beta1\":0.5,\"beta2\":0.999,\"epsilon\":1e-8,"
                            "\"scale\":10.0,\"margin\":0.15,\"eval_interval\":500,"
                            "\"eval_samples\":2000}";
    ExperimentConfig b = parse_experiment_config(json::parse(reordered));
    CHECK(config_hash(a) == config_hash(b));

    json j = full_config_json();
    j["margin"] = 0.2;
    ExperimentConfig c = parse_experiment_config(j);
    CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("overrides parse typed values and reject malformed assignments") {
    json j = full_config_json();
    apply_override(j, "margin=0.4");
    apply_override(j, "loss=hinge");
    apply_override(j, "g_layers=[16,64,2]");
    apply_override(j, "batchnorm=false");
    ExperimentConfig cfg = parse_experiment_config(j);
    CHECK(cfg.margin == 0.4);
    CHECK(cfg.loss == LossKind::Hinge);
    CHECK(cfg.g_layers == std::vector<std::size_t>{16, 64, 2});
    CHECK_FALSE(cfg.batchnorm);

    CHECK_THROWS_AS(apply_override(j, "margin"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "=0.4"), ConfigError);

    apply_override(j, "loss=nonsense");
    CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
}

TEST_CASE("config files load with overrides applied before validation") {
    auto dir = temp_dir();
    auto path = (dir / "cfg.json").string();
    {
        std::ofstream out(path);
        out << full_config_json().dump(2) << "\n";
    }
    ExperimentConfig cfg = load_experiment_config(path, {"seed=11", "margin=0.05"});
    CHECK(cfg.seed == 11);
    CHECK(cfg.data.seed == 11);
    CHECK(cfg.margin == 0.05);

    CHECK_THROWS_AS(load_experiment_config((dir / "absent.json").string()), IoError);

    auto bad = (dir / "bad.json").string();
    {
        std::ofstream out(bad);
        out << "{not json";
    }
    CHECK_THROWS_AS(load_experiment_config(bad), ConfigError);
}

TEST_CASE("checkpoint survives a serialize-parse round trip bitwise") {
    SmallRig rig(3);
    Checkpoint c = make_checkpoint(small_g_spec(), rig.g, small_d_spec(), rig.d, rig.adam_g,
                                   rig.adam_d, 42, 0xdeadbeefull, 100, 200);
    auto bytes = serialize_checkpoint(c);
    Checkpoint back = parse_checkpoint(bytes);

    CHECK(back.config_hash == 0xdeadbeefull);
    CHECK(back.step == 42);
    CHECK(back.data_counter == 100);
    CHECK(back.latent_counter == 200);
    CHECK(back.adam_g_steps == 0);
    CHECK(back.g_spec.sizes == small_g_spec().sizes);
    CHECK(back.d_spec.sizes == small_d_spec().sizes);
    CHECK(back.d_spec.head == HeadVariant::Cosine);
    CHECK(back.d_spec.hidden_act == Activation::LeakyRelu);
    CHECK(back.named.size() == c.named.size());
    for (std::size_t i = 0; i < c.named.size(); ++i) {
        CHECK(back.named[i].first == c.named[i].first);
        CHECK(bitwise_equal(back.named[i].second, c.named[i].second));
    }
    CHECK(serialize_checkpoint(back) == bytes);
}

TEST_CASE("restored networks reproduce forward outputs bitwise") {
    SmallRig rig(5);
    RngStream noise(9, Substream::Latent);
    Tensor z = noise.gaussian_tensor({6, 4});
    Tensor x = noise.gaussian_tensor({6, 2});

    // Drift the state away from initialization so the restore is non-trivial.
    {
        Tape t;
        rig.g.forward(t, t.constant(z), true);
    }
    rig.d.blocks[0].dense.refresh_spectral();
    rig.d.blocks[0].dense.weight.value[0] += 0.25;

    Tensor g_out = forward_eval(rig.g, z);
    Tensor d_out = forward_eval(rig.d, x);

    Checkpoint c = make_checkpoint(small_g_spec(), rig.g, small_d_spec(), rig.d, rig.adam_g,
                                   rig.adam_d, 7, 1, 0, 0);
    auto dir = temp_dir();
    auto path = (dir / "ckpt.bin").string();
    save_checkpoint(c, path);
    Checkpoint loaded = load_checkpoint(path);

    SmallRig fresh(77);  // different init seed; restore must overwrite everything
    restore_networks(loaded, fresh.g, fresh.d);
    CHECK(bitwise_equal(forward_eval(fresh.g, z), g_out));
    CHECK(bitwise_equal(forward_eval(fresh.d, x), d_out));

    Mlp g2 = rebuild_generator(loaded);
    Mlp d2 = rebuild_discriminator(loaded);
    CHECK(bitwise_equal(forward_eval(g2, z), g_out));
    CHECK(bitwise_equal(forward_eval(d2, x), d_out));

    // Train-mode forwards agree too: running stats and batch stats both match.
    Tape ta, tb;
    CHECK(bitwise_equal(rig.g.forward(ta, ta.constant(z), true).value(),
                        g2.forward(tb, tb.constant(z), true).value()));
}

TEST_CASE("adam accumulators restore by position") {
    SmallRig rig(13);
    auto params = rig.g.parameters();
    rig.adam_g.first_moments()[0][2] = 0.5;
    rig.adam_g.second_moments()[1][0] = 0.25;
    rig.adam_g.set_steps_taken(17);
    rig.adam_d.set_steps_taken(34);

    Checkpoint c = make_checkpoint(small_g_spec(), rig.g, small_d_spec(), rig.d, rig.adam_g,
                                   rig.adam_d, 17, 2, 0, 0);
    SmallRig fresh(14);
    restore_networks(c, fresh.g, fresh.d);
    restore_adam(c, fresh.adam_g, fresh.adam_d);
    CHECK(fresh.adam_g.steps_taken() == 17);
    CHECK(fresh.adam_d.steps_taken() == 34);
    CHECK(fresh.adam_g.first_moments()[0][2] == 0.5);
    CHECK(fresh.adam_g.second_moments()[1][0] == 0.25);
}

TEST_CASE("checkpoint parser rejects malformed input") {
    SmallRig rig(1);
    Checkpoint c = make_checkpoint(small_g_spec(), rig.g, small_d_spec(), rig.d, rig.adam_g,
                                   rig.adam_d, 0, 0, 0, 0);
    auto bytes = serialize_checkpoint(c);

    auto corrupt = bytes;
    corrupt[0] = 'X';
    CHECK_THROWS_WITH_AS(parse_checkpoint(corrupt), "checkpoint has bad magic at offset 0",
                         ParseError);

    corrupt = bytes;
    corrupt[4] = 99;
    CHECK_THROWS_WITH_AS(parse_checkpoint(corrupt), "checkpoint has unsupported version 99",
                         ParseError);

    auto truncated = bytes;
    truncated.resize(bytes.size() / 2);
    CHECK_THROWS_AS(parse_checkpoint(truncated), ParseError);

    auto trailing = bytes;
    trailing.push_back(0);
    try {
        parse_checkpoint(trailing);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("trailing bytes") != std::string::npos);
    }

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), IoError);
}

TEST_CASE("restore rejects architecture mismatches") {
    SmallRig rig(2);
    Checkpoint c = make_checkpoint(small_g_spec(), rig.g, small_d_spec(), rig.d, rig.adam_g,
                                   rig.adam_d, 0, 0, 0, 0);

    NetworkSpec wide = small_g_spec();
    wide.sizes = {4, 12, 2};
    RngStream rng(0, Substream::Init);
    Mlp g_wide = build_network(wide, rng);
    Mlp d_ok = SmallRig::make_d(2);
    CHECK_THROWS_AS(restore_networks(c, g_wide, d_ok), ShapeError);

    Checkpoint missing = c;
    missing.named.erase(missing.named.begin());
    Mlp g_ok = SmallRig::make_g(2);
    CHECK_THROWS_AS(restore_networks(missing, g_ok, d_ok), ParseError);
}
