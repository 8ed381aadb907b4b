#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ganlab/checkpoint.hpp"
#include "ganlab/config.hpp"
#include "ganlab/data.hpp"
#include "ganlab/error.hpp"
#include "ganlab/harness.hpp"
#include "ganlab/idx.hpp"
#include "ganlab/nn.hpp"
#include "ganlab/rng.hpp"
#include "ganlab/tape.hpp"
#include "ganlab/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;
constexpr int kExitVerifyFail = 5;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config JSON")->required();
    cmd->add_option("--set", args.overrides, "override a config key, key=value (repeatable)");
    cmd->add_option("--out", args.out_dir, "output directory (overrides out_dir)");
    cmd->add_option("--seed", args.seed, "seed (overrides seed)");
}

// Resolution order: config file, then --set pairs, then --seed/--out sugar.
// A relative out_dir lands under $GANLAB_OUT_ROOT when that is set.
ganlab::ExperimentConfig load_config(const CommonArgs& args) {
    std::vector<std::string> overrides = args.overrides;
    if (args.seed >= 0) overrides.push_back("seed=" + std::to_string(args.seed));
    if (!args.out_dir.empty()) overrides.push_back("out_dir=" + args.out_dir);
    ganlab::ExperimentConfig cfg = ganlab::load_experiment_config(args.config_path, overrides);
    const char* root = std::getenv("GANLAB_OUT_ROOT");
    if (root && *root && std::filesystem::path(cfg.out_dir).is_relative())
        cfg.out_dir = (std::filesystem::path(root) / cfg.out_dir).string();
    return cfg;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        std::string item = text.substr(start, comma == std::string::npos ? comma : comma - start);
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ganlab::ConfigError("expected a comma-separated number list, got '" + text +
                                      "'");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

template <typename T>
std::vector<T> parse_uint_list(const std::string& text) {
    std::vector<T> out;
    for (double v : parse_double_list(text)) {
        if (v < 0 || v != std::floor(v))
            throw ganlab::ConfigError("expected non-negative integers, got '" + text + "'");
        out.push_back(static_cast<T>(v));
    }
    return out;
}

void print_file(const std::string& path) {
    auto bytes = ganlab::read_file_bytes(path);
    std::fwrite(bytes.data(), 1, bytes.size(), stdout);
}

int cmd_train(const CommonArgs& args) {
    ganlab::ExperimentConfig cfg = load_config(args);
    ganlab::MetricReport report = ganlab::train(cfg);
    print_file(cfg.out_dir + "/summary.json");
    if (report.diverged) {
        std::fprintf(stderr, "training diverged at step %llu; partial report kept in %s\n",
                     static_cast<unsigned long long>(report.divergence_step),
                     cfg.out_dir.c_str());
        return kExitDivergence;
    }
    return kExitOk;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, std::int64_t samples) {
    ganlab::ExperimentConfig cfg = load_config(args);
    std::size_t n = samples > 0 ? static_cast<std::size_t>(samples) : cfg.eval_samples;
    ganlab::EvalMetrics m = ganlab::evaluate_checkpoint(checkpoint, n, cfg);
    nlohmann::json j{{"checkpoint", checkpoint}, {"samples", n},      {"fid", m.fid},
                     {"is_mean", m.is_mean},     {"is_std", m.is_std}, {"modes", m.modes},
                     {"hq_frac", m.hq_frac}};
    std::printf("%s\n", j.dump(2).c_str());
    return kExitOk;
}

int cmd_sweep_margin(const CommonArgs& args, const std::string& margins,
                     const std::string& seeds) {
    ganlab::ExperimentConfig cfg = load_config(args);
    ganlab::sweep_margin(cfg, parse_double_list(margins),
                         parse_uint_list<std::uint64_t>(seeds));
    print_file(cfg.out_dir + "/margin_sweep.json");
    return kExitOk;
}

int cmd_sweep_samples(const CommonArgs& args, const std::string& checkpoint,
                      const std::string& counts) {
    ganlab::ExperimentConfig cfg = load_config(args);
    auto rows = ganlab::sweep_sample_count(checkpoint, parse_uint_list<std::size_t>(counts), cfg);
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& row : rows) jrows.push_back({{"count", row.count}, {"fid", row.fid}});
    std::printf("%s\n", nlohmann::json{{"rows", jrows}}.dump(2).c_str());
    return kExitOk;
}

int cmd_seed_variance(const CommonArgs& args, const std::string& seeds) {
    ganlab::ExperimentConfig cfg = load_config(args);
    ganlab::run_seed_variance(cfg, parse_uint_list<std::uint64_t>(seeds));
    print_file(cfg.out_dir + "/seed_variance.json");
    return kExitOk;
}

// Samples land as headerless x,y CSV for 2-wide generators and as an IDX
// byte tensor [n, 28, 28] for 784-wide ones; --format forces either.
int cmd_gen(const std::string& checkpoint, std::int64_t n, const std::string& out_path,
            std::uint64_t seed, const std::string& format) {
    if (n <= 0) throw ganlab::ConfigError("sample count must be positive");
    ganlab::Checkpoint c = ganlab::load_checkpoint(checkpoint);
    ganlab::Mlp g = ganlab::rebuild_generator(c);
    std::size_t latent_dim = c.g_spec.sizes.front();
    std::size_t out_dim = c.g_spec.sizes.back();

    ganlab::RngStream rng(seed, ganlab::Substream::Eval);
    ganlab::Tape tape;
    ganlab::Var z = tape.constant(
        ganlab::sample_latent(static_cast<std::size_t>(n), latent_dim, rng));
    ganlab::Tensor samples = g.forward(tape, z, false).value();

    std::string mode = format;
    if (mode == "auto") mode = out_dim == 784 ? "idx" : "csv";
    if (mode == "idx") {
        if (out_dim != 784)
            throw ganlab::ConfigError("idx output needs a 784-wide generator, got " +
                                      std::to_string(out_dim));
        ganlab::IdxTensor images = ganlab::denormalize_images(
            samples, {static_cast<std::uint32_t>(n), 28, 28});
        ganlab::save_idx(images, out_path);
    } else {
        std::string csv;
        char buf[128];
        for (std::size_t i = 0; i < samples.rows(); ++i) {
            for (std::size_t j = 0; j < samples.cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", samples.at(i, j));
                csv += buf;
                csv += j + 1 < samples.cols() ? ',' : '\n';
            }
        }
        ganlab::write_file_bytes(out_path,
                                 std::vector<std::uint8_t>(csv.begin(), csv.end()));
    }
    std::printf("%s\n", out_path.c_str());
    return kExitOk;
}

int cmd_verify(bool inject_rmcos_sign_flip) {
    ganlab::VerifyOptions opts;
    opts.inject_rmcos_sign_flip = inject_rmcos_sign_flip;
    ganlab::VerifyReport report = ganlab::run_verify(opts);
    for (const auto& r : report.results)
        std::printf("%s %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    if (!report.all_pass) {
        std::printf("verify: FAIL (first failure: %s)\n", report.first_failure.c_str());
        return kExitVerifyFail;
    }
    std::printf("verify: all %zu properties passed\n", report.results.size());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale GAN laboratory: margin-cosine and baseline losses on 2D mixtures"};
    app.require_subcommand(1);

    CommonArgs train_args;
    add_common(app.add_subcommand("train", "train a GAN and write report artifacts"),
               train_args);

    CommonArgs eval_args;
    std::string eval_checkpoint;
    std::int64_t eval_samples = 0;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a generator checkpoint");
    add_common(eval_cmd, eval_args);
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("-n,--samples", eval_samples, "sample count (default: eval_samples)");

    CommonArgs margin_args;
    std::string margin_list, margin_seeds;
    CLI::App* margin_cmd =
        app.add_subcommand("sweep-margin", "train one run per (margin, seed) and tabulate");
    add_common(margin_cmd, margin_args);
    margin_cmd->add_option("--margins", margin_list, "comma-separated margins")->required();
    margin_cmd->add_option("--seeds", margin_seeds, "comma-separated seeds")->required();

    CommonArgs samples_args;
    std::string samples_checkpoint, samples_counts;
    CLI::App* samples_cmd =
        app.add_subcommand("sweep-samples", "FID of one checkpoint at several sample counts");
    add_common(samples_cmd, samples_args);
    samples_cmd->add_option("--checkpoint", samples_checkpoint, "checkpoint file")->required();
    samples_cmd->add_option("--counts", samples_counts, "comma-separated sample counts")
        ->required();

    CommonArgs variance_args;
    std::string variance_seeds;
    CLI::App* variance_cmd =
        app.add_subcommand("seed-variance", "train once per seed and tabulate best FID");
    add_common(variance_cmd, variance_args);
    variance_cmd->add_option("--seeds", variance_seeds, "comma-separated seeds")->required();

    std::string gen_checkpoint, gen_out, gen_format = "auto";
    std::int64_t gen_n = 0;
    std::uint64_t gen_seed = 0;
    CLI::App* gen_cmd = app.add_subcommand("gen", "sample a generator checkpoint to a file");
    gen_cmd->add_option("--checkpoint", gen_checkpoint, "checkpoint file")->required();
    gen_cmd->add_option("-n,--samples", gen_n, "number of samples")->required();
    gen_cmd->add_option("--out", gen_out, "output file path")->required();
    gen_cmd->add_option("--seed", gen_seed, "sampling seed");
    gen_cmd->add_option("--format", gen_format, "csv, idx, or auto")
        ->check(CLI::IsMember({"csv", "idx", "auto"}));

    bool inject_rmcos_sign_flip = false;
    CLI::App* verify_cmd = app.add_subcommand("verify", "run the full property suite");
    verify_cmd->add_flag("--inject-rmcos-sign-flip", inject_rmcos_sign_flip)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (app.got_subcommand("train")) return cmd_train(train_args);
        if (app.got_subcommand("eval")) return cmd_eval(eval_args, eval_checkpoint, eval_samples);
        if (app.got_subcommand("sweep-margin"))
            return cmd_sweep_margin(margin_args, margin_list, margin_seeds);
        if (app.got_subcommand("sweep-samples"))
            return cmd_sweep_samples(samples_args, samples_checkpoint, samples_counts);
        if (app.got_subcommand("seed-variance"))
            return cmd_seed_variance(variance_args, variance_seeds);
        if (app.got_subcommand("gen"))
            return cmd_gen(gen_checkpoint, gen_n, gen_out, gen_seed, gen_format);
        if (app.got_subcommand("verify")) return cmd_verify(inject_rmcos_sign_flip);
    } catch (const ganlab::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const ganlab::DivergenceError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitDivergence;
    } catch (const ganlab::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const ganlab::ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return kExitIo;
    } catch (const ganlab::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return kExitUsage;
}
