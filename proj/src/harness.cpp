#include "ganlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "ganlab/data.hpp"
#include "ganlab/error.hpp"
#include "ganlab/losses.hpp"

namespace ganlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Fresh latent batches drawn per running-statistics re-estimate.
constexpr std::size_t kStatRefreshBatches = 25;

// Averaging horizon ramps in so early evaluations track the live weights;
// without the ramp the average stays biased toward initialization for the
// first 1/(1-decay) steps.
double ema_decay_at(double decay, std::uint64_t t) {
    double ramp = (1.0 + static_cast<double>(t)) / (10.0 + static_cast<double>(t));
    return std::min(decay, ramp);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_margin(double m) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", m);
    return buf;
}

NetworkSpec make_g_spec(const ExperimentConfig& cfg) {
    NetworkSpec s;
    s.sizes = cfg.g_layers;
    s.role = Role::Generator;
    s.batchnorm = cfg.batchnorm;
    s.hidden_act = Activation::Relu;
    s.output_act = Activation::Linear;
    s.init_std = cfg.init_std;
    s.leaky_slope = cfg.leaky_slope;
    return s;
}

NetworkSpec make_d_spec(const ExperimentConfig& cfg) {
    NetworkSpec s;
    s.sizes = cfg.d_layers;
    s.role = Role::Discriminator;
    s.head = loss_uses_cosine_head(cfg.loss) ? HeadVariant::Cosine : HeadVariant::Linear;
    s.spectral_norm = cfg.spectral_norm;
    s.hidden_act = Activation::LeakyRelu;
    s.init_std = cfg.init_std;
    s.leaky_slope = cfg.leaky_slope;
    s.spectral_warmup = cfg.spectral_warmup;
    return s;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("failed writing '" + path + "'");
}

std::size_t generator_input_dim(Mlp& g) {
    if (g.blocks.empty()) throw ShapeError("generator has no layers");
    return g.blocks.front().dense.weight.value.shape()[0];
}

double median_of(std::vector<double> values) {
    if (values.empty()) return kNaN;
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string flag_str(bool v) { return v ? "1" : "0"; }

}  // namespace

bool detect_collapse(const std::vector<EvalRow>& rows) {
    std::size_t streak = 0;
    for (const auto& row : rows) {
        streak = row.modes <= 2 ? streak + 1 : 0;
        if (streak >= 3) return true;
    }
    return false;
}

std::string report_csv(const MetricReport& report) {
    std::string out = kReportHeader;
    out += "\n";
    for (const auto& r : report.rows) {
        out += std::to_string(r.step);
        out += ",";
        out += fmt_double(r.d_loss);
        out += ",";
        out += fmt_double(r.g_loss);
        out += ",";
        out += fmt_double(r.fid);
        out += ",";
        out += fmt_double(r.is_mean);
        out += ",";
        out += fmt_double(r.is_std);
        out += ",";
        out += std::to_string(r.modes);
        out += ",";
        out += fmt_double(r.hq_frac);
        out += ",";
        out += fmt_double(r.wall_ms);
        out += "\n";
    }
    return out;
}

void write_report_csv(const std::string& path, const MetricReport& report) {
    write_text_file(path, report_csv(report));
}

nlohmann::json report_summary(const ExperimentConfig& cfg, const MetricReport& report) {
    nlohmann::json j;
    j["loss"] = loss_kind_name(cfg.loss);
    j["dataset"] = synthetic_kind_name(cfg.data.kind);
    j["seed"] = cfg.seed;
    j["margin"] = cfg.margin;
    j["scale"] = cfg.scale;
    j["steps"] = cfg.steps;
    char hash_buf[19];
    std::snprintf(hash_buf, sizeof(hash_buf), "0x%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    j["config_hash"] = hash_buf;
    j["rows"] = report.rows.size();
    j["diverged"] = report.diverged;
    j["divergence_step"] = report.divergence_step;
    j["collapsed"] = report.collapsed;
    if (report.rows.empty()) {
        j["final"] = nullptr;
        j["best_fid"] = nullptr;
        j["best_fid_step"] = nullptr;
        return j;
    }
    const EvalRow& last = report.rows.back();
    j["final"] = {{"step", last.step},       {"d_loss", last.d_loss}, {"g_loss", last.g_loss},
                  {"fid", last.fid},         {"is_mean", last.is_mean}, {"is_std", last.is_std},
                  {"modes", last.modes},     {"hq_frac", last.hq_frac}};
    const EvalRow* best = &report.rows.front();
    for (const auto& r : report.rows)
        if (r.fid < best->fid) best = &r;
    j["best_fid"] = best->fid;
    j["best_fid_step"] = best->step;
    return j;
}

Trainer::Trainer(const ExperimentConfig& cfg)
    : cfg_((validate_config(cfg), cfg)),
      g_spec_(make_g_spec(cfg)),
      d_spec_(make_d_spec(cfg)),
      g_(Mlp{}),
      d_(Mlp{}),
      eval_g_(Mlp{}),
      adam_g_(cfg.adam, {}),
      adam_d_(cfg.adam, {}),
      data_rng_(cfg.seed, Substream::Data),
      latent_rng_(cfg.seed, Substream::Latent) {
    RngStream init(cfg_.seed, Substream::Init);
    g_ = build_network(g_spec_, init);
    d_ = build_network(d_spec_, init);
    eval_g_ = build_network(g_spec_, init);
    adam_g_ = AdamState(cfg_.adam, g_.parameters());
    adam_d_ = AdamState(cfg_.adam, d_.parameters());
    for (Parameter* p : g_.parameters()) ema_params_.push_back(p->value);
    real_stats_ = real_reference_stats(cfg_);
    modes_ = dataset_mode_spec(cfg_);
}

double Trainer::lr_scale() const {
    if (cfg_.lr_decay == "linear")
        return 1.0 - static_cast<double>(step_) / static_cast<double>(cfg_.steps);
    return 1.0;
}

double Trainer::discriminator_update() {
    d_.refresh_spectral();
    Tensor real = sample_real(cfg_.data, cfg_.batch_size, data_rng_);
    Tensor z = sample_latent(cfg_.batch_size, cfg_.latent_dim, latent_rng_);

    Tape t;
    Var fake = g_.forward(t, t.constant(z), true);
    Var c_real = d_.forward(t, t.constant(real), true);
    Var c_fake = d_.forward(t, fake, true);
    if (!c_real.value().all_finite() || !c_fake.value().all_finite())
        throw DivergenceError(static_cast<std::int64_t>(step_) + 1,
                              "non-finite discriminator output");
    Var loss = discriminator_loss(cfg_.loss, {c_real, c_fake}, {cfg_.scale, cfg_.margin});
    double value = loss.value().item();
    if (!std::isfinite(value))
        throw DivergenceError(static_cast<std::int64_t>(step_) + 1,
                              "non-finite discriminator loss");
    Gradients grads = t.backward(loss);
    adam_d_.step(d_.parameters(), grads, lr_scale());
    return value;
}

double Trainer::generator_update() {
    Tensor real = sample_real(cfg_.data, cfg_.batch_size, data_rng_);
    Tensor z = sample_latent(cfg_.batch_size, cfg_.latent_dim, latent_rng_);

    Tape t;
    Var fake = g_.forward(t, t.constant(z), true);
    Var c_real = d_.forward(t, t.constant(real), true);
    Var c_fake = d_.forward(t, fake, true);
    if (!c_real.value().all_finite() || !c_fake.value().all_finite())
        throw DivergenceError(static_cast<std::int64_t>(step_) + 1,
                              "non-finite discriminator output");
    Var loss = generator_loss(cfg_.loss, {c_real, c_fake}, {cfg_.scale, cfg_.margin});
    double value = loss.value().item();
    if (!std::isfinite(value))
        throw DivergenceError(static_cast<std::int64_t>(step_) + 1, "non-finite generator loss");
    Gradients grads = t.backward(loss);
    adam_g_.step(g_.parameters(), grads, lr_scale());
    if (cfg_.ema_decay > 0.0) {
        const double d = ema_decay_at(cfg_.ema_decay, step_);
        auto params = g_.parameters();
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& e = ema_params_[i];
            const Tensor& w = params[i]->value;
            for (std::size_t j = 0; j < e.numel(); ++j) e[j] = d * e[j] + (1.0 - d) * w[j];
        }
    }
    return value;
}

void Trainer::train_step() {
    for (std::size_t k = 0; k < cfg_.d_steps_per_g; ++k) last_d_loss_ = discriminator_update();
    last_g_loss_ = generator_update();
    ++step_;
}

void Trainer::sync_sampling_net() {
    auto dst = eval_g_.parameters();
    if (cfg_.ema_decay > 0.0) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = ema_params_[i];
    } else {
        auto src = g_.parameters();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
    }
    if (!g_spec_.batchnorm) return;
    // Re-estimation is a pure function of (seed, weights): the stream always
    // restarts at counter zero, so repeated syncs of frozen weights agree.
    RngStream rng(cfg_.seed, Substream::StatRefresh);
    for (auto& b : eval_g_.blocks)
        if (b.batchnorm) b.batchnorm->begin_stat_refresh();
    for (std::size_t k = 0; k < kStatRefreshBatches; ++k) {
        Tape t;
        Tensor z = sample_latent(cfg_.batch_size, cfg_.latent_dim, rng);
        eval_g_.forward(t, t.constant(z), true);
    }
    for (auto& b : eval_g_.blocks)
        if (b.batchnorm) b.batchnorm->end_stat_refresh();
}

EvalMetrics Trainer::evaluate_now(std::size_t n_samples) {
    sync_sampling_net();
    return evaluate_generator(eval_g_, n_samples, real_stats_, modes_, cfg_.seed,
                              cfg_.is_splits);
}

Checkpoint Trainer::snapshot() {
    sync_sampling_net();
    return make_checkpoint(g_spec_, g_, d_spec_, d_, adam_g_, adam_d_, step_, config_hash(cfg_),
                           data_rng_.counter(), latent_rng_.counter(), &eval_g_);
}

void Trainer::restore(const Checkpoint& c) {
    if (c.config_hash != config_hash(cfg_))
        throw ConfigError("checkpoint was produced under a different config");
    restore_networks(c, g_, d_);
    restore_adam(c, adam_g_, adam_d_);
    restore_sampling(c, eval_g_);
    auto params = eval_g_.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) ema_params_[i] = params[i]->value;
    step_ = c.step;
    data_rng_ = RngStream(cfg_.seed, Substream::Data, c.data_counter);
    latent_rng_ = RngStream(cfg_.seed, Substream::Latent, c.latent_counter);
}

MetricReport Trainer::run() {
    ensure_dir(cfg_.out_dir);
    MetricReport report;
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed_ms = [&t0] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    };

    while (step_ < cfg_.steps) {
        try {
            train_step();
        } catch (const DivergenceError&) {
            report.diverged = true;
            report.divergence_step = step_ + 1;
            break;
        }
        if (step_ % cfg_.eval_interval == 0 || step_ == cfg_.steps) {
            EvalMetrics m = evaluate_now(cfg_.eval_samples);
            report.rows.push_back({step_, last_d_loss_, last_g_loss_, m.fid, m.is_mean, m.is_std,
                                   m.modes, m.hq_frac, elapsed_ms()});
        }
        if (cfg_.checkpoint_interval > 0 && step_ % cfg_.checkpoint_interval == 0)
            save_checkpoint(snapshot(),
                            cfg_.out_dir + "/checkpoint_" + std::to_string(step_) + ".bin");
    }

    report.collapsed = detect_collapse(report.rows);
    write_report_csv(cfg_.out_dir + "/report.csv", report);
    write_text_file(cfg_.out_dir + "/summary.json", report_summary(cfg_, report).dump(2) + "\n");
    save_checkpoint(snapshot(), cfg_.out_dir + "/checkpoint_final.bin");
    return report;
}

MetricReport train(const ExperimentConfig& cfg) { return Trainer(cfg).run(); }

EvalMetrics evaluate_generator(Mlp& g, std::size_t n_samples, const GaussianStats& real_stats,
                               const ModeSpec& modes, std::uint64_t seed,
                               std::size_t is_splits) {
    if (n_samples < 2)
        throw DomainError("evaluation needs at least 2 samples, got " +
                          std::to_string(n_samples));
    RngStream eval_rng(seed, Substream::Eval);
    Tensor z = sample_latent(n_samples, generator_input_dim(g), eval_rng);
    Tape t;
    Tensor samples = g.forward(t, t.constant(z), false).value();
    EvalMetrics out;
    if (!samples.all_finite()) {
        out.fid = std::numeric_limits<double>::infinity();
        out.is_mean = 1.0;
        return out;
    }
    out.fid = frechet_distance(real_stats, fit_gaussian(samples));
    InceptionScore is = inception_score(mode_classifier_probs(samples, modes), is_splits);
    out.is_mean = is.mean;
    out.is_std = is.stddev;
    ModeCoverage cov = mode_coverage(samples, modes);
    out.modes = cov.modes_covered;
    out.hq_frac = cov.high_quality_fraction;
    return out;
}

EvalMetrics evaluate_checkpoint(const std::string& checkpoint_path, std::size_t n_samples,
                                const ExperimentConfig& cfg) {
    Checkpoint c = load_checkpoint(checkpoint_path);
    if (c.g_spec.sizes.back() != 2)
        throw ShapeError("checkpoint generator emits " + std::to_string(c.g_spec.sizes.back()) +
                         "-dimensional samples, the dataset is 2-dimensional");
    Mlp g = rebuild_generator(c);
    GaussianStats real = real_reference_stats(cfg);
    ModeSpec modes = dataset_mode_spec(cfg);
    return evaluate_generator(g, n_samples, real, modes, cfg.seed, cfg.is_splits);
}

GaussianStats real_reference_stats(const ExperimentConfig& cfg) {
    RngStream rng(cfg.seed, Substream::RealStats);
    return fit_gaussian(sample_real(cfg.data, cfg.real_stats_samples, rng));
}

ModeSpec dataset_mode_spec(const ExperimentConfig& cfg) {
    return ModeSpec{synthetic_centers(cfg.data), cfg.data.mode_std, cfg.quality_radius};
}

MarginSweepResult sweep_margin(const ExperimentConfig& base, const std::vector<double>& margins,
                               const std::vector<std::uint64_t>& seeds) {
    if (margins.empty()) throw ConfigError("margin sweep needs at least one margin");
    for (double m : margins)
        if (!(m >= -1.0 && m <= 1.0))
            throw ConfigError("margin sweep values must lie in [-1, 1], got " + fmt_margin(m));
    if (base.loss != LossKind::RMCos)
        throw ConfigError("margin sweep requires the RMCos loss, got " +
                          loss_kind_name(base.loss));
    if (seeds.empty()) throw ConfigError("margin sweep needs at least one seed");

    ensure_dir(base.out_dir);
    MarginSweepResult result;
    for (double m : margins) {
        MarginSweepRow row;
        row.margin = m;
        std::vector<double> fids;
        std::vector<double> is_means;
        for (std::uint64_t s : seeds) {
            ExperimentConfig cfg = base;
            cfg.margin = m;
            cfg.seed = s;
            cfg.data.seed = s;
            cfg.out_dir = base.out_dir + "/m" + fmt_margin(m) + "_s" + std::to_string(s);
            MetricReport report = train(cfg);
            MarginRunEntry entry;
            entry.seed = s;
            entry.diverged = report.diverged;
            entry.collapsed = report.collapsed;
            entry.final_fid = report.rows.empty() ? kNaN : report.rows.back().fid;
            entry.final_is = report.rows.empty() ? kNaN : report.rows.back().is_mean;
            if (!entry.diverged && std::isfinite(entry.final_fid)) {
                fids.push_back(entry.final_fid);
                is_means.push_back(entry.final_is);
            }
            row.runs.push_back(entry);
        }
        row.median_fid = median_of(fids);
        row.median_is = median_of(is_means);
        result.rows.push_back(std::move(row));
    }

    std::string csv = "margin,seed,final_fid,final_is,collapsed,diverged\n";
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& row : result.rows) {
        nlohmann::json jruns = nlohmann::json::array();
        for (const auto& e : row.runs) {
            csv += fmt_margin(row.margin);
            csv += ",";
            csv += std::to_string(e.seed);
            csv += ",";
            csv += fmt_double(e.final_fid);
            csv += ",";
            csv += fmt_double(e.final_is);
            csv += ",";
            csv += flag_str(e.collapsed);
            csv += ",";
            csv += flag_str(e.diverged);
            csv += "\n";
            jruns.push_back({{"seed", e.seed},
                             {"final_fid", e.final_fid},
                             {"final_is", e.final_is},
                             {"collapsed", e.collapsed},
                             {"diverged", e.diverged}});
        }
        jrows.push_back({{"margin", row.margin},
                         {"median_fid", row.median_fid},
                         {"median_is", row.median_is},
                         {"runs", jruns}});
    }
    write_text_file(base.out_dir + "/margin_sweep.csv", csv);
    write_text_file(base.out_dir + "/margin_sweep.json",
                    nlohmann::json{{"rows", jrows}}.dump(2) + "\n");
    return result;
}

std::vector<SampleSweepRow> sweep_sample_count(Mlp& g, const GaussianStats& real_stats,
                                               const std::vector<std::size_t>& counts,
                                               std::uint64_t seed) {
    if (counts.empty()) throw ConfigError("sample-count sweep needs at least one count");
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 2)
            throw ConfigError("sample counts must be at least 2, got " +
                              std::to_string(counts[i]));
        if (i > 0 && counts[i] < counts[i - 1])
            throw ConfigError("sample counts must be non-decreasing");
    }
    std::vector<SampleSweepRow> rows;
    for (std::size_t n : counts) {
        RngStream eval_rng(seed, Substream::Eval);
        Tensor z = sample_latent(n, generator_input_dim(g), eval_rng);
        Tape t;
        Tensor samples = g.forward(t, t.constant(z), false).value();
        double fid = samples.all_finite()
                         ? frechet_distance(real_stats, fit_gaussian(samples))
                         : std::numeric_limits<double>::infinity();
        rows.push_back({n, fid});
    }
    return rows;
}

std::vector<SampleSweepRow> sweep_sample_count(const std::string& checkpoint_path,
                                               const std::vector<std::size_t>& counts,
                                               const ExperimentConfig& cfg) {
    Checkpoint c = load_checkpoint(checkpoint_path);
    if (c.g_spec.sizes.back() != 2)
        throw ShapeError("checkpoint generator emits " + std::to_string(c.g_spec.sizes.back()) +
                         "-dimensional samples, the dataset is 2-dimensional");
    Mlp g = rebuild_generator(c);
    GaussianStats real = real_reference_stats(cfg);
    return sweep_sample_count(g, real, counts, cfg.seed);
}

SeedVarianceResult run_seed_variance(const ExperimentConfig& base,
                                     const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2) throw ConfigError("seed-variance study needs at least 2 seeds");
    ensure_dir(base.out_dir);
    SeedVarianceResult result;
    std::vector<double> best_fids;
    for (std::uint64_t s : seeds) {
        ExperimentConfig cfg = base;
        cfg.seed = s;
        cfg.data.seed = s;
        cfg.out_dir = base.out_dir + "/seed" + std::to_string(s);
        MetricReport report = train(cfg);
        SeedVarianceRow row;
        row.seed = s;
        row.diverged = report.diverged;
        row.collapsed = report.collapsed;
        if (report.rows.empty()) {
            row.best_fid = kNaN;
        } else {
            const EvalRow* best = &report.rows.front();
            for (const auto& r : report.rows)
                if (r.fid < best->fid) best = &r;
            row.best_fid = best->fid;
            row.best_step = best->step;
        }
        if (std::isfinite(row.best_fid)) best_fids.push_back(row.best_fid);
        result.rows.push_back(row);
    }
    if (!best_fids.empty()) {
        result.min_fid = *std::min_element(best_fids.begin(), best_fids.end());
        result.max_fid = *std::max_element(best_fids.begin(), best_fids.end());
        result.median_fid = median_of(best_fids);
        result.spread = result.max_fid - result.min_fid;
    } else {
        result.min_fid = result.max_fid = result.median_fid = result.spread = kNaN;
    }

    std::string csv = "seed,best_fid,best_step,collapsed,diverged\n";
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& row : result.rows) {
        csv += std::to_string(row.seed);
        csv += ",";
        csv += fmt_double(row.best_fid);
        csv += ",";
        csv += std::to_string(row.best_step);
        csv += ",";
        csv += flag_str(row.collapsed);
        csv += ",";
        csv += flag_str(row.diverged);
        csv += "\n";
        jrows.push_back({{"seed", row.seed},
                         {"best_fid", row.best_fid},
                         {"best_step", row.best_step},
                         {"collapsed", row.collapsed},
                         {"diverged", row.diverged}});
    }
    write_text_file(base.out_dir + "/seed_variance.csv", csv);
    nlohmann::json j{{"rows", jrows},
                     {"min_fid", result.min_fid},
                     {"median_fid", result.median_fid},
                     {"max_fid", result.max_fid},
                     {"spread", result.spread}};
    write_text_file(base.out_dir + "/seed_variance.json", j.dump(2) + "\n");
    return result;
}

}  // namespace ganlab
