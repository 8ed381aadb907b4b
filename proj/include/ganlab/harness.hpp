#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ganlab/checkpoint.hpp"
#include "ganlab/config.hpp"
#include "ganlab/metrics.hpp"
#include "ganlab/nn.hpp"

namespace ganlab {

/// One evaluation snapshot. wall_ms is elapsed real time since the run
/// started and is the only column exempt from determinism guarantees.
struct EvalRow {
    std::uint64_t step = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double fid = 0.0;
    double is_mean = 0.0;
    double is_std = 0.0;
    std::size_t modes = 0;
    double hq_frac = 0.0;
    double wall_ms = 0.0;
};

struct MetricReport {
    std::vector<EvalRow> rows;
    bool diverged = false;
    std::uint64_t divergence_step = 0;
    bool collapsed = false;
};

/// Mode collapse flag: at most 2 modes covered for 3 consecutive evals.
bool detect_collapse(const std::vector<EvalRow>& rows);

inline constexpr char kReportHeader[] =
    "step,d_loss,g_loss,fid,is_mean,is_std,modes,hq_frac,wall_ms";

std::string report_csv(const MetricReport& report);
void write_report_csv(const std::string& path, const MetricReport& report);
nlohmann::json report_summary(const ExperimentConfig& cfg, const MetricReport& report);

struct EvalMetrics {
    double fid = 0.0;
    double is_mean = 0.0;
    double is_std = 0.0;
    std::size_t modes = 0;
    double hq_frac = 0.0;
};

/// Alternating-update GAN trainer. All randomness flows through counter-based
/// substreams of cfg.seed, so a (config, seed) pair fixes the whole
/// trajectory; evaluation draws from its own substream and never advances the
/// training streams.
class Trainer {
  public:
    explicit Trainer(const ExperimentConfig& cfg);

    /// Runs the full schedule and writes report.csv, summary.json, and
    /// checkpoints under cfg.out_dir. A non-finite loss or a divergent
    /// optimizer step stops training and flags the report instead of
    /// throwing.
    MetricReport run();

    /// One generator update preceded by cfg.d_steps_per_g discriminator
    /// updates. Throws DivergenceError on non-finite gradients.
    void train_step();

    EvalMetrics evaluate_now(std::size_t n_samples);

    Checkpoint snapshot();
    void restore(const Checkpoint& c);

    std::uint64_t step() const { return step_; }
    double last_d_loss() const { return last_d_loss_; }
    double last_g_loss() const { return last_g_loss_; }
    Mlp& generator() { return g_; }
    Mlp& discriminator() { return d_; }
    /// The network evaluation and checkpoints sample from: averaged weights
    /// when ema_decay > 0 (live weights otherwise) with running statistics
    /// re-estimated over fresh latent batches. Valid after sync_sampling_net.
    Mlp& sampling_generator() { return eval_g_; }
    void sync_sampling_net();
    const GaussianStats& real_stats() const { return real_stats_; }
    const ModeSpec& mode_spec() const { return modes_; }

  private:
    double lr_scale() const;
    double discriminator_update();
    double generator_update();

    ExperimentConfig cfg_;
    NetworkSpec g_spec_;
    NetworkSpec d_spec_;
    Mlp g_;
    Mlp d_;
    Mlp eval_g_;
    AdamState adam_g_;
    AdamState adam_d_;
    RngStream data_rng_;
    RngStream latent_rng_;
    GaussianStats real_stats_;
    ModeSpec modes_;
    std::vector<Tensor> ema_params_;
    std::uint64_t step_ = 0;
    double last_d_loss_ = 0.0;
    double last_g_loss_ = 0.0;
};

/// Trainer(cfg).run() with artifact output.
MetricReport train(const ExperimentConfig& cfg);

/// Metrics for n freshly generated samples from a frozen generator (eval
/// mode), against precomputed real-data moments. Deterministic in seed.
EvalMetrics evaluate_generator(Mlp& g, std::size_t n_samples, const GaussianStats& real_stats,
                               const ModeSpec& modes, std::uint64_t seed, std::size_t is_splits);

/// Rebuilds the generator from a checkpoint and evaluates it under the
/// dataset and seed of cfg.
EvalMetrics evaluate_checkpoint(const std::string& checkpoint_path, std::size_t n_samples,
                                const ExperimentConfig& cfg);

/// Real-data reference moments for FID, drawn from the RealStats substream.
GaussianStats real_reference_stats(const ExperimentConfig& cfg);
ModeSpec dataset_mode_spec(const ExperimentConfig& cfg);

struct MarginRunEntry {
    std::uint64_t seed = 0;
    double final_fid = 0.0;
    double final_is = 0.0;
    bool collapsed = false;
    bool diverged = false;
};

struct MarginSweepRow {
    double margin = 0.0;
    std::vector<MarginRunEntry> runs;
    double median_fid = 0.0;  // over non-diverged runs
    double median_is = 0.0;
};

struct MarginSweepResult {
    std::vector<MarginSweepRow> rows;
};

/// One full training run per (margin, seed); margins must lie in [-1, 1] and
/// the base loss must be the margin cosine loss. Divergent runs land in the
/// table as flagged cells. Writes margin_sweep.csv and margin_sweep.json
/// under base.out_dir; per-run artifacts go to per-run subdirectories.
MarginSweepResult sweep_margin(const ExperimentConfig& base, const std::vector<double>& margins,
                               const std::vector<std::uint64_t>& seeds);

struct SampleSweepRow {
    std::size_t count = 0;
    double fid = 0.0;
};

/// FID of the frozen generator at each sample count (counts non-decreasing,
/// each at least 2). Every entry draws its latents from counter 0, so equal
/// counts give equal entries.
std::vector<SampleSweepRow> sweep_sample_count(Mlp& g, const GaussianStats& real_stats,
                                               const std::vector<std::size_t>& counts,
                                               std::uint64_t seed);
std::vector<SampleSweepRow> sweep_sample_count(const std::string& checkpoint_path,
                                               const std::vector<std::size_t>& counts,
                                               const ExperimentConfig& cfg);

struct SeedVarianceRow {
    std::uint64_t seed = 0;
    double best_fid = 0.0;
    std::uint64_t best_step = 0;
    bool collapsed = false;
    bool diverged = false;
};

struct SeedVarianceResult {
    std::vector<SeedVarianceRow> rows;
    double min_fid = 0.0;
    double median_fid = 0.0;
    double max_fid = 0.0;
    double spread = 0.0;  // max - min
};

/// Trains base once per seed (at least 2) and reports each run's best FID
/// over its eval points plus the step it occurred at. Writes
/// seed_variance.csv and seed_variance.json under base.out_dir.
SeedVarianceResult run_seed_variance(const ExperimentConfig& base,
                                     const std::vector<std::uint64_t>& seeds);

}  // namespace ganlab
