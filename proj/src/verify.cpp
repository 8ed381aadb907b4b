#include "ganlab/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>

#include <Eigen/Dense>

#include "ganlab/checkpoint.hpp"
#include "ganlab/config.hpp"
#include "ganlab/data.hpp"
#include "ganlab/error.hpp"
#include "ganlab/gradcheck.hpp"
#include "ganlab/harness.hpp"
#include "ganlab/idx.hpp"
#include "ganlab/losses.hpp"
#include "ganlab/metrics.hpp"
#include "ganlab/nn.hpp"

namespace ganlab {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

double rand_in(RngStream& rng, double lo, double hi) {
    return lo + (hi - lo) * rng.next_double();
}

Tensor rand_tensor(RngStream& rng, Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rand_in(rng, lo, hi);
    return t;
}

double top_singular_value(const Tensor& w) {
    Eigen::MatrixXd m(w.rows(), w.cols());
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = 0; c < w.cols(); ++c) m(r, c) = w.at(r, c);
    return m.jacobiSvd().singularValues()(0);
}

PropertyResult timed(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    auto t0 = std::chrono::steady_clock::now();
    PropertyResult r;
    r.name = name;
    try {
        auto [pass, detail] = body();
        r.pass = pass;
        r.detail = detail;
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("exception: ") + e.what();
    }
    auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                  .count();
    r.detail += " [" + fmt(ms) + " ms]";
    return r;
}

PropertyResult check_primitive_gradients() {
    return timed("gradient_check_primitives", [] {
        RngStream rng(2024, Substream::Init);
        double worst = 0.0;
        std::size_t cases = 0;

        using Unary = std::function<Var(Var)>;
        const std::vector<std::pair<std::string, Unary>> ops = {
            {"sigmoid", [](Var v) { return sigmoid(v); }},
            {"tanh", [](Var v) { return vtanh(v); }},
            {"softplus", [](Var v) { return softplus(v); }},
            {"exp", [](Var v) { return vexp(v); }},
            {"log_shift", [](Var v) { return vlog(shift(softplus(v), 0.1)); }},
            {"square", [](Var v) { return square(v); }},
            {"sqrt_shift", [](Var v) { return vsqrt(shift(square(v), 0.5)); }},
            {"reciprocal", [](Var v) { return reciprocal(shift(square(v), 1.0)); }},
            {"relu_offset", [](Var v) { return relu(shift(v, 0.35)); }},
            {"leaky", [](Var v) { return leaky_relu(shift(v, 0.35), 0.2); }},
            {"l2_normalize", [](Var v) { return l2_normalize_rows(shift(v, 3.0)); }},
            {"mean", [](Var v) { return mean(square(v)); }},
        };

        for (const auto& [op_name, op] : ops) {
            for (int rep = 0; rep < 4; ++rep) {
                Tensor x0 = rand_tensor(rng, {3, 4}, 0.2, 1.2);
                Tensor w = rand_tensor(rng, {3, 4}, -1.0, 1.0);
                Tensor wk = rand_tensor(rng, {4, 4}, -0.7, 0.7);
                // Weighted-sum readout gives FD a scalar probe per op output.
                auto readout = [&](Tape& t, Var v) {
                    Tensor w_read =
                        v.value().numel() == 1 ? Tensor(Shape{1}, {0.7}) : w;
                    return vsum(mul(v, t.constant(w_read)));
                };
                auto f = [&](const Tensor& x) {
                    Tape t;
                    Var v = op(matmul(t.leaf(x, true), t.constant(wk)));
                    return readout(t, v).value().item();
                };
                Tape t;
                Var xv = t.leaf(x0, true);
                Var y = readout(t, op(matmul(xv, t.constant(wk))));
                Tensor analytic = t.backward(y).of(xv);
                Tensor numeric = finite_difference_gradient(f, x0);
                worst = std::max(worst, max_relative_error(analytic, numeric));
                ++cases;
            }
        }
        return std::make_pair(worst <= 1e-4, std::to_string(cases) +
                                                 " cases, max rel err " + fmt(worst));
    });
}

PropertyResult check_loss_gradients() {
    return timed("gradient_check_losses", [] {
        RngStream rng(77, Substream::Init);
        double worst = 0.0;
        std::size_t cases = 0;
        for (LossKind kind : all_loss_kinds()) {
            const double lim = loss_uses_cosine_head(kind) ? 0.9 : 0.45;
            for (int rep = 0; rep < 5; ++rep) {
                Tensor real = rand_tensor(rng, {8, 1}, -lim, lim);
                Tensor fake = rand_tensor(rng, {8, 1}, -lim, lim);
                for (bool gen_side : {false, true}) {
                    Tape t;
                    LogitBatch b{t.leaf(real, true), t.leaf(fake, true)};
                    Var loss = gen_side ? generator_loss(kind, b) : discriminator_loss(kind, b);
                    Gradients grads = t.backward(loss);
                    Tensor fd_real = finite_difference_gradient(
                        [&](const Tensor& r) {
                            Tape t2;
                            LogitBatch b2{t2.leaf(r, true), t2.constant(fake)};
                            return (gen_side ? generator_loss(kind, b2)
                                             : discriminator_loss(kind, b2))
                                .value()
                                .item();
                        },
                        real);
                    Tensor fd_fake = finite_difference_gradient(
                        [&](const Tensor& f) {
                            Tape t2;
                            LogitBatch b2{t2.constant(real), t2.leaf(f, true)};
                            return (gen_side ? generator_loss(kind, b2)
                                             : discriminator_loss(kind, b2))
                                .value()
                                .item();
                        },
                        fake);
                    worst = std::max(worst, max_relative_error(grads.of(b.real), fd_real));
                    worst = std::max(worst, max_relative_error(grads.of(b.fake), fd_fake));
                    ++cases;
                }
            }
        }
        return std::make_pair(worst <= 1e-4, std::to_string(cases) +
                                                 " endpoints, max rel err " + fmt(worst));
    });
}

PropertyResult check_rmcos_reduction(bool inject_sign_flip) {
    return timed("rmcos_reduction", [inject_sign_flip] {
        RngStream rng(4242, Substream::Init);
        double worst = 0.0;
        for (int rep = 0; rep < 1000; ++rep) {
            Tensor real = rand_tensor(rng, {6, 1}, -0.95, 0.95);
            Tensor fake = rand_tensor(rng, {6, 1}, -0.95, 0.95);
            Tape t;
            LogitBatch batch{t.constant(real), t.constant(fake)};
            MarginCosineParams p{1.0, 0.0};
            Var d = inject_sign_flip
                        ? discriminator_loss(LossKind::RMCos, {batch.fake, batch.real}, p)
                        : discriminator_loss(LossKind::RMCos, batch, p);
            Var g = generator_loss(LossKind::RMCos, batch, p);
            Var rd = discriminator_loss(LossKind::RCE, batch);
            Var rg = generator_loss(LossKind::RCE, batch);
            double diff = std::abs(d.value().item() + g.value().item() - rd.value().item() -
                                   rg.value().item());
            worst = std::max(worst, diff);
        }
        return std::make_pair(worst <= 1e-12,
                              "1000 batches, max |RMCos(s=1,m=0) - R-CE| = " + fmt(worst));
    });
}

PropertyResult check_margin_monotonicity() {
    return timed("margin_monotonicity", [] {
        RngStream rng(5151, Substream::Init);
        std::vector<double> grid;
        for (int i = -10; i <= 10; ++i) grid.push_back(i * 0.05);
        double min_deriv = 0.0;
        for (int rep = 0; rep < 100; ++rep) {
            Tensor real = rng.gaussian_tensor({6, 1}, 0.5);
            Tensor fake = rng.gaussian_tensor({6, 1}, 0.5);
            for (auto& v : real.vec()) v = std::clamp(v, -0.99, 0.99);
            for (auto& v : fake.vec()) v = std::clamp(v, -0.99, 0.99);
            MarginCheckResult r = margin_monotonicity_check(real, fake, 10.0, grid);
            for (double d : r.derivatives) min_deriv = std::min(min_deriv, d);
            if (!r.pass)
                return std::make_pair(false, "objective decreased in m on batch " +
                                                 std::to_string(rep));
        }
        return std::make_pair(true, "100 batches x 21-point grid, min dObj/dm = " +
                                        fmt(min_deriv));
    });
}

PropertyResult check_link_variants() {
    return timed("link_variants", [] {
        RngStream rng(6161, Substream::Init);
        std::vector<double> grid;
        for (int i = -10; i <= 10; ++i) grid.push_back(i * 0.05);
        for (LinkKind link : {LinkKind::Sigmoid, LinkKind::Softplus, LinkKind::TanhShifted,
                              LinkKind::ArctanShifted}) {
            for (int rep = 0; rep < 25; ++rep) {
                Tensor real = rng.gaussian_tensor({6, 1}, 0.3);
                Tensor fake = rng.gaussian_tensor({6, 1}, 0.3);
                // The shifted-tanh link underflows to zero past |arg| ~ 18.7,
                // so keep s(h - m) comfortably inside the representable range.
                for (auto& v : real.vec()) v = std::clamp(v, -0.6, 0.6);
                for (auto& v : fake.vec()) v = std::clamp(v, -0.6, 0.6);
                LinkCheckResult r = link_function_variant_check(real, fake, 10.0, grid, link);
                if (!r.pass)
                    return std::make_pair(false, link_kind_name(link) +
                                                     " link failed monotonicity on batch " +
                                                     std::to_string(rep));
            }
        }
        return std::make_pair(true, std::string("4 links x 25 batches x 21-point grid"));
    });
}

PropertyResult check_frechet_closed_forms() {
    return timed("frechet_closed_forms", [] {
        RngStream rng(7001, Substream::Init);
        GaussianStats a{Tensor(Shape{2}, {0.3, -0.7}),
                        Tensor(Shape{2, 2}, {1.0, 0.2, 0.2, 0.8})};
        double identical = frechet_distance(a, a);
        GaussianStats n01{Tensor(Shape{1}, {0.0}), Tensor(Shape{1, 1}, {1.0})};
        GaussianStats n11{Tensor(Shape{1}, {1.0}), Tensor(Shape{1, 1}, {1.0})};
        double shifted = frechet_distance(n01, n11);
        GaussianStats id2{Tensor::zeros({2}), Tensor::identity(2)};
        GaussianStats four2{Tensor::zeros({2}),
                            Tensor(Shape{2, 2}, {4.0, 0.0, 0.0, 4.0})};
        double scaled = frechet_distance(id2, four2);

        double worst_recon = 0.0;
        for (int rep = 0; rep < 20; ++rep) {
            std::size_t n = 2 + rng.next_below(31);
            Tensor b = rng.gaussian_tensor({n, n});
            Tensor sigma(Shape{n, n});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < n; ++k) s += b.at(i, k) * b.at(j, k);
                    sigma.at(i, j) = s;
                }
            Tensor root = matrix_sqrt_psd(sigma);
            double scale = 1.0;
            for (std::size_t i = 0; i < sigma.numel(); ++i)
                scale = std::max(scale, std::abs(sigma[i]));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < n; ++k) s += root.at(i, k) * root.at(k, j);
                    worst_recon = std::max(worst_recon, std::abs(s - sigma.at(i, j)) / scale);
                }
        }
        bool pass = identical <= 1e-10 && std::abs(shifted - 1.0) <= 1e-10 &&
                    std::abs(scaled - 2.0) <= 1e-10 && worst_recon <= 1e-8;
        return std::make_pair(pass, "identical=" + fmt(identical) + ", shift_err=" +
                                        fmt(std::abs(shifted - 1.0)) + ", scale_err=" +
                                        fmt(std::abs(scaled - 2.0)) + ", sqrt_recon=" +
                                        fmt(worst_recon));
    });
}

PropertyResult check_is_bounds() {
    return timed("is_bounds", [] {
        const std::size_t k = 8;
        Tensor uniform(Shape{40, k}, 1.0 / double(k));
        InceptionScore u = inception_score(uniform, 4);
        // 80 cyclic one-hot rows split 10 ways: every split sees each class
        // exactly once, so the per-split marginal is uniform and the score
        // hits the upper bound K exactly.
        Tensor onehot = Tensor::zeros({80, k});
        for (std::size_t i = 0; i < 80; ++i) onehot.at(i, i % k) = 1.0;
        InceptionScore o = inception_score(onehot, 10);

        RngStream rng(8080, Substream::Init);
        double lo = 1e300, hi = -1e300;
        for (int rep = 0; rep < 100; ++rep) {
            Tensor p(Shape{30, k});
            for (std::size_t i = 0; i < 30; ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    p.at(i, j) = -std::log(1.0 - rng.next_double() * (1.0 - 1e-12));
                    sum += p.at(i, j);
                }
                for (std::size_t j = 0; j < k; ++j) p.at(i, j) /= sum;
            }
            InceptionScore s = inception_score(p, 5);
            lo = std::min(lo, s.mean);
            hi = std::max(hi, s.mean);
        }
        bool pass = std::abs(u.mean - 1.0) <= 1e-12 && std::abs(o.mean - double(k)) <= 1e-12 &&
                    lo >= 1.0 - 1e-9 && hi <= double(k) + 1e-9;
        return std::make_pair(pass, "uniform_err=" + fmt(std::abs(u.mean - 1.0)) +
                                        ", onehot_err=" + fmt(std::abs(o.mean - double(k))) +
                                        ", random IS range [" + fmt(lo) + ", " + fmt(hi) + "]");
    });
}

PropertyResult check_parser_round_trips() {
    return timed("parser_round_trips", [] {
        for (LossKind kind : all_loss_kinds())
            if (parse_loss_kind(loss_kind_name(kind)) != kind)
                return std::make_pair(false, std::string("loss name round trip failed"));
        for (LinkKind link : {LinkKind::Sigmoid, LinkKind::Softplus, LinkKind::TanhShifted,
                              LinkKind::ArctanShifted})
            if (parse_link_kind(link_kind_name(link)) != link)
                return std::make_pair(false, std::string("link name round trip failed"));
        for (SyntheticKind kind :
             {SyntheticKind::Ring8, SyntheticKind::Grid25, SyntheticKind::Spiral})
            if (parse_synthetic_kind(synthetic_kind_name(kind)) != kind)
                return std::make_pair(false, std::string("dataset name round trip failed"));

        RngStream rng(9090, Substream::Init);
        for (int rep = 0; rep < 10; ++rep) {
            IdxTensor idx;
            idx.type_code = 0x0D;
            idx.extents = {static_cast<std::uint32_t>(1 + rng.next_below(5)),
                           static_cast<std::uint32_t>(1 + rng.next_below(7))};
            std::size_t count = std::size_t(idx.extents[0]) * idx.extents[1] * 4;
            idx.payload.resize(count);
            for (auto& b : idx.payload) b = static_cast<std::uint8_t>(rng.next_below(256));
            auto bytes = serialize_idx(idx);
            IdxTensor back = parse_idx(bytes);
            if (back.type_code != idx.type_code || back.extents != idx.extents ||
                back.payload != idx.payload)
                return std::make_pair(false, std::string("idx round trip mismatch"));
        }

        NetworkSpec gs;
        gs.sizes = {3, 6, 2};
        gs.role = Role::Generator;
        gs.batchnorm = true;
        NetworkSpec ds;
        ds.sizes = {2, 6};
        ds.role = Role::Discriminator;
        ds.spectral_norm = true;
        RngStream init(3, Substream::Init);
        Mlp g = build_network(gs, init);
        Mlp d = build_network(ds, init);
        AdamState ag({}, g.parameters()), ad({}, d.parameters());
        Checkpoint c = make_checkpoint(gs, g, ds, d, ag, ad, 9, 123, 4, 5);
        auto bytes = serialize_checkpoint(c);
        Checkpoint back = parse_checkpoint(bytes);
        if (serialize_checkpoint(back) != bytes)
            return std::make_pair(false, std::string("checkpoint round trip not bit-exact"));

        nlohmann::json j{{"loss", "rmcos"},    {"dataset", "ring8"},  {"latent_dim", 4},
                         {"g_layers", {4, 8, 2}}, {"d_layers", {2, 8}}, {"batch_size", 8},
                         {"steps", 5},          {"d_steps_per_g", 1},  {"lr", 2e-4},
                         {"beta1", 0.5},        {"beta2", 0.999},      {"epsilon", 1e-8},
                         {"scale", 10.0},       {"margin", 0.15},      {"eval_interval", 5},
                         {"eval_samples", 32},  {"seed", 1},           {"out_dir", "x"},
                         {"is_splits", 4}};
        ExperimentConfig cfg = parse_experiment_config(j);
        ExperimentConfig cfg2 = parse_experiment_config(experiment_config_json(cfg));
        if (config_hash(cfg) != config_hash(cfg2))
            return std::make_pair(false, std::string("config echo round trip changed the hash"));

        return std::make_pair(true,
                              std::string("loss/link/dataset names, idx, checkpoint, config"));
    });
}

PropertyResult check_spectral_norm_oracle() {
    return timed("spectral_norm_oracle", [] {
        RngStream rng(1234, Substream::Init);
        double worst = 0.0;
        for (int rep = 0; rep < 3; ++rep) {
            Tensor w = rng.gaussian_tensor({16, 16});
            SpectralNorm sn(16, rng);
            for (int i = 0; i < 100; ++i) sn.refresh(w);
            double sigma = sn.sigma_estimate(w);
            Tensor w_eff(Shape{16, 16});
            for (std::size_t i = 0; i < w.numel(); ++i) w_eff[i] = w[i] / sigma;
            double top = top_singular_value(w_eff);
            worst = std::max(worst, std::abs(top - 1.0));
        }
        return std::make_pair(worst <= 1e-2,
                              "3 matrices, 100 refreshes, max |sigma1(W_eff) - 1| = " +
                                  fmt(worst));
    });
}

PropertyResult check_determinism_replay() {
    return timed("determinism_replay", [] {
        auto dir = std::filesystem::temp_directory_path() / "ganlab_verify";
        std::error_code ec;
        std::filesystem::remove_all(dir, ec);
        ExperimentConfig cfg;
        cfg.loss = LossKind::RMCos;
        cfg.data.kind = SyntheticKind::Ring8;
        cfg.latent_dim = 4;
        cfg.g_layers = {4, 16, 2};
        cfg.d_layers = {2, 16};
        cfg.batch_size = 16;
        cfg.steps = 30;
        cfg.eval_interval = 10;
        cfg.eval_samples = 64;
        cfg.seed = 5;
        cfg.data.seed = 5;
        cfg.real_stats_samples = 256;
        cfg.is_splits = 4;
        cfg.out_dir = (dir / "a").string();
        MetricReport ra = train(cfg);
        cfg.out_dir = (dir / "b").string();
        MetricReport rb = train(cfg);
        if (ra.rows.size() != rb.rows.size())
            return std::make_pair(false, std::string("row counts differ"));
        for (std::size_t i = 0; i < ra.rows.size(); ++i) {
            const EvalRow &x = ra.rows[i], &y = rb.rows[i];
            if (x.step != y.step || x.d_loss != y.d_loss || x.g_loss != y.g_loss ||
                x.fid != y.fid || x.is_mean != y.is_mean || x.is_std != y.is_std ||
                x.modes != y.modes || x.hq_frac != y.hq_frac)
                return std::make_pair(false, "row " + std::to_string(i) + " differs");
        }
        Checkpoint ca = load_checkpoint((dir / "a" / "checkpoint_final.bin").string());
        Checkpoint cb = load_checkpoint((dir / "b" / "checkpoint_final.bin").string());
        if (ca.named.size() != cb.named.size())
            return std::make_pair(false, std::string("checkpoint tensor counts differ"));
        for (std::size_t i = 0; i < ca.named.size(); ++i)
            if (ca.named[i].first != cb.named[i].first ||
                !(ca.named[i].second == cb.named[i].second))
                return std::make_pair(false,
                                      "checkpoint tensor " + ca.named[i].first + " differs");
        return std::make_pair(true, "30-step replay, " + std::to_string(ra.rows.size()) +
                                        " eval rows and all tensors identical");
    });
}

}  // namespace

VerifyReport run_verify(const VerifyOptions& opts) {
    VerifyReport report;
    report.results.push_back(check_primitive_gradients());
    report.results.push_back(check_loss_gradients());
    report.results.push_back(check_rmcos_reduction(opts.inject_rmcos_sign_flip));
    report.results.push_back(check_margin_monotonicity());
    report.results.push_back(check_link_variants());
    report.results.push_back(check_frechet_closed_forms());
    report.results.push_back(check_is_bounds());
    report.results.push_back(check_parser_round_trips());
    report.results.push_back(check_spectral_norm_oracle());
    report.results.push_back(check_determinism_replay());

    report.all_pass = true;
    for (const auto& r : report.results) {
        if (!r.pass) {
            report.all_pass = false;
            if (report.first_failure.empty()) report.first_failure = r.name;
        }
    }
    return report;
}

}  // namespace ganlab
