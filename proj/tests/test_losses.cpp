#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ganlab/gradcheck.hpp"
#include "ganlab/losses.hpp"
#include "ganlab/nn.hpp"
#include "ganlab/rng.hpp"

using namespace ganlab;

namespace {

Tensor rand_uniform(RngStream& rng, Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = lo + (hi - lo) * rng.next_double();
    return t;
}

// Independent reimplementation of every documented formula in plain doubles.
double o_log_sigmoid(double x) { return -std::log1p(std::exp(-x)); }
double o_mean(const Tensor& t) {
    return std::accumulate(t.vec().begin(), t.vec().end(), 0.0) / double(t.numel());
}

double oracle_d(LossKind kind, const Tensor& r, const Tensor& f, double s, double m) {
    const std::size_t n = r.numel();
    const double mr = o_mean(r), mf = o_mean(f);
    double acc = 0.0;
    switch (kind) {
        case LossKind::CE:
            for (std::size_t i = 0; i < n; ++i)
                acc += -o_log_sigmoid(r[i]) - std::log1p(-1.0 / (1.0 + std::exp(-f[i])));
            return acc / double(n);
        case LossKind::RCE:
            for (std::size_t i = 0; i < n; ++i) acc += -o_log_sigmoid(r[i] - f[i]);
            return acc / double(n);
        case LossKind::RaCE:
            for (std::size_t i = 0; i < n; ++i)
                acc += -o_log_sigmoid(r[i] - mf) -
                       std::log1p(-1.0 / (1.0 + std::exp(-(f[i] - mr))));
            return acc / double(n);
        case LossKind::LS:
            for (std::size_t i = 0; i < n; ++i)
                acc += 0.5 * (r[i] - 1.0) * (r[i] - 1.0) + 0.5 * f[i] * f[i];
            return acc / double(n);
        case LossKind::RaLS:
            for (std::size_t i = 0; i < n; ++i)
                acc += (r[i] - mf - 1.0) * (r[i] - mf - 1.0) +
                       (f[i] - mr + 1.0) * (f[i] - mr + 1.0);
            return acc / double(n);
        case LossKind::Hinge:
            for (std::size_t i = 0; i < n; ++i)
                acc += std::max(0.0, 1.0 - r[i]) + std::max(0.0, 1.0 + f[i]);
            return acc / double(n);
        case LossKind::RaHinge:
            for (std::size_t i = 0; i < n; ++i)
                acc += std::max(0.0, 1.0 - (r[i] - mf)) + std::max(0.0, 1.0 + (f[i] - mr));
            return acc / double(n);
        case LossKind::RMCos:
            for (std::size_t i = 0; i < n; ++i)
                acc += -o_log_sigmoid(s * (r[i] - f[i] - m));
            return acc / double(n);
    }
    return std::nan("");
}

double oracle_g(LossKind kind, const Tensor& r, const Tensor& f, double s, double m) {
    const std::size_t n = r.numel();
    const double mr = o_mean(r), mf = o_mean(f);
    double acc = 0.0;
    switch (kind) {
        case LossKind::CE:
            for (std::size_t i = 0; i < n; ++i) acc += -o_log_sigmoid(f[i]);
            return acc / double(n);
        case LossKind::RCE:
            for (std::size_t i = 0; i < n; ++i) acc += -o_log_sigmoid(f[i] - r[i]);
            return acc / double(n);
        case LossKind::RaCE:
            for (std::size_t i = 0; i < n; ++i)
                acc += -o_log_sigmoid(f[i] - mr) -
                       std::log1p(-1.0 / (1.0 + std::exp(-(r[i] - mf))));
            return acc / double(n);
        case LossKind::LS:
            for (std::size_t i = 0; i < n; ++i) acc += 0.5 * (f[i] - 1.0) * (f[i] - 1.0);
            return acc / double(n);
        case LossKind::RaLS:
            for (std::size_t i = 0; i < n; ++i)
                acc += (f[i] - mr - 1.0) * (f[i] - mr - 1.0) +
                       (r[i] - mf + 1.0) * (r[i] - mf + 1.0);
            return acc / double(n);
        case LossKind::Hinge:
            for (std::size_t i = 0; i < n; ++i) acc += -f[i];
            return acc / double(n);
        case LossKind::RaHinge:
            for (std::size_t i = 0; i < n; ++i)
                acc += std::max(0.0, 1.0 - (f[i] - mr)) + std::max(0.0, 1.0 + (r[i] - mf));
            return acc / double(n);
        case LossKind::RMCos:
            for (std::size_t i = 0; i < n; ++i)
                acc += -o_log_sigmoid(s * (f[i] - r[i] - m));
            return acc / double(n);
    }
    return std::nan("");
}

double d_value(LossKind kind, const Tensor& r, const Tensor& f,
               const MarginCosineParams& p = {}) {
    Tape t;
    return discriminator_loss(kind, {t.leaf(r), t.leaf(f)}, p).value().item();
}

double g_value(LossKind kind, const Tensor& r, const Tensor& f,
               const MarginCosineParams& p = {}) {
    Tape t;
    return generator_loss(kind, {t.leaf(r), t.leaf(f)}, p).value().item();
}

}  // namespace

TEST_CASE("loss kind names round-trip") {
    for (LossKind kind : all_loss_kinds()) {
        CHECK(parse_loss_kind(loss_kind_name(kind)) == kind);
        CHECK(parse_loss_kind(loss_kind_name(kind) + "") == kind);
    }
    CHECK(parse_loss_kind("rmcos") == LossKind::RMCos);
    CHECK(parse_loss_kind("RA-HINGE") == LossKind::RaHinge);
    CHECK_THROWS_AS(parse_loss_kind("wasserstein"), ConfigError);
    CHECK(loss_uses_cosine_head(LossKind::RMCos));
    for (LossKind kind : all_loss_kinds())
        if (kind != LossKind::RMCos) CHECK_FALSE(loss_uses_cosine_head(kind));
}

TEST_CASE("hand-evaluated loss values") {
    Tensor zero(Shape{1}, {0.0});
    Tensor one(Shape{1}, {1.0});
    CHECK(d_value(LossKind::CE, zero, zero) ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));
    CHECK(g_value(LossKind::CE, zero, zero) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));

    MarginCosineParams m0{3.7, 0.0};
    Tensor half(Shape{4}, 0.5);
    CHECK(d_value(LossKind::RMCos, half, half, m0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(g_value(LossKind::RMCos, half, half, m0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));

    // direct scalar evaluation: -log sigma(10*(1-0-0.15)) = log(1+e^-8.5)
    CHECK(d_value(LossKind::RMCos, one, zero, {10.0, 0.15}) ==
          doctest::Approx(std::log1p(std::exp(-8.5))).epsilon(1e-12));

    CHECK(d_value(LossKind::Hinge, Tensor(Shape{1}, {2.0}), Tensor(Shape{1}, {-2.0})) == 0.0);
    CHECK(g_value(LossKind::Hinge, zero, Tensor(Shape{1}, {3.0})) ==
          doctest::Approx(-3.0).epsilon(1e-15));

    CHECK(d_value(LossKind::LS, Tensor(Shape{1}, {3.0}), one) ==
          doctest::Approx(2.5).epsilon(1e-15));
    CHECK(g_value(LossKind::LS, zero, Tensor(Shape{1}, {3.0})) ==
          doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("every loss matches its plain-double oracle on random batches") {
    RngStream rng(21, Substream::Init);
    for (LossKind kind : all_loss_kinds()) {
        CAPTURE(loss_kind_name(kind));
        const bool cosine = loss_uses_cosine_head(kind);
        for (int rep = 0; rep < 50; ++rep) {
            const double lim = cosine ? 0.95 : 4.0;
            Tensor r = rand_uniform(rng, {16, 1}, -lim, lim);
            Tensor f = rand_uniform(rng, {16, 1}, -lim, lim);
            MarginCosineParams p{10.0, 0.15};
            CHECK(d_value(kind, r, f, p) ==
                  doctest::Approx(oracle_d(kind, r, f, p.scale, p.margin)).epsilon(1e-12));
            CHECK(g_value(kind, r, f, p) ==
                  doctest::Approx(oracle_g(kind, r, f, p.scale, p.margin)).epsilon(1e-12));
        }
    }
}

TEST_CASE("relativistic losses swap their D and G values when real and fake swap") {
    RngStream rng(22, Substream::Init);
    for (LossKind kind : {LossKind::RCE, LossKind::RaCE, LossKind::RaLS, LossKind::RaHinge,
                          LossKind::RMCos}) {
        CAPTURE(loss_kind_name(kind));
        const bool cosine = loss_uses_cosine_head(kind);
        const double lim = cosine ? 0.95 : 4.0;
        Tensor r = rand_uniform(rng, {8, 1}, -lim, lim);
        Tensor f = rand_uniform(rng, {8, 1}, -lim, lim);
        MarginCosineParams p{10.0, 0.15};
        CHECK(d_value(kind, f, r, p) == g_value(kind, r, f, p));
        CHECK(g_value(kind, f, r, p) == d_value(kind, r, f, p));
    }
}

TEST_CASE("margin cosine objective reduces to the paired relativistic objective") {
    RngStream rng(23, Substream::Init);
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        Tensor r = rand_uniform(rng, {8, 1}, -1.0, 1.0);
        Tensor f = rand_uniform(rng, {8, 1}, -1.0, 1.0);
        Tape t;
        LogitBatch batch{t.leaf(r), t.leaf(f)};
        double obj = rmcos_objective(batch, 1.0, 0.0).value().item();
        double rsgan = add(discriminator_loss(LossKind::RCE, batch),
                           generator_loss(LossKind::RCE, batch))
                           .value()
                           .item();
        worst = std::max(worst, std::fabs(obj - rsgan));
    }
    CHECK_MESSAGE(worst <= 1e-12, "worst deviation " << worst);
}

TEST_CASE("margin cosine objective ordering across margins") {
    RngStream rng(24, Substream::Init);
    Tensor r = rand_uniform(rng, {16, 1}, -1.0, 1.0);
    Tensor f = rand_uniform(rng, {16, 1}, -1.0, 1.0);
    Tape t;
    LogitBatch batch{t.leaf(r), t.leaf(f)};
    double lo = rmcos_objective(batch, 10.0, -0.5).value().item();
    double mid = rmcos_objective(batch, 10.0, 0.0).value().item();
    double hi = rmcos_objective(batch, 10.0, 0.5).value().item();
    CHECK(lo < mid);
    CHECK(mid < hi);
}

TEST_CASE("margin monotonicity check") {
    RngStream rng(25, Substream::Init);
    std::vector<double> grid;
    for (int i = -10; i <= 10; ++i) grid.push_back(0.05 * i);

    SUBCASE("strictly increasing values and non-negative derivatives") {
        for (int rep = 0; rep < 100; ++rep) {
            Tensor r = rand_uniform(rng, {8, 1}, -1.0, 1.0);
            Tensor f = rand_uniform(rng, {8, 1}, -1.0, 1.0);
            MarginCheckResult res = margin_monotonicity_check(r, f, 10.0, grid);
            REQUIRE(res.pass);
            for (std::size_t i = 1; i < res.values.size(); ++i)
                CHECK(res.values[i] > res.values[i - 1]);
            for (double d : res.derivatives) CHECK(d >= -1e-12);
        }
    }
    SUBCASE("values agree with the plain objective") {
        Tensor r = rand_uniform(rng, {8, 1}, -1.0, 1.0);
        Tensor f = rand_uniform(rng, {8, 1}, -1.0, 1.0);
        MarginCheckResult res = margin_monotonicity_check(r, f, 10.0, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            Tape t;
            LogitBatch batch{t.leaf(r), t.leaf(f)};
            CHECK(res.values[i] == doctest::Approx(rmcos_objective(batch, 10.0, grid[i])
                                                       .value()
                                                       .item())
                                       .epsilon(1e-14));
        }
    }
    SUBCASE("identical logits collapse to a closed form") {
        Tensor r = rand_uniform(rng, {8, 1}, -1.0, 1.0);
        MarginCheckResult res = margin_monotonicity_check(r, r, 10.0, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            double expect = 2.0 * std::log1p(std::exp(-(-10.0 * grid[i])));
            CHECK(res.values[i] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    SUBCASE("tape derivative matches finite differences at m=0") {
        Tensor r = rand_uniform(rng, {8, 1}, -1.0, 1.0);
        Tensor f = rand_uniform(rng, {8, 1}, -1.0, 1.0);
        MarginCheckResult res = margin_monotonicity_check(r, f, 10.0, {-0.05, 0.0, 0.05});
        Tensor fd = finite_difference_gradient(
            [&](const Tensor& m) {
                Tape t;
                LogitBatch batch{t.leaf(r), t.leaf(f)};
                return rmcos_objective(batch, 10.0, m[0]).value().item();
            },
            Tensor::scalar(0.0), 1e-5);
        CHECK(max_relative_error(Tensor::scalar(res.derivatives[1]), fd) <= 1e-4);
    }
    SUBCASE("degenerate grids rejected") {
        Tensor r(Shape{2}, {0.1, 0.2});
        CHECK_THROWS_AS(margin_monotonicity_check(r, r, 10.0, {0.0, 0.1}), DomainError);
        CHECK_THROWS_AS(margin_monotonicity_check(r, r, 10.0, {0.0, 0.1, 0.1}), DomainError);
        CHECK_THROWS_AS(margin_monotonicity_check(r, r, 10.0, {0.2, 0.1, 0.3}), DomainError);
    }
}

TEST_CASE("generalized link variants stay monotone in the margin") {
    RngStream rng(26, Substream::Init);
    std::vector<double> grid;
    for (int i = -6; i <= 6; ++i) grid.push_back(0.1 * i);
    Tensor r = rand_uniform(rng, {16, 1}, -1.0, 1.0);
    Tensor f = rand_uniform(rng, {16, 1}, -1.0, 1.0);

    for (LinkKind link : {LinkKind::Sigmoid, LinkKind::Softplus, LinkKind::TanhShifted,
                          LinkKind::ArctanShifted}) {
        CAPTURE(link_kind_name(link));
        LinkCheckResult res = link_function_variant_check(r, f, 2.0, grid, link);
        CHECK(res.pass);
    }

    SUBCASE("sigmoid link replicates the margin check values") {
        LinkCheckResult res = link_function_variant_check(r, f, 10.0, grid, LinkKind::Sigmoid);
        MarginCheckResult ref = margin_monotonicity_check(r, f, 10.0, grid);
        REQUIRE(res.values.size() == ref.values.size());
        for (std::size_t i = 0; i < res.values.size(); ++i)
            CHECK(res.values[i] == doctest::Approx(ref.values[i]).epsilon(1e-12));
    }
    SUBCASE("a link driven to zero is a domain error") {
        Tensor z(Shape{4}, 0.0);
        CHECK_THROWS_AS(link_function_variant_check(z, z, 10.0, {30.0, 35.0, 40.0},
                                                    LinkKind::TanhShifted),
                        DomainError);
    }
    SUBCASE("link names round-trip") {
        for (LinkKind link : {LinkKind::Sigmoid, LinkKind::Softplus, LinkKind::TanhShifted,
                              LinkKind::ArctanShifted})
            CHECK(parse_link_kind(link_kind_name(link)) == link);
        CHECK_THROWS_AS(parse_link_kind("relu"), ConfigError);
    }
}

TEST_CASE("loss gradients with respect to logits match finite differences") {
    RngStream rng(27, Substream::Init);
    for (LossKind kind : all_loss_kinds()) {
        CAPTURE(loss_kind_name(kind));
        const double lim = loss_uses_cosine_head(kind) ? 0.9 : 0.45;
        MarginCosineParams p{10.0, 0.15};
        for (int rep = 0; rep < 20; ++rep) {
            Tensor r = rand_uniform(rng, {8, 1}, -lim, lim);
            Tensor f = rand_uniform(rng, {8, 1}, -lim, lim);
            Tape t;
            Var vr = t.leaf(r, true);
            Var vf = t.leaf(f, true);
            Var total = add(discriminator_loss(kind, {vr, vf}, p),
                            generator_loss(kind, {vr, vf}, p));
            Gradients g = t.backward(total);
            Tensor fd_r = finite_difference_gradient(
                [&](const Tensor& probe) {
                    return oracle_d(kind, probe, f, p.scale, p.margin) +
                           oracle_g(kind, probe, f, p.scale, p.margin);
                },
                r, 1e-5);
            Tensor fd_f = finite_difference_gradient(
                [&](const Tensor& probe) {
                    return oracle_d(kind, r, probe, p.scale, p.margin) +
                           oracle_g(kind, r, probe, p.scale, p.margin);
                },
                f, 1e-5);
            CHECK(max_relative_error(g.of(vr), fd_r) <= 1e-4);
            CHECK(max_relative_error(g.of(vf), fd_f) <= 1e-4);
        }
    }
}

TEST_CASE("losses stay finite at extreme logits") {
    Tensor big(Shape{4}, 500.0);
    Tensor small(Shape{4}, -500.0);
    for (LossKind kind : all_loss_kinds()) {
        CAPTURE(loss_kind_name(kind));
        const bool cosine = loss_uses_cosine_head(kind);
        Tensor r = cosine ? Tensor(Shape{4}, 1.0) : big;
        Tensor f = cosine ? Tensor(Shape{4}, -1.0) : small;
        CHECK(std::isfinite(d_value(kind, r, f, {10.0, 0.15})));
        CHECK(std::isfinite(g_value(kind, r, f, {10.0, 0.15})));
        CHECK(std::isfinite(d_value(kind, f, r, {10.0, 0.15})));
        CHECK(std::isfinite(g_value(kind, f, r, {10.0, 0.15})));
    }
}

TEST_CASE("average losses ignore batch order, paired losses do not") {
    RngStream rng(28, Substream::Init);
    Tensor r = rand_uniform(rng, {8, 1}, -0.9, 0.9);
    Tensor f = rand_uniform(rng, {8, 1}, -0.9, 0.9);
    Tensor f_rot = f;
    std::rotate(f_rot.vec().begin(), f_rot.vec().begin() + 3, f_rot.vec().end());
    Tensor r_rot = r;
    std::rotate(r_rot.vec().begin(), r_rot.vec().begin() + 3, r_rot.vec().end());

    MarginCosineParams p{10.0, 0.15};
    for (LossKind kind : {LossKind::RaCE, LossKind::RaLS, LossKind::RaHinge}) {
        CAPTURE(loss_kind_name(kind));
        CHECK(d_value(kind, r, f_rot, p) == doctest::Approx(d_value(kind, r, f, p)).epsilon(1e-12));
        CHECK(d_value(kind, r_rot, f, p) == doctest::Approx(d_value(kind, r, f, p)).epsilon(1e-12));
    }
    for (LossKind kind : {LossKind::RCE, LossKind::RMCos}) {
        CAPTURE(loss_kind_name(kind));
        CHECK(d_value(kind, r_rot, f_rot, p) ==
              doctest::Approx(d_value(kind, r, f, p)).epsilon(1e-12));
        CHECK(std::fabs(d_value(kind, r, f_rot, p) - d_value(kind, r, f, p)) > 1e-6);
    }
}

TEST_CASE("loss input validation") {
    Tape t;
    Var a = t.leaf(Tensor(Shape{4, 1}, 0.5));
    Var b = t.leaf(Tensor(Shape{3, 1}, 0.5));
    CHECK_THROWS_AS(discriminator_loss(LossKind::RCE, {a, b}), ShapeError);

    Var out_of_range = t.leaf(Tensor(Shape{4, 1}, 1.5));
    CHECK_THROWS_WITH_AS(
        discriminator_loss(LossKind::RMCos, {a, out_of_range}, {10.0, 0.15}),
        doctest::Contains("head mismatch"), DomainError);
    CHECK_THROWS_AS(generator_loss(LossKind::RMCos, {out_of_range, a}, {10.0, 0.15}),
                    DomainError);
    CHECK_THROWS_AS(discriminator_loss(LossKind::RMCos, {a, a}, {0.0, 0.15}), DomainError);
    CHECK_THROWS_AS(discriminator_loss(LossKind::RMCos, {a, a}, {-2.0, 0.15}), DomainError);
    // plain linear-head losses accept logits of any magnitude
    Var wide = t.leaf(Tensor(Shape{4, 1}, 37.0));
    CHECK_NOTHROW(discriminator_loss(LossKind::CE, {wide, wide}));
}

TEST_CASE("full margin cosine discriminator loss gradients on a small network") {
    RngStream rng(29, Substream::Init);
    NetworkSpec ds;
    ds.sizes = {2, 16, 16};
    ds.role = Role::Discriminator;
    ds.head = HeadVariant::Cosine;
    ds.spectral_norm = true;
    ds.hidden_act = Activation::LeakyRelu;
    ds.init_std = 0.3;
    Mlp d = build_network(ds, rng);

    Tensor real = rand_uniform(rng, {8, 2}, -1.5, 1.5);
    Tensor fake = rand_uniform(rng, {8, 2}, -1.5, 1.5);
    MarginCosineParams p{10.0, 0.15};

    auto loss_value = [&] {
        Tape t;
        LogitBatch batch{d.forward(t, t.leaf(real), true), d.forward(t, t.leaf(fake), true)};
        return discriminator_loss(LossKind::RMCos, batch, p).value().item();
    };
    Tape t;
    LogitBatch batch{d.forward(t, t.leaf(real), true), d.forward(t, t.leaf(fake), true)};
    Gradients g = t.backward(discriminator_loss(LossKind::RMCos, batch, p));

    double worst = 0.0;
    for (Parameter* param : d.parameters()) {
        Tensor at = param->value;
        Tensor fd = finite_difference_gradient(
            [&](const Tensor& probe) {
                param->value = probe;
                double out = loss_value();
                return out;
            },
            at, 1e-5);
        param->value = at;
        worst = std::max(worst, max_relative_error(g.of_param(*param), fd));
    }
    CHECK_MESSAGE(worst <= 1e-4, "worst rel err " << worst);
}
