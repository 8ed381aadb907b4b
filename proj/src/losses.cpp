#include "ganlab/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ganlab/error.hpp"

namespace ganlab {

namespace {

constexpr double kCosineSlack = 1e-9;

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

void check_batch(LossKind kind, const LogitBatch& batch, const MarginCosineParams& params) {
    const Tensor& r = batch.real.value();
    const Tensor& f = batch.fake.value();
    if (r.shape() != f.shape())
        throw ShapeError("logit batch: real " + shape_str(r.shape()) + " and fake " +
                         shape_str(f.shape()) + " must pair up");
    if (kind != LossKind::RMCos) return;
    if (params.scale <= 0.0)
        throw DomainError("margin cosine scale must be positive, got " +
                          std::to_string(params.scale));
    for (const Tensor* t : {&r, &f})
        for (double v : t->vec())
            if (std::fabs(v) > 1.0 + kCosineSlack)
                throw DomainError("head mismatch: margin cosine loss expects cosine logits "
                                  "in [-1, 1], got " +
                                  std::to_string(v));
}

// -mean log sigma(x) = mean softplus(-x), finite for any finite x.
Var mean_neg_log_sigmoid(Var x) { return mean(softplus(neg(x))); }

Var hinge_at_one(Var x) { return mean(clamp_min(shift(neg(x), 1.0), 0.0)); }

}  // namespace

LossKind parse_loss_kind(const std::string& name) {
    const std::string n = lower(name);
    if (n == "ce") return LossKind::CE;
    if (n == "r-ce") return LossKind::RCE;
    if (n == "ra-ce") return LossKind::RaCE;
    if (n == "ls") return LossKind::LS;
    if (n == "ra-ls") return LossKind::RaLS;
    if (n == "hinge") return LossKind::Hinge;
    if (n == "ra-hinge") return LossKind::RaHinge;
    if (n == "rmcos") return LossKind::RMCos;
    throw ConfigError("unknown loss kind '" + name +
                      "' (expected one of CE, R-CE, Ra-CE, LS, Ra-LS, Hinge, Ra-Hinge, RMCos)");
}

std::string loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::CE: return "CE";
        case LossKind::RCE: return "R-CE";
        case LossKind::RaCE: return "Ra-CE";
        case LossKind::LS: return "LS";
        case LossKind::RaLS: return "Ra-LS";
        case LossKind::Hinge: return "Hinge";
        case LossKind::RaHinge: return "Ra-Hinge";
        case LossKind::RMCos: return "RMCos";
    }
    throw Error("unknown loss kind value");
}

const std::vector<LossKind>& all_loss_kinds() {
    static const std::vector<LossKind> kinds = {
        LossKind::CE,    LossKind::RCE,  LossKind::RaCE,    LossKind::LS,
        LossKind::RaLS,  LossKind::Hinge, LossKind::RaHinge, LossKind::RMCos};
    return kinds;
}

bool loss_uses_cosine_head(LossKind kind) { return kind == LossKind::RMCos; }

Var discriminator_loss(LossKind kind, const LogitBatch& batch,
                       const MarginCosineParams& params) {
    check_batch(kind, batch, params);
    Var cr = batch.real;
    Var cf = batch.fake;
    switch (kind) {
        case LossKind::CE:
            return add(mean_neg_log_sigmoid(cr), mean(softplus(cf)));
        case LossKind::RCE:
            return mean_neg_log_sigmoid(sub(cr, cf));
        case LossKind::RaCE:
            return add(mean_neg_log_sigmoid(sub(cr, mean(cf))),
                       mean(softplus(sub(cf, mean(cr)))));
        case LossKind::LS:
            return add(scale(mean(square(shift(cr, -1.0))), 0.5),
                       scale(mean(square(cf)), 0.5));
        case LossKind::RaLS:
            return add(mean(square(shift(sub(cr, mean(cf)), -1.0))),
                       mean(square(shift(sub(cf, mean(cr)), 1.0))));
        case LossKind::Hinge:
            return add(hinge_at_one(cr), mean(clamp_min(shift(cf, 1.0), 0.0)));
        case LossKind::RaHinge:
            return add(hinge_at_one(sub(cr, mean(cf))),
                       mean(clamp_min(shift(sub(cf, mean(cr)), 1.0), 0.0)));
        case LossKind::RMCos:
            return mean_neg_log_sigmoid(
                scale(shift(sub(cr, cf), -params.margin), params.scale));
    }
    throw Error("unknown loss kind value");
}

Var generator_loss(LossKind kind, const LogitBatch& batch, const MarginCosineParams& params) {
    check_batch(kind, batch, params);
    Var cr = batch.real;
    Var cf = batch.fake;
    switch (kind) {
        case LossKind::CE:
            return mean_neg_log_sigmoid(cf);
        case LossKind::RCE:
            return mean_neg_log_sigmoid(sub(cf, cr));
        case LossKind::RaCE:
            return add(mean_neg_log_sigmoid(sub(cf, mean(cr))),
                       mean(softplus(sub(cr, mean(cf)))));
        case LossKind::LS:
            return scale(mean(square(shift(cf, -1.0))), 0.5);
        case LossKind::RaLS:
            return add(mean(square(shift(sub(cf, mean(cr)), -1.0))),
                       mean(square(shift(sub(cr, mean(cf)), 1.0))));
        case LossKind::Hinge:
            return neg(mean(cf));
        case LossKind::RaHinge:
            return add(hinge_at_one(sub(cf, mean(cr))),
                       mean(clamp_min(shift(sub(cr, mean(cf)), 1.0), 0.0)));
        case LossKind::RMCos:
            return mean_neg_log_sigmoid(
                scale(shift(sub(cf, cr), -params.margin), params.scale));
    }
    throw Error("unknown loss kind value");
}

Var rmcos_objective(const LogitBatch& batch, double scale_, double margin) {
    MarginCosineParams params{scale_, margin};
    return add(discriminator_loss(LossKind::RMCos, batch, params),
               generator_loss(LossKind::RMCos, batch, params));
}

Var rmcos_objective_with_margin_var(const LogitBatch& batch, double scale_, Var margin) {
    check_batch(LossKind::RMCos, batch, {scale_, 0.0});
    Var h = sub(batch.real, batch.fake);
    Var d_term = mean_neg_log_sigmoid(scale(sub(h, margin), scale_));
    Var g_term = mean_neg_log_sigmoid(scale(sub(neg(h), margin), scale_));
    return add(d_term, g_term);
}

namespace {

void check_grid(const std::vector<double>& m_grid) {
    if (m_grid.size() < 3)
        throw DomainError("margin grid needs at least 3 points, got " +
                          std::to_string(m_grid.size()));
    for (std::size_t i = 1; i < m_grid.size(); ++i)
        if (!(m_grid[i] > m_grid[i - 1]))
            throw DomainError("margin grid must be strictly increasing");
}

bool non_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] < v[i - 1] - 1e-12) return false;
    return true;
}

}  // namespace

MarginCheckResult margin_monotonicity_check(const Tensor& real, const Tensor& fake,
                                            double scale_,
                                            const std::vector<double>& m_grid) {
    check_grid(m_grid);
    MarginCheckResult result;
    for (double m : m_grid) {
        Tape t;
        LogitBatch batch{t.leaf(real), t.leaf(fake)};
        Var mv = t.leaf(Tensor::scalar(m), true);
        Var obj = rmcos_objective_with_margin_var(batch, scale_, mv);
        Gradients g = t.backward(obj);
        result.values.push_back(obj.value().item());
        result.derivatives.push_back(g.of(mv)[0]);
    }
    result.pass = non_decreasing(result.values) &&
                  std::all_of(result.derivatives.begin(), result.derivatives.end(),
                              [](double d) { return d >= -1e-12; });
    return result;
}

LinkKind parse_link_kind(const std::string& name) {
    const std::string n = lower(name);
    if (n == "sigmoid") return LinkKind::Sigmoid;
    if (n == "softplus") return LinkKind::Softplus;
    if (n == "tanh-shifted") return LinkKind::TanhShifted;
    if (n == "arctan-shifted") return LinkKind::ArctanShifted;
    throw ConfigError("unknown link kind '" + name +
                      "' (expected sigmoid, softplus, tanh-shifted, arctan-shifted)");
}

std::string link_kind_name(LinkKind link) {
    switch (link) {
        case LinkKind::Sigmoid: return "sigmoid";
        case LinkKind::Softplus: return "softplus";
        case LinkKind::TanhShifted: return "tanh-shifted";
        case LinkKind::ArctanShifted: return "arctan-shifted";
    }
    throw Error("unknown link kind value");
}

namespace {

double log_link(LinkKind link, double x) {
    switch (link) {
        case LinkKind::Sigmoid:
            return -stable_softplus(-x);  // log sigma(x), never -inf for finite x
        case LinkKind::Softplus: {
            const double v = stable_softplus(x);
            if (v <= 0.0)
                throw DomainError("softplus link underflowed to a non-positive value at " +
                                  std::to_string(x));
            return std::log(v);
        }
        case LinkKind::TanhShifted: {
            const double v = 0.5 * (1.0 + std::tanh(x));
            if (v <= 0.0)
                throw DomainError("shifted-tanh link is non-positive at " + std::to_string(x));
            return std::log(v);
        }
        case LinkKind::ArctanShifted: {
            const double pi = std::acos(-1.0);
            const double v = (std::atan(x) + pi / 2.0) / pi;
            if (v <= 0.0)
                throw DomainError("shifted-arctan link is non-positive at " +
                                  std::to_string(x));
            return std::log(v);
        }
    }
    throw Error("unknown link kind value");
}

}  // namespace

LinkCheckResult link_function_variant_check(const Tensor& real, const Tensor& fake,
                                            double scale_,
                                            const std::vector<double>& m_grid,
                                            LinkKind link) {
    check_grid(m_grid);
    if (real.shape() != fake.shape())
        throw ShapeError("logit batch: real " + shape_str(real.shape()) + " and fake " +
                         shape_str(fake.shape()) + " must pair up");
    LinkCheckResult result;
    const std::size_t n = real.numel();
    for (double m : m_grid) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double h = real[i] - fake[i];
            acc -= log_link(link, scale_ * (h - m)) + log_link(link, scale_ * (-h - m));
        }
        result.values.push_back(acc / double(n));
    }
    result.pass = non_decreasing(result.values);
    return result;
}

}  // namespace ganlab
