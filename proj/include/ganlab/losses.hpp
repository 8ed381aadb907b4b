#pragma once

#include <string>
#include <vector>

#include "ganlab/tape.hpp"

namespace ganlab {

enum class LossKind { CE, RCE, RaCE, LS, RaLS, Hinge, RaHinge, RMCos };

// Canonical names: "CE", "R-CE", "Ra-CE", "LS", "Ra-LS", "Hinge", "Ra-Hinge",
// "RMCos". Parsing is case-insensitive.
LossKind parse_loss_kind(const std::string& name);
std::string loss_kind_name(LossKind kind);
const std::vector<LossKind>& all_loss_kinds();

// Only the margin cosine loss reads the critic as a cosine; every baseline
// uses the plain linear head.
bool loss_uses_cosine_head(LossKind kind);

struct MarginCosineParams {
    double scale = 10.0;
    double margin = 0.15;
};

// Per-sample critic outputs for one batch; index i of real pairs with index i
// of fake in the paired relativistic losses.
struct LogitBatch {
    Var real;
    Var fake;
};

Var discriminator_loss(LossKind kind, const LogitBatch& batch,
                       const MarginCosineParams& params = {});
Var generator_loss(LossKind kind, const LogitBatch& batch,
                   const MarginCosineParams& params = {});

// Full margin-cosine saddle objective: discriminator term plus generator term.
Var rmcos_objective(const LogitBatch& batch, double scale, double margin);
// Same objective with the margin as a differentiable scalar leaf, so its
// derivative can be read off the tape.
Var rmcos_objective_with_margin_var(const LogitBatch& batch, double scale, Var margin);

struct MarginCheckResult {
    std::vector<double> values;       // objective per grid point
    std::vector<double> derivatives;  // tape dObjective/dm per grid point
    bool pass = false;                // non-decreasing values, derivatives >= -1e-12
};

// Evaluates the margin-cosine objective across a strictly increasing margin
// grid and verifies the objective never decreases in the margin.
MarginCheckResult margin_monotonicity_check(const Tensor& real, const Tensor& fake,
                                            double scale, const std::vector<double>& m_grid);

enum class LinkKind { Sigmoid, Softplus, TanhShifted, ArctanShifted };

LinkKind parse_link_kind(const std::string& name);
std::string link_kind_name(LinkKind link);

struct LinkCheckResult {
    std::vector<double> values;
    bool pass = false;
};

// Generalizes the monotonicity check to any positive non-decreasing link:
// objective(m) = -mean log link(s(h-m)) - mean log link(s(-h-m)).
LinkCheckResult link_function_variant_check(const Tensor& real, const Tensor& fake,
                                            double scale, const std::vector<double>& m_grid,
                                            LinkKind link);

}  // namespace ganlab
