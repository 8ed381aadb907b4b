#include "ganlab/adam.hpp"

#include <cmath>

namespace ganlab {

AdamState::AdamState(AdamConfig cfg, const std::vector<Parameter*>& params) : cfg_(cfg) {
    if (cfg_.epsilon <= 0.0) throw Error("adam: epsilon must be positive");
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Parameter* p : params) {
        m_.push_back(Tensor::zeros(p->value.shape()));
        v_.push_back(Tensor::zeros(p->value.shape()));
    }
}

void AdamState::step(const std::vector<Parameter*>& params, const Gradients& grads,
                     double lr_scale) {
    if (params.size() != m_.size())
        throw Error("adam: parameter list size changed since construction");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        const Tensor& g = grads.of_param(p);
        if (!g.same_shape(p.value))
            throw ShapeError("adam: gradient shape " + shape_str(g.shape()) +
                             " does not match parameter '" + p.name + "' shape " +
                             shape_str(p.value.shape()));
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double gi = g[i];
            if (!std::isfinite(gi))
                throw DivergenceError(t_, "non-finite gradient in parameter '" + p.name + "'");
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p.value[i] -= cfg_.lr * lr_scale * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
        }
    }
}

}  // namespace ganlab
