#pragma once

#include <cstdint>
#include <vector>

#include "ganlab/tape.hpp"

namespace ganlab {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias-corrected moment estimates. One state per optimized
/// parameter set; accumulators are zero-initialized and keyed by position,
/// so the parameter list must stay in a fixed order across steps.
class AdamState {
  public:
    AdamState(AdamConfig cfg, const std::vector<Parameter*>& params);

    /// Applies one update in place, with the learning rate multiplied by
    /// lr_scale for this step only. Throws DivergenceError (carrying the
    /// step index) when any gradient is non-finite.
    void step(const std::vector<Parameter*>& params, const Gradients& grads,
              double lr_scale = 1.0);

    std::int64_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

    // Checkpoint plumbing: raw accumulator access.
    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    void set_steps_taken(std::int64_t t) { t_ = t; }

  private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace ganlab
