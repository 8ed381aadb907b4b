#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "ganlab/rng.hpp"
#include "ganlab/tape.hpp"

namespace ganlab {

enum class Activation { Linear, Relu, LeakyRelu, Tanh };
enum class Role { Generator, Discriminator };
enum class HeadVariant { Linear, Cosine };

// Power-iteration estimate of a weight's top singular value. The direction
// estimate u persists across steps; refresh() runs one iteration off the tape
// and forward passes treat u (and the derived v) as constants, so gradients
// flow through W both directly and through the sigma estimate.
class SpectralNorm {
  public:
    SpectralNorm(std::size_t in_dim, RngStream& rng);

    void refresh(const Tensor& w);
    double sigma_estimate(const Tensor& w) const;
    // Returns w scaled on-tape by 1/sigma.
    Var effective_weight(Tape& t, Var w) const;

    const Tensor& u() const { return u_; }
    void set_u(Tensor u);

  private:
    Tensor right_vector(const Tensor& w) const;
    Tensor u_;  // [1, in_dim], unit L2 norm
};

class DenseLayer {
  public:
    DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act, RngStream& rng,
               double init_std);

    Var forward(Tape& t, Var x) const;
    void attach_spectral_norm(RngStream& rng, std::size_t warmup_iters);
    void refresh_spectral();

    Parameter weight;  // [in, out]
    Parameter bias;    // [out]
    Activation act;
    double leaky_slope = 0.2;
    std::optional<SpectralNorm> spectral;
};

class BatchNormLayer {
  public:
    explicit BatchNormLayer(std::size_t features);

    // Train mode normalizes by batch statistics (and folds the running stats
    // forward by `momentum`); eval mode normalizes by the running statistics.
    Var forward(Tape& t, Var x, bool train);

    // Between begin and end, train-mode forwards accumulate plain averages of
    // the batch statistics instead of folding them by momentum; end replaces
    // the running statistics with those averages. Re-estimates eval statistics
    // for frozen weights, which the momentum stream tracks only with a lag.
    // Eval-mode forwards are not counted, so end throws if none accumulated.
    void begin_stat_refresh();
    void end_stat_refresh();

    Parameter gamma;  // [features]
    Parameter beta;   // [features]
    Tensor running_mean;
    Tensor running_var;
    double epsilon = 1e-5;
    double momentum = 0.3;

  private:
    bool refreshing_ = false;
    std::size_t refresh_batches_ = 0;
    Tensor mean_accum_;
    Tensor var_accum_;
};

class CriticHead {
  public:
    CriticHead(HeadVariant variant, std::size_t features, RngStream& rng, double init_std);

    // [batch, features] -> [batch, 1] logits. The cosine variant emits the
    // cosine of the angle between each feature row and the head weight, so
    // its output lies in [-1, 1] and ignores positive rescaling of either.
    Var forward(Tape& t, Var features) const;

    HeadVariant variant;
    Parameter weight;  // [features, 1], no bias
};

struct MlpBlock {
    DenseLayer dense;
    std::optional<BatchNormLayer> batchnorm;
};

struct NetworkSpec {
    std::vector<std::size_t> sizes;  // input dim, hidden dims..., output dim
    Role role = Role::Generator;
    HeadVariant head = HeadVariant::Cosine;  // discriminator only
    bool batchnorm = false;                  // generator hidden blocks
    bool spectral_norm = false;              // discriminator dense weights
    Activation hidden_act = Activation::Relu;
    Activation output_act = Activation::Linear;  // generator output stage
    double init_std = 0.02;
    double leaky_slope = 0.2;
    std::size_t spectral_warmup = 5;
};

class Mlp {
  public:
    Var forward(Tape& t, Var x, bool train);
    // One spectral-norm power iteration per wrapped weight; call once per
    // training step before building the discriminator graph.
    void refresh_spectral();

    std::vector<Parameter*> parameters();
    std::size_t parameter_count();

    Role role = Role::Generator;
    std::vector<MlpBlock> blocks;
    std::optional<CriticHead> head;  // discriminator only
};

Mlp build_network(const NetworkSpec& spec, RngStream& rng);

}  // namespace ganlab
