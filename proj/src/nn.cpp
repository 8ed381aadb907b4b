#include "ganlab/nn.hpp"

#include <cmath>
#include <string>

#include "ganlab/error.hpp"

namespace ganlab {

namespace {

// Off-tape helpers for the power iteration.
Tensor row_times(const Tensor& row, const Tensor& m) {
    Tensor out(Shape{1, m.cols()}, 0.0);
    for (std::size_t p = 0; p < m.rows(); ++p) {
        const double r = row[p];
        for (std::size_t j = 0; j < m.cols(); ++j) out[j] += r * m.at(p, j);
    }
    return out;
}

Tensor row_times_transposed(const Tensor& row, const Tensor& m) {
    Tensor out(Shape{1, m.rows()}, 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) acc += row[j] * m.at(i, j);
        out[i] = acc;
    }
    return out;
}

double row_norm(const Tensor& row) {
    double sq = 0.0;
    for (double v : row.vec()) sq += v * v;
    return std::sqrt(sq);
}

void normalize_row_inplace(Tensor& row, const char* what) {
    const double n = row_norm(row);
    if (n == 0.0) throw DomainError(std::string(what) + ": zero vector has no direction");
    for (double& v : row.vec()) v /= n;
}

}  // namespace

SpectralNorm::SpectralNorm(std::size_t in_dim, RngStream& rng)
    : u_(rng.gaussian_tensor({1, in_dim})) {
    normalize_row_inplace(u_, "spectral norm init");
}

void SpectralNorm::set_u(Tensor u) {
    if (u.shape() != u_.shape())
        throw ShapeError("spectral norm u: expected " + shape_str(u_.shape()) + ", got " +
                         shape_str(u.shape()));
    u_ = std::move(u);
}

Tensor SpectralNorm::right_vector(const Tensor& w) const {
    Tensor v = row_times(u_, w);
    if (row_norm(v) == 0.0)
        throw DomainError("spectral norm: zero weight matrix has no singular direction");
    normalize_row_inplace(v, "spectral norm");
    return v;
}

void SpectralNorm::refresh(const Tensor& w) {
    Tensor v = right_vector(w);
    u_ = row_times_transposed(v, w);
    normalize_row_inplace(u_, "spectral norm");
}

double SpectralNorm::sigma_estimate(const Tensor& w) const {
    Tensor v = right_vector(w);
    Tensor uw = row_times(u_, w);
    double sigma = 0.0;
    for (std::size_t j = 0; j < v.numel(); ++j) sigma += uw[j] * v[j];
    return sigma;
}

Var SpectralNorm::effective_weight(Tape& t, Var w) const {
    Tensor v = right_vector(w.value());
    Var u_row = t.constant(u_);
    Var v_col = t.constant(Tensor(Shape{v.numel(), 1}, v.vec()));
    Var sigma = matmul(matmul(u_row, w), v_col);
    return mul(w, reciprocal(sigma));
}

DenseLayer::DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act_kind,
                       RngStream& rng, double init_std)
    : weight("weight", rng.gaussian_tensor({in_dim, out_dim}, init_std)),
      bias("bias", Tensor(Shape{out_dim}, 0.0)),
      act(act_kind) {}

void DenseLayer::attach_spectral_norm(RngStream& rng, std::size_t warmup_iters) {
    spectral.emplace(weight.value.rows(), rng);
    for (std::size_t i = 0; i < warmup_iters; ++i) spectral->refresh(weight.value);
}

void DenseLayer::refresh_spectral() {
    if (spectral) spectral->refresh(weight.value);
}

Var DenseLayer::forward(Tape& t, Var x) const {
    Var w = t.param(weight);
    if (spectral) w = spectral->effective_weight(t, w);
    Var y = add(matmul(x, w), broadcast_row(t.param(bias), x.shape()[0]));
    switch (act) {
        case Activation::Linear: return y;
        case Activation::Relu: return relu(y);
        case Activation::LeakyRelu: return leaky_relu(y, leaky_slope);
        case Activation::Tanh: return vtanh(y);
    }
    throw Error("dense forward: unknown activation");
}

BatchNormLayer::BatchNormLayer(std::size_t features)
    : gamma("gamma", Tensor(Shape{features}, 1.0)),
      beta("beta", Tensor(Shape{features}, 0.0)),
      running_mean(Shape{features}, 0.0),
      running_var(Shape{features}, 1.0) {}

Var BatchNormLayer::forward(Tape& t, Var x, bool train) {
    const std::size_t batch = x.shape()[0];
    const std::size_t feats = x.shape()[1];
    Var g = broadcast_row(t.param(gamma), batch);
    Var b = broadcast_row(t.param(beta), batch);

    if (!train) {
        Tensor inv(Shape{feats});
        for (std::size_t j = 0; j < feats; ++j)
            inv[j] = 1.0 / std::sqrt(running_var[j] + epsilon);
        Var centered = sub(x, broadcast_row(t.constant(running_mean), batch));
        Var xhat = mul(centered, broadcast_row(t.constant(inv), batch));
        return add(mul(xhat, g), b);
    }

    if (batch < 2)
        throw ShapeError("batchnorm: train mode needs batch size >= 2, got " +
                         shape_str(x.shape()));
    Var ones_mean = t.constant(Tensor(Shape{1, batch}, 1.0 / double(batch)));
    Var mean_row = matmul(ones_mean, x);
    Var centered = sub(x, broadcast_row(mean_row, batch));
    Var var_row = matmul(ones_mean, square(centered));
    Var inv = reciprocal(vsqrt(shift(var_row, epsilon)));
    Var xhat = mul(centered, broadcast_row(inv, batch));

    const Tensor& bm = mean_row.value();
    const Tensor& bv = var_row.value();
    const double unbias = double(batch) / double(batch - 1);
    if (refreshing_) {
        for (std::size_t j = 0; j < feats; ++j) {
            mean_accum_[j] += bm[j];
            var_accum_[j] += bv[j] * unbias;
        }
        ++refresh_batches_;
    } else {
        for (std::size_t j = 0; j < feats; ++j) {
            running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * bm[j];
            running_var[j] = (1.0 - momentum) * running_var[j] + momentum * bv[j] * unbias;
        }
    }
    return add(mul(xhat, g), b);
}

void BatchNormLayer::begin_stat_refresh() {
    const std::size_t feats = gamma.value.shape()[0];
    refreshing_ = true;
    refresh_batches_ = 0;
    mean_accum_ = Tensor(Shape{feats}, 0.0);
    var_accum_ = Tensor(Shape{feats}, 0.0);
}

void BatchNormLayer::end_stat_refresh() {
    if (!refreshing_) throw Error("batchnorm: end_stat_refresh without begin");
    if (refresh_batches_ == 0)
        throw Error("batchnorm: stat refresh saw no train-mode batches");
    const std::size_t feats = gamma.value.shape()[0];
    const double inv = 1.0 / double(refresh_batches_);
    for (std::size_t j = 0; j < feats; ++j) {
        running_mean[j] = mean_accum_[j] * inv;
        running_var[j] = var_accum_[j] * inv;
    }
    refreshing_ = false;
}

CriticHead::CriticHead(HeadVariant variant_kind, std::size_t features, RngStream& rng,
                       double init_std)
    : variant(variant_kind), weight("head.weight", rng.gaussian_tensor({features, 1}, init_std)) {}

Var CriticHead::forward(Tape& t, Var features) const {
    Var w = t.param(weight);
    if (variant == HeadVariant::Linear) return matmul(features, w);
    Var w_unit = transpose(l2_normalize_rows(transpose(w)));
    return matmul(l2_normalize_rows(features), w_unit);
}

Var Mlp::forward(Tape& t, Var x, bool train) {
    Var h = x;
    for (auto& block : blocks) {
        h = block.dense.forward(t, h);
        if (block.batchnorm) h = block.batchnorm->forward(t, h, train);
    }
    if (head) return head->forward(t, h);
    return h;
}

void Mlp::refresh_spectral() {
    for (auto& block : blocks) block.dense.refresh_spectral();
}

std::vector<Parameter*> Mlp::parameters() {
    std::vector<Parameter*> out;
    for (auto& block : blocks) {
        out.push_back(&block.dense.weight);
        out.push_back(&block.dense.bias);
        if (block.batchnorm) {
            out.push_back(&block.batchnorm->gamma);
            out.push_back(&block.batchnorm->beta);
        }
    }
    if (head) out.push_back(&head->weight);
    return out;
}

std::size_t Mlp::parameter_count() {
    std::size_t n = 0;
    for (Parameter* p : parameters()) n += p->value.numel();
    return n;
}

Mlp build_network(const NetworkSpec& spec, RngStream& rng) {
    if (spec.sizes.size() < 2)
        throw ConfigError("network needs at least an input and an output size, got " +
                          std::to_string(spec.sizes.size()));
    for (std::size_t s : spec.sizes)
        if (s == 0) throw ConfigError("network layer sizes must be positive");

    Mlp net;
    net.role = spec.role;
    const std::string prefix = spec.role == Role::Generator ? "g." : "d.";
    const std::size_t n_layers = spec.sizes.size() - 1;
    for (std::size_t i = 0; i < n_layers; ++i) {
        const bool last = i + 1 == n_layers;
        Activation act = spec.hidden_act;
        if (spec.role == Role::Generator && last) act = spec.output_act;
        DenseLayer dense(spec.sizes[i], spec.sizes[i + 1], act, rng, spec.init_std);
        dense.leaky_slope = spec.leaky_slope;
        dense.weight.name = prefix + "block" + std::to_string(i) + ".weight";
        dense.bias.name = prefix + "block" + std::to_string(i) + ".bias";
        if (spec.role == Role::Discriminator && spec.spectral_norm)
            dense.attach_spectral_norm(rng, spec.spectral_warmup);

        MlpBlock block{std::move(dense), std::nullopt};
        if (spec.role == Role::Generator && spec.batchnorm && !last) {
            block.batchnorm.emplace(spec.sizes[i + 1]);
            block.batchnorm->gamma.name = prefix + "block" + std::to_string(i) + ".gamma";
            block.batchnorm->beta.name = prefix + "block" + std::to_string(i) + ".beta";
        }
        net.blocks.push_back(std::move(block));
    }
    if (spec.role == Role::Discriminator)
        net.head.emplace(spec.head, spec.sizes.back(), rng, spec.init_std);
    return net;
}

}  // namespace ganlab
