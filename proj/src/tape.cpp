#include "ganlab/tape.hpp"

#include <cmath>

namespace ganlab {

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::MatMul: return "matmul";
        case Op::Transpose: return "transpose";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Neg: return "neg";
        case Op::Scale: return "scale";
        case Op::Shift: return "shift";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Sigmoid: return "sigmoid";
        case Op::Tanh: return "tanh";
        case Op::Relu: return "relu";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::Softplus: return "softplus";
        case Op::Square: return "square";
        case Op::Sqrt: return "sqrt";
        case Op::Reciprocal: return "reciprocal";
        case Op::Mean: return "mean";
        case Op::Sum: return "sum";
        case Op::BroadcastRow: return "broadcast_row";
        case Op::L2NormalizeRows: return "l2_normalize_rows";
        case Op::ClampMin: return "clamp_min";
    }
    return "?";
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

namespace {

void require_rank2(const Tensor& t, Op op) {
    if (t.rank() != 2)
        throw ShapeError(std::string(op_name(op)) + " requires a rank-2 tensor, got " +
                         shape_str(t.shape()));
}

// C += or = A * B, all rank-2.  ikj loop order keeps the inner loop contiguous.
void matmul_into(const Tensor& A, const Tensor& B, Tensor& C, bool accumulate) {
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    const double* a = A.data();
    const double* b = B.data();
    double* c = C.data();
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// dA += G * B^T where G is [m,n], B is [k,n] -> dA [m,k].
void matmul_accum_a(const Tensor& G, const Tensor& B, Tensor& dA) {
    const std::size_t m = G.rows(), n = G.cols(), k = B.rows();
    const double* g = G.data();
    const double* b = B.data();
    double* da = dA.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        double* darow = da + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            darow[p] += acc;
        }
    }
}

// dB += A^T * G where A is [m,k], G is [m,n] -> dB [k,n].
void matmul_accum_b(const Tensor& A, const Tensor& G, Tensor& dB) {
    const std::size_t m = A.rows(), k = A.cols(), n = G.cols();
    const double* a = A.data();
    const double* g = G.data();
    double* db = dB.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* dbrow = db + p * n;
            for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
        }
    }
}

enum class Broadcast { None, AScalar, BScalar };

Broadcast binary_broadcast(const Tensor& a, const Tensor& b, Op op) {
    if (a.shape() == b.shape()) return Broadcast::None;
    if (a.numel() == 1) return Broadcast::AScalar;
    if (b.numel() == 1) return Broadcast::BScalar;
    throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

}  // namespace

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node node;
    node.op = Op::Leaf;
    node.requires_grad = requires_grad;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(const Parameter& p, bool track) {
    // One node per parameter per tape, so gradients from every use site
    // accumulate into a single slot.
    if (auto it = param_nodes_.find(p.id); it != param_nodes_.end()) {
        Var v{this, it->second};
        if (tracked(v) != track)
            throw Error("parameter '" + p.name + "' recorded both tracked and untracked");
        return v;
    }
    Var v = leaf(p.value, track);
    nodes_.back().param_id = p.id;
    param_nodes_.emplace(p.id, v.id);
    return v;
}

Var Tape::apply(Op op, std::span<const Var> inputs, OpAttrs attrs) {
    if (op == Op::Leaf) throw Error("apply: use leaf() to record inputs");
    if (inputs.size() > 2) throw Error("apply: primitives take at most 2 inputs");
    Node node;
    node.op = op;
    node.attrs = attrs;
    node.n_in = static_cast<std::uint8_t>(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].tape != this) throw Error("apply: inputs must live on the same tape");
        node.in[i] = inputs[i].id;
        node.requires_grad = node.requires_grad || nodes_[inputs[i].id].requires_grad;
    }
    node.value = eval(op, inputs, node.attrs, node.saved);
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor Tape::eval(Op op, std::span<const Var> inputs, OpAttrs& attrs, Tensor& saved) const {
    auto arity = [&](std::size_t want) {
        if (inputs.size() != want)
            throw Error(std::string(op_name(op)) + ": expected " + std::to_string(want) +
                        " inputs, got " + std::to_string(inputs.size()));
    };
    auto unary_map = [&](auto&& f) {
        arity(1);
        const Tensor& x = value(inputs[0]);
        Tensor out(x.shape());
        for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i], i);
        return out;
    };

    switch (op) {
        case Op::Leaf:
            throw Error("unreachable");

        case Op::MatMul: {
            arity(2);
            const Tensor& a = value(inputs[0]);
            const Tensor& b = value(inputs[1]);
            require_rank2(a, op);
            require_rank2(b, op);
            if (a.cols() != b.rows())
                throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                 " vs " + shape_str(b.shape()));
            Tensor c(Shape{a.rows(), b.cols()});
            matmul_into(a, b, c, false);
            return c;
        }

        case Op::Transpose: {
            arity(1);
            const Tensor& x = value(inputs[0]);
            require_rank2(x, op);
            Tensor out(Shape{x.cols(), x.rows()});
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < x.cols(); ++j) out.at(j, i) = x.at(i, j);
            return out;
        }

        case Op::Add:
        case Op::Sub:
        case Op::Mul: {
            arity(2);
            const Tensor& a = value(inputs[0]);
            const Tensor& b = value(inputs[1]);
            Broadcast bc = binary_broadcast(a, b, op);
            const Tensor& big = bc == Broadcast::AScalar ? b : a;
            Tensor out(big.shape());
            for (std::size_t i = 0; i < out.numel(); ++i) {
                double av = bc == Broadcast::AScalar ? a[0] : a[i];
                double bv = bc == Broadcast::BScalar ? b[0] : b[i];
                out[i] = op == Op::Add ? av + bv : op == Op::Sub ? av - bv : av * bv;
            }
            return out;
        }

        case Op::Neg:
            return unary_map([](double x, std::size_t) { return -x; });
        case Op::Scale:
            return unary_map([&](double x, std::size_t) { return x * attrs.scalar; });
        case Op::Shift:
            return unary_map([&](double x, std::size_t) { return x + attrs.scalar; });
        case Op::Exp:
            return unary_map([](double x, std::size_t) { return std::exp(x); });
        case Op::Log:
            return unary_map([](double x, std::size_t i) {
                if (x <= 0.0)
                    throw DomainError("log of non-positive value " + std::to_string(x) +
                                      " at flat index " + std::to_string(i));
                return std::log(x);
            });
        case Op::Sigmoid:
            return unary_map([](double x, std::size_t) { return stable_sigmoid(x); });
        case Op::Tanh:
            return unary_map([](double x, std::size_t) { return std::tanh(x); });
        case Op::Relu:
            return unary_map([](double x, std::size_t) { return x > 0.0 ? x : 0.0; });
        case Op::LeakyRelu:
            return unary_map([&](double x, std::size_t) { return x > 0.0 ? x : attrs.scalar * x; });
        case Op::Softplus:
            return unary_map([](double x, std::size_t) { return stable_softplus(x); });
        case Op::Square:
            return unary_map([](double x, std::size_t) { return x * x; });
        case Op::Sqrt:
            return unary_map([](double x, std::size_t i) {
                if (x <= 0.0)
                    throw DomainError("sqrt of non-positive value " + std::to_string(x) +
                                      " at flat index " + std::to_string(i));
                return std::sqrt(x);
            });
        case Op::Reciprocal:
            return unary_map([](double x, std::size_t i) {
                if (x == 0.0) throw DomainError("reciprocal of zero at flat index " + std::to_string(i));
                return 1.0 / x;
            });

        case Op::Mean:
        case Op::Sum: {
            arity(1);
            const Tensor& x = value(inputs[0]);
            double acc = 0.0;
            for (std::size_t i = 0; i < x.numel(); ++i) acc += x[i];
            if (op == Op::Mean) acc /= static_cast<double>(x.numel());
            return Tensor::scalar(acc);
        }

        case Op::BroadcastRow: {
            arity(1);
            const Tensor& x = value(inputs[0]);
            if (attrs.rows == 0) throw Error("broadcast_row: target row count must be positive");
            std::size_t n;
            if (x.rank() == 1) {
                n = x.dim(0);
            } else if (x.rank() == 2 && x.rows() == 1) {
                n = x.cols();
            } else {
                throw ShapeError("broadcast_row requires [n] or [1xn], got " + shape_str(x.shape()));
            }
            Tensor out(Shape{attrs.rows, n});
            for (std::size_t i = 0; i < attrs.rows; ++i)
                for (std::size_t j = 0; j < n; ++j) out.at(i, j) = x[j];
            return out;
        }

        case Op::L2NormalizeRows: {
            arity(1);
            const Tensor& x = value(inputs[0]);
            require_rank2(x, op);
            Tensor out(x.shape());
            saved = Tensor(Shape{x.rows()});
            for (std::size_t i = 0; i < x.rows(); ++i) {
                double sq = 0.0;
                for (std::size_t j = 0; j < x.cols(); ++j) sq += x.at(i, j) * x.at(i, j);
                double norm = std::sqrt(sq);
                if (norm == 0.0)
                    throw DomainError("l2_normalize_rows: zero-norm row " + std::to_string(i));
                saved[i] = norm;
                for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j) / norm;
            }
            return out;
        }

        case Op::ClampMin:
            return unary_map([&](double x, std::size_t) { return x > attrs.scalar ? x : attrs.scalar; });
    }
    throw Error("unknown primitive");
}

Gradients Tape::backward(Var root) const {
    if (root.tape != this) throw Error("backward: root lives on a different tape");
    const Node& r = nodes_.at(root.id);
    if (r.value.numel() != 1)
        throw Error("backward: root must be scalar, got " + shape_str(r.value.shape()));
    if (!r.requires_grad)
        throw Error("backward: root was computed with gradient tracking disabled");

    Gradients g;
    g.tape_ = this;
    g.grads_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].requires_grad) g.grads_[i] = Tensor::zeros(nodes_[i].value.shape());
    g.grads_[root.id][0] = 1.0;

    for (std::uint32_t id = root.id + 1; id-- > 0;) {
        const Node& node = nodes_[id];
        if (!node.requires_grad || node.op == Op::Leaf) continue;
        backprop_node(node, g.grads_[id], g);
    }

    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].param_id != 0 && nodes_[i].requires_grad)
            g.by_param_.emplace(nodes_[i].param_id, &g.grads_[i]);
    return g;
}

void Tape::backprop_node(const Node& node, const Tensor& go, Gradients& g) const {
    auto in_val = [&](int k) -> const Tensor& { return nodes_[node.in[k]].value; };
    auto in_grad = [&](int k) -> Tensor* {
        return nodes_[node.in[k]].requires_grad ? &g.grads_[node.in[k]] : nullptr;
    };
    Tensor* da = node.n_in > 0 ? in_grad(0) : nullptr;
    Tensor* db = node.n_in > 1 ? in_grad(1) : nullptr;

    auto unary_chain = [&](auto&& dfdx) {
        if (!da) return;
        const Tensor& x = in_val(0);
        for (std::size_t i = 0; i < x.numel(); ++i) (*da)[i] += go[i] * dfdx(x[i], i);
    };

    switch (node.op) {
        case Op::Leaf:
            return;

        case Op::MatMul: {
            if (da) matmul_accum_a(go, in_val(1), *da);
            if (db) matmul_accum_b(in_val(0), go, *db);
            return;
        }

        case Op::Transpose: {
            if (!da) return;
            const Tensor& x = in_val(0);
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < x.cols(); ++j) da->at(i, j) += go.at(j, i);
            return;
        }

        case Op::Add:
        case Op::Sub: {
            const double sign_b = node.op == Op::Sub ? -1.0 : 1.0;
            const Tensor& a = in_val(0);
            const Tensor& b = in_val(1);
            if (da) {
                if (a.numel() == go.numel())
                    for (std::size_t i = 0; i < go.numel(); ++i) (*da)[i] += go[i];
                else
                    for (std::size_t i = 0; i < go.numel(); ++i) (*da)[0] += go[i];
            }
            if (db) {
                if (b.numel() == go.numel())
                    for (std::size_t i = 0; i < go.numel(); ++i) (*db)[i] += sign_b * go[i];
                else
                    for (std::size_t i = 0; i < go.numel(); ++i) (*db)[0] += sign_b * go[i];
            }
            return;
        }

        case Op::Mul: {
            const Tensor& a = in_val(0);
            const Tensor& b = in_val(1);
            const bool a_scalar = a.numel() == 1 && go.numel() != 1;
            const bool b_scalar = b.numel() == 1 && go.numel() != 1;
            if (da) {
                if (a_scalar)
                    for (std::size_t i = 0; i < go.numel(); ++i) (*da)[0] += go[i] * b[i];
                else
                    for (std::size_t i = 0; i < go.numel(); ++i) (*da)[i] += go[i] * (b_scalar ? b[0] : b[i]);
            }
            if (db) {
                if (b_scalar)
                    for (std::size_t i = 0; i < go.numel(); ++i) (*db)[0] += go[i] * a[i];
                else
                    for (std::size_t i = 0; i < go.numel(); ++i) (*db)[i] += go[i] * (a_scalar ? a[0] : a[i]);
            }
            return;
        }

        case Op::Neg:
            unary_chain([](double, std::size_t) { return -1.0; });
            return;
        case Op::Scale:
            unary_chain([&](double, std::size_t) { return node.attrs.scalar; });
            return;
        case Op::Shift:
            unary_chain([](double, std::size_t) { return 1.0; });
            return;
        case Op::Exp:
            unary_chain([&](double, std::size_t i) { return node.value[i]; });
            return;
        case Op::Log:
            unary_chain([](double x, std::size_t) { return 1.0 / x; });
            return;
        case Op::Sigmoid:
            unary_chain([&](double, std::size_t i) {
                double y = node.value[i];
                return y * (1.0 - y);
            });
            return;
        case Op::Tanh:
            unary_chain([&](double, std::size_t i) {
                double y = node.value[i];
                return 1.0 - y * y;
            });
            return;
        case Op::Relu:
            unary_chain([](double x, std::size_t) { return x > 0.0 ? 1.0 : 0.0; });
            return;
        case Op::LeakyRelu:
            unary_chain([&](double x, std::size_t) { return x > 0.0 ? 1.0 : node.attrs.scalar; });
            return;
        case Op::Softplus:
            unary_chain([](double x, std::size_t) { return stable_sigmoid(x); });
            return;
        case Op::Square:
            unary_chain([](double x, std::size_t) { return 2.0 * x; });
            return;
        case Op::Sqrt:
            unary_chain([&](double, std::size_t i) { return 0.5 / node.value[i]; });
            return;
        case Op::Reciprocal:
            unary_chain([&](double, std::size_t i) {
                double y = node.value[i];
                return -y * y;
            });
            return;

        case Op::Mean: {
            if (!da) return;
            const double s = go[0] / static_cast<double>(in_val(0).numel());
            for (std::size_t i = 0; i < da->numel(); ++i) (*da)[i] += s;
            return;
        }
        case Op::Sum: {
            if (!da) return;
            for (std::size_t i = 0; i < da->numel(); ++i) (*da)[i] += go[0];
            return;
        }

        case Op::BroadcastRow: {
            if (!da) return;
            const std::size_t n = da->numel();
            for (std::size_t i = 0; i < node.attrs.rows; ++i)
                for (std::size_t j = 0; j < n; ++j) (*da)[j] += go[i * n + j];
            return;
        }

        case Op::L2NormalizeRows: {
            if (!da) return;
            const Tensor& y = node.value;
            for (std::size_t i = 0; i < y.rows(); ++i) {
                const double r = node.saved[i];
                double dot = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) dot += y.at(i, j) * go.at(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j)
                    da->at(i, j) += (go.at(i, j) - y.at(i, j) * dot) / r;
            }
            return;
        }

        case Op::ClampMin:
            unary_chain([&](double x, std::size_t) { return x > node.attrs.scalar ? 1.0 : 0.0; });
            return;
    }
}

const Tensor& Gradients::of(Var v) const {
    if (v.tape != tape_) throw Error("gradient lookup on a different tape");
    if (v.id >= grads_.size() || grads_[v.id].numel() == 0)
        throw Error("no gradient recorded for this node (tracking disabled?)");
    return grads_[v.id];
}

bool Gradients::has(Var v) const {
    return v.tape == tape_ && v.id < grads_.size() && grads_[v.id].numel() != 0;
}

const Tensor& Gradients::of_param(const Parameter& p) const {
    auto it = by_param_.find(p.id);
    if (it == by_param_.end())
        throw Error("no gradient for parameter '" + p.name + "' (not on this tape?)");
    return *it->second;
}

// ---- sugar ------------------------------------------------------------------

Var matmul(Var a, Var b) { return a.tape->apply(Op::MatMul, {a, b}); }
Var transpose(Var a) { return a.tape->apply(Op::Transpose, {a}); }
Var add(Var a, Var b) { return a.tape->apply(Op::Add, {a, b}); }
Var sub(Var a, Var b) { return a.tape->apply(Op::Sub, {a, b}); }
Var mul(Var a, Var b) { return a.tape->apply(Op::Mul, {a, b}); }
Var neg(Var a) { return a.tape->apply(Op::Neg, {a}); }
Var scale(Var a, double c) { return a.tape->apply(Op::Scale, {a}, {.scalar = c}); }
Var shift(Var a, double c) { return a.tape->apply(Op::Shift, {a}, {.scalar = c}); }
Var vexp(Var a) { return a.tape->apply(Op::Exp, {a}); }
Var vlog(Var a) { return a.tape->apply(Op::Log, {a}); }
Var sigmoid(Var a) { return a.tape->apply(Op::Sigmoid, {a}); }
Var vtanh(Var a) { return a.tape->apply(Op::Tanh, {a}); }
Var relu(Var a) { return a.tape->apply(Op::Relu, {a}); }
Var leaky_relu(Var a, double slope) { return a.tape->apply(Op::LeakyRelu, {a}, {.scalar = slope}); }
Var softplus(Var a) { return a.tape->apply(Op::Softplus, {a}); }
Var square(Var a) { return a.tape->apply(Op::Square, {a}); }
Var vsqrt(Var a) { return a.tape->apply(Op::Sqrt, {a}); }
Var reciprocal(Var a) { return a.tape->apply(Op::Reciprocal, {a}); }
Var mean(Var a) { return a.tape->apply(Op::Mean, {a}); }
Var vsum(Var a) { return a.tape->apply(Op::Sum, {a}); }
Var broadcast_row(Var a, std::size_t rows) {
    return a.tape->apply(Op::BroadcastRow, {a}, {.rows = rows});
}
Var l2_normalize_rows(Var a) { return a.tape->apply(Op::L2NormalizeRows, {a}); }
Var clamp_min(Var a, double floor) { return a.tape->apply(Op::ClampMin, {a}, {.scalar = floor}); }

}  // namespace ganlab
