#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ganlab/tensor.hpp"

namespace ganlab {

/// Differentiable primitives. Everything the networks and losses compute is
/// a composition of these.
enum class Op : std::uint8_t {
    Leaf,
    MatMul,           // [m,k] x [k,n] -> [m,n]
    Transpose,        // [m,n] -> [n,m]
    Add,              // elementwise; one side may be a one-element tensor
    Sub,
    Mul,
    Neg,
    Scale,            // x * attrs.scalar
    Shift,            // x + attrs.scalar
    Exp,
    Log,              // requires strictly positive input
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu,        // slope = attrs.scalar
    Softplus,         // log(1 + e^x), evaluated overflow-free
    Square,
    Sqrt,             // requires strictly positive input
    Reciprocal,       // requires nonzero input
    Mean,             // full reduction -> [1]
    Sum,              // full reduction -> [1]
    BroadcastRow,     // [n] or [1,n] -> [attrs.rows, n]
    L2NormalizeRows,  // [m,n], each row scaled to unit L2 norm
    ClampMin,         // max(x, attrs.scalar)
};

const char* op_name(Op op);

struct OpAttrs {
    double scalar = 0.0;    // Scale factor, Shift amount, LeakyRelu slope, ClampMin floor
    std::size_t rows = 0;   // BroadcastRow target row count
};

/// A named trainable tensor with a process-unique id. Move-only so that a
/// gradient map key always refers to exactly one live tensor.
struct Parameter {
    std::uint64_t id;
    std::string name;
    Tensor value;

    Parameter(std::string param_name, Tensor initial)
        : id(fresh_id()), name(std::move(param_name)), value(std::move(initial)) {}
    Parameter(const Parameter&) = delete;
    Parameter& operator=(const Parameter&) = delete;
    Parameter(Parameter&&) = default;
    Parameter& operator=(Parameter&&) = default;

    static std::uint64_t fresh_id() {
        static std::atomic<std::uint64_t> counter{1};
        return counter.fetch_add(1);
    }
};

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    std::uint32_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool valid() const { return tape != nullptr; }
};

/// Result of a backward pass: one gradient tensor per tracked node,
/// zero-filled for tracked leaves that do not reach the root.
class Gradients {
  public:
    const Tensor& of(Var v) const;
    bool has(Var v) const;
    /// parameter id -> gradient, for every parameter leaf on the tape.
    const std::unordered_map<std::uint64_t, const Tensor*>& by_param() const { return by_param_; }
    const Tensor& of_param(const Parameter& p) const;

  private:
    friend class Tape;
    const Tape* tape_ = nullptr;
    std::vector<Tensor> grads_;          // indexed by node id; empty tensor = none
    std::unordered_map<std::uint64_t, const Tensor*> by_param_;
};

/// Define-by-run gradient tape. Nodes form a DAG in creation order; a tape
/// and its Vars are confined to one thread.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Record a constant or tracked input tensor.
    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var scalar(double v) { return leaf(Tensor::scalar(v), false); }

    /// Record a parameter leaf; tracked unless `track` is false.
    Var param(const Parameter& p, bool track = true);

    /// Apply a primitive; records a node whenever any input is tracked
    /// (leaves are always recorded so their values stay addressable).
    Var apply(Op op, std::span<const Var> inputs, OpAttrs attrs = {});
    Var apply(Op op, std::initializer_list<Var> inputs, OpAttrs attrs = {}) {
        return apply(op, std::span<const Var>(inputs.begin(), inputs.size()), attrs);
    }

    /// Reverse-mode sweep from a scalar root. Each tracked leaf receives
    /// dRoot/dLeaf; tracked leaves off the root's DAG receive zeros.
    Gradients backward(Var root) const;

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    bool tracked(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Op op = Op::Leaf;
        std::array<std::uint32_t, 2> in{0, 0};
        std::uint8_t n_in = 0;
        bool requires_grad = false;
        OpAttrs attrs;
        Tensor value;
        Tensor saved;  // per-op intermediate needed by the derivative rule
        std::uint64_t param_id = 0;
    };

    Tensor eval(Op op, std::span<const Var> inputs, OpAttrs& attrs, Tensor& saved) const;
    void backprop_node(const Node& node, const Tensor& out_grad, Gradients& g) const;

    std::vector<Node> nodes_;
    std::unordered_map<std::uint64_t, std::uint32_t> param_nodes_;
    friend class Gradients;
};

// ---- primitive sugar -------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var shift(Var a, double c);
Var vexp(Var a);
Var vlog(Var a);
Var sigmoid(Var a);
Var vtanh(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope = 0.2);
Var softplus(Var a);
Var square(Var a);
Var vsqrt(Var a);
Var reciprocal(Var a);
Var mean(Var a);
Var vsum(Var a);
Var broadcast_row(Var a, std::size_t rows);
Var l2_normalize_rows(Var a);
Var clamp_min(Var a, double floor);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }

inline const Tensor& Var::value() const { return tape->value(*this); }

/// Numerically stable scalar kernels shared by the tape and plain-math code.
double stable_sigmoid(double x);
double stable_softplus(double x);

}  // namespace ganlab
