#pragma once

// Tape-based reverse-mode differentiation over dense double matrices.
//
// A Tape records one forward pass. Values are never mutated after they are
// recorded; backward() walks the nodes in reverse creation order (which is a
// reverse topological order by construction) and accumulates parameter
// gradients into a caller-owned Gradients buffer. Shape errors are raised
// while recording, never during backward.

#include "fabcap/nn/matrix.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace fabcap::nn
{

struct Param
{
    std::string name;
    Matrix value;
};

class ParamStore
{
public:
    std::size_t add(std::string name, Matrix init);

    std::size_t size() const noexcept { return params_.size(); }
    std::size_t scalar_count() const noexcept;

    Param& operator[](std::size_t i) { return params_[i]; }
    const Param& operator[](std::size_t i) const { return params_[i]; }

    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Param> params_;
};

// Gradient buffers shaped like a ParamStore. Worker-local; reduced by add().
struct Gradients
{
    std::vector<Matrix> grads;

    Gradients() = default;
    explicit Gradients(const ParamStore& params);

    void zero();
    void add(const Gradients& other);
    void scale(double s);
    double global_norm() const;
    bool all_finite() const;
};

// Rescales so the global L2 norm is at most max_norm. Returns the norm before clipping.
double clip_global_norm(Gradients& g, double max_norm);

struct Var
{
    std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
    bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

enum class OpTag : std::uint8_t
{
    constant,
    param,
    matmul,
    add,
    sub,
    mul,
    add_row,
    scale,
    add_scalar,
    tanh,
    sigmoid,
    log_sigmoid,
    leaky_relu,
    exp,
    log,
    square,
    concat_cols,
    concat_rows,
    gather_rows,
    segment_sum,
    segment_mean,
    segment_softmax,
    mul_col,
    row_dot,
    mean_rows,
    sum,
    minimum,
    clamp,
};

class Tape
{
public:
    explicit Tape(const ParamStore* params = nullptr) : params_(params) {}

    Var constant(Matrix m);
    Var param(std::size_t index);

    const Matrix& value(Var v) const;
    double scalar(Var v) const;
    std::size_t node_count() const noexcept { return nodes_.size(); }

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    // a[n x m] + bias[1 x m] broadcast over rows
    Var add_row(Var a, Var bias);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var log_sigmoid(Var a);
    Var leaky_relu(Var a, double slope);
    Var exp(Var a);
    Var log(Var a);
    Var square(Var a);
    Var concat_cols(std::span<const Var> parts);
    Var concat_rows(std::span<const Var> parts);
    // Row i of the result is row index[i] of a, or zeros when index[i] < 0.
    Var gather_rows(Var a, std::vector<int> index);
    // Rows of a[e x m] summed into segment[e] of an [segments x m] result.
    Var segment_sum(Var a, std::vector<int> segment, std::size_t segments);
    // As segment_sum, divided by segment size; empty segments are zero rows.
    Var segment_mean(Var a, std::vector<int> segment, std::size_t segments);
    // Softmax of a column vector within each segment.
    Var segment_softmax(Var scores, std::vector<int> segment, std::size_t segments);
    // a[n x m] with row i scaled by s[i], s is [n x 1]
    Var mul_col(Var a, Var s);
    // [n x 1] of row-wise dot products
    Var row_dot(Var a, Var b);
    Var mean_rows(Var a);
    Var sum(Var a);
    Var mean(Var a);
    Var minimum(Var a, Var b);
    Var clamp(Var a, double lo, double hi);

    // Accumulates d(loss)/d(param) into out. loss must be 1 x 1.
    void backward(Var loss, Gradients& out);

private:
    struct Node
    {
        OpTag op = OpTag::constant;
        Matrix value;
        Matrix grad;
        Var a;
        Var b;
        std::vector<Var> inputs;
        std::vector<int> index;
        std::size_t segments = 0;
        std::size_t param = 0;
        double alpha = 0.0;
        double beta = 0.0;
    };

    Var push(Node node);
    const Node& node(Var v) const;
    Matrix& grad_of(Var v);
    void backprop_node(std::uint32_t id);

    const ParamStore* params_ = nullptr;
    std::vector<Node> nodes_;
};

struct AdamConfig
{
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update on a flat array; t is the 1-based step count.
// Uses the folded step size lr * sqrt(1 - beta2^t) / (1 - beta1^t).
void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
               const AdamConfig& cfg, long t);

// Adam state for a subset of the parameters in a store.
class Adam
{
public:
    Adam(const ParamStore& params, std::vector<std::size_t> indices, AdamConfig cfg);

    void step(ParamStore& params, const Gradients& grads);
    long steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return cfg_; }
    std::span<const std::size_t> indices() const noexcept { return indices_; }

private:
    std::vector<std::size_t> indices_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    AdamConfig cfg_;
    long t_ = 0;
};

} // namespace fabcap::nn
