#include "fabcap/nn/tape.hpp"

#include "fabcap/nn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fabcap::nn
{

namespace
{

std::string shape_str(const Matrix& m)
{
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

void require_same(const Matrix& a, const Matrix& b, const char* op)
{
    if (!a.same_shape(b))
    {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
}

void require_segments(const std::vector<int>& seg, std::size_t rows, std::size_t segments, const char* op)
{
    if (seg.size() != rows)
    {
        throw std::invalid_argument(std::string(op) + ": segment vector length does not match rows");
    }
    for (int s : seg)
    {
        if (s < 0 || static_cast<std::size_t>(s) >= segments)
        {
            throw std::invalid_argument(std::string(op) + ": segment id out of range");
        }
    }
}

double stable_sigmoid(double x)
{
    if (x >= 0.0)
    {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_log_sigmoid(double x)
{
    // log(sigmoid(x)) = -softplus(-x)
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

} // namespace

std::size_t ParamStore::add(std::string name, Matrix init)
{
    params_.push_back(Param{std::move(name), std::move(init)});
    return params_.size() - 1;
}

std::size_t ParamStore::scalar_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& p : params_)
    {
        n += p.value.size();
    }
    return n;
}

Gradients::Gradients(const ParamStore& params)
{
    grads.reserve(params.size());
    for (const auto& p : params)
    {
        grads.emplace_back(p.value.rows, p.value.cols);
    }
}

void Gradients::zero()
{
    for (auto& g : grads)
    {
        g.fill(0.0);
    }
}

void Gradients::add(const Gradients& other)
{
    if (other.grads.size() != grads.size())
    {
        throw std::invalid_argument("Gradients::add: buffer count mismatch");
    }
    for (std::size_t i = 0; i < grads.size(); ++i)
    {
        require_same(grads[i], other.grads[i], "Gradients::add");
        kernels::axpy(1.0, other.grads[i].data, grads[i].data);
    }
}

void Gradients::scale(double s)
{
    for (auto& g : grads)
    {
        for (auto& x : g.data)
        {
            x *= s;
        }
    }
}

double Gradients::global_norm() const
{
    double sq = 0.0;
    for (const auto& g : grads)
    {
        sq += kernels::dot(g.data, g.data);
    }
    return std::sqrt(sq);
}

bool Gradients::all_finite() const
{
    for (const auto& g : grads)
    {
        for (double x : g.data)
        {
            if (!std::isfinite(x))
            {
                return false;
            }
        }
    }
    return true;
}

double clip_global_norm(Gradients& g, double max_norm)
{
    const double norm = g.global_norm();
    if (max_norm > 0.0 && norm > max_norm)
    {
        g.scale(max_norm / norm);
    }
    return norm;
}

Var Tape::push(Node node)
{
    if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max() - 1)
    {
        throw std::length_error("Tape: too many nodes");
    }
    nodes_.push_back(std::move(node));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const
{
    if (!v.valid() || v.id >= nodes_.size())
    {
        throw std::out_of_range("Tape: invalid variable");
    }
    return nodes_[v.id];
}

const Matrix& Tape::value(Var v) const
{
    const Node& n = node(v);
    if (n.op == OpTag::param)
    {
        return (*params_)[n.param].value;
    }
    return n.value;
}

double Tape::scalar(Var v) const
{
    const Matrix& m = value(v);
    if (m.size() != 1)
    {
        throw std::invalid_argument("Tape::scalar: value is " + shape_str(m));
    }
    return m.data[0];
}

Var Tape::constant(Matrix m)
{
    Node n;
    n.op = OpTag::constant;
    n.value = std::move(m);
    return push(std::move(n));
}

Var Tape::param(std::size_t index)
{
    if (params_ == nullptr || index >= params_->size())
    {
        throw std::out_of_range("Tape::param: no such parameter");
    }
    Node n;
    n.op = OpTag::param;
    n.param = index;
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b)
{
    const Matrix& va = value(a);
    const Matrix& vb = value(b);
    if (va.cols != vb.rows)
    {
        throw std::invalid_argument("matmul: shape mismatch " + shape_str(va) + " * " + shape_str(vb));
    }
    Node n;
    n.op = OpTag::matmul;
    n.a = a;
    n.b = b;
    n.value = Matrix(va.rows, vb.cols);
    kernels::active().gemm_nn(va.rows, vb.cols, va.cols, va.data.data(), vb.data.data(), n.value.data.data());
    return push(std::move(n));
}

Var Tape::add(Var a, Var b)
{
    const Matrix& va = value(a);
    const Matrix& vb = value(b);
    require_same(va, vb, "add");
    Node n;
    n.op = OpTag::add;
    n.a = a;
    n.b = b;
    n.value = va;
    for (std::size_t i = 0; i < vb.size(); ++i)
    {
        n.value.data[i] += vb.data[i];
    }
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b)
{
    const Matrix& va = value(a);
    const Matrix& vb = value(b);
    require_same(va, vb, "sub");
    Node n;
    n.op = OpTag::sub;
    n.a = a;
    n.b = b;
    n.value = va;
    for (std::size_t i = 0; i < vb.size(); ++i)
    {
        n.value.data[i] -= vb.data[i];
    }
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b)
{
    const Matrix& va = value(a);
    const Matrix& vb = value(b);
    require_same(va, vb, "mul");
    Node n;
    n.op = OpTag::mul;
    n.a = a;
    n.b = b;
    n.value = va;
    for (std::size_t i = 0; i < vb.size(); ++i)
    {
        n.value.data[i] *= vb.data[i];
    }
    return push(std::move(n));
}

Var Tape::add_row(Var a, Var bias)
{
    const Matrix& va = value(a);
    const Matrix& vb = value(bias);
    if (vb.rows != 1 || vb.cols != va.cols)
    {
        throw std::invalid_argument("add_row: bias " + shape_str(vb) + " does not fit " + shape_str(va));
    }
    Node n;
    n.op = OpTag::add_row;
    n.a = a;
    n.b = bias;
    n.value = va;
    for (std::size_t r = 0; r < va.rows; ++r)
    {
        kernels::axpy(1.0, vb.data, n.value.row(r));
    }
    return push(std::move(n));
}

Var Tape::scale(Var a, double s)
{
    Node n;
    n.op = OpTag::scale;
    n.a = a;
    n.alpha = s;
    n.value = value(a);
    for (auto& x : n.value.data)
    {
        x *= s;
    }
    return push(std::move(n));
}

Var Tape::add_scalar(Var a, double s)
{
    Node n;
    n.op = OpTag::add_scalar;
    n.a = a;
    n.value = value(a);
    for (auto& x : n.value.data)
    {
        x += s;
    }
    return push(std::move(n));
}

#define FABCAP_UNARY(NAME, TAG, EXPR)                                                                                  \
    Var Tape::NAME(Var a)                                                                                              \
    {                                                                                                                  \
        Node n;                                                                                                        \
        n.op = OpTag::TAG;                                                                                             \
        n.a = a;                                                                                                       \
        n.value = value(a);                                                                                            \
        for (auto& x : n.value.data)                                                                                   \
        {                                                                                                              \
            x = (EXPR);                                                                                                \
        }                                                                                                              \
        return push(std::move(n));                                                                                     \
    }

FABCAP_UNARY(tanh, tanh, std::tanh(x))
FABCAP_UNARY(sigmoid, sigmoid, stable_sigmoid(x))
FABCAP_UNARY(log_sigmoid, log_sigmoid, stable_log_sigmoid(x))
FABCAP_UNARY(exp, exp, std::exp(x))
FABCAP_UNARY(log, log, std::log(x))
FABCAP_UNARY(square, square, x* x)

#undef FABCAP_UNARY

Var Tape::leaky_relu(Var a, double slope)
{
    Node n;
    n.op = OpTag::leaky_relu;
    n.a = a;
    n.alpha = slope;
    n.value = value(a);
    for (auto& x : n.value.data)
    {
        x = x > 0.0 ? x : slope * x;
    }
    return push(std::move(n));
}

Var Tape::concat_cols(std::span<const Var> parts)
{
    if (parts.empty())
    {
        throw std::invalid_argument("concat_cols: no inputs");
    }
    const std::size_t rows = value(parts[0]).rows;
    std::size_t cols = 0;
    for (Var p : parts)
    {
        if (value(p).rows != rows)
        {
            throw std::invalid_argument("concat_cols: row count mismatch");
        }
        cols += value(p).cols;
    }
    Node n;
    n.op = OpTag::concat_cols;
    n.inputs.assign(parts.begin(), parts.end());
    n.value = Matrix(rows, cols);
    std::size_t off = 0;
    for (Var p : parts)
    {
        const Matrix& vp = value(p);
        for (std::size_t r = 0; r < rows; ++r)
        {
            std::copy(vp.row(r).begin(), vp.row(r).end(), n.value.row(r).begin() + static_cast<std::ptrdiff_t>(off));
        }
        off += vp.cols;
    }
    return push(std::move(n));
}

Var Tape::concat_rows(std::span<const Var> parts)
{
    if (parts.empty())
    {
        throw std::invalid_argument("concat_rows: no inputs");
    }
    const std::size_t cols = value(parts[0]).cols;
    std::size_t rows = 0;
    for (Var p : parts)
    {
        if (value(p).cols != cols)
        {
            throw std::invalid_argument("concat_rows: column count mismatch");
        }
        rows += value(p).rows;
    }
    Node n;
    n.op = OpTag::concat_rows;
    n.inputs.assign(parts.begin(), parts.end());
    n.value = Matrix(rows, cols);
    auto out = n.value.data.begin();
    for (Var p : parts)
    {
        out = std::copy(value(p).data.begin(), value(p).data.end(), out);
    }
    return push(std::move(n));
}

Var Tape::gather_rows(Var a, std::vector<int> index)
{
    const Matrix& va = value(a);
    Node n;
    n.op = OpTag::gather_rows;
    n.a = a;
    n.value = Matrix(index.size(), va.cols);
    for (std::size_t i = 0; i < index.size(); ++i)
    {
        const int src = index[i];
        if (src >= static_cast<int>(va.rows))
        {
            throw std::invalid_argument("gather_rows: index out of range");
        }
        if (src >= 0)
        {
            auto from = va.row(static_cast<std::size_t>(src));
            std::copy(from.begin(), from.end(), n.value.row(i).begin());
        }
    }
    n.index = std::move(index);
    return push(std::move(n));
}

Var Tape::segment_sum(Var a, std::vector<int> segment, std::size_t segments)
{
    const Matrix& va = value(a);
    require_segments(segment, va.rows, segments, "segment_sum");
    Node n;
    n.op = OpTag::segment_sum;
    n.a = a;
    n.segments = segments;
    n.value = Matrix(segments, va.cols);
    for (std::size_t e = 0; e < va.rows; ++e)
    {
        kernels::axpy(1.0, va.row(e), n.value.row(static_cast<std::size_t>(segment[e])));
    }
    n.index = std::move(segment);
    return push(std::move(n));
}

Var Tape::segment_mean(Var a, std::vector<int> segment, std::size_t segments)
{
    const Matrix& va = value(a);
    require_segments(segment, va.rows, segments, "segment_mean");
    Node n;
    n.op = OpTag::segment_mean;
    n.a = a;
    n.segments = segments;
    n.value = Matrix(segments, va.cols);
    std::vector<double> count(segments, 0.0);
    for (int s : segment)
    {
        count[static_cast<std::size_t>(s)] += 1.0;
    }
    for (std::size_t e = 0; e < va.rows; ++e)
    {
        const auto s = static_cast<std::size_t>(segment[e]);
        kernels::axpy(1.0 / count[s], va.row(e), n.value.row(s));
    }
    n.index = std::move(segment);
    return push(std::move(n));
}

Var Tape::segment_softmax(Var scores, std::vector<int> segment, std::size_t segments)
{
    const Matrix& vs = value(scores);
    if (vs.cols != 1)
    {
        throw std::invalid_argument("segment_softmax: scores must be a column vector");
    }
    require_segments(segment, vs.rows, segments, "segment_softmax");
    std::vector<double> mx(segments, -std::numeric_limits<double>::infinity());
    for (std::size_t e = 0; e < vs.rows; ++e)
    {
        auto s = static_cast<std::size_t>(segment[e]);
        mx[s] = std::max(mx[s], vs.data[e]);
    }
    Node n;
    n.op = OpTag::segment_softmax;
    n.a = scores;
    n.segments = segments;
    n.value = Matrix(vs.rows, 1);
    std::vector<double> z(segments, 0.0);
    for (std::size_t e = 0; e < vs.rows; ++e)
    {
        auto s = static_cast<std::size_t>(segment[e]);
        n.value.data[e] = std::exp(vs.data[e] - mx[s]);
        z[s] += n.value.data[e];
    }
    for (std::size_t e = 0; e < vs.rows; ++e)
    {
        n.value.data[e] /= z[static_cast<std::size_t>(segment[e])];
    }
    n.index = std::move(segment);
    return push(std::move(n));
}

Var Tape::mul_col(Var a, Var s)
{
    const Matrix& va = value(a);
    const Matrix& vs = value(s);
    if (vs.cols != 1 || vs.rows != va.rows)
    {
        throw std::invalid_argument("mul_col: " + shape_str(vs) + " does not scale " + shape_str(va));
    }
    Node n;
    n.op = OpTag::mul_col;
    n.a = a;
    n.b = s;
    n.value = va;
    for (std::size_t r = 0; r < va.rows; ++r)
    {
        for (auto& x : n.value.row(r))
        {
            x *= vs.data[r];
        }
    }
    return push(std::move(n));
}

Var Tape::row_dot(Var a, Var b)
{
    const Matrix& va = value(a);
    const Matrix& vb = value(b);
    require_same(va, vb, "row_dot");
    Node n;
    n.op = OpTag::row_dot;
    n.a = a;
    n.b = b;
    n.value = Matrix(va.rows, 1);
    for (std::size_t r = 0; r < va.rows; ++r)
    {
        n.value.data[r] = kernels::dot(va.row(r), vb.row(r));
    }
    return push(std::move(n));
}

Var Tape::mean_rows(Var a)
{
    const Matrix& va = value(a);
    if (va.rows == 0)
    {
        throw std::invalid_argument("mean_rows: no rows");
    }
    Node n;
    n.op = OpTag::mean_rows;
    n.a = a;
    n.value = Matrix(1, va.cols);
    for (std::size_t r = 0; r < va.rows; ++r)
    {
        kernels::axpy(1.0, va.row(r), n.value.data);
    }
    for (auto& x : n.value.data)
    {
        x /= static_cast<double>(va.rows);
    }
    return push(std::move(n));
}

Var Tape::sum(Var a)
{
    const Matrix& va = value(a);
    double s = 0.0;
    for (double x : va.data)
    {
        s += x;
    }
    Node n;
    n.op = OpTag::sum;
    n.a = a;
    n.value = Matrix::scalar(s);
    return push(std::move(n));
}

Var Tape::mean(Var a)
{
    const std::size_t count = value(a).size();
    if (count == 0)
    {
        throw std::invalid_argument("mean: empty input");
    }
    return scale(sum(a), 1.0 / static_cast<double>(count));
}

Var Tape::minimum(Var a, Var b)
{
    const Matrix& va = value(a);
    const Matrix& vb = value(b);
    require_same(va, vb, "minimum");
    Node n;
    n.op = OpTag::minimum;
    n.a = a;
    n.b = b;
    n.value = va;
    for (std::size_t i = 0; i < va.size(); ++i)
    {
        n.value.data[i] = std::min(va.data[i], vb.data[i]);
    }
    return push(std::move(n));
}

Var Tape::clamp(Var a, double lo, double hi)
{
    if (!(lo <= hi))
    {
        throw std::invalid_argument("clamp: lo > hi");
    }
    Node n;
    n.op = OpTag::clamp;
    n.a = a;
    n.alpha = lo;
    n.beta = hi;
    n.value = value(a);
    for (auto& x : n.value.data)
    {
        x = std::clamp(x, lo, hi);
    }
    return push(std::move(n));
}

Matrix& Tape::grad_of(Var v)
{
    Node& n = nodes_[v.id];
    const Matrix& val = value(v);
    if (!n.grad.same_shape(val))
    {
        n.grad = Matrix(val.rows, val.cols);
    }
    return n.grad;
}

void Tape::backward(Var loss, Gradients& out)
{
    const Matrix& lv = value(loss);
    if (lv.size() != 1)
    {
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(lv));
    }
    if (params_ != nullptr && out.grads.size() != params_->size())
    {
        throw std::invalid_argument("backward: gradient buffer does not match parameter store");
    }
    for (auto& n : nodes_)
    {
        n.grad = Matrix();
    }
    grad_of(loss).data[0] = 1.0;
    for (std::uint32_t id = loss.id + 1; id-- > 0;)
    {
        Node& n = nodes_[id];
        if (n.grad.empty())
        {
            continue;
        }
        if (n.op == OpTag::param)
        {
            kernels::axpy(1.0, n.grad.data, out.grads[n.param].data);
            continue;
        }
        backprop_node(id);
    }
}

void Tape::backprop_node(std::uint32_t id)
{
    // nodes_ may not reallocate during backward, so references stay valid.
    Node& n = nodes_[id];
    const Matrix& g = n.grad;
    const auto& kt = kernels::active();

    switch (n.op)
    {
    case OpTag::constant:
    case OpTag::param:
        break;
    case OpTag::matmul: {
        const Matrix& va = value(n.a);
        const Matrix& vb = value(n.b);
        // dA += G * B^T ; dB += A^T * G
        kt.gemm_nt(va.rows, va.cols, vb.cols, g.data.data(), vb.data.data(), grad_of(n.a).data.data());
        kt.gemm_tn(va.rows, vb.cols, va.cols, va.data.data(), g.data.data(), grad_of(n.b).data.data());
        break;
    }
    case OpTag::add:
        kernels::axpy(1.0, g.data, grad_of(n.a).data);
        kernels::axpy(1.0, g.data, grad_of(n.b).data);
        break;
    case OpTag::sub:
        kernels::axpy(1.0, g.data, grad_of(n.a).data);
        kernels::axpy(-1.0, g.data, grad_of(n.b).data);
        break;
    case OpTag::mul: {
        const Matrix& va = value(n.a);
        const Matrix& vb = value(n.b);
        Matrix& ga = grad_of(n.a);
        Matrix& gb = grad_of(n.b);
        for (std::size_t i = 0; i < g.size(); ++i)
        {
            ga.data[i] += g.data[i] * vb.data[i];
            gb.data[i] += g.data[i] * va.data[i];
        }
        break;
    }
    case OpTag::add_row: {
        kernels::axpy(1.0, g.data, grad_of(n.a).data);
        Matrix& gb = grad_of(n.b);
        for (std::size_t r = 0; r < g.rows; ++r)
        {
            kernels::axpy(1.0, g.row(r), gb.data);
        }
        break;
    }
    case OpTag::scale:
        kernels::axpy(n.alpha, g.data, grad_of(n.a).data);
        break;
    case OpTag::add_scalar:
        kernels::axpy(1.0, g.data, grad_of(n.a).data);
        break;
    case OpTag::tanh: {
        Matrix& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
        {
            const double y = n.value.data[i];
            ga.data[i] += g.data[i] * (1.0 - y * y);
        }
        break;
    }
    case OpTag::sigmoid: {
        Matrix& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
        {
            const double y = n.value.data[i];
            ga.data[i] += g.data[i] * y * (1.0 - y);
        }
        break;
    }
    case OpTag::log_sigmoid: {
        const Matrix& va = value(n.a);
        Matrix& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
        {
            // d/dx log sigmoid(x) = sigmoid(-x)
            ga.data[i] += g.data[i] * stable_sigmoid(-va.data[i]);
        }
        break;
    }
    case OpTag::leaky_relu: {
        const Matrix& va = value(n.a);
        Matrix& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
        {
            ga.data[i] += g.data[i] * (va.data[i] > 0.0 ? 1.0 : n.alpha);
        }
        break;
    }
    case OpTag::exp: {
        Matrix& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
        {
            ga.data[i] += g.data[i] * n.value.data[i];
        }
        break;
    }
    case OpTag::log: {
        const Matrix& va = value(n.a);
        Matrix& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
        {
            ga.data[i] += g.data[i] / va.data[i];
        }
        break;
    }
    case OpTag::square: {
        const Matrix& va = value(n.a);
        Matrix& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
        {
            ga.data[i] += 2.0 * g.data[i] * va.data[i];
        }
        break;
    }
    case OpTag::concat_cols: {
        std::size_t off = 0;
        for (Var p : n.inputs)
        {
            Matrix& gp = grad_of(p);
            for (std::size_t r = 0; r < g.rows; ++r)
            {
                kernels::axpy(1.0, g.row(r).subspan(off, gp.cols), gp.row(r));
            }
            off += gp.cols;
        }
        break;
    }
    case OpTag::concat_rows: {
        std::size_t off = 0;
        for (Var p : n.inputs)
        {
            Matrix& gp = grad_of(p);
            kernels::axpy(1.0, std::span<const double>(g.data).subspan(off, gp.size()), gp.data);
            off += gp.size();
        }
        break;
    }
    case OpTag::gather_rows: {
        Matrix& ga = grad_of(n.a);
        for (std::size_t i = 0; i < n.index.size(); ++i)
        {
            if (n.index[i] >= 0)
            {
                kernels::axpy(1.0, g.row(i), ga.row(static_cast<std::size_t>(n.index[i])));
            }
        }
        break;
    }
    case OpTag::segment_sum: {
        Matrix& ga = grad_of(n.a);
        for (std::size_t e = 0; e < n.index.size(); ++e)
        {
            kernels::axpy(1.0, g.row(static_cast<std::size_t>(n.index[e])), ga.row(e));
        }
        break;
    }
    case OpTag::segment_mean: {
        std::vector<double> count(n.segments, 0.0);
        for (int s : n.index)
        {
            count[static_cast<std::size_t>(s)] += 1.0;
        }
        Matrix& ga = grad_of(n.a);
        for (std::size_t e = 0; e < n.index.size(); ++e)
        {
            const auto s = static_cast<std::size_t>(n.index[e]);
            kernels::axpy(1.0 / count[s], g.row(s), ga.row(e));
        }
        break;
    }
    case OpTag::segment_softmax: {
        std::vector<double> dotg(n.segments, 0.0);
        for (std::size_t e = 0; e < n.index.size(); ++e)
        {
            dotg[static_cast<std::size_t>(n.index[e])] += g.data[e] * n.value.data[e];
        }
        Matrix& ga = grad_of(n.a);
        for (std::size_t e = 0; e < n.index.size(); ++e)
        {
            const double y = n.value.data[e];
            ga.data[e] += y * (g.data[e] - dotg[static_cast<std::size_t>(n.index[e])]);
        }
        break;
    }
    case OpTag::mul_col: {
        const Matrix& va = value(n.a);
        const Matrix& vs = value(n.b);
        Matrix& ga = grad_of(n.a);
        Matrix& gs = grad_of(n.b);
        for (std::size_t r = 0; r < g.rows; ++r)
        {
            kernels::axpy(vs.data[r], g.row(r), ga.row(r));
            gs.data[r] += kernels::dot(g.row(r), va.row(r));
        }
        break;
    }
    case OpTag::row_dot: {
        const Matrix& va = value(n.a);
        const Matrix& vb = value(n.b);
        Matrix& ga = grad_of(n.a);
        Matrix& gb = grad_of(n.b);
        for (std::size_t r = 0; r < g.rows; ++r)
        {
            kernels::axpy(g.data[r], vb.row(r), ga.row(r));
            kernels::axpy(g.data[r], va.row(r), gb.row(r));
        }
        break;
    }
    case OpTag::mean_rows: {
        Matrix& ga = grad_of(n.a);
        const double inv = 1.0 / static_cast<double>(ga.rows);
        for (std::size_t r = 0; r < ga.rows; ++r)
        {
            kernels::axpy(inv, g.data, ga.row(r));
        }
        break;
    }
    case OpTag::sum: {
        Matrix& ga = grad_of(n.a);
        for (auto& x : ga.data)
        {
            x += g.data[0];
        }
        break;
    }
    case OpTag::minimum: {
        const Matrix& va = value(n.a);
        const Matrix& vb = value(n.b);
        Matrix& ga = grad_of(n.a);
        Matrix& gb = grad_of(n.b);
        for (std::size_t i = 0; i < g.size(); ++i)
        {
            if (va.data[i] <= vb.data[i])
            {
                ga.data[i] += g.data[i];
            }
            else
            {
                gb.data[i] += g.data[i];
            }
        }
        break;
    }
    case OpTag::clamp: {
        const Matrix& va = value(n.a);
        Matrix& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
        {
            if (va.data[i] > n.alpha && va.data[i] < n.beta)
            {
                ga.data[i] += g.data[i];
            }
        }
        break;
    }
    }
}

void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
               const AdamConfig& cfg, long t)
{
    if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
    {
        throw std::invalid_argument("adam_step: size mismatch");
    }
    if (t < 1)
    {
        throw std::invalid_argument("adam_step: step count must be >= 1");
    }
    const double td = static_cast<double>(t);
    const double step = cfg.lr * std::sqrt(1.0 - std::pow(cfg.beta2, td)) / (1.0 - std::pow(cfg.beta1, td));
    for (std::size_t i = 0; i < params.size(); ++i)
    {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        params[i] -= step * m[i] / (std::sqrt(v[i]) + cfg.eps);
    }
}

Adam::Adam(const ParamStore& params, std::vector<std::size_t> indices, AdamConfig cfg)
    : indices_(std::move(indices)), cfg_(cfg)
{
    for (std::size_t i : indices_)
    {
        if (i >= params.size())
        {
            throw std::out_of_range("Adam: parameter index out of range");
        }
        m_.emplace_back(params[i].value.rows, params[i].value.cols);
        v_.emplace_back(params[i].value.rows, params[i].value.cols);
    }
}

void Adam::step(ParamStore& params, const Gradients& grads)
{
    ++t_;
    for (std::size_t k = 0; k < indices_.size(); ++k)
    {
        const std::size_t i = indices_[k];
        adam_step(params[i].value.data, grads.grads[i].data, m_[k].data, v_[k].data, cfg_, t_);
    }
}

} // namespace fabcap::nn
