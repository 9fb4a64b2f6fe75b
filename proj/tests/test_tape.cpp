#include "doctest.h"

#include "gradcheck.hpp"

#include "fabcap/nn/kernels.hpp"
#include "fabcap/nn/tape.hpp"

#include <cmath>
#include <random>

using namespace fabcap::nn;
using fabcap::testing::gradcheck;

namespace
{

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0)
{
    std::uniform_real_distribution<double> u(-scale, scale);
    Matrix m(r, c);
    for (auto& x : m.data)
    {
        x = u(rng);
    }
    return m;
}

} // namespace

TEST_CASE("linear loss gradient is the outer product with the input")
{
    ParamStore ps;
    const auto w = ps.add("W", Matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    Tape tape(&ps);
    Var x = tape.constant(Matrix(3, 1, {0.5, -1.0, 2.0}));
    Var loss = tape.sum(tape.matmul(tape.param(w), x));
    Gradients g(ps);
    tape.backward(loss, g);
    // d/dW sum(W x) = 1 * x^T for each row
    CHECK(g.grads[w] == Matrix(2, 3, {0.5, -1.0, 2.0, 0.5, -1.0, 2.0}));
}

TEST_CASE("sigmoid derivative at zero is one quarter")
{
    ParamStore ps;
    const auto z = ps.add("z", Matrix::scalar(0.0));
    Tape tape(&ps);
    Var loss = tape.sigmoid(tape.param(z));
    CHECK(tape.scalar(loss) == doctest::Approx(0.5));
    Gradients g(ps);
    tape.backward(loss, g);
    CHECK(g.grads[z].data[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("unreachable parameters receive zero gradient")
{
    ParamStore ps;
    const auto used = ps.add("used", Matrix::scalar(2.0));
    const auto unused = ps.add("unused", Matrix(2, 2, 1.0));
    Tape tape(&ps);
    tape.param(unused);
    Var loss = tape.square(tape.param(used));
    Gradients g(ps);
    tape.backward(loss, g);
    CHECK(g.grads[used].data[0] == 4.0);
    for (double x : g.grads[unused].data)
    {
        CHECK(x == 0.0);
    }
}

TEST_CASE("shape errors surface at record time")
{
    Tape tape;
    Var a = tape.constant(Matrix(2, 3));
    Var b = tape.constant(Matrix(2, 3));
    CHECK_THROWS_AS(tape.matmul(a, b), std::invalid_argument);
    CHECK_THROWS_AS(tape.add(a, tape.constant(Matrix(3, 2))), std::invalid_argument);
    CHECK_THROWS_AS(tape.segment_sum(a, {0, 5}, 2), std::invalid_argument);
    Gradients none;
    CHECK_THROWS_AS(tape.backward(a, none), std::invalid_argument);
}

TEST_CASE("every primitive passes a finite-difference check in isolation")
{
    std::mt19937_64 rng(7);
    ParamStore ps;
    const auto a = ps.add("a", random_matrix(rng, 4, 3));
    const auto b = ps.add("b", random_matrix(rng, 3, 2));
    const auto c = ps.add("c", random_matrix(rng, 4, 3));
    const auto bias = ps.add("bias", random_matrix(rng, 1, 3));
    const auto s = ps.add("s", random_matrix(rng, 4, 1));
    const auto pos = ps.add("pos", Matrix(4, 3, {0.5, 1.2, 2.0, 0.7, 3.1, 0.9, 1.4, 0.6, 2.2, 1.1, 0.8, 1.9}));

    using Builder = std::function<Var(Tape&)>;
    const std::vector<std::pair<const char*, Builder>> cases = {
        {"matmul", [&](Tape& t) { return t.sum(t.tanh(t.matmul(t.param(a), t.param(b)))); }},
        {"add/sub/mul", [&](Tape& t) { return t.sum(t.mul(t.add(t.param(a), t.param(c)), t.sub(t.param(a), t.param(c)))); }},
        {"add_row", [&](Tape& t) { return t.sum(t.square(t.add_row(t.param(a), t.param(bias)))); }},
        {"scale/add_scalar", [&](Tape& t) { return t.sum(t.square(t.add_scalar(t.scale(t.param(a), -1.7), 0.3))); }},
        {"sigmoid", [&](Tape& t) { return t.sum(t.mul(t.sigmoid(t.param(a)), t.param(c))); }},
        {"log_sigmoid", [&](Tape& t) { return t.sum(t.mul(t.log_sigmoid(t.param(a)), t.param(c))); }},
        {"leaky_relu", [&](Tape& t) { return t.sum(t.mul(t.leaky_relu(t.param(a), 0.2), t.param(c))); }},
        {"exp/log", [&](Tape& t) { return t.sum(t.add(t.exp(t.param(a)), t.log(t.param(pos)))); }},
        {"concat", [&](Tape& t) {
             std::vector<Var> parts{t.param(a), t.param(s), t.param(c)};
             return t.sum(t.square(t.concat_cols(parts)));
         }},
        {"concat_rows", [&](Tape& t) {
             std::vector<Var> parts{t.param(a), t.param(c)};
             std::vector<Var> swapped{t.param(c), t.tanh(t.param(a))};
             return t.sum(t.mul(t.concat_rows(parts), t.concat_rows(swapped)));
         }},
        {"gather_rows", [&](Tape& t) { return t.sum(t.square(t.gather_rows(t.param(a), {2, -1, 0, 2, 3}))); }},
        {"segment_sum", [&](Tape& t) { return t.sum(t.square(t.segment_sum(t.param(a), {1, 0, 1, 2}, 4))); }},
        {"segment_mean", [&](Tape& t) { return t.sum(t.square(t.segment_mean(t.param(a), {1, 0, 1, 1}, 3))); }},
        {"segment_softmax", [&](Tape& t) {
             Var sm = t.segment_softmax(t.param(s), {0, 1, 0, 0}, 2);
             return t.sum(t.mul_col(t.param(a), sm));
         }},
        {"mul_col/row_dot", [&](Tape& t) { return t.sum(t.square(t.row_dot(t.mul_col(t.param(a), t.param(s)), t.param(c)))); }},
        {"mean_rows/mean", [&](Tape& t) { return t.mean(t.square(t.mean_rows(t.param(a)))); }},
        {"minimum", [&](Tape& t) { return t.sum(t.minimum(t.param(a), t.param(c))); }},
        {"clamp", [&](Tape& t) { return t.sum(t.square(t.clamp(t.param(a), -0.5, 0.5))); }},
    };
    for (const auto& [name, fn] : cases)
    {
        CAPTURE(name);
        const auto r = gradcheck(ps, fn, 1e-6, 1e-6);
        CAPTURE(r.worst);
        CHECK(r.failed == 0);
    }
}

TEST_CASE("random three-layer composite matches finite differences to 1e-6")
{
    std::mt19937_64 rng(99);
    ParamStore ps;
    const auto w1 = ps.add("w1", random_matrix(rng, 5, 8, 0.5));
    const auto b1 = ps.add("b1", random_matrix(rng, 1, 8, 0.1));
    const auto w2 = ps.add("w2", random_matrix(rng, 8, 8, 0.5));
    const auto b2 = ps.add("b2", random_matrix(rng, 1, 8, 0.1));
    const auto w3 = ps.add("w3", random_matrix(rng, 8, 1, 0.5));
    const Matrix x = random_matrix(rng, 6, 5);

    auto loss = [&](Tape& t) {
        Var h = t.tanh(t.add_row(t.matmul(t.constant(x), t.param(w1)), t.param(b1)));
        h = t.tanh(t.add_row(t.matmul(h, t.param(w2)), t.param(b2)));
        Var out = t.sigmoid(t.matmul(h, t.param(w3)));
        return t.mean(t.log(out));
    };
    const auto r = gradcheck(ps, loss, 1e-5, 1e-6);
    CAPTURE(r.worst);
    CHECK(r.failed == 0);
    CHECK(r.checked == ps.scalar_count());
}

TEST_CASE("backward is bitwise deterministic")
{
    std::mt19937_64 rng(3);
    ParamStore ps;
    const auto w = ps.add("w", random_matrix(rng, 16, 16));
    const Matrix x = random_matrix(rng, 9, 16);
    auto run = [&] {
        Tape t(&ps);
        Var loss = t.sum(t.tanh(t.matmul(t.constant(x), t.param(w))));
        Gradients g(ps);
        t.backward(loss, g);
        return g.grads[w];
    };
    CHECK(run() == run());
}

TEST_CASE("adam: zero gradient leaves parameters unchanged")
{
    std::vector<double> p{1.0, -2.0, 3.0};
    const std::vector<double> g{0.0, 0.0, 0.0};
    std::vector<double> m(3, 0.0), v(3, 0.0);
    for (long t = 1; t <= 10; ++t)
    {
        adam_step(p, g, m, v, AdamConfig{0.01}, t);
    }
    CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adam: first step applies the folded bias correction")
{
    std::vector<double> p{0.0};
    const std::vector<double> g{0.4};
    std::vector<double> m{0.0}, v{0.0};
    const AdamConfig cfg{0.1};
    adam_step(p, g, m, v, cfg, 1);
    const double factor = std::sqrt(1.0 - 0.999) / (1.0 - 0.9);
    const double expected = -cfg.lr * factor * (0.1 * 0.4) / (std::sqrt(0.001 * 0.16) + 1e-8);
    CHECK(p[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("adam: constant gradient converges to lr * sign(g) per step")
{
    std::vector<double> p{0.0, 0.0};
    const std::vector<double> g{3.0, -0.002};
    std::vector<double> m(2, 0.0), v(2, 0.0);
    const AdamConfig cfg{1e-3};
    std::vector<double> prev = p;
    for (long t = 1; t <= 5000; ++t)
    {
        prev = p;
        adam_step(p, g, m, v, cfg, t);
    }
    CHECK(p[0] - prev[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(p[1] - prev[1] == doctest::Approx(1e-3).epsilon(1e-4));
}

TEST_CASE("global norm clipping rescales only when above the limit")
{
    ParamStore ps;
    ps.add("a", Matrix(1, 2));
    Gradients g(ps);
    g.grads[0] = Matrix(1, 2, {3.0, 4.0});
    CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
    CHECK(g.grads[0].data[0] == 3.0);
    CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g.global_norm() == doctest::Approx(1.0));
}

TEST_CASE("gradient check holds under both kernel variants")
{
    std::mt19937_64 rng(11);
    ParamStore ps;
    const auto w = ps.add("w", random_matrix(rng, 12, 9, 0.4));
    const Matrix x = random_matrix(rng, 7, 12);
    auto loss = [&](Tape& t) { return t.sum(t.sigmoid(t.matmul(t.constant(x), t.param(w)))); };
    const auto before = kernels::active_isa();
    for (auto isa : {kernels::Isa::scalar, kernels::Isa::avx2})
    {
        if (!kernels::isa_supported(isa))
        {
            continue;
        }
        kernels::force_isa(isa);
        const auto r = gradcheck(ps, loss, 1e-5, 1e-6);
        CAPTURE(r.worst);
        CHECK(r.failed == 0);
    }
    kernels::force_isa(before);
}
