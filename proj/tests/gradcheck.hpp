#pragma once

// Central finite-difference oracle for tape gradients. Test-only.

#include "fabcap/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace fabcap::testing
{

struct GradCheckResult
{
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t failed = 0;
    std::string worst;
};

// loss_fn records a forward pass on the tape and returns the scalar loss.
// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult gradcheck(nn::ParamStore& params, const std::function<nn::Var(nn::Tape&)>& loss_fn,
                                 double eps, double tol, double floor = 1e-7)
{
    nn::Gradients analytic(params);
    {
        nn::Tape tape(&params);
        nn::Var loss = loss_fn(tape);
        tape.backward(loss, analytic);
    }
    auto eval = [&] {
        nn::Tape tape(&params);
        return tape.scalar(loss_fn(tape));
    };

    GradCheckResult res;
    for (std::size_t p = 0; p < params.size(); ++p)
    {
        auto& values = params[p].value.data;
        for (std::size_t i = 0; i < values.size(); ++i)
        {
            const double orig = values[i];
            values[i] = orig + eps;
            const double up = eval();
            values[i] = orig - eps;
            const double down = eval();
            values[i] = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic.grads[p].data[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            ++res.checked;
            if (rel >= tol)
            {
                ++res.failed;
            }
            if (rel > res.max_rel_error)
            {
                res.max_rel_error = rel;
                res.worst = params[p].name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                            " numeric=" + std::to_string(numeric);
            }
        }
    }
    return res;
}

} // namespace fabcap::testing
