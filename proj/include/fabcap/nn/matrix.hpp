#pragma once

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace fabcap::nn
{

// Dense row-major matrix of doubles. Column vectors are n x 1, scalars 1 x 1.
struct Matrix
{
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::initializer_list<double> values)
        : rows(r), cols(c), data(values)
    {
        if (data.size() != r * c)
        {
            throw std::invalid_argument("Matrix: initializer size does not match shape");
        }
    }

    static Matrix scalar(double v) { return Matrix(1, 1, v); }

    std::size_t size() const noexcept { return data.size(); }
    bool empty() const noexcept { return data.empty(); }
    bool same_shape(const Matrix& o) const noexcept { return rows == o.rows && cols == o.cols; }

    double& operator()(std::size_t r, std::size_t c)
    {
        assert(r < rows && c < cols);
        return data[r * cols + c];
    }
    double operator()(std::size_t r, std::size_t c) const
    {
        assert(r < rows && c < cols);
        return data[r * cols + c];
    }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    void fill(double v)
    {
        for (auto& x : data)
        {
            x = v;
        }
    }

    bool operator==(const Matrix&) const = default;
};

} // namespace fabcap::nn
