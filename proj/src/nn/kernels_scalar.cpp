#include "kernels_impl.hpp"

namespace fabcap::nn::kernels::detail
{

void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i)
    {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p)
        {
            const double aip = a[i * k + p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j)
            {
                crow[j] += aip * brow[j];
            }
        }
    }
}

double dot_scalar(std::size_t n, const double* x, const double* y)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        s += x[i] * y[i];
    }
    return s;
}

void gemm_nt_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i)
    {
        for (std::size_t j = 0; j < n; ++j)
        {
            c[i * n + j] += dot_scalar(k, a + i * k, b + j * k);
        }
    }
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y)
{
    for (std::size_t i = 0; i < n; ++i)
    {
        y[i] += alpha * x[i];
    }
}

void gemm_tn_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i)
    {
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p)
        {
            axpy_scalar(n, a[i * k + p], brow, c + p * n);
        }
    }
}

} // namespace fabcap::nn::kernels::detail
