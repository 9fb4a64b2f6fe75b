// Compiled with -mavx2 -mfma. Only reached through the dispatch table after
// CPUID confirms support.

#include "kernels_impl.hpp"

#include <immintrin.h>

namespace fabcap::nn::kernels::detail
{

namespace
{

inline double hsum(__m256d v)
{
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

} // namespace

double dot_avx2(std::size_t n, const double* x, const double* y)
{
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
    {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
    {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i)
    {
        s += x[i] * y[i];
    }
    return s;
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y)
{
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
    {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i)
    {
        y[i] += alpha * x[i];
    }
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i)
    {
        double* crow = c + i * n;
        std::size_t j = 0;
        // Register-blocked over 8 output columns; k streamed.
        for (; j + 8 <= n; j += 8)
        {
            __m256d c0 = _mm256_loadu_pd(crow + j);
            __m256d c1 = _mm256_loadu_pd(crow + j + 4);
            for (std::size_t p = 0; p < k; ++p)
            {
                const __m256d aip = _mm256_set1_pd(a[i * k + p]);
                const double* brow = b + p * n + j;
                c0 = _mm256_fmadd_pd(aip, _mm256_loadu_pd(brow), c0);
                c1 = _mm256_fmadd_pd(aip, _mm256_loadu_pd(brow + 4), c1);
            }
            _mm256_storeu_pd(crow + j, c0);
            _mm256_storeu_pd(crow + j + 4, c1);
        }
        for (; j + 4 <= n; j += 4)
        {
            __m256d c0 = _mm256_loadu_pd(crow + j);
            for (std::size_t p = 0; p < k; ++p)
            {
                c0 = _mm256_fmadd_pd(_mm256_set1_pd(a[i * k + p]), _mm256_loadu_pd(b + p * n + j), c0);
            }
            _mm256_storeu_pd(crow + j, c0);
        }
        for (; j < n; ++j)
        {
            double s = crow[j];
            for (std::size_t p = 0; p < k; ++p)
            {
                s += a[i * k + p] * b[p * n + j];
            }
            crow[j] = s;
        }
    }
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i)
    {
        for (std::size_t j = 0; j < n; ++j)
        {
            c[i * n + j] += dot_avx2(k, a + i * k, b + j * k);
        }
    }
}

void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i)
    {
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p)
        {
            const double aip = a[i * k + p];
            if (aip != 0.0)
            {
                axpy_avx2(n, aip, brow, c + p * n);
            }
        }
    }
}

} // namespace fabcap::nn::kernels::detail
