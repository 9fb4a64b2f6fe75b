#pragma once

// Dense inner-loop kernels used by the tape. Every routine has a scalar
// reference implementation and, on x86-64 builds, an AVX2/FMA variant. The
// active table is chosen once at startup from CPUID and can be overridden
// with FABCAP_SIMD=scalar|avx2 or force_isa().

#include <cstddef>
#include <span>
#include <string_view>

namespace fabcap::nn::kernels
{

enum class Isa
{
    scalar,
    avx2,
};

std::string_view isa_name(Isa isa) noexcept;

struct KernelTable
{
    Isa isa;
    // c[m x n] += a[m x k] * b[k x n]
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
    // c[m x n] += a[m x k] * b[n x k]^T
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
    // c[k x n] += a[m x k]^T * b[m x n]
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
    double (*dot)(std::size_t n, const double* x, const double* y);
    // y += alpha * x
    void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
};

const KernelTable& scalar_table() noexcept;

// nullptr when the variant was not compiled in.
const KernelTable* avx2_table() noexcept;

bool isa_supported(Isa isa) noexcept;
const KernelTable& active() noexcept;
Isa active_isa() noexcept;

// Throws std::invalid_argument when the ISA is unavailable on this host.
void force_isa(Isa isa);

inline double dot(std::span<const double> x, std::span<const double> y)
{
    return active().dot(x.size(), x.data(), y.data());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y)
{
    active().axpy(x.size(), alpha, x.data(), y.data());
}

} // namespace fabcap::nn::kernels
