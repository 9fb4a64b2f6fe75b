#pragma once

#include <cstddef>

namespace fabcap::nn::kernels::detail
{

void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void gemm_nt_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void gemm_tn_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
double dot_scalar(std::size_t n, const double* x, const double* y);
void axpy_scalar(std::size_t n, double alpha, const double* x, double* y);

#if defined(FABCAP_HAVE_AVX2)
void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
double dot_avx2(std::size_t n, const double* x, const double* y);
void axpy_avx2(std::size_t n, double alpha, const double* x, double* y);
#endif

} // namespace fabcap::nn::kernels::detail
