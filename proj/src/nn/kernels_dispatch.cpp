#include "fabcap/nn/kernels.hpp"

#include "kernels_impl.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace fabcap::nn::kernels
{

namespace
{

const KernelTable kScalar{
    Isa::scalar,
    &detail::gemm_nn_scalar,
    &detail::gemm_nt_scalar,
    &detail::gemm_tn_scalar,
    &detail::dot_scalar,
    &detail::axpy_scalar,
};

#if defined(FABCAP_HAVE_AVX2)
const KernelTable kAvx2{
    Isa::avx2,
    &detail::gemm_nn_avx2,
    &detail::gemm_nt_avx2,
    &detail::gemm_tn_avx2,
    &detail::dot_avx2,
    &detail::axpy_avx2,
};
#endif

bool cpu_has_avx2() noexcept
{
#if defined(FABCAP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* select_initial() noexcept
{
    const char* env = std::getenv("FABCAP_SIMD");
    if (env != nullptr && std::string(env) == "scalar")
    {
        return &kScalar;
    }
    if (const KernelTable* t = avx2_table(); t != nullptr && cpu_has_avx2())
    {
        return t;
    }
    return &kScalar;
}

std::atomic<const KernelTable*>& current()
{
    static std::atomic<const KernelTable*> table{select_initial()};
    return table;
}

} // namespace

std::string_view isa_name(Isa isa) noexcept
{
    switch (isa)
    {
    case Isa::scalar:
        return "scalar";
    case Isa::avx2:
        return "avx2";
    }
    return "unknown";
}

const KernelTable& scalar_table() noexcept
{
    return kScalar;
}

const KernelTable* avx2_table() noexcept
{
#if defined(FABCAP_HAVE_AVX2)
    return &kAvx2;
#else
    return nullptr;
#endif
}

bool isa_supported(Isa isa) noexcept
{
    switch (isa)
    {
    case Isa::scalar:
        return true;
    case Isa::avx2:
        return avx2_table() != nullptr && cpu_has_avx2();
    }
    return false;
}

const KernelTable& active() noexcept
{
    return *current().load(std::memory_order_relaxed);
}

Isa active_isa() noexcept
{
    return active().isa;
}

void force_isa(Isa isa)
{
    if (!isa_supported(isa))
    {
        throw std::invalid_argument("kernel ISA not available on this host: " + std::string(isa_name(isa)));
    }
    current().store(isa == Isa::avx2 ? avx2_table() : &kScalar, std::memory_order_relaxed);
}

} // namespace fabcap::nn::kernels
