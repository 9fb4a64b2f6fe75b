#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace fabcap
{

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based generator: the i-th output is a pure function of
// (seed, stream, i), so copying the object forks the stream exactly.
class CounterRng
{
public:
    using result_type = std::uint64_t;

    CounterRng() = default;
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : key_(mix64(seed ^ mix64(stream + 0x9e3779b97f4a7c15ULL)))
    {
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return mix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL); }

    // [0, 1)
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    // (0, 1]
    double uniform_pos() noexcept { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }

    double exponential(double mean) noexcept { return -mean * std::log(uniform_pos()); }

    // Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n) noexcept
    {
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t x = (*this)();
        while (x >= limit)
        {
            x = (*this)();
        }
        return x % n;
    }

    std::uint64_t counter() const noexcept { return counter_; }

    bool operator==(const CounterRng&) const = default;

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace fabcap
