#pragma once

#include <stdexcept>
#include <vector>

namespace fabcap
{

struct Dedication
{
    int machine = -1;
    int op = -1;

    bool operator==(const Dedication&) const = default;
};

// One decision step's bundle of capacity changes. Targets are stored in the
// order they were drawn so the sequential log-probability can be replayed.
struct ActionSet
{
    std::vector<int> uptime;
    std::vector<int> efficiency;
    std::vector<Dedication> ded_remove;
    std::vector<Dedication> ded_add;

    double joint_logprob = 0.0;
    double logprob_uptime = 0.0;
    double logprob_efficiency = 0.0;
    double logprob_remove = 0.0;
    double logprob_add = 0.0;

    bool empty() const noexcept
    {
        return uptime.empty() && efficiency.empty() && ded_remove.empty() && ded_add.empty();
    }
    std::size_t size() const noexcept { return uptime.size() + efficiency.size() + ded_remove.size() + ded_add.size(); }
};

// Raised when an action would violate a scenario constraint; indicates a masking bug upstream.
class InfeasibleAction : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kUptimeIncrement = 0.03;
inline constexpr double kEfficiencyMultiplier = 0.9;

} // namespace fabcap
