#pragma once

// Reference strategies sharing the ActionSet interface: no action, uniform
// random subsets, and a WIP-weighted heuristic. Candidate sets and budgets
// come from the same mask logic the policy samples under.

#include "fabcap/features/graph.hpp"
#include "fabcap/policy/policy_net.hpp"
#include "fabcap/sim/action.hpp"
#include "fabcap/sim/fab_state.hpp"
#include "fabcap/sim/rng.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fabcap::baselines
{

struct HeuristicConfig
{
    double temperature = 1.0;
    // Divide machine WIP by the fab-wide mean machine WIP before weighting.
    bool normalize_wip = true;
};

// Weighted sequential draws for one head under its masks and budget.
// Greedy takes the largest weights, ties to the lowest index.
std::vector<int> draw_weighted(const HeteroGraph& g, policy::HeadKind head, std::span<const double> weights,
                               CounterRng* rng, bool greedy);

ActionSet no_action();
ActionSet random_action(const HeteroGraph& g, CounterRng& rng);
ActionSet wip_heuristic(const FabState& state, const HeteroGraph& g, const HeuristicConfig& cfg, CounterRng& rng);

// Lots queued at a machine's dedicated ops plus lots on the machine.
std::vector<double> machine_wip(const FabState& state);
// Lots queued at or in process on each op.
std::vector<double> op_wip(const FabState& state);
// exp(wip / temperature), optionally on mean-normalized WIP; shifted by the max for range.
std::vector<double> wip_weights(std::span<const double> wip, const HeuristicConfig& cfg);

// Decision-time strategy; the graph argument is the raw graph of state.
class Strategy
{
public:
    virtual ~Strategy() = default;
    virtual std::string name() const = 0;
    virtual ActionSet act(const FabState& state, const HeteroGraph& raw, CounterRng& rng) = 0;
};

class NoActionStrategy final : public Strategy
{
public:
    std::string name() const override { return "no_action"; }
    ActionSet act(const FabState&, const HeteroGraph&, CounterRng&) override { return no_action(); }
};

class RandomStrategy final : public Strategy
{
public:
    std::string name() const override { return "random"; }
    ActionSet act(const FabState&, const HeteroGraph& raw, CounterRng& rng) override
    {
        return random_action(raw, rng);
    }
};

class WipHeuristicStrategy final : public Strategy
{
public:
    explicit WipHeuristicStrategy(HeuristicConfig cfg = {}) : cfg_(cfg) {}
    std::string name() const override { return "wip_heuristic"; }
    ActionSet act(const FabState& state, const HeteroGraph& raw, CounterRng& rng) override
    {
        return wip_heuristic(state, raw, cfg_, rng);
    }

private:
    HeuristicConfig cfg_;
};

// "no_action", "random" or "wip_heuristic"; throws std::invalid_argument otherwise.
std::unique_ptr<Strategy> make_baseline(const std::string& name, const HeuristicConfig& cfg = {});

} // namespace fabcap::baselines
