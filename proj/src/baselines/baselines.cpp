#include "fabcap/baselines/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fabcap::baselines
{

using policy::HeadKind;

std::vector<int> draw_weighted(const HeteroGraph& g, HeadKind head, std::span<const double> weights,
                               CounterRng* rng, bool greedy)
{
    std::vector<int> drawn;
    const int budget = policy::head_budget(g, head);
    for (int k = 0; k < budget; ++k)
    {
        const auto open = policy::open_candidates(g, head, drawn);
        if (open.empty())
        {
            break;
        }
        int pick = open.front();
        if (greedy)
        {
            for (int i : open)
            {
                if (weights[static_cast<std::size_t>(i)] > weights[static_cast<std::size_t>(pick)])
                {
                    pick = i;
                }
            }
        }
        else
        {
            double total = 0.0;
            for (int i : open)
            {
                total += weights[static_cast<std::size_t>(i)];
            }
            double u = rng->uniform() * total;
            pick = open.back();
            for (int i : open)
            {
                u -= weights[static_cast<std::size_t>(i)];
                if (u < 0.0)
                {
                    pick = i;
                    break;
                }
            }
        }
        drawn.push_back(pick);
    }
    return drawn;
}

ActionSet no_action()
{
    return {};
}

ActionSet random_action(const HeteroGraph& g, CounterRng& rng)
{
    policy::HeadDraws d;
    const std::vector<double> machines(g.num_machines(), 1.0);
    const std::vector<double> edges(g.om_edges.size(), 1.0);
    d.uptime = draw_weighted(g, HeadKind::uptime, machines, &rng, false);
    d.efficiency = draw_weighted(g, HeadKind::efficiency, machines, &rng, false);
    d.ded_remove = draw_weighted(g, HeadKind::ded_remove, edges, &rng, false);
    d.ded_add = draw_weighted(g, HeadKind::ded_add, edges, &rng, false);
    return policy::to_action_set(g, d);
}

std::vector<double> machine_wip(const FabState& state)
{
    std::vector<double> wip;
    wip.reserve(state.machines().size());
    for (const auto& m : state.machines())
    {
        double lots = static_cast<double>(m.current_lots.size());
        for (int op : m.dedicated_ops)
        {
            lots += static_cast<double>(state.queue(op).size());
        }
        wip.push_back(lots);
    }
    return wip;
}

std::vector<double> op_wip(const FabState& state)
{
    const std::size_t n = state.scenario().num_operations();
    std::vector<double> wip(n);
    for (std::size_t o = 0; o < n; ++o)
    {
        const int op = static_cast<int>(o);
        wip[o] = static_cast<double>(state.queue(op).size() + static_cast<std::size_t>(state.in_process_lots(op)));
    }
    return wip;
}

std::vector<double> wip_weights(std::span<const double> wip, const HeuristicConfig& cfg)
{
    if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature))
    {
        throw std::invalid_argument("wip heuristic temperature must be finite and positive");
    }
    double scale = 1.0;
    if (cfg.normalize_wip && !wip.empty())
    {
        double mean = 0.0;
        for (double w : wip)
        {
            mean += w;
        }
        mean /= static_cast<double>(wip.size());
        scale = mean > 0.0 ? 1.0 / mean : 0.0;
    }
    std::vector<double> z(wip.size());
    double top = -INFINITY;
    for (std::size_t i = 0; i < wip.size(); ++i)
    {
        z[i] = wip[i] * scale / cfg.temperature;
        top = std::max(top, z[i]);
    }
    for (auto& v : z)
    {
        v = std::exp(v - top);
    }
    return z;
}

ActionSet wip_heuristic(const FabState& state, const HeteroGraph& g, const HeuristicConfig& cfg, CounterRng& rng)
{
    const auto mw = wip_weights(machine_wip(state), cfg);
    const auto ow = op_wip(state);
    std::vector<double> add(g.om_edges.size());
    std::vector<double> remove(g.om_edges.size());
    double total_add = 0.0;
    for (std::size_t e = 0; e < g.om_edges.size(); ++e)
    {
        const double w = ow[static_cast<std::size_t>(g.om_edges[e].op)];
        add[e] = w;
        remove[e] = -w;
        total_add += g.masks.ded_add[e] != 0 ? w : 0.0;
    }
    if (total_add == 0.0)
    {
        std::fill(add.begin(), add.end(), 1.0);
    }
    policy::HeadDraws d;
    d.uptime = draw_weighted(g, HeadKind::uptime, mw, &rng, false);
    d.efficiency = draw_weighted(g, HeadKind::efficiency, mw, &rng, false);
    d.ded_remove = draw_weighted(g, HeadKind::ded_remove, remove, nullptr, true);
    d.ded_add = draw_weighted(g, HeadKind::ded_add, add, &rng, false);
    return policy::to_action_set(g, d);
}

std::unique_ptr<Strategy> make_baseline(const std::string& name, const HeuristicConfig& cfg)
{
    if (name == "no_action")
    {
        return std::make_unique<NoActionStrategy>();
    }
    if (name == "random")
    {
        return std::make_unique<RandomStrategy>();
    }
    if (name == "wip_heuristic")
    {
        return std::make_unique<WipHeuristicStrategy>(cfg);
    }
    throw std::invalid_argument("unknown baseline strategy '" + name + "' (expected no_action, random or wip_heuristic)");
}

} // namespace fabcap::baselines
