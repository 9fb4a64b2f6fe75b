#pragma once

// Small scenarios and random heterogeneous graphs shared by the policy,
// trainer and acceptance tests. Test-only.

#include "fabcap/features/graph.hpp"
#include "fabcap/sim/rng.hpp"
#include "fabcap/sim/scenario.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <vector>

namespace fabcap::testing
{

// Three machines (two in family "a", one in "b"), two products with three
// steps each, every budget at one.
inline Scenario tiny_scenario()
{
    Scenario s;
    s.name = "tiny";
    s.families = {{"a"}, {"b"}};
    for (int m = 0; m < 3; ++m)
    {
        MachineSpec spec;
        spec.name = "m" + std::to_string(m);
        spec.family = m < 2 ? 0 : 1;
        spec.base_uptime = 0.9;
        spec.mean_repair_minutes = 60.0;
        s.machines.push_back(spec);
    }
    const int fam[2][3] = {{0, 1, 0}, {1, 0, 1}};
    for (int p = 0; p < 2; ++p)
    {
        Product prod;
        prod.name = "p" + std::to_string(p);
        prod.arrival.mean_interarrival_minutes = 90.0 + 30.0 * p;
        prod.due_offset_minutes = 600.0;
        for (int j = 0; j < 3; ++j)
        {
            OperationSpec op;
            op.name = prod.name + "-" + std::to_string(j + 1);
            op.product = p;
            op.step = j;
            op.family = fam[p][j];
            op.process_minutes = 20.0 + 5.0 * j + 3.0 * p;
            op.setup_minutes = 4.0;
            if (op.family == 1)
            {
                op.dedicated = {2};
            }
            else if (j == 0)
            {
                op.dedicated = {0, 1};
            }
            else
            {
                op.dedicated = {p};
            }
            prod.route.push_back(static_cast<int>(s.operations.size()));
            s.operations.push_back(op);
        }
        s.products.push_back(prod);
    }
    s.sigma = SigmaBudget{1, 1, 1, 1};
    validate(s);
    return s;
}

// Random graph with consistent structure: products as op chains, each op
// compatible with a random non-empty machine subset of which a random
// non-empty part is dedicated.
inline HeteroGraph random_graph(CounterRng& rng, std::size_t machines, std::size_t ops)
{
    HeteroGraph g;
    g.machine_feats = nn::Matrix(machines, kMachineFeatures);
    g.op_feats = nn::Matrix(ops, kOpFeatures);
    for (auto& v : g.machine_feats.data)
    {
        v = 2.0 * rng.uniform() - 1.0;
    }
    for (auto& v : g.op_feats.data)
    {
        v = 2.0 * rng.uniform() - 1.0;
    }
    g.pred.assign(ops, -1);
    g.succ.assign(ops, -1);
    for (std::size_t o = 1; o < ops; ++o)
    {
        if (rng.uniform() < 0.75)
        {
            g.pred[o] = static_cast<int>(o - 1);
            g.succ[o - 1] = static_cast<int>(o);
        }
    }
    std::vector<std::size_t> dedicated_count(ops, 0);
    for (std::size_t o = 0; o < ops; ++o)
    {
        if (g.succ[o] >= 0)
        {
            g.oo_edges.push_back({static_cast<int>(o), g.succ[o]});
        }
        std::vector<int> compatible;
        for (std::size_t m = 0; m < machines; ++m)
        {
            if (rng.uniform() < 0.5)
            {
                compatible.push_back(static_cast<int>(m));
            }
        }
        if (compatible.empty())
        {
            compatible.push_back(static_cast<int>(rng.below(machines)));
        }
        const std::size_t forced = rng.below(compatible.size());
        for (std::size_t i = 0; i < compatible.size(); ++i)
        {
            const bool ded = i == forced || rng.uniform() < 0.4;
            g.om_edges.push_back({static_cast<int>(o), compatible[i], ded});
            dedicated_count[o] += ded ? 1 : 0;
        }
    }
    g.oo_feats = nn::Matrix(g.oo_edges.size(), kOoEdgeFeatures);
    for (auto& v : g.oo_feats.data)
    {
        v = rng.uniform();
    }
    g.om_feats = nn::Matrix(g.om_edges.size(), kOmEdgeFeatures);
    for (auto& v : g.om_feats.data)
    {
        v = 2.0 * rng.uniform() - 1.0;
    }
    g.masks.uptime.resize(machines);
    g.masks.efficiency.assign(machines, 1);
    for (auto& u : g.masks.uptime)
    {
        u = rng.uniform() < 0.8 ? 1 : 0;
    }
    for (const auto& e : g.om_edges)
    {
        g.masks.ded_add.push_back(e.dedicated ? 0 : 1);
        g.masks.ded_remove.push_back(e.dedicated && dedicated_count[static_cast<std::size_t>(e.op)] >= 2 ? 1 : 0);
    }
    g.sigma = SigmaBudget{1, 1, 1, 1};
    return g;
}

// Relabels machine m as perm[m]; om-edges are re-sorted by (op, machine).
inline HeteroGraph permute_machines(const HeteroGraph& g, const std::vector<int>& perm)
{
    HeteroGraph out = g;
    for (std::size_t m = 0; m < g.num_machines(); ++m)
    {
        const auto to = static_cast<std::size_t>(perm[m]);
        for (std::size_t c = 0; c < g.machine_feats.cols; ++c)
        {
            out.machine_feats(to, c) = g.machine_feats(m, c);
        }
        out.masks.uptime[to] = g.masks.uptime[m];
        out.masks.efficiency[to] = g.masks.efficiency[m];
    }
    std::vector<std::size_t> order(g.om_edges.size());
    std::iota(order.begin(), order.end(), 0);
    auto key = [&](std::size_t e) {
        return std::pair{g.om_edges[e].op, perm[static_cast<std::size_t>(g.om_edges[e].machine)]};
    };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    for (std::size_t i = 0; i < order.size(); ++i)
    {
        const std::size_t e = order[i];
        out.om_edges[i] = g.om_edges[e];
        out.om_edges[i].machine = perm[static_cast<std::size_t>(g.om_edges[e].machine)];
        for (std::size_t c = 0; c < g.om_feats.cols; ++c)
        {
            out.om_feats(i, c) = g.om_feats(e, c);
        }
        out.masks.ded_add[i] = g.masks.ded_add[e];
        out.masks.ded_remove[i] = g.masks.ded_remove[e];
    }
    return out;
}

// Two disjoint copies of g; the copy's ids follow the originals.
inline HeteroGraph duplicate_graph(const HeteroGraph& g)
{
    const int nm = static_cast<int>(g.num_machines());
    const int no = static_cast<int>(g.num_ops());
    HeteroGraph out = g;
    auto stack = [](nn::Matrix& dst, const nn::Matrix& src) {
        dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
        dst.rows += src.rows;
    };
    stack(out.machine_feats, g.machine_feats);
    stack(out.op_feats, g.op_feats);
    stack(out.om_feats, g.om_feats);
    stack(out.oo_feats, g.oo_feats);
    for (const auto& e : g.om_edges)
    {
        out.om_edges.push_back({e.op + no, e.machine + nm, e.dedicated});
    }
    for (const auto& e : g.oo_edges)
    {
        out.oo_edges.push_back({e.from + no, e.to + no});
    }
    for (std::size_t o = 0; o < g.num_ops(); ++o)
    {
        out.pred.push_back(g.pred[o] < 0 ? -1 : g.pred[o] + no);
        out.succ.push_back(g.succ[o] < 0 ? -1 : g.succ[o] + no);
    }
    auto twice = [](std::vector<std::uint8_t>& v) {
        const auto copy = v;
        v.insert(v.end(), copy.begin(), copy.end());
    };
    twice(out.masks.uptime);
    twice(out.masks.efficiency);
    twice(out.masks.ded_add);
    twice(out.masks.ded_remove);
    return out;
}

} // namespace fabcap::testing
