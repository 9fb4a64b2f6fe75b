#include "fabcap/sim/rng.hpp"
#include "fabcap/sim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace fabcap
{

GeneratorSpec smt2020_shape()
{
    GeneratorSpec g;
    g.machines = 1314;
    g.products = 10;
    g.families = 105;
    g.route_min = 242;
    g.route_max = 583;
    g.total_operations = 4014;
    g.pin_route_extremes = true;
    g.decision_period_minutes = 7.0 * kMinutesPerDay;
    g.horizon_periods = 25;
    return g;
}

GeneratorSpec midfab_shape()
{
    GeneratorSpec g;
    g.machines = 200;
    g.products = 5;
    g.families = 30;
    g.route_min = 100;
    g.route_max = 140;
    g.total_operations = 600;
    g.decision_period_minutes = kMinutesPerDay;
    g.horizon_periods = 5;
    return g;
}

namespace
{

void check_spec(const GeneratorSpec& g)
{
    if (g.machines < 1 || g.products < 1 || g.families < 1)
    {
        throw ScenarioError("generator: machines, products and families must be positive");
    }
    if (g.route_min < 2 || g.route_max < g.route_min)
    {
        throw ScenarioError("generator: need 2 <= route_min <= route_max");
    }
    if (g.min_dedications < 1)
    {
        throw ScenarioError("generator: min_dedications must be >= 1");
    }
    if (static_cast<long long>(g.families) * g.min_dedications > g.machines)
    {
        throw ScenarioError("generator: infeasible spec, " + std::to_string(g.families) + " families x " +
                            std::to_string(g.min_dedications) + " required dedications exceed " +
                            std::to_string(g.machines) + " machines");
    }
    if (g.total_operations > 0 && (static_cast<long long>(g.products) * g.route_min > g.total_operations ||
                                   static_cast<long long>(g.products) * g.route_max < g.total_operations))
    {
        throw ScenarioError("generator: total_operations not reachable with the route length bounds");
    }
    if (g.pin_route_extremes && g.products < 2 && g.route_min != g.route_max)
    {
        throw ScenarioError("generator: pinning both route extremes needs at least two products");
    }
    if (g.pin_route_extremes && g.total_operations > 0)
    {
        const long long rest = g.total_operations - g.route_min - g.route_max;
        const long long others = g.products - 2;
        if (rest < others * g.route_min || rest > others * g.route_max)
        {
            throw ScenarioError("generator: pinned extremes leave total_operations unreachable");
        }
    }
    if (!(g.load_factor > 0.0) || !(g.target_utilization > 0.0))
    {
        throw ScenarioError("generator: load_factor and target_utilization must be positive");
    }
    if (!(g.uptime_min > 0.0 && g.uptime_min <= g.uptime_max && g.uptime_max <= 1.0))
    {
        throw ScenarioError("generator: need 0 < uptime_min <= uptime_max <= 1");
    }
    if (g.max_batch < 1)
    {
        throw ScenarioError("generator: max_batch must be >= 1");
    }
}

double uniform_in(CounterRng& rng, double lo, double hi)
{
    return lo + (hi - lo) * rng.uniform();
}

int int_in(CounterRng& rng, int lo, int hi)
{
    return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

std::vector<int> route_lengths(const GeneratorSpec& g, CounterRng& rng)
{
    std::vector<int> len(static_cast<std::size_t>(g.products));
    for (auto& l : len)
    {
        l = int_in(rng, g.route_min, g.route_max);
    }
    std::vector<bool> pinned(len.size(), false);
    if (g.pin_route_extremes)
    {
        len[0] = g.route_min;
        pinned[0] = true;
        if (len.size() > 1)
        {
            len[1] = g.route_max;
            pinned[1] = true;
        }
    }
    if (g.total_operations > 0)
    {
        long long diff = g.total_operations - std::accumulate(len.begin(), len.end(), 0LL);
        std::size_t i = 0;
        while (diff != 0)
        {
            if (!pinned[i])
            {
                if (diff > 0 && len[i] < g.route_max)
                {
                    ++len[i];
                    --diff;
                }
                else if (diff < 0 && len[i] > g.route_min)
                {
                    --len[i];
                    ++diff;
                }
            }
            i = (i + 1) % len.size();
        }
    }
    return len;
}

} // namespace

Scenario generate_synthetic(const GeneratorSpec& g, std::uint64_t seed)
{
    check_spec(g);
    CounterRng rng(seed, 0x5ce7a710ULL);
    Scenario s;
    s.name = "synthetic-" + std::to_string(g.machines) + "m-" + std::to_string(seed);
    s.decision_period_minutes = g.decision_period_minutes;
    s.horizon_periods = g.horizon_periods;
    s.sigma = g.sigma;

    // Families: a fraction batch (diffusion-like), some with setups.
    const auto nf = static_cast<std::size_t>(g.families);
    std::vector<bool> batch(nf, false);
    std::vector<double> base_time(nf), setup(nf, 0.0);
    const auto n_batch = static_cast<std::size_t>(std::floor(g.batch_family_fraction * static_cast<double>(nf)));
    for (std::size_t f = 0; f < nf; ++f)
    {
        batch[f] = g.max_batch > 1 && f < n_batch;
        base_time[f] = batch[f] ? uniform_in(rng, 180.0, 400.0) : uniform_in(rng, 15.0, 90.0);
        if (!batch[f] && rng.uniform() < 0.3)
        {
            setup[f] = uniform_in(rng, 5.0, 30.0);
        }
        s.families.push_back({(batch[f] ? "batch-" : "fam-") + std::to_string(f)});
    }

    // Routes: follow a shared cyclic process template most of the time so flows re-enter families.
    const auto lengths = route_lengths(g, rng);
    std::vector<int> flow_template(nf);
    std::iota(flow_template.begin(), flow_template.end(), 0);
    std::shuffle(flow_template.begin(), flow_template.end(), rng);

    std::vector<double> product_weight(static_cast<std::size_t>(g.products));
    std::vector<std::vector<int>> route_families(static_cast<std::size_t>(g.products));
    for (std::size_t p = 0; p < lengths.size(); ++p)
    {
        product_weight[p] = uniform_in(rng, 0.5, 1.5);
        auto& fams = route_families[p];
        std::size_t cursor = rng.below(nf);
        for (int j = 0; j < lengths[p]; ++j)
        {
            if (rng.uniform() < 0.75)
            {
                fams.push_back(flow_template[cursor % nf]);
                ++cursor;
            }
            else
            {
                fams.push_back(static_cast<int>(rng.below(nf)));
            }
        }
        std::set<int> distinct(fams.begin(), fams.end());
        if (distinct.size() == fams.size())
        {
            fams.back() = fams.front();
        }
    }

    // Operation processing times, then per-family workload in machine-minutes per unit arrival rate.
    std::vector<double> workload(nf, 0.0);
    std::vector<std::vector<double>> op_time(lengths.size());
    for (std::size_t p = 0; p < lengths.size(); ++p)
    {
        for (int fam : route_families[p])
        {
            const auto f = static_cast<std::size_t>(fam);
            const double t = base_time[f] * uniform_in(rng, 0.8, 1.2);
            op_time[p].push_back(t);
            const double batch_fill = batch[f] ? 0.75 * g.max_batch : 1.0;
            workload[f] += product_weight[p] * (t + setup[f] * 0.5) / batch_fill;
        }
    }

    // Machines proportional to workload, each family at least min_dedications.
    std::vector<int> count(nf, g.min_dedications);
    int spare = g.machines - g.families * g.min_dedications;
    const double total_work = std::accumulate(workload.begin(), workload.end(), 0.0);
    if (total_work > 0.0 && spare > 0)
    {
        std::vector<std::pair<double, std::size_t>> remainders;
        int assigned = 0;
        for (std::size_t f = 0; f < nf; ++f)
        {
            const double share = spare * workload[f] / total_work;
            const int whole = static_cast<int>(std::floor(share));
            count[f] += whole;
            assigned += whole;
            remainders.emplace_back(share - whole, f);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (int k = 0; k < spare - assigned; ++k)
        {
            ++count[remainders[static_cast<std::size_t>(k) % nf].second];
        }
    }
    else
    {
        for (int k = 0; k < spare; ++k)
        {
            ++count[static_cast<std::size_t>(k) % nf];
        }
    }

    std::vector<double> family_capacity(nf, 0.0);
    for (std::size_t f = 0; f < nf; ++f)
    {
        for (int k = 0; k < count[f]; ++k)
        {
            MachineSpec m;
            m.name = "M" + std::to_string(s.machines.size());
            m.family = static_cast<int>(f);
            if (batch[f])
            {
                m.min_batch = std::max(1, g.max_batch / 2);
                m.max_batch = g.max_batch;
            }
            m.base_uptime = uniform_in(rng, g.uptime_min, g.uptime_max);
            m.mean_repair_minutes = m.base_uptime < 1.0 ? uniform_in(rng, 60.0, 480.0) : 0.0;
            m.process_time_factor = uniform_in(rng, 0.9, 1.1);
            family_capacity[f] += m.base_uptime * kMinutesPerDay / m.process_time_factor;
            s.machines.push_back(std::move(m));
        }
    }
    std::vector<std::vector<int>> fam_machines(nf);
    for (std::size_t m = 0; m < s.machines.size(); ++m)
    {
        fam_machines[static_cast<std::size_t>(s.machines[m].family)].push_back(static_cast<int>(m));
    }

    // Dedications: a contiguous (wrapping) window of the family, random start.
    for (std::size_t p = 0; p < lengths.size(); ++p)
    {
        Product prod;
        prod.name = "P" + std::to_string(p);
        double raw = 0.0;
        for (std::size_t j = 0; j < route_families[p].size(); ++j)
        {
            const auto f = static_cast<std::size_t>(route_families[p][j]);
            OperationSpec op;
            op.name = prod.name + "-" + std::to_string(j + 1);
            op.product = static_cast<int>(p);
            op.step = static_cast<int>(j);
            op.family = static_cast<int>(f);
            op.process_minutes = op_time[p][j];
            op.setup_minutes = setup[f];
            op.optional = !batch[f] && rng.uniform() < 0.05;
            const auto& fm = fam_machines[f];
            const int want = std::clamp(static_cast<int>(std::lround(g.dedication_fraction * fm.size())),
                                        g.min_dedications, static_cast<int>(fm.size()));
            const std::size_t start = rng.below(fm.size());
            for (int k = 0; k < want; ++k)
            {
                op.dedicated.push_back(fm[(start + static_cast<std::size_t>(k)) % fm.size()]);
            }
            std::sort(op.dedicated.begin(), op.dedicated.end());
            raw += op.process_minutes;
            prod.route.push_back(static_cast<int>(s.operations.size()));
            s.operations.push_back(std::move(op));
        }
        prod.due_offset_minutes = 3.0 * raw;
        prod.arrival.distribution = ArrivalDistribution::exponential;
        prod.arrival.wafers_per_lot = 25;
        s.products.push_back(std::move(prod));
    }

    // Scale arrivals so the busiest family sits at target utilization, then inflate.
    double worst = 0.0;
    for (std::size_t f = 0; f < nf; ++f)
    {
        if (family_capacity[f] > 0.0)
        {
            worst = std::max(worst, workload[f] / family_capacity[f]);
        }
    }
    // lots/day per unit product weight
    const double scale = worst > 0.0 ? g.target_utilization / worst : 1.0;
    for (std::size_t p = 0; p < s.products.size(); ++p)
    {
        const double lots_per_day = scale * product_weight[p] * g.load_factor;
        s.products[p].arrival.mean_interarrival_minutes = kMinutesPerDay / lots_per_day;
    }

    validate(s);
    return s;
}

} // namespace fabcap
