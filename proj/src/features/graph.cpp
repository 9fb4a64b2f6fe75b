#include "fabcap/features/graph.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace fabcap
{

namespace
{

double safe_div(double a, double b)
{
    return b > 0.0 ? a / b : 0.0;
}

} // namespace

void RunningStats::observe_rows(const nn::Matrix& x)
{
    if (x.cols != mean_.size())
    {
        throw std::invalid_argument("RunningStats: feature width mismatch");
    }
    for (std::size_t r = 0; r < x.rows; ++r)
    {
        count_ += 1.0;
        for (std::size_t c = 0; c < x.cols; ++c)
        {
            const double v = x(r, c);
            const double delta = v - mean_[c];
            mean_[c] += delta / count_;
            m2_[c] += delta * (v - mean_[c]);
        }
    }
}

void RunningStats::merge(const RunningStats& other)
{
    if (other.mean_.size() != mean_.size())
    {
        throw std::invalid_argument("RunningStats: cannot merge different widths");
    }
    if (other.count_ == 0.0)
    {
        return;
    }
    if (count_ == 0.0)
    {
        *this = other;
        return;
    }
    const double n = count_ + other.count_;
    for (std::size_t c = 0; c < mean_.size(); ++c)
    {
        const double delta = other.mean_[c] - mean_[c];
        mean_[c] += delta * other.count_ / n;
        m2_[c] += other.m2_[c] + delta * delta * count_ * other.count_ / n;
    }
    count_ = n;
}

double RunningStats::variance(std::size_t i) const
{
    if (count_ <= 0.0)
    {
        return 1.0;
    }
    return std::max(m2_.at(i) / count_, kVarianceFloor);
}

void RunningStats::normalize(nn::Matrix& x) const
{
    for (std::size_t c = 0; c < x.cols; ++c)
    {
        const double mu = count_ > 0.0 ? mean_[c] : 0.0;
        const double sd = std::sqrt(variance(c));
        for (std::size_t r = 0; r < x.rows; ++r)
        {
            x(r, c) = (x(r, c) - mu) / sd;
        }
    }
}

void RunningStats::denormalize(nn::Matrix& x) const
{
    for (std::size_t c = 0; c < x.cols; ++c)
    {
        const double mu = count_ > 0.0 ? mean_[c] : 0.0;
        const double sd = std::sqrt(variance(c));
        for (std::size_t r = 0; r < x.rows; ++r)
        {
            x(r, c) = x(r, c) * sd + mu;
        }
    }
}

void RunningStats::restore(double count, std::vector<double> mean, std::vector<double> m2)
{
    if (mean.size() != m2.size())
    {
        throw std::invalid_argument("RunningStats: inconsistent restored statistics");
    }
    count_ = count;
    mean_ = std::move(mean);
    m2_ = std::move(m2);
}

void FeatureNormalizer::observe(const HeteroGraph& raw)
{
    machine.observe_rows(raw.machine_feats);
    op.observe_rows(raw.op_feats);
    om.observe_rows(raw.om_feats);
}

void FeatureNormalizer::apply(HeteroGraph& g) const
{
    machine.normalize(g.machine_feats);
    op.normalize(g.op_feats);
    om.normalize(g.om_feats);
}

void FeatureNormalizer::merge(const FeatureNormalizer& other)
{
    machine.merge(other.machine);
    op.merge(other.op);
    om.merge(other.om);
}

HeteroGraph extract_raw_graph(const FabState& st)
{
    const Scenario& s = st.scenario();
    const std::size_t nm = s.num_machines();
    const std::size_t no = s.num_operations();
    const PeriodRecord& period = st.last_period();
    const bool have_period = period.index >= 0;
    const double len = have_period ? period.length : 0.0;
    const double len_days = len / kMinutesPerDay;
    const double now = st.clock();

    HeteroGraph g;
    g.sigma = s.sigma;

    // Lots currently at each op (waiting or loaded), and per-product ages.
    std::vector<double> op_due_sum(no, 0.0);
    std::vector<int> op_lot_count(no, 0);
    std::vector<double> product_due_sum(s.num_products(), 0.0);
    std::vector<int> product_lot_count(s.num_products(), 0);
    for (const auto& [id, lot] : st.lots())
    {
        const auto& prod = s.products[static_cast<std::size_t>(lot.product)];
        const double remaining_due = prod.due_offset_minutes - (now - lot.release_time);
        const auto op = static_cast<std::size_t>(prod.route[static_cast<std::size_t>(lot.current_step)]);
        op_due_sum[op] += remaining_due;
        ++op_lot_count[op];
        product_due_sum[static_cast<std::size_t>(lot.product)] += remaining_due;
        ++product_lot_count[static_cast<std::size_t>(lot.product)];
    }

    g.machine_feats = nn::Matrix(nm, kMachineFeatures);
    for (std::size_t m = 0; m < nm; ++m)
    {
        const auto& spec = s.machines[m];
        const auto& ms = st.machines()[m];
        const MachinePeriodStats ps = have_period ? period.machines[m] : MachinePeriodStats{};
        const double lots = static_cast<double>(ps.completed_lots);

        double waiting = 0.0;
        double waiting_wafers = 0.0;
        double queue_integral = 0.0;
        for (int op : ms.dedicated_ops)
        {
            for (auto id : st.queue(op))
            {
                waiting += 1.0;
                waiting_wafers += st.lots().at(id).wafers;
            }
            if (have_period)
            {
                queue_integral += period.ops[static_cast<std::size_t>(op)].waiting_lot_integral;
            }
        }
        double loaded_wafers = 0.0;
        for (auto id : ms.current_lots)
        {
            loaded_wafers += st.lots().at(id).wafers;
        }

        auto row = g.machine_feats.row(m);
        row[0] = spec.min_batch;
        row[1] = spec.max_batch;
        row[2] = waiting;
        row[3] = lots;
        row[4] = static_cast<double>(ps.completed_wafers);
        row[5] = safe_div(ps.cycle_sum, lots);
        row[6] = safe_div(ps.queue_sum, lots);
        row[7] = safe_div(ps.process_sum, lots);
        row[8] = safe_div(ps.productive_minutes, len);
        row[9] = safe_div(ps.down_minutes, len);
        row[10] = safe_div(ps.idle_minutes, len);
        row[11] = safe_div(ps.setup_minutes, len);
        row[12] = ps.process_starts >= 2
                      ? (ps.last_start - ps.first_start) / static_cast<double>(ps.process_starts - 1)
                      : 0.0;
        row[13] = safe_div(queue_integral, len);
        row[14] = waiting + static_cast<double>(ms.current_lots.size());
        row[15] = waiting_wafers + loaded_wafers;
    }

    g.op_feats = nn::Matrix(no, kOpFeatures);
    g.pred.assign(no, -1);
    g.succ.assign(no, -1);
    const double fab_cycle = st.fab_mean_cycle_minutes();
    for (const auto& prod : s.products)
    {
        double remaining_raw = 0.0;
        for (std::size_t j = prod.route.size(); j-- > 0;)
        {
            const auto o = static_cast<std::size_t>(prod.route[j]);
            const auto& op = s.operations[o];
            remaining_raw += op.process_minutes;
            const OpPeriodStats ps = have_period ? period.ops[o] : OpPeriodStats{};
            const double lots = static_cast<double>(ps.completed_lots);
            const double wafers = static_cast<double>(ps.completed_wafers);
            const auto p = static_cast<std::size_t>(op.product);

            auto row = g.op_feats.row(o);
            row[0] = wafers;
            row[1] = lots;
            row[2] = wafers * static_cast<double>(j + 1);
            row[3] = op.optional ? 0.0 : wafers;
            row[4] = safe_div(ps.wip_lot_integral, len);
            row[5] = safe_div(ps.waiting_wafer_integral, len);
            row[6] = safe_div(ps.cycle_sum, lots);
            row[7] = product_lot_count[p] > 0 ? product_due_sum[p] / product_lot_count[p] : prod.due_offset_minutes;
            row[8] = safe_div(ps.queue_sum, lots);
            row[9] = safe_div(ps.process_sum, lots);
            row[10] = remaining_raw;
            row[11] = op_lot_count[o] > 0 ? op_due_sum[o] / op_lot_count[o] : 0.0;
            row[12] = fab_cycle;
            row[13] = safe_div(lots, len_days);
            row[14] = safe_div(ps.age_sum, lots);

            if (j > 0)
            {
                g.pred[o] = prod.route[j - 1];
            }
            if (j + 1 < prod.route.size())
            {
                g.succ[o] = prod.route[j + 1];
            }
        }
        for (std::size_t j = 0; j + 1 < prod.route.size(); ++j)
        {
            g.oo_edges.push_back({prod.route[j], prod.route[j + 1]});
        }
    }
    g.oo_feats = nn::Matrix(g.oo_edges.size(), kOoEdgeFeatures);
    for (std::size_t e = 0; e < g.oo_edges.size(); ++e)
    {
        const auto& op = s.operations[static_cast<std::size_t>(g.oo_edges[e].from)];
        const auto n = static_cast<double>(s.products[static_cast<std::size_t>(op.product)].route.size());
        g.oo_feats(e, 0) = static_cast<double>(op.step + 1) / n;
    }

    for (std::size_t o = 0; o < no; ++o)
    {
        const auto& op = s.operations[o];
        const auto& ded = st.op_dedicated(static_cast<int>(o));
        for (int m : s.family_machines[static_cast<std::size_t>(op.family)])
        {
            g.om_edges.push_back({static_cast<int>(o), m, std::binary_search(ded.begin(), ded.end(), m)});
        }
    }
    g.om_feats = nn::Matrix(g.om_edges.size(), kOmEdgeFeatures);
    g.masks.ded_add.assign(g.om_edges.size(), 0);
    g.masks.ded_remove.assign(g.om_edges.size(), 0);
    for (std::size_t e = 0; e < g.om_edges.size(); ++e)
    {
        const auto& edge = g.om_edges[e];
        const auto& op = s.operations[static_cast<std::size_t>(edge.op)];
        const auto& ms = st.machines()[static_cast<std::size_t>(edge.machine)];
        g.om_feats(e, 0) = st.process_minutes(edge.machine, edge.op);
        g.om_feats(e, 1) = ms.current_setup_key == edge.op ? 0.0 : op.setup_minutes;
        if (edge.dedicated)
        {
            g.masks.ded_remove[e] = st.op_dedicated(edge.op).size() >= 2 ? 1 : 0;
        }
        else
        {
            g.masks.ded_add[e] = 1;
        }
    }

    g.masks.uptime.assign(nm, 0);
    g.masks.efficiency.assign(nm, 1);
    for (std::size_t m = 0; m < nm; ++m)
    {
        g.masks.uptime[m] = st.machines()[m].uptime_fraction < 1.0 ? 1 : 0;
    }
    return g;
}

HeteroGraph extract_graph(const FabState& state, FeatureNormalizer* normalizer)
{
    HeteroGraph g = extract_raw_graph(state);
    if (normalizer != nullptr)
    {
        if (!normalizer->frozen)
        {
            normalizer->observe(g);
        }
        normalizer->apply(g);
    }
    return g;
}

void dump_graph(const HeteroGraph& g, std::ostream& out)
{
    auto emit_row = [&](const nn::Matrix& m, std::size_t r) {
        for (std::size_t c = 0; c < m.cols; ++c)
        {
            out << '\t' << m(r, c);
        }
    };
    out << "# machines " << g.num_machines() << '\n';
    for (std::size_t m = 0; m < g.num_machines(); ++m)
    {
        out << "machine\t" << m << '\t' << int(g.masks.uptime[m]) << '\t' << int(g.masks.efficiency[m]);
        emit_row(g.machine_feats, m);
        out << '\n';
    }
    out << "# operations " << g.num_ops() << '\n';
    for (std::size_t o = 0; o < g.num_ops(); ++o)
    {
        out << "op\t" << o << '\t' << g.pred[o] << '\t' << g.succ[o];
        emit_row(g.op_feats, o);
        out << '\n';
    }
    out << "# om_edges " << g.om_edges.size() << '\n';
    for (std::size_t e = 0; e < g.om_edges.size(); ++e)
    {
        const auto& edge = g.om_edges[e];
        out << "om\t" << edge.op << '\t' << edge.machine << '\t' << int(edge.dedicated) << '\t'
            << int(g.masks.ded_add[e]) << '\t' << int(g.masks.ded_remove[e]);
        emit_row(g.om_feats, e);
        out << '\n';
    }
    out << "# oo_edges " << g.oo_edges.size() << '\n';
    for (std::size_t e = 0; e < g.oo_edges.size(); ++e)
    {
        out << "oo\t" << g.oo_edges[e].from << '\t' << g.oo_edges[e].to;
        emit_row(g.oo_feats, e);
        out << '\n';
    }
}

} // namespace fabcap
