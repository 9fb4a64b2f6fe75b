#include "fabcap/sim/fab_state.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

namespace fabcap
{

namespace
{

constexpr std::uint64_t kArrivalStream = 0x1000;
constexpr std::uint64_t kMachineStream = 0x2000;

std::string fmt_time(double t)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", t);
    return buf;
}

} // namespace

std::string_view event_kind_name(EventKind k) noexcept
{
    switch (k)
    {
    case EventKind::lot_arrival:
        return "lot_arrival";
    case EventKind::process_end:
        return "process_end";
    case EventKind::setup_end:
        return "setup_end";
    case EventKind::machine_down:
        return "machine_down";
    case EventKind::machine_up:
        return "machine_up";
    case EventKind::period_boundary:
        return "period_boundary";
    case EventKind::batch_timeout:
        return "batch_timeout";
    }
    return "unknown";
}

FabState::FabState(std::shared_ptr<const Scenario> scenario, std::uint64_t seed)
    : scenario_(std::move(scenario)), seed_(seed)
{
    const Scenario& s = *scenario_;
    const std::size_t nm = s.num_machines();
    const std::size_t no = s.num_operations();
    const std::size_t np = s.num_products();

    queues_.resize(no);
    op_live_.resize(no);
    op_dedicated_.resize(no);
    op_outputs_.assign(no, 0);
    wip_by_product_.assign(np, 0);
    product_completed_.assign(np, 0);
    product_cycle_sum_.assign(np, 0.0);

    machines_.resize(nm);
    for (std::size_t m = 0; m < nm; ++m)
    {
        auto& ms = machines_[m];
        ms.id = static_cast<int>(m);
        ms.family = s.machines[m].family;
        ms.uptime_fraction = s.machines[m].base_uptime;
        machine_rng_.emplace_back(seed, kMachineStream + m);
    }
    for (std::size_t o = 0; o < no; ++o)
    {
        op_dedicated_[o] = s.operations[o].dedicated;
        for (int m : s.operations[o].dedicated)
        {
            machines_[static_cast<std::size_t>(m)].dedicated_ops.push_back(static_cast<int>(o));
        }
    }
    for (auto& ms : machines_)
    {
        std::sort(ms.dedicated_ops.begin(), ms.dedicated_ops.end());
    }

    for (std::size_t p = 0; p < np; ++p)
    {
        arrival_rng_.emplace_back(seed, kArrivalStream + p);
    }

    last_period_.machines.assign(nm, {});
    last_period_.ops.assign(no, {});

    schedule({s.decision_period_minutes, 0, EventKind::period_boundary});
    for (std::size_t p = 0; p < np; ++p)
    {
        SimEvent ev{next_interarrival(static_cast<int>(p)), 0, EventKind::lot_arrival};
        ev.product = static_cast<int>(p);
        schedule(ev);
    }
    for (auto& ms : machines_)
    {
        schedule_failure(ms);
    }
}

double FabState::next_interarrival(int product)
{
    const auto& a = scenario_->products[static_cast<std::size_t>(product)].arrival;
    if (a.distribution == ArrivalDistribution::deterministic)
    {
        return clock_ + a.mean_interarrival_minutes;
    }
    return clock_ + arrival_rng_[static_cast<std::size_t>(product)].exponential(a.mean_interarrival_minutes);
}

double FabState::mean_up_minutes(const MachineState& m) const
{
    const double mttr = scenario_->machines[static_cast<std::size_t>(m.id)].mean_repair_minutes;
    return m.uptime_fraction / (1.0 - m.uptime_fraction) * mttr;
}

void FabState::schedule_failure(MachineState& m)
{
    ++m.fail_token;
    if (m.uptime_fraction >= 1.0)
    {
        return;
    }
    const double up = machine_rng_[static_cast<std::size_t>(m.id)].exponential(mean_up_minutes(m));
    SimEvent ev{clock_ + up, 0, EventKind::machine_down};
    ev.machine = m.id;
    ev.token = m.fail_token;
    schedule(ev);
}

void FabState::schedule(SimEvent ev)
{
    ev.seq = next_seq_++;
    events_.push(ev);
}

double FabState::process_minutes(int machine, int op) const
{
    const auto& spec = scenario_->machines.at(static_cast<std::size_t>(machine));
    return scenario_->operations.at(static_cast<std::size_t>(op)).process_minutes * spec.process_time_factor *
           machines_.at(static_cast<std::size_t>(machine)).efficiency_factor;
}

double FabState::fab_mean_cycle_minutes() const noexcept
{
    return completed_ > 0 ? fab_cycle_sum_ / static_cast<double>(completed_) : 0.0;
}

void FabState::advance(double until, const Observer& observer)
{
    if (until < clock_)
    {
        throw std::invalid_argument("advance: target time precedes the clock");
    }
    while (!events_.empty() && events_.top().time <= until)
    {
        const SimEvent ev = events_.top();
        events_.pop();
        clock_ = ev.time;
        handle(ev);
        if (observer)
        {
            observer(*this, ev);
        }
    }
    clock_ = until;
}

void FabState::log_event(const SimEvent& ev, const std::string& payload)
{
    ++events_processed_;
    if (!log_events_)
    {
        return;
    }
    event_log_ += fmt_time(ev.time);
    event_log_ += '\t';
    event_log_ += std::to_string(ev.seq);
    event_log_ += '\t';
    event_log_ += event_kind_name(ev.kind);
    event_log_ += '\t';
    event_log_ += payload;
    event_log_ += '\n';
}

void FabState::handle(const SimEvent& ev)
{
    switch (ev.kind)
    {
    case EventKind::lot_arrival:
        on_arrival(ev);
        break;
    case EventKind::process_end:
        on_process_end(ev);
        break;
    case EventKind::setup_end:
        on_setup_end(ev);
        break;
    case EventKind::machine_down:
        on_down(ev);
        break;
    case EventKind::machine_up:
        on_up(ev);
        break;
    case EventKind::period_boundary:
        on_period_boundary(ev);
        break;
    case EventKind::batch_timeout: {
        auto& m = machines_[static_cast<std::size_t>(ev.machine)];
        if (m.pending_timeout == ev.time)
        {
            m.pending_timeout = -1.0;
        }
        log_event(ev, "{\"machine\":" + std::to_string(ev.machine) + "}");
        try_start(ev.machine);
        break;
    }
    }
}

void FabState::touch_op(int op)
{
    auto& live = op_live_[static_cast<std::size_t>(op)];
    const double dt = clock_ - live.last_touch;
    if (dt > 0.0)
    {
        live.period.waiting_lot_integral += static_cast<double>(live.waiting_lots) * dt;
        live.period.waiting_wafer_integral += static_cast<double>(live.waiting_wafers) * dt;
        live.period.wip_lot_integral += static_cast<double>(live.waiting_lots + live.in_process) * dt;
    }
    live.last_touch = clock_;
}

void FabState::account(MachineState& m)
{
    const double dt = clock_ - m.last_status_change;
    if (dt > 0.0)
    {
        switch (m.status())
        {
        case MachineStatus::idle:
            m.period.idle_minutes += dt;
            break;
        case MachineStatus::setup:
            m.period.setup_minutes += dt;
            break;
        case MachineStatus::processing:
            m.period.productive_minutes += dt;
            break;
        case MachineStatus::down:
            m.period.down_minutes += dt;
            break;
        }
    }
    m.last_status_change = clock_;
}

void FabState::set_work(MachineState& m, MachineStatus work)
{
    account(m);
    m.work = work;
}

void FabState::enqueue_lot(Lot& lot, int op)
{
    touch_op(op);
    lot.step_entry_time = clock_;
    queues_[static_cast<std::size_t>(op)].push_back(lot.id);
    auto& live = op_live_[static_cast<std::size_t>(op)];
    ++live.waiting_lots;
    live.waiting_wafers += lot.wafers;
}

void FabState::on_arrival(const SimEvent& ev)
{
    const Scenario& s = *scenario_;
    const auto p = static_cast<std::size_t>(ev.product);
    Lot lot;
    lot.id = next_lot_id_++;
    lot.product = ev.product;
    lot.wafers = s.products[p].arrival.wafers_per_lot;
    lot.release_time = clock_;
    lot.current_step = 0;
    const int op = s.products[p].route.front();
    auto [it, inserted] = lots_.emplace(lot.id, lot);
    ++released_;
    ++wip_by_product_[p];
    enqueue_lot(it->second, op);
    log_event(ev, "{\"lot\":" + std::to_string(lot.id) + ",\"product\":" + std::to_string(ev.product) + "}");

    SimEvent next{next_interarrival(ev.product), 0, EventKind::lot_arrival};
    next.product = ev.product;
    schedule(next);
    dispatch_op(op);
}

void FabState::dispatch_op(int op)
{
    for (int m : op_dedicated_[static_cast<std::size_t>(op)])
    {
        const auto& ms = machines_[static_cast<std::size_t>(m)];
        if (!ms.down && ms.work == MachineStatus::idle)
        {
            try_start(m);
        }
    }
}

void FabState::try_start(int machine)
{
    auto& m = machines_[static_cast<std::size_t>(machine)];
    if (m.down || m.work != MachineStatus::idle)
    {
        return;
    }
    const Scenario& s = *scenario_;
    const auto& spec = s.machines[static_cast<std::size_t>(machine)];
    const bool batching = spec.is_batch();

    int best_op = -1;
    double best_wait_since = std::numeric_limits<double>::infinity();
    double earliest_timeout = std::numeric_limits<double>::infinity();
    for (int op : m.dedicated_ops)
    {
        const auto& q = queues_[static_cast<std::size_t>(op)];
        if (q.empty())
        {
            continue;
        }
        const double head_entry = lots_.at(q.front()).step_entry_time;
        if (batching && static_cast<int>(q.size()) < spec.min_batch &&
            clock_ < head_entry + s.batch_timeout_minutes)
        {
            earliest_timeout = std::min(earliest_timeout, head_entry + s.batch_timeout_minutes);
            continue;
        }
        if (head_entry < best_wait_since)
        {
            best_wait_since = head_entry;
            best_op = op;
        }
    }

    if (best_op < 0)
    {
        if (earliest_timeout < std::numeric_limits<double>::infinity() &&
            (m.pending_timeout < 0.0 || m.pending_timeout > earliest_timeout))
        {
            m.pending_timeout = earliest_timeout;
            SimEvent ev{earliest_timeout, 0, EventKind::batch_timeout};
            ev.machine = machine;
            schedule(ev);
        }
        return;
    }

    auto& q = queues_[static_cast<std::size_t>(best_op)];
    auto& live = op_live_[static_cast<std::size_t>(best_op)];
    touch_op(best_op);
    const int take = batching ? std::min<int>(spec.max_batch, static_cast<int>(q.size())) : 1;
    m.current_lots.clear();
    for (int k = 0; k < take; ++k)
    {
        const std::int64_t id = q.front();
        q.pop_front();
        Lot& lot = lots_.at(id);
        lot.process_start_time = clock_;
        --live.waiting_lots;
        live.waiting_wafers -= lot.wafers;
        ++live.in_process;
        m.current_lots.push_back(id);
    }
    m.current_op = best_op;
    if (m.period.process_starts == 0)
    {
        m.period.first_start = clock_;
    }
    ++m.period.process_starts;
    m.period.last_start = clock_;

    const auto& op = s.operations[static_cast<std::size_t>(best_op)];
    if (m.current_setup_key != best_op && op.setup_minutes > 0.0)
    {
        set_work(m, MachineStatus::setup);
        m.current_setup_key = best_op;
        m.busy_until = clock_ + op.setup_minutes;
        ++m.work_token;
        SimEvent ev{m.busy_until, 0, EventKind::setup_end};
        ev.machine = machine;
        ev.token = m.work_token;
        schedule(ev);
        return;
    }
    m.current_setup_key = best_op;
    begin_processing(m);
}

void FabState::begin_processing(MachineState& m)
{
    set_work(m, MachineStatus::processing);
    m.busy_until = clock_ + process_minutes(m.id, m.current_op);
    ++m.work_token;
    SimEvent ev{m.busy_until, 0, EventKind::process_end};
    ev.machine = m.id;
    ev.token = m.work_token;
    schedule(ev);
}

void FabState::on_setup_end(const SimEvent& ev)
{
    auto& m = machines_[static_cast<std::size_t>(ev.machine)];
    if (ev.token != m.work_token || m.down)
    {
        return;
    }
    log_event(ev, "{\"machine\":" + std::to_string(ev.machine) + ",\"op\":" + std::to_string(m.current_op) + "}");
    begin_processing(m);
}

void FabState::on_process_end(const SimEvent& ev)
{
    auto& m = machines_[static_cast<std::size_t>(ev.machine)];
    if (ev.token != m.work_token || m.down)
    {
        return;
    }
    const Scenario& s = *scenario_;
    const int op = m.current_op;
    const auto& ospec = s.operations[static_cast<std::size_t>(op)];
    const auto& prod = s.products[static_cast<std::size_t>(ospec.product)];

    std::string payload = "{\"machine\":" + std::to_string(m.id) + ",\"op\":" + std::to_string(op) +
                          ",\"product\":" + std::to_string(ospec.product) + ",\"step\":" + std::to_string(ospec.step) +
                          ",\"lots\":[";
    touch_op(op);
    auto& live = op_live_[static_cast<std::size_t>(op)];
    std::vector<int> next_ops;
    for (std::size_t k = 0; k < m.current_lots.size(); ++k)
    {
        const std::int64_t id = m.current_lots[k];
        if (k > 0)
        {
            payload += ',';
        }
        payload += std::to_string(id);

        Lot& lot = lots_.at(id);
        const double cycle = clock_ - lot.step_entry_time;
        const double queue = lot.process_start_time - lot.step_entry_time;
        const double proc = clock_ - lot.process_start_time;
        m.period.completed_lots += 1;
        m.period.completed_wafers += lot.wafers;
        m.period.cycle_sum += cycle;
        m.period.queue_sum += queue;
        m.period.process_sum += proc;
        live.period.completed_lots += 1;
        live.period.completed_wafers += lot.wafers;
        live.period.cycle_sum += cycle;
        live.period.queue_sum += queue;
        live.period.process_sum += proc;
        live.period.age_sum += clock_ - lot.release_time;
        --live.in_process;
        ++op_outputs_[static_cast<std::size_t>(op)];

        ++lot.current_step;
        if (static_cast<std::size_t>(lot.current_step) == prod.route.size())
        {
            const double ct = clock_ - lot.release_time;
            lot.completion_time = clock_;
            ++completed_;
            ++product_completed_[static_cast<std::size_t>(lot.product)];
            product_cycle_sum_[static_cast<std::size_t>(lot.product)] += ct;
            fab_cycle_sum_ += ct;
            ++period_completed_;
            period_cycle_sum_ += ct;
            --wip_by_product_[static_cast<std::size_t>(lot.product)];
            lots_.erase(id);
        }
        else
        {
            const int next = prod.route[static_cast<std::size_t>(lot.current_step)];
            enqueue_lot(lot, next);
            if (std::find(next_ops.begin(), next_ops.end(), next) == next_ops.end())
            {
                next_ops.push_back(next);
            }
        }
    }
    payload += "]}";
    log_event(ev, payload);

    m.current_lots.clear();
    m.current_op = -1;
    set_work(m, MachineStatus::idle);
    try_start(m.id);
    for (int next : next_ops)
    {
        dispatch_op(next);
    }
}

void FabState::on_down(const SimEvent& ev)
{
    auto& m = machines_[static_cast<std::size_t>(ev.machine)];
    if (ev.token != m.fail_token || m.down)
    {
        return;
    }
    log_event(ev, "{\"machine\":" + std::to_string(ev.machine) + "}");
    account(m);
    m.down = true;
    if (m.work != MachineStatus::idle)
    {
        m.remaining_work = m.busy_until - clock_;
        ++m.work_token;
    }
    const double mttr = scenario_->machines[static_cast<std::size_t>(m.id)].mean_repair_minutes;
    SimEvent up{clock_ + machine_rng_[static_cast<std::size_t>(m.id)].exponential(mttr), 0, EventKind::machine_up};
    up.machine = m.id;
    up.token = m.fail_token;
    schedule(up);
}

void FabState::on_up(const SimEvent& ev)
{
    auto& m = machines_[static_cast<std::size_t>(ev.machine)];
    if (!m.down)
    {
        return;
    }
    log_event(ev, "{\"machine\":" + std::to_string(ev.machine) + "}");
    account(m);
    m.down = false;
    if (m.work != MachineStatus::idle)
    {
        m.busy_until = clock_ + m.remaining_work;
        m.remaining_work = 0.0;
        ++m.work_token;
        SimEvent end{m.busy_until, 0,
                     m.work == MachineStatus::setup ? EventKind::setup_end : EventKind::process_end};
        end.machine = m.id;
        end.token = m.work_token;
        schedule(end);
    }
    schedule_failure(m);
    try_start(m.id);
}

void FabState::on_period_boundary(const SimEvent& ev)
{
    log_event(ev, "{\"period\":" + std::to_string(period_index_) + "}");
    PeriodRecord rec;
    rec.index = period_index_;
    rec.start = period_start_;
    rec.length = clock_ - period_start_;
    rec.completed_lots = period_completed_;
    rec.cycle_sum = period_cycle_sum_;
    rec.machines.reserve(machines_.size());
    for (auto& m : machines_)
    {
        account(m);
        rec.machines.push_back(m.period);
        m.period = {};
    }
    rec.ops.reserve(op_live_.size());
    for (std::size_t o = 0; o < op_live_.size(); ++o)
    {
        touch_op(static_cast<int>(o));
        rec.ops.push_back(op_live_[o].period);
        op_live_[o].period = {};
    }
    last_period_ = std::move(rec);
    ++period_index_;
    period_start_ = clock_;
    period_completed_ = 0;
    period_cycle_sum_ = 0.0;
    schedule({clock_ + scenario_->decision_period_minutes, 0, EventKind::period_boundary});
}

void FabState::apply_actions(const ActionSet& a)
{
    const Scenario& s = *scenario_;
    const auto nm = static_cast<int>(s.num_machines());
    const auto no = static_cast<int>(s.num_operations());
    auto check_machine = [&](int m, const char* what) {
        if (m < 0 || m >= nm)
        {
            throw InfeasibleAction(std::string(what) + ": machine id " + std::to_string(m) + " out of range");
        }
    };
    for (int m : a.uptime)
    {
        check_machine(m, "uptime");
    }
    for (int m : a.efficiency)
    {
        check_machine(m, "efficiency");
    }

    // Validate dedication changes against a scratch copy, removals first.
    std::vector<std::vector<int>> scratch = op_dedicated_;
    for (const auto& d : a.ded_remove)
    {
        check_machine(d.machine, "dedication removal");
        if (d.op < 0 || d.op >= no)
        {
            throw InfeasibleAction("dedication removal: operation id out of range");
        }
        auto& ded = scratch[static_cast<std::size_t>(d.op)];
        auto it = std::find(ded.begin(), ded.end(), d.machine);
        if (it == ded.end())
        {
            throw InfeasibleAction("dedication removal: machine " + std::to_string(d.machine) +
                                   " is not dedicated to operation " + std::to_string(d.op));
        }
        if (ded.size() == 1)
        {
            throw InfeasibleAction("dedication removal would leave operation " + std::to_string(d.op) +
                                   " without a capable machine");
        }
        ded.erase(it);
    }
    for (const auto& d : a.ded_add)
    {
        check_machine(d.machine, "dedication add");
        if (d.op < 0 || d.op >= no)
        {
            throw InfeasibleAction("dedication add: operation id out of range");
        }
        if (!s.compatible(d.machine, d.op))
        {
            throw InfeasibleAction("dedication add: machine " + std::to_string(d.machine) +
                                   " is incompatible with operation " + std::to_string(d.op));
        }
        auto& ded = scratch[static_cast<std::size_t>(d.op)];
        if (std::find(ded.begin(), ded.end(), d.machine) != ded.end())
        {
            throw InfeasibleAction("dedication add: machine " + std::to_string(d.machine) +
                                   " already dedicated to operation " + std::to_string(d.op));
        }
        ded.push_back(d.machine);
    }

    for (int id : a.uptime)
    {
        auto& m = machines_[static_cast<std::size_t>(id)];
        m.uptime_fraction = std::min(1.0, m.uptime_fraction + kUptimeIncrement);
        if (!m.down)
        {
            // Exponential up-times are memoryless, so redrawing under the new mean is exact.
            schedule_failure(m);
        }
    }
    for (int id : a.efficiency)
    {
        machines_[static_cast<std::size_t>(id)].efficiency_factor *= kEfficiencyMultiplier;
    }
    std::vector<int> touched;
    for (const auto& d : a.ded_remove)
    {
        auto& ded = op_dedicated_[static_cast<std::size_t>(d.op)];
        ded.erase(std::find(ded.begin(), ded.end(), d.machine));
        auto& mops = machines_[static_cast<std::size_t>(d.machine)].dedicated_ops;
        mops.erase(std::find(mops.begin(), mops.end(), d.op));
    }
    for (const auto& d : a.ded_add)
    {
        auto& ded = op_dedicated_[static_cast<std::size_t>(d.op)];
        ded.insert(std::lower_bound(ded.begin(), ded.end(), d.machine), d.machine);
        auto& mops = machines_[static_cast<std::size_t>(d.machine)].dedicated_ops;
        mops.insert(std::lower_bound(mops.begin(), mops.end(), d.op), d.op);
        touched.push_back(d.machine);
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    for (int m : touched)
    {
        try_start(m);
    }
}

KpiSnapshot FabState::snapshot() const
{
    return {clock_, op_outputs_, product_completed_, product_cycle_sum_};
}

KpiReport FabState::kpi_report(const KpiSnapshot& since) const
{
    const Scenario& s = *scenario_;
    if (since.op_outputs.size() != op_outputs_.size() || since.time > clock_)
    {
        throw std::invalid_argument("kpi_report: snapshot does not belong to this state");
    }
    KpiReport r;
    r.window_days = (clock_ - since.time) / kMinutesPerDay;
    const std::size_t np = s.num_products();
    r.per_product.resize(np);

    std::int64_t total_wip = 0;
    for (auto w : wip_by_product_)
    {
        total_wip += w;
    }
    double cycle_sum = 0.0;
    for (std::size_t p = 0; p < np; ++p)
    {
        auto& pk = r.per_product[p];
        pk.completed_lots = product_completed_[p] - since.product_completed[p];
        const double csum = product_cycle_sum_[p] - since.product_cycle_sum[p];
        if (pk.completed_lots > 0)
        {
            pk.avg_cycle_time_days = csum / static_cast<double>(pk.completed_lots) / kMinutesPerDay;
        }
        r.completed_lots += pk.completed_lots;
        cycle_sum += csum;

        pk.wip_ratio = total_wip > 0 ? static_cast<double>(wip_by_product_[p]) / static_cast<double>(total_wip)
                                     : 1.0 / static_cast<double>(np);
        double rate_sum = 0.0;
        if (r.window_days > 0.0)
        {
            for (int o : s.products[p].route)
            {
                const auto out = op_outputs_[static_cast<std::size_t>(o)] - since.op_outputs[static_cast<std::size_t>(o)];
                rate_sum += static_cast<double>(out) / r.window_days;
            }
        }
        pk.daily_going_rate = rate_sum / static_cast<double>(s.products[p].route.size());
        r.daily_going_rate += pk.wip_ratio * pk.daily_going_rate;
    }
    if (r.completed_lots > 0)
    {
        r.avg_cycle_time_days = cycle_sum / static_cast<double>(r.completed_lots) / kMinutesPerDay;
    }
    return r;
}

std::string FabState::check_invariants() const
{
    if (released_ != completed_ + static_cast<std::int64_t>(lots_.size()))
    {
        return "lot conservation violated: released " + std::to_string(released_) + " != completed " +
               std::to_string(completed_) + " + in flight " + std::to_string(lots_.size());
    }
    std::map<std::int64_t, int> placements;
    for (std::size_t o = 0; o < queues_.size(); ++o)
    {
        std::int64_t wafers = 0;
        for (auto id : queues_[o])
        {
            auto it = lots_.find(id);
            if (it == lots_.end())
            {
                return "queue of operation " + std::to_string(o) + " holds unknown lot " + std::to_string(id);
            }
            const auto& route = scenario_->products[static_cast<std::size_t>(it->second.product)].route;
            if (route[static_cast<std::size_t>(it->second.current_step)] != static_cast<int>(o))
            {
                return "lot " + std::to_string(id) + " waits at the wrong operation";
            }
            wafers += it->second.wafers;
            ++placements[id];
        }
        if (op_live_[o].waiting_lots != static_cast<std::int64_t>(queues_[o].size()) ||
            op_live_[o].waiting_wafers != wafers)
        {
            return "waiting counters out of sync at operation " + std::to_string(o);
        }
    }
    for (const auto& m : machines_)
    {
        if (m.work == MachineStatus::processing && !m.down && !(m.busy_until > clock_ || m.busy_until == clock_))
        {
            return "machine " + std::to_string(m.id) + " processing past busy_until";
        }
        if (m.uptime_fraction > 1.0 || !(m.efficiency_factor > 0.0))
        {
            return "machine " + std::to_string(m.id) + " has out-of-range capacity factors";
        }
        const auto& spec = scenario_->machines[static_cast<std::size_t>(m.id)];
        if (static_cast<int>(m.current_lots.size()) > spec.max_batch)
        {
            return "machine " + std::to_string(m.id) + " exceeds max batch";
        }
        for (auto id : m.current_lots)
        {
            ++placements[id];
        }
        for (int op : m.dedicated_ops)
        {
            if (!scenario_->compatible(m.id, op))
            {
                return "machine " + std::to_string(m.id) + " dedicated to incompatible operation";
            }
        }
    }
    for (const auto& [id, lot] : lots_)
    {
        auto it = placements.find(id);
        if (it == placements.end() || it->second != 1)
        {
            return "lot " + std::to_string(id) + " is not in exactly one queue or machine";
        }
    }
    for (std::size_t o = 0; o < op_dedicated_.size(); ++o)
    {
        if (op_dedicated_[o].empty())
        {
            return "operation " + std::to_string(o) + " lost its last dedicated machine";
        }
    }
    return {};
}

} // namespace fabcap
