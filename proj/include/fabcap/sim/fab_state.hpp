#pragma once

// Discrete-event simulation of a re-entrant wafer fab.
//
// A FabState owns the whole mutable world: event calendar, lots, machine
// states, queues, RNG streams and statistics. Copying it (fork()) yields an
// independent replica that, given identical inputs, replays the same event
// trace bit for bit. The clock is in minutes; KPIs are reported in days.
//
// Dispatching: FIFO within each operation queue; an idle machine serves the
// dedicated operation whose head lot has waited longest. Batch machines start
// once min_batch lots of the same operation wait, or when the head lot has
// waited batch_timeout_minutes.

#include "fabcap/sim/action.hpp"
#include "fabcap/sim/rng.hpp"
#include "fabcap/sim/scenario.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

namespace fabcap
{

enum class EventKind : std::uint8_t
{
    lot_arrival,
    process_end,
    setup_end,
    machine_down,
    machine_up,
    period_boundary,
    batch_timeout,
};

std::string_view event_kind_name(EventKind k) noexcept;

struct SimEvent
{
    double time = 0.0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::lot_arrival;
    int machine = -1;
    int product = -1;
    // Matches MachineState::work_token / fail_token while the event is live.
    std::uint64_t token = 0;
};

struct EventOrder
{
    bool operator()(const SimEvent& a, const SimEvent& b) const noexcept
    {
        return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
};

enum class MachineStatus : std::uint8_t
{
    idle,
    setup,
    processing,
    down,
};

struct Lot
{
    std::int64_t id = 0;
    int product = 0;
    int wafers = 0;
    double release_time = 0.0;
    int current_step = 0;
    // When the lot joined the queue of its current step.
    double step_entry_time = 0.0;
    double process_start_time = 0.0;
    std::optional<double> completion_time;
};

struct MachinePeriodStats
{
    double productive_minutes = 0.0;
    double down_minutes = 0.0;
    double idle_minutes = 0.0;
    double setup_minutes = 0.0;
    std::int64_t completed_lots = 0;
    std::int64_t completed_wafers = 0;
    double cycle_sum = 0.0;
    double queue_sum = 0.0;
    double process_sum = 0.0;
    std::int64_t process_starts = 0;
    double first_start = 0.0;
    double last_start = 0.0;
};

struct OpPeriodStats
{
    std::int64_t completed_lots = 0;
    std::int64_t completed_wafers = 0;
    double wip_lot_integral = 0.0;
    double waiting_wafer_integral = 0.0;
    double waiting_lot_integral = 0.0;
    double cycle_sum = 0.0;
    double queue_sum = 0.0;
    double process_sum = 0.0;
    double age_sum = 0.0;
};

struct PeriodRecord
{
    int index = -1;
    double start = 0.0;
    double length = 0.0;
    std::vector<MachinePeriodStats> machines;
    std::vector<OpPeriodStats> ops;
    std::int64_t completed_lots = 0;
    double cycle_sum = 0.0;
};

struct MachineState
{
    int id = 0;
    int family = 0;
    MachineStatus work = MachineStatus::idle;
    bool down = false;
    std::vector<int> dedicated_ops;
    double uptime_fraction = 1.0;
    double efficiency_factor = 1.0;
    double busy_until = 0.0;
    // Setup/processing time still owed when a failure interrupted work.
    double remaining_work = 0.0;
    int current_setup_key = -1;
    int current_op = -1;
    std::vector<std::int64_t> current_lots;
    std::uint64_t work_token = 0;
    std::uint64_t fail_token = 0;
    double last_status_change = 0.0;
    double pending_timeout = -1.0;
    MachinePeriodStats period;

    MachineStatus status() const noexcept { return down ? MachineStatus::down : work; }
};

// Cumulative counters; a KPI window is the difference of two snapshots.
struct KpiSnapshot
{
    double time = 0.0;
    std::vector<std::int64_t> op_outputs;
    std::vector<std::int64_t> product_completed;
    std::vector<double> product_cycle_sum;
};

struct ProductKpi
{
    std::int64_t completed_lots = 0;
    std::optional<double> avg_cycle_time_days;
    double daily_going_rate = 0.0;
    double wip_ratio = 0.0;
};

struct KpiReport
{
    double window_days = 0.0;
    std::int64_t completed_lots = 0;
    std::optional<double> avg_cycle_time_days;
    double daily_going_rate = 0.0;
    std::vector<ProductKpi> per_product;
};

class FabState
{
public:
    using Observer = std::function<void(const FabState&, const SimEvent&)>;

    FabState(std::shared_ptr<const Scenario> scenario, std::uint64_t seed);

    // Deep copy; shares only the immutable scenario.
    FabState fork() const { return *this; }

    // Processes all events with time <= until, then sets clock = until.
    void advance(double until, const Observer& observer = {});

    // Throws InfeasibleAction without mutating when any target is invalid.
    void apply_actions(const ActionSet& actions);

    KpiSnapshot snapshot() const;
    KpiReport kpi_report(const KpiSnapshot& since) const;

    // Empty string when all structural invariants hold.
    std::string check_invariants() const;

    void enable_event_log(bool on) { log_events_ = on; }
    const std::string& event_log() const noexcept { return event_log_; }

    double clock() const noexcept { return clock_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const Scenario& scenario() const noexcept { return *scenario_; }
    const std::shared_ptr<const Scenario>& scenario_ptr() const noexcept { return scenario_; }
    const std::vector<MachineState>& machines() const noexcept { return machines_; }
    const std::map<std::int64_t, Lot>& lots() const noexcept { return lots_; }
    const std::deque<std::int64_t>& queue(int op) const { return queues_.at(static_cast<std::size_t>(op)); }
    const std::vector<int>& op_dedicated(int op) const { return op_dedicated_.at(static_cast<std::size_t>(op)); }
    const PeriodRecord& last_period() const noexcept { return last_period_; }
    std::int64_t lots_released() const noexcept { return released_; }
    std::int64_t lots_completed() const noexcept { return completed_; }
    std::int64_t lots_in_flight() const noexcept { return static_cast<std::int64_t>(lots_.size()); }
    std::int64_t wip_lots(int product) const { return wip_by_product_.at(static_cast<std::size_t>(product)); }
    // Lots currently loaded on machines for this op.
    std::int64_t in_process_lots(int op) const { return op_live_.at(static_cast<std::size_t>(op)).in_process; }
    std::uint64_t events_processed() const noexcept { return events_processed_; }
    // Running mean cycle time (minutes) of every lot completed this episode; 0 when none.
    double fab_mean_cycle_minutes() const noexcept;
    // Effective per-lot (or per-batch) processing minutes of op on machine.
    double process_minutes(int machine, int op) const;

private:
    struct OpLive
    {
        std::int64_t waiting_lots = 0;
        std::int64_t waiting_wafers = 0;
        std::int64_t in_process = 0;
        double last_touch = 0.0;
        OpPeriodStats period;
    };

    void schedule(SimEvent ev);
    void handle(const SimEvent& ev);
    void on_arrival(const SimEvent& ev);
    void on_process_end(const SimEvent& ev);
    void on_setup_end(const SimEvent& ev);
    void on_down(const SimEvent& ev);
    void on_up(const SimEvent& ev);
    void on_period_boundary(const SimEvent& ev);

    void enqueue_lot(Lot& lot, int op);
    void try_start(int machine);
    void dispatch_op(int op);
    void begin_processing(MachineState& m);
    void set_work(MachineState& m, MachineStatus work);
    void account(MachineState& m);
    void touch_op(int op);
    void schedule_failure(MachineState& m);
    double mean_up_minutes(const MachineState& m) const;
    double next_interarrival(int product);
    void log_event(const SimEvent& ev, const std::string& payload);

    std::shared_ptr<const Scenario> scenario_;
    std::uint64_t seed_ = 0;
    double clock_ = 0.0;
    std::uint64_t next_seq_ = 0;
    std::priority_queue<SimEvent, std::vector<SimEvent>, EventOrder> events_;
    std::map<std::int64_t, Lot> lots_;
    std::int64_t next_lot_id_ = 0;
    std::vector<MachineState> machines_;
    std::vector<std::deque<std::int64_t>> queues_;
    std::vector<std::vector<int>> op_dedicated_;
    std::vector<OpLive> op_live_;
    std::vector<CounterRng> arrival_rng_;
    std::vector<CounterRng> machine_rng_;

    std::int64_t released_ = 0;
    std::int64_t completed_ = 0;
    std::vector<std::int64_t> wip_by_product_;
    std::vector<std::int64_t> op_outputs_;
    std::vector<std::int64_t> product_completed_;
    std::vector<double> product_cycle_sum_;
    double fab_cycle_sum_ = 0.0;

    int period_index_ = 0;
    double period_start_ = 0.0;
    std::int64_t period_completed_ = 0;
    double period_cycle_sum_ = 0.0;
    PeriodRecord last_period_;

    std::uint64_t events_processed_ = 0;
    bool log_events_ = false;
    std::string event_log_;
};

} // namespace fabcap
