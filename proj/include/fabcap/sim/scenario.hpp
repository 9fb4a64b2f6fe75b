#pragma once

// Immutable description of a fab: machine families, machines, product routes
// (one product-specific operation per route step), arrivals, and the
// decision-step budgets. Scenarios are validated eagerly on load/generation.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fabcap
{

inline constexpr double kMinutesPerDay = 1440.0;

class ScenarioError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct FamilySpec
{
    std::string name;

    bool operator==(const FamilySpec&) const = default;
};

struct MachineSpec
{
    std::string name;
    int family = 0;
    int min_batch = 1;
    int max_batch = 1;
    // Stationary availability in (0, 1].
    double base_uptime = 1.0;
    double mean_repair_minutes = 0.0;
    // Multiplies every nominal processing time on this machine.
    double process_time_factor = 1.0;

    bool is_batch() const noexcept { return max_batch > 1; }
    bool operator==(const MachineSpec&) const = default;
};

struct OperationSpec
{
    std::string name;
    int product = 0;
    int step = 0;
    int family = 0;
    // Per lot, or per batch on batching machines.
    double process_minutes = 0.0;
    // Incurred when a machine switches to this operation.
    double setup_minutes = 0.0;
    bool optional = false;
    // Machines initially dedicated to this operation; ordered, distinct, same family.
    std::vector<int> dedicated;

    bool operator==(const OperationSpec&) const = default;
};

enum class ArrivalDistribution
{
    exponential,
    deterministic,
};

struct ArrivalSpec
{
    ArrivalDistribution distribution = ArrivalDistribution::exponential;
    double mean_interarrival_minutes = 0.0;
    int wafers_per_lot = 25;

    bool operator==(const ArrivalSpec&) const = default;
};

struct Product
{
    std::string name;
    // Operation ids in processing order.
    std::vector<int> route;
    ArrivalSpec arrival;
    // Target cycle time used for remaining-due-time features.
    double due_offset_minutes = 0.0;

    std::size_t route_length() const noexcept { return route.size(); }
    bool operator==(const Product&) const = default;
};

struct SigmaBudget
{
    int uptime = 1;
    int efficiency = 1;
    int dedication_remove = 0;
    int dedication_add = 0;

    bool operator==(const SigmaBudget&) const = default;
};

struct Scenario
{
    std::string name;
    std::vector<FamilySpec> families;
    std::vector<MachineSpec> machines;
    std::vector<OperationSpec> operations;
    std::vector<Product> products;
    double decision_period_minutes = kMinutesPerDay;
    int horizon_periods = 5;
    double batch_timeout_minutes = 120.0;
    SigmaBudget sigma;

    // Derived by validate(); not serialized.
    std::vector<std::vector<int>> family_machines;
    std::vector<std::vector<int>> compatible_ops;

    bool operator==(const Scenario& o) const
    {
        return name == o.name && families == o.families && machines == o.machines && operations == o.operations &&
               products == o.products && decision_period_minutes == o.decision_period_minutes &&
               horizon_periods == o.horizon_periods && batch_timeout_minutes == o.batch_timeout_minutes &&
               sigma == o.sigma;
    }

    std::size_t num_machines() const noexcept { return machines.size(); }
    std::size_t num_operations() const noexcept { return operations.size(); }
    std::size_t num_products() const noexcept { return products.size(); }
    double horizon_minutes() const noexcept { return decision_period_minutes * horizon_periods; }

    // True when machine m may ever be dedicated to operation o.
    bool compatible(int machine, int op) const
    {
        return machines.at(static_cast<std::size_t>(machine)).family ==
               operations.at(static_cast<std::size_t>(op)).family;
    }
};

// Checks every invariant and fills the derived tables. Throws ScenarioError
// naming the offending record.
void validate(Scenario& s);

Scenario parse_scenario(std::string_view json_text);
std::string dump_scenario(const Scenario& s);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

// FNV-1a over the canonical serialization; stable across runs and builds.
std::uint64_t scenario_hash(const Scenario& s);

// Resolves "minifab"/"toy2" to bundled files and "midfab"/"smt2020" to
// generated scenarios (seed 0); anything else is treated as a file path.
Scenario resolve_scenario(const std::string& name_or_path);
std::filesystem::path bundled_data_dir();

struct GeneratorSpec
{
    int machines = 200;
    int products = 5;
    int families = 30;
    int route_min = 100;
    int route_max = 140;
    // Exact |O| when positive; route lengths are repaired to hit it.
    int total_operations = 0;
    // Force one route of route_min and one of route_max steps.
    bool pin_route_extremes = false;
    double batch_family_fraction = 0.15;
    int max_batch = 4;
    // Busiest family's utilization before the load factor is applied.
    double target_utilization = 0.85;
    double load_factor = 1.25;
    int min_dedications = 1;
    double dedication_fraction = 0.7;
    double uptime_min = 0.85;
    double uptime_max = 0.97;
    double decision_period_minutes = 7.0 * kMinutesPerDay;
    int horizon_periods = 25;
    SigmaBudget sigma{5, 5, 5, 5};
};

GeneratorSpec smt2020_shape();
GeneratorSpec midfab_shape();

Scenario generate_synthetic(const GeneratorSpec& spec, std::uint64_t seed);

} // namespace fabcap
