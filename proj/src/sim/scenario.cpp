#include "fabcap/sim/scenario.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fabcap
{

using nlohmann::json;

namespace
{

template <typename T>
T field(const json& j, const char* key, const std::string& path)
{
    if (!j.is_object() || !j.contains(key))
    {
        throw ScenarioError(path + "." + key + ": missing required field");
    }
    try
    {
        return j.at(key).get<T>();
    }
    catch (const json::exception&)
    {
        throw ScenarioError(path + "." + key + ": wrong type");
    }
}

template <typename T>
T field_or(const json& j, const char* key, const std::string& path, T fallback)
{
    if (!j.is_object() || !j.contains(key))
    {
        return fallback;
    }
    return field<T>(j, key, path);
}

const json& array_field(const json& j, const char* key, const std::string& path)
{
    if (!j.is_object() || !j.contains(key) || !j.at(key).is_array())
    {
        throw ScenarioError(path + "." + key + ": expected an array");
    }
    return j.at(key);
}

std::string op_label(const Scenario& s, std::size_t o)
{
    return "operation '" + s.operations[o].name + "' (operations[" + std::to_string(o) + "])";
}

std::string machine_label(const Scenario& s, std::size_t m)
{
    return "machine '" + s.machines[m].name + "' (machines[" + std::to_string(m) + "])";
}

} // namespace

void validate(Scenario& s)
{
    if (s.families.empty() || s.machines.empty() || s.products.empty())
    {
        throw ScenarioError("scenario needs at least one family, machine and product");
    }
    if (!(s.decision_period_minutes > 0.0))
    {
        throw ScenarioError("decision_period_minutes must be positive");
    }
    if (s.horizon_periods < 1)
    {
        throw ScenarioError("horizon_periods must be >= 1");
    }
    if (s.batch_timeout_minutes < 0.0)
    {
        throw ScenarioError("batch_timeout_minutes must be >= 0");
    }
    if (s.sigma.uptime < 0 || s.sigma.efficiency < 0 || s.sigma.dedication_add < 0 || s.sigma.dedication_remove < 0)
    {
        throw ScenarioError("sigma budgets must be >= 0");
    }

    const int nf = static_cast<int>(s.families.size());
    s.family_machines.assign(s.families.size(), {});
    for (std::size_t m = 0; m < s.machines.size(); ++m)
    {
        const auto& ms = s.machines[m];
        if (ms.family < 0 || ms.family >= nf)
        {
            throw ScenarioError(machine_label(s, m) + ": unknown family");
        }
        if (ms.min_batch < 1 || ms.max_batch < ms.min_batch)
        {
            throw ScenarioError(machine_label(s, m) + ": need 1 <= min_batch <= max_batch");
        }
        if (!(ms.base_uptime > 0.0 && ms.base_uptime <= 1.0))
        {
            throw ScenarioError(machine_label(s, m) + ": uptime must be in (0, 1]");
        }
        if (ms.base_uptime < 1.0 && !(ms.mean_repair_minutes > 0.0))
        {
            throw ScenarioError(machine_label(s, m) + ": mean_repair_minutes must be positive when uptime < 1");
        }
        if (!(ms.process_time_factor > 0.0))
        {
            throw ScenarioError(machine_label(s, m) + ": process_time_factor must be positive");
        }
        s.family_machines[static_cast<std::size_t>(ms.family)].push_back(static_cast<int>(m));
    }

    std::size_t route_total = 0;
    std::vector<int> seen(s.operations.size(), 0);
    for (std::size_t p = 0; p < s.products.size(); ++p)
    {
        const auto& prod = s.products[p];
        const std::string label = "product '" + prod.name + "' (products[" + std::to_string(p) + "])";
        if (prod.route.empty())
        {
            throw ScenarioError(label + ": route must have at least one step");
        }
        if (!(prod.arrival.mean_interarrival_minutes > 0.0))
        {
            throw ScenarioError(label + ": mean interarrival time must be positive");
        }
        if (prod.arrival.wafers_per_lot < 1)
        {
            throw ScenarioError(label + ": wafers_per_lot must be >= 1");
        }
        if (prod.due_offset_minutes < 0.0)
        {
            throw ScenarioError(label + ": due_offset_minutes must be >= 0");
        }
        route_total += prod.route.size();
        for (std::size_t j = 0; j < prod.route.size(); ++j)
        {
            const int o = prod.route[j];
            if (o < 0 || static_cast<std::size_t>(o) >= s.operations.size())
            {
                throw ScenarioError(label + ": route[" + std::to_string(j) + "] is not a valid operation id");
            }
            const auto& op = s.operations[static_cast<std::size_t>(o)];
            if (op.product != static_cast<int>(p) || op.step != static_cast<int>(j))
            {
                throw ScenarioError(op_label(s, static_cast<std::size_t>(o)) + ": product/step does not match route");
            }
            ++seen[static_cast<std::size_t>(o)];
        }
    }
    if (route_total != s.operations.size())
    {
        throw ScenarioError("operation count " + std::to_string(s.operations.size()) +
                            " does not equal the sum of route lengths " + std::to_string(route_total));
    }

    s.compatible_ops.assign(s.machines.size(), {});
    for (std::size_t o = 0; o < s.operations.size(); ++o)
    {
        auto& op = s.operations[o];
        if (seen[o] != 1)
        {
            throw ScenarioError(op_label(s, o) + ": must appear in exactly one route position");
        }
        if (op.family < 0 || op.family >= nf)
        {
            throw ScenarioError(op_label(s, o) + ": unknown family");
        }
        if (!(op.process_minutes > 0.0))
        {
            throw ScenarioError(op_label(s, o) + ": process_minutes must be positive");
        }
        if (op.setup_minutes < 0.0)
        {
            throw ScenarioError(op_label(s, o) + ": setup_minutes must be >= 0");
        }
        if (s.family_machines[static_cast<std::size_t>(op.family)].empty())
        {
            throw ScenarioError(op_label(s, o) + ": has no compatible machine");
        }
        if (op.dedicated.empty())
        {
            throw ScenarioError(op_label(s, o) + ": has no dedicated machine");
        }
        std::set<int> uniq;
        for (int m : op.dedicated)
        {
            if (m < 0 || static_cast<std::size_t>(m) >= s.machines.size())
            {
                throw ScenarioError(op_label(s, o) + ": dedicated machine id out of range");
            }
            if (s.machines[static_cast<std::size_t>(m)].family != op.family)
            {
                throw ScenarioError(op_label(s, o) + ": dedicated to incompatible " +
                                    machine_label(s, static_cast<std::size_t>(m)));
            }
            if (!uniq.insert(m).second)
            {
                throw ScenarioError(op_label(s, o) + ": duplicate dedication");
            }
        }
        for (int m : s.family_machines[static_cast<std::size_t>(op.family)])
        {
            s.compatible_ops[static_cast<std::size_t>(m)].push_back(static_cast<int>(o));
        }
    }
}

namespace
{

json to_json(const Scenario& s)
{
    json j;
    j["name"] = s.name;
    j["decision_period_minutes"] = s.decision_period_minutes;
    j["horizon_periods"] = s.horizon_periods;
    j["batch_timeout_minutes"] = s.batch_timeout_minutes;
    j["sigma"] = {{"uptime", s.sigma.uptime},
                  {"efficiency", s.sigma.efficiency},
                  {"dedication_remove", s.sigma.dedication_remove},
                  {"dedication_add", s.sigma.dedication_add}};
    j["families"] = json::array();
    for (const auto& f : s.families)
    {
        j["families"].push_back({{"name", f.name}});
    }
    j["machines"] = json::array();
    for (const auto& m : s.machines)
    {
        j["machines"].push_back({{"name", m.name},
                                 {"family", s.families[static_cast<std::size_t>(m.family)].name},
                                 {"min_batch", m.min_batch},
                                 {"max_batch", m.max_batch},
                                 {"uptime", m.base_uptime},
                                 {"mean_repair_minutes", m.mean_repair_minutes},
                                 {"process_time_factor", m.process_time_factor}});
    }
    j["products"] = json::array();
    for (const auto& p : s.products)
    {
        json route = json::array();
        for (int o : p.route)
        {
            const auto& op = s.operations[static_cast<std::size_t>(o)];
            json machines = json::array();
            for (int m : op.dedicated)
            {
                machines.push_back(s.machines[static_cast<std::size_t>(m)].name);
            }
            route.push_back({{"name", op.name},
                             {"family", s.families[static_cast<std::size_t>(op.family)].name},
                             {"process_minutes", op.process_minutes},
                             {"setup_minutes", op.setup_minutes},
                             {"optional", op.optional},
                             {"machines", machines}});
        }
        j["products"].push_back(
            {{"name", p.name},
             {"wafers_per_lot", p.arrival.wafers_per_lot},
             {"interarrival",
              {{"distribution",
                p.arrival.distribution == ArrivalDistribution::exponential ? "exponential" : "deterministic"},
               {"mean_minutes", p.arrival.mean_interarrival_minutes}}},
             {"due_offset_minutes", p.due_offset_minutes},
             {"route", route}});
    }
    return j;
}

Scenario from_json(const json& j)
{
    if (!j.is_object())
    {
        throw ScenarioError("$: scenario must be an object");
    }
    Scenario s;
    s.name = field_or<std::string>(j, "name", "$", "unnamed");
    s.decision_period_minutes = field<double>(j, "decision_period_minutes", "$");
    s.horizon_periods = field<int>(j, "horizon_periods", "$");
    s.batch_timeout_minutes = field_or<double>(j, "batch_timeout_minutes", "$", 120.0);
    if (j.contains("sigma"))
    {
        const json& sg = j.at("sigma");
        s.sigma.uptime = field_or<int>(sg, "uptime", "$.sigma", 0);
        s.sigma.efficiency = field_or<int>(sg, "efficiency", "$.sigma", 0);
        s.sigma.dedication_remove = field_or<int>(sg, "dedication_remove", "$.sigma", 0);
        s.sigma.dedication_add = field_or<int>(sg, "dedication_add", "$.sigma", 0);
    }

    std::map<std::string, int> family_ids;
    const json& fams = array_field(j, "families", "$");
    for (std::size_t i = 0; i < fams.size(); ++i)
    {
        const std::string path = "$.families[" + std::to_string(i) + "]";
        FamilySpec f{field<std::string>(fams[i], "name", path)};
        if (!family_ids.emplace(f.name, static_cast<int>(i)).second)
        {
            throw ScenarioError(path + ".name: duplicate family '" + f.name + "'");
        }
        s.families.push_back(std::move(f));
    }
    auto family_of = [&](const std::string& name, const std::string& path) {
        auto it = family_ids.find(name);
        if (it == family_ids.end())
        {
            throw ScenarioError(path + ": unknown family '" + name + "'");
        }
        return it->second;
    };

    std::map<std::string, int> machine_ids;
    const json& machines = array_field(j, "machines", "$");
    for (std::size_t i = 0; i < machines.size(); ++i)
    {
        const std::string path = "$.machines[" + std::to_string(i) + "]";
        const json& mj = machines[i];
        MachineSpec m;
        m.name = field<std::string>(mj, "name", path);
        m.family = family_of(field<std::string>(mj, "family", path), path + ".family");
        m.min_batch = field_or<int>(mj, "min_batch", path, 1);
        m.max_batch = field_or<int>(mj, "max_batch", path, 1);
        m.base_uptime = field_or<double>(mj, "uptime", path, 1.0);
        m.mean_repair_minutes = field_or<double>(mj, "mean_repair_minutes", path, 0.0);
        m.process_time_factor = field_or<double>(mj, "process_time_factor", path, 1.0);
        if (!machine_ids.emplace(m.name, static_cast<int>(i)).second)
        {
            throw ScenarioError(path + ".name: duplicate machine '" + m.name + "'");
        }
        s.machines.push_back(std::move(m));
    }

    const json& products = array_field(j, "products", "$");
    for (std::size_t p = 0; p < products.size(); ++p)
    {
        const std::string path = "$.products[" + std::to_string(p) + "]";
        const json& pj = products[p];
        Product prod;
        prod.name = field<std::string>(pj, "name", path);
        prod.arrival.wafers_per_lot = field_or<int>(pj, "wafers_per_lot", path, 25);
        prod.due_offset_minutes = field_or<double>(pj, "due_offset_minutes", path, 0.0);
        if (!pj.contains("interarrival"))
        {
            throw ScenarioError(path + ".interarrival: missing required field");
        }
        const json& ia = pj.at("interarrival");
        const auto dist = field_or<std::string>(ia, "distribution", path + ".interarrival", "exponential");
        if (dist == "exponential")
        {
            prod.arrival.distribution = ArrivalDistribution::exponential;
        }
        else if (dist == "deterministic")
        {
            prod.arrival.distribution = ArrivalDistribution::deterministic;
        }
        else
        {
            throw ScenarioError(path + ".interarrival.distribution: unknown distribution '" + dist + "'");
        }
        prod.arrival.mean_interarrival_minutes = field<double>(ia, "mean_minutes", path + ".interarrival");

        const json& route = array_field(pj, "route", path);
        for (std::size_t k = 0; k < route.size(); ++k)
        {
            const std::string rpath = path + ".route[" + std::to_string(k) + "]";
            const json& oj = route[k];
            OperationSpec op;
            op.product = static_cast<int>(p);
            op.step = static_cast<int>(k);
            op.name = field_or<std::string>(oj, "name", rpath, prod.name + "-" + std::to_string(k + 1));
            op.family = family_of(field<std::string>(oj, "family", rpath), rpath + ".family");
            op.process_minutes = field<double>(oj, "process_minutes", rpath);
            op.setup_minutes = field_or<double>(oj, "setup_minutes", rpath, 0.0);
            op.optional = field_or<bool>(oj, "optional", rpath, false);
            if (oj.contains("machines"))
            {
                const json& ms = array_field(oj, "machines", rpath);
                for (std::size_t q = 0; q < ms.size(); ++q)
                {
                    const std::string mpath = rpath + ".machines[" + std::to_string(q) + "]";
                    if (!ms[q].is_string())
                    {
                        throw ScenarioError(mpath + ": expected a machine name");
                    }
                    auto it = machine_ids.find(ms[q].get<std::string>());
                    if (it == machine_ids.end())
                    {
                        throw ScenarioError(mpath + ": unknown machine '" + ms[q].get<std::string>() + "'");
                    }
                    op.dedicated.push_back(it->second);
                }
            }
            else
            {
                // Default: every machine of the family.
                for (std::size_t m = 0; m < s.machines.size(); ++m)
                {
                    if (s.machines[m].family == op.family)
                    {
                        op.dedicated.push_back(static_cast<int>(m));
                    }
                }
            }
            prod.route.push_back(static_cast<int>(s.operations.size()));
            s.operations.push_back(std::move(op));
        }
        s.products.push_back(std::move(prod));
    }
    validate(s);
    return s;
}

} // namespace

Scenario parse_scenario(std::string_view json_text)
{
    json j;
    try
    {
        j = json::parse(json_text);
    }
    catch (const json::parse_error& e)
    {
        throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

std::string dump_scenario(const Scenario& s)
{
    return to_json(s).dump(2) + "\n";
}

Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
    {
        throw ScenarioError("cannot open scenario file " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

void save_scenario(const Scenario& s, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
    {
        throw ScenarioError("cannot write scenario file " + path.string());
    }
    out << dump_scenario(s);
}

std::uint64_t scenario_hash(const Scenario& s)
{
    const std::string text = to_json(s).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::filesystem::path bundled_data_dir()
{
#ifdef FABCAP_DATA_DIR
    return FABCAP_DATA_DIR;
#else
    return "data";
#endif
}

Scenario resolve_scenario(const std::string& name_or_path)
{
    if (name_or_path == "minifab" || name_or_path == "toy2")
    {
        return load_scenario(bundled_data_dir() / (name_or_path + ".json"));
    }
    if (name_or_path == "midfab")
    {
        return generate_synthetic(midfab_shape(), 0);
    }
    if (name_or_path == "smt2020")
    {
        return generate_synthetic(smt2020_shape(), 0);
    }
    return load_scenario(name_or_path);
}

} // namespace fabcap
