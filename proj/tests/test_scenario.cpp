#include "fabcap/sim/fab_state.hpp"
#include "fabcap/sim/scenario.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <set>

using namespace fabcap;

namespace
{

const char* kTwoStep = R"({
  "name": "tiny",
  "decision_period_minutes": 1440,
  "horizon_periods": 2,
  "families": [{"name": "f0"}, {"name": "f1"}],
  "machines": [{"name": "m0", "family": "f0"}, {"name": "m1", "family": "f1"}],
  "products": [{"name": "p", "interarrival": {"mean_minutes": 100},
                "route": [{"family": "f0", "process_minutes": 10}, {"family": "f1", "process_minutes": 20}]}]
})";

std::string error_of(const std::string& text)
{
    try
    {
        parse_scenario(text);
    }
    catch (const ScenarioError& e)
    {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("bundled minifab has the expected structure")
{
    const Scenario s = resolve_scenario("minifab");
    CHECK(s.num_products() == 3);
    CHECK(s.num_machines() == 5);
    CHECK(s.num_operations() == 18);
    for (const auto& p : s.products)
    {
        CHECK(p.route_length() == 6);
    }
    CHECK(s.sigma.uptime == 1);
    CHECK(s.sigma.efficiency == 1);
    CHECK(s.sigma.dedication_add == 0);
    CHECK(s.sigma.dedication_remove == 0);
}

TEST_CASE("bundled toy2 scenario loads")
{
    const Scenario s = resolve_scenario("toy2");
    CHECK(s.num_machines() == 2);
    CHECK(s.num_operations() == 2);
}

TEST_CASE("parse assigns operation ids in route order and defaults dedications to the family")
{
    const Scenario s = parse_scenario(kTwoStep);
    REQUIRE(s.num_operations() == 2);
    CHECK(s.products[0].route == std::vector<int>{0, 1});
    CHECK(s.operations[0].dedicated == std::vector<int>{0});
    CHECK(s.operations[1].dedicated == std::vector<int>{1});
    CHECK(s.compatible(0, 0));
    CHECK_FALSE(s.compatible(0, 1));
    CHECK(s.sigma == SigmaBudget{});
}

TEST_CASE("operation without a compatible machine is rejected with its name")
{
    std::string text = kTwoStep;
    text.replace(text.find(R"({"name": "f1"})"), 14, R"({"name": "f1"}, {"name": "empty"})");
    text.replace(text.find(R"({"family": "f1", "process_minutes")"), 15, R"({"family": "empty")");
    const std::string err = error_of(text);
    CHECK(err.find("has no compatible machine") != std::string::npos);
    CHECK(err.find("p-2") != std::string::npos);
}

TEST_CASE("schema errors carry a field path")
{
    std::string text = kTwoStep;
    text.replace(text.find(R"("process_minutes": 20)"), 21, R"("process_minutes": "x")");
    CHECK(error_of(text).find("$.products[0].route[1].process_minutes") != std::string::npos);

    std::string unknown = kTwoStep;
    unknown.replace(unknown.find(R"("family": "f1"})"), 15, R"("family": "nope"})");
    CHECK(error_of(unknown).find("$.machines[1].family") != std::string::npos);

    CHECK(error_of("{").find("not valid JSON") != std::string::npos);
    CHECK(error_of("{}").find("decision_period_minutes") != std::string::npos);
}

TEST_CASE("save and load round trip")
{
    const Scenario s = resolve_scenario("minifab");
    const auto path = std::filesystem::temp_directory_path() / "fabcap_roundtrip.json";
    save_scenario(s, path);
    const Scenario back = load_scenario(path);
    std::filesystem::remove(path);
    CHECK(back == s);
    CHECK(scenario_hash(back) == scenario_hash(s));

    Scenario changed = s;
    changed.machines[0].base_uptime = 0.5;
    CHECK(scenario_hash(changed) != scenario_hash(s));
}

TEST_CASE("generated large shape hits the structural statistics exactly")
{
    const Scenario s = generate_synthetic(smt2020_shape(), 3);
    CHECK(s.num_machines() == 1314);
    CHECK(s.num_products() == 10);
    CHECK(s.num_operations() == 4014);
    std::size_t lo = 1u << 30, hi = 0;
    for (const auto& p : s.products)
    {
        lo = std::min(lo, p.route_length());
        hi = std::max(hi, p.route_length());
    }
    CHECK(lo == 242);
    CHECK(hi == 583);
    CHECK(s.families.size() == 105);
}

TEST_CASE("midfab is valid and simulates")
{
    const Scenario s = resolve_scenario("midfab");
    CHECK(s.num_machines() == 200);
    CHECK(s.num_operations() == 600);
    auto sp = std::make_shared<const Scenario>(s);
    FabState st(sp, 1);
    st.advance(kMinutesPerDay);
    CHECK(st.lots_released() > 0);
    CHECK(st.check_invariants().empty());
}

TEST_CASE("generator is deterministic per seed")
{
    const auto spec = midfab_shape();
    CHECK(generate_synthetic(spec, 11) == generate_synthetic(spec, 11));
    CHECK_FALSE(generate_synthetic(spec, 11) == generate_synthetic(spec, 12));
}

TEST_CASE("generator rejects more required dedications than machines")
{
    GeneratorSpec g = midfab_shape();
    g.machines = 20;
    g.families = 15;
    g.min_dedications = 2;
    CHECK_THROWS_AS(generate_synthetic(g, 0), ScenarioError);
    CHECK_THROWS_WITH(generate_synthetic(g, 0), doctest::Contains("infeasible spec"));
}

TEST_CASE("every generated route re-enters a family")
{
    for (std::uint64_t seed = 0; seed < 20; ++seed)
    {
        GeneratorSpec g = midfab_shape();
        g.route_min = 4;
        g.route_max = 12;
        g.total_operations = 0;
        g.families = 10;
        g.machines = 30;
        const Scenario s = generate_synthetic(g, seed);
        for (const auto& p : s.products)
        {
            std::set<int> fams;
            for (int o : p.route)
            {
                fams.insert(s.operations[static_cast<std::size_t>(o)].family);
            }
            CHECK(fams.size() < p.route.size());
        }
    }
}

TEST_CASE("accepted midfab scenarios simulate a full horizon at any seed")
{
    // Validation is total: generated scenarios never trip the simulator.
    const GeneratorSpec g = midfab_shape();
    for (std::uint64_t seed = 0; seed < 100; ++seed)
    {
        auto sp = std::make_shared<const Scenario>(generate_synthetic(g, seed));
        FabState st(sp, seed);
        CHECK_NOTHROW(st.advance(sp->horizon_minutes()));
        CHECK(st.check_invariants().empty());
    }
}
