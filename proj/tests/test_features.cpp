#include "fabcap/features/graph.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>
#include <sstream>

using namespace fabcap;

namespace
{

std::shared_ptr<const Scenario> minifab()
{
    static const auto s = std::make_shared<const Scenario>(resolve_scenario("minifab"));
    return s;
}

std::shared_ptr<const Scenario> midfab()
{
    static const auto s = std::make_shared<const Scenario>(resolve_scenario("midfab"));
    return s;
}

bool all_finite(const nn::Matrix& m)
{
    for (double v : m.data)
    {
        if (!std::isfinite(v))
        {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("minifab graph has the documented shape")
{
    FabState st(minifab(), 1);
    st.advance(kMinutesPerDay);
    const HeteroGraph g = extract_raw_graph(st);
    CHECK(g.machine_feats.rows == 5);
    CHECK(g.machine_feats.cols == 16);
    CHECK(g.op_feats.rows == 18);
    CHECK(g.op_feats.cols == 15);
    CHECK(g.oo_edges.size() == 15);
    CHECK(g.oo_feats.cols == 1);
    // 6 diffusion ops x 2 machines, 6 implant ops x 2, 6 litho ops x 1
    CHECK(g.om_edges.size() == 30);
    CHECK(g.om_feats.cols == 2);
    CHECK(g.pred[0] == -1);
    CHECK(g.succ[0] == 1);
    CHECK(g.succ[5] == -1);
    CHECK(g.pred[6] == -1);
}

TEST_CASE("fresh fab has zero throughput features and open u/r masks")
{
    FabState st(minifab(), 1);
    const HeteroGraph g = extract_raw_graph(st);
    for (std::size_t m = 0; m < g.num_machines(); ++m)
    {
        CHECK(g.machine_feats(m, 3) == 0.0);
        CHECK(g.machine_feats(m, 4) == 0.0);
        CHECK(g.masks.uptime[m] == 1);
        CHECK(g.masks.efficiency[m] == 1);
    }
    for (std::size_t o = 0; o < g.num_ops(); ++o)
    {
        CHECK(g.op_feats(o, 0) == 0.0);
        CHECK(g.op_feats(o, 1) == 0.0);
        CHECK(g.op_feats(o, 2) == 0.0);
        CHECK(g.op_feats(o, 3) == 0.0);
        CHECK(g.op_feats(o, 13) == 0.0);
    }
}

TEST_CASE("machine at full uptime is excluded from the uptime head")
{
    FabState st(minifab(), 1);
    ActionSet a;
    a.uptime = {4};
    for (int k = 0; k < 4; ++k)
    {
        st.apply_actions(a);
    }
    const HeteroGraph g = extract_raw_graph(st);
    CHECK(g.masks.uptime[4] == 0);
    CHECK(g.masks.uptime[0] == 1);
}

TEST_CASE("single-machine period statistics match a hand trace")
{
    // Deterministic arrivals every 144 min, 60 min per lot, no downtime.
    Scenario s;
    s.families = {{"f"}};
    MachineSpec m;
    m.name = "m";
    s.machines = {m};
    OperationSpec op;
    op.name = "op";
    op.process_minutes = 60.0;
    op.dedicated = {0};
    s.operations = {op};
    Product p;
    p.name = "p";
    p.route = {0};
    p.arrival.distribution = ArrivalDistribution::deterministic;
    p.arrival.mean_interarrival_minutes = 144.0;
    p.due_offset_minutes = 500.0;
    s.products = {p};
    validate(s);
    FabState st(std::make_shared<const Scenario>(s), 1);
    st.advance(2 * kMinutesPerDay);
    const HeteroGraph g = extract_raw_graph(st);
    // Period (1440, 2880]: starts at 1584..2880 step 144 -> 10 starts; ends 1500..2820 -> 10 completions.
    CHECK(g.machine_feats(0, 3) == 10.0);
    CHECK(g.machine_feats(0, 4) == 250.0);
    CHECK(g.machine_feats(0, 5) == doctest::Approx(60.0));
    CHECK(g.machine_feats(0, 6) == doctest::Approx(0.0));
    CHECK(g.machine_feats(0, 7) == doctest::Approx(60.0));
    CHECK(g.machine_feats(0, 8) == doctest::Approx(600.0 / 1440.0));
    CHECK(g.machine_feats(0, 10) == doctest::Approx(840.0 / 1440.0));
    CHECK(g.machine_feats(0, 12) == doctest::Approx(144.0));
    CHECK(g.op_feats(0, 1) == 10.0);
    CHECK(g.op_feats(0, 13) == doctest::Approx(10.0));
    CHECK(g.op_feats(0, 10) == doctest::Approx(60.0));
    CHECK(g.op_feats(0, 14) == doctest::Approx(60.0));
    // The lot released at 2880 is in process with zero age.
    CHECK(g.op_feats(0, 7) == doctest::Approx(500.0));
    CHECK(g.machine_feats(0, 14) == 1.0);
    CHECK(g.om_feats(0, 0) == doctest::Approx(60.0));
}

TEST_CASE("dedication masks follow current dedications")
{
    auto sp = midfab();
    FabState st(sp, 3);
    const HeteroGraph g = extract_raw_graph(st);
    std::size_t dedicated = 0;
    for (std::size_t e = 0; e < g.om_edges.size(); ++e)
    {
        const auto& edge = g.om_edges[e];
        const auto& ded = st.op_dedicated(edge.op);
        const bool is_ded = std::find(ded.begin(), ded.end(), edge.machine) != ded.end();
        CHECK(edge.dedicated == is_ded);
        CHECK(sp->compatible(edge.machine, edge.op));
        CHECK(g.masks.ded_add[e] == (is_ded ? 0 : 1));
        CHECK(g.masks.ded_remove[e] == ((is_ded && ded.size() >= 2) ? 1 : 0));
        dedicated += is_ded;
    }
    std::size_t expected = 0;
    for (std::size_t o = 0; o < sp->num_operations(); ++o)
    {
        expected += st.op_dedicated(static_cast<int>(o)).size();
    }
    CHECK(dedicated == expected);
}

TEST_CASE("graph structure depends only on dedications and routes")
{
    FabState st(minifab(), 5);
    st.advance(kMinutesPerDay);
    const HeteroGraph a = extract_raw_graph(st);
    st.advance(3 * kMinutesPerDay);
    const HeteroGraph b = extract_raw_graph(st);
    REQUIRE(a.om_edges.size() == b.om_edges.size());
    for (std::size_t e = 0; e < a.om_edges.size(); ++e)
    {
        CHECK(a.om_edges[e].op == b.om_edges[e].op);
        CHECK(a.om_edges[e].machine == b.om_edges[e].machine);
        CHECK(a.om_edges[e].dedicated == b.om_edges[e].dedicated);
    }
    CHECK(a.pred == b.pred);
    CHECK(a.succ == b.succ);
    CHECK(a.oo_feats == b.oo_feats);

    const HeteroGraph again = extract_raw_graph(st);
    CHECK(again.machine_feats == b.machine_feats);
    CHECK(again.op_feats == b.op_feats);
}

TEST_CASE("features stay finite on fuzzed states")
{
    for (std::uint64_t seed = 0; seed < 30; ++seed)
    {
        auto sp = seed % 3 == 0 ? midfab() : minifab();
        FabState st(sp, seed);
        FeatureNormalizer norm;
        CounterRng rng(seed, 99);
        for (int day = 1; day <= 4; ++day)
        {
            st.advance(day * kMinutesPerDay);
            ActionSet a;
            a.efficiency = {static_cast<int>(rng.below(sp->num_machines()))};
            st.apply_actions(a);
            const HeteroGraph g = extract_graph(st, &norm);
            CHECK(all_finite(g.machine_feats));
            CHECK(all_finite(g.op_feats));
            CHECK(all_finite(g.om_feats));
            CHECK(all_finite(g.oo_feats));
        }
    }
}

TEST_CASE("oo edge feature encodes route progress")
{
    FabState st(minifab(), 1);
    const HeteroGraph g = extract_raw_graph(st);
    for (std::size_t e = 0; e < 5; ++e)
    {
        CHECK(g.oo_feats(e, 0) == doctest::Approx(static_cast<double>(e + 1) / 6.0));
    }
}

TEST_CASE("running statistics merge equals sequential observation")
{
    CounterRng rng(4, 0);
    nn::Matrix a(37, 3), b(11, 3);
    for (auto& v : a.data)
    {
        v = rng.uniform() * 10.0 - 3.0;
    }
    for (auto& v : b.data)
    {
        v = rng.exponential(5.0);
    }
    RunningStats seq(3), left(3), right(3);
    seq.observe_rows(a);
    seq.observe_rows(b);
    left.observe_rows(a);
    right.observe_rows(b);
    left.merge(right);
    CHECK(left.count() == seq.count());
    for (std::size_t c = 0; c < 3; ++c)
    {
        CHECK(left.mean(c) == doctest::Approx(seq.mean(c)).epsilon(1e-12));
        CHECK(left.variance(c) == doctest::Approx(seq.variance(c)).epsilon(1e-12));
        double mean = 0.0;
        for (std::size_t r = 0; r < a.rows; ++r)
        {
            mean += a(r, c);
        }
        for (std::size_t r = 0; r < b.rows; ++r)
        {
            mean += b(r, c);
        }
        mean /= 48.0;
        double var = 0.0;
        for (std::size_t r = 0; r < a.rows; ++r)
        {
            var += (a(r, c) - mean) * (a(r, c) - mean);
        }
        for (std::size_t r = 0; r < b.rows; ++r)
        {
            var += (b(r, c) - mean) * (b(r, c) - mean);
        }
        CHECK(seq.mean(c) == doctest::Approx(mean).epsilon(1e-12));
        CHECK(seq.variance(c) == doctest::Approx(var / 48.0).epsilon(1e-12));
    }
}

TEST_CASE("normalization is invertible and floors the variance")
{
    RunningStats stats(2);
    nn::Matrix x(4, 2, {1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0, 5.0});
    stats.observe_rows(x);
    CHECK(stats.variance(1) == RunningStats::kVarianceFloor);
    nn::Matrix y = x;
    stats.normalize(y);
    CHECK(y(0, 1) == 0.0);
    double mean0 = 0.0;
    for (std::size_t r = 0; r < 4; ++r)
    {
        mean0 += y(r, 0);
    }
    CHECK(std::abs(mean0) < 1e-12);
    stats.denormalize(y);
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        CHECK(y.data[i] == doctest::Approx(x.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("frozen normalizer applies but does not learn")
{
    FabState st(minifab(), 2);
    st.advance(kMinutesPerDay);
    FeatureNormalizer norm;
    extract_graph(st, &norm);
    const FeatureNormalizer before = norm;
    norm.frozen = true;
    st.advance(2 * kMinutesPerDay);
    const HeteroGraph g = extract_graph(st, &norm);
    CHECK(norm.machine == before.machine);
    HeteroGraph manual = extract_raw_graph(st);
    before.apply(manual);
    CHECK(g.machine_feats == manual.machine_feats);
}

TEST_CASE("graph dump lists every node and edge")
{
    FabState st(minifab(), 2);
    const HeteroGraph g = extract_raw_graph(st);
    std::ostringstream out;
    dump_graph(g, out);
    const std::string text = out.str();
    std::size_t lines = 0;
    for (char c : text)
    {
        lines += c == '\n';
    }
    CHECK(lines == 4 + 5 + 18 + 30 + 15);
}
