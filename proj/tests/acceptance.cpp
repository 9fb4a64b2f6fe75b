// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails. Optional arguments select criteria by number.

#include "fabcap/baselines/baselines.hpp"
#include "fabcap/policy/policy_net.hpp"
#include "fabcap/train/trainer.hpp"

#include "dgr_oracle.hpp"
#include "gradcheck.hpp"
#include "policy_fixtures.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <sys/resource.h>
#include <vector>

using namespace fabcap;
using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace
{

constexpr int kFuzzSeeds = 100;
constexpr double kFuzzDays = 5.0;
constexpr double kForkDay = 2.0;
constexpr double kForkEndDay = 5.0;
constexpr int kOracleRuns = 20;
constexpr double kOracleTol = 1e-9;
constexpr double kGradEps = 1e-4;
constexpr double kGradTol = 1e-4;
constexpr int kEquivarianceGraphs = 50;
constexpr double kEquivarianceTol = 1e-12;
constexpr double kBellmanTol = 1e-9;
constexpr double kZscoreTol = 1e-6;
constexpr int kBanditMaxUpdates = 200;
constexpr double kBanditTarget = 0.9;
constexpr int kMinifabEpochs = 100;
constexpr int kMinifabBatch = 8;
constexpr int kMinifabEvalEpisodes = 16;
constexpr double kMinLotGain = 0.05;
constexpr double kMinCycleGain = 0.05;
constexpr int kVarianceSteps = 100;
constexpr double kScaleSeconds = 60.0;
constexpr double kScaleBytes = 4.0 * 1024 * 1024 * 1024;

struct Outcome
{
    bool pass = false;
    std::string detail;
};

std::string format(const char* fmt, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

std::shared_ptr<const Scenario> shared(Scenario s)
{
    return std::make_shared<const Scenario>(std::move(s));
}

bool same_report(const KpiReport& a, const KpiReport& b)
{
    if (a.window_days != b.window_days || a.completed_lots != b.completed_lots ||
        a.avg_cycle_time_days != b.avg_cycle_time_days || a.daily_going_rate != b.daily_going_rate ||
        a.per_product.size() != b.per_product.size())
    {
        return false;
    }
    for (std::size_t p = 0; p < a.per_product.size(); ++p)
    {
        const auto& x = a.per_product[p];
        const auto& y = b.per_product[p];
        if (x.completed_lots != y.completed_lots || x.avg_cycle_time_days != y.avg_cycle_time_days ||
            x.daily_going_rate != y.daily_going_rate || x.wip_ratio != y.wip_ratio)
        {
            return false;
        }
    }
    return true;
}

std::vector<int> route_lengths(const Scenario& s)
{
    std::vector<int> out;
    for (const auto& p : s.products)
    {
        out.push_back(static_cast<int>(p.route_length()));
    }
    return out;
}

// 1 -------------------------------------------------------------------------------

Outcome simulator_determinism()
{
    const std::vector<std::shared_ptr<const Scenario>> scenarios{shared(resolve_scenario("minifab")),
                                                                  shared(resolve_scenario("midfab"))};
    std::int64_t violations = 0;
    std::int64_t mismatches = 0;
    std::uint64_t events = 0;
    std::string first_violation;
    for (const auto& sp : scenarios)
    {
        for (std::uint64_t seed = 0; seed < kFuzzSeeds; ++seed)
        {
            FabState a(sp, seed);
            a.enable_event_log(true);
            a.advance(kFuzzDays * kMinutesPerDay, [&](const FabState& f, const SimEvent&) {
                const std::string why = f.check_invariants();
                if (!why.empty())
                {
                    if (violations == 0)
                    {
                        first_violation = sp->name + " seed " + std::to_string(seed) + ": " + why;
                    }
                    ++violations;
                }
            });
            FabState b(sp, seed);
            b.enable_event_log(true);
            b.advance(kFuzzDays * kMinutesPerDay);
            const KpiSnapshot zero = FabState(sp, seed).snapshot();
            if (a.event_log() != b.event_log() || a.events_processed() != b.events_processed() ||
                !same_report(a.kpi_report(zero), b.kpi_report(zero)))
            {
                ++mismatches;
            }
            events += a.events_processed();
        }
    }
    std::string detail = format("%d seeds x {minifab, midfab}, %llu events checked, %lld invariant violations, "
                                "%lld rerun mismatches",
                                kFuzzSeeds, static_cast<unsigned long long>(events), static_cast<long long>(violations),
                                static_cast<long long>(mismatches));
    if (!first_violation.empty())
    {
        detail += "; first: " + first_violation;
    }
    return {violations == 0 && mismatches == 0, detail};
}

// 2 -------------------------------------------------------------------------------

Outcome fork_transparency()
{
    int checked = 0;
    int failed = 0;
    for (const char* name : {"minifab", "midfab"})
    {
        const auto sp = shared(resolve_scenario(name));
        for (std::uint64_t seed = 0; seed < 10; ++seed)
        {
            FabState a(sp, seed);
            a.enable_event_log(true);
            a.advance(kForkDay * kMinutesPerDay);
            const KpiSnapshot at_fork = a.snapshot();
            FabState b = a.fork();
            a.advance(kForkEndDay * kMinutesPerDay);
            b.advance(kForkEndDay * kMinutesPerDay);
            ++checked;
            if (a.event_log() != b.event_log() || !same_report(a.kpi_report(at_fork), b.kpi_report(at_fork)))
            {
                ++failed;
            }
        }
    }
    return {failed == 0 && checked > 0,
            format("%d forks at day %.0f advanced to day %.0f, %d with differing logs or KPIs", checked, kForkDay,
                   kForkEndDay, failed)};
}

// 3 -------------------------------------------------------------------------------

Outcome dgr_oracle()
{
    const auto sp = shared(resolve_scenario("minifab"));
    const auto lengths = route_lengths(*sp);
    double worst = 0.0;
    for (int run = 0; run < kOracleRuns; ++run)
    {
        CounterRng pick(static_cast<std::uint64_t>(run), 0xd6);
        const double t0 = (0.5 + 2.0 * pick.uniform()) * kMinutesPerDay;
        const double t1 = t0 + (1.0 + 3.0 * pick.uniform()) * kMinutesPerDay;
        FabState st(sp, 1000 + static_cast<std::uint64_t>(run));
        st.enable_event_log(true);
        st.advance(t0);
        const KpiSnapshot snap = st.snapshot();
        st.advance(t1);
        const double oracle = testing::oracle_dgr(testing::parse_event_log(st.event_log()), lengths, t0, t1);
        worst = std::max(worst, std::abs(oracle - st.kpi_report(snap).daily_going_rate));
    }
    return {worst <= kOracleTol, format("%d random minifab windows, max |oracle - kpi_report| = %.3g (tol %.0e)",
                                        kOracleRuns, worst, kOracleTol)};
}

// 4 -------------------------------------------------------------------------------

Outcome gradient_correctness()
{
    const auto sp = shared(testing::tiny_scenario());
    FabState st(sp, 4);
    st.advance(kMinutesPerDay);
    FeatureNormalizer norm;
    const HeteroGraph g = extract_graph(st, &norm);
    policy::PolicyNet net(policy::PolicyConfig{.hidden = 8, .layers = 2, .init_seed = 3});

    train::TrainConfig cfg;
    cfg.entropy_coef = 0.01;
    const double ratio_shift[3] = {0.05, 0.5, -0.4};
    const double advantage[3] = {1.3, -0.7, 0.9};
    const double target[3] = {0.4, -1.1, 2.0};
    std::vector<train::Experience> batch(3);
    {
        Tape t(&net.params());
        const policy::Heads h = net.decode(t, g, net.encode(t, g));
        CounterRng rng(12, 0);
        for (std::size_t i = 0; i < batch.size(); ++i)
        {
            batch[i].graph = g;
            batch[i].draws = policy::sample_draws(t, h, g, &rng, false);
            batch[i].old_logprob = t.scalar(policy::draws_logprob(t, h, g, batch[i].draws)) - ratio_shift[i];
        }
    }
    auto loss = [&](Tape& t) {
        Var total = t.constant(Matrix(1, 1));
        for (std::size_t i = 0; i < batch.size(); ++i)
        {
            const auto l = train::sample_losses(t, net, batch[i], advantage[i], target[i], cfg, batch.size());
            total = t.add(total, t.add(l.policy, l.critic));
        }
        return total;
    };
    const auto r = testing::gradcheck(net.params(), loss, kGradEps, kGradTol);
    const bool all = r.checked == net.params().scalar_count();
    return {all && r.failed == 0,
            format("3-machine/6-op graph, %zu of %zu parameters checked, %zu above %.0e, max rel error %.3g",
                   r.checked, net.params().scalar_count(), r.failed, kGradTol, r.max_rel_error)};
}

// 5 -------------------------------------------------------------------------------

Outcome decoder_identities()
{
    const double lo = 1.0 / (1.0 + std::exp(10.0));
    const double hi = 1.0 / (1.0 + std::exp(-10.0));
    std::size_t complement_bad = 0;
    std::size_t bound_bad = 0;
    std::size_t edges = 0;
    std::vector<HeteroGraph> graphs;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
    {
        CounterRng rng(seed, 7);
        graphs.push_back(testing::random_graph(rng, 2 + rng.below(5), 3 + rng.below(6)));
    }
    {
        const auto sp = shared(resolve_scenario("minifab"));
        FabState st(sp, 3);
        st.advance(kMinutesPerDay);
        FeatureNormalizer norm;
        graphs.push_back(extract_graph(st, &norm));
    }
    for (std::size_t i = 0; i < graphs.size(); ++i)
    {
        for (double gain : {1.0, 50.0})
        {
            policy::PolicyNet net(policy::PolicyConfig{.hidden = 16, .layers = 2, .init_seed = i});
            for (std::size_t k = 0; k < net.params().size(); ++k)
            {
                if (net.params()[k].name == "dedication_query")
                {
                    for (double& v : net.params()[k].value.data)
                    {
                        v *= gain;
                    }
                }
            }
            Tape t(&net.params());
            const policy::Heads h = net.decode(t, graphs[i], net.encode(t, graphs[i]));
            const auto& add = t.value(h.ded_add).data;
            const auto& rem = t.value(h.ded_remove).data;
            for (std::size_t e = 0; e < add.size(); ++e)
            {
                ++edges;
                complement_bad += rem[e] == 1.0 - add[e] ? 0 : 1;
                bound_bad += (add[e] >= lo && add[e] <= hi && rem[e] >= lo && rem[e] <= hi) ? 0 : 1;
            }
        }
    }

    bool single_layer = true;
    {
        CounterRng rng(3, 0);
        const HeteroGraph g = testing::random_graph(rng, 4, 6);
        policy::PolicyNet net(policy::PolicyConfig{.hidden = 8, .layers = 1});
        Tape t(&net.params());
        const policy::Encoded enc = net.encode(t, g);
        single_layer = t.value(enc.machine_embeds) == t.value(enc.machine_layers[0]) &&
                       t.value(enc.op_embeds) == t.value(enc.op_layers[0]);
    }

    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < kEquivarianceGraphs; ++seed)
    {
        CounterRng rng(seed, 21);
        const std::size_t nm = 2 + rng.below(6);
        const HeteroGraph g = testing::random_graph(rng, nm, 3 + rng.below(8));
        std::vector<int> perm(nm);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const HeteroGraph pg = testing::permute_machines(g, perm);
        policy::PolicyNet net(policy::PolicyConfig{.hidden = 12, .layers = 2, .init_seed = seed});
        Tape t(&net.params());
        const Matrix ma = t.value(net.encode(t, g).machine_embeds);
        const Matrix mb = t.value(net.encode(t, pg).machine_embeds);
        const Matrix oa = t.value(net.encode(t, g).op_embeds);
        const Matrix ob = t.value(net.encode(t, pg).op_embeds);
        for (std::size_t m = 0; m < nm; ++m)
        {
            for (std::size_t c = 0; c < ma.cols; ++c)
            {
                worst = std::max(worst, std::abs(mb(static_cast<std::size_t>(perm[m]), c) - ma(m, c)));
            }
        }
        for (std::size_t i = 0; i < oa.size(); ++i)
        {
            worst = std::max(worst, std::abs(oa.data[i] - ob.data[i]));
        }
    }
    const bool pass = complement_bad == 0 && bound_bad == 0 && edges > 0 && single_layer && worst <= kEquivarianceTol;
    return {pass, format("%zu dedication edges: %zu complement and %zu bound violations; single-layer identity %s; "
                         "equivariance over %d graphs max deviation %.3g",
                         edges, complement_bad, bound_bad, single_layer ? "holds" : "broken", kEquivarianceGraphs,
                         worst)};
}

// 6 -------------------------------------------------------------------------------

Outcome ppo_oracles()
{
    const auto r = train::discounted_returns(std::vector<double>{1.0, 0.0}, 2.0, 0.99);
    const double bellman_err = std::max(std::abs(r.at(0) - 2.9602), std::abs(r.at(1) - 1.98));

    double z_err = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
    {
        CounterRng rng(seed, 0x2c);
        std::vector<double> xs(2 + rng.below(200));
        for (auto& x : xs)
        {
            x = rng.exponential(5.0) - 8.0 * rng.uniform();
        }
        train::zscore(xs);
        const double n = static_cast<double>(xs.size());
        const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
        double var = 0.0;
        for (double x : xs)
        {
            var += (x - mean) * (x - mean);
        }
        var /= n;
        z_err = std::max({z_err, std::abs(mean), std::abs(var - 1.0)});
    }
    const double clipped = train::clip_ratio(1.5, 0.2);
    const bool pass = bellman_err <= kBellmanTol && z_err <= kZscoreTol && clipped == 1.2;
    return {pass, format("returns [%.10g, %.10g] (err %.2g), z-score max mean/variance error %.2g, clip(1.5) = %.17g",
                         r[0], r[1], bellman_err, z_err, clipped)};
}

// 7 -------------------------------------------------------------------------------

Outcome bandit_learnability()
{
    const auto sp = shared(resolve_scenario("toy2"));
    train::TrainConfig cfg;
    cfg.seed = 1;
    cfg.validation_episodes = 0;
    cfg.epochs = 1;
    train::Trainer trainer(sp, cfg);
    const int chunks = (trainer.steps_per_epoch() + cfg.n_step - 1) / cfg.n_step;
    const int updates_per_epoch = chunks * cfg.ppo_epochs;

    // Probability that the single efficiency draw picks the slow machine.
    auto p_slow = [&] {
        FabState st(sp, 0);
        st.advance(sp->decision_period_minutes);
        HeteroGraph g = extract_raw_graph(st);
        trainer.normalizer().apply(g);
        Tape t(&trainer.net().params());
        const policy::Heads h = trainer.net().decode(t, g, trainer.net().encode(t, g));
        const auto& p = t.value(h.efficiency).data;
        return p[1] / (p[0] + p[1]);
    };
    const double initial = p_slow();
    int updates = 0;
    double p = initial;
    while (updates + updates_per_epoch <= kBanditMaxUpdates)
    {
        trainer.run();
        updates += updates_per_epoch;
        p = p_slow();
        if (p > kBanditTarget)
        {
            break;
        }
    }
    return {p > kBanditTarget, format("toy2 seed %llu: p(slow machine) %.3f -> %.4f after %d updates (limit %d)",
                                      static_cast<unsigned long long>(cfg.seed), initial, p, updates,
                                      kBanditMaxUpdates)};
}

// 8 -------------------------------------------------------------------------------

Outcome minifab_end_to_end()
{
    const auto sp = shared(resolve_scenario("minifab"));
    const auto dir = std::filesystem::temp_directory_path() / "fabcap_acceptance_minifab";
    std::filesystem::remove_all(dir);
    train::TrainConfig cfg;
    cfg.seed = 7;
    cfg.batch_envs = kMinifabBatch;
    cfg.epochs = kMinifabEpochs;
    cfg.out_dir = dir;
    const train::TrainResult result = train::Trainer(sp, cfg).run();

    policy::PolicyNet net(policy::peek_checkpoint_config(dir / "best.ckpt"));
    FeatureNormalizer norm;
    policy::load_checkpoint(dir / "best.ckpt", net, norm, scenario_hash(*sp));
    norm.frozen = true;

    const auto seeds = train::evaluation_seeds(12345, kMinifabEvalEpisodes);
    const int steps = sp->horizon_periods;
    auto evaluate = [&](baselines::Strategy& s) {
        std::vector<train::EpisodeKpi> eps;
        for (auto seed : seeds)
        {
            eps.push_back(train::run_episode(sp, seed, s, steps));
        }
        return train::summarize(s.name(), std::move(eps));
    };
    baselines::NoActionStrategy none;
    baselines::RandomStrategy random;
    train::PolicyStrategy trained(net, norm, true);
    const auto a = evaluate(none);
    const auto b = evaluate(random);
    const auto c = evaluate(trained);
    std::filesystem::remove_all(dir);

    const double lot_gain = (c.mean_completed_lots - a.mean_completed_lots) / a.mean_completed_lots;
    const double ct_none = a.mean_cycle_time_days.value_or(NAN);
    const double ct_policy = c.mean_cycle_time_days.value_or(NAN);
    const double ct_gain = (ct_none - ct_policy) / ct_none;
    const bool pass = lot_gain >= kMinLotGain && ct_gain >= kMinCycleGain && c.mean_dgr >= b.mean_dgr;
    return {pass, format("best epoch %d of %d; lots %.2f vs no-action %.2f (%+.1f%%), cycle time %.3f vs %.3f days "
                         "(%+.1f%% better), DGR %.3f vs random %.3f",
                         result.best_epoch, kMinifabEpochs, c.mean_completed_lots, a.mean_completed_lots,
                         100.0 * lot_gain, ct_policy, ct_none, 100.0 * ct_gain, c.mean_dgr, b.mean_dgr)};
}

// 9 -------------------------------------------------------------------------------

double variance(const std::vector<double>& xs)
{
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double v = 0.0;
    for (double x : xs)
    {
        v += (x - mean) * (x - mean);
    }
    return v / n;
}

Outcome paired_variance()
{
    const auto sp = shared(resolve_scenario("minifab"));
    std::vector<double> paired, unpaired;
    baselines::RandomStrategy strategy;
    for (std::uint64_t episode = 0; static_cast<int>(paired.size()) < kVarianceSteps; ++episode)
    {
        FabState env(sp, 500 + episode);
        FabState independent(sp, 900000 + episode);
        CounterRng rng(episode, 0x9a);
        env.advance(sp->decision_period_minutes);
        independent.advance(sp->decision_period_minutes);
        for (int step = 0; step < sp->horizon_periods; ++step)
        {
            const ActionSet actions = strategy.act(env, extract_raw_graph(env), rng);
            const KpiSnapshot other_start = independent.snapshot();
            const train::PairedOutcome out = train::paired_step(env, actions, true);
            independent.advance(env.clock());
            const double other = independent.kpi_report(other_start).daily_going_rate;
            paired.push_back(out.with.daily_going_rate - out.without->daily_going_rate);
            unpaired.push_back(out.with.daily_going_rate - other);
        }
    }
    const double vp = variance(paired);
    const double vu = variance(unpaired);
    return {vp < vu, format("%zu minifab steps under random actions: paired reward variance %.4f, unpaired %.4f",
                            paired.size(), vp, vu)};
}

// 10 ------------------------------------------------------------------------------

Outcome scale_smoke()
{
    const auto t0 = std::chrono::steady_clock::now();
    const Scenario generated = generate_synthetic(smt2020_shape(), 0);
    const Scenario loaded = parse_scenario(dump_scenario(generated));
    int min_route = 1 << 30, max_route = 0;
    for (const auto& p : loaded.products)
    {
        min_route = std::min(min_route, static_cast<int>(p.route_length()));
        max_route = std::max(max_route, static_cast<int>(p.route_length()));
    }
    const bool shape_ok = loaded == generated && loaded.num_machines() == 1314 && loaded.num_operations() == 4014 &&
                          min_route == 242 && max_route == 583;
    const auto sp = shared(loaded);
    FabState st(sp, 0);
    st.advance(7.0 * kMinutesPerDay);
    const std::string invariants = st.check_invariants();

    const auto f0 = std::chrono::steady_clock::now();
    FeatureNormalizer norm;
    const HeteroGraph g = extract_graph(st, &norm);
    policy::PolicyNet net(policy::PolicyConfig{.hidden = 64, .layers = 2});
    Tape t(&net.params());
    const policy::Encoded enc = net.encode(t, g);
    const policy::Heads h = net.decode(t, g, enc);
    const double v = t.scalar(net.value(t, enc));
    const double forward_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - f0).count();
    const double total_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    rusage usage{};
    getrusage(RUSAGE_SELF, &usage);
    const double peak_bytes = static_cast<double>(usage.ru_maxrss) * 1024.0;
    const bool finite = std::isfinite(v) && t.value(h.ded_add).size() == g.om_edges.size();
    const bool pass = shape_ok && invariants.empty() && finite && forward_s < kScaleSeconds && peak_bytes < kScaleBytes;
    return {pass, format("%zu machines, %zu ops, routes %d..%d, %llu events in one week; extraction + forward %.2f s, "
                         "peak RSS %.0f MB (limits %.0f s, 4 GB); total %.1f s",
                         loaded.num_machines(), loaded.num_operations(), min_route, max_route,
                         static_cast<unsigned long long>(st.events_processed()), forward_s, peak_bytes / 1048576.0,
                         kScaleSeconds, total_s)};
}

} // namespace

int main(int argc, char** argv)
{
    struct Criterion
    {
        int id;
        const char* title;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "simulator determinism and conservation", simulator_determinism},
        {2, "fork transparency", fork_transparency},
        {3, "daily going rate oracle", dgr_oracle},
        {4, "gradient correctness", gradient_correctness},
        {5, "decoder identities and equivariance", decoder_identities},
        {6, "PPO mechanics oracles", ppo_oracles},
        {7, "bandit-scale learnability", bandit_learnability},
        {8, "minifab end to end", minifab_end_to_end},
        {9, "paired-baseline variance reduction", paired_variance},
        {10, "large-scale smoke", scale_smoke},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i)
    {
        selected.insert(std::stoi(argv[i]));
    }
    int failures = 0;
    for (const auto& c : criteria)
    {
        if (!selected.empty() && selected.count(c.id) == 0)
        {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try
        {
            o = c.run();
        }
        catch (const std::exception& e)
        {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += o.pass ? 0 : 1;
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(),
                    secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
