#include "fabcap/baselines/baselines.hpp"
#include "fabcap/policy/policy_net.hpp"
#include "fabcap/report/svg.hpp"
#include "fabcap/sim/scenario.hpp"
#include "fabcap/train/trainer.hpp"
#include "fabcap/util/parallel.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#ifndef FABCAP_GIT_DESCRIBE
#define FABCAP_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fabcap;

namespace
{

constexpr int kExitConfig = 2;
constexpr int kExitHashMismatch = 3;

class ConfigError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

std::string utc_now()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hex(std::uint64_t v)
{
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v)
{
    return v ? fmt(*v) : std::string();
}

double or_nan(const std::optional<double>& v)
{
    return v.value_or(std::nan(""));
}

// Options that may also come from a JSON config file. Flags given on the
// command line win over the file, which wins over the defaults.
class Settings
{
public:
    explicit Settings(CLI::App* app) : app_(app) {}

    template <typename T>
    CLI::Option* add(const std::string& flag, T& target, const std::string& help)
    {
        CLI::Option* opt = app_->add_option("--" + flag, target, help)->capture_default_str();
        const std::string key = key_of(flag);
        entries_.push_back({key, opt,
                            [&target, key](const json& j) {
                                try
                                {
                                    target = j.get<T>();
                                }
                                catch (const json::exception&)
                                {
                                    throw ConfigError("config key '" + key + "' has the wrong type");
                                }
                            },
                            [&target] { return json(target); }});
        return opt;
    }

    // Unset unless given on the command line or in the config file.
    template <typename T>
    CLI::Option* add_optional(const std::string& flag, std::optional<T>& target, const std::string& help)
    {
        CLI::Option* opt = app_->add_option("--" + flag, target, help);
        const std::string key = key_of(flag);
        entries_.push_back({key, opt,
                            [&target, key](const json& j) {
                                try
                                {
                                    target = j.get<T>();
                                }
                                catch (const json::exception&)
                                {
                                    throw ConfigError("config key '" + key + "' has the wrong type");
                                }
                            },
                            [&target] { return target ? json(*target) : json(nullptr); }});
        return opt;
    }

    CLI::Option* add_flag(const std::string& flag, bool& target, const std::string& help)
    {
        CLI::Option* opt = app_->add_flag("--" + flag, target, help);
        const std::string key = key_of(flag);
        entries_.push_back({key, opt,
                            [&target, key](const json& j) {
                                if (!j.is_boolean())
                                {
                                    throw ConfigError("config key '" + key + "' must be a boolean");
                                }
                                target = j.get<bool>();
                            },
                            [&target] { return json(target); }});
        return opt;
    }

    void apply_file(const std::string& path)
    {
        if (path.empty())
        {
            return;
        }
        std::ifstream in(path);
        if (!in)
        {
            throw ConfigError("cannot open config file " + path);
        }
        json j;
        try
        {
            in >> j;
        }
        catch (const json::exception& e)
        {
            throw ConfigError("config file " + path + ": " + e.what());
        }
        if (!j.is_object())
        {
            throw ConfigError("config file " + path + " must hold a JSON object");
        }
        for (const auto& [key, value] : j.items())
        {
            const std::string k = key_of(key);
            auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.key == k; });
            if (it == entries_.end())
            {
                throw ConfigError("config file " + path + ": unknown key '" + key + "'");
            }
            if (it->option->count() == 0)
            {
                it->assign(value);
            }
        }
    }

    json snapshot() const
    {
        json j = json::object();
        for (const auto& e : entries_)
        {
            j[e.key] = e.dump();
        }
        return j;
    }

private:
    static std::string key_of(std::string flag)
    {
        std::replace(flag.begin(), flag.end(), '-', '_');
        return flag;
    }

    struct Entry
    {
        std::string key;
        CLI::Option* option;
        std::function<void(const json&)> assign;
        std::function<json()> dump;
    };
    CLI::App* app_;
    std::vector<Entry> entries_;
};

struct Common
{
    std::string scenario;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t workers = 0;
    std::string config;
};

struct RunContext
{
    std::string command;
    std::shared_ptr<const Scenario> scenario;
    std::string scenario_source;
    fs::path out_dir;
    std::string started;
};

fs::path output_dir(const std::string& command, const Common& c)
{
    if (!c.out.empty())
    {
        return c.out;
    }
    const char* root = std::getenv("FABCAP_OUT");
    fs::path base = root != nullptr && *root != '\0' ? fs::path(root) : fs::path("runs");
    std::string tag = fs::path(c.scenario).stem().string();
    return base / (command + "_" + tag + "_seed" + std::to_string(c.seed));
}

RunContext open_run(const std::string& command, const Common& c)
{
    RunContext ctx;
    ctx.command = command;
    ctx.started = utc_now();
    ctx.scenario_source = c.scenario;
    ctx.scenario = std::make_shared<const Scenario>(resolve_scenario(c.scenario));
    ctx.out_dir = output_dir(command, c);
    fs::create_directories(ctx.out_dir);
    return ctx;
}

void write_manifest(const RunContext& ctx, const Settings& settings, const Common& c, const std::vector<std::uint64_t>& seeds,
                    const json& extra = json::object())
{
    json m;
    m["command"] = ctx.command;
    m["scenario"] = {{"name", ctx.scenario->name},
                     {"source", ctx.scenario_source},
                     {"hash", hex(scenario_hash(*ctx.scenario))}};
    m["config"] = settings.snapshot();
    m["seed"] = c.seed;
    m["seeds"] = seeds;
    m["workers"] = c.workers;
    m["git_describe"] = FABCAP_GIT_DESCRIBE;
    m["output_dir"] = fs::absolute(ctx.out_dir).string();
    m["started_at"] = ctx.started;
    m["finished_at"] = utc_now();
    for (const auto& [k, v] : extra.items())
    {
        m[k] = v;
    }
    std::ofstream out(ctx.out_dir / "manifest.json");
    out << m.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out)
    {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

void add_common(Settings& s, CLI::App* app, Common& c, bool needs_scenario = true)
{
    auto* opt = app->add_option("--scenario", c.scenario, "Scenario name (minifab, toy2, midfab, smt2020) or JSON path");
    if (needs_scenario)
    {
        opt->required();
    }
    s.add("seed", c.seed, "Base random seed");
    app->add_option("--out", c.out, "Output directory (default: $FABCAP_OUT or ./runs, then <command>_<scenario>_seed<seed>)");
    s.add("workers", c.workers, "Worker threads (0 = all cores; 1 = bit-exact single-worker mode)");
    app->add_option("--config", c.config, "JSON file of option defaults; command-line flags take precedence");
}

// train ---------------------------------------------------------------------------

struct TrainFlags
{
    int epochs = 100;
    int batch = 16;
    int steps = 0;
    int n_step = 5;
    int ppo_epochs = 20;
    double clip = 0.2;
    double gamma = 0.99;
    double actor_lr = 3e-4;
    double critic_lr = 1e-4;
    std::string reward_mode = "paired_baseline";
    double ema_alpha = 0.3;
    double entropy_coef = 0.0;
    double grad_clip = 1.0;
    std::size_t hidden = 64;
    std::size_t layers = 0;
    int validation_episodes = 4;
    std::string resume;
};

std::size_t default_layers(const Scenario& s)
{
    return s.num_machines() > 50 ? 2 : 1;
}

int cmd_train(const Common& c, const TrainFlags& f, const Settings& settings)
{
    RunContext ctx = open_run("train", c);
    train::TrainConfig cfg;
    cfg.epochs = f.epochs;
    cfg.batch_envs = f.batch;
    cfg.steps_per_epoch = f.steps;
    cfg.n_step = f.n_step;
    cfg.ppo_epochs = f.ppo_epochs;
    cfg.clip_eps = f.clip;
    cfg.gamma = f.gamma;
    cfg.actor_lr = f.actor_lr;
    cfg.critic_lr = f.critic_lr;
    cfg.reward_mode = train::parse_reward_mode(f.reward_mode);
    cfg.ema_alpha = f.ema_alpha;
    cfg.entropy_coef = f.entropy_coef;
    cfg.grad_clip_norm = f.grad_clip;
    cfg.seed = c.seed;
    cfg.threads = c.workers;
    cfg.validation_episodes = f.validation_episodes;
    cfg.policy.hidden = f.hidden;
    cfg.policy.layers = f.layers > 0 ? f.layers : default_layers(*ctx.scenario);
    cfg.policy.init_seed = c.seed;
    cfg.out_dir = ctx.out_dir;
    cfg.validate();

    train::Trainer trainer(ctx.scenario, cfg);
    if (!f.resume.empty())
    {
        trainer.resume_from(f.resume);
    }
    trainer.on_epoch = [](const train::EpochSummary& s) {
        std::cerr << "epoch " << s.epoch << "  reward " << fmt(s.mean_reward) << "  dgr " << fmt(s.mean_dgr_with)
                  << "  lots " << fmt(s.mean_completed_lots) << "  ct " << fmt(s.mean_cycle_time_days)
                  << "  policy_loss " << fmt(s.update.policy_loss) << "  critic_loss " << fmt(s.update.critic_loss);
        if (s.validation_dgr)
        {
            std::cerr << "  val_dgr " << fmt(*s.validation_dgr);
        }
        std::cerr << (s.update.diverged ? "  [diverged]" : "") << '\n';
    };
    const train::TrainResult result = trainer.run();

    report::Series lots{"completed lots", {}, {}};
    report::Series ct{"avg cycle time (days)", {}, {}};
    report::Series with{"DGR with actions", {}, {}};
    report::Series without{"DGR baseline", {}, {}};
    report::Series val{"validation DGR (greedy)", {}, {}};
    report::Series reward{"mean reward", {}, {}};
    for (const auto& e : result.epochs)
    {
        const double x = e.epoch;
        lots.x.push_back(x);
        lots.y.push_back(e.mean_completed_lots);
        ct.x.push_back(x);
        ct.y.push_back(or_nan(e.mean_cycle_time_days));
        with.x.push_back(x);
        with.y.push_back(e.mean_dgr_with);
        without.x.push_back(x);
        without.y.push_back(e.mean_dgr_without);
        val.x.push_back(x);
        val.y.push_back(or_nan(e.validation_dgr));
        reward.x.push_back(x);
        reward.y.push_back(e.mean_reward);
    }
    std::vector<report::Panel> panels{
        {"Completed lots per episode", "lots", "epoch", {lots}, {}, {}},
        {"Average cycle time", "days", "epoch", {ct}, {}, {}},
        {"Daily going rate", "DGR", "epoch", {with, without, val}, {}, {}},
        {"Reward", "DGR difference", "epoch", {reward}, {}, {}},
    };
    write_text(ctx.out_dir / "training_curves.svg", report::render_panels(panels));

    std::vector<std::uint64_t> seeds{c.seed};
    write_manifest(ctx, settings, c, seeds,
                   {{"best_epoch", result.best_epoch},
                    {"best_score", result.best_score},
                    {"outputs", {"metrics.csv", "actions.csv", "last.ckpt", "best.ckpt", "training_curves.svg"}}});
    std::cout << "trained " << result.epochs.size() << " epochs; best epoch " << result.best_epoch << " (score "
              << fmt(result.best_score) << ")\noutputs in " << ctx.out_dir.string() << '\n';
    return 0;
}

// evaluate / compare ---------------------------------------------------------------

struct LoadedPolicy
{
    std::unique_ptr<policy::PolicyNet> net;
    FeatureNormalizer norm;
};

LoadedPolicy load_policy(const std::string& path, const Scenario& s)
{
    LoadedPolicy p;
    p.net = std::make_unique<policy::PolicyNet>(policy::peek_checkpoint_config(path));
    policy::load_checkpoint(path, *p.net, p.norm, scenario_hash(s));
    p.norm.frozen = true;
    return p;
}

using StrategyFactory = std::function<std::unique_ptr<baselines::Strategy>()>;

std::vector<train::EpisodeKpi> evaluate_strategy(const RunContext& ctx, const StrategyFactory& make,
                                                 const std::vector<std::uint64_t>& seeds, int steps, std::size_t workers)
{
    std::vector<train::EpisodeKpi> out(seeds.size());
    parallel_for(seeds.size(), workers, [&](std::size_t i) {
        auto strategy = make();
        out[i] = train::run_episode(ctx.scenario, seeds[i], *strategy, steps);
    });
    return out;
}

const char* kEpisodeHeader = "strategy,seed,completed_lots,avg_cycle_time_days,daily_going_rate\n";

void write_episode_rows(std::ostream& out, const std::string& name, const std::vector<train::EpisodeKpi>& eps)
{
    for (const auto& e : eps)
    {
        out << name << ',' << e.seed << ',' << e.completed_lots << ',' << fmt(e.avg_cycle_time_days) << ','
            << fmt(e.daily_going_rate) << '\n';
    }
}

struct EvalFlags
{
    std::string checkpoint;
    int episodes = 16;
    int steps = 0;
    bool sample = false;
};

int cmd_evaluate(const Common& c, const EvalFlags& f, const Settings& settings)
{
    RunContext ctx = open_run("evaluate", c);
    LoadedPolicy p = load_policy(f.checkpoint, *ctx.scenario);
    const int steps = f.steps > 0 ? f.steps : ctx.scenario->horizon_periods;
    const auto seeds = train::evaluation_seeds(c.seed, static_cast<std::size_t>(f.episodes));
    auto eps = evaluate_strategy(
        ctx, [&] { return std::make_unique<train::PolicyStrategy>(*p.net, p.norm, !f.sample); }, seeds, steps,
        c.workers);
    std::ofstream out(ctx.out_dir / "evaluation.csv");
    out << kEpisodeHeader;
    write_episode_rows(out, "policy", eps);
    const auto summary = train::summarize("policy", eps);
    write_manifest(ctx, settings, c, seeds, {{"checkpoint", f.checkpoint}, {"outputs", {"evaluation.csv"}}});
    std::cout << "policy over " << seeds.size() << " episodes: completed lots " << fmt(summary.mean_completed_lots)
              << ", cycle time " << fmt(summary.mean_cycle_time_days) << " days, DGR " << fmt(summary.mean_dgr)
              << '\n';
    return 0;
}

// Relative improvement of target over base, "x% (+y)" with the absolute change in brackets.
std::string improvement_cell(double target, double base, bool lower_is_better, const char* unit)
{
    const double diff = target - base;
    const double rel = base != 0.0 ? (lower_is_better ? -diff : diff) / std::abs(base) * 100.0 + 0.0 : 0.0;
    char buf[80];
    std::snprintf(buf, sizeof buf, "%.2f%% (%+.2f%s)", rel, diff, unit);
    return buf;
}

struct CompareFlags
{
    std::vector<std::string> strategies;
    std::string target;
    std::string checkpoint;
    int episodes = 16;
    int steps = 0;
    double temperature = 1.0;
};

int cmd_compare(const Common& c, CompareFlags f, const Settings& settings)
{
    RunContext ctx = open_run("compare", c);
    if (f.strategies.empty())
    {
        f.strategies = {"no_action", "random", "wip_heuristic"};
        if (!f.checkpoint.empty())
        {
            f.strategies.push_back("policy");
        }
    }
    std::optional<LoadedPolicy> p;
    if (std::find(f.strategies.begin(), f.strategies.end(), "policy") != f.strategies.end())
    {
        if (f.checkpoint.empty())
        {
            throw ConfigError("strategy 'policy' needs --checkpoint");
        }
        p = load_policy(f.checkpoint, *ctx.scenario);
    }
    if (f.target.empty())
    {
        f.target = p ? "policy" : f.strategies.front();
    }
    if (std::find(f.strategies.begin(), f.strategies.end(), f.target) == f.strategies.end())
    {
        throw ConfigError("target '" + f.target + "' is not among the compared strategies");
    }
    const int steps = f.steps > 0 ? f.steps : ctx.scenario->horizon_periods;
    const auto seeds = train::evaluation_seeds(c.seed, static_cast<std::size_t>(f.episodes));
    const baselines::HeuristicConfig heuristic{f.temperature, true};

    std::vector<train::StrategySummary> results;
    for (const auto& name : f.strategies)
    {
        StrategyFactory make;
        if (name == "policy")
        {
            make = [&] { return std::make_unique<train::PolicyStrategy>(*p->net, p->norm, true); };
        }
        else
        {
            baselines::make_baseline(name, heuristic);
            make = [name, heuristic] { return baselines::make_baseline(name, heuristic); };
        }
        results.push_back(train::summarize(name, evaluate_strategy(ctx, make, seeds, steps, c.workers)));
    }

    std::ofstream table(ctx.out_dir / "compare.csv");
    table << "strategy,episodes,completed_lots,avg_cycle_time_days,daily_going_rate\n";
    std::ofstream episodes(ctx.out_dir / "compare_episodes.csv");
    episodes << kEpisodeHeader;
    for (const auto& r : results)
    {
        table << r.name << ',' << r.episodes.size() << ',' << fmt(r.mean_completed_lots) << ','
              << fmt(r.mean_cycle_time_days) << ',' << fmt(r.mean_dgr) << '\n';
        write_episode_rows(episodes, r.name, r.episodes);
    }

    const auto& target =
        *std::find_if(results.begin(), results.end(), [&](const auto& r) { return r.name == f.target; });
    std::ofstream imp(ctx.out_dir / "improvement.csv");
    imp << "target,baseline,completed_lots,cycle_time,daily_going_rate\n";
    for (const auto& r : results)
    {
        const std::string ct =
            target.mean_cycle_time_days && r.mean_cycle_time_days
                ? improvement_cell(*target.mean_cycle_time_days, *r.mean_cycle_time_days, true, " days")
                : std::string("n/a");
        std::cout << r.name << ": lots " << fmt(r.mean_completed_lots) << ", ct " << fmt(r.mean_cycle_time_days)
                  << ", dgr " << fmt(r.mean_dgr) << '\n';
        imp << target.name << ',' << r.name << ",\""
            << improvement_cell(target.mean_completed_lots, r.mean_completed_lots, false, "") << "\",\"" << ct
            << "\",\"" << improvement_cell(target.mean_dgr, r.mean_dgr, false, "") << "\"\n";
    }

    std::vector<std::string> labels;
    std::vector<double> lots, cts, dgr;
    for (const auto& r : results)
    {
        labels.push_back(r.name);
        lots.push_back(r.mean_completed_lots);
        cts.push_back(or_nan(r.mean_cycle_time_days));
        dgr.push_back(r.mean_dgr);
    }
    std::vector<report::Panel> panels{
        {"Completed lots", "lots", "", {}, labels, lots},
        {"Average cycle time", "days", "", {}, labels, cts},
        {"Daily going rate", "DGR", "", {}, labels, dgr},
    };
    write_text(ctx.out_dir / "compare.svg", report::render_panels(panels));
    write_manifest(ctx, settings, c, seeds,
                   {{"strategies", f.strategies},
                    {"target", f.target},
                    {"checkpoint", f.checkpoint},
                    {"outputs", {"compare.csv", "compare_episodes.csv", "improvement.csv", "compare.svg"}}});
    return 0;
}

// simulate ---------------------------------------------------------------------------

struct SimulateFlags
{
    double days = 0.0;
    std::string dump_events;
};

int cmd_simulate(const Common& c, const SimulateFlags& f, const Settings& settings)
{
    RunContext ctx = open_run("simulate", c);
    const double days = f.days > 0.0 ? f.days : ctx.scenario->horizon_minutes() / kMinutesPerDay;
    FabState st(ctx.scenario, c.seed);
    st.enable_event_log(!f.dump_events.empty());
    const KpiSnapshot start = st.snapshot();
    const auto t0 = std::chrono::steady_clock::now();
    st.advance(days * kMinutesPerDay);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const KpiReport rep = st.kpi_report(start);

    std::ofstream kpi(ctx.out_dir / "kpi.csv");
    kpi << "seed,days,completed_lots,avg_cycle_time_days,daily_going_rate,lots_released,lots_in_flight,events\n";
    kpi << c.seed << ',' << fmt(days) << ',' << rep.completed_lots << ',' << fmt(rep.avg_cycle_time_days) << ','
        << fmt(rep.daily_going_rate) << ',' << st.lots_released() << ',' << st.lots_in_flight() << ','
        << st.events_processed() << '\n';
    std::ofstream prod(ctx.out_dir / "product_kpi.csv");
    prod << "product,completed_lots,avg_cycle_time_days,daily_going_rate,wip_ratio\n";
    for (std::size_t p = 0; p < rep.per_product.size(); ++p)
    {
        const auto& k = rep.per_product[p];
        prod << ctx.scenario->products[p].name << ',' << k.completed_lots << ',' << fmt(k.avg_cycle_time_days) << ','
             << fmt(k.daily_going_rate) << ',' << fmt(k.wip_ratio) << '\n';
    }
    json extra{{"outputs", {"kpi.csv", "product_kpi.csv"}},
               {"events_per_second", secs > 0.0 ? static_cast<double>(st.events_processed()) / secs : 0.0}};
    if (!f.dump_events.empty())
    {
        write_text(f.dump_events, st.event_log());
        extra["event_log"] = f.dump_events;
    }
    write_manifest(ctx, settings, c, {c.seed}, extra);
    std::cout << "simulated " << fmt(days) << " days: " << rep.completed_lots << " lots completed, DGR "
              << fmt(rep.daily_going_rate) << ", " << st.events_processed() << " events ("
              << fmt(secs > 0.0 ? static_cast<double>(st.events_processed()) / secs : 0.0) << " events/s)\n";
    return 0;
}

// generate-scenario -------------------------------------------------------------------

struct GenerateFlags
{
    std::string shape = "smt2020";
    std::string file;
    std::optional<int> machines, products, families, route_min, route_max, total_operations, max_batch,
        min_dedications, horizon_periods;
    std::optional<double> batch_family_fraction, target_utilization, load_factor, dedication_fraction, uptime_min,
        uptime_max, period_days;
    std::optional<bool> pin_route_extremes;
    std::optional<int> sigma;
};

template <typename T>
void override_with(T& field, const std::optional<T>& value)
{
    if (value)
    {
        field = *value;
    }
}

int cmd_generate(const Common& c, const GenerateFlags& f, const Settings& settings)
{
    GeneratorSpec spec;
    if (f.shape == "smt2020")
    {
        spec = smt2020_shape();
    }
    else if (f.shape == "midfab")
    {
        spec = midfab_shape();
    }
    else if (f.shape != "custom")
    {
        throw ConfigError("unknown shape '" + f.shape + "' (expected smt2020, midfab or custom)");
    }
    override_with(spec.machines, f.machines);
    override_with(spec.products, f.products);
    override_with(spec.families, f.families);
    override_with(spec.route_min, f.route_min);
    override_with(spec.route_max, f.route_max);
    override_with(spec.total_operations, f.total_operations);
    override_with(spec.pin_route_extremes, f.pin_route_extremes);
    override_with(spec.batch_family_fraction, f.batch_family_fraction);
    override_with(spec.max_batch, f.max_batch);
    override_with(spec.target_utilization, f.target_utilization);
    override_with(spec.load_factor, f.load_factor);
    override_with(spec.min_dedications, f.min_dedications);
    override_with(spec.dedication_fraction, f.dedication_fraction);
    override_with(spec.uptime_min, f.uptime_min);
    override_with(spec.uptime_max, f.uptime_max);
    override_with(spec.horizon_periods, f.horizon_periods);
    if (f.period_days)
    {
        spec.decision_period_minutes = *f.period_days * kMinutesPerDay;
    }
    if (f.sigma)
    {
        spec.sigma = SigmaBudget{*f.sigma, *f.sigma, *f.sigma, *f.sigma};
    }
    const Scenario s = generate_synthetic(spec, c.seed);
    fs::path target = f.file;
    if (target.empty())
    {
        Common named = c;
        named.scenario = f.shape;
        RunContext ctx;
        ctx.command = "generate-scenario";
        ctx.started = utc_now();
        ctx.scenario = std::make_shared<const Scenario>(s);
        ctx.scenario_source = "generated:" + f.shape;
        ctx.out_dir = output_dir("generate-scenario", named);
        fs::create_directories(ctx.out_dir);
        target = ctx.out_dir / "scenario.json";
        save_scenario(s, target);
        write_manifest(ctx, settings, c, {c.seed}, {{"outputs", {"scenario.json"}}});
    }
    else
    {
        if (target.has_parent_path())
        {
            fs::create_directories(target.parent_path());
        }
        save_scenario(s, target);
    }
    std::size_t min_route = SIZE_MAX, max_route = 0;
    for (const auto& p : s.products)
    {
        min_route = std::min(min_route, p.route_length());
        max_route = std::max(max_route, p.route_length());
    }
    std::cout << "wrote " << target.string() << ": " << s.num_machines() << " machines, " << s.num_operations()
              << " operations, " << s.num_products() << " products, routes " << min_route << ".." << max_route
              << ", hash " << hex(scenario_hash(s)) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Capacity-planning policy training and fab simulation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(FABCAP_GIT_DESCRIBE));

    Common common;
    TrainFlags tf;
    EvalFlags ef;
    CompareFlags cf;
    SimulateFlags sf;
    GenerateFlags gf;

    auto* train_cmd = app.add_subcommand("train", "Train the policy with n-step PPO");
    Settings train_s(train_cmd);
    add_common(train_s, train_cmd, common);
    train_s.add("epochs", tf.epochs, "Training epochs");
    train_s.add("batch", tf.batch, "Parallel environment instances per epoch");
    train_s.add("steps", tf.steps, "Decision steps per epoch (0 = scenario horizon)");
    train_s.add("n-step", tf.n_step, "Steps per n-step return chunk");
    train_s.add("ppo-epochs", tf.ppo_epochs, "Inner PPO epochs per batch");
    train_s.add("clip", tf.clip, "PPO ratio clip range");
    train_s.add("gamma", tf.gamma, "Discount factor");
    train_s.add("actor-lr", tf.actor_lr, "Actor learning rate");
    train_s.add("critic-lr", tf.critic_lr, "Critic learning rate");
    train_s.add("reward-mode", tf.reward_mode, "paired_baseline or ema_baseline");
    train_s.add("ema-alpha", tf.ema_alpha, "EMA smoothing for ema_baseline rewards");
    train_s.add("entropy-coef", tf.entropy_coef, "Entropy bonus weight");
    train_s.add("grad-clip", tf.grad_clip, "Global gradient-norm clip");
    train_s.add("hidden", tf.hidden, "Embedding width");
    train_s.add("layers", tf.layers, "Message-passing layers (0 = 1 for small fabs, 2 for large)");
    train_s.add("validation-episodes", tf.validation_episodes, "Greedy validation episodes per epoch (0 = off)");
    train_s.add("resume", tf.resume, "Checkpoint to resume from (scenario hash must match)");

    auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a trained checkpoint");
    Settings eval_s(eval_cmd);
    add_common(eval_s, eval_cmd, common);
    eval_s.add("checkpoint", ef.checkpoint, "Checkpoint file")->required();
    eval_s.add("episodes", ef.episodes, "Evaluation instances");
    eval_s.add("steps", ef.steps, "Decision steps per episode (0 = scenario horizon)");
    eval_s.add_flag("sample", ef.sample, "Sample actions instead of greedy selection");

    auto* cmp_cmd = app.add_subcommand("compare", "Compare strategies on a shared seed sequence");
    Settings cmp_s(cmp_cmd);
    add_common(cmp_s, cmp_cmd, common);
    cmp_s.add("strategies", cf.strategies, "Strategies: no_action, random, wip_heuristic, policy")->delimiter(',');
    cmp_s.add("target", cf.target, "Strategy whose improvement is reported (default: policy, else the first)");
    cmp_s.add("checkpoint", cf.checkpoint, "Checkpoint for the policy strategy");
    cmp_s.add("episodes", cf.episodes, "Evaluation instances");
    cmp_s.add("steps", cf.steps, "Decision steps per episode (0 = scenario horizon)");
    cmp_s.add("temperature", cf.temperature, "WIP heuristic temperature");

    auto* sim_cmd = app.add_subcommand("simulate", "Run the simulator without actions");
    Settings sim_s(sim_cmd);
    add_common(sim_s, sim_cmd, common);
    sim_s.add("days", sf.days, "Simulated days (0 = scenario horizon)");
    sim_s.add("dump-events", sf.dump_events, "Write the event log to this file");

    auto* gen_cmd = app.add_subcommand("generate-scenario", "Generate a synthetic large scenario");
    Settings gen_s(gen_cmd);
    add_common(gen_s, gen_cmd, common, false);
    gen_s.add("shape", gf.shape, "Preset: smt2020, midfab or custom (generator defaults)");
    gen_s.add_optional("machines", gf.machines, "Machine count");
    gen_s.add_optional("products", gf.products, "Product count");
    gen_s.add_optional("families", gf.families, "Machine family count");
    gen_s.add_optional("route-min", gf.route_min, "Shortest route length");
    gen_s.add_optional("route-max", gf.route_max, "Longest route length");
    gen_s.add_optional("total-operations", gf.total_operations, "Exact operation count (0 = free)");
    gen_s.add_optional("pin-route-extremes", gf.pin_route_extremes, "Force one route of each extreme length");
    gen_s.add_optional("batch-family-fraction", gf.batch_family_fraction, "Fraction of batch-tool families");
    gen_s.add_optional("max-batch", gf.max_batch, "Largest batch size");
    gen_s.add_optional("target-utilization", gf.target_utilization, "Busiest family utilization before load factor");
    gen_s.add_optional("load-factor", gf.load_factor, "Arrival load multiplier");
    gen_s.add_optional("min-dedications", gf.min_dedications, "Minimum dedicated machines per operation");
    gen_s.add_optional("dedication-fraction", gf.dedication_fraction, "Fraction of compatible machines dedicated");
    gen_s.add_optional("uptime-min", gf.uptime_min, "Lowest machine uptime");
    gen_s.add_optional("uptime-max", gf.uptime_max, "Highest machine uptime");
    gen_s.add_optional("period-days", gf.period_days, "Decision period in days");
    gen_s.add_optional("horizon-periods", gf.horizon_periods, "Decision periods per episode");
    gen_s.add_optional("sigma", gf.sigma, "Action budget for every head");
    gen_s.add("file", gf.file, "Output scenario path (default: <out>/scenario.json with a manifest)");

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (train_cmd->parsed())
        {
            train_s.apply_file(common.config);
            return cmd_train(common, tf, train_s);
        }
        if (eval_cmd->parsed())
        {
            eval_s.apply_file(common.config);
            return cmd_evaluate(common, ef, eval_s);
        }
        if (cmp_cmd->parsed())
        {
            cmp_s.apply_file(common.config);
            return cmd_compare(common, cf, cmp_s);
        }
        if (sim_cmd->parsed())
        {
            sim_s.apply_file(common.config);
            return cmd_simulate(common, sf, sim_s);
        }
        if (gen_cmd->parsed())
        {
            gen_s.apply_file(common.config);
            return cmd_generate(common, gf, gen_s);
        }
    }
    catch (const policy::CheckpointHashMismatch& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return kExitHashMismatch;
    }
    catch (const policy::CheckpointError& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    catch (const ScenarioError& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    catch (const ConfigError& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    catch (const std::invalid_argument& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
