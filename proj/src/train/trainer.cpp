#include "fabcap/train/trainer.hpp"

#include "fabcap/util/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace fabcap::train
{

using nn::Matrix;
using nn::Tape;
using nn::Var;
using policy::HeadKind;

const char* reward_mode_name(RewardMode m) noexcept
{
    return m == RewardMode::paired_baseline ? "paired_baseline" : "ema_baseline";
}

RewardMode parse_reward_mode(const std::string& name)
{
    if (name == "paired_baseline" || name == "paired")
    {
        return RewardMode::paired_baseline;
    }
    if (name == "ema_baseline" || name == "ema")
    {
        return RewardMode::ema_baseline;
    }
    throw std::invalid_argument("unknown reward mode '" + name + "' (expected paired_baseline or ema_baseline)");
}

void TrainConfig::validate() const
{
    auto require = [](bool ok, const char* what) {
        if (!ok)
        {
            throw std::invalid_argument(std::string("train config: ") + what);
        }
    };
    require(actor_lr > 0.0 && critic_lr > 0.0, "learning rates must be positive");
    require(n_step >= 1, "n_step must be >= 1");
    require(ppo_epochs >= 1, "ppo_epochs must be >= 1");
    require(clip_eps > 0.0, "clip_eps must be positive");
    require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
    require(batch_envs >= 1, "batch_envs must be >= 1");
    require(steps_per_epoch >= 0, "steps_per_epoch must be >= 0");
    require(epochs >= 1, "epochs must be >= 1");
    require(ema_alpha > 0.0 && ema_alpha <= 1.0, "ema_alpha must lie in (0, 1]");
    require(entropy_coef >= 0.0, "entropy_coef must be >= 0");
    require(grad_clip_norm > 0.0, "grad_clip_norm must be positive");
    require(validation_episodes >= 0, "validation_episodes must be >= 0");
    require(policy.hidden >= 1 && policy.layers >= 1, "policy hidden size and layers must be >= 1");
}

PairedOutcome paired_step(FabState& env, const ActionSet& actions, bool paired)
{
    const double until = env.clock() + env.scenario().decision_period_minutes;
    const KpiSnapshot since = env.snapshot();
    PairedOutcome out;
    if (paired)
    {
        FabState baseline = env.fork();
        baseline.advance(until);
        out.without = baseline.kpi_report(since);
    }
    env.apply_actions(actions);
    env.advance(until);
    out.with = env.kpi_report(since);
    return out;
}

std::vector<double> discounted_returns(std::span<const double> rewards, double bootstrap, double gamma)
{
    std::vector<double> out(rewards.size());
    double acc = bootstrap;
    for (std::size_t i = rewards.size(); i-- > 0;)
    {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    return out;
}

void zscore(std::span<double> values)
{
    if (values.empty())
    {
        return;
    }
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : values)
    {
        var += (v - mean) * (v - mean);
    }
    const double sd = std::max(std::sqrt(var / n), 1e-8);
    for (double& v : values)
    {
        v = (v - mean) / sd;
    }
}

double clip_ratio(double ratio, double eps) noexcept
{
    return std::clamp(ratio, 1.0 - eps, 1.0 + eps);
}

SampleLosses sample_losses(Tape& t, const policy::PolicyNet& net, const Experience& exp, double advantage,
                           double target, const TrainConfig& cfg, std::size_t batch_size)
{
    const double inv_n = 1.0 / static_cast<double>(batch_size);
    const policy::Encoded enc = net.encode(t, exp.graph);
    const policy::Heads heads = net.decode(t, exp.graph, enc);
    const Var lp = policy::draws_logprob(t, heads, exp.graph, exp.draws);
    const Var ratio = t.exp(t.add_scalar(lp, -exp.old_logprob));
    const Var unclipped = t.scale(ratio, advantage);
    const Var clipped = t.scale(t.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), advantage);
    Var policy_loss = t.scale(t.minimum(unclipped, clipped), -inv_n);
    if (cfg.entropy_coef > 0.0)
    {
        const Var entropy = policy::first_draw_entropy(t, heads, exp.graph);
        policy_loss = t.sub(policy_loss, t.scale(entropy, cfg.entropy_coef * inv_n));
    }
    const Var v = net.value(t, enc);
    const Var critic_loss = t.scale(t.square(t.add_scalar(v, -target)), 0.5 * inv_n);
    return {policy_loss, critic_loss, t.scalar(ratio), t.scalar(v)};
}

Optimizers::Optimizers(const policy::PolicyNet& net, const TrainConfig& cfg)
    : actor(net.params(), net.actor_params(), nn::AdamConfig{cfg.actor_lr}),
      critic(net.params(), net.critic_params(), nn::AdamConfig{cfg.critic_lr})
{
}

namespace
{

double state_value(const policy::PolicyNet& net, const HeteroGraph& g)
{
    Tape t(&net.params());
    return t.scalar(net.value(t, net.encode(t, g)));
}

} // namespace

UpdateStats ppo_update(policy::PolicyNet& net, Optimizers& opt, const std::vector<std::vector<Experience>>& rollouts,
                       const std::vector<HeteroGraph>& bootstrap, const TrainConfig& cfg)
{
    std::vector<const Experience*> flat;
    std::vector<std::size_t> env_offset;
    for (const auto& r : rollouts)
    {
        env_offset.push_back(flat.size());
        for (const auto& e : r)
        {
            flat.push_back(&e);
        }
    }
    const std::size_t n = flat.size();
    UpdateStats stats;
    if (n == 0)
    {
        return stats;
    }
    const auto& critic_idx = net.critic_params();

    for (int k = 0; k < cfg.ppo_epochs; ++k)
    {
        std::vector<double> values(n);
        std::vector<double> boot(rollouts.size());
        parallel_for(n + rollouts.size(), cfg.threads, [&](std::size_t i) {
            if (i < n)
            {
                values[i] = state_value(net, flat[i]->graph);
            }
            else
            {
                boot[i - n] = state_value(net, bootstrap[i - n]);
            }
        });

        std::vector<double> targets;
        targets.reserve(n);
        for (std::size_t b = 0; b < rollouts.size(); ++b)
        {
            std::vector<double> rewards;
            for (const auto& e : rollouts[b])
            {
                rewards.push_back(e.reward);
            }
            const auto r = discounted_returns(rewards, boot[b], cfg.gamma);
            targets.insert(targets.end(), r.begin(), r.end());
        }
        zscore(targets);

        std::vector<nn::Gradients> grads(n);
        std::vector<double> pl(n), cl(n), ratios(n);
        parallel_for(n, cfg.threads, [&](std::size_t i) {
            Tape t(&net.params());
            const double adv = targets[i] - values[i];
            const SampleLosses s = sample_losses(t, net, *flat[i], adv, targets[i], cfg, n);
            nn::Gradients gp(net.params());
            nn::Gradients gc(net.params());
            t.backward(s.policy, gp);
            t.backward(s.critic, gc);
            for (std::size_t c : critic_idx)
            {
                gp.grads[c] = std::move(gc.grads[c]);
            }
            grads[i] = std::move(gp);
            pl[i] = t.scalar(s.policy);
            cl[i] = t.scalar(s.critic);
            ratios[i] = s.ratio;
        });

        nn::Gradients total(net.params());
        double policy_loss = 0.0;
        double critic_loss = 0.0;
        std::size_t clipped = 0;
        for (std::size_t i = 0; i < n; ++i)
        {
            total.add(grads[i]);
            policy_loss += pl[i];
            critic_loss += cl[i];
            clipped += std::abs(ratios[i] - 1.0) > cfg.clip_eps ? 1 : 0;
        }
        if (!std::isfinite(policy_loss) || !std::isfinite(critic_loss) || !total.all_finite())
        {
            std::cerr << "ppo_update: non-finite loss at inner epoch " << k << " (policy " << policy_loss
                      << ", critic " << critic_loss << "); skipping the remaining updates\n";
            stats.diverged = true;
            break;
        }
        const double norm = total.global_norm();
        if (norm > cfg.grad_clip_norm)
        {
            total.scale(cfg.grad_clip_norm / norm);
        }
        opt.actor.step(net.params(), total);
        opt.critic.step(net.params(), total);

        stats.policy_loss += policy_loss / cfg.ppo_epochs;
        stats.critic_loss += critic_loss / cfg.ppo_epochs;
        stats.clip_fraction += static_cast<double>(clipped) / static_cast<double>(n) / cfg.ppo_epochs;
        stats.grad_norm = norm;
    }
    return stats;
}

// Trainer -----------------------------------------------------------------------

namespace
{

constexpr std::uint64_t kEpochSeedStream = 0x7000;
constexpr std::uint64_t kSampleStream = 0x5000;
constexpr std::uint64_t kEpisodeStream = 0x6000;
constexpr std::uint64_t kValidationSalt = 0x5a17da7e;

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

std::optional<double> mean_of(const std::vector<std::optional<double>>& xs)
{
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& x : xs)
    {
        if (x)
        {
            sum += *x;
            ++count;
        }
    }
    if (count == 0)
    {
        return std::nullopt;
    }
    return sum / static_cast<double>(count);
}

} // namespace

Trainer::Trainer(std::shared_ptr<const Scenario> scenario, TrainConfig cfg)
    : scenario_(std::move(scenario)),
      cfg_(std::move(cfg)),
      steps_(cfg_.steps_per_epoch > 0 ? cfg_.steps_per_epoch : scenario_->horizon_periods),
      net_(cfg_.policy),
      opt_(net_, cfg_)
{
    cfg_.validate();
    ema_.assign(static_cast<std::size_t>(steps_), std::nullopt);
}

void Trainer::resume_from(const std::filesystem::path& checkpoint)
{
    policy::load_checkpoint(checkpoint, net_, norm_, scenario_hash(*scenario_));
    norm_.frozen = false;
}

std::vector<std::uint64_t> Trainer::epoch_seeds(int epoch) const
{
    CounterRng rng(cfg_.seed, kEpochSeedStream + static_cast<std::uint64_t>(epoch));
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(cfg_.batch_envs));
    for (auto& s : seeds)
    {
        s = rng();
    }
    return seeds;
}

double Trainer::validate_greedy() const
{
    FeatureNormalizer frozen = norm_;
    frozen.frozen = true;
    const auto seeds = evaluation_seeds(cfg_.seed ^ kValidationSalt, static_cast<std::size_t>(cfg_.validation_episodes));
    std::vector<double> dgr(seeds.size());
    parallel_for(seeds.size(), cfg_.threads, [&](std::size_t i) {
        PolicyStrategy strategy(net_, frozen, true);
        dgr[i] = run_episode(scenario_, seeds[i], strategy, steps_).daily_going_rate;
    });
    return std::accumulate(dgr.begin(), dgr.end(), 0.0) / static_cast<double>(dgr.size());
}

TrainResult Trainer::run()
{
    const std::size_t nb = static_cast<std::size_t>(cfg_.batch_envs);
    const bool paired = cfg_.reward_mode == RewardMode::paired_baseline;
    const char* mode = reward_mode_name(cfg_.reward_mode);
    const double period = scenario_->decision_period_minutes;
    const std::uint64_t hash = scenario_hash(*scenario_);

    std::ofstream metrics, actions;
    if (!cfg_.out_dir.empty())
    {
        std::filesystem::create_directories(cfg_.out_dir);
        metrics.open(cfg_.out_dir / "metrics.csv");
        actions.open(cfg_.out_dir / "actions.csv");
        if (!metrics || !actions)
        {
            throw std::runtime_error("cannot write training logs under " + cfg_.out_dir.string());
        }
        metrics << "epoch,env,step,reward,dgr_with,dgr_without,completed_lots,avg_cycle_time_days,policy_loss,"
                   "critic_loss,clip_fraction,reward_mode\n";
        actions << "epoch,step,head,machine_id,op_id,family\n";
    }

    TrainResult result;
    bool have_best = false;
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch)
    {
        const auto seeds = epoch_seeds(epoch);
        std::vector<FabState> envs;
        envs.reserve(nb);
        for (std::size_t b = 0; b < nb; ++b)
        {
            envs.emplace_back(scenario_, seeds[b]);
        }
        parallel_for(nb, cfg_.threads, [&](std::size_t b) { envs[b].advance(period); });
        std::vector<KpiSnapshot> start(nb);
        std::vector<CounterRng> rngs;
        for (std::size_t b = 0; b < nb; ++b)
        {
            start[b] = envs[b].snapshot();
            rngs.emplace_back(seeds[b], kSampleStream);
            if (!norm_.frozen)
            {
                norm_.observe(extract_raw_graph(envs[b]));
            }
        }

        std::vector<std::vector<Experience>> history(nb);
        UpdateStats epoch_update;
        int updates = 0;
        for (int chunk = 0; chunk < steps_; chunk += cfg_.n_step)
        {
            const int len = std::min(cfg_.n_step, steps_ - chunk);
            std::vector<std::vector<Experience>> rollouts(nb, std::vector<Experience>(static_cast<std::size_t>(len)));
            std::vector<FeatureNormalizer> deltas(nb);
            parallel_for(nb, cfg_.threads, [&](std::size_t b) {
                for (int s = 0; s < len; ++s)
                {
                    Experience& e = rollouts[b][static_cast<std::size_t>(s)];
                    const HeteroGraph raw = extract_raw_graph(envs[b]);
                    deltas[b].observe(raw);
                    e.graph = raw;
                    norm_.apply(e.graph);
                    Tape t(&net_.params());
                    const auto enc = net_.encode(t, e.graph);
                    const auto heads = net_.decode(t, e.graph, enc);
                    e.old_value = t.scalar(net_.value(t, enc));
                    if (!cfg_.force_empty_actions)
                    {
                        e.draws = policy::sample_draws(t, heads, e.graph, &rngs[b], false);
                    }
                    e.old_logprob = t.scalar(policy::draws_logprob(t, heads, e.graph, e.draws));
                    e.actions = policy::to_action_set(e.graph, e.draws);
                    const PairedOutcome out = paired_step(envs[b], e.actions, paired);
                    e.dgr_with = out.with.daily_going_rate;
                    e.dgr_without = out.without ? out.without->daily_going_rate : 0.0;
                    e.reward = paired ? e.dgr_with - e.dgr_without : 0.0;
                    e.completed_lots = out.with.completed_lots;
                    e.avg_cycle_time_days = out.with.avg_cycle_time_days;
                    e.step = chunk + s;
                    e.env = static_cast<int>(b);
                }
            });

            std::vector<HeteroGraph> bootstrap(nb);
            parallel_for(nb, cfg_.threads, [&](std::size_t b) {
                bootstrap[b] = extract_raw_graph(envs[b]);
                norm_.apply(bootstrap[b]);
            });
            if (!norm_.frozen)
            {
                for (const auto& d : deltas)
                {
                    norm_.merge(d);
                }
            }

            if (!paired)
            {
                for (int s = 0; s < len; ++s)
                {
                    const auto step = static_cast<std::size_t>(chunk + s);
                    double baseline = 0.0;
                    if (ema_[step])
                    {
                        baseline = *ema_[step];
                    }
                    else
                    {
                        for (std::size_t b = 0; b < nb; ++b)
                        {
                            baseline += rollouts[b][static_cast<std::size_t>(s)].dgr_with;
                        }
                        baseline /= static_cast<double>(nb);
                    }
                    for (std::size_t b = 0; b < nb; ++b)
                    {
                        auto& e = rollouts[b][static_cast<std::size_t>(s)];
                        e.dgr_without = baseline;
                        e.reward = e.dgr_with - baseline;
                    }
                }
            }

            const UpdateStats u = ppo_update(net_, opt_, rollouts, bootstrap, cfg_);
            epoch_update.policy_loss += u.policy_loss;
            epoch_update.critic_loss += u.critic_loss;
            epoch_update.clip_fraction += u.clip_fraction;
            epoch_update.grad_norm = u.grad_norm;
            epoch_update.diverged = epoch_update.diverged || u.diverged;
            ++updates;

            for (std::size_t b = 0; b < nb; ++b)
            {
                for (auto& e : rollouts[b])
                {
                    e.graph = HeteroGraph{};
                    history[b].push_back(std::move(e));
                }
            }
        }
        if (updates > 0)
        {
            epoch_update.policy_loss /= updates;
            epoch_update.critic_loss /= updates;
            epoch_update.clip_fraction /= updates;
        }

        EpochSummary summary;
        summary.epoch = epoch;
        summary.update = epoch_update;
        std::vector<std::optional<double>> cts;
        double lots = 0.0;
        double reward = 0.0, with = 0.0, without = 0.0;
        std::size_t count = 0;
        for (std::size_t b = 0; b < nb; ++b)
        {
            const KpiReport rep = envs[b].kpi_report(start[b]);
            lots += static_cast<double>(rep.completed_lots);
            cts.push_back(rep.avg_cycle_time_days);
            for (const auto& e : history[b])
            {
                reward += e.reward;
                with += e.dgr_with;
                without += e.dgr_without;
                ++count;
            }
        }
        summary.mean_completed_lots = lots / static_cast<double>(nb);
        summary.mean_cycle_time_days = mean_of(cts);
        if (count > 0)
        {
            summary.mean_reward = reward / static_cast<double>(count);
            summary.mean_dgr_with = with / static_cast<double>(count);
            summary.mean_dgr_without = without / static_cast<double>(count);
        }

        if (!paired)
        {
            for (int s = 0; s < steps_; ++s)
            {
                double mean = 0.0;
                for (std::size_t b = 0; b < nb; ++b)
                {
                    mean += history[b][static_cast<std::size_t>(s)].dgr_with;
                }
                mean /= static_cast<double>(nb);
                auto& slot = ema_[static_cast<std::size_t>(s)];
                slot = slot ? cfg_.ema_alpha * mean + (1.0 - cfg_.ema_alpha) * *slot : mean;
            }
        }

        const double score = cfg_.validation_episodes > 0 ? validate_greedy() : summary.mean_dgr_with;
        if (cfg_.validation_episodes > 0)
        {
            summary.validation_dgr = score;
        }

        if (metrics.is_open())
        {
            for (std::size_t b = 0; b < nb; ++b)
            {
                for (const auto& e : history[b])
                {
                    metrics << epoch << ',' << b << ',' << e.step << ',' << fmt(e.reward) << ',' << fmt(e.dgr_with)
                            << ',' << fmt(e.dgr_without) << ',' << e.completed_lots << ','
                            << fmt(e.avg_cycle_time_days) << ",,,," << mode << '\n';
                    for (HeadKind h : {HeadKind::uptime, HeadKind::efficiency})
                    {
                        for (int m : (h == HeadKind::uptime ? e.actions.uptime : e.actions.efficiency))
                        {
                            const auto& ms = scenario_->machines[static_cast<std::size_t>(m)];
                            actions << epoch << ',' << e.step << ',' << policy::head_name(h) << ',' << m << ",-1,"
                                    << scenario_->families[static_cast<std::size_t>(ms.family)].name << '\n';
                        }
                    }
                    for (HeadKind h : {HeadKind::ded_remove, HeadKind::ded_add})
                    {
                        for (const auto& d : (h == HeadKind::ded_remove ? e.actions.ded_remove : e.actions.ded_add))
                        {
                            const auto& ms = scenario_->machines[static_cast<std::size_t>(d.machine)];
                            actions << epoch << ',' << e.step << ',' << policy::head_name(h) << ',' << d.machine
                                    << ',' << d.op << ','
                                    << scenario_->families[static_cast<std::size_t>(ms.family)].name << '\n';
                        }
                    }
                }
            }
            metrics << epoch << ",-1,-1," << fmt(summary.mean_reward) << ',' << fmt(summary.mean_dgr_with) << ','
                    << fmt(summary.mean_dgr_without) << ',' << fmt(summary.mean_completed_lots) << ','
                    << fmt(summary.mean_cycle_time_days) << ',' << fmt(epoch_update.policy_loss) << ','
                    << fmt(epoch_update.critic_loss) << ',' << fmt(epoch_update.clip_fraction) << ',' << mode << '\n';
            metrics.flush();
            actions.flush();

            const policy::CheckpointMeta meta{0, hash, static_cast<std::uint64_t>(epoch), score};
            policy::save_checkpoint(cfg_.out_dir / "last.ckpt", net_, norm_, meta);
            if (!have_best || score > result.best_score)
            {
                policy::save_checkpoint(cfg_.out_dir / "best.ckpt", net_, norm_, meta);
            }
        }
        if (!have_best || score > result.best_score)
        {
            have_best = true;
            result.best_score = score;
            result.best_epoch = epoch;
        }

        result.epochs.push_back(summary);
        if (on_epoch)
        {
            on_epoch(summary);
        }
    }
    return result;
}

// Evaluation ----------------------------------------------------------------------

PolicyStrategy::PolicyStrategy(const policy::PolicyNet& net, FeatureNormalizer norm, bool greedy)
    : net_(net), norm_(std::move(norm)), greedy_(greedy)
{
    norm_.frozen = true;
}

ActionSet PolicyStrategy::act(const FabState&, const HeteroGraph& raw, CounterRng& rng)
{
    HeteroGraph g = raw;
    norm_.apply(g);
    Tape t(&net_.params());
    const auto heads = net_.decode(t, g, net_.encode(t, g));
    const auto draws = policy::sample_draws(t, heads, g, &rng, greedy_);
    return policy::to_action_set(g, draws);
}

EpisodeKpi run_episode(std::shared_ptr<const Scenario> scenario, std::uint64_t seed, baselines::Strategy& strategy,
                       int steps, std::vector<ActionSet>* actions_taken)
{
    const double period = scenario->decision_period_minutes;
    FabState env(std::move(scenario), seed);
    env.advance(period);
    const KpiSnapshot start = env.snapshot();
    CounterRng rng(seed, kEpisodeStream);
    EpisodeKpi out;
    out.seed = seed;
    for (int s = 0; s < steps; ++s)
    {
        const ActionSet a = strategy.act(env, extract_raw_graph(env), rng);
        if (actions_taken != nullptr)
        {
            actions_taken->push_back(a);
        }
        out.step_dgr.push_back(paired_step(env, a, false).with.daily_going_rate);
    }
    const KpiReport rep = env.kpi_report(start);
    out.completed_lots = rep.completed_lots;
    out.avg_cycle_time_days = rep.avg_cycle_time_days;
    out.daily_going_rate = rep.daily_going_rate;
    return out;
}

std::vector<std::uint64_t> evaluation_seeds(std::uint64_t base, std::size_t count)
{
    CounterRng rng(base, 0xe7a1);
    std::vector<std::uint64_t> seeds(count);
    for (auto& s : seeds)
    {
        s = rng();
    }
    return seeds;
}

StrategySummary summarize(std::string name, std::vector<EpisodeKpi> episodes)
{
    StrategySummary s;
    s.name = std::move(name);
    std::vector<std::optional<double>> cts;
    for (const auto& e : episodes)
    {
        s.mean_completed_lots += static_cast<double>(e.completed_lots);
        s.mean_dgr += e.daily_going_rate;
        cts.push_back(e.avg_cycle_time_days);
    }
    if (!episodes.empty())
    {
        s.mean_completed_lots /= static_cast<double>(episodes.size());
        s.mean_dgr /= static_cast<double>(episodes.size());
    }
    s.mean_cycle_time_days = mean_of(cts);
    s.episodes = std::move(episodes);
    return s;
}

} // namespace fabcap::train
