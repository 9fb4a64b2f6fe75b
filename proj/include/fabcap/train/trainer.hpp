#pragma once

// n-step PPO over B environment instances with paired with/without-action
// rewards, plus the greedy evaluation harness shared with the baselines.

#include "fabcap/baselines/baselines.hpp"
#include "fabcap/features/graph.hpp"
#include "fabcap/policy/policy_net.hpp"
#include "fabcap/sim/fab_state.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fabcap::train
{

enum class RewardMode : std::uint8_t
{
    paired_baseline,
    ema_baseline,
};

const char* reward_mode_name(RewardMode m) noexcept;
RewardMode parse_reward_mode(const std::string& name);

struct TrainConfig
{
    double actor_lr = 3e-4;
    double critic_lr = 1e-4;
    int n_step = 5;
    int ppo_epochs = 20;
    double clip_eps = 0.2;
    double gamma = 0.99;
    int batch_envs = 16;
    // Decision steps per epoch; 0 uses the scenario horizon.
    int steps_per_epoch = 0;
    int epochs = 100;
    RewardMode reward_mode = RewardMode::paired_baseline;
    double ema_alpha = 0.3;
    double entropy_coef = 0.0;
    double grad_clip_norm = 1.0;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    // Greedy validation episodes per epoch for best-checkpoint selection; 0 disables.
    int validation_episodes = 4;
    // Every draw is empty; used to check that a null policy leaves parameters unchanged.
    bool force_empty_actions = false;
    policy::PolicyConfig policy;
    // Metrics, action log and checkpoints; empty writes nothing.
    std::filesystem::path out_dir;

    void validate() const;
};

struct Experience
{
    HeteroGraph graph;
    policy::HeadDraws draws;
    ActionSet actions;
    double reward = 0.0;
    double dgr_with = 0.0;
    double dgr_without = 0.0;
    double old_logprob = 0.0;
    double old_value = 0.0;
    std::int64_t completed_lots = 0;
    std::optional<double> avg_cycle_time_days;
    int step = 0;
    int env = 0;
};

// Period KPIs of one paired decision step.
struct PairedOutcome
{
    KpiReport with;
    std::optional<KpiReport> without;
};

// Forks a no-action baseline (when paired), applies the actions to env and
// advances both by one decision period.
PairedOutcome paired_step(FabState& env, const ActionSet& actions, bool paired);

// Backward Bellman accumulation from a bootstrap value.
std::vector<double> discounted_returns(std::span<const double> rewards, double bootstrap, double gamma);

// In-place z-score with the population standard deviation floored at 1e-8.
void zscore(std::span<double> values);

// Probability ratio clipped to [1 - eps, 1 + eps].
double clip_ratio(double ratio, double eps) noexcept;

struct SampleLosses
{
    nn::Var policy;
    nn::Var critic;
    double ratio = 1.0;
    double value = 0.0;
};

// Per-sample clipped surrogate (negated, with entropy bonus) and half squared
// critic error, both divided by batch_size. Recorded on a single tape.
SampleLosses sample_losses(nn::Tape& tape, const policy::PolicyNet& net, const Experience& exp, double advantage,
                           double target, const TrainConfig& cfg, std::size_t batch_size);

struct UpdateStats
{
    double policy_loss = 0.0;
    double critic_loss = 0.0;
    double clip_fraction = 0.0;
    double grad_norm = 0.0;
    bool diverged = false;
};

// Optimizer state for the actor (encoder and decoders) and the value head.
class Optimizers
{
public:
    Optimizers(const policy::PolicyNet& net, const TrainConfig& cfg);
    nn::Adam actor;
    nn::Adam critic;
};

// K epochs over one n-step batch. rollouts[b] holds env b's consecutive
// experiences and bootstrap[b] the graph of the state after them. Returns are
// recomputed from the current critic at every inner epoch. The surrogate
// gradient updates actor weights and the critic error updates the value head.
UpdateStats ppo_update(policy::PolicyNet& net, Optimizers& opt, const std::vector<std::vector<Experience>>& rollouts,
                       const std::vector<HeteroGraph>& bootstrap, const TrainConfig& cfg);

struct EpochSummary
{
    int epoch = 0;
    double mean_reward = 0.0;
    double mean_dgr_with = 0.0;
    double mean_dgr_without = 0.0;
    double mean_completed_lots = 0.0;
    std::optional<double> mean_cycle_time_days;
    UpdateStats update;
    std::optional<double> validation_dgr;
};

struct TrainResult
{
    std::vector<EpochSummary> epochs;
    int best_epoch = 0;
    double best_score = 0.0;
};

class Trainer
{
public:
    Trainer(std::shared_ptr<const Scenario> scenario, TrainConfig cfg);

    // Progress sink, called once per finished epoch.
    std::function<void(const EpochSummary&)> on_epoch;

    TrainResult run();

    policy::PolicyNet& net() noexcept { return net_; }
    const policy::PolicyNet& net() const noexcept { return net_; }
    const FeatureNormalizer& normalizer() const noexcept { return norm_; }
    int steps_per_epoch() const noexcept { return steps_; }

    // Restores weights and normalizer; the checkpoint must match the scenario hash.
    void resume_from(const std::filesystem::path& checkpoint);

private:
    std::vector<std::uint64_t> epoch_seeds(int epoch) const;
    double validate_greedy() const;

    std::shared_ptr<const Scenario> scenario_;
    TrainConfig cfg_;
    int steps_;
    policy::PolicyNet net_;
    FeatureNormalizer norm_;
    Optimizers opt_;
    std::vector<std::optional<double>> ema_;
};

// Frozen-normalizer policy acting greedily (or sampled) through the baseline interface.
class PolicyStrategy final : public baselines::Strategy
{
public:
    PolicyStrategy(const policy::PolicyNet& net, FeatureNormalizer norm, bool greedy);
    std::string name() const override { return "policy"; }
    ActionSet act(const FabState& state, const HeteroGraph& raw, CounterRng& rng) override;

private:
    const policy::PolicyNet& net_;
    FeatureNormalizer norm_;
    bool greedy_;
};

struct EpisodeKpi
{
    std::uint64_t seed = 0;
    std::int64_t completed_lots = 0;
    std::optional<double> avg_cycle_time_days;
    double daily_going_rate = 0.0;
    std::vector<double> step_dgr;
};

// One warm-up period, then `steps` decision periods driven by the strategy.
// KPIs cover the decision periods only.
EpisodeKpi run_episode(std::shared_ptr<const Scenario> scenario, std::uint64_t seed, baselines::Strategy& strategy,
                       int steps, std::vector<ActionSet>* actions_taken = nullptr);

// Shared seed sequence for fair comparisons.
std::vector<std::uint64_t> evaluation_seeds(std::uint64_t base, std::size_t count);

struct StrategySummary
{
    std::string name;
    std::vector<EpisodeKpi> episodes;
    double mean_completed_lots = 0.0;
    std::optional<double> mean_cycle_time_days;
    double mean_dgr = 0.0;
};

StrategySummary summarize(std::string name, std::vector<EpisodeKpi> episodes);

} // namespace fabcap::train
