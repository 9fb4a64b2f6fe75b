#pragma once

// Heterogeneous GNN encoder with edge-aware attention for machines and an
// MLP aggregator for operations, sigmoid decoders for the uptime and
// efficiency heads, a scaled-tanh dedication decoder, and a mean-pooled
// linear critic. All learnable weights live in one ParamStore.

#include "fabcap/features/graph.hpp"
#include "fabcap/nn/tape.hpp"
#include "fabcap/sim/action.hpp"
#include "fabcap/sim/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fabcap::policy
{

struct PolicyConfig
{
    std::size_t hidden = 64;
    std::size_t layers = 1;
    double dedication_scale = 10.0;
    double attention_slope = 0.2;
    std::uint64_t init_seed = 0;
};

// Forward-pass outputs, all recorded on the caller's tape.
struct Encoded
{
    nn::Var machine_embeds;
    nn::Var op_embeds;
    std::vector<nn::Var> machine_layers;
    std::vector<nn::Var> op_layers;
};

struct Heads
{
    // [|M| x 1] sigmoid probabilities and their logs.
    nn::Var uptime;
    nn::Var efficiency;
    nn::Var log_uptime;
    nn::Var log_efficiency;
    // [|E_om| x 1], one row per om-edge.
    nn::Var ded_add;
    nn::Var ded_remove;
    nn::Var log_ded_add;
    nn::Var log_ded_remove;
};

enum class HeadKind : std::uint8_t
{
    uptime,
    efficiency,
    ded_remove,
    ded_add,
};

const char* head_name(HeadKind h) noexcept;

// Indices drawn by one head, in draw order. Machine ids for uptime and
// efficiency, om-edge ids for the dedication heads.
struct HeadDraws
{
    std::vector<int> uptime;
    std::vector<int> efficiency;
    std::vector<int> ded_remove;
    std::vector<int> ded_add;

    std::vector<int>& of(HeadKind h);
    const std::vector<int>& of(HeadKind h) const;
    bool operator==(const HeadDraws&) const = default;
};

class PolicyNet
{
public:
    PolicyNet(PolicyConfig cfg, std::size_t machine_dims = kMachineFeatures, std::size_t op_dims = kOpFeatures,
              std::size_t om_dims = kOmEdgeFeatures, std::size_t oo_dims = kOoEdgeFeatures);

    const PolicyConfig& config() const noexcept { return cfg_; }
    nn::ParamStore& params() noexcept { return params_; }
    const nn::ParamStore& params() const noexcept { return params_; }
    std::size_t machine_dims() const noexcept { return machine_dims_; }
    std::size_t op_dims() const noexcept { return op_dims_; }
    std::size_t om_dims() const noexcept { return om_dims_; }
    std::size_t oo_dims() const noexcept { return oo_dims_; }

    // Indices of encoder+decoder weights and of the value head, for separate optimizers.
    const std::vector<std::size_t>& actor_params() const noexcept { return actor_params_; }
    const std::vector<std::size_t>& critic_params() const noexcept { return critic_params_; }

    Encoded encode(nn::Tape& tape, const HeteroGraph& g) const;
    Heads decode(nn::Tape& tape, const HeteroGraph& g, const Encoded& enc) const;
    nn::Var value(nn::Tape& tape, const Encoded& enc) const;

private:
    struct Mlp
    {
        std::size_t w1, b1, w2, b2, w3, b3;
    };
    struct Layer
    {
        std::size_t machine_proj, op_proj, edge_proj, attn_query, attn_key;
        Mlp op_mlp;
    };

    Mlp add_mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, CounterRng& rng);
    std::size_t add_weight(const std::string& name, std::size_t in, std::size_t out, CounterRng& rng);
    std::size_t add_bias(const std::string& name, std::size_t out);
    nn::Var run_mlp(nn::Tape& tape, const Mlp& mlp, nn::Var x) const;

    PolicyConfig cfg_;
    std::size_t machine_dims_, op_dims_, om_dims_, oo_dims_;
    nn::ParamStore params_;
    std::vector<Layer> layers_;
    Mlp uptime_mlp_{}, efficiency_mlp_{};
    std::size_t ded_query_ = 0, ded_key_ = 0;
    std::size_t value_w_ = 0, value_b_ = 0;
    std::vector<std::size_t> actor_params_;
    std::vector<std::size_t> critic_params_;
};

// Sequential without-replacement sampling (Plackett-Luce) over the head
// probabilities; greedy takes the top entries with ties to the lowest index.
HeadDraws sample_draws(const nn::Tape& tape, const Heads& heads, const HeteroGraph& g, CounterRng* rng, bool greedy);

// Exact joint log-probability of the draws, recorded on the tape. Fills the
// per-head terms when per_head is non-null (order: uptime, efficiency, remove, add).
nn::Var draws_logprob(nn::Tape& tape, const Heads& heads, const HeteroGraph& g, const HeadDraws& draws,
                      std::vector<nn::Var>* per_head = nullptr);

// Sum over heads of the entropy of each head's first-draw categorical.
nn::Var first_draw_entropy(nn::Tape& tape, const Heads& heads, const HeteroGraph& g);

ActionSet to_action_set(const HeteroGraph& g, const HeadDraws& draws);

// Candidates still open for the next draw of a head, given earlier draws of
// that head. Dedication removals also close an op once it would be left
// with a single dedicated machine.
std::vector<int> open_candidates(const HeteroGraph& g, HeadKind head, const std::vector<int>& drawn_so_far);
int head_budget(const HeteroGraph& g, HeadKind head);

class CheckpointError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class CheckpointHashMismatch : public CheckpointError
{
public:
    using CheckpointError::CheckpointError;
};

struct CheckpointMeta
{
    std::uint32_t version = 0;
    std::uint64_t scenario_hash = 0;
    std::uint64_t epoch = 0;
    double score = 0.0;
};

void save_checkpoint(const std::filesystem::path& path, const PolicyNet& net, const FeatureNormalizer& norm,
                     const CheckpointMeta& meta);

// Reads into an existing network; rejects a header whose dimensions differ
// or, when expected_hash is non-zero, whose scenario hash differs.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, PolicyNet& net, FeatureNormalizer& norm,
                               std::uint64_t expected_hash);

// Header-only read, used to size a network before loading.
PolicyConfig peek_checkpoint_config(const std::filesystem::path& path);

} // namespace fabcap::policy
