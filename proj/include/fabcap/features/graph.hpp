#pragma once

// Heterogeneous graph snapshot of a FabState: machine and operation nodes,
// operation-machine edges for every compatible pair, and route-order
// operation-operation edges, plus feasibility masks for the four action heads.

#include "fabcap/nn/matrix.hpp"
#include "fabcap/sim/fab_state.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace fabcap
{

inline constexpr std::size_t kMachineFeatures = 16;
inline constexpr std::size_t kOpFeatures = 15;
inline constexpr std::size_t kOmEdgeFeatures = 2;
inline constexpr std::size_t kOoEdgeFeatures = 1;

struct OmEdge
{
    int op = -1;
    int machine = -1;
    bool dedicated = false;
};

struct OoEdge
{
    int from = -1;
    int to = -1;
};

// 1 = the action may be sampled. Dedication masks are indexed by om-edge.
struct ActionMasks
{
    std::vector<std::uint8_t> uptime;
    std::vector<std::uint8_t> efficiency;
    std::vector<std::uint8_t> ded_add;
    std::vector<std::uint8_t> ded_remove;
};

struct HeteroGraph
{
    nn::Matrix machine_feats;
    nn::Matrix op_feats;
    // Sorted by (op, machine).
    std::vector<OmEdge> om_edges;
    nn::Matrix om_feats;
    std::vector<OoEdge> oo_edges;
    nn::Matrix oo_feats;
    // Route neighbours per op, -1 at the route ends.
    std::vector<int> pred;
    std::vector<int> succ;
    ActionMasks masks;
    SigmaBudget sigma;

    std::size_t num_machines() const noexcept { return machine_feats.rows; }
    std::size_t num_ops() const noexcept { return op_feats.rows; }
};

// Per-feature running mean/variance (Welford), mergeable across replicas.
class RunningStats
{
public:
    static constexpr double kVarianceFloor = 1e-6;

    RunningStats() = default;
    explicit RunningStats(std::size_t dims) : mean_(dims, 0.0), m2_(dims, 0.0) {}

    void observe_rows(const nn::Matrix& x);
    // Count-weighted merge of another replica's statistics.
    void merge(const RunningStats& other);
    void normalize(nn::Matrix& x) const;
    void denormalize(nn::Matrix& x) const;

    std::size_t dims() const noexcept { return mean_.size(); }
    double count() const noexcept { return count_; }
    double mean(std::size_t i) const { return mean_.at(i); }
    double variance(std::size_t i) const;

    const std::vector<double>& means() const noexcept { return mean_; }
    const std::vector<double>& m2() const noexcept { return m2_; }
    void restore(double count, std::vector<double> mean, std::vector<double> m2);

    bool operator==(const RunningStats&) const = default;

private:
    double count_ = 0.0;
    std::vector<double> mean_;
    std::vector<double> m2_;
};

struct FeatureNormalizer
{
    RunningStats machine{kMachineFeatures};
    RunningStats op{kOpFeatures};
    RunningStats om{kOmEdgeFeatures};
    // Evaluation mode: statistics are applied but no longer updated.
    bool frozen = false;

    void observe(const HeteroGraph& raw);
    void apply(HeteroGraph& g) const;
    void merge(const FeatureNormalizer& other);

    bool operator==(const FeatureNormalizer&) const = default;
};

// Builds the raw graph; features average over the last closed decision period.
HeteroGraph extract_raw_graph(const FabState& state);

// Raw extraction, then (unless frozen) a normalizer update, then normalization.
HeteroGraph extract_graph(const FabState& state, FeatureNormalizer* normalizer);

// Tab-separated node and edge tables for debugging.
void dump_graph(const HeteroGraph& g, std::ostream& out);

} // namespace fabcap
