#include "fabcap/policy/policy_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fabcap::policy
{

using nn::Matrix;
using nn::Tape;
using nn::Var;

const char* head_name(HeadKind h) noexcept
{
    switch (h)
    {
    case HeadKind::uptime:
        return "uptime";
    case HeadKind::efficiency:
        return "efficiency";
    case HeadKind::ded_remove:
        return "ded_remove";
    case HeadKind::ded_add:
        return "ded_add";
    }
    return "unknown";
}

std::vector<int>& HeadDraws::of(HeadKind h)
{
    switch (h)
    {
    case HeadKind::uptime:
        return uptime;
    case HeadKind::efficiency:
        return efficiency;
    case HeadKind::ded_remove:
        return ded_remove;
    case HeadKind::ded_add:
        break;
    }
    return ded_add;
}

const std::vector<int>& HeadDraws::of(HeadKind h) const
{
    return const_cast<HeadDraws*>(this)->of(h);
}

namespace
{

constexpr HeadKind kHeads[] = {HeadKind::uptime, HeadKind::efficiency, HeadKind::ded_remove, HeadKind::ded_add};

} // namespace

PolicyNet::PolicyNet(PolicyConfig cfg, std::size_t machine_dims, std::size_t op_dims, std::size_t om_dims,
                     std::size_t oo_dims)
    : cfg_(cfg), machine_dims_(machine_dims), op_dims_(op_dims), om_dims_(om_dims), oo_dims_(oo_dims)
{
    if (cfg_.hidden == 0 || cfg_.layers == 0)
    {
        throw std::invalid_argument("PolicyNet: hidden size and layer count must be positive");
    }
    const std::size_t d = cfg_.hidden;
    CounterRng rng(cfg_.init_seed, 0x901c7ULL);
    std::size_t in_m = machine_dims_;
    std::size_t in_o = op_dims_;
    for (std::size_t l = 0; l < cfg_.layers; ++l)
    {
        const std::string p = "layer" + std::to_string(l) + ".";
        Layer layer{};
        layer.machine_proj = add_weight(p + "machine_proj", in_m, d, rng);
        layer.op_proj = add_weight(p + "op_proj", in_o, d, rng);
        layer.edge_proj = add_weight(p + "edge_proj", om_dims_, d, rng);
        layer.attn_query = add_weight(p + "attn_query", d, 1, rng);
        layer.attn_key = add_weight(p + "attn_key", 2 * d, 1, rng);
        layer.op_mlp = add_mlp(p + "op_mlp", 3 * in_o + d + 2 * oo_dims_, d, d, rng);
        layers_.push_back(layer);
        in_m = d;
        in_o = d;
    }
    uptime_mlp_ = add_mlp("uptime_head", d, d, 1, rng);
    efficiency_mlp_ = add_mlp("efficiency_head", d, d, 1, rng);
    ded_query_ = add_weight("dedication_query", d, d, rng);
    ded_key_ = add_weight("dedication_key", d, d, rng);
    for (std::size_t i = 0; i < params_.size(); ++i)
    {
        actor_params_.push_back(i);
    }
    value_w_ = add_weight("value_w", 2 * d, 1, rng);
    value_b_ = add_bias("value_b", 1);
    critic_params_ = {value_w_, value_b_};
}

std::size_t PolicyNet::add_weight(const std::string& name, std::size_t in, std::size_t out, CounterRng& rng)
{
    Matrix w(in, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : w.data)
    {
        v = (2.0 * rng.uniform() - 1.0) * bound;
    }
    return params_.add(name, std::move(w));
}

std::size_t PolicyNet::add_bias(const std::string& name, std::size_t out)
{
    return params_.add(name, Matrix(1, out));
}

PolicyNet::Mlp PolicyNet::add_mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
                                  CounterRng& rng)
{
    Mlp m{};
    m.w1 = add_weight(name + ".w1", in, hidden, rng);
    m.b1 = add_bias(name + ".b1", hidden);
    m.w2 = add_weight(name + ".w2", hidden, hidden, rng);
    m.b2 = add_bias(name + ".b2", hidden);
    m.w3 = add_weight(name + ".w3", hidden, out, rng);
    m.b3 = add_bias(name + ".b3", out);
    return m;
}

Var PolicyNet::run_mlp(Tape& t, const Mlp& m, Var x) const
{
    Var h = t.tanh(t.add_row(t.matmul(x, t.param(m.w1)), t.param(m.b1)));
    h = t.tanh(t.add_row(t.matmul(h, t.param(m.w2)), t.param(m.b2)));
    return t.add_row(t.matmul(h, t.param(m.w3)), t.param(m.b3));
}

Encoded PolicyNet::encode(Tape& t, const HeteroGraph& g) const
{
    const std::size_t nm = g.num_machines();
    const std::size_t no = g.num_ops();
    const std::size_t d = cfg_.hidden;
    if (g.machine_feats.cols != machine_dims_ || g.op_feats.cols != op_dims_ || g.om_feats.cols != om_dims_ ||
        g.oo_feats.cols != oo_dims_)
    {
        throw std::invalid_argument("PolicyNet: graph feature widths do not match the network");
    }
    if (nm == 0 || no == 0)
    {
        throw std::invalid_argument("PolicyNet: graph needs at least one machine and one operation");
    }

    std::vector<int> edge_op, edge_machine;
    Matrix edge_feats(0, om_dims_);
    for (std::size_t e = 0; e < g.om_edges.size(); ++e)
    {
        if (!g.om_edges[e].dedicated)
        {
            continue;
        }
        edge_op.push_back(g.om_edges[e].op);
        edge_machine.push_back(g.om_edges[e].machine);
        const auto row = g.om_feats.row(e);
        edge_feats.data.insert(edge_feats.data.end(), row.begin(), row.end());
        ++edge_feats.rows;
    }
    const std::size_t ne = edge_op.size();

    // Incoming and outgoing route-edge features per op, zero at the route ends.
    Matrix flow(no, 2 * oo_dims_);
    for (std::size_t e = 0; e < g.oo_edges.size(); ++e)
    {
        const auto from = static_cast<std::size_t>(g.oo_edges[e].from);
        const auto to = static_cast<std::size_t>(g.oo_edges[e].to);
        for (std::size_t c = 0; c < oo_dims_; ++c)
        {
            flow(from, oo_dims_ + c) = g.oo_feats(e, c);
            flow(to, c) = g.oo_feats(e, c);
        }
    }

    std::vector<int> segment(edge_machine);
    std::vector<int> query_rows(edge_machine);
    for (std::size_t m = 0; m < nm; ++m)
    {
        segment.push_back(static_cast<int>(m));
        query_rows.push_back(static_cast<int>(m));
    }

    Var prev_m = t.constant(g.machine_feats);
    Var prev_o = t.constant(g.op_feats);
    const Var edge_in = t.constant(std::move(edge_feats));
    const Var flow_in = t.constant(std::move(flow));
    const Var self_pad = t.constant(Matrix(nm, d));

    Encoded enc;
    for (const Layer& layer : layers_)
    {
        const Var hm = t.matmul(prev_m, t.param(layer.machine_proj));
        const Var ho = t.matmul(prev_o, t.param(layer.op_proj));
        Var em;
        {
            const Var q = t.matmul(hm, t.param(layer.attn_query));
            const Var q_rows = t.gather_rows(q, query_rows);
            const Var self_key = t.concat_cols(std::vector<Var>{hm, self_pad});
            Var keys, values;
            if (ne > 0)
            {
                const Var he = t.matmul(edge_in, t.param(layer.edge_proj));
                const Var ho_edge = t.gather_rows(ho, edge_op);
                const Var edge_key = t.concat_cols(std::vector<Var>{ho_edge, he});
                keys = t.concat_rows(std::vector<Var>{edge_key, self_key});
                values = t.concat_rows(std::vector<Var>{t.add(ho_edge, he), hm});
            }
            else
            {
                keys = self_key;
                values = hm;
            }
            const Var k = t.matmul(keys, t.param(layer.attn_key));
            const Var score = t.leaky_relu(t.add(q_rows, k), cfg_.attention_slope);
            const Var alpha = t.segment_softmax(score, segment, nm);
            em = t.tanh(t.segment_sum(t.mul_col(values, alpha), segment, nm));
        }
        Var machine_mean;
        if (ne > 0)
        {
            machine_mean = t.segment_mean(t.gather_rows(em, edge_machine), edge_op, no);
        }
        else
        {
            machine_mean = t.constant(Matrix(no, d));
        }
        const Var pred = t.gather_rows(prev_o, g.pred);
        const Var succ = t.gather_rows(prev_o, g.succ);
        const Var op_in = t.concat_cols(std::vector<Var>{pred, succ, prev_o, machine_mean, flow_in});
        const Var ro = run_mlp(t, layer.op_mlp, op_in);

        enc.machine_layers.push_back(em);
        enc.op_layers.push_back(ro);
        prev_m = em;
        prev_o = ro;
    }

    if (layers_.size() == 1)
    {
        enc.machine_embeds = enc.machine_layers[0];
        enc.op_embeds = enc.op_layers[0];
    }
    else
    {
        Var sm = enc.machine_layers[0];
        Var so = enc.op_layers[0];
        for (std::size_t l = 1; l < layers_.size(); ++l)
        {
            sm = t.add(sm, enc.machine_layers[l]);
            so = t.add(so, enc.op_layers[l]);
        }
        const double inv = 1.0 / static_cast<double>(layers_.size());
        enc.machine_embeds = t.scale(sm, inv);
        enc.op_embeds = t.scale(so, inv);
    }
    return enc;
}

Heads PolicyNet::decode(Tape& t, const HeteroGraph& g, const Encoded& enc) const
{
    Heads h;
    const Var u_logit = run_mlp(t, uptime_mlp_, enc.machine_embeds);
    const Var r_logit = run_mlp(t, efficiency_mlp_, enc.machine_embeds);
    h.uptime = t.sigmoid(u_logit);
    h.log_uptime = t.log_sigmoid(u_logit);
    h.efficiency = t.sigmoid(r_logit);
    h.log_efficiency = t.log_sigmoid(r_logit);

    std::vector<int> em, eo;
    em.reserve(g.om_edges.size());
    eo.reserve(g.om_edges.size());
    for (const auto& e : g.om_edges)
    {
        em.push_back(e.machine);
        eo.push_back(e.op);
    }
    if (em.empty())
    {
        const Var none = t.constant(Matrix(0, 1));
        h.ded_add = h.ded_remove = h.log_ded_add = h.log_ded_remove = none;
        return h;
    }
    const Var q = t.gather_rows(t.matmul(enc.machine_embeds, t.param(ded_query_)), std::move(em));
    const Var k = t.gather_rows(t.matmul(enc.op_embeds, t.param(ded_key_)), std::move(eo));
    const Var bounded = t.tanh(t.scale(t.row_dot(q, k), 1.0 / std::sqrt(static_cast<double>(cfg_.hidden))));
    const Var add_logit = t.scale(bounded, -cfg_.dedication_scale);
    h.ded_add = t.sigmoid(add_logit);
    h.log_ded_add = t.log_sigmoid(add_logit);
    h.ded_remove = t.add_scalar(t.scale(h.ded_add, -1.0), 1.0);
    h.log_ded_remove = t.log_sigmoid(t.scale(bounded, cfg_.dedication_scale));
    return h;
}

Var PolicyNet::value(Tape& t, const Encoded& enc) const
{
    const Var pooled = t.concat_cols(std::vector<Var>{t.mean_rows(enc.machine_embeds), t.mean_rows(enc.op_embeds)});
    return t.add_row(t.matmul(pooled, t.param(value_w_)), t.param(value_b_));
}

int head_budget(const HeteroGraph& g, HeadKind head)
{
    switch (head)
    {
    case HeadKind::uptime:
        return g.sigma.uptime;
    case HeadKind::efficiency:
        return g.sigma.efficiency;
    case HeadKind::ded_remove:
        return g.sigma.dedication_remove;
    case HeadKind::ded_add:
        return g.sigma.dedication_add;
    }
    return 0;
}

std::vector<int> open_candidates(const HeteroGraph& g, HeadKind head, const std::vector<int>& drawn)
{
    const std::vector<std::uint8_t>* mask = nullptr;
    switch (head)
    {
    case HeadKind::uptime:
        mask = &g.masks.uptime;
        break;
    case HeadKind::efficiency:
        mask = &g.masks.efficiency;
        break;
    case HeadKind::ded_remove:
        mask = &g.masks.ded_remove;
        break;
    case HeadKind::ded_add:
        mask = &g.masks.ded_add;
        break;
    }
    std::vector<std::uint8_t> taken(mask->size(), 0);
    for (int i : drawn)
    {
        taken[static_cast<std::size_t>(i)] = 1;
    }

    std::vector<int> remaining_dedicated;
    if (head == HeadKind::ded_remove)
    {
        remaining_dedicated.assign(g.num_ops(), 0);
        for (const auto& e : g.om_edges)
        {
            remaining_dedicated[static_cast<std::size_t>(e.op)] += e.dedicated ? 1 : 0;
        }
        for (int i : drawn)
        {
            --remaining_dedicated[static_cast<std::size_t>(g.om_edges[static_cast<std::size_t>(i)].op)];
        }
    }

    std::vector<int> open;
    for (std::size_t i = 0; i < mask->size(); ++i)
    {
        if ((*mask)[i] == 0 || taken[i] != 0)
        {
            continue;
        }
        if (head == HeadKind::ded_remove &&
            remaining_dedicated[static_cast<std::size_t>(g.om_edges[i].op)] < 2)
        {
            continue;
        }
        open.push_back(static_cast<int>(i));
    }
    return open;
}

namespace
{

Var head_probs(const Heads& h, HeadKind k)
{
    switch (k)
    {
    case HeadKind::uptime:
        return h.uptime;
    case HeadKind::efficiency:
        return h.efficiency;
    case HeadKind::ded_remove:
        return h.ded_remove;
    case HeadKind::ded_add:
        break;
    }
    return h.ded_add;
}

Var head_logs(const Heads& h, HeadKind k)
{
    switch (k)
    {
    case HeadKind::uptime:
        return h.log_uptime;
    case HeadKind::efficiency:
        return h.log_efficiency;
    case HeadKind::ded_remove:
        return h.log_ded_remove;
    case HeadKind::ded_add:
        break;
    }
    return h.log_ded_add;
}

} // namespace

HeadDraws sample_draws(const Tape& tape, const Heads& heads, const HeteroGraph& g, CounterRng* rng, bool greedy)
{
    if (!greedy && rng == nullptr)
    {
        throw std::invalid_argument("sample_draws: sampling needs an rng");
    }
    HeadDraws out;
    for (HeadKind k : kHeads)
    {
        const int budget = head_budget(g, k);
        if (budget <= 0)
        {
            continue;
        }
        const Matrix& probs = tape.value(head_probs(heads, k));
        auto& drawn = out.of(k);
        for (int step = 0; step < budget; ++step)
        {
            const auto open = open_candidates(g, k, drawn);
            if (open.empty())
            {
                break;
            }
            int pick = open.front();
            if (greedy)
            {
                double best = -1.0;
                for (int i : open)
                {
                    if (probs.data[static_cast<std::size_t>(i)] > best)
                    {
                        best = probs.data[static_cast<std::size_t>(i)];
                        pick = i;
                    }
                }
            }
            else
            {
                double total = 0.0;
                for (int i : open)
                {
                    total += probs.data[static_cast<std::size_t>(i)];
                }
                double u = rng->uniform() * total;
                pick = open.back();
                for (int i : open)
                {
                    u -= probs.data[static_cast<std::size_t>(i)];
                    if (u < 0.0)
                    {
                        pick = i;
                        break;
                    }
                }
            }
            drawn.push_back(pick);
        }
    }
    return out;
}

Var draws_logprob(Tape& t, const Heads& heads, const HeteroGraph& g, const HeadDraws& draws,
                  std::vector<Var>* per_head)
{
    Var total = t.constant(Matrix(1, 1));
    if (per_head != nullptr)
    {
        per_head->clear();
    }
    for (HeadKind k : kHeads)
    {
        const auto& picks = draws.of(k);
        Var head_total = t.constant(Matrix(1, 1));
        std::vector<int> so_far;
        for (int pick : picks)
        {
            const auto open = open_candidates(g, k, so_far);
            if (std::find(open.begin(), open.end(), pick) == open.end())
            {
                throw std::invalid_argument(std::string("draws_logprob: ") + head_name(k) +
                                            " draw is masked or repeated");
            }
            const Var log_pick = t.gather_rows(head_logs(heads, k), {pick});
            const Var log_norm = t.log(t.sum(t.gather_rows(head_probs(heads, k), open)));
            head_total = t.add(head_total, t.sub(log_pick, log_norm));
            so_far.push_back(pick);
        }
        if (per_head != nullptr)
        {
            per_head->push_back(head_total);
        }
        total = t.add(total, head_total);
    }
    return total;
}

Var first_draw_entropy(Tape& t, const Heads& heads, const HeteroGraph& g)
{
    Var total = t.constant(Matrix(1, 1));
    for (HeadKind k : kHeads)
    {
        if (head_budget(g, k) <= 0)
        {
            continue;
        }
        const auto open = open_candidates(g, k, {});
        if (open.size() < 2)
        {
            continue;
        }
        const Var p_open = t.gather_rows(head_probs(heads, k), open);
        const Var log_open = t.gather_rows(head_logs(heads, k), open);
        const Var log_norm = t.log(t.sum(p_open));
        const Var log_p = t.add_row(log_open, t.scale(log_norm, -1.0));
        total = t.sub(total, t.sum(t.mul(t.exp(log_p), log_p)));
    }
    return total;
}

ActionSet to_action_set(const HeteroGraph& g, const HeadDraws& draws)
{
    ActionSet a;
    a.uptime = draws.uptime;
    a.efficiency = draws.efficiency;
    for (int e : draws.ded_remove)
    {
        const auto& edge = g.om_edges.at(static_cast<std::size_t>(e));
        a.ded_remove.push_back({edge.machine, edge.op});
    }
    for (int e : draws.ded_add)
    {
        const auto& edge = g.om_edges.at(static_cast<std::size_t>(e));
        a.ded_add.push_back({edge.machine, edge.op});
    }
    return a;
}

// Checkpoint container --------------------------------------------------------

namespace
{

constexpr char kMagic[8] = {'F', 'A', 'B', 'C', 'A', 'P', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in)
{
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in)
    {
        throw CheckpointError("checkpoint truncated");
    }
    return v;
}

void put_doubles(std::ostream& out, const std::vector<double>& v)
{
    put<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& in, std::size_t limit)
{
    const auto n = get<std::uint64_t>(in);
    if (n > limit)
    {
        throw CheckpointError("checkpoint array larger than expected");
    }
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in)
    {
        throw CheckpointError("checkpoint truncated");
    }
    return v;
}

struct Header
{
    PolicyConfig cfg;
    std::uint64_t dims[4] = {0, 0, 0, 0};
    CheckpointMeta meta;
};

Header read_header(std::istream& in)
{
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    {
        throw CheckpointError("not a checkpoint file (bad magic)");
    }
    Header h;
    h.meta.version = get<std::uint32_t>(in);
    if (h.meta.version != kFormatVersion)
    {
        throw CheckpointError("unsupported checkpoint format version " + std::to_string(h.meta.version));
    }
    h.cfg.hidden = get<std::uint64_t>(in);
    h.cfg.layers = get<std::uint64_t>(in);
    for (auto& d : h.dims)
    {
        d = get<std::uint64_t>(in);
    }
    h.cfg.dedication_scale = get<double>(in);
    h.cfg.attention_slope = get<double>(in);
    h.meta.scenario_hash = get<std::uint64_t>(in);
    h.meta.epoch = get<std::uint64_t>(in);
    h.meta.score = get<double>(in);
    return h;
}

void put_stats(std::ostream& out, const RunningStats& s)
{
    put<double>(out, s.count());
    put_doubles(out, s.means());
    put_doubles(out, s.m2());
}

void get_stats(std::istream& in, RunningStats& s)
{
    const double count = get<double>(in);
    auto mean = get_doubles(in, s.dims());
    auto m2 = get_doubles(in, s.dims());
    if (mean.size() != s.dims() || m2.size() != s.dims())
    {
        throw CheckpointError("checkpoint normalizer width mismatch");
    }
    s.restore(count, std::move(mean), std::move(m2));
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const PolicyNet& net, const FeatureNormalizer& norm,
                     const CheckpointMeta& meta)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
    {
        throw CheckpointError("cannot write checkpoint " + path.string());
    }
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kFormatVersion);
    put<std::uint64_t>(out, net.config().hidden);
    put<std::uint64_t>(out, net.config().layers);
    put<std::uint64_t>(out, net.machine_dims());
    put<std::uint64_t>(out, net.op_dims());
    put<std::uint64_t>(out, net.om_dims());
    put<std::uint64_t>(out, net.oo_dims());
    put<double>(out, net.config().dedication_scale);
    put<double>(out, net.config().attention_slope);
    put<std::uint64_t>(out, meta.scenario_hash);
    put<std::uint64_t>(out, meta.epoch);
    put<double>(out, meta.score);
    put<std::uint64_t>(out, net.params().size());
    for (const auto& p : net.params())
    {
        put<std::uint64_t>(out, p.name.size());
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put<std::uint64_t>(out, p.value.rows);
        put<std::uint64_t>(out, p.value.cols);
        out.write(reinterpret_cast<const char*>(p.value.data.data()),
                  static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
    }
    put_stats(out, norm.machine);
    put_stats(out, norm.op);
    put_stats(out, norm.om);
    put<std::uint8_t>(out, norm.frozen ? 1 : 0);
    if (!out)
    {
        throw CheckpointError("failed writing checkpoint " + path.string());
    }
}

PolicyConfig peek_checkpoint_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw CheckpointError("cannot open checkpoint " + path.string());
    }
    return read_header(in).cfg;
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, PolicyNet& net, FeatureNormalizer& norm,
                               std::uint64_t expected_hash)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw CheckpointError("cannot open checkpoint " + path.string());
    }
    const Header h = read_header(in);
    if (h.cfg.hidden != net.config().hidden || h.cfg.layers != net.config().layers ||
        h.dims[0] != net.machine_dims() || h.dims[1] != net.op_dims() || h.dims[2] != net.om_dims() ||
        h.dims[3] != net.oo_dims())
    {
        throw CheckpointError("checkpoint header does not match the network (hidden/layers/feature dims)");
    }
    if (expected_hash != 0 && h.meta.scenario_hash != expected_hash)
    {
        throw CheckpointHashMismatch("checkpoint was trained on a different scenario (hash mismatch)");
    }
    const auto count = get<std::uint64_t>(in);
    if (count != net.params().size())
    {
        throw CheckpointError("checkpoint parameter count mismatch");
    }
    for (std::size_t i = 0; i < count; ++i)
    {
        auto& p = net.params()[i];
        const auto len = get<std::uint64_t>(in);
        if (len > 4096)
        {
            throw CheckpointError("checkpoint parameter name too long");
        }
        std::string name(len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(len));
        const auto rows = get<std::uint64_t>(in);
        const auto cols = get<std::uint64_t>(in);
        if (name != p.name || rows != p.value.rows || cols != p.value.cols)
        {
            throw CheckpointError("checkpoint parameter '" + name + "' does not match '" + p.name + "'");
        }
        in.read(reinterpret_cast<char*>(p.value.data.data()),
                static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
        if (!in)
        {
            throw CheckpointError("checkpoint truncated");
        }
    }
    get_stats(in, norm.machine);
    get_stats(in, norm.op);
    get_stats(in, norm.om);
    norm.frozen = get<std::uint8_t>(in) != 0;
    return h.meta;
}

} // namespace fabcap::policy
