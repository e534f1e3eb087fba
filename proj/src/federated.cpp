#include "bayesfuse/federated.hpp"

#include "bayesfuse/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <future>
#include <numeric>
#include <random>

namespace bayesfuse {

namespace {

constexpr std::uint8_t kWireVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    bool done() const { return pos_ == size_; }

private:
    void need(std::size_t n) {
        if (pos_ + n > size_) throw MalformedMessageError("message buffer truncated");
    }
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_message(const AgentMessage& msg) {
    if (msg.round < 1) throw std::invalid_argument("serialize_message: round must be >= 1");
    const Eigen::Index d = msg.belief.dim();
    std::vector<std::uint8_t> out;
    const bool diag = msg.belief.is_diagonal();
    out.reserve(16 + 8 * static_cast<std::size_t>(d) * (diag ? 2 : (d + 3) / 2 + 1));
    out.push_back(kWireVersion);
    out.push_back(static_cast<std::uint8_t>(msg.kind));
    put_u32(out, msg.round);
    put_u32(out, msg.agent_id);
    put_u32(out, static_cast<std::uint32_t>(d));
    out.push_back(diag ? 1 : 0);
    for (Eigen::Index i = 0; i < d; ++i) put_f64(out, msg.belief.mean()[i]);
    if (diag) {
        for (Eigen::Index i = 0; i < d; ++i) put_f64(out, msg.belief.precision_diag()[i]);
    } else {
        const MatrixXd& prec = msg.belief.precision_dense();
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j <= i; ++j) put_f64(out, prec(i, j));
        }
    }
    return out;
}

AgentMessage deserialize_message(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes.data(), bytes.size());
    const std::uint8_t version = r.u8();
    if (version != kWireVersion) {
        throw MalformedMessageError("unsupported message version " + std::to_string(version));
    }
    const std::uint8_t kind_byte = r.u8();
    if (kind_byte > 1) throw MalformedMessageError("unknown message kind");
    const std::uint32_t round = r.u32();
    if (round < 1) throw MalformedMessageError("round must be >= 1");
    const std::uint32_t agent_id = r.u32();
    const std::uint32_t d = r.u32();
    if (d == 0 || d > (1u << 24)) throw MalformedMessageError("implausible dimension");
    const std::uint8_t storage = r.u8();
    if (storage > 1) throw MalformedMessageError("unknown storage kind");

    VectorXd mean(d);
    for (std::uint32_t i = 0; i < d; ++i) mean[i] = r.f64();
    GaussianBelief belief = [&] {
        if (storage == 1) {
            VectorXd diag(d);
            for (std::uint32_t i = 0; i < d; ++i) diag[i] = r.f64();
            return GaussianBelief::diagonal(std::move(mean), std::move(diag));
        }
        MatrixXd prec(d, d);
        for (std::uint32_t i = 0; i < d; ++i) {
            for (std::uint32_t j = 0; j <= i; ++j) {
                prec(i, j) = r.f64();
                prec(j, i) = prec(i, j);
            }
        }
        return GaussianBelief::dense(std::move(mean), std::move(prec));
    }();
    if (!r.done()) throw MalformedMessageError("trailing bytes after message");
    return AgentMessage{static_cast<MessageKind>(kind_byte), round, agent_id, std::move(belief)};
}

RoundState initial_round_state(const GaussianBelief& prior, const MlpSpec& spec,
                               const LabeledShard& test) {
    RoundMetrics metrics{mlp_accuracy(spec, prior.mean(), test), prior.variance_diag().mean()};
    return RoundState{0, prior, {}, metrics};
}

std::vector<LabeledShard> shard_dataset(const LabeledShard& dataset, int num_agents,
                                        std::uint64_t seed) {
    const Eigen::Index n = dataset.size();
    if (num_agents < 1) throw std::invalid_argument("shard_dataset: need at least one agent");
    if (n < num_agents) throw std::invalid_argument("shard_dataset: fewer samples than agents");

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    auto rng = make_rng(derive_seed(seed, {0x5aa4dULL}));
    std::shuffle(perm.begin(), perm.end(), rng);

    const Eigen::Index base = n / num_agents;
    const Eigen::Index extra = n % num_agents;
    std::vector<LabeledShard> shards;
    shards.reserve(static_cast<std::size_t>(num_agents));
    std::size_t offset = 0;
    for (int m = 0; m < num_agents; ++m) {
        const Eigen::Index count = base + (m < extra ? 1 : 0);
        std::vector<Eigen::Index> idx(perm.begin() + static_cast<std::ptrdiff_t>(offset),
                                      perm.begin() + static_cast<std::ptrdiff_t>(offset + count));
        LabeledShard shard = dataset.rows(idx);
        shard.agent_id = m;
        shards.push_back(std::move(shard));
        offset += static_cast<std::size_t>(count);
    }
    return shards;
}

RoundState run_round(const RoundState& state, const std::vector<LabeledShard>& shards,
                     const LabeledShard& test, const MlpSpec& spec, const TrainConfig& cfg,
                     FusionRule rule, bool* used_fallback) {
    if (shards.empty()) throw std::invalid_argument("run_round: no shards");
    const std::uint32_t round = static_cast<std::uint32_t>(state.t + 1);

    // Initialization stream is shared by all agents within the round; fusing
    // independently initialized networks is meaningless under weight
    // permutation symmetry.
    TrainConfig agent_cfg = cfg;
    agent_cfg.rng_seed = derive_seed(cfg.rng_seed, {0xf17ULL, round});

    auto fit_agent = [&](std::uint32_t agent) {
        const auto broadcast = serialize_message(
            AgentMessage{MessageKind::PriorBroadcast, round, agent, state.global});
        const AgentMessage received = deserialize_message(broadcast);
        GaussianBelief posterior =
            laplace_fit(received.belief, shards[agent], spec, agent_cfg);
        const auto upload = serialize_message(
            AgentMessage{MessageKind::PosteriorUpload, round, agent, std::move(posterior)});
        return deserialize_message(upload).belief;
    };

    std::vector<GaussianBelief> locals;
    locals.reserve(shards.size());
    if (shards.size() > 1) {
        std::vector<std::future<GaussianBelief>> futures;
        futures.reserve(shards.size());
        for (std::uint32_t m = 0; m < shards.size(); ++m) {
            futures.push_back(std::async(std::launch::async, fit_agent, m));
        }
        for (auto& f : futures) locals.push_back(f.get());
    } else {
        locals.push_back(fit_agent(0));
    }

    if (used_fallback) *used_fallback = false;
    GaussianBelief fused = [&] {
        if (rule == FusionRule::CIP) return fuse_cip(locals).fused;
        try {
            return fuse_cil(state.global, locals, false).fused;
        } catch (const IndefinitePrecisionError& err) {
            std::fprintf(stderr,
                         "run_round: CIL precision indefinite at round %u "
                         "(min eigenvalue %.3e), falling back to CIP\n",
                         round, err.min_eigenvalue());
            if (used_fallback) *used_fallback = true;
            return fuse_cip(locals).fused;
        }
    }();

    RoundMetrics metrics{mlp_accuracy(spec, fused.mean(), test), fused.variance_diag().mean()};
    return RoundState{static_cast<int>(round), std::move(fused), std::move(locals), metrics};
}

}  // namespace bayesfuse
