#pragma once

#include "bayesfuse/data.hpp"
#include "bayesfuse/fusion.hpp"
#include "bayesfuse/gaussian.hpp"
#include "bayesfuse/local_inference.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace bayesfuse {

enum class MessageKind : std::uint8_t { PriorBroadcast = 0, PosteriorUpload = 1 };

/// Coordinator/agent message carrying a serialized belief. The in-process
/// simulator routes every round through the byte format so a networked
/// deployment could replace the transport without touching fusion logic.
struct AgentMessage {
    MessageKind kind;
    std::uint32_t round;     // >= 1
    std::uint32_t agent_id;
    GaussianBelief belief;
};

class MalformedMessageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Wire format (little endian): version byte, kind byte, u32 round,
/// u32 agent_id, u32 dim, storage-kind byte, f64 mean entries, then f64
/// packed precision: lower triangle (row by row) for dense storage, the
/// diagonal vector otherwise. Round trips are bit exact.
std::vector<std::uint8_t> serialize_message(const AgentMessage& msg);
AgentMessage deserialize_message(const std::vector<std::uint8_t>& bytes);

struct RoundMetrics {
    double test_accuracy = 0.0;
    double mean_param_variance = 0.0;
};

/// Snapshot after a communication round: the fused global belief that acts
/// as the next round's prior, plus per-agent posteriors and test metrics.
struct RoundState {
    int t = 0;
    GaussianBelief global;
    std::vector<GaussianBelief> agent_posteriors;
    RoundMetrics metrics;
};

RoundState initial_round_state(const GaussianBelief& prior, const MlpSpec& spec,
                               const LabeledShard& test);

/// Splits a dataset into M disjoint, exhaustive, near-equal shards after a
/// seeded permutation. The first (N mod M) shards receive one extra point.
std::vector<LabeledShard> shard_dataset(const LabeledShard& dataset, int num_agents,
                                        std::uint64_t seed);

/// Executes one communication round: broadcast the global as each agent's
/// prior, run the Laplace fits (in parallel; agent streams are keyed by
/// round so scheduling cannot change results), fuse with the selected rule,
/// and recompute metrics on the held-out test set. A CIL fusion whose
/// corrected precision is indefinite falls back to CIP with a warning on
/// stderr; `used_fallback` reports that, when non-null.
RoundState run_round(const RoundState& state, const std::vector<LabeledShard>& shards,
                     const LabeledShard& test, const MlpSpec& spec, const TrainConfig& cfg,
                     FusionRule rule, bool* used_fallback = nullptr);

}  // namespace bayesfuse
