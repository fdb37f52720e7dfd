#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crossview/gradnet.hpp"
#include "crossview/scenegen.hpp"

namespace crossview::trainer {

enum class Mode { unsupervised, supervised, frozen };
const char* mode_name(Mode m);  // "unsup" / "sup" / "frozen"
Mode mode_from_name(const std::string& name);

enum class Optimizer { adam, sgd_momentum };
const char* optimizer_name(Optimizer o);
Optimizer optimizer_from_name(const std::string& name);

struct TrainConfig {
    Mode mode = Mode::unsupervised;
    int steps = 200;
    int pairs_per_step = 4;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    std::uint64_t seed = 0;
    int eval_every = 0;  // 0 disables periodic validation snapshots

    void validate() const;
};

struct OptState {
    std::vector<double> m;  // adam first moment / momentum velocity
    std::vector<double> v;  // adam second moment
    long step = 0;
};

// One optimizer update in place. adam: beta1=0.9, beta2=0.999, eps=1e-8 with
// bias correction; sgd_momentum: v <- 0.9 v + g, p <- p - lr v.
void step_optimizer(std::vector<double>& params, const std::vector<double>& grads,
                    OptState& state, const TrainConfig& config);

struct EvalSnapshot {
    int step = 0;
    double value = 0.0;  // mean validation loss
};

struct TrainTrace {
    std::vector<double> losses;  // one entry per step
    std::vector<EvalSnapshot> evals;
    double wall_seconds = 0.0;
    std::uint64_t final_checksum = 0;
};

// Offline training over the train split: each step samples pairs_per_step
// scenes, renders a fresh frame pair for each, and applies one update from
// the mean loss gradient. Frozen mode records losses but never updates.
TrainTrace train(const scenegen::Dataset& dataset, gradnet::EmbeddingNet& net,
                 const TrainConfig& config);

// Training restricted to an explicit list of frame pairs (online prefixes).
TrainTrace train_on_frames(const std::vector<scenegen::PairBatch>& frames,
                           gradnet::EmbeddingNet& net, const TrainConfig& config);

std::string trace_csv(const TrainTrace& trace);  // header "step,loss"

struct OnlineProtocol {
    std::vector<double> prefix_fractions{0.025, 0.05, 0.1, 0.2, 0.4, 0.8};
    double eval_suffix_fraction = 0.2;

    void validate() const;  // fractions increasing, suffix disjoint from max prefix
};

struct OnlinePrefixResult {
    double fraction = 0.0;
    int train_frames = 0;
    double error_early = 0.0;  // after 5% of the step budget
    double error_full = 0.0;   // after the full budget
    double error = 0.0;        // best of the trace (reported curve value)
};

struct OnlineResult {
    std::vector<OnlinePrefixResult> prefixes;
    double frozen_error = 0.0;
};

// For each prefix fraction, trains a fresh copy of net_init on that prefix
// of the sequence and reports identification error on the suffix; the frozen
// baseline is evaluated once with net_init itself.
OnlineResult run_online(const std::vector<scenegen::PairBatch>& sequence,
                        const gradnet::EmbeddingNet& net_init, const TrainConfig& config,
                        const OnlineProtocol& protocol);

}  // namespace crossview::trainer
