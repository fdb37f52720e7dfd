#include "crossview/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "crossview/errors.hpp"
#include "crossview/evalsuite.hpp"
#include "crossview/io.hpp"
#include "crossview/objective.hpp"
#include "crossview/rng.hpp"

namespace crossview::trainer {

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::unsupervised: return "unsup";
        case Mode::supervised: return "sup";
        case Mode::frozen: return "frozen";
    }
    return "unsup";
}

Mode mode_from_name(const std::string& name) {
    if (name == "unsup") return Mode::unsupervised;
    if (name == "sup") return Mode::supervised;
    if (name == "frozen") return Mode::frozen;
    throw ConfigError("unknown training mode: " + name);
}

const char* optimizer_name(Optimizer o) {
    return o == Optimizer::adam ? "adam" : "sgd_momentum";
}

Optimizer optimizer_from_name(const std::string& name) {
    if (name == "adam") return Optimizer::adam;
    if (name == "sgd_momentum") return Optimizer::sgd_momentum;
    throw ConfigError("unknown optimizer: " + name);
}

void TrainConfig::validate() const {
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (pairs_per_step < 1) throw ConfigError("pairs_per_step must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be finite and >= 0");
    }
    if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
}

void step_optimizer(std::vector<double>& params, const std::vector<double>& grads,
                    OptState& state, const TrainConfig& config) {
    if (params.size() != grads.size()) {
        throw ShapeError("parameter and gradient vectors differ in length");
    }
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.step = 0;
    }
    const double lr = config.learning_rate;
    ++state.step;
    if (config.optimizer == Optimizer::adam) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
            state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
            params[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + eps);
        }
    } else {
        constexpr double mu = 0.9;
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i] = mu * state.m[i] + grads[i];
            params[i] -= lr * state.m[i];
        }
    }
    gradnet::quantize_params(params);
}

namespace {

// Loss of one frame pair through the net; adds param gradients into accum
// when requested. Returns the pair's loss value.
double pair_loss(gradnet::EmbeddingNet& net, const scenegen::PairBatch& batch, Mode mode,
                 std::vector<double>* accum) {
    const Eigen::MatrixXd x0 = evalsuite::patch_matrix(batch.view0);
    const Eigen::MatrixXd x1 = evalsuite::patch_matrix(batch.view1);
    Eigen::MatrixXd x(x0.rows() + x1.rows(), x0.cols());
    x << x0, x1;

    gradnet::BatchActivations acts;
    const Eigen::MatrixXd f = net.forward(x, acts);
    const Eigen::MatrixXd f0 = f.topRows(x0.rows());
    const Eigen::MatrixXd f1 = f.bottomRows(x1.rows());

    objective::PairLoss pl =
        mode == Mode::supervised
            ? objective::cross_view_loss_supervised(f0, f1, batch.ids0(), batch.ids1())
            : objective::cross_view_loss(f0, f1);

    if (accum != nullptr) {
        Eigen::MatrixXd grad_out(f.rows(), f.cols());
        grad_out << pl.grad_view0, pl.grad_view1;
        net.backward(acts, grad_out);
        const std::vector<double>& g = net.grads();
        for (std::size_t i = 0; i < g.size(); ++i) {
            (*accum)[i] += g[i];
        }
    }
    return pl.value;
}

using StepSampler = std::function<std::vector<scenegen::PairBatch>(int step)>;
using Checkpoint = std::function<void(int steps_done)>;
using ValLoss = std::function<double()>;

TrainTrace train_steps(gradnet::EmbeddingNet& net, const TrainConfig& config,
                       const StepSampler& sampler, const ValLoss& val_loss,
                       const Checkpoint& checkpoint) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    TrainTrace trace;
    trace.losses.reserve(static_cast<std::size_t>(config.steps));

    OptState opt;
    std::vector<double> accum(net.num_params(), 0.0);
    const bool updates = config.mode != Mode::frozen;
    for (int step = 0; step < config.steps; ++step) {
        const std::vector<scenegen::PairBatch> batches = sampler(step);
        std::fill(accum.begin(), accum.end(), 0.0);
        double loss = 0.0;
        for (const scenegen::PairBatch& batch : batches) {
            loss += pair_loss(net, batch, config.mode, updates ? &accum : nullptr);
        }
        const double scale = 1.0 / static_cast<double>(batches.size());
        loss *= scale;
        if (!std::isfinite(loss)) {
            throw NumericError("non-finite loss at step " + std::to_string(step));
        }
        trace.losses.push_back(loss);
        if (updates) {
            for (double& g : accum) {
                g *= scale;
            }
            step_optimizer(net.mutable_params(), accum, opt, config);
        }
        if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 && val_loss) {
            trace.evals.push_back({step + 1, val_loss()});
        }
        if (checkpoint) {
            checkpoint(step + 1);
        }
    }

    trace.final_checksum = gradnet::param_checksum(net);
    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return trace;
}

}  // namespace

TrainTrace train(const scenegen::Dataset& dataset, gradnet::EmbeddingNet& net,
                 const TrainConfig& config) {
    if (net.config().dims.front() != dataset.patch_floats()) {
        throw ShapeError("net input dim does not match dataset patch size");
    }
    const std::vector<int> train_ids = dataset.split_scene_ids(scenegen::Split::train);
    if (train_ids.empty()) {
        throw ConfigError("dataset has no training scenes");
    }

    StepSampler sampler = [&](int step) {
        Rng order(derive_seed(config.seed, "train-order", static_cast<std::uint64_t>(step)));
        std::vector<scenegen::PairBatch> batches;
        batches.reserve(static_cast<std::size_t>(config.pairs_per_step));
        for (int k = 0; k < config.pairs_per_step; ++k) {
            const int scene_id = train_ids[order.below(train_ids.size())];
            // Fresh frame pair per step: re-rendering with new view jitter is
            // what makes nuisances nuisances instead of memorizable cues.
            batches.push_back(scenegen::make_sequence(
                                  dataset.scene(scene_id), dataset.config, 1,
                                  derive_seed(config.seed, "train-pair",
                                              static_cast<std::uint64_t>(step),
                                              static_cast<std::uint64_t>(k)))
                                  .front());
        }
        return batches;
    };

    const std::vector<int> val_ids = dataset.split_scene_ids(scenegen::Split::val);
    ValLoss val_loss;
    if (!val_ids.empty()) {
        val_loss = [&]() {
            const std::size_t count = std::min<std::size_t>(4, val_ids.size());
            double total = 0.0;
            for (std::size_t i = 0; i < count; ++i) {
                const scenegen::PairBatch batch = sample_frame_pair(
                    dataset, val_ids[i],
                    derive_seed(config.seed, "val-pair", static_cast<std::uint64_t>(val_ids[i])));
                total += pair_loss(net, batch, config.mode, nullptr);
            }
            return total / static_cast<double>(count);
        };
    }
    return train_steps(net, config, sampler, val_loss, Checkpoint());
}

TrainTrace train_on_frames(const std::vector<scenegen::PairBatch>& frames,
                           gradnet::EmbeddingNet& net, const TrainConfig& config) {
    if (frames.empty()) {
        throw ConfigError("cannot train on an empty frame list");
    }
    StepSampler sampler = [&](int step) {
        Rng order(derive_seed(config.seed, "train-order", static_cast<std::uint64_t>(step)));
        std::vector<scenegen::PairBatch> batches;
        for (int k = 0; k < config.pairs_per_step; ++k) {
            batches.push_back(frames[order.below(frames.size())]);
        }
        return batches;
    };
    return train_steps(net, config, sampler, ValLoss(), Checkpoint());
}

std::string trace_csv(const TrainTrace& trace) {
    std::string out = "step,loss\n";
    for (std::size_t i = 0; i < trace.losses.size(); ++i) {
        out += std::to_string(i) + "," + format_double(trace.losses[i]) + "\n";
    }
    return out;
}

void OnlineProtocol::validate() const {
    if (prefix_fractions.empty()) {
        throw ConfigError("online protocol needs at least one prefix fraction");
    }
    double prev = 0.0;
    for (double f : prefix_fractions) {
        if (!(f > 0.0) || f > 1.0) {
            throw ConfigError("prefix fractions must lie in (0, 1]");
        }
        if (f <= prev) {
            throw ConfigError("prefix fractions must be strictly increasing");
        }
        prev = f;
    }
    if (!(eval_suffix_fraction > 0.0) || eval_suffix_fraction >= 1.0) {
        throw ConfigError("eval suffix fraction must lie in (0, 1)");
    }
    if (prefix_fractions.back() > 1.0 - eval_suffix_fraction + 1e-12) {
        throw ConfigError("largest prefix overlaps the evaluation suffix");
    }
}

OnlineResult run_online(const std::vector<scenegen::PairBatch>& sequence,
                        const gradnet::EmbeddingNet& net_init, const TrainConfig& config,
                        const OnlineProtocol& protocol) {
    protocol.validate();
    config.validate();
    if (sequence.empty()) {
        throw ConfigError("online protocol needs a non-empty sequence");
    }
    const int num_frames = static_cast<int>(sequence.size());
    const int suffix_start =
        num_frames - static_cast<int>(std::floor(protocol.eval_suffix_fraction * num_frames));
    if (suffix_start >= num_frames) {
        throw ConfigError("evaluation suffix is empty");
    }
    const std::vector<scenegen::PairBatch> suffix(sequence.begin() + suffix_start, sequence.end());
    const evalsuite::ReferenceGallery gallery = evalsuite::build_gallery(sequence);

    OnlineResult result;
    result.frozen_error = evalsuite::identification_error(net_init, gallery, suffix);

    for (std::size_t p = 0; p < protocol.prefix_fractions.size(); ++p) {
        const double fraction = protocol.prefix_fractions[p];
        const int n_train = static_cast<int>(std::floor(fraction * num_frames));
        if (n_train < 1) {
            throw ConfigError("prefix fraction " + format_double(fraction) +
                              " selects zero frames");
        }
        const std::vector<scenegen::PairBatch> prefix(sequence.begin(),
                                                      sequence.begin() + n_train);

        gradnet::EmbeddingNet net = net_init;
        TrainConfig cfg = config;
        cfg.seed = derive_seed(config.seed, "online-prefix", static_cast<std::uint64_t>(p));
        const int early_steps =
            std::clamp(static_cast<int>(std::ceil(0.05 * cfg.steps)), 1, cfg.steps);

        OnlinePrefixResult pr;
        pr.fraction = fraction;
        pr.train_frames = n_train;

        StepSampler sampler = [&](int step) {
            Rng order(derive_seed(cfg.seed, "train-order", static_cast<std::uint64_t>(step)));
            std::vector<scenegen::PairBatch> batches;
            for (int k = 0; k < cfg.pairs_per_step; ++k) {
                batches.push_back(prefix[order.below(prefix.size())]);
            }
            return batches;
        };
        Checkpoint checkpoint = [&](int steps_done) {
            if (steps_done == early_steps) {
                pr.error_early = evalsuite::identification_error(net, gallery, suffix);
            }
            if (steps_done == cfg.steps) {
                pr.error_full = evalsuite::identification_error(net, gallery, suffix);
            }
        };
        (void)train_steps(net, cfg, sampler, ValLoss(), checkpoint);

        pr.error = std::min(pr.error_early, pr.error_full);
        result.prefixes.push_back(pr);
    }
    return result;
}

}  // namespace crossview::trainer
