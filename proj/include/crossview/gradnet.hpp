#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace crossview::gradnet {

struct NetConfig {
    // dims[0] = flattened input size, dims.back() = embedding size K,
    // rectifier between layers, optional L2 normalization of the output.
    std::vector<int> dims{768, 256, 64, 16};
    bool output_norm = true;

    void validate() const;  // throws ConfigError
    int num_layers() const { return static_cast<int>(dims.size()) - 1; }
    std::size_t num_params() const;
};

// Forward-pass state retained for the backward pass. `version` ties the
// activations to the parameter vector they were computed with.
struct BatchActivations {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> pre;    // pre-activation per layer
    std::vector<Eigen::MatrixXd> post;   // rectified (non-final layers)
    Eigen::MatrixXd output;              // final embeddings as returned
    Eigen::VectorXd norms;               // pre-normalization row norms
    const void* net = nullptr;
    std::uint64_t version = 0;
    int batch = 0;
};

class EmbeddingNet {
public:
    explicit EmbeddingNet(NetConfig config);

    // Fan-in-scaled uniform weights, zero biases, deterministic in seed.
    static EmbeddingNet init_random(const NetConfig& config, std::uint64_t seed);
    // Loads previously saved parameters; dims must match config exactly.
    static EmbeddingNet init_warmstart(const NetConfig& config, const std::filesystem::path& path);

    const NetConfig& config() const { return config_; }
    std::size_t num_params() const { return params_.size(); }

    const std::vector<double>& params() const { return params_; }
    const std::vector<double>& grads() const { return grads_; }
    // Mutating parameters invalidates outstanding activations.
    std::vector<double>& mutable_params() {
        ++version_;
        return params_;
    }

    // Input is b x dims[0], one flattened patch per row; returns b x K
    // embeddings (unit rows when output_norm) and fills `acts`.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& input, BatchActivations& acts) const;
    // Convenience forward without retained state.
    Eigen::MatrixXd embed(const Eigen::MatrixXd& input) const;

    // Overwrites grads() with dL/dparams for the loss whose embedding
    // gradient is grad_output. Throws StateError on stale activations.
    void backward(const BatchActivations& acts, const Eigen::MatrixXd& grad_output);

    void save(const std::filesystem::path& path) const;
    static EmbeddingNet load(const std::filesystem::path& path);

private:
    NetConfig config_;
    std::vector<double> params_;  // per layer: W row-major [fan_in][fan_out], then bias
    std::vector<double> grads_;
    std::uint64_t version_ = 0;
};

// Entries of the parameter vector are kept exactly float32-representable
// (init and optimizer steps quantize), so checkpoints round-trip bitwise.
void quantize_params(std::vector<double>& params);

std::uint64_t param_checksum(const EmbeddingNet& net);

}  // namespace crossview::gradnet
