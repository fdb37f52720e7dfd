#include "crossview/gradnet.hpp"

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "crossview/errors.hpp"
#include "crossview/io.hpp"
#include "crossview/rng.hpp"

namespace crossview::gradnet {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'C', 'V', 'N', 'E', 'T', 'F', '0', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr double kNormFloor = 1e-12;

using RowMajorMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

std::size_t layer_offset(const NetConfig& c, int layer) {
    std::size_t off = 0;
    for (int l = 0; l < layer; ++l) {
        off += (static_cast<std::size_t>(c.dims[static_cast<std::size_t>(l)]) + 1) *
               static_cast<std::size_t>(c.dims[static_cast<std::size_t>(l) + 1]);
    }
    return off;
}

}  // namespace

void NetConfig::validate() const {
    if (dims.size() < 2) {
        throw ConfigError("net needs at least an input and an output dimension");
    }
    for (int d : dims) {
        if (d < 1) {
            throw ConfigError("net layer dimensions must be positive");
        }
    }
}

std::size_t NetConfig::num_params() const {
    return layer_offset(*this, num_layers());
}

EmbeddingNet::EmbeddingNet(NetConfig config) : config_(std::move(config)) {
    config_.validate();
    params_.assign(config_.num_params(), 0.0);
    grads_.assign(params_.size(), 0.0);
}

void quantize_params(std::vector<double>& params) {
    for (double& p : params) {
        p = static_cast<double>(static_cast<float>(p));
    }
}

EmbeddingNet EmbeddingNet::init_random(const NetConfig& config, std::uint64_t seed) {
    EmbeddingNet net(config);
    Rng rng(derive_seed(seed, "net-init"));
    std::size_t off = 0;
    for (int l = 0; l < net.config_.num_layers(); ++l) {
        const int fan_in = net.config_.dims[static_cast<std::size_t>(l)];
        const int fan_out = net.config_.dims[static_cast<std::size_t>(l) + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int i = 0; i < fan_in * fan_out; ++i) {
            net.params_[off++] = rng.uniform(-bound, bound);
        }
        off += static_cast<std::size_t>(fan_out);  // biases stay zero
    }
    quantize_params(net.params_);
    return net;
}

EmbeddingNet EmbeddingNet::init_warmstart(const NetConfig& config,
                                          const std::filesystem::path& path) {
    EmbeddingNet net = load(path);
    if (net.config_.dims != config.dims || net.config_.output_norm != config.output_norm) {
        throw ShapeError("warmstart checkpoint architecture does not match requested net");
    }
    return net;
}

Eigen::MatrixXd EmbeddingNet::forward(const Eigen::MatrixXd& input,
                                      BatchActivations& acts) const {
    if (input.rows() < 1) {
        throw ShapeError("forward needs at least one input row");
    }
    if (input.cols() != config_.dims.front()) {
        throw ShapeError("input width " + std::to_string(input.cols()) +
                         " does not match net input dim " + std::to_string(config_.dims.front()));
    }
    const int layers = config_.num_layers();
    acts.input = input;
    acts.pre.assign(static_cast<std::size_t>(layers), Eigen::MatrixXd());
    acts.post.assign(static_cast<std::size_t>(layers), Eigen::MatrixXd());
    acts.batch = static_cast<int>(input.rows());
    acts.net = this;
    acts.version = version_;

    Eigen::MatrixXd h = input;
    for (int l = 0; l < layers; ++l) {
        const int fan_in = config_.dims[static_cast<std::size_t>(l)];
        const int fan_out = config_.dims[static_cast<std::size_t>(l) + 1];
        const std::size_t off = layer_offset(config_, l);
        ConstRowMajorMap w(params_.data() + off, fan_in, fan_out);
        Eigen::Map<const Eigen::VectorXd> b(
            params_.data() + off + static_cast<std::size_t>(fan_in) * fan_out, fan_out);
        Eigen::MatrixXd z = (h * w).rowwise() + b.transpose();
        acts.pre[static_cast<std::size_t>(l)] = z;
        if (l + 1 < layers) {
            h = z.cwiseMax(0.0);
            acts.post[static_cast<std::size_t>(l)] = h;
        } else {
            h = std::move(z);
        }
    }

    acts.norms = h.rowwise().norm();
    if (config_.output_norm) {
        Eigen::MatrixXd out(h.rows(), h.cols());
        for (Eigen::Index i = 0; i < h.rows(); ++i) {
            out.row(i) = h.row(i) / std::max(acts.norms(i), kNormFloor);
        }
        acts.output = out;
        return out;
    }
    acts.output = h;
    return h;
}

Eigen::MatrixXd EmbeddingNet::embed(const Eigen::MatrixXd& input) const {
    BatchActivations scratch;
    return forward(input, scratch);
}

void EmbeddingNet::backward(const BatchActivations& acts, const Eigen::MatrixXd& grad_output) {
    if (acts.net != this || acts.version != version_) {
        throw StateError("activations are stale: parameters changed since forward");
    }
    const int layers = config_.num_layers();
    if (grad_output.rows() != acts.batch || grad_output.cols() != config_.dims.back()) {
        throw ShapeError("grad_output shape does not match forward batch");
    }

    Eigen::MatrixXd delta = grad_output;
    if (config_.output_norm) {
        for (Eigen::Index i = 0; i < delta.rows(); ++i) {
            const double r = acts.norms(i);
            if (r > kNormFloor) {
                const Eigen::RowVectorXd y = acts.output.row(i);
                delta.row(i) = (delta.row(i) - y * (y.dot(grad_output.row(i)))) / r;
            } else {
                delta.row(i) /= kNormFloor;
            }
        }
    }

    std::fill(grads_.begin(), grads_.end(), 0.0);
    for (int l = layers - 1; l >= 0; --l) {
        const int fan_in = config_.dims[static_cast<std::size_t>(l)];
        const int fan_out = config_.dims[static_cast<std::size_t>(l) + 1];
        const std::size_t off = layer_offset(config_, l);
        const Eigen::MatrixXd& x =
            l == 0 ? acts.input : acts.post[static_cast<std::size_t>(l) - 1];

        RowMajorMap gw(grads_.data() + off, fan_in, fan_out);
        Eigen::Map<Eigen::VectorXd> gb(
            grads_.data() + off + static_cast<std::size_t>(fan_in) * fan_out, fan_out);
        gw = x.transpose() * delta;
        gb = delta.colwise().sum();

        if (l > 0) {
            ConstRowMajorMap w(params_.data() + off, fan_in, fan_out);
            const Eigen::MatrixXd& pre = acts.pre[static_cast<std::size_t>(l) - 1];
            delta = (delta * w.transpose()).cwiseProduct(
                (pre.array() > 0.0).cast<double>().matrix());
        }
    }
}

void EmbeddingNet::save(const std::filesystem::path& path) const {
    std::string bytes;
    bytes.append(kMagic, sizeof(kMagic));
    append_u32(bytes, kFormatVersion);
    append_u32(bytes, 0);  // reserved

    ordered_json desc;
    desc["dims"] = config_.dims;
    desc["output_norm"] = config_.output_norm;
    const std::string desc_text = desc.dump();
    append_u32(bytes, static_cast<std::uint32_t>(desc_text.size()));
    bytes += desc_text;

    for (double p : params_) {
        append_f32(bytes, static_cast<float>(p));
    }
    atomic_write_file(path, bytes);
}

EmbeddingNet EmbeddingNet::load(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw IoError("not a model file: " + path.string());
    }
    if (read_u32(bytes, 8) != kFormatVersion) {
        throw IoError("unsupported model format version in " + path.string());
    }
    const std::uint32_t desc_len = read_u32(bytes, 16);
    if (bytes.size() < 20 + static_cast<std::size_t>(desc_len)) {
        throw IoError("truncated model file: " + path.string());
    }
    ordered_json desc;
    try {
        desc = ordered_json::parse(bytes.substr(20, desc_len));
    } catch (const std::exception& e) {
        throw IoError(std::string("corrupt model descriptor: ") + e.what());
    }
    NetConfig config;
    try {
        config.dims = desc.at("dims").get<std::vector<int>>();
        config.output_norm = desc.at("output_norm").get<bool>();
    } catch (const std::exception& e) {
        throw IoError(std::string("corrupt model descriptor: ") + e.what());
    }
    config.validate();

    EmbeddingNet net(config);
    const std::size_t payload = bytes.size() - 20 - desc_len;
    if (payload != net.params_.size() * 4) {
        throw ShapeError("model parameter payload does not match declared dims");
    }
    const std::size_t base = 20 + desc_len;
    for (std::size_t i = 0; i < net.params_.size(); ++i) {
        net.params_[i] = static_cast<double>(read_f32(bytes, base + i * 4));
    }
    return net;
}

std::uint64_t param_checksum(const EmbeddingNet& net) {
    std::string bytes;
    bytes.reserve(net.params().size() * 4);
    for (double p : net.params()) {
        append_f32(bytes, static_cast<float>(p));
    }
    return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace crossview::gradnet
