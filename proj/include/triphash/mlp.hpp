#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "matrix.hpp"
#include "random.hpp"

namespace triphash {

constexpr double kNormalizeEps = 1e-12;

struct LayerParams {
    Matrix weight;             // fan_in x fan_out
    std::vector<double> bias;  // fan_out
};

/// Fully connected network: ReLU hidden layers, affine output layer.
/// layer_dims is [input_dim, hidden..., output_dim].
struct MlpParams {
    std::vector<std::size_t> layer_dims;
    std::vector<LayerParams> layers;

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }

    /// Same shapes, all values zero. Used for gradients and optimizer state.
    static MlpParams zeros_like(const MlpParams& other) {
        MlpParams out;
        out.layer_dims = other.layer_dims;
        out.layers.reserve(other.layers.size());
        for (const auto& layer : other.layers)
            out.layers.push_back({Matrix(layer.weight.rows(), layer.weight.cols()),
                                  std::vector<double>(layer.bias.size(), 0.0)});
        return out;
    }
};

using MlpGrads = MlpParams;

/// Glorot-uniform weights, zero biases. Deterministic given the seed.
inline MlpParams init_mlp(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
    if (layer_dims.size() < 2)
        throw std::invalid_argument("init_mlp: need at least [input_dim, output_dim]");
    for (std::size_t d : layer_dims)
        if (d < 1) throw std::invalid_argument("init_mlp: every dimension must be >= 1");

    MlpParams params;
    params.layer_dims = layer_dims;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::size_t fan_in = layer_dims[l];
        const std::size_t fan_out = layer_dims[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        LayerParams layer{Matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
        for (std::size_t i = 0; i < layer.weight.size(); ++i)
            layer.weight.data()[i] = rng.next_uniform(-bound, bound);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

/// Everything backward() needs from the matching forward() call.
struct ForwardCache {
    Matrix input;
    std::vector<Matrix> pre_activations;   // z_l for every layer
    std::vector<Matrix> hidden_outputs;    // relu(z_l) for hidden layers
    bool normalized = false;
    Matrix raw_output;                     // pre-normalization output rows
    std::vector<double> row_norms;         // L2 norms of raw output rows
};

struct ForwardResult {
    Matrix output;
    ForwardCache cache;
};

inline ForwardResult forward(const MlpParams& params, const Matrix& x, bool normalize) {
    if (x.cols() != params.input_dim())
        throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                    " columns, model expects " +
                                    std::to_string(params.input_dim()));
    const std::size_t batch = x.rows();
    ForwardResult result;
    ForwardCache& cache = result.cache;
    cache.input = x;

    const Matrix* current = &cache.input;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const LayerParams& layer = params.layers[l];
        Matrix z(batch, layer.bias.size());
        for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t c = 0; c < layer.bias.size(); ++c) z(r, c) = layer.bias[c];
            for (std::size_t k = 0; k < layer.weight.rows(); ++k) {
                const double in = (*current)(r, k);
                if (in == 0.0) continue;
                for (std::size_t c = 0; c < layer.weight.cols(); ++c)
                    z(r, c) += in * layer.weight(k, c);
            }
        }
        cache.pre_activations.push_back(z);
        if (l + 1 < params.layers.size()) {
            for (std::size_t i = 0; i < z.size(); ++i)
                z.data()[i] = z.data()[i] > 0.0 ? z.data()[i] : 0.0;
            cache.hidden_outputs.push_back(std::move(z));
            current = &cache.hidden_outputs.back();
        } else {
            result.output = std::move(z);
        }
    }

    if (normalize) {
        cache.normalized = true;
        cache.raw_output = result.output;
        cache.row_norms.resize(batch);
        for (std::size_t r = 0; r < batch; ++r) {
            double sq = 0.0;
            for (std::size_t c = 0; c < result.output.cols(); ++c)
                sq += result.output(r, c) * result.output(r, c);
            const double norm = std::sqrt(sq);
            cache.row_norms[r] = norm;
            if (norm >= kNormalizeEps)
                for (std::size_t c = 0; c < result.output.cols(); ++c) result.output(r, c) /= norm;
        }
    }
    return result;
}

/// Exact gradients of the composed map for the batch that produced `cache`.
inline MlpGrads backward(const MlpParams& params, const ForwardCache& cache,
                         const Matrix& dloss_doutput) {
    if (cache.pre_activations.size() != params.layers.size())
        throw std::invalid_argument("backward: cache does not match parameter shape");
    const std::size_t batch = cache.input.rows();
    if (dloss_doutput.rows() != batch || dloss_doutput.cols() != params.output_dim())
        throw std::invalid_argument("backward: gradient shape does not match model output");

    MlpGrads grads = MlpParams::zeros_like(params);

    // Gradient w.r.t. the affine output, undoing row normalization if applied.
    Matrix dz = dloss_doutput;
    if (cache.normalized) {
        for (std::size_t r = 0; r < batch; ++r) {
            const double norm = cache.row_norms[r];
            if (norm < kNormalizeEps) continue; // row passed through unchanged
            double dot = 0.0;
            for (std::size_t c = 0; c < dz.cols(); ++c) {
                const double y = cache.raw_output(r, c) / norm;
                dot += y * dloss_doutput(r, c);
            }
            for (std::size_t c = 0; c < dz.cols(); ++c) {
                const double y = cache.raw_output(r, c) / norm;
                dz(r, c) = (dloss_doutput(r, c) - y * dot) / norm;
            }
        }
    }

    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const Matrix& below =
            l == 0 ? cache.input : cache.hidden_outputs[l - 1];
        LayerParams& grad = grads.layers[l];
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t k = 0; k < below.cols(); ++k) {
                const double in = below(r, k);
                if (in == 0.0) continue;
                for (std::size_t c = 0; c < dz.cols(); ++c)
                    grad.weight(k, c) += in * dz(r, c);
            }
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < dz.cols(); ++c) grad.bias[c] += dz(r, c);

        if (l == 0) break;
        const Matrix& weight = params.layers[l].weight;
        Matrix dz_below(batch, weight.rows());
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t k = 0; k < weight.rows(); ++k) {
                double sum = 0.0;
                for (std::size_t c = 0; c < weight.cols(); ++c) sum += dz(r, c) * weight(k, c);
                // ReLU gate from the layer below's pre-activation
                dz_below(r, k) = cache.pre_activations[l - 1](r, k) > 0.0 ? sum : 0.0;
            }
        dz = std::move(dz_below);
    }
    return grads;
}

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    MlpParams first_moment;
    MlpParams second_moment;
    std::uint64_t step = 0;

    static AdamState for_params(const MlpParams& params) {
        return {MlpParams::zeros_like(params), MlpParams::zeros_like(params), 0};
    }
};

/// One Adam update with bias correction. Rejects non-finite gradients.
inline void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state,
                      const AdamConfig& cfg = {}) {
    if (grads.layers.size() != params.layers.size())
        throw std::invalid_argument("adam_step: gradient shape mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    auto update = [&](double& param, double grad, double& m, double& v) {
        if (!std::isfinite(grad))
            throw DivergenceError("adam_step: non-finite gradient");
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
        param -= cfg.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + cfg.epsilon);
    };

    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        LayerParams& layer = params.layers[l];
        for (std::size_t i = 0; i < layer.weight.size(); ++i)
            update(layer.weight.data()[i], grads.layers[l].weight.data()[i],
                   state.first_moment.layers[l].weight.data()[i],
                   state.second_moment.layers[l].weight.data()[i]);
        for (std::size_t i = 0; i < layer.bias.size(); ++i)
            update(layer.bias[i], grads.layers[l].bias[i], state.first_moment.layers[l].bias[i],
                   state.second_moment.layers[l].bias[i]);
    }
}

/// Model snapshot: parameters plus the output-normalization flag the model
/// was trained with. JSON round trips reproduce every double exactly.
struct Checkpoint {
    MlpParams params;
    bool normalize = false;
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["version"] = 1;
    doc["layer_dims"] = ckpt.params.layer_dims;
    doc["normalize"] = ckpt.normalize;
    auto& layers = doc["layers"] = nlohmann::json::array();
    for (const auto& layer : ckpt.params.layers) {
        nlohmann::json entry;
        auto& weight = entry["weight"] = nlohmann::json::array();
        for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
            auto row = layer.weight.row(r);
            weight.push_back(std::vector<double>(row.begin(), row.end()));
        }
        entry["bias"] = layer.bias;
        layers.push_back(std::move(entry));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    try {
        if (doc.at("version").get<int>() != 1)
            throw IoError(path.string() + ": unsupported checkpoint version");
        Checkpoint ckpt;
        ckpt.normalize = doc.at("normalize").get<bool>();
        ckpt.params.layer_dims = doc.at("layer_dims").get<std::vector<std::size_t>>();
        const auto& layers = doc.at("layers");
        if (ckpt.params.layer_dims.size() < 2 ||
            layers.size() != ckpt.params.layer_dims.size() - 1)
            throw IoError(path.string() + ": layer count does not match layer_dims");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::size_t fan_in = ckpt.params.layer_dims[l];
            const std::size_t fan_out = ckpt.params.layer_dims[l + 1];
            LayerParams layer{Matrix(fan_in, fan_out), {}};
            const auto& weight = layers[l].at("weight");
            if (weight.size() != fan_in)
                throw IoError(path.string() + ": weight shape mismatch in layer " +
                              std::to_string(l));
            for (std::size_t r = 0; r < fan_in; ++r) {
                const auto row = weight[r].get<std::vector<double>>();
                if (row.size() != fan_out)
                    throw IoError(path.string() + ": weight shape mismatch in layer " +
                                  std::to_string(l));
                for (std::size_t c = 0; c < fan_out; ++c) layer.weight(r, c) = row[c];
            }
            layer.bias = layers[l].at("bias").get<std::vector<double>>();
            if (layer.bias.size() != fan_out)
                throw IoError(path.string() + ": bias shape mismatch in layer " +
                              std::to_string(l));
            ckpt.params.layers.push_back(std::move(layer));
        }
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": malformed checkpoint: " + e.what());
    }
}

} // namespace triphash
