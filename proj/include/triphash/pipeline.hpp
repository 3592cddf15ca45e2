#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "losses.hpp"
#include "mining.hpp"
#include "mlp.hpp"

namespace triphash {

struct AlphaSchedule {
    enum class Kind { Constant, StagedDoubling };
    Kind kind = Kind::StagedDoubling;
    double base = 1.0;
    double final_value = 16.0;
    int stage_epochs = 3;

    void validate() const {
        if (!(base >= 0.0) || !std::isfinite(base))
            throw ConfigError("alpha schedule: base must be finite and >= 0");
        if (kind == Kind::StagedDoubling) {
            if (base > final_value) throw ConfigError("alpha schedule: base must be <= final");
            if (stage_epochs < 1) throw ConfigError("alpha schedule: stage_epochs must be >= 1");
        }
    }
};

struct LambdaSchedule {
    int activate_epoch = 15;
    double value = 10.0;

    void validate() const {
        if (activate_epoch < 0) throw ConfigError("lambda schedule: activate_epoch must be >= 0");
        if (!(value >= 0.0) || !std::isfinite(value))
            throw ConfigError("lambda schedule: value must be finite and >= 0");
    }
};

/// Margin per epoch: constant, or doubling from base every stage_epochs
/// epochs and capped at final_value.
inline double alpha_schedule(int epoch, const AlphaSchedule& spec) {
    if (epoch < 0) throw std::invalid_argument("alpha_schedule: epoch must be >= 0");
    spec.validate();
    if (spec.kind == AlphaSchedule::Kind::Constant) return spec.base;
    const double staged = spec.base * std::pow(2.0, static_cast<double>(epoch / spec.stage_epochs));
    return std::min(spec.final_value, staged);
}

/// Quantization weight per epoch: zero until activate_epoch, then value.
inline double lambda_schedule(int epoch, const LambdaSchedule& spec) {
    if (epoch < 0) throw std::invalid_argument("lambda_schedule: epoch must be >= 0");
    spec.validate();
    return epoch < spec.activate_epoch ? 0.0 : spec.value;
}

enum class TrainMode { Triplet, Hash };

struct Seeds {
    std::uint64_t data = 1;
    std::uint64_t init = 2;
    std::uint64_t mining = 3;
};

struct EvalSettings {
    int every = 0;                  // 0 disables in-training evaluation
    double holdout_fraction = 0.1;  // carved off the training data when enabled
    std::size_t k = 5;
};

struct TrainConfig {
    TrainMode mode = TrainMode::Triplet;
    SelectorKind selector = SelectorKind::SemiHard;
    AlphaSchedule alpha;
    LambdaSchedule lambda;
    std::size_t classes_per_batch = 10;
    std::size_t samples_per_class = 8;
    int epochs = 30;
    AdamConfig optimizer;
    std::vector<std::size_t> layer_dims;
    bool normalize = true;
    Seeds seeds;
    EvalSettings eval;
    bool sum_reduction = false;

    void validate() const {
        if (layer_dims.size() < 2) throw ConfigError("config: layer_dims needs at least two entries");
        for (std::size_t d : layer_dims)
            if (d < 1) throw ConfigError("config: layer_dims entries must be >= 1");
        if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
        if (classes_per_batch < 1) throw ConfigError("config: classes_per_batch must be >= 1");
        if (samples_per_class < 1) throw ConfigError("config: samples_per_class must be >= 1");
        if (!(optimizer.learning_rate > 0.0)) throw ConfigError("config: learning_rate must be > 0");
        if (eval.every < 0) throw ConfigError("config: eval_every must be >= 0");
        if (eval.every > 0 && !(eval.holdout_fraction > 0.0 && eval.holdout_fraction < 1.0))
            throw ConfigError("config: eval_holdout_fraction must be in (0, 1)");
        if (eval.k < 1) throw ConfigError("config: eval_k must be >= 1");
        alpha.validate();
        lambda.validate();
    }

    static TrainConfig from_json(const nlohmann::json& doc);
    static TrainConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open " + path.string());
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
        return from_json(doc);
    }

    nlohmann::json to_json() const;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const char* scope,
                                std::initializer_list<const char*> known) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* name : known) ok = ok || key == name;
        if (!ok)
            throw ConfigError(std::string("config: unknown key '") + scope + key + "'");
    }
}

template <typename T>
void read_key(const nlohmann::json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config: bad value for key '") + key + "'");
    }
}

} // namespace detail

inline TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config: root must be a JSON object");
    detail::reject_unknown_keys(doc, "",
                                {"mode", "selector", "alpha", "lambda", "classes_per_batch",
                                 "samples_per_class", "epochs", "optimizer", "layer_dims",
                                 "normalize", "seeds", "eval", "sum_reduction"});
    TrainConfig cfg;

    if (!doc.contains("mode")) throw ConfigError("config: missing required key 'mode'");
    const auto mode = doc.at("mode").get<std::string>();
    if (mode == "triplet")
        cfg.mode = TrainMode::Triplet;
    else if (mode == "hash")
        cfg.mode = TrainMode::Hash;
    else
        throw ConfigError("config: mode must be 'triplet' or 'hash'");

    if (doc.contains("selector")) {
        const auto selector = doc.at("selector").get<std::string>();
        if (selector == "semi_hard")
            cfg.selector = SelectorKind::SemiHard;
        else if (selector == "hardest")
            cfg.selector = SelectorKind::Hardest;
        else if (selector == "random_negative")
            cfg.selector = SelectorKind::RandomNegative;
        else
            throw ConfigError("config: unknown selector '" + selector + "'");
    }

    if (doc.contains("alpha")) {
        const auto& a = doc.at("alpha");
        detail::reject_unknown_keys(a, "alpha.", {"kind", "base", "final", "stage_epochs"});
        if (a.contains("kind")) {
            const auto kind = a.at("kind").get<std::string>();
            if (kind == "constant")
                cfg.alpha.kind = AlphaSchedule::Kind::Constant;
            else if (kind == "staged_doubling")
                cfg.alpha.kind = AlphaSchedule::Kind::StagedDoubling;
            else
                throw ConfigError("config: unknown alpha kind '" + kind + "'");
        }
        detail::read_key(a, "base", cfg.alpha.base);
        detail::read_key(a, "final", cfg.alpha.final_value);
        detail::read_key(a, "stage_epochs", cfg.alpha.stage_epochs);
    }

    if (doc.contains("lambda")) {
        const auto& l = doc.at("lambda");
        detail::reject_unknown_keys(l, "lambda.", {"activate_epoch", "value"});
        detail::read_key(l, "activate_epoch", cfg.lambda.activate_epoch);
        detail::read_key(l, "value", cfg.lambda.value);
    }

    detail::read_key(doc, "classes_per_batch", cfg.classes_per_batch);
    detail::read_key(doc, "samples_per_class", cfg.samples_per_class);
    detail::read_key(doc, "epochs", cfg.epochs);

    if (doc.contains("optimizer")) {
        const auto& o = doc.at("optimizer");
        detail::reject_unknown_keys(o, "optimizer.",
                                    {"learning_rate", "beta1", "beta2", "epsilon"});
        detail::read_key(o, "learning_rate", cfg.optimizer.learning_rate);
        detail::read_key(o, "beta1", cfg.optimizer.beta1);
        detail::read_key(o, "beta2", cfg.optimizer.beta2);
        detail::read_key(o, "epsilon", cfg.optimizer.epsilon);
    }

    if (!doc.contains("layer_dims")) throw ConfigError("config: missing required key 'layer_dims'");
    detail::read_key(doc, "layer_dims", cfg.layer_dims);

    // Triplet training defaults to unit-norm embeddings; hash training must
    // leave outputs free to approach the code corners.
    cfg.normalize = cfg.mode == TrainMode::Triplet;
    detail::read_key(doc, "normalize", cfg.normalize);

    if (doc.contains("seeds")) {
        const auto& s = doc.at("seeds");
        detail::reject_unknown_keys(s, "seeds.", {"data", "init", "mining"});
        detail::read_key(s, "data", cfg.seeds.data);
        detail::read_key(s, "init", cfg.seeds.init);
        detail::read_key(s, "mining", cfg.seeds.mining);
    }

    if (doc.contains("eval")) {
        const auto& e = doc.at("eval");
        detail::reject_unknown_keys(e, "eval.", {"every", "holdout_fraction", "k"});
        detail::read_key(e, "every", cfg.eval.every);
        detail::read_key(e, "holdout_fraction", cfg.eval.holdout_fraction);
        detail::read_key(e, "k", cfg.eval.k);
    }

    detail::read_key(doc, "sum_reduction", cfg.sum_reduction);

    cfg.validate();
    return cfg;
}

inline nlohmann::json TrainConfig::to_json() const {
    nlohmann::json doc;
    doc["mode"] = mode == TrainMode::Triplet ? "triplet" : "hash";
    doc["selector"] = to_string(selector);
    doc["alpha"] = {{"kind", alpha.kind == AlphaSchedule::Kind::Constant ? "constant"
                                                                         : "staged_doubling"},
                    {"base", alpha.base},
                    {"final", alpha.final_value},
                    {"stage_epochs", alpha.stage_epochs}};
    doc["lambda"] = {{"activate_epoch", lambda.activate_epoch}, {"value", lambda.value}};
    doc["classes_per_batch"] = classes_per_batch;
    doc["samples_per_class"] = samples_per_class;
    doc["epochs"] = epochs;
    doc["optimizer"] = {{"learning_rate", optimizer.learning_rate},
                        {"beta1", optimizer.beta1},
                        {"beta2", optimizer.beta2},
                        {"epsilon", optimizer.epsilon}};
    doc["layer_dims"] = layer_dims;
    doc["normalize"] = normalize;
    doc["seeds"] = {{"data", seeds.data}, {"init", seeds.init}, {"mining", seeds.mining}};
    doc["eval"] = {{"every", eval.every},
                   {"holdout_fraction", eval.holdout_fraction},
                   {"k", eval.k}};
    doc["sum_reduction"] = sum_reduction;
    return doc;
}

struct EpochMetrics {
    double knn_accuracy = 0.0;
    double map = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    double mean_qerr_per_bit = 0.0; // (1/(B*K)) sum ||sign(u) - u||^2, averaged over batches
    double alpha = 0.0;
    double lambda = 0.0;
    std::optional<EpochMetrics> metrics;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;

    nlohmann::json to_json() const {
        nlohmann::json records = nlohmann::json::array();
        for (const EpochRecord& rec : epochs) {
            nlohmann::json entry = {{"epoch", rec.epoch},
                                    {"loss", rec.mean_loss},
                                    {"qerr", rec.mean_qerr_per_bit},
                                    {"alpha", rec.alpha},
                                    {"lambda", rec.lambda}};
            if (rec.metrics)
                entry["metrics"] = {{"knn_accuracy", rec.metrics->knn_accuracy},
                                    {"map", rec.metrics->map}};
            records.push_back(std::move(entry));
        }
        return {{"version", 1}, {"epochs", std::move(records)}};
    }
};

struct TrainResult {
    Checkpoint checkpoint;
    TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

inline Matrix gather_rows(const MatrixF& features, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), features.cols());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < features.cols(); ++c)
            out(r, c) = static_cast<double>(features(rows[r], c));
    return out;
}

inline double mean_per_bit_qerr(const Matrix& u) {
    if (u.size() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double diff = (u.data()[i] >= 0.0 ? 1.0 : -1.0) - u.data()[i];
        total += diff * diff;
    }
    return total / static_cast<double>(u.size());
}

inline Matrix embed_all(const MlpParams& params, const MatrixF& features, bool normalize) {
    std::vector<std::size_t> rows(features.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return forward(params, gather_rows(features, rows), normalize).output;
}

} // namespace detail

/// Shared training loop for both modes. Fully deterministic given the
/// config seeds; throws DivergenceError with the epoch and batch when a
/// non-finite loss, gradient, or parameter appears.
inline TrainResult train(const TrainConfig& cfg, const Dataset& dataset,
                         const EpochCallback& on_epoch = {}) {
    cfg.validate();
    dataset.validate();
    if (dataset.dim() != cfg.layer_dims.front())
        throw ConfigError("config: layer_dims[0] = " + std::to_string(cfg.layer_dims.front()) +
                          " but dataset dimension is " + std::to_string(dataset.dim()));

    const Dataset* fit = &dataset;
    SplitResult holdout_split;
    const bool with_eval = cfg.eval.every > 0;
    if (with_eval) {
        holdout_split = split(dataset, cfg.eval.holdout_fraction, cfg.seeds.data);
        fit = &holdout_split.train;
    }

    const Reduction reduction = cfg.sum_reduction ? Reduction::Sum : Reduction::Mean;
    MlpParams params = init_mlp(cfg.layer_dims, cfg.seeds.init);
    AdamState adam = AdamState::for_params(params);
    TrainHistory history;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double alpha = alpha_schedule(epoch, cfg.alpha);
        const double lambda =
            cfg.mode == TrainMode::Hash ? lambda_schedule(epoch, cfg.lambda) : 0.0;

        const std::uint64_t epoch_seed = derive_seed(cfg.seeds.mining, static_cast<std::uint64_t>(epoch));
        const BatchPlan plan = balanced_batches(fit->labels, cfg.classes_per_batch,
                                                cfg.samples_per_class, epoch_seed);
        Rng select_rng(derive_seed(epoch_seed, 0x5e1ec70bULL));

        double loss_sum = 0.0;
        double qerr_sum = 0.0;
        for (std::size_t b = 0; b < plan.batches.size(); ++b) {
            const auto& batch = plan.batches[b];
            const Matrix x = detail::gather_rows(fit->features, batch);
            std::vector<std::uint32_t> batch_labels(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i) batch_labels[i] = fit->labels[batch[i]];

            auto [u, cache] = forward(params, x, cfg.normalize);
            for (std::size_t i = 0; i < u.size(); ++i)
                if (!std::isfinite(u.data()[i]))
                    throw DivergenceError("training diverged: non-finite embedding at epoch " +
                                          std::to_string(epoch) + " batch " + std::to_string(b));
            qerr_sum += detail::mean_per_bit_qerr(u);

            const Matrix dists = pairwise_sq_dists(u);
            const TripletSet triplets =
                select_triplets(cfg.selector, dists, batch_labels, alpha, select_rng);

            double batch_loss = 0.0;
            Matrix dloss_du;
            if (cfg.mode == TrainMode::Triplet) {
                if (triplets.empty()) continue; // nothing to descend
                auto res = triplet_margin_loss(u, triplets, alpha, reduction);
                batch_loss = res.loss;
                dloss_du = std::move(res.grad);
            } else {
                auto likelihood = hash_likelihood_loss(u, triplets, alpha, reduction);
                auto penalty = quantization_penalty(u, lambda, reduction);
                batch_loss = likelihood.loss + penalty.loss;
                if (triplets.empty() && lambda == 0.0) continue;
                dloss_du = std::move(likelihood.grad);
                for (std::size_t i = 0; i < dloss_du.size(); ++i)
                    dloss_du.data()[i] += penalty.grad.data()[i];
            }

            const std::string where =
                "epoch " + std::to_string(epoch) + " batch " + std::to_string(b);
            if (!std::isfinite(batch_loss))
                throw DivergenceError("training diverged: non-finite loss at " + where);
            loss_sum += batch_loss;

            const MlpGrads grads = backward(params, cache, dloss_du);
            try {
                adam_step(params, grads, adam, cfg.optimizer);
            } catch (const DivergenceError& e) {
                throw DivergenceError("training diverged at " + where + ": " + e.what());
            }
        }

        EpochRecord record;
        record.epoch = epoch;
        record.mean_loss =
            plan.batches.empty() ? 0.0 : loss_sum / static_cast<double>(plan.batches.size());
        record.mean_qerr_per_bit =
            plan.batches.empty() ? 0.0 : qerr_sum / static_cast<double>(plan.batches.size());
        record.alpha = alpha;
        record.lambda = lambda;

        if (with_eval &&
            ((epoch + 1) % cfg.eval.every == 0 || epoch == cfg.epochs - 1)) {
            const Matrix db = detail::embed_all(params, fit->features, cfg.normalize);
            const Matrix queries =
                detail::embed_all(params, holdout_split.test.features, cfg.normalize);
            EpochMetrics metrics;
            metrics.knn_accuracy =
                knn_accuracy(db, fit->labels, queries, holdout_split.test.labels, cfg.eval.k);
            metrics.map =
                mean_average_precision(db, fit->labels, queries, holdout_split.test.labels);
            record.metrics = metrics;
        }

        history.epochs.push_back(record);
        if (on_epoch) on_epoch(record);
    }

    return {Checkpoint{std::move(params), cfg.normalize}, std::move(history)};
}

inline TrainResult train_triplet(const TrainConfig& cfg, const Dataset& dataset,
                                 const EpochCallback& on_epoch = {}) {
    if (cfg.mode != TrainMode::Triplet)
        throw ConfigError("train_triplet: config mode is not 'triplet'");
    return train(cfg, dataset, on_epoch);
}

inline TrainResult train_hash(const TrainConfig& cfg, const Dataset& dataset,
                              const EpochCallback& on_epoch = {}) {
    if (cfg.mode != TrainMode::Hash)
        throw ConfigError("train_hash: config mode is not 'hash'");
    return train(cfg, dataset, on_epoch);
}

} // namespace triphash
