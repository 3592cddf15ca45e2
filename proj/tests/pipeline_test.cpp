#include <gtest/gtest.h>

#include <cmath>

#include "triphash/dataset.hpp"
#include "triphash/error.hpp"
#include "triphash/pipeline.hpp"

using namespace triphash;

namespace {

Dataset two_blob_dataset() {
    BlobSpec spec;
    spec.classes = 2;
    spec.dim = 4;
    spec.samples_per_class = 40;
    spec.center_scale = 3.0;
    spec.noise_sigma = 0.4;
    spec.seed = 15;
    return generate_blobs(spec);
}

TrainConfig tiny_triplet_config() {
    TrainConfig cfg;
    cfg.mode = TrainMode::Triplet;
    cfg.selector = SelectorKind::SemiHard;
    cfg.alpha = {AlphaSchedule::Kind::Constant, 0.5, 0.5, 1};
    cfg.classes_per_batch = 2;
    cfg.samples_per_class = 8;
    cfg.epochs = 5;
    cfg.layer_dims = {4, 8, 3};
    cfg.normalize = true;
    return cfg;
}

} // namespace

TEST(AlphaSchedule, StagedDoublingMatchesContract) {
    const AlphaSchedule spec; // defaults: base 1, final 16, stage 3
    EXPECT_EQ(alpha_schedule(0, spec), 1.0);
    EXPECT_EQ(alpha_schedule(2, spec), 1.0);
    EXPECT_EQ(alpha_schedule(3, spec), 2.0);
    EXPECT_EQ(alpha_schedule(4, spec), 2.0); // stage index 1
    EXPECT_EQ(alpha_schedule(6, spec), 4.0);
    EXPECT_EQ(alpha_schedule(9, spec), 8.0);
    EXPECT_EQ(alpha_schedule(12, spec), 16.0);
    EXPECT_EQ(alpha_schedule(30, spec), 16.0); // capped at final
}

TEST(AlphaSchedule, ConstantAndErrors) {
    AlphaSchedule spec;
    spec.kind = AlphaSchedule::Kind::Constant;
    spec.base = 2.5;
    EXPECT_EQ(alpha_schedule(0, spec), 2.5);
    EXPECT_EQ(alpha_schedule(100, spec), 2.5);

    AlphaSchedule bad;
    bad.base = 20.0; // above final
    EXPECT_THROW(alpha_schedule(0, bad), ConfigError);
    bad = AlphaSchedule{};
    bad.stage_epochs = 0;
    EXPECT_THROW(alpha_schedule(0, bad), ConfigError);
    EXPECT_THROW(alpha_schedule(-1, AlphaSchedule{}), std::invalid_argument);
}

TEST(LambdaSchedule, ActivationBoundary) {
    const LambdaSchedule spec; // defaults: activate 15, value 10
    EXPECT_EQ(lambda_schedule(0, spec), 0.0);
    EXPECT_EQ(lambda_schedule(14, spec), 0.0);
    EXPECT_EQ(lambda_schedule(15, spec), 10.0);
    EXPECT_EQ(lambda_schedule(100, spec), 10.0);

    LambdaSchedule immediate;
    immediate.activate_epoch = 0;
    immediate.value = 3.0;
    EXPECT_EQ(lambda_schedule(0, immediate), 3.0);
    EXPECT_EQ(lambda_schedule(50, immediate), 3.0);
}

TEST(TrainConfig, JsonRoundTrip) {
    TrainConfig cfg = tiny_triplet_config();
    cfg.sum_reduction = true;
    cfg.seeds = {11, 22, 33};
    const TrainConfig back = TrainConfig::from_json(cfg.to_json());
    EXPECT_EQ(back.mode, cfg.mode);
    EXPECT_EQ(back.selector, cfg.selector);
    EXPECT_EQ(back.alpha.kind, cfg.alpha.kind);
    EXPECT_EQ(back.alpha.base, cfg.alpha.base);
    EXPECT_EQ(back.layer_dims, cfg.layer_dims);
    EXPECT_EQ(back.seeds.data, 11u);
    EXPECT_EQ(back.seeds.init, 22u);
    EXPECT_EQ(back.seeds.mining, 33u);
    EXPECT_EQ(back.sum_reduction, true);
}

TEST(TrainConfig, RejectsUnknownKeysByName) {
    nlohmann::json doc = {{"mode", "triplet"}, {"layer_dims", {4, 2}}, {"learning_rate", 0.1}};
    try {
        TrainConfig::from_json(doc);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
    }

    nlohmann::json nested = {{"mode", "triplet"},
                             {"layer_dims", {4, 2}},
                             {"optimizer", {{"lr", 0.1}}}};
    try {
        TrainConfig::from_json(nested);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("optimizer.lr"), std::string::npos);
    }
}

TEST(TrainConfig, RequiredKeysAndModeDefaults) {
    EXPECT_THROW(TrainConfig::from_json({{"layer_dims", {4, 2}}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json({{"mode", "triplet"}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json({{"mode", "banana"}, {"layer_dims", {4, 2}}}),
                 ConfigError);

    const TrainConfig triplet =
        TrainConfig::from_json({{"mode", "triplet"}, {"layer_dims", {4, 2}}});
    EXPECT_TRUE(triplet.normalize);

    const TrainConfig hash = TrainConfig::from_json({{"mode", "hash"}, {"layer_dims", {4, 2}}});
    EXPECT_FALSE(hash.normalize);

    const TrainConfig overridden = TrainConfig::from_json(
        {{"mode", "hash"}, {"layer_dims", {4, 2}}, {"normalize", true}});
    EXPECT_TRUE(overridden.normalize);
}

TEST(TrainTriplet, LossDropsOnSeparableBlobs) {
    const Dataset ds = two_blob_dataset();
    const TrainConfig cfg = tiny_triplet_config();
    const TrainResult result = train_triplet(cfg, ds);
    ASSERT_EQ(result.history.epochs.size(), 5u);
    EXPECT_LT(result.history.epochs.back().mean_loss, result.history.epochs.front().mean_loss);
    EXPECT_TRUE(result.checkpoint.normalize);
}

TEST(Train, DeterministicGivenSeeds) {
    const Dataset ds = two_blob_dataset();
    const TrainConfig cfg = tiny_triplet_config();
    const TrainResult a = train(cfg, ds);
    const TrainResult b = train(cfg, ds);
    ASSERT_EQ(a.history.epochs.size(), b.history.epochs.size());
    for (std::size_t e = 0; e < a.history.epochs.size(); ++e) {
        EXPECT_EQ(a.history.epochs[e].mean_loss, b.history.epochs[e].mean_loss);
        EXPECT_EQ(a.history.epochs[e].mean_qerr_per_bit, b.history.epochs[e].mean_qerr_per_bit);
    }
    for (std::size_t l = 0; l < a.checkpoint.params.layers.size(); ++l)
        EXPECT_TRUE(a.checkpoint.params.layers[l].weight == b.checkpoint.params.layers[l].weight);
}

TEST(Train, SingleClassDatasetLeavesParamsUntouched) {
    Dataset ds;
    ds.features = MatrixF(20, 4, 0.5f);
    for (std::size_t i = 0; i < 20; ++i) {
        ds.labels.push_back(0);
        for (std::size_t j = 0; j < 4; ++j) ds.features(i, j) = float(i + j);
    }
    ds.num_classes = 1;

    TrainConfig cfg = tiny_triplet_config();
    cfg.classes_per_batch = 1;
    cfg.samples_per_class = 5;
    cfg.epochs = 3;

    const TrainResult result = train(cfg, ds);
    for (const EpochRecord& rec : result.history.epochs) EXPECT_EQ(rec.mean_loss, 0.0);

    const MlpParams untouched = init_mlp(cfg.layer_dims, cfg.seeds.init);
    for (std::size_t l = 0; l < untouched.layers.size(); ++l) {
        EXPECT_TRUE(result.checkpoint.params.layers[l].weight == untouched.layers[l].weight);
        EXPECT_EQ(result.checkpoint.params.layers[l].bias, untouched.layers[l].bias);
    }
}

TEST(TrainHash, HistoryRecordsSchedulesAndQuantizationImproves) {
    BlobSpec spec;
    spec.classes = 3;
    spec.dim = 6;
    spec.samples_per_class = 30;
    spec.center_scale = 3.0;
    spec.noise_sigma = 0.5;
    spec.seed = 44;
    const Dataset ds = generate_blobs(spec);

    TrainConfig cfg;
    cfg.mode = TrainMode::Hash;
    cfg.selector = SelectorKind::SemiHard;
    cfg.alpha = {AlphaSchedule::Kind::StagedDoubling, 1.0, 4.0, 2};
    cfg.lambda = {4, 10.0}; // activate at epoch 4
    cfg.classes_per_batch = 3;
    cfg.samples_per_class = 6;
    cfg.epochs = 10;
    cfg.layer_dims = {6, 16, 4};
    cfg.normalize = false;

    const TrainResult result = train_hash(cfg, ds);
    ASSERT_EQ(result.history.epochs.size(), 10u);
    for (int e = 0; e < 10; ++e) {
        EXPECT_EQ(result.history.epochs[e].alpha, alpha_schedule(e, cfg.alpha));
        EXPECT_EQ(result.history.epochs[e].lambda, lambda_schedule(e, cfg.lambda));
    }
    EXPECT_LT(result.history.epochs.back().mean_qerr_per_bit,
              result.history.epochs[4].mean_qerr_per_bit);
}

TEST(Train, DivergenceGuardNamesEpochAndBatch) {
    const Dataset ds = two_blob_dataset();
    TrainConfig cfg = tiny_triplet_config();
    cfg.normalize = false;
    // One step of this size pushes the weights to ~1e200, so the next forward
    // pass overflows to inf and the guard must fire with a location.
    cfg.optimizer.learning_rate = 1e200;
    try {
        train(cfg, ds);
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
    }
}

TEST(Train, EvalCadenceRecordsMetricsOnHoldout) {
    BlobSpec spec;
    spec.classes = 2;
    spec.dim = 4;
    spec.samples_per_class = 50;
    spec.center_scale = 4.0;
    spec.noise_sigma = 0.3;
    spec.seed = 91;
    const Dataset ds = generate_blobs(spec);

    TrainConfig cfg = tiny_triplet_config();
    cfg.epochs = 4;
    cfg.eval.every = 2;
    cfg.eval.holdout_fraction = 0.2;
    cfg.eval.k = 3;

    const TrainResult result = train(cfg, ds);
    ASSERT_EQ(result.history.epochs.size(), 4u);
    EXPECT_FALSE(result.history.epochs[0].metrics.has_value());
    EXPECT_TRUE(result.history.epochs[1].metrics.has_value());
    EXPECT_FALSE(result.history.epochs[2].metrics.has_value());
    EXPECT_TRUE(result.history.epochs[3].metrics.has_value());
    const EpochMetrics& metrics = *result.history.epochs[3].metrics;
    EXPECT_GE(metrics.map, 0.0);
    EXPECT_LE(metrics.map, 1.0);
    EXPECT_GE(metrics.knn_accuracy, 0.0);
    EXPECT_LE(metrics.knn_accuracy, 1.0);
}

TEST(Train, RejectsMismatchedDataDimension) {
    const Dataset ds = two_blob_dataset(); // dim 4
    TrainConfig cfg = tiny_triplet_config();
    cfg.layer_dims = {5, 8, 3};
    EXPECT_THROW(train(cfg, ds), ConfigError);
}

TEST(TrainModeWrappers, EnforceMode) {
    const Dataset ds = two_blob_dataset();
    TrainConfig cfg = tiny_triplet_config();
    EXPECT_THROW(train_hash(cfg, ds), ConfigError);
    cfg.mode = TrainMode::Hash;
    cfg.normalize = false;
    EXPECT_THROW(train_triplet(cfg, ds), ConfigError);
}

TEST(TrainHistory, JsonShape) {
    const Dataset ds = two_blob_dataset();
    TrainConfig cfg = tiny_triplet_config();
    cfg.epochs = 2;
    const TrainResult result = train(cfg, ds);
    const nlohmann::json doc = result.history.to_json();
    EXPECT_EQ(doc.at("version"), 1);
    ASSERT_EQ(doc.at("epochs").size(), 2u);
    EXPECT_TRUE(doc.at("epochs")[0].contains("loss"));
    EXPECT_TRUE(doc.at("epochs")[0].contains("alpha"));
    EXPECT_TRUE(doc.at("epochs")[0].contains("lambda"));
    EXPECT_TRUE(doc.at("epochs")[0].contains("qerr"));
}
