// triphash command line: synthetic data generation, embedding/hash training,
// sign-code encoding, and retrieval evaluation over feat/BCOD files.
//
// Exit codes: 0 success, 1 I/O failure, 2 usage or config error,
// 3 training divergence.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "triphash/triphash.hpp"

namespace {

using namespace triphash;

Dataset read_feature_file(const std::string& path) {
    switch (sniff_file(path)) {
        case FileKind::FeatBin: return read_features(path, FeatureFormat::FeatBin);
        case FileKind::Csv: return read_features(path, FeatureFormat::Csv);
        case FileKind::Bcod:
            throw ConfigError(path + " holds packed codes; a feature file is required");
        default: throw ConfigError(path + ": not a recognized feature file");
    }
}

Matrix to_double_matrix(const MatrixF& features) {
    Matrix out(features.rows(), features.cols());
    for (std::size_t i = 0; i < features.size(); ++i)
        out.data()[i] = static_cast<double>(features.data()[i]);
    return out;
}

Matrix embed(const Checkpoint& ckpt, const Dataset& data) {
    if (data.dim() != ckpt.params.input_dim())
        throw ConfigError("data dimension " + std::to_string(data.dim()) +
                          " does not match checkpoint input dimension " +
                          std::to_string(ckpt.params.input_dim()));
    return forward(ckpt.params, to_double_matrix(data.features), ckpt.normalize).output;
}

int run_gen_data(const BlobSpec& spec, const std::string& out, const std::string& format) {
    spec.validate();
    const Dataset ds = generate_blobs(spec);
    write_features(ds, out, format == "csv" ? FeatureFormat::Csv : FeatureFormat::FeatBin);
    std::cerr << "wrote " << ds.n() << " x " << ds.dim() << " features (" << spec.classes
              << " classes) to " << out << "\n";
    return 0;
}

int run_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_path, const std::string& history_path) {
    const TrainConfig cfg = TrainConfig::load(config_path);
    const Dataset data = read_feature_file(data_path);
    const auto result = train(cfg, data, [](const EpochRecord& rec) {
        std::fprintf(stderr, "epoch=%d loss=%.6g alpha=%.6g lambda=%.6g qerr=%.6g\n", rec.epoch,
                     rec.mean_loss, rec.alpha, rec.lambda, rec.mean_qerr_per_bit);
    });
    save_checkpoint(result.checkpoint, out_path);
    if (!history_path.empty()) {
        std::ofstream out(history_path, std::ios::trunc);
        if (!out) throw IoError("cannot open " + history_path + " for writing");
        out << result.history.to_json().dump(2) << '\n';
        if (!out) throw IoError("write failed: " + history_path);
    }
    std::cerr << "checkpoint written to " << out_path << "\n";
    return 0;
}

int run_encode(const std::string& ckpt_path, const std::string& data_path,
               const std::string& out_path, const std::string& raw_out_path) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Dataset data = read_feature_file(data_path);
    const Matrix u = embed(ckpt, data);
    if (!raw_out_path.empty()) {
        Dataset raw;
        raw.features = MatrixF(u.rows(), u.cols());
        for (std::size_t i = 0; i < u.size(); ++i)
            raw.features.data()[i] = static_cast<float>(u.data()[i]);
        raw.labels = data.labels;
        raw.num_classes = data.num_classes;
        write_features(raw, raw_out_path, FeatureFormat::FeatBin);
    }
    write_codes(pack(binarize(u)), data.labels, out_path);
    std::cerr << "wrote " << u.rows() << " codes of " << u.cols() << " bits to " << out_path
              << "\n";
    return 0;
}

struct LoadedEval {
    bool packed = false;
    Dataset features;     // when !packed
    PackedCodes codes;    // when packed
    std::vector<std::uint32_t> labels;
};

LoadedEval load_eval_input(const std::string& path) {
    LoadedEval out;
    if (sniff_file(path) == FileKind::Bcod) {
        out.packed = true;
        auto [codes, labels] = read_codes(path);
        out.codes = std::move(codes);
        out.labels = std::move(labels);
    } else {
        out.features = read_feature_file(path);
        out.labels = out.features.labels;
    }
    return out;
}

int run_eval(const std::string& db_path, const std::string& queries_path, std::size_t k,
             std::string metric, const std::string& report_path) {
    const LoadedEval db = load_eval_input(db_path);
    const LoadedEval queries = load_eval_input(queries_path);
    if (db.packed != queries.packed)
        throw ConfigError("db and queries must both be feature files or both be BCOD files");

    if (metric.empty()) metric = db.packed ? "hamming" : "euclidean";
    if (metric == "euclidean" && db.packed)
        throw ConfigError("euclidean metric requires feature inputs, got BCOD");
    if (metric == "hamming" && !db.packed)
        throw ConfigError("hamming metric requires BCOD inputs, got features");

    const std::size_t db_size = db.packed ? db.codes.n : db.features.n();
    if (k < 1 || k > db_size)
        throw ConfigError("k must be in [1, database size = " + std::to_string(db_size) + "]");

    MetricsReport report;
    report.mode = metric;
    report.k = k;
    report.timestamp = iso8601_utc_now();
    report.config = {{"db", db_path}, {"queries", queries_path}, {"k", k}, {"metric", metric}};

    if (db.packed) {
        const HammingIndex index(db.codes, db.labels);
        report.num_queries = queries.codes.n;
        report.knn_accuracy = knn_accuracy(index, queries.codes, queries.labels, k);
        report.map = mean_average_precision(index, queries.codes, queries.labels);
    } else {
        const Matrix db_points = to_double_matrix(db.features.features);
        const Matrix query_points = to_double_matrix(queries.features.features);
        report.num_queries = query_points.rows();
        report.knn_accuracy = knn_accuracy(db_points, db.labels, query_points, queries.labels, k);
        report.map = mean_average_precision(db_points, db.labels, query_points, queries.labels);
    }

    std::cerr << format_report_table(report);
    std::cout << report_to_json(report).dump(2) << "\n";
    if (!report_path.empty()) emit_report(report, report_path);
    return 0;
}

int run_query(const std::string& db_path, std::size_t query_row, std::size_t k) {
    auto [codes, labels] = read_codes(db_path);
    if (query_row >= codes.n)
        throw ConfigError("query row " + std::to_string(query_row) + " out of range [0, " +
                          std::to_string(codes.n) + ")");
    const HammingIndex index(codes, labels);
    const auto hits = index.search(index.codes().row(query_row), index.nbits(), k);
    for (const SearchHit& hit : hits)
        std::cout << "(" << hit.row << ", " << hit.distance << ", " << index.label(hit.row)
                  << ")\n";
    return 0;
}

int run_dump_embeddings(const std::string& ckpt_path, const std::string& data_path,
                        const std::string& out_path) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Dataset data = read_feature_file(data_path);
    const Matrix u = embed(ckpt, data);
    Dataset dump;
    dump.features = MatrixF(u.rows(), u.cols());
    for (std::size_t i = 0; i < u.size(); ++i)
        dump.features.data()[i] = static_cast<float>(u.data()[i]);
    dump.labels = data.labels;
    dump.num_classes = data.num_classes;
    write_features(dump, out_path, FeatureFormat::Csv);
    std::cerr << "wrote " << u.rows() << " embedding rows to " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"triplet-trained embeddings, sign codes, and Hamming retrieval"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker thread cap (results are thread-count independent)")
        ->check(CLI::PositiveNumber);

    BlobSpec blob;
    std::string gen_out, gen_format = "feat-bin";
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic blob dataset");
    gen->add_option("--classes", blob.classes, "number of classes (>= 2)");
    gen->add_option("--dim", blob.dim, "feature dimension");
    gen->add_option("--per-class", blob.samples_per_class, "samples per class");
    gen->add_option("--center-scale", blob.center_scale, "std of class centers");
    gen->add_option("--sigma", blob.noise_sigma, "per-sample noise std");
    gen->add_option("--seed", blob.seed, "generator seed");
    gen->add_option("--out", gen_out, "output feature file")->required();
    gen->add_option("--format", gen_format, "feat-bin or csv")
        ->check(CLI::IsMember({"feat-bin", "csv"}));

    std::string train_config, train_data, train_out, train_history;
    auto* tr = app.add_subcommand("train", "train an embedding or hashing model");
    tr->add_option("--config", train_config, "JSON training config")->required();
    tr->add_option("--data", train_data, "training feature file")->required();
    tr->add_option("--out", train_out, "checkpoint output path")->required();
    tr->add_option("--history", train_history, "optional per-epoch history JSON");

    std::string enc_ckpt, enc_data, enc_out, enc_raw;
    auto* enc = app.add_subcommand("encode", "binarize model outputs into packed codes");
    enc->add_option("--ckpt", enc_ckpt, "checkpoint path")->required();
    enc->add_option("--data", enc_data, "feature file to encode")->required();
    enc->add_option("--out", enc_out, "BCOD output path")->required();
    enc->add_option("--raw-out", enc_raw, "optional raw embedding feat-bin dump");

    std::string eval_db, eval_queries, eval_metric, eval_report;
    std::size_t eval_k = 5;
    auto* ev = app.add_subcommand("eval", "KNN accuracy and mAP over a database");
    ev->add_option("--db", eval_db, "database file (feat or BCOD)")->required();
    ev->add_option("--queries", eval_queries, "query file (feat or BCOD)")->required();
    ev->add_option("--k", eval_k, "neighbors for the KNN vote");
    ev->add_option("--metric", eval_metric, "euclidean or hamming (default from input kind)")
        ->check(CLI::IsMember({"euclidean", "hamming"}));
    ev->add_option("--report", eval_report, "metrics JSON output path");

    std::string query_db;
    std::size_t query_row = 0, query_k = 10;
    auto* qr = app.add_subcommand("query", "rank database rows against one stored code");
    qr->add_option("--db", query_db, "BCOD database")->required();
    qr->add_option("--query-row", query_row, "database row to use as the query")->required();
    qr->add_option("--k", query_k, "number of results");

    std::string dump_ckpt, dump_data, dump_out;
    auto* dmp = app.add_subcommand("dump-embeddings", "write raw embeddings as CSV");
    dmp->add_option("--ckpt", dump_ckpt, "checkpoint path")->required();
    dmp->add_option("--data", dump_data, "feature file")->required();
    dmp->add_option("--out", dump_out, "CSV output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e); // prints the message and usage hint
        return 2;
    }

    try {
        if (gen->parsed()) return run_gen_data(blob, gen_out, gen_format);
        if (tr->parsed()) return run_train(train_config, train_data, train_out, train_history);
        if (enc->parsed()) return run_encode(enc_ckpt, enc_data, enc_out, enc_raw);
        if (ev->parsed()) return run_eval(eval_db, eval_queries, eval_k, eval_metric, eval_report);
        if (qr->parsed()) {
            if (query_k < 1) throw triphash::ConfigError("k must be >= 1");
            return run_query(query_db, query_row, query_k);
        }
        if (dmp->parsed()) return run_dump_embeddings(dump_ckpt, dump_data, dump_out);
    } catch (const triphash::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const triphash::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const triphash::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
