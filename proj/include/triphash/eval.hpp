#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "hashing.hpp"
#include "matrix.hpp"

namespace triphash {

struct Neighbor {
    std::size_t row;
    double distance;
};

/// k nearest database rows by (squared Euclidean distance, row). k is
/// clamped to the database size.
inline std::vector<Neighbor> nearest_euclidean(const Matrix& db, std::span<const double> query,
                                               std::size_t k) {
    if (db.rows() == 0) throw std::invalid_argument("knn: empty database");
    if (query.size() != db.cols()) throw std::invalid_argument("knn: query dimension mismatch");
    std::vector<Neighbor> all(db.rows());
    for (std::size_t i = 0; i < db.rows(); ++i) {
        double d = 0.0;
        for (std::size_t c = 0; c < db.cols(); ++c) {
            const double diff = db(i, c) - query[c];
            d += diff * diff;
        }
        all[i] = {i, d};
    }
    const std::size_t take = std::min(k, all.size());
    auto by_distance_then_row = [](const Neighbor& a, const Neighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.row < b.row;
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                      by_distance_then_row);
    all.resize(take);
    return all;
}

namespace detail {

/// Majority vote over ranked neighbors. Vote ties break to the label with
/// the smaller summed distance inside the k-set, then to the smaller label.
inline std::uint32_t majority_label(const std::vector<Neighbor>& neighbors,
                                    std::span<const std::uint32_t> db_labels) {
    std::map<std::uint32_t, std::pair<std::size_t, double>> tally; // label -> (votes, dist sum)
    for (const Neighbor& nb : neighbors) {
        auto& entry = tally[db_labels[nb.row]];
        entry.first += 1;
        entry.second += nb.distance;
    }
    std::uint32_t best_label = 0;
    std::size_t best_votes = 0;
    double best_sum = 0.0;
    bool first = true;
    for (const auto& [label, entry] : tally) {
        const auto [votes, sum] = entry;
        if (first || votes > best_votes || (votes == best_votes && sum < best_sum)) {
            best_label = label;
            best_votes = votes;
            best_sum = sum;
            first = false;
        }
    }
    return best_label;
}

} // namespace detail

inline std::uint32_t knn_predict(const Matrix& db, std::span<const std::uint32_t> db_labels,
                                 std::span<const double> query, std::size_t k) {
    if (k < 1) throw std::invalid_argument("knn: k must be >= 1");
    return detail::majority_label(nearest_euclidean(db, query, k), db_labels);
}

inline std::uint32_t knn_predict(const HammingIndex& index, std::span<const std::uint64_t> query,
                                 std::uint32_t query_nbits, std::size_t k) {
    if (index.size() == 0) throw std::invalid_argument("knn: empty database");
    const auto hits = index.search(query, query_nbits, k);
    std::vector<Neighbor> neighbors(hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i)
        neighbors[i] = {hits[i].row, static_cast<double>(hits[i].distance)};
    return detail::majority_label(neighbors, index.labels());
}

inline double knn_accuracy(const Matrix& db, std::span<const std::uint32_t> db_labels,
                           const Matrix& queries, std::span<const std::uint32_t> query_labels,
                           std::size_t k) {
    if (queries.rows() == 0) throw std::invalid_argument("knn_accuracy: empty query set");
    std::size_t correct = 0;
    for (std::size_t q = 0; q < queries.rows(); ++q)
        correct += knn_predict(db, db_labels, queries.row(q), k) == query_labels[q];
    return static_cast<double>(correct) / static_cast<double>(queries.rows());
}

inline double knn_accuracy(const HammingIndex& index, const PackedCodes& queries,
                           std::span<const std::uint32_t> query_labels, std::size_t k) {
    if (queries.n == 0) throw std::invalid_argument("knn_accuracy: empty query set");
    std::size_t correct = 0;
    for (std::size_t q = 0; q < queries.n; ++q)
        correct += knn_predict(index, queries.row(q), queries.nbits, k) == query_labels[q];
    return static_cast<double>(correct) / static_cast<double>(queries.n);
}

/// Average precision of one full ranking: with R relevant items in total,
/// AP = (1/R) * sum over relevant ranks r of precision@r; 0 when R == 0.
inline double average_precision(std::span<const std::uint32_t> ranked_labels,
                                std::uint32_t query_label) {
    std::size_t relevant_total = 0;
    for (std::uint32_t label : ranked_labels) relevant_total += label == query_label;
    if (relevant_total == 0) return 0.0;

    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ranked_labels.size(); ++r)
        if (ranked_labels[r] == query_label) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
    return ap / static_cast<double>(relevant_total);
}

inline double mean_average_precision(const Matrix& db, std::span<const std::uint32_t> db_labels,
                                     const Matrix& queries,
                                     std::span<const std::uint32_t> query_labels) {
    if (db.rows() == 0 || queries.rows() == 0)
        throw std::invalid_argument("mean_average_precision: empty database or query set");
    double total = 0.0;
    std::vector<std::uint32_t> ranked(db.rows());
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        const auto order = nearest_euclidean(db, queries.row(q), db.rows());
        for (std::size_t i = 0; i < order.size(); ++i) ranked[i] = db_labels[order[i].row];
        total += average_precision(ranked, query_labels[q]);
    }
    return total / static_cast<double>(queries.rows());
}

inline double mean_average_precision(const HammingIndex& index, const PackedCodes& queries,
                                     std::span<const std::uint32_t> query_labels) {
    if (index.size() == 0 || queries.n == 0)
        throw std::invalid_argument("mean_average_precision: empty database or query set");
    double total = 0.0;
    std::vector<std::uint32_t> ranked(index.size());
    for (std::size_t q = 0; q < queries.n; ++q) {
        const auto order = index.rank_all(queries.row(q), queries.nbits);
        for (std::size_t i = 0; i < order.size(); ++i) ranked[i] = index.label(order[i].row);
        total += average_precision(ranked, query_labels[q]);
    }
    return total / static_cast<double>(queries.n);
}

struct MetricsReport {
    std::string mode; // "euclidean" or "hamming"
    std::size_t k = 0;
    std::size_t num_queries = 0;
    double knn_accuracy = 0.0;
    double map = 0.0;
    nlohmann::json config = nlohmann::json::object();
    std::string timestamp;
};

inline void validate_report(const MetricsReport& report) {
    if (report.mode != "euclidean" && report.mode != "hamming")
        throw std::invalid_argument("metrics report: mode must be euclidean or hamming");
    if (report.k < 1) throw std::invalid_argument("metrics report: k must be >= 1");
    if (!(report.knn_accuracy >= 0.0 && report.knn_accuracy <= 1.0))
        throw std::invalid_argument("metrics report: knn_accuracy outside [0, 1]");
    if (!(report.map >= 0.0 && report.map <= 1.0))
        throw std::invalid_argument("metrics report: map outside [0, 1]");
}

inline nlohmann::json report_to_json(const MetricsReport& report) {
    validate_report(report);
    return {{"version", 1},
            {"mode", report.mode},
            {"k", report.k},
            {"num_queries", report.num_queries},
            {"knn_accuracy", report.knn_accuracy},
            {"map", report.map},
            {"config", report.config},
            {"timestamp", report.timestamp}};
}

inline MetricsReport report_from_json(const nlohmann::json& doc) {
    MetricsReport report;
    report.mode = doc.at("mode").get<std::string>();
    report.k = doc.at("k").get<std::size_t>();
    report.num_queries = doc.at("num_queries").get<std::size_t>();
    report.knn_accuracy = doc.at("knn_accuracy").get<double>();
    report.map = doc.at("map").get<double>();
    report.config = doc.at("config");
    report.timestamp = doc.at("timestamp").get<std::string>();
    validate_report(report);
    return report;
}

inline void emit_report(const MetricsReport& report, const std::filesystem::path& path) {
    const nlohmann::json doc = report_to_json(report);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::string format_report_table(const MetricsReport& report) {
    char buf[256];
    std::ostringstream out;
    out << "metric          value\n";
    out << "--------------  ----------\n";
    std::snprintf(buf, sizeof buf, "%-14s  %s\n", "mode", report.mode.c_str());
    out << buf;
    std::snprintf(buf, sizeof buf, "%-14s  %zu\n", "k", report.k);
    out << buf;
    std::snprintf(buf, sizeof buf, "%-14s  %zu\n", "num_queries", report.num_queries);
    out << buf;
    std::snprintf(buf, sizeof buf, "%-14s  %.6f\n", "knn_accuracy", report.knn_accuracy);
    out << buf;
    std::snprintf(buf, sizeof buf, "%-14s  %.6f\n", "map", report.map);
    out << buf;
    return out.str();
}

inline std::string iso8601_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace triphash
