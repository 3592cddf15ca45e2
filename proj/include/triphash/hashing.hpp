#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "matrix.hpp"

namespace triphash {

/// Sign codes in {-1,+1}^nbits packed 64 per word, row-major. Bit j of a row
/// lives in word[j / 64] at position j % 64; +1 maps to 1, -1 to 0. Unused
/// high bits of the trailing word are zero.
struct PackedCodes {
    std::size_t n = 0;
    std::uint32_t nbits = 0;
    std::vector<std::uint64_t> words;

    std::size_t words_per_row() const { return (static_cast<std::size_t>(nbits) + 63) / 64; }

    std::span<const std::uint64_t> row(std::size_t i) const {
        return {words.data() + i * words_per_row(), words_per_row()};
    }

    void validate() const {
        if (words.size() != n * words_per_row())
            throw std::invalid_argument("packed codes: word count does not match n and nbits");
        const std::uint32_t tail_bits = nbits % 64;
        if (tail_bits != 0 && words_per_row() > 0) {
            const std::uint64_t tail_mask = ~((1ULL << tail_bits) - 1);
            for (std::size_t i = 0; i < n; ++i)
                if (words[(i + 1) * words_per_row() - 1] & tail_mask)
                    throw std::invalid_argument("packed codes: unused high bits set in row " +
                                                std::to_string(i));
        }
    }

    bool operator==(const PackedCodes&) const = default;
};

/// Elementwise sign with sign(0) = +1.
inline Matrix binarize(const Matrix& u) {
    Matrix signs(u.rows(), u.cols());
    for (std::size_t i = 0; i < u.size(); ++i)
        signs.data()[i] = u.data()[i] >= 0.0 ? 1.0 : -1.0;
    return signs;
}

inline PackedCodes pack(const Matrix& signs) {
    PackedCodes codes;
    codes.n = signs.rows();
    codes.nbits = static_cast<std::uint32_t>(signs.cols());
    codes.words.assign(codes.n * codes.words_per_row(), 0);
    for (std::size_t i = 0; i < signs.rows(); ++i) {
        std::uint64_t* row = codes.words.data() + i * codes.words_per_row();
        for (std::size_t j = 0; j < signs.cols(); ++j) {
            const double v = signs(i, j);
            if (v == 1.0)
                row[j / 64] |= 1ULL << (j % 64);
            else if (v != -1.0)
                throw std::invalid_argument("pack: entries must be exactly -1 or +1");
        }
    }
    return codes;
}

inline Matrix unpack(const PackedCodes& codes) {
    codes.validate();
    Matrix signs(codes.n, codes.nbits);
    for (std::size_t i = 0; i < codes.n; ++i) {
        const std::uint64_t* row = codes.words.data() + i * codes.words_per_row();
        for (std::size_t j = 0; j < codes.nbits; ++j)
            signs(i, j) = (row[j / 64] >> (j % 64)) & 1 ? 1.0 : -1.0;
    }
    return signs;
}

inline int hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    int dist = 0;
    for (std::size_t w = 0; w < a.size(); ++w)
        dist += std::popcount(a[w] ^ b[w]);
    return dist;
}

inline int hamming(const PackedCodes& codes, std::size_t i, std::size_t j) {
    return hamming(codes.row(i), codes.row(j));
}

/// Half inner product of two sign codes: nbits/2 - hamming.
inline double theta(const PackedCodes& codes, std::size_t i, std::size_t j) {
    return 0.5 * (static_cast<double>(codes.nbits) - 2.0 * hamming(codes, i, j));
}

struct SearchHit {
    std::size_t row;
    int distance;
};

/// Immutable code database searched by exact popcount scan. Distances are
/// bounded by nbits, so ranking uses counting buckets: ascending distance,
/// ties in ascending row order.
class HammingIndex {
public:
    HammingIndex() = default;

    HammingIndex(PackedCodes codes, std::vector<std::uint32_t> labels)
        : codes_(std::move(codes)), labels_(std::move(labels)) {
        codes_.validate();
        if (labels_.size() != codes_.n)
            throw std::invalid_argument("hamming index: label count does not match code count");
    }

    std::size_t size() const { return codes_.n; }
    std::uint32_t nbits() const { return codes_.nbits; }
    const PackedCodes& codes() const { return codes_; }
    const std::vector<std::uint32_t>& labels() const { return labels_; }
    std::uint32_t label(std::size_t row) const { return labels_[row]; }

    /// Top-k rows by (distance, row). Returns min(k, n) hits.
    std::vector<SearchHit> search(std::span<const std::uint64_t> query, std::uint32_t query_nbits,
                                  std::size_t k) const {
        check_query(query, query_nbits);
        if (k < 1) throw std::invalid_argument("search: k must be >= 1");
        auto buckets = bucket_distances(query);
        std::vector<SearchHit> hits;
        hits.reserve(std::min(k, codes_.n));
        for (int d = 0; d <= static_cast<int>(codes_.nbits) && hits.size() < k; ++d)
            for (std::size_t row : buckets[static_cast<std::size_t>(d)]) {
                hits.push_back({row, d});
                if (hits.size() == k) break;
            }
        return hits;
    }

    /// Full ranking of every database row by (distance, row).
    std::vector<SearchHit> rank_all(std::span<const std::uint64_t> query,
                                    std::uint32_t query_nbits) const {
        check_query(query, query_nbits);
        auto buckets = bucket_distances(query);
        std::vector<SearchHit> hits;
        hits.reserve(codes_.n);
        for (int d = 0; d <= static_cast<int>(codes_.nbits); ++d)
            for (std::size_t row : buckets[static_cast<std::size_t>(d)])
                hits.push_back({row, d});
        return hits;
    }

private:
    void check_query(std::span<const std::uint64_t> query, std::uint32_t query_nbits) const {
        if (query_nbits != codes_.nbits)
            throw std::invalid_argument("search: query has " + std::to_string(query_nbits) +
                                        " bits, index has " + std::to_string(codes_.nbits));
        if (query.size() != codes_.words_per_row())
            throw std::invalid_argument("search: query word count mismatch");
    }

    std::vector<std::vector<std::size_t>> bucket_distances(
        std::span<const std::uint64_t> query) const {
        std::vector<std::vector<std::size_t>> buckets(codes_.nbits + 1);
        const std::size_t wpr = codes_.words_per_row();
        for (std::size_t row = 0; row < codes_.n; ++row) {
            int d = 0;
            const std::uint64_t* r = codes_.words.data() + row * wpr;
            for (std::size_t w = 0; w < wpr; ++w)
                d += std::popcount(r[w] ^ query[w]);
            buckets[static_cast<std::size_t>(d)].push_back(row);
        }
        return buckets;
    }

    PackedCodes codes_;
    std::vector<std::uint32_t> labels_;
};

inline HammingIndex build_index(PackedCodes codes, std::vector<std::uint32_t> labels) {
    return HammingIndex(std::move(codes), std::move(labels));
}

} // namespace triphash
