#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dataset.hpp"
#include "error.hpp"
#include "hashing.hpp"

namespace triphash {

// feat-bin: "FEAT", u32 LE version=1, u64 LE n, u32 LE d,
//           n*d f32 LE row-major features, n u32 LE labels.
// BCOD:     "BCOD", u32 LE version=1, u64 LE n, u32 LE nbits,
//           n*ceil(nbits/64) u64 LE words, n u32 LE labels.
// CSV:      one row per line, "label,f0,f1,...", no header.

enum class FeatureFormat { FeatBin, Csv };

namespace detail {

inline void put_u32le(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

inline void put_u64le(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 8);
}

inline std::uint32_t get_u32le(std::istream& in, const char* what) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) throw IoError(std::string("truncated file while reading ") + what);
    return std::uint32_t(bytes[0]) | (std::uint32_t(bytes[1]) << 8) |
           (std::uint32_t(bytes[2]) << 16) | (std::uint32_t(bytes[3]) << 24);
}

inline std::uint64_t get_u64le(std::istream& in, const char* what) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw IoError(std::string("truncated file while reading ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[i]) << (8 * i);
    return v;
}

inline void check_magic(std::istream& in, const char* expected, const std::string& path) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != expected)
        throw IoError(path + ": bad magic, expected " + expected);
}

inline std::ofstream open_out(const std::filesystem::path& path, bool binary) {
    std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

inline void expect_eof(std::istream& in, const std::string& path) {
    if (in.peek() != std::ifstream::traits_type::eof())
        throw IoError(path + ": trailing bytes after payload");
}

/// Labels must cover 0..C-1 with no gaps so per-class metrics are well defined.
inline std::uint32_t dense_class_count(const std::vector<std::uint32_t>& labels,
                                       const std::string& path) {
    std::uint32_t max_label = 0;
    for (std::uint32_t label : labels) max_label = std::max(max_label, label);
    if (labels.empty()) return 0;
    std::vector<char> seen(static_cast<std::size_t>(max_label) + 1, 0);
    for (std::uint32_t label : labels) seen[label] = 1;
    for (std::size_t c = 0; c < seen.size(); ++c)
        if (!seen[c])
            throw IoError(path + ": class " + std::to_string(c) +
                          " is absent; labels must be dense 0..C-1");
    return max_label + 1;
}

} // namespace detail

inline void write_features(const Dataset& ds, const std::filesystem::path& path,
                           FeatureFormat format) {
    ds.validate();
    if (format == FeatureFormat::FeatBin) {
        auto out = detail::open_out(path, true);
        out.write("FEAT", 4);
        detail::put_u32le(out, 1);
        detail::put_u64le(out, ds.n());
        detail::put_u32le(out, static_cast<std::uint32_t>(ds.dim()));
        for (std::size_t i = 0; i < ds.features.size(); ++i)
            detail::put_u32le(out, std::bit_cast<std::uint32_t>(ds.features.data()[i]));
        for (std::uint32_t label : ds.labels) detail::put_u32le(out, label);
        if (!out) throw IoError("write failed: " + path.string());
    } else {
        auto out = detail::open_out(path, false);
        char buf[64];
        for (std::size_t i = 0; i < ds.n(); ++i) {
            out << ds.labels[i];
            for (std::size_t j = 0; j < ds.dim(); ++j) {
                std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(ds.features(i, j)));
                out << ',' << buf;
            }
            out << '\n';
        }
        if (!out) throw IoError("write failed: " + path.string());
    }
}

inline Dataset read_features(const std::filesystem::path& path, FeatureFormat format) {
    Dataset ds;
    if (format == FeatureFormat::FeatBin) {
        auto in = detail::open_in(path, true);
        detail::check_magic(in, "FEAT", path.string());
        const std::uint32_t version = detail::get_u32le(in, "version");
        if (version != 1)
            throw IoError(path.string() + ": unsupported version " + std::to_string(version));
        const std::uint64_t n = detail::get_u64le(in, "row count");
        const std::uint32_t d = detail::get_u32le(in, "dimension");
        ds.features = MatrixF(n, d);
        for (std::size_t i = 0; i < ds.features.size(); ++i)
            ds.features.data()[i] = std::bit_cast<float>(detail::get_u32le(in, "feature payload"));
        ds.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) ds.labels[i] = detail::get_u32le(in, "label payload");
        detail::expect_eof(in, path.string());
    } else {
        auto in = detail::open_in(path, false);
        std::string line;
        std::size_t line_no = 0;
        std::size_t dim = 0;
        std::vector<float> row;
        std::vector<float> all;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            row.clear();
            const char* p = line.c_str();
            char* end = nullptr;
            const long long label = std::strtoll(p, &end, 10);
            if (end == p || *end != ',' || label < 0)
                throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad label field");
            p = end + 1;
            while (true) {
                const float v = std::strtof(p, &end);
                if (end == p)
                    throw IoError(path.string() + ":" + std::to_string(line_no) +
                                  ": non-numeric feature cell");
                row.push_back(v);
                if (*end == '\0' || *end == '\r') break;
                if (*end != ',')
                    throw IoError(path.string() + ":" + std::to_string(line_no) +
                                  ": non-numeric feature cell");
                p = end + 1;
            }
            if (dim == 0 && ds.labels.empty()) dim = row.size();
            if (row.size() != dim)
                throw IoError(path.string() + ":" + std::to_string(line_no) +
                              ": expected " + std::to_string(dim) + " features, got " +
                              std::to_string(row.size()));
            ds.labels.push_back(static_cast<std::uint32_t>(label));
            all.insert(all.end(), row.begin(), row.end());
        }
        ds.features = MatrixF(ds.labels.size(), dim);
        std::copy(all.begin(), all.end(), ds.features.data());
    }
    for (std::size_t i = 0; i < ds.features.size(); ++i)
        if (!std::isfinite(ds.features.data()[i]))
            throw IoError(path.string() + ": non-finite feature value");
    ds.num_classes = detail::dense_class_count(ds.labels, path.string());
    return ds;
}

inline void write_codes(const PackedCodes& codes, const std::vector<std::uint32_t>& labels,
                        const std::filesystem::path& path) {
    codes.validate();
    if (labels.size() != codes.n)
        throw std::invalid_argument("write_codes: label count does not match code count");
    auto out = detail::open_out(path, true);
    out.write("BCOD", 4);
    detail::put_u32le(out, 1);
    detail::put_u64le(out, codes.n);
    detail::put_u32le(out, codes.nbits);
    for (std::uint64_t word : codes.words) detail::put_u64le(out, word);
    for (std::uint32_t label : labels) detail::put_u32le(out, label);
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::pair<PackedCodes, std::vector<std::uint32_t>> read_codes(
    const std::filesystem::path& path) {
    auto in = detail::open_in(path, true);
    detail::check_magic(in, "BCOD", path.string());
    const std::uint32_t version = detail::get_u32le(in, "version");
    if (version != 1)
        throw IoError(path.string() + ": unsupported version " + std::to_string(version));
    PackedCodes codes;
    codes.n = detail::get_u64le(in, "row count");
    codes.nbits = detail::get_u32le(in, "nbits");
    codes.words.resize(codes.n * codes.words_per_row());
    for (auto& word : codes.words) word = detail::get_u64le(in, "code words");
    std::vector<std::uint32_t> labels(codes.n);
    for (auto& label : labels) label = detail::get_u32le(in, "label payload");
    detail::expect_eof(in, path.string());
    try {
        codes.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return {std::move(codes), std::move(labels)};
}

enum class FileKind { FeatBin, Bcod, Csv, Unknown };

/// Identifies a data file by magic bytes, falling back to the extension.
inline FileKind sniff_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    const std::string head(magic, static_cast<std::size_t>(in.gcount()));
    if (head == "FEAT") return FileKind::FeatBin;
    if (head == "BCOD") return FileKind::Bcod;
    if (path.extension() == ".csv") return FileKind::Csv;
    return FileKind::Unknown;
}

} // namespace triphash
