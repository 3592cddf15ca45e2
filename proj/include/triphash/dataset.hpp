#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "matrix.hpp"
#include "random.hpp"

namespace triphash {

/// Feature matrix plus dense integer class labels in [0, num_classes).
struct Dataset {
    MatrixF features;                  // n x dim
    std::vector<std::uint32_t> labels; // n
    std::uint32_t num_classes = 0;

    std::size_t n() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }

    void validate() const {
        if (features.rows() != labels.size())
            throw std::invalid_argument("dataset: feature rows != label count");
        for (std::uint32_t label : labels)
            if (label >= num_classes)
                throw std::invalid_argument("dataset: label " + std::to_string(label) +
                                            " out of range [0, " + std::to_string(num_classes) + ")");
        for (std::size_t i = 0; i < features.size(); ++i)
            if (!std::isfinite(features.data()[i]))
                throw std::invalid_argument("dataset: non-finite feature value");
    }
};

/// Gaussian mixture for synthetic datasets: class centers drawn from
/// N(0, center_scale^2 I), samples from N(center, noise_sigma^2 I).
struct BlobSpec {
    std::uint32_t classes = 10;
    std::size_t dim = 64;
    std::size_t samples_per_class = 200;
    double center_scale = 1.0;
    double noise_sigma = 1.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (classes < 2) throw std::invalid_argument("blobs: classes must be >= 2");
        if (dim < 1) throw std::invalid_argument("blobs: dim must be >= 1");
        if (samples_per_class < 1) throw std::invalid_argument("blobs: samples_per_class must be >= 1");
        if (!(center_scale > 0.0)) throw std::invalid_argument("blobs: center_scale must be > 0");
        if (!(noise_sigma > 0.0)) throw std::invalid_argument("blobs: noise_sigma must be > 0");
    }
};

struct BlobResult {
    Dataset data;
    Matrix centers; // classes x dim, the means the samples were drawn around
};

/// Pure function of the spec: the same spec always yields the same bytes.
inline BlobResult generate_blobs_with_centers(const BlobSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    BlobResult out;
    out.centers = Matrix(spec.classes, spec.dim);
    for (std::size_t c = 0; c < spec.classes; ++c)
        for (std::size_t j = 0; j < spec.dim; ++j)
            out.centers(c, j) = spec.center_scale * rng.next_normal();

    const std::size_t n = static_cast<std::size_t>(spec.classes) * spec.samples_per_class;
    out.data.features = MatrixF(n, spec.dim);
    out.data.labels.reserve(n);
    out.data.num_classes = spec.classes;

    std::size_t row = 0;
    for (std::uint32_t c = 0; c < spec.classes; ++c) {
        for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++row) {
            for (std::size_t j = 0; j < spec.dim; ++j)
                out.data.features(row, j) =
                    static_cast<float>(out.centers(c, j) + spec.noise_sigma * rng.next_normal());
            out.data.labels.push_back(c);
        }
    }
    return out;
}

inline Dataset generate_blobs(const BlobSpec& spec) {
    return generate_blobs_with_centers(spec).data;
}

struct SplitResult {
    Dataset train;
    Dataset test;
};

/// Stratified split: per class, round(test_fraction * count) rows go to the
/// test side. Row order within each side follows the source dataset.
inline SplitResult split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("split: test_fraction must be in (0, 1)");
    ds.validate();

    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.n(); ++i)
        by_class[ds.labels[i]].push_back(i);

    std::vector<char> goes_to_test(ds.n(), 0);
    Rng rng(seed);
    for (std::uint32_t c = 0; c < ds.num_classes; ++c) {
        auto& idx = by_class[c];
        if (idx.size() < 2)
            throw std::invalid_argument("split: class " + std::to_string(c) +
                                        " has fewer than 2 samples");
        rng.shuffle(idx);
        const auto n_test = static_cast<std::size_t>(
            std::llround(test_fraction * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < n_test; ++i)
            goes_to_test[idx[i]] = 1;
    }

    SplitResult out;
    for (Dataset* part : {&out.train, &out.test})
        part->num_classes = ds.num_classes;

    std::size_t n_test = 0;
    for (char flag : goes_to_test) n_test += flag;
    out.train.features = MatrixF(ds.n() - n_test, ds.dim());
    out.test.features = MatrixF(n_test, ds.dim());

    std::size_t r_train = 0, r_test = 0;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        Dataset& part = goes_to_test[i] ? out.test : out.train;
        std::size_t& r = goes_to_test[i] ? r_test : r_train;
        for (std::size_t j = 0; j < ds.dim(); ++j)
            part.features(r, j) = ds.features(i, j);
        part.labels.push_back(ds.labels[i]);
        ++r;
    }
    return out;
}

} // namespace triphash
