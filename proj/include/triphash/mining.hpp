#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "losses.hpp"
#include "matrix.hpp"
#include "random.hpp"

namespace triphash {

/// One epoch of balanced mini-batches: every batch holds exactly
/// classes_per_batch distinct labels with samples_per_class rows each.
struct BatchPlan {
    std::vector<std::vector<std::size_t>> batches; // dataset row indices
    std::size_t classes_per_batch = 0;
    std::size_t samples_per_class = 0;
};

/// Shuffles classes, chunks them into groups of classes_per_batch, and walks
/// each group in batches until every member class has consumed its shuffled
/// index queue. A class whose queue runs short is topped up by resampling its
/// own indices with replacement. A trailing group smaller than
/// classes_per_batch is dropped for that epoch.
inline BatchPlan balanced_batches(std::span<const std::uint32_t> labels, std::size_t classes_per_batch,
                                  std::size_t samples_per_class, std::uint64_t seed) {
    if (classes_per_batch < 1 || samples_per_class < 1)
        throw std::invalid_argument("balanced_batches: batch shape must be positive");
    std::uint32_t num_classes = 0;
    for (std::uint32_t label : labels) num_classes = std::max(num_classes, label + 1);
    if (classes_per_batch > num_classes)
        throw std::invalid_argument("balanced_batches: classes_per_batch exceeds class count");

    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (std::uint32_t c = 0; c < num_classes; ++c)
        if (by_class[c].empty())
            throw std::invalid_argument("balanced_batches: class " + std::to_string(c) +
                                        " has no samples");

    Rng rng(seed);
    std::vector<std::vector<std::size_t>> queues = by_class;
    for (auto& queue : queues) rng.shuffle(queue);
    std::vector<std::uint32_t> class_order(num_classes);
    for (std::uint32_t c = 0; c < num_classes; ++c) class_order[c] = c;
    rng.shuffle(class_order);

    BatchPlan plan;
    plan.classes_per_batch = classes_per_batch;
    plan.samples_per_class = samples_per_class;

    std::vector<std::size_t> cursor(num_classes, 0);
    for (std::size_t g = 0; g + classes_per_batch <= num_classes; g += classes_per_batch) {
        std::size_t group_batches = 0;
        for (std::size_t m = 0; m < classes_per_batch; ++m) {
            const std::size_t count = by_class[class_order[g + m]].size();
            group_batches = std::max(group_batches, (count + samples_per_class - 1) / samples_per_class);
        }
        for (std::size_t b = 0; b < group_batches; ++b) {
            std::vector<std::size_t> batch;
            batch.reserve(classes_per_batch * samples_per_class);
            for (std::size_t m = 0; m < classes_per_batch; ++m) {
                const std::uint32_t c = class_order[g + m];
                for (std::size_t s = 0; s < samples_per_class; ++s) {
                    if (cursor[c] < queues[c].size())
                        batch.push_back(queues[c][cursor[c]++]);
                    else
                        batch.push_back(by_class[c][rng.next_below(by_class[c].size())]);
                }
            }
            plan.batches.push_back(std::move(batch));
        }
    }
    return plan;
}

/// All (a, p, n) with label(a) == label(p), a != p, label(n) != label(a),
/// in ascending lexicographic order. Exhaustive; used as the mining oracle.
inline TripletSet enumerate_valid_triplets(std::span<const std::uint32_t> labels) {
    TripletSet set;
    const std::size_t b = labels.size();
    for (std::size_t a = 0; a < b; ++a)
        for (std::size_t p = 0; p < b; ++p) {
            if (p == a || labels[p] != labels[a]) continue;
            for (std::size_t n = 0; n < b; ++n)
                if (labels[n] != labels[a]) set.triples.push_back({a, p, n});
        }
    return set;
}

enum class SelectorKind { SemiHard, Hardest, RandomNegative };

inline const char* to_string(SelectorKind kind) {
    switch (kind) {
        case SelectorKind::SemiHard: return "semi_hard";
        case SelectorKind::Hardest: return "hardest";
        case SelectorKind::RandomNegative: return "random_negative";
    }
    return "?";
}

namespace detail {

template <typename PickFn>
TripletSet select_per_pair(std::span<const std::uint32_t> labels, PickFn&& pick) {
    TripletSet set;
    const std::size_t b = labels.size();
    for (std::size_t a = 0; a < b; ++a)
        for (std::size_t p = 0; p < b; ++p) {
            if (p == a || labels[p] != labels[a]) continue;
            if (auto n = pick(a, p)) set.triples.push_back({a, p, *n});
        }
    return set;
}

} // namespace detail

/// Per anchor-positive pair: a uniformly random negative whose triplet loss
/// lies strictly inside (0, alpha); if none exists, a uniformly random
/// negative with positive loss; if none, the pair is skipped.
inline TripletSet select_semi_hard(const Matrix& dists, std::span<const std::uint32_t> labels,
                                   double alpha, Rng& rng) {
    std::vector<std::size_t> window, positive;
    return detail::select_per_pair(labels, [&](std::size_t a, std::size_t p) {
        window.clear();
        positive.clear();
        for (std::size_t n = 0; n < labels.size(); ++n) {
            if (labels[n] == labels[a]) continue;
            const double loss = dists(a, p) - dists(a, n) + alpha;
            if (loss > 0.0) {
                positive.push_back(n);
                if (loss < alpha) window.push_back(n);
            }
        }
        const auto& pool = window.empty() ? positive : window;
        if (pool.empty()) return std::optional<std::size_t>{};
        return std::optional<std::size_t>{pool[rng.next_below(pool.size())]};
    });
}

/// Per anchor-positive pair: the negative with maximum triplet loss
/// (equivalently minimum anchor-negative distance), ties to the smallest
/// index. Pairs whose best loss is not positive are skipped.
inline TripletSet select_hardest(const Matrix& dists, std::span<const std::uint32_t> labels,
                                 double alpha) {
    return detail::select_per_pair(labels, [&](std::size_t a, std::size_t p) {
        std::optional<std::size_t> best;
        double best_loss = 0.0;
        for (std::size_t n = 0; n < labels.size(); ++n) {
            if (labels[n] == labels[a]) continue;
            const double loss = dists(a, p) - dists(a, n) + alpha;
            if (loss > 0.0 && (!best || loss > best_loss)) {
                best = n;
                best_loss = loss;
            }
        }
        return best;
    });
}

/// Per anchor-positive pair: a uniformly random negative with positive loss.
inline TripletSet select_random_negative(const Matrix& dists, std::span<const std::uint32_t> labels,
                                         double alpha, Rng& rng) {
    std::vector<std::size_t> positive;
    return detail::select_per_pair(labels, [&](std::size_t a, std::size_t p) {
        positive.clear();
        for (std::size_t n = 0; n < labels.size(); ++n) {
            if (labels[n] == labels[a]) continue;
            if (dists(a, p) - dists(a, n) + alpha > 0.0) positive.push_back(n);
        }
        if (positive.empty()) return std::optional<std::size_t>{};
        return std::optional<std::size_t>{positive[rng.next_below(positive.size())]};
    });
}

inline TripletSet select_triplets(SelectorKind kind, const Matrix& dists,
                                  std::span<const std::uint32_t> labels, double alpha, Rng& rng) {
    switch (kind) {
        case SelectorKind::SemiHard: return select_semi_hard(dists, labels, alpha, rng);
        case SelectorKind::Hardest: return select_hardest(dists, labels, alpha);
        case SelectorKind::RandomNegative: return select_random_negative(dists, labels, alpha, rng);
    }
    throw std::invalid_argument("unknown selector");
}

} // namespace triphash
