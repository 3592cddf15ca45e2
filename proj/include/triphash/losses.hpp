#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "matrix.hpp"

namespace triphash {

struct Triplet {
    std::size_t anchor;
    std::size_t positive;
    std::size_t negative;

    bool operator==(const Triplet&) const = default;
};

/// In-batch (anchor, positive, negative) row indices.
struct TripletSet {
    std::vector<Triplet> triples;

    std::size_t size() const { return triples.size(); }
    bool empty() const { return triples.empty(); }
};

enum class Reduction { Mean, Sum };

/// Overflow-safe log(1 + e^x).
inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

/// Overflow-safe logistic function.
inline double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Squared Euclidean distances between all row pairs: symmetric, zero
/// diagonal, tiny negative cancellation clamped to zero.
inline Matrix pairwise_sq_dists(const Matrix& u) {
    const std::size_t b = u.rows();
    std::vector<double> sq_norms(b, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < u.cols(); ++c) sq_norms[i] += u(i, c) * u(i, c);

    Matrix dists(b, b, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = i + 1; j < b; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < u.cols(); ++c) dot += u(i, c) * u(j, c);
            double d = sq_norms[i] + sq_norms[j] - 2.0 * dot;
            if (d < 0.0) d = 0.0; // cancellation noise; NaN/inf pass through untouched
            dists(i, j) = d;
            dists(j, i) = d;
        }
    return dists;
}

struct LossResult {
    double loss = 0.0;
    Matrix grad; // same shape as the embedding batch
};

namespace detail {

inline void check_triplets(const TripletSet& triplets, std::size_t batch) {
    for (const Triplet& t : triplets.triples)
        if (t.anchor >= batch || t.positive >= batch || t.negative >= batch)
            throw std::invalid_argument("triplet index out of range for batch");
}

} // namespace detail

/// Hinge loss on squared distances: mean over triplets of
/// max(0, ||u_a - u_p||^2 - ||u_a - u_n||^2 + alpha). The subgradient is zero
/// on inactive triplets; exactly at the kink the active branch is used.
inline LossResult triplet_margin_loss(const Matrix& u, const TripletSet& triplets, double alpha,
                                      Reduction reduction = Reduction::Mean) {
    detail::check_triplets(triplets, u.rows());
    LossResult result;
    result.grad = Matrix(u.rows(), u.cols());
    if (triplets.empty()) return result;

    const double scale =
        reduction == Reduction::Mean ? 1.0 / static_cast<double>(triplets.size()) : 1.0;
    for (const Triplet& t : triplets.triples) {
        double d_ap = 0.0, d_an = 0.0;
        for (std::size_t c = 0; c < u.cols(); ++c) {
            const double dp = u(t.anchor, c) - u(t.positive, c);
            const double dn = u(t.anchor, c) - u(t.negative, c);
            d_ap += dp * dp;
            d_an += dn * dn;
        }
        const double term = d_ap - d_an + alpha;
        if (term < 0.0) continue;
        result.loss += scale * term;
        for (std::size_t c = 0; c < u.cols(); ++c) {
            const double dp = u(t.anchor, c) - u(t.positive, c);
            const double dn = u(t.anchor, c) - u(t.negative, c);
            result.grad(t.anchor, c) += scale * 2.0 * (dp - dn);
            result.grad(t.positive, c) += scale * -2.0 * dp;
            result.grad(t.negative, c) += scale * 2.0 * dn;
        }
    }
    return result;
}

/// Negative log likelihood of the similarity gap: mean over triplets of
/// softplus(-(theta_qp - theta_qn - alpha)) with theta_ij = u_i . u_j / 2.
inline LossResult hash_likelihood_loss(const Matrix& u, const TripletSet& triplets, double alpha,
                                       Reduction reduction = Reduction::Mean) {
    detail::check_triplets(triplets, u.rows());
    LossResult result;
    result.grad = Matrix(u.rows(), u.cols());
    if (triplets.empty()) return result;

    const double scale =
        reduction == Reduction::Mean ? 1.0 / static_cast<double>(triplets.size()) : 1.0;
    for (const Triplet& t : triplets.triples) {
        double theta_qp = 0.0, theta_qn = 0.0;
        for (std::size_t c = 0; c < u.cols(); ++c) {
            theta_qp += u(t.anchor, c) * u(t.positive, c);
            theta_qn += u(t.anchor, c) * u(t.negative, c);
        }
        theta_qp *= 0.5;
        theta_qn *= 0.5;
        const double s = theta_qp - theta_qn - alpha;
        result.loss += scale * softplus(-s);
        const double w = scale * sigmoid(-s);
        for (std::size_t c = 0; c < u.cols(); ++c) {
            result.grad(t.anchor, c) += -w * 0.5 * (u(t.positive, c) - u(t.negative, c));
            result.grad(t.positive, c) += -w * 0.5 * u(t.anchor, c);
            result.grad(t.negative, c) += w * 0.5 * u(t.anchor, c);
        }
    }
    return result;
}

/// lambda-weighted gap between the embeddings and their sign codes,
/// mean over rows of ||sign(u_n) - u_n||^2 with the codes held constant.
inline LossResult quantization_penalty(const Matrix& u, double lambda,
                                       Reduction reduction = Reduction::Mean) {
    LossResult result;
    result.grad = Matrix(u.rows(), u.cols());
    if (u.rows() == 0) return result;

    const double scale =
        lambda * (reduction == Reduction::Mean ? 1.0 / static_cast<double>(u.rows()) : 1.0);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double v = u.data()[i];
        const double diff = (v >= 0.0 ? 1.0 : -1.0) - v;
        result.loss += scale * diff * diff;
        result.grad.data()[i] = scale * -2.0 * diff;
    }
    return result;
}

/// Central-difference check of any loss function returning (loss, grad).
/// Reports the max relative error with denominator max(|g|, 1e-8).
template <typename LossFn>
double grad_check(LossFn&& loss_fn, const Matrix& u, double h) {
    const Matrix analytic = loss_fn(u).grad;
    Matrix probe = u;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double saved = probe.data()[i];
        probe.data()[i] = saved + h;
        const double up = loss_fn(probe).loss;
        probe.data()[i] = saved - h;
        const double down = loss_fn(probe).loss;
        probe.data()[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom =
            std::max({std::abs(analytic.data()[i]), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(analytic.data()[i] - numeric) / denom);
    }
    return max_rel;
}

} // namespace triphash
