#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "fslasso/design.hpp"
#include "fslasso/rng.hpp"
#include "fslasso/tuning.hpp"
#include "fslasso/types.hpp"

namespace fslasso {

/// Stepwise ROC of a selection path after taking the upper envelope; the curve
/// is extended horizontally past its last point, so a path that never ranks
/// the remaining groups earns no credit for them.
template <class Scalar>
struct RocCurve {
    std::vector<std::pair<Scalar, Scalar>> points;  // (fpr, tpr), envelope
    Scalar auc = std::numeric_limits<Scalar>::quiet_NaN();
    bool undefined = false;

    /// Envelope value at a false-positive rate (linear between vertices).
    Scalar tpr_at(Scalar fpr) const
    {
        if (points.empty()) return Scalar(0);
        if (fpr <= points.front().first) return points.front().second;
        for (std::size_t k = 1; k < points.size(); ++k) {
            if (fpr <= points[k].first) {
                const auto& [f0, t0] = points[k - 1];
                const auto& [f1, t1] = points[k];
                if (f1 <= f0) return t1;
                const Scalar w = (fpr - f0) / (f1 - f0);
                return t0 + w * (t1 - t0);
            }
        }
        return points.back().second;
    }
};

using RocCurved = RocCurve<double>;

template <class Scalar>
RocCurve<Scalar> roc_from_path(const PathFit<Scalar>& path,
                               const std::vector<Index>& truth_support, Index group_count)
{
    RocCurve<Scalar> roc;
    if (truth_support.empty()) {
        roc.undefined = true;
        return roc;
    }
    const Index positives = static_cast<Index>(truth_support.size());
    const Index negatives = group_count - positives;

    std::vector<char> is_true(static_cast<std::size_t>(group_count), 0);
    for (Index i : truth_support) is_true[static_cast<std::size_t>(i)] = 1;

    std::vector<std::pair<Scalar, Scalar>> raw;
    raw.emplace_back(Scalar(0), Scalar(0));
    for (const auto& f : path.fits) {
        Index tp = 0, fp = 0;
        for (Index i : f.B.active_set)
            (is_true[static_cast<std::size_t>(i)] ? tp : fp)++;
        const Scalar fpr = negatives > 0 ? Scalar(fp) / Scalar(negatives) : Scalar(0);
        const Scalar tpr = Scalar(tp) / Scalar(positives);
        raw.emplace_back(fpr, tpr);
    }

    std::sort(raw.begin(), raw.end());
    Scalar best = 0;
    for (auto& [fpr, tpr] : raw) {
        best = std::max(best, tpr);
        tpr = best;
    }
    // collapse duplicate fpr values to their max tpr
    for (const auto& p : raw) {
        if (!roc.points.empty() && roc.points.back().first == p.first)
            roc.points.back().second = std::max(roc.points.back().second, p.second);
        else
            roc.points.push_back(p);
    }

    Scalar auc = 0;
    for (std::size_t k = 1; k < roc.points.size(); ++k) {
        const auto& [f0, t0] = roc.points[k - 1];
        const auto& [f1, t1] = roc.points[k];
        auc += (f1 - f0) * (t0 + t1) / Scalar(2);
    }
    auc += (Scalar(1) - roc.points.back().first) * roc.points.back().second;
    roc.auc = auc;
    return roc;
}

/// Monte-Carlo probe of the grouped restricted eigenvalue constant: the min of
/// ||A vec(W^T)||^2 / (N ||W||_F^2) over sampled members of the cone
/// ||W_{S^c}|| <= 3 ||W_S||. An upper estimate of the true constant.
template <class Scalar>
struct ReDiagnostic {
    Scalar alpha_hat = std::numeric_limits<Scalar>::infinity();
    Index samples = 0;
    Index I0 = 0;
    Scalar cone_factor = 3;
};

using ReDiagnosticd = ReDiagnostic<double>;

template <class Scalar>
ReDiagnostic<Scalar> re_diagnostic(const GroupDesign<Scalar>& design, Index I0,
                                   Index samples, Rng& rng)
{
    require(samples >= 1, "re_diagnostic: need at least one sample");
    require(I0 >= 1 && I0 <= design.group_count(), "re_diagnostic: bad I0");
    const Index I = design.group_count();
    const Index J = design.group_dim();

    ReDiagnostic<Scalar> diag;
    diag.samples = samples;
    diag.I0 = I0;

    std::vector<Index> perm(static_cast<std::size_t>(I));
    Mat<Scalar> W(I, J);
    for (Index s = 0; s < samples; ++s) {
        for (Index i = 0; i < I; ++i) perm[static_cast<std::size_t>(i)] = i;
        for (Index i = 0; i < I0; ++i) {
            const Index j =
                i + static_cast<Index>(rng.next_u64() % std::uint64_t(I - i));
            std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
        }

        W.setZero();
        Scalar support_norm = 0;
        for (Index k = 0; k < I0; ++k) {
            const Index row = perm[static_cast<std::size_t>(k)];
            for (Index j = 0; j < J; ++j) W(row, j) = Scalar(rng.normal());
            support_norm += W.row(row).norm();
        }

        if (I0 < I) {
            Scalar off_norm = 0;
            for (Index k = I0; k < I; ++k) {
                const Index row = perm[static_cast<std::size_t>(k)];
                for (Index j = 0; j < J; ++j) W(row, j) = Scalar(rng.normal());
                off_norm += W.row(row).norm();
            }
            const Scalar target =
                Scalar(rng.uniform()) * diag.cone_factor * support_norm;
            const Scalar scale = off_norm > Scalar(0) ? target / off_norm : Scalar(0);
            for (Index k = I0; k < I; ++k)
                W.row(perm[static_cast<std::size_t>(k)]) *= scale;
        }

        const Scalar denom = Scalar(design.subjects()) * W.squaredNorm();
        if (denom <= Scalar(0)) continue;
        const Scalar ratio = design.apply(W).squaredNorm() / denom;
        diag.alpha_hat = std::min(diag.alpha_hat, ratio);
    }
    return diag;
}

/// Theory-scale penalty for the sparse regime:
/// 2 sqrt(N ||F||_op) (||T||_2 + sqrt(max_n ||Sigma_n||_op (2J + 3 log(2I/delta)))).
/// A diagnostic suggester, not the practical selector.
template <class Scalar>
Scalar suggest_lambda_sparse(Index N, Scalar gram_op_norm, Scalar truncation_norm,
                             Scalar max_sigma_op, Index J, Index I,
                             Scalar delta = Scalar(0.05))
{
    require(N >= 1 && J >= 1 && I >= 1, "suggest_lambda_sparse: bad dimensions");
    require(gram_op_norm > Scalar(0), "suggest_lambda_sparse: gram norm must be positive");
    require(truncation_norm >= Scalar(0),
            "suggest_lambda_sparse: truncation norm must be nonnegative");
    if (max_sigma_op <= Scalar(0))
        throw std::invalid_argument("suggest_lambda_sparse: variance estimate must be positive");
    require(delta > Scalar(0) && Scalar(2 * I) / delta >= Scalar(1),
            "suggest_lambda_sparse: need delta > 0 with 2I/delta >= 1");
    const Scalar tail = Scalar(2 * J) + Scalar(3) * std::log(Scalar(2 * I) / delta);
    return Scalar(2) * std::sqrt(Scalar(N) * gram_op_norm) *
           (truncation_norm + std::sqrt(max_sigma_op * tail));
}

/// Theory-scale penalty for the dense regime:
/// 2 sqrt(N) sqrt(||L||_1 + 2 ||L||_2 sqrt(log(I/delta)) + 2 ||L||_inf log(I/delta)).
template <class Scalar>
Scalar suggest_lambda_dense(const Vec<Scalar>& eigenvalues, Index N, Index I,
                            Scalar delta = Scalar(0.05))
{
    require(eigenvalues.size() > 0, "suggest_lambda_dense: empty eigenvalue vector");
    require(N >= 1 && I >= 1, "suggest_lambda_dense: bad dimensions");
    require(delta > Scalar(0) && Scalar(I) / delta >= Scalar(1),
            "suggest_lambda_dense: need delta > 0 with I/delta >= 1");
    for (Index k = 0; k < eigenvalues.size(); ++k) {
        require(eigenvalues[k] >= Scalar(0), "suggest_lambda_dense: negative eigenvalue");
        if (k > 0)
            require(eigenvalues[k] <= eigenvalues[k - 1] + Scalar(1e-12),
                    "suggest_lambda_dense: eigenvalues must be nonincreasing");
    }
    const Scalar t = std::log(Scalar(I) / delta);
    const Scalar l1 = eigenvalues.sum();
    const Scalar l2 = eigenvalues.norm();
    const Scalar linf = eigenvalues[0];
    return Scalar(2) * std::sqrt(Scalar(N)) *
           std::sqrt(l1 + 2 * l2 * std::sqrt(t) + 2 * linf * t);
}

}  // namespace fslasso
