#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "fslasso/basis.hpp"
#include "fslasso/types.hpp"

namespace fslasso {

/// Per-subject FPC scores: Y_scores(n, k) = <Y_n - mu, phi_k>.
template <class Scalar>
struct ScoreMatrix {
    Mat<Scalar> Y_scores;
};

using ScoreMatrixd = ScoreMatrix<double>;

/// Truncated FPCA basis expressed in the pre-smoothing basis.
///
/// Eigenfunctions phi_k(t) = sum_j eigen_coefs(j, k) e_j(t) are orthonormal in the
/// L2 inner product induced by `metric` (phi^T G phi = I); eigenvalues are the
/// per-component score variances, nonincreasing.
template <class Scalar>
struct FpcaModel {
    Vec<Scalar> mean_coefs;
    Mat<Scalar> eigen_coefs;
    Vec<Scalar> eigenvalues;
    Scalar fve = 0;
    BasisSpec<Scalar> presmooth_spec;
    Scalar ridge = 0;
    Mat<Scalar> metric;

    Index components() const { return eigenvalues.size(); }
};

using FpcaModeld = FpcaModel<double>;

inline constexpr double kDefaultFveTarget = 0.99;
inline constexpr Index kMaxComponents = 10;
inline constexpr double kDefaultPresmoothRidge = 1e-3;

/// Ridge-regularized basis coefficients per subject:
/// row n = (E_n^T E_n + ridge I)^{-1} E_n^T Y_n.
template <class Scalar>
Mat<Scalar> presmooth(const ObservationSet<Scalar>& obs, const BasisSpec<Scalar>& spec,
                      Scalar ridge)
{
    obs.validate();
    spec.validate();
    require(ridge >= Scalar(0), "presmooth: ridge must be nonnegative");

    const Index N = obs.size();
    Mat<Scalar> coefs(N, spec.J);
    for (Index n = 0; n < N; ++n) {
        const auto bm = eval_matrix(spec, obs.subjects[n].times);
        Mat<Scalar> normal = bm.E.transpose() * bm.E;
        if (ridge == Scalar(0)) {
            Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(normal);
            const Scalar lo = es.eigenvalues().minCoeff();
            const Scalar hi = es.eigenvalues().maxCoeff();
            if (bm.E.rows() < spec.J || lo <= Scalar(1e-12) * std::max(hi, Scalar(1)))
                throw numeric_error(
                    "presmooth: singular normal equations for subject " + std::to_string(n) +
                    "; pass a positive ridge");
        } else {
            normal.diagonal().array() += ridge;
        }
        coefs.row(n) =
            normal.ldlt().solve(bm.E.transpose() * obs.subjects[n].values).transpose();
    }
    return coefs;
}

/// Eigendecompose the sample covariance of basis coefficients in the metric of
/// `gram`, keeping the smallest component count whose cumulative eigenvalue
/// fraction reaches fve_target (capped at max_components).
template <class Scalar>
FpcaModel<Scalar> fit_fpca(const Mat<Scalar>& coefs, const GramMatrix<Scalar>& gram,
                           Scalar fve_target, Index max_components = kMaxComponents)
{
    const Index N = coefs.rows();
    const Index J = coefs.cols();
    if (N < 2) throw numeric_error("fit_fpca: need at least 2 subjects");
    require(fve_target > Scalar(0) && fve_target <= Scalar(1),
            "fit_fpca: fve_target must be in (0, 1]");
    require(gram.F.rows() == J && gram.F.cols() == J,
            "fit_fpca: gram dimension does not match coefficients");

    FpcaModel<Scalar> model;
    model.mean_coefs = coefs.colwise().mean().transpose();
    Mat<Scalar> centered = coefs.rowwise() - model.mean_coefs.transpose();
    Mat<Scalar> cov = centered.transpose() * centered / Scalar(N - 1);

    // Symmetrize the G-metric problem via G^{1/2}.
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> gram_es(gram.F);
    Vec<Scalar> gvals = gram_es.eigenvalues().cwiseMax(Scalar(0));
    Mat<Scalar> G_half = gram_es.eigenvectors() * gvals.cwiseSqrt().asDiagonal() *
                         gram_es.eigenvectors().transpose();
    const Scalar gmax = gvals.maxCoeff();
    Vec<Scalar> ginv_sqrt(J);
    for (Index j = 0; j < J; ++j)
        ginv_sqrt[j] = gvals[j] > Scalar(1e-12) * gmax ? Scalar(1) / std::sqrt(gvals[j])
                                                       : Scalar(0);
    Mat<Scalar> G_half_inv =
        gram_es.eigenvectors() * ginv_sqrt.asDiagonal() * gram_es.eigenvectors().transpose();

    Mat<Scalar> M = G_half * cov * G_half;
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es((M + M.transpose()) / Scalar(2));

    // Eigen returns ascending order; flip to nonincreasing and clamp noise.
    Vec<Scalar> all_vals = es.eigenvalues().reverse().cwiseMax(Scalar(0));
    Mat<Scalar> all_vecs = es.eigenvectors().rowwise().reverse();
    const Scalar total = all_vals.sum();

    Index m_pc = 1;
    if (total > Scalar(0)) {
        Scalar cum = 0;
        for (Index k = 0; k < all_vals.size(); ++k) {
            cum += all_vals[k];
            m_pc = k + 1;
            if (cum >= fve_target * total) break;
        }
    }
    m_pc = std::min(m_pc, max_components);

    model.eigenvalues = all_vals.head(m_pc);
    model.eigen_coefs = G_half_inv * all_vecs.leftCols(m_pc);
    model.fve = total > Scalar(0) ? all_vals.head(m_pc).sum() / total : Scalar(1);
    model.metric = gram.F;

    // Sign convention: first nonzero loading positive.
    for (Index k = 0; k < m_pc; ++k) {
        const Scalar scale = model.eigen_coefs.col(k).cwiseAbs().maxCoeff();
        for (Index j = 0; j < J; ++j) {
            const Scalar v = model.eigen_coefs(j, k);
            if (std::abs(v) > Scalar(1e-12) * std::max(scale, Scalar(1))) {
                if (v < Scalar(0)) model.eigen_coefs.col(k) = -model.eigen_coefs.col(k);
                break;
            }
        }
    }
    return model;
}

/// scores = (coefs - mean) G eigen_coefs.
template <class Scalar>
ScoreMatrix<Scalar> project_scores(const FpcaModel<Scalar>& model, const Mat<Scalar>& coefs)
{
    require(coefs.cols() == model.mean_coefs.size(),
            "project_scores: coefficient dimension mismatch");
    ScoreMatrix<Scalar> s;
    s.Y_scores = (coefs.rowwise() - model.mean_coefs.transpose()) * model.metric *
                 model.eigen_coefs;
    return s;
}

/// mu(t) + sum_k scores[k] phi_k(t).
template <class Scalar>
Scalar reconstruct(const FpcaModel<Scalar>& model, const Vec<Scalar>& scores, Scalar t)
{
    require(scores.size() == model.components(), "reconstruct: score dimension mismatch");
    const Vec<Scalar> e = eval_basis(model.presmooth_spec, t);
    return e.dot(model.mean_coefs + model.eigen_coefs * scores);
}

}  // namespace fslasso
