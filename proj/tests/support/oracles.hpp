// Test-only reference implementations, kept independent of the library's
// solver path: a materialized-matrix objective, a Polyak target-level
// subgradient minimizer, and small random-instance generators.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "fslasso/design.hpp"
#include "fslasso/rng.hpp"
#include "fslasso/types.hpp"

namespace oracle {

using fslasso::Index;
using fslasso::Matd;
using fslasso::Vecd;

inline double objective_dense(const Matd& A, const Vecd& y, const Matd& B, double lambda)
{
    const Index I = B.rows(), J = B.cols();
    Vecd coef(I * J);
    for (Index i = 0; i < I; ++i) coef.segment(i * J, J) = B.row(i).transpose();
    double pen = 0;
    for (Index i = 0; i < I; ++i) pen += B.row(i).norm();
    return 0.5 * (y - A * coef).squaredNorm() + lambda * pen;
}

struct SubgradientResult {
    Matd B;
    double objective;
};

/// Subgradient descent on the full nonsmooth objective with Polyak-style
/// target-level steps (Goffin-Kiwiel): rho_k = (f(x) - f_target) / ||g||^2,
/// with the target tracking best-so-far minus a level that halves whenever
/// the method stalls. Converges to the optimum; no proximal machinery.
inline SubgradientResult subgradient_min(const Matd& A, const Vecd& y, double lambda,
                                         Index I, Index J, long iterations)
{
    Matd B = Matd::Zero(I, J);
    Matd best_B = B;
    double best = objective_dense(A, y, B, lambda);

    double level = std::max(best, 1.0) * 0.25;
    double checkpoint_best = best;
    const long checkpoint_every = 400;

    Vecd coef(I * J), r(y.size()), grad_vec(I * J);
    Matd G(I, J);
    for (long it = 0; it < iterations; ++it) {
        for (Index i = 0; i < I; ++i) coef.segment(i * J, J) = B.row(i).transpose();
        r = y - A * coef;
        double pen = 0;
        for (Index i = 0; i < I; ++i) pen += B.row(i).norm();
        const double fval = 0.5 * r.squaredNorm() + lambda * pen;

        if (fval < best) {
            best = fval;
            best_B = B;
        }

        // halve the level whenever a window fails to realize half of it
        if (it % checkpoint_every == checkpoint_every - 1) {
            if (checkpoint_best - best < 0.5 * level)
                level = std::max(0.5 * level, 1e-17 * std::max(1.0, best));
            checkpoint_best = best;
        }

        grad_vec = -(A.transpose() * r);
        G = Eigen::Map<const fslasso::RowMajorMat<double>>(grad_vec.data(), I, J);
        for (Index i = 0; i < I; ++i) {
            const double bnorm = B.row(i).norm();
            if (bnorm > 0)
                G.row(i) += lambda * B.row(i) / bnorm;
            else {
                // minimal-norm subgradient of the row penalty at zero
                const double gnorm = G.row(i).norm();
                if (gnorm > lambda)
                    G.row(i) *= (1.0 - lambda / gnorm);
                else
                    G.row(i).setZero();
            }
        }
        const double gsq = G.squaredNorm();
        if (gsq <= 1e-300) break;
        // Polyak step towards the target level, displacement capped for safety
        double step = (fval - (best - level)) / gsq;
        const double gnorm = std::sqrt(gsq);
        const double cap = std::max(1.0, best_B.norm());
        if (step * gnorm > cap) step = cap / gnorm;
        B -= step * G;
    }
    return {best_B, best};
}

struct TinyInstance {
    fslasso::GroupDesign<double> design;
    Matd A;  // materialized copy
    Vecd y;
    Index I = 0, J = 0;
};

/// Random explicit-sparse instance with N subjects, up to M observations each.
inline TinyInstance random_sparse_instance(fslasso::Rng& rng, Index N, Index I, Index J,
                                           Index M_max = 4)
{
    fslasso::ObservationSet<double> obs;
    std::vector<fslasso::BasisMatrix<double>> bases;
    obs.subjects.resize(static_cast<std::size_t>(N));
    for (Index n = 0; n < N; ++n) {
        const Index M = 1 + static_cast<Index>(rng.next_u64() % std::uint64_t(M_max));
        Vecd t(M), v(M);
        for (Index m = 0; m < M; ++m) {
            t[m] = rng.uniform();
            v[m] = rng.normal();
        }
        std::sort(t.data(), t.data() + M);
        obs.subjects[static_cast<std::size_t>(n)] = {t, v};
        fslasso::BasisMatrix<double> bm;
        bm.times = t;
        bm.E.resize(M, J);
        for (Index m = 0; m < M; ++m)
            for (Index j = 0; j < J; ++j) bm.E(m, j) = rng.normal();
        bases.push_back(std::move(bm));
    }
    Matd X(N, I);
    for (Index n = 0; n < N; ++n)
        for (Index i = 0; i < I; ++i) X(n, i) = rng.normal();

    TinyInstance inst;
    inst.design = fslasso::build_sparse_design(fslasso::make_design(X, false), bases, obs);
    inst.A = inst.design.materialize();
    inst.y = inst.design.response();
    inst.I = I;
    inst.J = J;
    return inst;
}

/// Random implicit-Kronecker instance.
inline TinyInstance random_dense_instance(fslasso::Rng& rng, Index N, Index I, Index J)
{
    Matd X(N, I), S(N, J);
    for (Index n = 0; n < N; ++n) {
        for (Index i = 0; i < I; ++i) X(n, i) = rng.normal();
        for (Index j = 0; j < J; ++j) S(n, j) = rng.normal();
    }
    TinyInstance inst;
    inst.design = fslasso::GroupDesign<double>::implicit_kronecker(
        fslasso::make_design(X, false), S);
    inst.A = inst.design.materialize();
    inst.y = inst.design.response();
    inst.I = I;
    inst.J = J;
    return inst;
}

}  // namespace oracle
