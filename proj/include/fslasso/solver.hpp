#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "fslasso/design.hpp"
#include "fslasso/types.hpp"

namespace fslasso {

/// Row-sparse coefficient matrix; active_set lists exactly the nonzero rows.
template <class Scalar>
struct CoefficientMatrix {
    Mat<Scalar> B;
    std::vector<Index> active_set;

    static CoefficientMatrix from_matrix(const Mat<Scalar>& B)
    {
        CoefficientMatrix c;
        c.B = B;
        c.recompute_active();
        return c;
    }

    void recompute_active()
    {
        active_set.clear();
        for (Index i = 0; i < B.rows(); ++i)
            if (B.row(i).squaredNorm() > Scalar(0)) active_set.push_back(i);
    }
};

using CoefficientMatrixd = CoefficientMatrix<double>;

enum class Algorithm { BlockCoordinateDescent, AcceleratedProximalGradient };

template <class Scalar>
struct SolverConfig {
    Algorithm algorithm = Algorithm::BlockCoordinateDescent;
    Index max_iters = 10000;
    Scalar rel_obj_tol = Scalar(1e-9);
    std::optional<Scalar> kkt_tol;  // defaults to 1e-6 * lambda_max(design)
    std::optional<Mat<Scalar>> warm_start;

    void validate() const
    {
        require(max_iters > 0, "SolverConfig: max_iters must be positive");
        require(rel_obj_tol > Scalar(0), "SolverConfig: rel_obj_tol must be positive");
        if (kkt_tol) require(*kkt_tol > Scalar(0), "SolverConfig: kkt_tol must be positive");
    }
};

using SolverConfigd = SolverConfig<double>;

template <class Scalar>
struct FitResult {
    CoefficientMatrix<Scalar> B;
    Scalar lambda = 0;
    Scalar objective = 0;
    Scalar kkt_residual = 0;
    Index iterations = 0;
    bool converged = false;
};

using FitResultd = FitResult<double>;

/// Proximal operator of t * ||.||_2: 0 if ||v|| <= t, else (1 - t/||v||) v.
template <class Scalar>
Vec<Scalar> group_soft_threshold(const Vec<Scalar>& v, Scalar t)
{
    require(t >= Scalar(0), "group_soft_threshold: threshold must be nonnegative");
    const Scalar norm = v.norm();
    if (norm <= t) return Vec<Scalar>::Zero(v.size());
    return (Scalar(1) - t / norm) * v;
}

template <class Scalar>
Scalar penalty_value(const Mat<Scalar>& B)
{
    Scalar p = 0;
    for (Index i = 0; i < B.rows(); ++i) p += B.row(i).norm();
    return p;
}

/// 0.5 ||y - A vec(B^T)||^2 + lambda ||B||_{l1/l2}.
template <class Scalar>
Scalar objective_value(const GroupDesign<Scalar>& design, const Mat<Scalar>& B,
                       Scalar lambda)
{
    return Scalar(0.5) * design.residual(B).squaredNorm() + lambda * penalty_value(B);
}

template <class Scalar>
Scalar objective_value(const GroupDesign<Scalar>& design,
                       const CoefficientMatrix<Scalar>& B, Scalar lambda)
{
    return objective_value(design, B.B, lambda);
}

/// max over i of the stationarity violation of the row-norm penalty:
/// active rows measure ||g_i - lambda B_i/||B_i||||, inactive rows
/// max(0, ||g_i|| - lambda), with g_i = A_i^T (y - A vec(B^T)).
template <class Scalar>
Scalar kkt_residual(const GroupDesign<Scalar>& design, const Mat<Scalar>& B, Scalar lambda)
{
    const Vec<Scalar> r = design.residual(B);
    const Mat<Scalar> G = design.all_group_gradients(r);
    Scalar worst = 0;
    for (Index i = 0; i < design.group_count(); ++i) {
        const Scalar bnorm = B.row(i).norm();
        Scalar v;
        if (bnorm > Scalar(0))
            v = (G.row(i) - (lambda / bnorm) * B.row(i)).norm();
        else
            v = std::max(Scalar(0), G.row(i).norm() - lambda);
        worst = std::max(worst, v);
    }
    return worst;
}

template <class Scalar>
Scalar kkt_residual(const GroupDesign<Scalar>& design, const CoefficientMatrix<Scalar>& B,
                    Scalar lambda)
{
    return kkt_residual(design, B.B, lambda);
}

namespace detail {

template <class Scalar>
Scalar resolve_kkt_tol(const GroupDesign<Scalar>& design, const SolverConfig<Scalar>& cfg)
{
    if (cfg.kkt_tol) return *cfg.kkt_tol;
    const Mat<Scalar> G = design.all_group_gradients(design.response());
    const Scalar lmax = G.rowwise().norm().maxCoeff();
    return Scalar(1e-6) * std::max(lmax, Scalar(1e-300));
}

template <class Scalar>
Mat<Scalar> initial_coefficients(const GroupDesign<Scalar>& design,
                                 const SolverConfig<Scalar>& cfg,
                                 const std::vector<Index>& keep)
{
    Mat<Scalar> B = Mat<Scalar>::Zero(design.group_count(), design.group_dim());
    if (cfg.warm_start) {
        require(cfg.warm_start->rows() == B.rows() && cfg.warm_start->cols() == B.cols(),
                "fit: warm start has wrong shape");
        std::vector<char> kept(static_cast<std::size_t>(design.group_count()), 0);
        for (Index i : keep) kept[static_cast<std::size_t>(i)] = 1;
        for (Index i = 0; i < B.rows(); ++i)
            if (kept[static_cast<std::size_t>(i)]) B.row(i) = cfg.warm_start->row(i);
    }
    return B;
}

template <class Scalar>
FitResult<Scalar> finalize(const GroupDesign<Scalar>& design, Mat<Scalar>&& B,
                           Scalar lambda, Index iterations, Scalar kkt_tol)
{
    FitResult<Scalar> out;
    out.B = CoefficientMatrix<Scalar>::from_matrix(B);
    out.lambda = lambda;
    out.objective = objective_value(design, out.B.B, lambda);
    out.kkt_residual = kkt_residual(design, out.B.B, lambda);
    out.iterations = iterations;
    out.converged = out.kkt_residual <= kkt_tol;
    if (!std::isfinite(out.objective))
        throw numeric_error("fit: non-finite objective (diverged or ill-conditioned)");
    return out;
}

template <class Scalar>
FitResult<Scalar> fit_bcd(const GroupDesign<Scalar>& design, Scalar lambda,
                          const SolverConfig<Scalar>& cfg, const std::vector<Index>& keep,
                          const Vec<Scalar>* op_norms, Scalar kkt_tol)
{
    const Index J = design.group_dim();
    Mat<Scalar> B = initial_coefficients(design, cfg, keep);
    Vec<Scalar> r = design.residual(B);

    Vec<Scalar> lipschitz(design.group_count());
    for (Index i : keep) {
        const Scalar op = op_norms ? (*op_norms)[i] : design.group_op_norm(i);
        lipschitz[i] = op * op;
    }

    Vec<Scalar> g(J), v(J), delta(J);
    const auto update_group = [&](Index i) {
        const Scalar L = lipschitz[i];
        if (L <= Scalar(0)) return;
        g = design.group_gradient(i, r);
        v = B.row(i).transpose() + g / L;
        const Scalar vnorm = v.norm();
        const Scalar thresh = lambda / L;
        if (vnorm <= thresh) {
            if (B.row(i).squaredNorm() > Scalar(0)) {
                delta = -B.row(i).transpose();
                design.accumulate_group(i, delta, Scalar(-1), r);
                B.row(i).setZero();
            }
            return;
        }
        const Scalar shrink = Scalar(1) - thresh / vnorm;
        delta = shrink * v - B.row(i).transpose();
        if (delta.squaredNorm() == Scalar(0)) return;
        design.accumulate_group(i, delta, Scalar(-1), r);
        B.row(i) = (shrink * v).transpose();
    };

    const auto current_objective = [&]() {
        return Scalar(0.5) * r.squaredNorm() + lambda * penalty_value(B);
    };

    Scalar obj = current_objective();
    if (!std::isfinite(obj)) throw numeric_error("fit: non-finite objective at start");
    Index sweeps = 0;
    std::vector<Index> active;
    active.reserve(keep.size());

    // Objective stall triggers a KKT certification; if the residual is still
    // above tolerance the stall threshold tightens and sweeping continues.
    Scalar stall_tol = cfg.rel_obj_tol;
    int dead_outer = 0;
    while (sweeps < cfg.max_iters) {
        const Scalar obj_before_full = obj;
        for (Index i : keep) update_group(i);
        ++sweeps;
        obj = current_objective();
        if (!std::isfinite(obj)) throw numeric_error("fit: objective diverged");
        const bool full_stalled =
            obj_before_full - obj <= stall_tol * std::max(std::abs(obj), Scalar(1));
        dead_outer = (obj_before_full == obj) ? dead_outer + 1 : 0;

        if (!full_stalled) {
            active.clear();
            for (Index i : keep)
                if (B.row(i).squaredNorm() > Scalar(0)) active.push_back(i);
            while (sweeps < cfg.max_iters && !active.empty()) {
                const Scalar obj_inner = obj;
                for (Index i : active) update_group(i);
                ++sweeps;
                obj = current_objective();
                if (!std::isfinite(obj)) throw numeric_error("fit: objective diverged");
                if (obj_inner - obj <= stall_tol * std::max(std::abs(obj), Scalar(1)))
                    break;
            }
            continue;
        }

        r = design.residual(B);  // refresh against incremental drift
        obj = current_objective();
        if (kkt_residual(design, B, lambda) <= kkt_tol) break;
        if (dead_outer >= 3) break;  // exact floating-point fixed point, not certified
        stall_tol = std::max(stall_tol * Scalar(0.01), Scalar(1e-16));
    }

    return finalize(design, std::move(B), lambda, sweeps, kkt_tol);
}

template <class Scalar>
FitResult<Scalar> fit_apg(const GroupDesign<Scalar>& design, Scalar lambda,
                          const SolverConfig<Scalar>& cfg, const std::vector<Index>& keep,
                          Scalar kkt_tol)
{
    const Index I = design.group_count();
    const Index J = design.group_dim();
    std::vector<char> kept(static_cast<std::size_t>(I), 0);
    for (Index i : keep) kept[static_cast<std::size_t>(i)] = 1;

    // Power iteration on A^T A for the global stepsize.
    Scalar L = 0;
    {
        Mat<Scalar> V = Mat<Scalar>::Ones(I, J);
        for (Index i = 0; i < I; ++i)
            if (!kept[static_cast<std::size_t>(i)]) V.row(i).setZero();
        if (V.norm() == Scalar(0)) V.setOnes();
        V /= V.norm();
        for (int it = 0; it < 200; ++it) {
            Mat<Scalar> W = design.all_group_gradients(design.apply(V));
            const Scalar norm = W.norm();
            if (norm == Scalar(0)) break;
            W /= norm;
            const Scalar next = (design.apply(W)).squaredNorm();
            const bool done = std::abs(next - L) <= Scalar(1e-9) * std::max(next, Scalar(1));
            L = next;
            V = W;
            if (done) break;
        }
        L = std::max(L, Scalar(1e-12)) * Scalar(1.01);
    }

    Mat<Scalar> B = initial_coefficients(design, cfg, keep);
    Mat<Scalar> Z = B;
    Scalar t = 1;
    Scalar obj = objective_value(design, B, lambda);
    if (!std::isfinite(obj)) throw numeric_error("fit: non-finite objective at start");
    Index iters = 0;

    const auto prox_step = [&](const Mat<Scalar>& from, Mat<Scalar>& out) {
        const Vec<Scalar> r = design.residual(from);
        const Mat<Scalar> G = design.all_group_gradients(r);
        out.setZero(I, J);
        for (Index i : keep) {
            const Vec<Scalar> v = from.row(i).transpose() + G.row(i).transpose() / L;
            out.row(i) = group_soft_threshold(v, lambda / L).transpose();
        }
    };

    Mat<Scalar> candidate(I, J);
    Scalar stall_tol = cfg.rel_obj_tol;
    int dead_iters = 0;
    while (iters < cfg.max_iters) {
        prox_step(Z, candidate);
        Scalar cand_obj = objective_value(design, candidate, lambda);
        ++iters;

        if (cand_obj > obj) {
            // Momentum restart; a plain step from B descends for valid L,
            // otherwise the stepsize estimate was too small.
            t = 1;
            prox_step(B, candidate);
            cand_obj = objective_value(design, candidate, lambda);
            int doublings = 0;
            while (cand_obj > obj && doublings < 60) {
                L *= 2;
                prox_step(B, candidate);
                cand_obj = objective_value(design, candidate, lambda);
                ++doublings;
            }
            if (cand_obj > obj)
                throw numeric_error("fit: accelerated proximal gradient cannot descend");
        }

        const Scalar t_next = Scalar(0.5) * (Scalar(1) + std::sqrt(Scalar(1) + 4 * t * t));
        Z = candidate + ((t - 1) / t_next) * (candidate - B);
        B = candidate;
        t = t_next;

        const Scalar drop = obj - cand_obj;
        obj = cand_obj;
        if (!std::isfinite(obj)) throw numeric_error("fit: objective diverged");
        dead_iters = (drop == Scalar(0)) ? dead_iters + 1 : 0;
        if (drop >= Scalar(0) &&
            drop <= stall_tol * std::max(std::abs(obj), Scalar(1))) {
            if (kkt_residual(design, B, lambda) <= kkt_tol) break;
            if (dead_iters >= 3) break;
            stall_tol = std::max(stall_tol * Scalar(0.01), Scalar(1e-16));
            t = 1;
            Z = B;  // restart momentum on the tightened phase
        }
    }

    return finalize(design, std::move(B), lambda, iters, kkt_tol);
}

}  // namespace detail

/// Solve with an explicit keep list (groups outside it are pinned to zero).
/// op_norms, when given, must hold ||A_i||_op for every group.
template <class Scalar>
FitResult<Scalar> fit(const GroupDesign<Scalar>& design, Scalar lambda,
                      const SolverConfig<Scalar>& config, const std::vector<Index>& keep,
                      const Vec<Scalar>* op_norms = nullptr,
                      std::optional<Scalar> kkt_tol_resolved = std::nullopt)
{
    config.validate();
    require(lambda >= Scalar(0), "fit: lambda must be nonnegative");
    const Scalar kkt_tol =
        kkt_tol_resolved ? *kkt_tol_resolved : detail::resolve_kkt_tol(design, config);
    if (config.algorithm == Algorithm::BlockCoordinateDescent)
        return detail::fit_bcd(design, lambda, config, keep, op_norms, kkt_tol);
    return detail::fit_apg(design, lambda, config, keep, kkt_tol);
}

template <class Scalar>
FitResult<Scalar> fit(const GroupDesign<Scalar>& design, Scalar lambda,
                      const SolverConfig<Scalar>& config = SolverConfig<Scalar>())
{
    std::vector<Index> keep(static_cast<std::size_t>(design.group_count()));
    for (Index i = 0; i < design.group_count(); ++i) keep[static_cast<std::size_t>(i)] = i;
    return fit(design, lambda, config, keep);
}

}  // namespace fslasso
