#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fslasso/design.hpp"
#include "fslasso/solver.hpp"
#include "fslasso/types.hpp"

namespace fslasso {

template <class Scalar>
struct ScreeningReport {
    Scalar lambda0 = 0;
    std::vector<Index> kept;
    std::vector<Index> dropped;
    Vec<Scalar> aty_norms;
    Vec<Scalar> frob_norms;
};

using ScreeningReportd = ScreeningReport<double>;

template <class Scalar>
struct PathFit {
    Vec<Scalar> lambdas;
    std::vector<FitResult<Scalar>> fits;
    Vec<Scalar> entry_lambda;  // first-activation lambda per group, +inf if never

    bool all_converged() const
    {
        for (const auto& f : fits)
            if (!f.converged) return false;
        return true;
    }
};

using PathFitd = PathFit<double>;

enum class CriterionKind { AIC, BIC, EBIC, CVKFold };

template <class Scalar>
struct Criterion {
    CriterionKind kind = CriterionKind::BIC;
    Scalar ebic_gamma = Scalar(0.2);
    int cv_folds = 2;
    bool refit_cv = false;
};

using Criteriond = Criterion<double>;

template <class Scalar>
struct SelectionReport {
    Criterion<Scalar> criterion;
    Vec<Scalar> scores;
    Scalar chosen_lambda = 0;
    Index chosen_index = 0;
    CoefficientMatrix<Scalar> refit_B;
    Scalar sigma2_hat = 0;
    bool exact_fit = false;
};

using SelectionReportd = SelectionReport<double>;

/// max_i ||A_i^T y||_2: the smallest penalty with an all-zero solution.
template <class Scalar>
Scalar lambda_max(const GroupDesign<Scalar>& design)
{
    if (design.response().size() == 0) return Scalar(0);
    return design.all_group_gradients(design.response()).rowwise().norm().maxCoeff();
}

namespace detail {

template <class Scalar>
ScreeningReport<Scalar> screen_with(const GroupDesign<Scalar>& design, Scalar lambda,
                                    const Vec<Scalar>& aty, const Vec<Scalar>& frobs,
                                    Scalar lambda0, Scalar y_norm)
{
    require(lambda > Scalar(0), "screen: lambda must be positive");
    ScreeningReport<Scalar> rep;
    rep.lambda0 = lambda0;
    rep.aty_norms = aty;
    rep.frob_norms = frobs;
    if (lambda > lambda0) {
        for (Index i = 0; i < design.group_count(); ++i) rep.dropped.push_back(i);
        return rep;
    }
    const Scalar slack = (Scalar(1) / lambda - Scalar(1) / lambda0) * y_norm;
    for (Index i = 0; i < design.group_count(); ++i) {
        const bool drop = aty[i] / lambda0 + slack * frobs[i] < Scalar(1);
        (drop ? rep.dropped : rep.kept).push_back(i);
    }
    return rep;
}

}  // namespace detail

/// Safe rule of the solution path: a group with
/// ||A_i^T y||/lambda0 + (1/lambda - 1/lambda0) ||A_i||_F ||y|| < 1
/// is exactly zero in the lambda-solution and can be dropped before solving.
template <class Scalar>
ScreeningReport<Scalar> screen(const GroupDesign<Scalar>& design, Scalar lambda)
{
    Vec<Scalar> aty =
        design.all_group_gradients(design.response()).rowwise().norm();
    Vec<Scalar> frobs(design.group_count());
    for (Index i = 0; i < design.group_count(); ++i) frobs[i] = design.group_frob_norm(i);
    const Scalar lambda0 = aty.size() ? aty.maxCoeff() : Scalar(0);
    return detail::screen_with(design, lambda, aty, frobs, lambda0,
                               design.response().norm());
}

template <class Scalar>
struct ScreeningLambda {
    Scalar lambda = 0;
    bool keep_all_warning = false;
};

/// Smallest lambda whose screened keep-count is at most s (bisection to
/// 1e-6 * lambda0). s >= I cannot constrain anything: returns a tiny lambda
/// with the warning flag set.
template <class Scalar>
ScreeningLambda<Scalar> choose_screening_lambda(const GroupDesign<Scalar>& design, Index s)
{
    const Index I = design.group_count();
    require(s >= 1, "choose_screening_lambda: s must be >= 1");
    Vec<Scalar> aty = design.all_group_gradients(design.response()).rowwise().norm();
    Vec<Scalar> frobs(I);
    for (Index i = 0; i < I; ++i) frobs[i] = design.group_frob_norm(i);
    const Scalar lambda0 = aty.maxCoeff();
    const Scalar y_norm = design.response().norm();

    if (s >= I) return {Scalar(1e-12) * std::max(lambda0, Scalar(1)), true};

    const auto keep_count = [&](Scalar lam) {
        return static_cast<Index>(
            detail::screen_with(design, lam, aty, frobs, lambda0, y_norm).kept.size());
    };

    Scalar lo = Scalar(1e-12) * lambda0;
    Scalar hi = lambda0;
    if (keep_count(lo) <= s) return {lo, false};
    while (hi - lo > Scalar(1e-6) * lambda0) {
        const Scalar mid = Scalar(0.5) * (lo + hi);
        (keep_count(mid) <= s ? hi : lo) = mid;
    }
    return {hi, false};
}

/// Log-spaced grid from lambda_max down to floor_ratio * lambda_max.
template <class Scalar>
Vec<Scalar> default_lambda_grid(const GroupDesign<Scalar>& design, Index count = 100,
                                Scalar floor_ratio = Scalar(0.01))
{
    require(count >= 1, "default_lambda_grid: count must be >= 1");
    require(floor_ratio > Scalar(0) && floor_ratio < Scalar(1),
            "default_lambda_grid: floor_ratio must lie in (0,1)");
    const Scalar lmax = lambda_max(design);
    require(lmax > Scalar(0), "default_lambda_grid: lambda_max is zero");
    Vec<Scalar> grid(count);
    if (count == 1) {
        grid[0] = lmax;
        return grid;
    }
    const Scalar step = std::log(floor_ratio) / Scalar(count - 1);
    for (Index k = 0; k < count; ++k) grid[k] = lmax * std::exp(step * Scalar(k));
    return grid;
}

/// Warm-started descent over a strictly decreasing lambda grid with the safe
/// screen applied before each solve. Non-converged fits are flagged and the
/// path continues.
template <class Scalar>
PathFit<Scalar> fit_path(const GroupDesign<Scalar>& design, const Vec<Scalar>& lambdas,
                         const SolverConfig<Scalar>& config = SolverConfig<Scalar>())
{
    require(lambdas.size() > 0, "fit_path: empty lambda grid");
    for (Index k = 0; k < lambdas.size(); ++k) {
        require(lambdas[k] > Scalar(0), "fit_path: lambdas must be positive");
        if (k > 0)
            require(lambdas[k] < lambdas[k - 1], "fit_path: lambdas must be strictly decreasing");
    }

    const Index I = design.group_count();
    Vec<Scalar> aty = design.all_group_gradients(design.response()).rowwise().norm();
    Vec<Scalar> frobs(I), op_norms(I);
    for (Index i = 0; i < I; ++i) {
        frobs[i] = design.group_frob_norm(i);
        op_norms[i] = design.group_op_norm(i);
    }
    const Scalar lambda0 = aty.size() ? aty.maxCoeff() : Scalar(0);
    const Scalar y_norm = design.response().norm();
    const Scalar kkt_tol =
        config.kkt_tol ? *config.kkt_tol : Scalar(1e-6) * std::max(lambda0, Scalar(1e-300));

    PathFit<Scalar> path;
    path.lambdas = lambdas;
    path.fits.reserve(lambdas.size());

    SolverConfig<Scalar> cfg = config;
    for (Index k = 0; k < lambdas.size(); ++k) {
        const Scalar lam = lambdas[k];
        if (lam >= lambda0) {
            FitResult<Scalar> zero;
            zero.B = CoefficientMatrix<Scalar>::from_matrix(
                Mat<Scalar>::Zero(I, design.group_dim()));
            zero.lambda = lam;
            zero.objective = Scalar(0.5) * design.response().squaredNorm();
            zero.kkt_residual = std::max(Scalar(0), lambda0 - lam);
            zero.iterations = 0;
            zero.converged = zero.kkt_residual <= kkt_tol;
            path.fits.push_back(std::move(zero));
            cfg.warm_start = path.fits.back().B.B;
            continue;
        }
        const auto rep = detail::screen_with(design, lam, aty, frobs, lambda0, y_norm);
        path.fits.push_back(
            fit(design, lam, cfg, rep.kept, &op_norms, std::optional<Scalar>(kkt_tol)));
        cfg.warm_start = path.fits.back().B.B;
    }

    path.entry_lambda =
        Vec<Scalar>::Constant(I, std::numeric_limits<Scalar>::infinity());
    for (Index k = 0; k < lambdas.size(); ++k)
        for (Index i : path.fits[k].B.active_set)
            if (!std::isfinite(path.entry_lambda[i])) path.entry_lambda[i] = lambdas[k];
    return path;
}

namespace detail {

/// Unpenalized least squares on a growing active set. Cholesky factors extend
/// in entry order as groups join, so scoring a whole path costs little more
/// than one factorization of the final set.
template <class Scalar>
class ActiveSetLs {
  public:
    explicit ActiveSetLs(const GroupDesign<Scalar>& design) : design_(&design) {}

    /// Solve on `active` (sorted); returns coefficients and residual sum of squares.
    std::pair<Mat<Scalar>, Scalar> solve(const std::vector<Index>& active)
    {
        const Index J = design_->group_dim();
        const Index I = design_->group_count();
        Mat<Scalar> B = Mat<Scalar>::Zero(I, J);
        if (active.empty()) return {B, design_->response().squaredNorm()};

        if (!is_prefix_of(active)) rebuild_base(active);
        extend_to(active);

        const Index k = static_cast<Index>(order_.size());
        Vec<Scalar> coef = rhs_.head(k * J);
        L_.topLeftCorner(k * J, k * J)
            .template triangularView<Eigen::Lower>()
            .solveInPlace(coef);
        L_.topLeftCorner(k * J, k * J)
            .template triangularView<Eigen::Lower>()
            .transpose()
            .solveInPlace(coef);

        for (Index g = 0; g < k; ++g) B.row(order_[g]) = coef.segment(g * J, J).transpose();

        Vec<Scalar> r = design_->response();
        Vec<Scalar> block(J);
        for (Index g = 0; g < k; ++g) {
            block = coef.segment(g * J, J);
            design_->accumulate_group(order_[g], block, Scalar(-1), r);
        }
        return {B, r.squaredNorm()};
    }

    bool ridged() const { return ridged_; }

  private:
    bool is_prefix_of(const std::vector<Index>& active) const
    {
        for (Index g : order_)
            if (!std::binary_search(active.begin(), active.end(), g)) return false;
        return true;
    }

    void rebuild_base(const std::vector<Index>& active)
    {
        (void)active;
        order_.clear();
        L_.resize(0, 0);
        rhs_.resize(0);
        ridged_ = false;
    }

    Mat<Scalar> cross_gram(Index i, Index j) const
    {
        const Index J = design_->group_dim();
        if (design_->kind() == DesignKind::ImplicitKronecker)
            return design_->covariates().col(i).dot(design_->covariates().col(j)) *
                   Mat<Scalar>::Identity(J, J);
        Mat<Scalar> M = Mat<Scalar>::Zero(J, J);
        const auto& X = design_->covariates();
        for (Index n = 0; n < design_->subjects(); ++n) {
            const Scalar w = X(n, i) * X(n, j);
            if (w != Scalar(0)) M += w * design_->subject_gram(n);
        }
        return M;
    }

    void extend_to(const std::vector<Index>& active)
    {
        const Index J = design_->group_dim();
        std::vector<Index> fresh;
        for (Index g : active)
            if (std::find(order_.begin(), order_.end(), g) == order_.end())
                fresh.push_back(g);
        if (fresh.empty()) return;

        const bool needs_ridge =
            static_cast<Index>(active.size()) * J > design_->rows();
        if (needs_ridge && !ridged_) {
            // switch the whole factor to the ridged system
            order_.clear();
            L_.resize(0, 0);
            rhs_.resize(0);
            ridged_ = true;
            extend_to(active);
            return;
        }

        const Index old_k = static_cast<Index>(order_.size());
        const Index new_k = old_k + static_cast<Index>(fresh.size());
        Mat<Scalar> L_next = Mat<Scalar>::Zero(new_k * J, new_k * J);
        L_next.topLeftCorner(old_k * J, old_k * J) = L_.topLeftCorner(old_k * J, old_k * J);
        Vec<Scalar> rhs_next(new_k * J);
        rhs_next.head(old_k * J) = rhs_.head(old_k * J);

        for (std::size_t f = 0; f < fresh.size(); ++f) {
            const Index g = fresh[f];
            const Index pos = old_k + static_cast<Index>(f);
            for (Index q = 0; q < pos; ++q) {
                const Index other = q < old_k ? order_[q] : fresh[q - old_k];
                L_next.block(pos * J, q * J, J, J) = cross_gram(g, other);
            }
            Mat<Scalar> D = cross_gram(g, g);
            if (ridged_) D.diagonal().array() += Scalar(1e-8);

            // forward-substitute the new block row, then factor its diagonal
            for (Index q = 0; q < pos; ++q) {
                Mat<Scalar> W = L_next.block(pos * J, q * J, J, J);
                for (Index p = 0; p < q; ++p)
                    W -= L_next.block(pos * J, p * J, J, J) *
                         L_next.block(q * J, p * J, J, J).transpose();
                L_next.block(q * J, q * J, J, J)
                    .template triangularView<Eigen::Lower>()
                    .transpose()
                    .template solveInPlace<Eigen::OnTheRight>(W);
                L_next.block(pos * J, q * J, J, J) = W;
                D -= W * W.transpose();
            }
            Eigen::LLT<Mat<Scalar>> llt(D);
            if (llt.info() != Eigen::Success) {
                if (ridged_) throw numeric_error("refit: active-set system not factorizable");
                // fall back to the ridged system from scratch
                order_.clear();
                L_.resize(0, 0);
                rhs_.resize(0);
                ridged_ = true;
                extend_to(active);
                return;
            }
            L_next.block(pos * J, pos * J, J, J) = llt.matrixL();
            Vec<Scalar> y_grad = design_->group_gradient(g, design_->response());
            rhs_next.segment(pos * J, J) = y_grad;
        }

        L_ = std::move(L_next);
        rhs_ = std::move(rhs_next);
        for (Index g : fresh) order_.push_back(g);
    }

    const GroupDesign<Scalar>* design_;
    std::vector<Index> order_;
    Mat<Scalar> L_;
    Vec<Scalar> rhs_;
    bool ridged_ = false;
};

}  // namespace detail

/// Unpenalized least squares on the active groups; sigma2 = RSS / rows, which
/// is (sum_n M_n)^{-1} RSS for the sparse regime and (N M_pc)^{-1} RSS for the
/// dense one. Falls back to a 1e-8 ridge when the system is not well posed.
template <class Scalar>
std::pair<CoefficientMatrix<Scalar>, Scalar> refit_and_sigma2(
    const GroupDesign<Scalar>& design, const std::vector<Index>& active)
{
    detail::ActiveSetLs<Scalar> ls(design);
    std::vector<Index> sorted = active;
    std::sort(sorted.begin(), sorted.end());
    auto [B, rss] = ls.solve(sorted);
    return {CoefficientMatrix<Scalar>::from_matrix(B),
            rss / Scalar(std::max<Index>(design.rows(), 1))};
}

template <class Scalar>
struct CriterionInputs {
    Scalar sigma2 = 0;
    Index active_count = 0;
    Index I = 0;          // number of groups
    Index group_dim = 0;  // J (sparse) or M_pc (dense)
    Index N = 0;          // subjects
    Index rows = 0;       // sum_n M_n (sparse) or N * M_pc (dense)
};

using CriterionInputsd = CriterionInputs<double>;

template <class Scalar>
Scalar log_binomial(Index n, Index k)
{
    if (k < 0 || k > n) return -std::numeric_limits<Scalar>::infinity();
    return static_cast<Scalar>(std::lgamma(double(n) + 1) - std::lgamma(double(k) + 1) -
                               std::lgamma(double(n - k) + 1));
}

/// BIC: log(sigma2) * rows + group_dim * active * log(N).
/// AIC replaces log(N) by 2; EBIC adds 2 gamma log C(I, active).
/// sigma2 == 0 returns the -inf exact-fit sentinel.
template <class Scalar>
Scalar criterion_score(const CriterionInputs<Scalar>& in, const Criterion<Scalar>& crit)
{
    require(in.sigma2 >= Scalar(0), "criterion_score: sigma2 must be nonnegative");
    require(crit.kind != CriterionKind::CVKFold,
            "criterion_score: CV is scored through select()");
    if (in.sigma2 == Scalar(0)) return -std::numeric_limits<Scalar>::infinity();

    const Scalar fit_term = std::log(in.sigma2) * Scalar(in.rows);
    const Scalar per_param =
        crit.kind == CriterionKind::AIC ? Scalar(2) : std::log(Scalar(in.N));
    Scalar score = fit_term + Scalar(in.group_dim) * Scalar(in.active_count) * per_param;
    if (crit.kind == CriterionKind::EBIC)
        score += 2 * crit.ebic_gamma * log_binomial<Scalar>(in.I, in.active_count);
    return score;
}

namespace detail {

template <class Scalar>
Vec<Scalar> cv_scores(const GroupDesign<Scalar>& design, const PathFit<Scalar>& path,
                      const Criterion<Scalar>& crit, const SolverConfig<Scalar>& config)
{
    const Index N = design.subjects();
    const int k = crit.cv_folds;
    require(k >= 2, "select: cv_folds must be >= 2");
    require(N >= k, "select: fewer subjects than folds");

    Vec<Scalar> sq_err = Vec<Scalar>::Zero(path.lambdas.size());
    Index total = 0;

    for (int f = 0; f < k; ++f) {
        std::vector<Index> train, held;
        for (Index n = 0; n < N; ++n)
            ((n % k == f) ? held : train).push_back(n);
        const auto train_design = design.subset_subjects(train);
        const auto held_design = design.subset_subjects(held);
        const auto fold_path = fit_path(train_design, path.lambdas, config);
        total += held_design.rows();
        for (Index l = 0; l < path.lambdas.size(); ++l) {
            Mat<Scalar> B = fold_path.fits[l].B.B;
            if (crit.refit_cv) {
                detail::ActiveSetLs<Scalar> ls(train_design);
                std::vector<Index> act = fold_path.fits[l].B.active_set;
                B = ls.solve(act).first;
            }
            sq_err[l] += held_design.residual(B).squaredNorm();
        }
    }
    return sq_err / Scalar(total);
}

}  // namespace detail

/// Score every path point and pick the minimizer (ties go to the larger
/// lambda); attaches the debiased refit at the chosen active set.
template <class Scalar>
SelectionReport<Scalar> select(const GroupDesign<Scalar>& design,
                               const PathFit<Scalar>& path, const Criterion<Scalar>& crit,
                               const SolverConfig<Scalar>& config = SolverConfig<Scalar>())
{
    require(!path.fits.empty(), "select: empty path");
    SelectionReport<Scalar> rep;
    rep.criterion = crit;
    rep.scores.resize(path.lambdas.size());

    if (crit.kind == CriterionKind::CVKFold) {
        rep.scores = detail::cv_scores(design, path, crit, config);
    } else {
        detail::ActiveSetLs<Scalar> ls(design);
        CriterionInputs<Scalar> in;
        in.I = design.group_count();
        in.group_dim = design.group_dim();
        in.N = design.subjects();
        in.rows = design.rows();
        for (Index l = 0; l < path.lambdas.size(); ++l) {
            std::vector<Index> active = path.fits[l].B.active_set;
            auto [B, rss] = ls.solve(active);
            (void)B;
            in.sigma2 = rss / Scalar(std::max<Index>(design.rows(), 1));
            in.active_count = static_cast<Index>(active.size());
            rep.scores[l] = criterion_score(in, crit);
        }
    }

    Index best = 0;
    for (Index l = 1; l < rep.scores.size(); ++l)
        if (rep.scores[l] < rep.scores[best]) best = l;
    rep.chosen_index = best;
    rep.chosen_lambda = path.lambdas[best];

    auto [refit, sigma2] = refit_and_sigma2(design, path.fits[best].B.active_set);
    rep.refit_B = std::move(refit);
    rep.sigma2_hat = sigma2;
    rep.exact_fit = sigma2 <= Scalar(0);
    return rep;
}

}  // namespace fslasso
