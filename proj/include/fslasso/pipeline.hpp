#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fslasso/basis.hpp"
#include "fslasso/design.hpp"
#include "fslasso/fpca.hpp"
#include "fslasso/metrics.hpp"
#include "fslasso/simulate.hpp"
#include "fslasso/solver.hpp"
#include "fslasso/tuning.hpp"
#include "fslasso/types.hpp"

namespace fslasso {

enum class Method { Sparse, Dense, Lasso, TcLasso };

inline std::string method_name(Method m)
{
    switch (m) {
        case Method::Sparse: return "sparse";
        case Method::Dense: return "dense";
        case Method::Lasso: return "lasso";
        default: return "tclasso";
    }
}

inline Method method_from_name(const std::string& name)
{
    if (name == "sparse") return Method::Sparse;
    if (name == "dense") return Method::Dense;
    if (name == "lasso") return Method::Lasso;
    if (name == "tclasso") return Method::TcLasso;
    throw std::invalid_argument("unknown method '" + name + "'");
}

template <class Scalar>
struct PipelineOptions {
    Index sparse_J = 30;
    BasisFamily sparse_family = BasisFamily::CubicBSpline;
    Index presmooth_J = 15;
    Scalar presmooth_ridge = Scalar(kDefaultPresmoothRidge);
    Scalar fve_target = Scalar(kDefaultFveTarget);
    Index max_components = kMaxComponents;
    Index grid_size = 100;
    Scalar grid_floor = Scalar(0.01);
    bool center = true;
    bool standardize = true;
    Scalar tc_bandwidth = 0;  // 0 = rule of thumb
    Criterion<Scalar> criterion;
    SolverConfig<Scalar> solver;
};

using PipelineOptionsd = PipelineOptions<double>;

/// Everything a fitted method needs to score fresh subjects.
template <class Scalar>
struct PreparedModel {
    Method method = Method::Sparse;
    DesignMatrix<Scalar> dm;
    GroupDesign<Scalar> design;
    BasisSpec<Scalar> basis;  // function basis of sparse-type methods
    Vec<Scalar> mean_coefs;   // pooled mean estimate in `basis` (empty if uncentered)
    Vec<Scalar> tc_grid;      // TC-LASSO correction curve
    Vec<Scalar> tc_mean;
    std::optional<FpcaModel<Scalar>> fpca;
};

using PreparedModeld = PreparedModel<double>;

namespace detail {

template <class Scalar>
Vec<Scalar> pooled_mean_coefs(const ObservationSet<Scalar>& obs,
                              const BasisSpec<Scalar>& spec)
{
    Mat<Scalar> normal = Mat<Scalar>::Zero(spec.J, spec.J);
    Vec<Scalar> rhs = Vec<Scalar>::Zero(spec.J);
    for (const auto& s : obs.subjects) {
        const auto bm = eval_matrix(spec, s.times);
        normal.noalias() += bm.E.transpose() * bm.E;
        rhs.noalias() += bm.E.transpose() * s.values;
    }
    normal.diagonal().array() += Scalar(1e-10) * normal.diagonal().maxCoeff();
    return normal.ldlt().solve(rhs);
}

template <class Scalar>
ObservationSet<Scalar> subtract_basis_mean(const ObservationSet<Scalar>& obs,
                                           const BasisSpec<Scalar>& spec,
                                           const Vec<Scalar>& coefs)
{
    ObservationSet<Scalar> out = obs;
    for (auto& s : out.subjects) {
        const auto bm = eval_matrix(spec, s.times);
        s.values -= bm.E * coefs;
    }
    return out;
}

template <class Scalar>
Scalar interp_curve(const Vec<Scalar>& grid, const Vec<Scalar>& values, Scalar t)
{
    const Index G = grid.size();
    if (t <= grid[0]) return values[0];
    if (t >= grid[G - 1]) return values[G - 1];
    const Scalar step = (grid[G - 1] - grid[0]) / Scalar(G - 1);
    Index k = std::min(static_cast<Index>((t - grid[0]) / step), G - 2);
    const Scalar w = (t - grid[k]) / (grid[k + 1] - grid[k]);
    return (Scalar(1) - w) * values[k] + w * values[k + 1];
}

}  // namespace detail

/// Assemble the group design (and any method-specific state) for one method.
template <class Scalar>
PreparedModel<Scalar> prepare(Method method, const ObservationSet<Scalar>& obs,
                              const Mat<Scalar>& X_raw,
                              const PipelineOptions<Scalar>& opts)
{
    obs.validate();
    require(X_raw.rows() == obs.size(), "prepare: covariate rows must match subjects");

    PreparedModel<Scalar> out;
    out.method = method;
    out.dm = make_design(X_raw, opts.standardize);

    if (method == Method::Dense) {
        BasisSpec<Scalar> presmooth_spec{BasisFamily::Fourier, opts.presmooth_J};
        const Mat<Scalar> coefs = presmooth(obs, presmooth_spec, opts.presmooth_ridge);
        const auto metric = l2_gram(presmooth_spec);
        FpcaModel<Scalar> model =
            fit_fpca(coefs, metric, opts.fve_target, opts.max_components);
        model.presmooth_spec = presmooth_spec;
        model.ridge = opts.presmooth_ridge;
        const auto scores = project_scores(model, coefs);
        out.design = build_dense_design(out.dm, scores);
        out.fpca = std::move(model);
        return out;
    }

    ObservationSet<Scalar> working = obs;
    if (method == Method::Sparse) {
        out.basis = BasisSpec<Scalar>{opts.sparse_family, opts.sparse_J};
    } else {
        out.basis = BasisSpec<Scalar>{BasisFamily::Fourier, 1};
    }

    if (method == Method::TcLasso) {
        // pooled local-linear time correction before the scalar fit
        Index total = obs.total_obs();
        Vec<Scalar> ts(total), ys(total);
        Index k = 0;
        for (const auto& s : obs.subjects)
            for (Index m = 0; m < s.times.size(); ++m, ++k) {
                ts[k] = s.times[m];
                ys[k] = s.values[m];
            }
        const Scalar h =
            opts.tc_bandwidth > Scalar(0) ? opts.tc_bandwidth : rule_of_thumb_bandwidth(ts);
        out.tc_grid = Vec<Scalar>::LinSpaced(101, Scalar(0), Scalar(1));
        out.tc_mean = local_linear_smooth(ts, ys, h, out.tc_grid);
        for (auto& s : working.subjects)
            for (Index m = 0; m < s.times.size(); ++m)
                s.values[m] -= detail::interp_curve(out.tc_grid, out.tc_mean, s.times[m]);
    } else if (opts.center) {
        out.mean_coefs = detail::pooled_mean_coefs(working, out.basis);
        working = detail::subtract_basis_mean(working, out.basis, out.mean_coefs);
    }

    std::vector<BasisMatrix<Scalar>> bases;
    bases.reserve(static_cast<std::size_t>(working.size()));
    for (const auto& s : working.subjects) bases.push_back(eval_matrix(out.basis, s.times));
    out.design = build_sparse_design(out.dm, bases, working);
    return out;
}

/// Fitted value for one subject at time t; x_std is the subject's covariate
/// row already mapped through the training standardization.
template <class Scalar>
Scalar predict_value(const PreparedModel<Scalar>& model, const Mat<Scalar>& B,
                     const Vec<Scalar>& x_std, Scalar t)
{
    if (model.method == Method::Dense) {
        const Vec<Scalar> scores = B.transpose() * x_std;
        return reconstruct(*model.fpca, scores, t);
    }
    const Vec<Scalar> e = eval_basis(model.basis, t);
    Scalar value = x_std.dot(B * e);
    if (model.mean_coefs.size() > 0) value += model.mean_coefs.dot(e);
    if (model.method == Method::TcLasso && model.tc_grid.size() > 0)
        value += detail::interp_curve(model.tc_grid, model.tc_mean, t);
    return value;
}

/// Mean over test observations of (Y_nm - Yhat_n(t_nm))^2, test subjects fresh.
template <class Scalar>
Scalar prediction_mse(const PreparedModel<Scalar>& model, const Mat<Scalar>& B,
                      const ObservationSet<Scalar>& test_obs, const Mat<Scalar>& test_X_raw)
{
    test_obs.validate();
    require(test_X_raw.rows() == test_obs.size(),
            "prediction_mse: covariate rows must match test subjects");
    const Mat<Scalar> X_std = model.dm.transform(test_X_raw);

    Scalar sq = 0;
    Index count = 0;
    for (Index n = 0; n < test_obs.size(); ++n) {
        const auto& s = test_obs.subjects[static_cast<std::size_t>(n)];
        const Vec<Scalar> x = X_std.row(n).transpose();
        for (Index m = 0; m < s.times.size(); ++m) {
            const Scalar err = s.values[m] - predict_value(model, B, x, s.times[m]);
            sq += err * err;
            ++count;
        }
    }
    require(count > 0, "prediction_mse: empty test set");
    return sq / Scalar(count);
}

/// Path over the default grid for this prepared design.
template <class Scalar>
PathFit<Scalar> run_path(const PreparedModel<Scalar>& model,
                         const PipelineOptions<Scalar>& opts)
{
    const auto grid = default_lambda_grid(model.design, opts.grid_size, opts.grid_floor);
    return fit_path(model.design, grid, opts.solver);
}

}  // namespace fslasso
