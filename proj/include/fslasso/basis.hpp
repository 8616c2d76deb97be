#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "fslasso/types.hpp"

namespace fslasso {

enum class BasisFamily { Fourier, CubicBSpline };

/// Orthonormal Fourier or clamped cubic B-spline basis on a closed interval.
///
/// Fourier ordering keeps the constant first: e_1 = 1, e_{2k} = sqrt(2) sin(2 pi k u),
/// e_{2k+1} = sqrt(2) cos(2 pi k u), with u the affinely normalized time.
/// B-splines use an open-uniform knot vector with J-4 equally spaced interior knots.
template <class Scalar>
struct BasisSpec {
    BasisFamily family = BasisFamily::Fourier;
    Index J = 1;
    Scalar a = 0;
    Scalar b = 1;

    void validate() const
    {
        require(J >= 1, "BasisSpec: J must be >= 1");
        if (family == BasisFamily::CubicBSpline)
            require(J >= 4, "BasisSpec: cubic B-splines need J >= 4");
        require(b > a, "BasisSpec: domain must satisfy b > a");
    }

    Scalar normalize(Scalar t) const { return (t - a) / (b - a); }

    bool contains(Scalar t) const { return t >= a && t <= b; }
};

using BasisSpecd = BasisSpec<double>;

/// Evaluated basis rows for one subject: E(m, j) = e_j(times[m]).
template <class Scalar>
struct BasisMatrix {
    Mat<Scalar> E;
    Vec<Scalar> times;
};

using BasisMatrixd = BasisMatrix<double>;

/// Pooled Gram matrix F = (1/N) sum_n E_n^T E_n with its operator norm.
template <class Scalar>
struct GramMatrix {
    Mat<Scalar> F;
    Index subjects = 0;
    Scalar op_norm = 0;
};

using GramMatrixd = GramMatrix<double>;

namespace detail {

// Open-uniform knot vector for J clamped cubic B-splines on [0,1]:
// four copies of each endpoint, J-4 equally spaced interior knots.
template <class Scalar>
std::vector<Scalar> bspline_knots(Index J)
{
    std::vector<Scalar> t(static_cast<std::size_t>(J) + 4);
    const Index interior = J - 4;
    for (Index k = 0; k < 4; ++k) t[k] = Scalar(0);
    for (Index k = 0; k < interior; ++k)
        t[4 + k] = Scalar(k + 1) / Scalar(interior + 1);
    for (Index k = J; k < J + 4; ++k) t[k] = Scalar(1);
    return t;
}

// Cox-de Boor triangle for the four basis functions that are nonzero at u.
template <class Scalar>
void bspline_eval01(Index J, Scalar u, Vec<Scalar>& out)
{
    const auto t = bspline_knots<Scalar>(J);
    Index span = J - 1;
    if (u < Scalar(1)) {
        span = 3;
        while (span + 1 < J && t[span + 1] <= u) ++span;
    }

    Scalar N[4] = {Scalar(1), 0, 0, 0};
    Scalar left[4], right[4];
    for (Index j = 1; j <= 3; ++j) {
        left[j] = u - t[span + 1 - j];
        right[j] = t[span + j] - u;
        Scalar saved = 0;
        for (Index r = 0; r < j; ++r) {
            const Scalar temp = N[r] / (right[r + 1] + left[j - r]);
            N[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        N[j] = saved;
    }

    out.setZero(J);
    for (Index r = 0; r <= 3; ++r) out[span - 3 + r] = N[r];
}

template <class Scalar>
void fourier_eval01(Index J, Scalar u, Vec<Scalar>& out)
{
    constexpr Scalar two_pi = Scalar(6.283185307179586476925286766559L);
    const Scalar root2 = std::sqrt(Scalar(2));
    out.resize(J);
    out[0] = Scalar(1);
    for (Index j = 1; j < J; ++j) {
        const Index k = (j + 1) / 2;
        const Scalar phase = two_pi * Scalar(k) * u;
        out[j] = (j % 2 == 1) ? root2 * std::sin(phase) : root2 * std::cos(phase);
    }
}

}  // namespace detail

/// (e_1(t), ..., e_J(t)).
template <class Scalar>
Vec<Scalar> eval_basis(const BasisSpec<Scalar>& spec, Scalar t)
{
    spec.validate();
    if (!spec.contains(t)) throw std::domain_error("eval_basis: t outside basis domain");
    const Scalar u = spec.normalize(t);
    Vec<Scalar> out;
    if (spec.family == BasisFamily::Fourier)
        detail::fourier_eval01(spec.J, u, out);
    else
        detail::bspline_eval01(spec.J, u, out);
    return out;
}

/// Stack eval_basis over a subject's time points.
template <class Scalar>
BasisMatrix<Scalar> eval_matrix(const BasisSpec<Scalar>& spec, const Vec<Scalar>& times)
{
    spec.validate();
    require(times.size() > 0, "eval_matrix: empty times");
    BasisMatrix<Scalar> bm;
    bm.times = times;
    bm.E.resize(times.size(), spec.J);
    Vec<Scalar> row;
    for (Index m = 0; m < times.size(); ++m) {
        if (!spec.contains(times[m]))
            throw std::domain_error("eval_matrix: time outside basis domain");
        const Scalar u = spec.normalize(times[m]);
        if (spec.family == BasisFamily::Fourier)
            detail::fourier_eval01(spec.J, u, row);
        else
            detail::bspline_eval01(spec.J, u, row);
        bm.E.row(m) = row.transpose();
    }
    return bm;
}

/// F = (1/N) sum_n E_n^T E_n, with ||F||_op from a symmetric eigensolve.
template <class Scalar>
GramMatrix<Scalar> gram(const std::vector<BasisMatrix<Scalar>>& matrices)
{
    require(!matrices.empty(), "gram: no basis matrices");
    const Index J = matrices.front().E.cols();
    Mat<Scalar> F = Mat<Scalar>::Zero(J, J);
    for (const auto& bm : matrices) {
        require(bm.E.cols() == J, "gram: basis matrices disagree on J");
        F.template selfadjointView<Eigen::Lower>().rankUpdate(bm.E.transpose());
    }
    F = F.template selfadjointView<Eigen::Lower>();
    F /= Scalar(matrices.size());

    GramMatrix<Scalar> g;
    g.F = (F + F.transpose()) / Scalar(2);
    g.subjects = static_cast<Index>(matrices.size());
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(g.F);
    g.op_norm = es.eigenvalues().cwiseAbs().maxCoeff();
    return g;
}

/// Continuum Gram <e_i, e_j> under the normalized-domain measure: exactly the
/// identity for Fourier, Gauss-Legendre per knot interval for cubic B-splines
/// (5 nodes, exact for the degree-6 products).
template <class Scalar>
GramMatrix<Scalar> l2_gram(const BasisSpec<Scalar>& spec)
{
    spec.validate();
    GramMatrix<Scalar> g;
    g.subjects = 0;
    if (spec.family == BasisFamily::Fourier) {
        g.F = Mat<Scalar>::Identity(spec.J, spec.J);
        g.op_norm = Scalar(1);
        return g;
    }

    static const Scalar nodes[5] = {Scalar(-0.906179845938663992797626878299L),
                                    Scalar(-0.538469310105683091036314420700L), Scalar(0),
                                    Scalar(0.538469310105683091036314420700L),
                                    Scalar(0.906179845938663992797626878299L)};
    static const Scalar weights[5] = {Scalar(0.236926885056189087514264040720L),
                                      Scalar(0.478628670499366468041291514836L),
                                      Scalar(0.568888888888888888888888888889L),
                                      Scalar(0.478628670499366468041291514836L),
                                      Scalar(0.236926885056189087514264040720L)};

    const auto knots = detail::bspline_knots<Scalar>(spec.J);
    Mat<Scalar> F = Mat<Scalar>::Zero(spec.J, spec.J);
    Vec<Scalar> e;
    for (std::size_t k = 3; k + 4 < knots.size(); ++k) {
        const Scalar lo = knots[k], hi = knots[k + 1];
        if (hi <= lo) continue;
        for (int q = 0; q < 5; ++q) {
            const Scalar u = Scalar(0.5) * (lo + hi) + Scalar(0.5) * (hi - lo) * nodes[q];
            detail::bspline_eval01(spec.J, u, e);
            F.template selfadjointView<Eigen::Lower>().rankUpdate(
                e, weights[q] * Scalar(0.5) * (hi - lo));
        }
    }
    g.F = Mat<Scalar>(F.template selfadjointView<Eigen::Lower>());
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(g.F);
    g.op_norm = es.eigenvalues().cwiseAbs().maxCoeff();
    return g;
}

}  // namespace fslasso
