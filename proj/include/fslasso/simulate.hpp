#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fslasso/basis.hpp"
#include "fslasso/rng.hpp"
#include "fslasso/types.hpp"

namespace fslasso {

enum class MaternSmoothness { Nu3_2, Nu5_2 };

/// Stationary Matern covariance, parameterized as
/// (mean, variance, range, nugget, smoothness).
template <class Scalar>
struct MaternSpec {
    Scalar mean = 0;
    Scalar variance = 1;
    Scalar range = Scalar(0.25);
    Scalar nugget = 0;
    MaternSmoothness smoothness = MaternSmoothness::Nu5_2;

    void validate() const
    {
        require(variance >= Scalar(0), "MaternSpec: variance must be nonnegative");
        require(range > Scalar(0), "MaternSpec: range must be positive");
        require(nugget >= Scalar(0), "MaternSpec: nugget must be nonnegative");
    }
};

using MaternSpecd = MaternSpec<double>;

template <class Scalar>
Scalar matern_cov(const MaternSpec<Scalar>& spec, Scalar d)
{
    spec.validate();
    require(d >= Scalar(0), "matern_cov: distance must be nonnegative");
    const Scalar r = spec.range;
    Scalar value;
    if (spec.smoothness == MaternSmoothness::Nu3_2) {
        const Scalar s = std::sqrt(Scalar(3)) * d / r;
        value = spec.variance * (Scalar(1) + s) * std::exp(-s);
    } else {
        const Scalar s = std::sqrt(Scalar(5)) * d / r;
        value = spec.variance * (Scalar(1) + s + Scalar(5) * d * d / (Scalar(3) * r * r)) *
                std::exp(-s);
    }
    if (d == Scalar(0)) value += spec.nugget;
    return value;
}

template <class Scalar>
Mat<Scalar> matern_cov_matrix(const MaternSpec<Scalar>& spec, const Vec<Scalar>& times)
{
    const Index m = times.size();
    Mat<Scalar> C(m, m);
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j <= i; ++j) {
            const Scalar v = matern_cov(spec, std::abs(times[i] - times[j]));
            C(i, j) = v;
            C(j, i) = v;
        }
    return C;
}

/// Cholesky of a Matern covariance on fixed times, with adaptive jitter up to
/// 1e-8; reusable across draws so a whole family of curves shares one factor.
template <class Scalar>
class GpSampler {
  public:
    GpSampler(const MaternSpec<Scalar>& spec, const Vec<Scalar>& times)
        : spec_(spec), times_(times)
    {
        spec.validate();
        if (spec.variance == Scalar(0) && spec.nugget == Scalar(0)) {
            degenerate_ = true;
            return;
        }
        Mat<Scalar> C = matern_cov_matrix(spec, times);
        Scalar jitter = 0;
        for (int attempt = 0; attempt < 6; ++attempt) {
            Eigen::LLT<Mat<Scalar>> llt(C);
            if (llt.info() == Eigen::Success) {
                L_ = llt.matrixL();
                return;
            }
            jitter = jitter == Scalar(0) ? Scalar(1e-12) : jitter * Scalar(10);
            if (jitter > Scalar(1e-8))
                throw numeric_error("sample_gp: covariance not factorizable within jitter 1e-8");
            C.diagonal().array() += jitter;
        }
        throw numeric_error("sample_gp: covariance not factorizable within jitter 1e-8");
    }

    Vec<Scalar> draw(Rng& rng) const
    {
        Vec<Scalar> out = Vec<Scalar>::Constant(times_.size(), spec_.mean);
        if (degenerate_) return out;
        Vec<Scalar> z(times_.size());
        for (Index m = 0; m < z.size(); ++m) z[m] = Scalar(rng.normal());
        out.noalias() += L_ * z;
        return out;
    }

  private:
    MaternSpec<Scalar> spec_;
    Vec<Scalar> times_;
    Mat<Scalar> L_;
    bool degenerate_ = false;
};

/// mean + L z with L the (jittered) Cholesky factor of the Matern covariance.
template <class Scalar>
Vec<Scalar> sample_gp(const MaternSpec<Scalar>& spec, const Vec<Scalar>& times, Rng& rng)
{
    return GpSampler<Scalar>(spec, times).draw(rng);
}

enum class SimDesignKind { GaussianAR, BinomialProbit };

template <class Scalar>
struct SimScenario {
    Index N = 100;
    Index I = 1000;
    Index I0 = 10;
    Scalar rho = Scalar(0.5);
    Index M_obs = 10;
    MaternSpec<Scalar> beta_spec{Scalar(0), Scalar(0.1), Scalar(0.25), Scalar(0),
                                 MaternSmoothness::Nu5_2};
    MaternSpec<Scalar> eps_spec{Scalar(0), Scalar(1), Scalar(0.25), Scalar(0),
                                MaternSmoothness::Nu3_2};
    SimDesignKind design_kind = SimDesignKind::GaussianAR;
    std::uint64_t seed = 1;

    void validate() const
    {
        require(N >= 1 && I >= 1, "SimScenario: N and I must be positive");
        require(I0 >= 0 && I0 <= I, "SimScenario: need 0 <= I0 <= I");
        require(rho >= Scalar(0) && rho < Scalar(1), "SimScenario: rho must lie in [0,1)");
        require(M_obs >= 1, "SimScenario: M_obs must be >= 1");
        beta_spec.validate();
        eps_spec.validate();
    }
};

using SimScenariod = SimScenario<double>;

/// Coefficient-function variance defaults to 1/I0 so the total signal variance
/// is 1 regardless of the support size.
template <class Scalar>
SimScenario<Scalar> default_scenario(Index N, Index I, Index I0, Scalar rho,
                                     std::uint64_t seed)
{
    SimScenario<Scalar> sc;
    sc.N = N;
    sc.I = I;
    sc.I0 = I0;
    sc.rho = rho;
    sc.seed = seed;
    sc.beta_spec.variance = I0 > 0 ? Scalar(1) / Scalar(I0) : Scalar(0);
    return sc;
}

/// GaussianAR: rows iid N(0, Sigma_AR) by the AR(1) recursion
/// x_1 = z_1, x_i = rho x_{i-1} + sqrt(1-rho^2) z_i.
/// BinomialProbit: latent GaussianAR row, then Binom(2, logistic(latent)).
template <class Scalar>
Mat<Scalar> gen_design(const SimScenario<Scalar>& scenario, Rng& rng)
{
    scenario.validate();
    Mat<Scalar> X(scenario.N, scenario.I);
    const Scalar carry = std::sqrt(Scalar(1) - scenario.rho * scenario.rho);
    for (Index n = 0; n < scenario.N; ++n) {
        Scalar prev = Scalar(rng.normal());
        X(n, 0) = prev;
        for (Index i = 1; i < scenario.I; ++i) {
            prev = scenario.rho * prev + carry * Scalar(rng.normal());
            X(n, i) = prev;
        }
    }
    if (scenario.design_kind == SimDesignKind::BinomialProbit) {
        for (Index n = 0; n < scenario.N; ++n)
            for (Index i = 0; i < scenario.I; ++i) {
                const Scalar p = Scalar(1) / (Scalar(1) + std::exp(-X(n, i)));
                X(n, i) = Scalar(rng.binomial2(double(p)));
            }
    }
    return X;
}

/// Ground truth behind one generated dataset: the support, the coefficient
/// functions tabulated on a fine grid (linearly interpolated in between), and
/// the generating process specs.
template <class Scalar>
struct Truth {
    std::vector<Index> support;
    Vec<Scalar> grid;
    Mat<Scalar> beta_on_grid;  // grid points x |support|
    MaternSpec<Scalar> beta_spec;
    MaternSpec<Scalar> eps_spec;

    Scalar beta_value(Index support_pos, Scalar t) const
    {
        const Index G = grid.size();
        if (t <= grid[0]) return beta_on_grid(0, support_pos);
        if (t >= grid[G - 1]) return beta_on_grid(G - 1, support_pos);
        const Scalar step = (grid[G - 1] - grid[0]) / Scalar(G - 1);
        Index k = static_cast<Index>((t - grid[0]) / step);
        k = std::min(k, G - 2);
        const Scalar w = (t - grid[k]) / (grid[k + 1] - grid[k]);
        return (Scalar(1) - w) * beta_on_grid(k, support_pos) +
               w * beta_on_grid(k + 1, support_pos);
    }

    /// Row i of the truncated coefficient matrix: <beta_i, e_j> by trapezoid
    /// quadrature on the tabulation grid (zero off support).
    Mat<Scalar> coefficient_matrix(const BasisSpec<Scalar>& spec, Index I) const
    {
        Mat<Scalar> B = Mat<Scalar>::Zero(I, spec.J);
        const Index G = grid.size();
        Mat<Scalar> E(G, spec.J);
        for (Index g = 0; g < G; ++g)
            E.row(g) = eval_basis(spec, grid[g]).transpose();
        Vec<Scalar> w = Vec<Scalar>::Constant(G, (grid[G - 1] - grid[0]) / Scalar(G - 1));
        w[0] *= Scalar(0.5);
        w[G - 1] *= Scalar(0.5);
        for (std::size_t s = 0; s < support.size(); ++s)
            B.row(support[s]) =
                (E.transpose() * w.cwiseProduct(beta_on_grid.col(s))).transpose();
        return B;
    }
};

using Truthd = Truth<double>;

template <class Scalar>
struct SimData {
    ObservationSet<Scalar> obs;
    Mat<Scalar> X;  // raw (unstandardized) covariates
    Truth<Scalar> truth;
};

using SimDatad = SimData<double>;

inline constexpr Index kTruthGridSize = 201;

namespace detail {

template <class Scalar>
Truth<Scalar> draw_truth(const SimScenario<Scalar>& scenario, Rng& rng)
{
    Truth<Scalar> truth;
    truth.beta_spec = scenario.beta_spec;
    truth.eps_spec = scenario.eps_spec;

    std::vector<Index> perm(static_cast<std::size_t>(scenario.I));
    for (Index i = 0; i < scenario.I; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (Index i = scenario.I - 1; i > 0; --i) {
        const Index j = static_cast<Index>(rng.next_u64() % std::uint64_t(i + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    truth.support.assign(perm.begin(), perm.begin() + scenario.I0);
    std::sort(truth.support.begin(), truth.support.end());

    truth.grid = Vec<Scalar>::LinSpaced(kTruthGridSize, Scalar(0), Scalar(1));
    truth.beta_on_grid.resize(kTruthGridSize, scenario.I0);
    if (scenario.I0 > 0) {
        GpSampler<Scalar> sampler(scenario.beta_spec, truth.grid);
        for (Index s = 0; s < scenario.I0; ++s)
            truth.beta_on_grid.col(s) = sampler.draw(rng);
    }
    return truth;
}

template <class Scalar>
ObservationSet<Scalar> observe(const SimScenario<Scalar>& scenario,
                               const Truth<Scalar>& truth, const Mat<Scalar>& X, Rng& rng)
{
    ObservationSet<Scalar> obs;
    obs.subjects.resize(static_cast<std::size_t>(X.rows()));
    for (Index n = 0; n < X.rows(); ++n) {
        Vec<Scalar> times(scenario.M_obs);
        for (Index m = 0; m < scenario.M_obs; ++m) times[m] = Scalar(rng.uniform());
        std::sort(times.data(), times.data() + times.size());

        Vec<Scalar> values = sample_gp(truth.eps_spec, times, rng);
        for (std::size_t s = 0; s < truth.support.size(); ++s) {
            const Scalar x = X(n, truth.support[s]);
            for (Index m = 0; m < scenario.M_obs; ++m)
                values[m] += x * truth.beta_value(static_cast<Index>(s), times[m]);
        }
        obs.subjects[static_cast<std::size_t>(n)] = {std::move(times), std::move(values)};
    }
    return obs;
}

}  // namespace detail

/// Draw the support, the coefficient functions, the covariates, and the noisy
/// per-subject observations of one scenario replicate.
template <class Scalar>
SimData<Scalar> gen_dataset(const SimScenario<Scalar>& scenario, Rng& rng)
{
    scenario.validate();
    SimData<Scalar> data;
    data.truth = detail::draw_truth(scenario, rng);
    data.X = gen_design(scenario, rng);
    data.obs = detail::observe(scenario, data.truth, data.X, rng);
    return data;
}

/// Fresh subjects from an existing truth (test sets share the coefficient
/// functions but draw new covariates, times, and errors).
template <class Scalar>
SimData<Scalar> gen_dataset_from_truth(const SimScenario<Scalar>& scenario,
                                       const Truth<Scalar>& truth, Index n_subjects,
                                       Rng& rng)
{
    scenario.validate();
    SimScenario<Scalar> sc = scenario;
    sc.N = n_subjects;
    SimData<Scalar> data;
    data.truth = truth;
    data.X = gen_design(sc, rng);
    data.obs = detail::observe(sc, truth, data.X, rng);
    return data;
}

template <class Scalar>
Scalar rule_of_thumb_bandwidth(const Vec<Scalar>& x)
{
    const Index n = x.size();
    require(n >= 2, "rule_of_thumb_bandwidth: need at least 2 points");
    const Scalar mean = x.mean();
    const Scalar sd = std::sqrt((x.array() - mean).square().sum() / Scalar(n - 1));
    return Scalar(1.06) * sd * std::pow(Scalar(n), Scalar(-0.2));
}

/// Local-linear estimator with a Gaussian kernel. If every weight underflows
/// at some evaluation point the bandwidth is widened there (doubling) and the
/// fallback is flagged through `widened`.
template <class Scalar>
Vec<Scalar> local_linear_smooth(const Vec<Scalar>& x, const Vec<Scalar>& y,
                                Scalar bandwidth, const Vec<Scalar>& x_eval,
                                bool* widened = nullptr)
{
    require(bandwidth > Scalar(0), "local_linear_smooth: bandwidth must be positive");
    require(x.size() == y.size(), "local_linear_smooth: x/y length mismatch");
    require(x.size() >= 2, "local_linear_smooth: need at least 2 points");
    Scalar lo = x[0], hi = x[0];
    for (Index i = 1; i < x.size(); ++i) {
        lo = std::min(lo, x[i]);
        hi = std::max(hi, x[i]);
    }
    require(hi > lo, "local_linear_smooth: need at least 2 distinct x");
    if (widened) *widened = false;

    Vec<Scalar> out(x_eval.size());
    for (Index e = 0; e < x_eval.size(); ++e) {
        Scalar h = bandwidth;
        for (int attempt = 0;; ++attempt) {
            Scalar s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
            for (Index i = 0; i < x.size(); ++i) {
                const Scalar d = x[i] - x_eval[e];
                const Scalar w = std::exp(Scalar(-0.5) * d * d / (h * h));
                s0 += w;
                s1 += w * d;
                s2 += w * d * d;
                t0 += w * y[i];
                t1 += w * d * y[i];
            }
            const Scalar det = s0 * s2 - s1 * s1;
            if (s0 > Scalar(1e-300) && std::abs(det) > Scalar(1e-300) * std::max(s0 * s2, Scalar(1))) {
                out[e] = (s2 * t0 - s1 * t1) / det;
                break;
            }
            if (s0 > Scalar(1e-300)) {
                // degenerate second moment: all mass on one point
                out[e] = t0 / s0;
                break;
            }
            if (attempt >= 60)
                throw numeric_error("local_linear_smooth: bandwidth fallback failed");
            h *= Scalar(2);
            if (widened) *widened = true;
        }
    }
    return out;
}

}  // namespace fslasso
