#include <doctest.h>

#include <cmath>

#include "fslasso/fpca.hpp"
#include "fslasso/rng.hpp"
#include "fslasso/simulate.hpp"

using namespace fslasso;

namespace {

ObservationSetd dense_curves(const Matd& values, const Vecd& grid)
{
    ObservationSetd obs;
    for (Index n = 0; n < values.rows(); ++n)
        obs.subjects.push_back({grid, values.row(n).transpose()});
    return obs;
}

}  // namespace

TEST_CASE("presmooth recovers a constant curve exactly")
{
    BasisSpecd spec{BasisFamily::Fourier, 3};
    const Vecd grid = Vecd::LinSpaced(10, 0.05, 0.95);
    Matd values = Matd::Constant(2, 10, 5.0);
    const Matd coefs = presmooth(dense_curves(values, grid), spec, 0.0);
    for (Index n = 0; n < 2; ++n) {
        CHECK(coefs(n, 0) == doctest::Approx(5.0).epsilon(1e-10));
        CHECK(std::abs(coefs(n, 1)) <= 1e-10);
        CHECK(std::abs(coefs(n, 2)) <= 1e-10);
    }
}

TEST_CASE("presmooth with ridge 0 on an underdetermined subject is a rank error")
{
    BasisSpecd spec{BasisFamily::CubicBSpline, 30};
    ObservationSetd obs;
    Vecd t(3), v(3);
    t << 0.1, 0.5, 0.9;
    v << 1.0, 2.0, 3.0;
    obs.subjects.push_back({t, v});
    CHECK_THROWS_AS(presmooth(obs, spec, 0.0), numeric_error);
    CHECK_NOTHROW(presmooth(obs, spec, 1e-3));
}

TEST_CASE("presmooth of a noisy sine beats the noise floor")
{
    Rng rng(19);
    const double sigma = 0.3;
    BasisSpecd spec{BasisFamily::Fourier, 9};
    const Vecd grid = Vecd::LinSpaced(100, 0.0, 1.0);
    Matd values(1, 100);
    for (Index m = 0; m < 100; ++m)
        values(0, m) = std::sin(2.0 * M_PI * grid[m]) + sigma * rng.normal();
    const auto obs = dense_curves(values, grid);
    const Matd coefs = presmooth(obs, spec, 1e-4);

    // oracle: direct dense least squares on the same basis
    const auto bm = eval_matrix(spec, grid);
    const Vecd direct = (bm.E.transpose() * bm.E)
                            .ldlt()
                            .solve(bm.E.transpose() * values.row(0).transpose());
    CHECK((coefs.row(0).transpose() - direct).norm() <= 1e-2 * direct.norm() + 1e-8);

    double sq = 0;
    for (Index m = 0; m < 100; ++m) {
        const double fitted = bm.E.row(m).dot(coefs.row(0));
        const double err = fitted - std::sin(2.0 * M_PI * grid[m]);
        sq += err * err;
    }
    CHECK(std::sqrt(sq / 100.0) < sigma);
}

TEST_CASE("rank-one constant family: one component, constant eigenfunction")
{
    Rng rng(5);
    const Index N = 40;
    BasisSpecd spec{BasisFamily::Fourier, 5};
    Matd coefs = Matd::Zero(N, 5);
    Vecd c(N);
    for (Index n = 0; n < N; ++n) {
        c[n] = 2.0 + rng.normal();
        coefs(n, 0) = c[n];
    }
    const auto model = fit_fpca(coefs, l2_gram(spec), 0.99);
    CHECK(model.components() == 1);

    const double sample_var = (c.array() - c.mean()).square().sum() / double(N - 1);
    CHECK(model.eigenvalues[0] == doctest::Approx(sample_var).epsilon(1e-10));

    // eigenfunction is the constant, sign fixed positive
    CHECK(model.eigen_coefs(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(model.eigen_coefs.col(0).tail(4).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("fve_target = 1 recovers the exact rank")
{
    Rng rng(31);
    const Index N = 30, J = 6, r = 3;
    Matd U(N, r), V(J, r);
    for (Index n = 0; n < N; ++n)
        for (Index k = 0; k < r; ++k) U(n, k) = rng.normal();
    for (Index j = 0; j < J; ++j)
        for (Index k = 0; k < r; ++k) V(j, k) = rng.normal();
    Matd coefs = U * V.transpose();
    // centering can only reduce rank; re-add a rank-preserving mean of rank <= r
    const auto model = fit_fpca(coefs, l2_gram(BasisSpecd{BasisFamily::Fourier, J}), 1.0, J);
    CHECK(model.components() <= r);
    CHECK(model.components() >= r - 1);  // centering may absorb one direction
    CHECK(model.fve == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("insufficient data is an error")
{
    Matd coefs = Matd::Zero(1, 4);
    CHECK_THROWS_AS(fit_fpca(coefs, l2_gram(BasisSpecd{BasisFamily::Fourier, 4}), 0.99),
                    numeric_error);
}

TEST_CASE("matern sample: leading eigenvalue near the analytic covariance oracle")
{
    Rng rng(7);
    const Index N = 200, G = 100;
    MaternSpecd matern{0.0, 1.0, 0.25, 0.0, MaternSmoothness::Nu3_2};
    const Vecd grid = Vecd::LinSpaced(G, 0.0, 1.0);
    GpSampler<double> sampler(matern, grid);
    Matd values(N, G);
    for (Index n = 0; n < N; ++n) values.row(n) = sampler.draw(rng).transpose();

    BasisSpecd spec{BasisFamily::Fourier, 15};
    const Matd coefs = presmooth(dense_curves(values, grid), spec, 1e-6);
    const auto model = fit_fpca(coefs, l2_gram(spec), 0.999);

    // oracle: dense eigensolve of the analytic covariance on the grid
    const Matd C = matern_cov_matrix(matern, grid);
    Eigen::SelfAdjointEigenSolver<Matd> es(C / double(G));
    const double oracle_lead = es.eigenvalues().maxCoeff();
    CHECK(std::abs(model.eigenvalues[0] - oracle_lead) <= 0.15 * oracle_lead);

    // score variances track model eigenvalues
    const auto scores = project_scores(model, coefs);
    for (Index k = 0; k < std::min<Index>(3, model.components()); ++k) {
        const Vecd col = scores.Y_scores.col(k);
        const double var = (col.array() - col.mean()).square().sum() / double(N - 1);
        CHECK(std::abs(var - model.eigenvalues[k]) <= 0.25 * model.eigenvalues[k]);
    }
}

TEST_CASE("training scores are centered; the mean curve has zero scores")
{
    Rng rng(13);
    const Index N = 25, J = 6;
    Matd coefs(N, J);
    for (Index n = 0; n < N; ++n)
        for (Index j = 0; j < J; ++j) coefs(n, j) = rng.normal() + 0.5 * double(j);
    const auto gram = l2_gram(BasisSpecd{BasisFamily::Fourier, J});
    const auto model = fit_fpca(coefs, gram, 0.99, J);

    const auto scores = project_scores(model, coefs);
    for (Index k = 0; k < scores.Y_scores.cols(); ++k)
        CHECK(std::abs(scores.Y_scores.col(k).mean()) <= 1e-8);

    Matd mean_row = model.mean_coefs.transpose();
    const auto mean_scores = project_scores(model, mean_row);
    CHECK(mean_scores.Y_scores.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("eigenfunction orthonormality in the gram metric")
{
    Rng rng(3);
    const Index N = 50, J = 8;
    Matd coefs(N, J);
    for (Index n = 0; n < N; ++n)
        for (Index j = 0; j < J; ++j) coefs(n, j) = rng.normal() / double(1 + j);
    const auto gram = l2_gram(BasisSpecd{BasisFamily::CubicBSpline, J});
    const auto model = fit_fpca(coefs, gram, 0.999, J);
    const Matd ortho =
        model.eigen_coefs.transpose() * gram.F * model.eigen_coefs;
    CHECK((ortho - Matd::Identity(model.components(), model.components()))
              .cwiseAbs()
              .maxCoeff() <= 1e-8);

    for (Index k = 1; k < model.components(); ++k) {
        CHECK(model.eigenvalues[k] <= model.eigenvalues[k - 1] + 1e-12);
        CHECK(model.eigenvalues[k] >= 0.0);
    }
}

TEST_CASE("reconstruct: zero scores give the mean; constant family round trips")
{
    Rng rng(9);
    const Index N = 20;
    BasisSpecd spec{BasisFamily::Fourier, 4};
    Matd coefs = Matd::Zero(N, 4);
    for (Index n = 0; n < N; ++n) coefs(n, 0) = rng.normal();
    auto model = fit_fpca(coefs, l2_gram(spec), 0.99);
    model.presmooth_spec = spec;

    const Vecd zero = Vecd::Zero(model.components());
    CHECK(reconstruct(model, zero, 0.3) == doctest::Approx(coefs.col(0).mean()).epsilon(1e-10));

    const auto scores = project_scores(model, coefs);
    for (Index n = 0; n < N; ++n) {
        const Vecd s = scores.Y_scores.row(n).transpose();
        CHECK(std::abs(reconstruct(model, s, 0.62) - coefs(n, 0)) <= 1e-8);
    }

    CHECK_THROWS_AS(reconstruct(model, zero, 1.7), std::domain_error);
}

TEST_CASE("training reconstruction error is bounded by the discarded variance")
{
    Rng rng(27);
    const Index N = 60, J = 8;
    Matd coefs(N, J);
    for (Index n = 0; n < N; ++n)
        for (Index j = 0; j < J; ++j) coefs(n, j) = rng.normal() / double(1 + j * j);
    const auto gram = l2_gram(BasisSpecd{BasisFamily::Fourier, J});
    const auto model = fit_fpca(coefs, gram, 0.9, J);
    const auto scores = project_scores(model, coefs);

    // G-norm reconstruction error of the truncated expansion
    const Matd centered = coefs.rowwise() - model.mean_coefs.transpose();
    const Matd recon = scores.Y_scores * model.eigen_coefs.transpose();
    double err = 0, total = 0;
    for (Index n = 0; n < N; ++n) {
        const Vecd d = (centered.row(n) - recon.row(n)).transpose();
        err += d.dot(gram.F * d);
        total += centered.row(n) * gram.F * centered.row(n).transpose();
    }
    err /= double(N - 1);
    total /= double(N - 1);
    CHECK(err <= (1.0 - model.fve) * total + 1e-8);
}

TEST_CASE("fit_fpca is deterministic")
{
    Rng rng(77);
    Matd coefs(30, 5);
    for (Index n = 0; n < 30; ++n)
        for (Index j = 0; j < 5; ++j) coefs(n, j) = rng.normal();
    const auto gram = l2_gram(BasisSpecd{BasisFamily::Fourier, 5});
    const auto a = fit_fpca(coefs, gram, 0.95);
    const auto b = fit_fpca(coefs, gram, 0.95);
    CHECK((a.eigen_coefs - b.eigen_coefs).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("truncation error bounded by the tail eigenvalue mass on fresh samples")
{
    Rng rng(15);
    const Index G = 60, J = 10;
    MaternSpecd matern{0.0, 1.0, 0.25, 0.0, MaternSmoothness::Nu5_2};
    const Vecd grid = Vecd::LinSpaced(G, 0.0, 1.0);
    GpSampler<double> sampler(matern, grid);
    BasisSpecd spec{BasisFamily::Fourier, J};

    const Index N = 150;
    Matd values(N, G);
    for (Index n = 0; n < N; ++n) values.row(n) = sampler.draw(rng).transpose();
    const auto gram = l2_gram(spec);
    const Matd coefs = presmooth(dense_curves(values, grid), spec, 1e-6);
    auto model = fit_fpca(coefs, gram, 0.9, 3);
    model.presmooth_spec = spec;

    // fresh draws: mean-square truncation error <= discarded eigenvalue mass
    const auto full = fit_fpca(coefs, gram, 1.0, J);
    double tail = 0;
    for (Index k = model.components(); k < full.components(); ++k)
        tail += full.eigenvalues[k];

    const Index fresh = 200;
    Matd fresh_values(fresh, G);
    for (Index n = 0; n < fresh; ++n) fresh_values.row(n) = sampler.draw(rng).transpose();
    const Matd fresh_coefs = presmooth(dense_curves(fresh_values, grid), spec, 1e-6);
    const auto fresh_scores = project_scores(model, fresh_coefs);
    const Matd centered = fresh_coefs.rowwise() - model.mean_coefs.transpose();
    const Matd recon = fresh_scores.Y_scores * model.eigen_coefs.transpose();
    double err = 0;
    for (Index n = 0; n < fresh; ++n) {
        const Vecd d = (centered.row(n) - recon.row(n)).transpose();
        err += d.dot(gram.F * d);
    }
    err /= double(fresh);
    CHECK(err <= tail * 1.5 + 0.05);  // Monte-Carlo slack on 200 draws
}
