#include <doctest.h>

#include <cmath>

#include "fslasso/solver.hpp"
#include "fslasso/tuning.hpp"
#include "oracles.hpp"

using namespace fslasso;

namespace {

oracle::TinyInstance scalar_lasso_instance()
{
    // A = (1,1)^T, y = (1,1): soft(A^T y, lambda)/2 in closed form
    Matd X(2, 1);
    X << 1.0, 1.0;
    Matd S(2, 1);
    S << 1.0, 1.0;
    oracle::TinyInstance inst;
    inst.design = GroupDesignd::implicit_kronecker(make_design(X, false), S);
    // that builds a 2x2 design; build the 2x1 single-group system instead
    ObservationSetd obs;
    Vecd t0 = Vecd::Constant(1, 0.5), t1 = Vecd::Constant(1, 0.5);
    obs.subjects.push_back({t0, Vecd::Constant(1, 1.0)});
    obs.subjects.push_back({t1, Vecd::Constant(1, 1.0)});
    std::vector<BasisMatrixd> bases(2);
    for (auto& bm : bases) {
        bm.E = Matd::Ones(1, 1);
        bm.times = Vecd::Constant(1, 0.5);
    }
    inst.design = build_sparse_design(make_design(X, false), bases, obs);
    inst.A = inst.design.materialize();
    inst.y = inst.design.response();
    inst.I = 1;
    inst.J = 1;
    return inst;
}

}  // namespace

TEST_CASE("group soft threshold")
{
    Vecd v(2);
    v << 3.0, 4.0;
    CHECK(group_soft_threshold(v, 5.0).norm() == 0.0);  // boundary ||v|| == t
    const Vecd half = group_soft_threshold(v, 2.5);
    CHECK(half[0] == doctest::Approx(1.5));
    CHECK(half[1] == doctest::Approx(2.0));
    CHECK(group_soft_threshold(Vecd(Vecd::Zero(3)), 1.0).norm() == 0.0);
}

TEST_CASE("objective at zero is half the response energy")
{
    Rng rng(1);
    auto inst = oracle::random_sparse_instance(rng, 4, 3, 2);
    const Matd B0 = Matd::Zero(3, 2);
    CHECK(objective_value(inst.design, B0, 0.7) ==
          doctest::Approx(0.5 * inst.y.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("objective zero at the exact least-squares solution, lambda=0")
{
    auto inst = scalar_lasso_instance();
    Matd B(1, 1);
    B << 1.0;  // A = (1,1)^T, y = (1,1): exact interpolation
    CHECK(objective_value(inst.design, B, 0.0) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("objective matches the materialized two-term oracle")
{
    Rng rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        auto inst = oracle::random_sparse_instance(rng, 4, 3, 2);
        Matd B(3, 2);
        for (Index i = 0; i < 3; ++i)
            for (Index j = 0; j < 2; ++j) B(i, j) = rng.normal();
        const double lam = 0.3 + rng.uniform();
        CHECK(objective_value(inst.design, B, lam) ==
              doctest::Approx(oracle::objective_dense(inst.A, inst.y, B, lam))
                  .epsilon(1e-12));
    }
}

TEST_CASE("lambda at or above lambda_max yields the zero fit quickly")
{
    Rng rng(23);
    auto inst = oracle::random_sparse_instance(rng, 5, 4, 2);
    const double lmax = lambda_max(inst.design);
    const auto res = fit(inst.design, lmax * 1.0001);
    CHECK(res.B.active_set.empty());
    CHECK(res.iterations <= 2);
    CHECK(res.converged);
    CHECK(res.kkt_residual == doctest::Approx(0.0).epsilon(1e-12));

    const auto below = fit(inst.design, lmax * (1.0 - 1e-3));
    CHECK(below.B.active_set.size() >= 1);
}

TEST_CASE("closed-form scalar lasso: A=(1,1)^T, y=(1,1), lambda=1 -> B=0.5")
{
    auto inst = scalar_lasso_instance();
    for (Algorithm alg :
         {Algorithm::BlockCoordinateDescent, Algorithm::AcceleratedProximalGradient}) {
        SolverConfigd cfg;
        cfg.algorithm = alg;
        cfg.kkt_tol = 1e-10;
        const auto res = fit(inst.design, 1.0, cfg);
        CHECK(res.B.B(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(res.kkt_residual <= 1e-10);
    }
}

TEST_CASE("subgradient oracle reproduces the closed-form optimum")
{
    auto inst = scalar_lasso_instance();
    const auto sg = oracle::subgradient_min(inst.A, inst.y, 1.0, 1, 1, 200000);
    CHECK(sg.objective == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("fit matches a long-run subgradient oracle, active sets equal")
{
    Rng rng(101);
    auto inst = oracle::random_sparse_instance(rng, 8, 4, 2);
    const double lam = 0.3 * lambda_max(inst.design);
    const auto res = fit(inst.design, lam);
    const auto sg = oracle::subgradient_min(inst.A, inst.y, lam, 4, 2, 1000000);
    CHECK(std::abs(res.objective - sg.objective) <=
          1e-6 * std::max(1.0, std::abs(sg.objective)));

    for (Index i = 0; i < 4; ++i) {
        const bool ours = res.B.B.row(i).norm() > 1e-7;
        const bool theirs = sg.B.row(i).norm() > 1e-5;
        CHECK(ours == theirs);
    }
}

TEST_CASE("kkt residual is zero at zero when lambda >= lambda_max")
{
    Rng rng(3);
    auto inst = oracle::random_dense_instance(rng, 5, 3, 2);
    const double lmax = lambda_max(inst.design);
    CHECK(kkt_residual(inst.design, Matd(Matd::Zero(3, 2)), lmax) <= 1e-12);
    CHECK(kkt_residual(inst.design, Matd(Matd::Zero(3, 2)), lmax * 2) == 0.0);
}

TEST_CASE("kkt residual vanishes at the analytic optimum and reacts to perturbation")
{
    auto inst = scalar_lasso_instance();
    Matd B(1, 1);
    B << 0.5;
    CHECK(kkt_residual(inst.design, B, 1.0) <= 1e-10);
    B(0, 0) += 0.1;
    CHECK(kkt_residual(inst.design, B, 1.0) > 1e-3);
}

TEST_CASE("BCD objective is nonincreasing in the sweep budget")
{
    Rng rng(77);
    auto inst = oracle::random_sparse_instance(rng, 6, 4, 2);
    const double lam = 0.2 * lambda_max(inst.design);
    double prev = std::numeric_limits<double>::infinity();
    for (Index iters : {1, 2, 3, 5, 10, 50}) {
        SolverConfigd cfg;
        cfg.max_iters = iters;
        const auto res = fit(inst.design, lam, cfg);
        CHECK(res.objective <= prev + 1e-12);
        prev = res.objective;
    }
}

TEST_CASE("BCD and APG agree on objective and active sets across seeds")
{
    for (int seed = 0; seed < 100; ++seed) {
        Rng rng(1000 + seed);
        auto inst = (seed % 2 == 0) ? oracle::random_sparse_instance(rng, 5, 4, 2)
                                    : oracle::random_dense_instance(rng, 5, 4, 2);
        const double lam = 0.35 * lambda_max(inst.design);

        SolverConfigd bcd;
        const auto res_bcd = fit(inst.design, lam, bcd);
        SolverConfigd apg;
        apg.algorithm = Algorithm::AcceleratedProximalGradient;
        apg.max_iters = 50000;
        const auto res_apg = fit(inst.design, lam, apg);

        CHECK(std::abs(res_bcd.objective - res_apg.objective) <=
              1e-7 * std::max(1.0, std::abs(res_bcd.objective)));
        CHECK(res_bcd.B.active_set == res_apg.B.active_set);
    }
}

TEST_CASE("kkt residual certifies near-optimality on tiny instances")
{
    Rng rng(55);
    for (int rep = 0; rep < 10; ++rep) {
        auto inst = oracle::random_sparse_instance(rng, 5, 3, 2);
        const double lam = 0.4 * lambda_max(inst.design);
        const auto res = fit(inst.design, lam);
        const auto sg = oracle::subgradient_min(inst.A, inst.y, lam, 3, 2, 400000);
        const double eps = std::max(res.kkt_residual, 1e-9);
        const double slack = eps * penalty_value(res.B.B) + eps * eps + 1e-9;
        CHECK(res.objective <= sg.objective + slack);
    }
}

TEST_CASE("warm start from the solution converges immediately")
{
    Rng rng(8);
    auto inst = oracle::random_sparse_instance(rng, 6, 4, 2);
    const double lam = 0.3 * lambda_max(inst.design);
    const auto first = fit(inst.design, lam);
    SolverConfigd cfg;
    cfg.warm_start = first.B.B;
    const auto second = fit(inst.design, lam, cfg);
    CHECK(second.iterations <= 2);
    CHECK(second.objective == doctest::Approx(first.objective).epsilon(1e-12));
}

TEST_CASE("solver config validation")
{
    Rng rng(4);
    auto inst = oracle::random_dense_instance(rng, 3, 2, 2);
    SolverConfigd cfg;
    cfg.max_iters = 0;
    CHECK_THROWS_AS(fit(inst.design, 1.0, cfg), std::invalid_argument);
    CHECK_THROWS_AS(fit(inst.design, -1.0), std::invalid_argument);
}
