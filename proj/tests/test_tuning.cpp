#include <doctest.h>

#include <cmath>

#include "fslasso/tuning.hpp"
#include "oracles.hpp"

using namespace fslasso;

namespace {

oracle::TinyInstance identity_instance(double y0, double y1)
{
    Matd X(1, 1);
    X << 1.0;
    BasisMatrixd bm;
    bm.E = Matd::Identity(2, 2);
    bm.times = Vecd::LinSpaced(2, 0.25, 0.75);
    ObservationSetd obs;
    Vecd v(2);
    v << y0, y1;
    obs.subjects.push_back({bm.times, v});
    oracle::TinyInstance inst;
    inst.design = build_sparse_design(make_design(X, false), {bm}, obs);
    inst.A = inst.design.materialize();
    inst.y = inst.design.response();
    inst.I = 1;
    inst.J = 2;
    return inst;
}

}  // namespace

TEST_CASE("lambda_max: single identity group is the euclidean norm of y")
{
    auto inst = identity_instance(3.0, 4.0);
    CHECK(lambda_max(inst.design) == doctest::Approx(5.0).epsilon(1e-12));

    auto zero = identity_instance(0.0, 0.0);
    CHECK(lambda_max(zero.design) == 0.0);
}

TEST_CASE("fit is zero just above lambda_max and active just below")
{
    Rng rng(12);
    auto inst = oracle::random_sparse_instance(rng, 6, 5, 2);
    const double lmax = lambda_max(inst.design);
    CHECK(fit(inst.design, lmax + 1e-9).B.active_set.empty());
    CHECK(fit(inst.design, lmax * (1 - 1e-3)).B.active_set.size() >= 1);
}

TEST_CASE("screening drops orthogonal groups near lambda0 and never the argmax")
{
    // two groups: one carries all of y, the other is orthogonal to it
    Matd X(2, 2);
    X << 1.0, 1.0, 1.0, -1.0;
    std::vector<BasisMatrixd> bases(2);
    for (auto& bm : bases) {
        bm.E = Matd::Ones(1, 1);
        bm.times = Vecd::Constant(1, 0.5);
    }
    ObservationSetd obs;
    obs.subjects.push_back({Vecd::Constant(1, 0.5), Vecd::Constant(1, 1.0)});
    obs.subjects.push_back({Vecd::Constant(1, 0.5), Vecd::Constant(1, 1.0)});
    const auto d = build_sparse_design(make_design(X, false), bases, obs);
    // A^T y = (2, 0): group 1 has zero correlation
    const double l0 = lambda_max(d);
    CHECK(l0 == doctest::Approx(2.0));

    const auto rep = screen(d, 0.95 * l0);
    CHECK(std::find(rep.dropped.begin(), rep.dropped.end(), 1) != rep.dropped.end());
    CHECK(std::find(rep.kept.begin(), rep.kept.end(), 0) != rep.kept.end());

    // the argmax group survives any lambda in (0, lambda0]
    for (double frac : {1.0, 0.5, 0.1, 0.01}) {
        const auto r = screen(d, frac * l0);
        CHECK(std::find(r.kept.begin(), r.kept.end(), 0) != r.kept.end());
    }
}

TEST_CASE("screen input validation and the trivially-safe lambda > lambda0 report")
{
    Rng rng(31);
    auto inst = oracle::random_sparse_instance(rng, 4, 3, 2);
    CHECK_THROWS_AS(screen(inst.design, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(screen(inst.design, -1.0), std::invalid_argument);
    const auto rep = screen(inst.design, lambda_max(inst.design) * 2.0);
    CHECK(rep.kept.empty());
    CHECK(static_cast<Index>(rep.dropped.size()) == inst.design.group_count());
}

TEST_CASE("screened groups are zero in the unscreened solution")
{
    for (int seed = 0; seed < 25; ++seed) {
        Rng rng(400 + seed);
        auto inst = oracle::random_sparse_instance(rng, 6, 8, 2);
        const double lam = 0.5 * lambda_max(inst.design);
        const auto rep = screen(inst.design, lam);
        const auto full = fit(inst.design, lam);
        for (Index i : rep.dropped) CHECK(full.B.B.row(i).norm() == 0.0);
    }
}

TEST_CASE("choose_screening_lambda endpoints and monotonicity")
{
    Rng rng(9);
    auto inst = oracle::random_sparse_instance(rng, 8, 10, 2);

    const auto all = choose_screening_lambda(inst.design, 10);
    CHECK(all.keep_all_warning);
    CHECK(all.lambda > 0.0);

    const auto one = choose_screening_lambda(inst.design, 1);
    const auto rep1 = screen(inst.design, one.lambda);
    CHECK(rep1.kept.size() <= 1);
    Index argmax;
    rep1.aty_norms.maxCoeff(&argmax);
    if (!rep1.kept.empty()) CHECK(rep1.kept.front() == argmax);

    const auto three = choose_screening_lambda(inst.design, 3);
    CHECK(static_cast<Index>(screen(inst.design, three.lambda).kept.size()) <= 3);
    CHECK(static_cast<Index>(screen(inst.design, three.lambda * 1.01).kept.size()) <= 3);
}

TEST_CASE("single-lambda path is the zero fit")
{
    Rng rng(2);
    auto inst = oracle::random_sparse_instance(rng, 5, 4, 2);
    Vecd grid(1);
    grid[0] = lambda_max(inst.design);
    const auto path = fit_path(inst.design, grid);
    CHECK(path.fits.size() == 1);
    CHECK(path.fits[0].B.active_set.empty());
    CHECK(path.fits[0].converged);
}

TEST_CASE("warm-started path matches cold starts at every lambda")
{
    Rng rng(44);
    auto inst = oracle::random_sparse_instance(rng, 8, 6, 2);
    const auto grid = default_lambda_grid(inst.design, 20, 0.05);
    const auto path = fit_path(inst.design, grid);
    REQUIRE(path.all_converged());

    double prev_obj = std::numeric_limits<double>::infinity();
    for (Index k = 0; k < grid.size(); ++k) {
        const auto cold = fit(inst.design, grid[k]);
        CHECK(std::abs(path.fits[k].objective - cold.objective) <=
              1e-7 * std::max(1.0, std::abs(cold.objective)));
        // optimal objective is nondecreasing in lambda
        CHECK(path.fits[k].objective <= prev_obj + 1e-9);
        prev_obj = path.fits[k].objective;
    }

    // entry order: every active group's entry lambda is recorded
    for (Index i = 0; i < inst.I; ++i) {
        const bool ever_active = path.fits.back().B.B.row(i).norm() > 0;
        if (std::isfinite(path.entry_lambda[i])) {
            CHECK(path.entry_lambda[i] <= grid[0]);
        } else {
            (void)ever_active;  // never entered anywhere on the path
            for (const auto& f : path.fits) CHECK(f.B.B.row(i).norm() == 0.0);
        }
    }
}

TEST_CASE("path grid validation")
{
    Rng rng(3);
    auto inst = oracle::random_sparse_instance(rng, 4, 3, 2);
    Vecd bad(2);
    bad << 1.0, 1.0;
    CHECK_THROWS_AS(fit_path(inst.design, bad), std::invalid_argument);
    bad << 1.0, -0.5;
    CHECK_THROWS_AS(fit_path(inst.design, bad), std::invalid_argument);
}

TEST_CASE("refit: noiseless data with the correct active set interpolates")
{
    Rng rng(50);
    const Index N = 8, I = 4, J = 2, M = 3;
    Matd X(N, I);
    for (Index n = 0; n < N; ++n)
        for (Index i = 0; i < I; ++i) X(n, i) = rng.normal();
    std::vector<BasisMatrixd> bases(static_cast<std::size_t>(N));
    ObservationSetd obs;
    for (Index n = 0; n < N; ++n) {
        auto& bm = bases[static_cast<std::size_t>(n)];
        bm.times = Vecd::LinSpaced(M, 0.1, 0.9);
        bm.E.resize(M, J);
        for (Index m = 0; m < M; ++m)
            for (Index j = 0; j < J; ++j) bm.E(m, j) = rng.normal();
        obs.subjects.push_back({bm.times, Vecd::Zero(M)});
    }
    const auto dm = make_design(X, false);
    const auto scaffold = build_sparse_design(dm, bases, obs);

    Matd B_true = Matd::Zero(I, J);
    B_true.row(0) << 1.0, -0.5;
    B_true.row(2) << 0.3, 0.8;
    const Vecd clean = scaffold.apply(B_true);
    Index at = 0;
    for (Index n = 0; n < N; ++n) {
        obs.subjects[static_cast<std::size_t>(n)].values = clean.segment(at, M);
        at += M;
    }
    const auto clean_design = build_sparse_design(dm, bases, obs);

    auto [refit, sigma2] = refit_and_sigma2(clean_design, {0, 2});
    CHECK(sigma2 <= 1e-10);
    CHECK((refit.B - B_true).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("refit with empty active set reports the mean square of y")
{
    auto inst = identity_instance(1.0, 2.0);
    auto [B, sigma2] = refit_and_sigma2(inst.design, {});
    CHECK(B.active_set.empty());
    CHECK(sigma2 == doctest::Approx(2.5));  // (1 + 4) / 2
}

TEST_CASE("refit matches the dense normal-equations oracle")
{
    Rng rng(71);
    for (int rep = 0; rep < 5; ++rep) {
        auto inst = oracle::random_sparse_instance(rng, 8, 4, 2, 4);
        std::vector<Index> active{0, 2, 3};
        auto [B, sigma2] = refit_and_sigma2(inst.design, active);

        Matd A_act(inst.design.rows(), 3 * inst.J);
        for (std::size_t k = 0; k < active.size(); ++k)
            A_act.middleCols(static_cast<Index>(k) * inst.J, inst.J) =
                inst.design.materialize_group(active[k]);
        const Vecd coef =
            (A_act.transpose() * A_act).ldlt().solve(A_act.transpose() * inst.y);
        for (std::size_t k = 0; k < active.size(); ++k)
            CHECK((B.B.row(active[k]).transpose() -
                   coef.segment(static_cast<Index>(k) * inst.J, inst.J))
                      .cwiseAbs()
                      .maxCoeff() <= 1e-8);
        const double rss = (inst.y - A_act * coef).squaredNorm();
        CHECK(sigma2 ==
              doctest::Approx(rss / double(inst.design.rows())).epsilon(1e-8));
    }
}

TEST_CASE("criterion scores: BIC, AIC, EBIC shapes")
{
    Criteriond bic;
    CriterionInputsd in;
    in.sigma2 = 1.0;
    in.active_count = 3;
    in.I = 20;
    in.group_dim = 4;
    in.N = 50;
    in.rows = 500;
    CHECK(criterion_score(in, bic) ==
          doctest::Approx(4.0 * 3.0 * std::log(50.0)).epsilon(1e-12));

    Criteriond aic;
    aic.kind = CriterionKind::AIC;
    CHECK(criterion_score(in, aic) == doctest::Approx(4.0 * 3.0 * 2.0).epsilon(1e-12));

    Criteriond ebic;
    ebic.kind = CriterionKind::EBIC;
    in.active_count = 0;
    const double b0 = criterion_score(in, bic);
    CHECK(criterion_score(in, ebic) == doctest::Approx(b0).epsilon(1e-12));
    in.active_count = 2;
    CHECK(criterion_score(in, ebic) ==
          doctest::Approx(criterion_score(in, bic) +
                          2.0 * 0.2 * log_binomial<double>(20, 2))
              .epsilon(1e-12));

    in.sigma2 = 0.0;
    CHECK(criterion_score(in, bic) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("select: single-point path and the all-zero tie rule")
{
    Rng rng(5);
    auto inst = oracle::random_sparse_instance(rng, 6, 4, 2);
    Vecd single(1);
    single[0] = lambda_max(inst.design);
    const auto path1 = fit_path(inst.design, single);
    const auto sel1 = select(inst.design, path1, Criteriond{});
    CHECK(sel1.chosen_lambda == single[0]);

    // grid entirely above lambda_max: every fit zero, tie resolved to largest
    Vecd above(3);
    const double lmax = lambda_max(inst.design);
    above << 3 * lmax, 2 * lmax, 1.5 * lmax;
    const auto path2 = fit_path(inst.design, above);
    const auto sel2 = select(inst.design, path2, Criteriond{});
    CHECK(sel2.chosen_lambda == above[0]);
    CHECK(sel2.refit_B.active_set.empty());
}

TEST_CASE("select agrees with exhaustive scoring over the path")
{
    Rng rng(17);
    auto inst = oracle::random_sparse_instance(rng, 10, 6, 2);
    const auto grid = default_lambda_grid(inst.design, 30, 0.02);
    const auto path = fit_path(inst.design, grid);
    Criteriond crit;
    const auto sel = select(inst.design, path, crit);

    Index best = 0;
    Vecd scores(grid.size());
    for (Index l = 0; l < grid.size(); ++l) {
        auto [B, sigma2] = refit_and_sigma2(inst.design, path.fits[l].B.active_set);
        CriterionInputsd in;
        in.sigma2 = sigma2;
        in.active_count = static_cast<Index>(path.fits[l].B.active_set.size());
        in.I = inst.design.group_count();
        in.group_dim = inst.design.group_dim();
        in.N = inst.design.subjects();
        in.rows = inst.design.rows();
        scores[l] = criterion_score(in, crit);
        if (scores[l] < scores[best]) best = l;
    }
    CHECK(sel.chosen_index == best);
    CHECK((sel.scores - scores).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + scores.cwiseAbs().maxCoeff()));
}

TEST_CASE("cross-validation selection runs and partitions subjects")
{
    Rng rng(23);
    auto inst = oracle::random_sparse_instance(rng, 10, 5, 2);
    const auto grid = default_lambda_grid(inst.design, 12, 0.05);
    const auto path = fit_path(inst.design, grid);
    Criteriond crit;
    crit.kind = CriterionKind::CVKFold;
    crit.cv_folds = 2;
    const auto sel = select(inst.design, path, crit);
    CHECK(sel.scores.size() == grid.size());
    CHECK((sel.scores.array() >= 0.0).all());
    CHECK(sel.chosen_lambda >= grid[grid.size() - 1]);
    CHECK(sel.chosen_lambda <= grid[0]);

    Criteriond refit_crit = crit;
    refit_crit.refit_cv = true;
    const auto sel2 = select(inst.design, path, refit_crit);
    CHECK(sel2.scores.size() == grid.size());
}
