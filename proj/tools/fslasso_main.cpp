// Command-line front end: simulate / fit / path / screen / select / roc /
// re-check / bench / experiment. Exit codes: 0 ok, 2 input error, 3 numerical
// failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fslasso/fslasso.hpp"

namespace {

using namespace fslasso;

struct CommonArgs {
    std::string data_path;
    std::string design_path;
    std::string method = "sparse";
    std::string out;
    Index basis_j = 30;
    Index presmooth_j = 15;
    double presmooth_ridge = kDefaultPresmoothRidge;
    double fve = kDefaultFveTarget;
    bool no_center = false;
    bool no_standardize = false;
    std::string lambda_grid;
    std::string criterion = "bic";
    double ebic_gamma = 0.2;
    int cv_folds = 2;
};

void add_data_options(CLI::App* cmd, CommonArgs& args)
{
    cmd->add_option("--data", args.data_path, "long CSV (subject_id,t,y)")->required();
    cmd->add_option("--design", args.design_path, "design CSV (header row + N x I values)")
        ->required();
    cmd->add_option("--method", args.method, "sparse|dense|lasso|tclasso")
        ->check(CLI::IsMember({"sparse", "dense", "lasso", "tclasso"}));
    cmd->add_option("--basis-j", args.basis_j, "basis size for the sparse method");
    cmd->add_option("--presmooth-j", args.presmooth_j, "pre-smoothing basis size (dense)");
    cmd->add_option("--presmooth-ridge", args.presmooth_ridge, "pre-smoothing ridge (dense)");
    cmd->add_option("--fve", args.fve, "FPCA fraction of variance explained target");
    cmd->add_flag("--no-center", args.no_center, "skip the pooled mean correction");
    cmd->add_flag("--no-standardize", args.no_standardize, "keep raw covariate columns");
}

PipelineOptionsd pipeline_options(const CommonArgs& args)
{
    PipelineOptionsd opts;
    opts.sparse_J = args.basis_j;
    opts.presmooth_J = args.presmooth_j;
    opts.presmooth_ridge = args.presmooth_ridge;
    opts.fve_target = args.fve;
    opts.center = !args.no_center;
    opts.standardize = !args.no_standardize;
    if (args.criterion == "aic") opts.criterion.kind = CriterionKind::AIC;
    else if (args.criterion == "bic") opts.criterion.kind = CriterionKind::BIC;
    else if (args.criterion == "ebic") opts.criterion.kind = CriterionKind::EBIC;
    else if (args.criterion == "cv") opts.criterion.kind = CriterionKind::CVKFold;
    else throw std::invalid_argument("unknown criterion '" + args.criterion + "'");
    opts.criterion.ebic_gamma = args.ebic_gamma;
    opts.criterion.cv_folds = args.cv_folds;
    return opts;
}

PreparedModeld load_and_prepare(const CommonArgs& args, const PipelineOptionsd& opts)
{
    const auto obs = read_long_csv(args.data_path);
    const auto X = read_design_csv(args.design_path);
    return prepare(method_from_name(args.method), obs, X, opts);
}

Vecd parse_lambda_grid(const GroupDesignd& design, const std::string& arg)
{
    if (arg.empty()) return default_lambda_grid(design);
    if (arg.find(':') != std::string::npos) {
        const auto pos = arg.find(':');
        const Index count = static_cast<Index>(std::stol(arg.substr(0, pos)));
        const double floor = std::stod(arg.substr(pos + 1));
        return default_lambda_grid(design, count, floor);
    }
    std::vector<double> vals;
    std::stringstream ss(arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    require(!vals.empty(), "--lambda-grid: no values parsed");
    Vecd grid(static_cast<Index>(vals.size()));
    for (std::size_t k = 0; k < vals.size(); ++k) grid[static_cast<Index>(k)] = vals[k];
    return grid;
}

std::vector<Method> parse_methods(const std::string& arg)
{
    std::vector<Method> out;
    std::stringstream ss(arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(method_from_name(tok));
    require(!out.empty(), "--methods: none parsed");
    return out;
}

int cmd_simulate(const std::string& scenario_path, std::uint64_t seed_override,
                 bool has_seed, const std::string& out_dir)
{
    SimScenariod sc = read_scenario(scenario_path);
    if (has_seed) sc.seed = seed_override;
    Rng rng(sc.seed);
    const SimDatad data = gen_dataset(sc, rng);

    std::filesystem::create_directories(out_dir);
    write_long_csv(out_dir + "/data.csv", data.obs);
    write_design_csv(out_dir + "/design.csv", data.X);
    write_json(out_dir + "/truth.json", truth_to_json(data.truth));
    write_json(out_dir + "/scenario.json", scenario_to_json(sc));
    std::cout << "wrote " << out_dir << "/{data.csv,design.csv,truth.json,scenario.json}\n";
    return 0;
}

int cmd_fit(const CommonArgs& args, double lambda)
{
    const auto opts = pipeline_options(args);
    const auto model = load_and_prepare(args, opts);
    const auto result = fit(model.design, lambda, opts.solver);
    json j = fit_to_json(result);
    j["method"] = args.method;
    if (!args.out.empty()) write_json(args.out, j);
    std::cout << "lambda=" << result.lambda << " objective=" << result.objective
              << " kkt=" << result.kkt_residual << " active=" << result.B.active_set.size()
              << (result.converged ? "" : " (not converged)") << '\n';
    return 0;
}

int cmd_path(const CommonArgs& args)
{
    const auto opts = pipeline_options(args);
    const auto model = load_and_prepare(args, opts);
    const auto grid = parse_lambda_grid(model.design, args.lambda_grid);
    const auto path = fit_path(model.design, grid, opts.solver);
    json j = path_to_json(path);
    j["method"] = args.method;
    if (!args.out.empty()) write_json(args.out, j);
    Index final_active = path.fits.back().B.active_set.size();
    std::cout << "path of " << grid.size() << " lambdas, final active set " << final_active
              << (path.all_converged() ? "" : " (some fits not converged)") << '\n';
    return 0;
}

int cmd_screen(const CommonArgs& args, double lambda, Index keep_target)
{
    const auto opts = pipeline_options(args);
    const auto model = load_and_prepare(args, opts);

    double lam = lambda;
    bool warned = false;
    if (lam <= 0) {
        require(keep_target >= 1, "screen: pass --lambda or --keep");
        const auto chosen = choose_screening_lambda(model.design, keep_target);
        lam = chosen.lambda;
        warned = chosen.keep_all_warning;
    }
    const auto rep = screen(model.design, lam);

    json kept = json::array(), dropped = json::array();
    for (Index i : rep.kept) kept.push_back(i);
    for (Index i : rep.dropped) dropped.push_back(i);
    json j{{"format_version", kFormatVersion},
           {"lambda", lam},
           {"lambda0", rep.lambda0},
           {"kept", kept},
           {"dropped", dropped},
           {"keep_all_warning", warned}};
    if (!args.out.empty()) write_json(args.out, j);
    std::cout << "lambda=" << lam << " kept=" << rep.kept.size()
              << " dropped=" << rep.dropped.size() << '\n';
    return 0;
}

int cmd_select(const CommonArgs& args)
{
    const auto opts = pipeline_options(args);
    const auto model = load_and_prepare(args, opts);
    const auto grid = parse_lambda_grid(model.design, args.lambda_grid);
    const auto path = fit_path(model.design, grid, opts.solver);
    const auto sel = select(model.design, path, opts.criterion, opts.solver);
    json j = selection_to_json(sel);
    j["method"] = args.method;
    if (!args.out.empty()) write_json(args.out, j);
    std::cout << "chosen lambda=" << sel.chosen_lambda << " active="
              << sel.refit_B.active_set.size() << " sigma2=" << sel.sigma2_hat << '\n';
    return 0;
}

int cmd_roc(const CommonArgs& args, const std::string& truth_path)
{
    const auto opts = pipeline_options(args);
    const auto model = load_and_prepare(args, opts);
    const auto truth = read_truth(truth_path);
    const auto grid = parse_lambda_grid(model.design, args.lambda_grid);
    const auto path = fit_path(model.design, grid, opts.solver);
    const auto roc = roc_from_path(path, truth.support, model.design.group_count());

    json points = json::array();
    for (const auto& [fpr, tpr] : roc.points) points.push_back(json{{"fpr", fpr}, {"tpr", tpr}});
    json j{{"format_version", kFormatVersion},
           {"method", args.method},
           {"auc", roc.undefined ? json(nullptr) : json(roc.auc)},
           {"points", points}};
    if (!args.out.empty()) write_json(args.out, j);
    if (roc.undefined)
        std::cout << "auc undefined (empty truth support)\n";
    else
        std::cout << "auc=" << roc.auc << '\n';
    return 0;
}

int cmd_re_check(const CommonArgs& args, Index i0, Index samples, std::uint64_t seed)
{
    const auto opts = pipeline_options(args);
    const auto model = load_and_prepare(args, opts);
    Rng rng(seed);
    const auto diag = re_diagnostic(model.design, i0, samples, rng);
    json j{{"format_version", kFormatVersion},
           {"alpha_hat", diag.alpha_hat},
           {"samples", diag.samples},
           {"I0", diag.I0},
           {"cone_factor", diag.cone_factor},
           {"note", "upper estimate of the restricted eigenvalue constant"}};
    if (!args.out.empty()) write_json(args.out, j);
    std::cout << "alpha_hat=" << diag.alpha_hat << " (upper estimate, " << samples
              << " samples)\n";
    return 0;
}

int cmd_bench(const std::string& scenario_path, std::uint64_t seed_override, bool has_seed,
              const std::string& out)
{
    SimScenariod sc = read_scenario(scenario_path);
    if (has_seed) sc.seed = seed_override;
    Rng rng(sc.seed);
    const SimDatad data = gen_dataset(sc, rng);

    PipelineOptionsd opts;
    json methods = json::object();
    double sparse_s = 0, dense_s = 0;
    for (Method m : {Method::Sparse, Method::Dense}) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto prepared = prepare(m, data.obs, data.X, opts);
        const auto path = run_path(prepared, opts);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        (m == Method::Sparse ? sparse_s : dense_s) = secs;
        methods[method_name(m)] =
            json{{"seconds", secs},
                 {"final_active", path.fits.back().B.active_set.size()}};
        std::cout << method_name(m) << ": " << secs << " s\n";
    }
    json j{{"format_version", kFormatVersion},
           {"kind", "bench"},
           {"scenario", scenario_to_json(sc)},
           {"methods", methods},
           {"sparse_over_dense", dense_s > 0 ? sparse_s / dense_s : 0.0}};
    if (!out.empty()) write_json(out, j);
    std::cout << "sparse/dense time ratio: " << (dense_s > 0 ? sparse_s / dense_s : 0.0)
              << '\n';
    return 0;
}

int cmd_experiment(const std::string& scenario_path, const std::string& methods_arg,
                   Index replicates, int threads, const CommonArgs& args,
                   std::uint64_t seed_override, bool has_seed, Index test_subjects)
{
    SimScenariod sc = read_scenario(scenario_path);
    if (has_seed) sc.seed = seed_override;

    ExperimentConfig cfg;
    cfg.methods = parse_methods(methods_arg);
    cfg.replicates = replicates;
    cfg.threads = threads;
    cfg.test_subjects = test_subjects;
    cfg.options = pipeline_options(args);

    const auto report = run_experiment(sc, cfg);
    require(!args.out.empty(), "experiment: --out directory required");
    write_report_files(report, args.out);
    for (const auto& s : report.methods)
        std::cout << method_name(s.method) << ": auc_mean=" << s.auc_mean
                  << " mse_mean=" << s.mse_mean << " ok=" << s.ok_count << "/"
                  << report.replicates << '\n';
    std::cout << "report written to " << args.out << "/report.json\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Function-on-scalar group-lasso fitting, screening, and simulation"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string scenario_path, truth_path, methods_arg = "sparse,dense";
    double lambda = -1;
    Index keep_target = 0, replicates = 100, samples = 1000, i0 = 5, test_subjects = 0;
    int threads = 0;
    std::uint64_t seed = 1;
    bool has_seed = false;

    auto* sim = app.add_subcommand("simulate", "generate a dataset from a scenario file");
    sim->add_option("--scenario", scenario_path, "scenario JSON")->required();
    sim->add_option("--seed", seed)->each([&](const std::string&) { has_seed = true; });
    sim->add_option("--out", args.out, "output directory")->required();

    auto* fit_cmd = app.add_subcommand("fit", "solve at a single lambda");
    add_data_options(fit_cmd, args);
    fit_cmd->add_option("--lambda", lambda, "penalty value")->required();
    fit_cmd->add_option("--out", args.out, "fit JSON path");

    auto* path_cmd = app.add_subcommand("path", "warm-started regularization path");
    add_data_options(path_cmd, args);
    path_cmd->add_option("--lambda-grid", args.lambda_grid,
                         "'count:floor_ratio' or comma-separated values");
    path_cmd->add_option("--out", args.out, "path JSON");

    auto* screen_cmd = app.add_subcommand("screen", "safe screening report");
    add_data_options(screen_cmd, args);
    screen_cmd->add_option("--lambda", lambda, "penalty to screen at");
    screen_cmd->add_option("--keep", keep_target, "pick lambda keeping at most this many");
    screen_cmd->add_option("--out", args.out, "screen JSON");

    auto* select_cmd = app.add_subcommand("select", "path + criterion selection + refit");
    add_data_options(select_cmd, args);
    select_cmd->add_option("--criterion", args.criterion, "aic|bic|ebic|cv")
        ->check(CLI::IsMember({"aic", "bic", "ebic", "cv"}));
    select_cmd->add_option("--ebic-gamma", args.ebic_gamma);
    select_cmd->add_option("--cv-folds", args.cv_folds);
    select_cmd->add_option("--lambda-grid", args.lambda_grid);
    select_cmd->add_option("--out", args.out, "selection JSON");

    auto* roc_cmd = app.add_subcommand("roc", "entry-order ROC against a truth file");
    add_data_options(roc_cmd, args);
    roc_cmd->add_option("--truth", truth_path, "truth JSON")->required();
    roc_cmd->add_option("--lambda-grid", args.lambda_grid);
    roc_cmd->add_option("--out", args.out, "roc JSON");

    auto* re_cmd = app.add_subcommand("re-check", "Monte-Carlo restricted eigenvalue probe");
    add_data_options(re_cmd, args);
    re_cmd->add_option("--i0", i0, "support size of the cone");
    re_cmd->add_option("--samples", samples, "Monte-Carlo samples");
    re_cmd->add_option("--seed", seed);
    re_cmd->add_option("--out", args.out, "diagnostic JSON");

    auto* bench_cmd = app.add_subcommand("bench", "time sparse vs dense on one replicate");
    bench_cmd->add_option("--scenario", scenario_path)->required();
    bench_cmd->add_option("--seed", seed)->each([&](const std::string&) { has_seed = true; });
    bench_cmd->add_option("--out", args.out, "bench JSON");

    auto* exp_cmd = app.add_subcommand("experiment", "replicated simulation study");
    exp_cmd->add_option("--scenario", scenario_path)->required();
    exp_cmd->add_option("--methods", methods_arg, "comma list of sparse,dense,lasso,tclasso");
    exp_cmd->add_option("--replicates", replicates);
    exp_cmd->add_option("--threads", threads, "0 = hardware concurrency");
    exp_cmd->add_option("--seed", seed)->each([&](const std::string&) { has_seed = true; });
    exp_cmd->add_option("--test-subjects", test_subjects, "0 = same as N");
    exp_cmd->add_option("--criterion", args.criterion, "aic|bic|ebic|cv")
        ->check(CLI::IsMember({"aic", "bic", "ebic", "cv"}));
    exp_cmd->add_option("--ebic-gamma", args.ebic_gamma);
    exp_cmd->add_option("--cv-folds", args.cv_folds);
    exp_cmd->add_option("--basis-j", args.basis_j);
    exp_cmd->add_flag("--no-center", args.no_center);
    exp_cmd->add_flag("--no-standardize", args.no_standardize);
    exp_cmd->add_option("--out", args.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(scenario_path, seed, has_seed, args.out);
        if (fit_cmd->parsed()) return cmd_fit(args, lambda);
        if (path_cmd->parsed()) return cmd_path(args);
        if (screen_cmd->parsed()) return cmd_screen(args, lambda, keep_target);
        if (select_cmd->parsed()) return cmd_select(args);
        if (roc_cmd->parsed()) return cmd_roc(args, truth_path);
        if (re_cmd->parsed()) return cmd_re_check(args, i0, samples, seed);
        if (bench_cmd->parsed()) return cmd_bench(scenario_path, seed, has_seed, args.out);
        if (exp_cmd->parsed())
            return cmd_experiment(scenario_path, methods_arg, replicates, threads, args, seed,
                                  has_seed, test_subjects);
    } catch (const fslasso::numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::domain_error& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
