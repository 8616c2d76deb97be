#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "fslasso/io.hpp"
#include "fslasso/metrics.hpp"
#include "fslasso/pipeline.hpp"
#include "fslasso/simulate.hpp"
#include "fslasso/types.hpp"

namespace fslasso {

struct ExperimentConfig {
    std::vector<Method> methods{Method::Sparse, Method::Dense};
    Index replicates = 100;
    int threads = 0;           // 0 = hardware concurrency
    Index test_subjects = 0;   // 0 = same as scenario N
    bool compute_mse = true;
    PipelineOptionsd options;
};

struct MethodReplicate {
    bool ok = false;
    std::string error;
    double auc = std::numeric_limits<double>::quiet_NaN();
    Vecd roc_tpr;  // envelope on the shared fpr grid
    double mse = std::numeric_limits<double>::quiet_NaN();
    Index active_count = 0;
    double chosen_lambda = std::numeric_limits<double>::quiet_NaN();
    double prepare_seconds = 0;
    double path_seconds = 0;
    double select_seconds = 0;
};

struct MethodSummary {
    Method method = Method::Sparse;
    std::vector<MethodReplicate> replicates;
    double auc_mean = 0, auc_se = 0, auc_of_mean_curve = 0;
    double mse_mean = 0, mse_se = 0;
    Vecd mean_roc_tpr;
    Index ok_count = 0;
};

struct ExperimentReport {
    SimScenariod scenario;
    Index replicates = 0;
    CriterionKind criterion = CriterionKind::BIC;
    Vecd fpr_grid;
    std::vector<MethodSummary> methods;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline MethodReplicate run_one_method(Method method, const SimDatad& train,
                                      const SimDatad* test, const SimScenariod& scenario,
                                      const ExperimentConfig& cfg, const Vecd& fpr_grid)
{
    MethodReplicate out;
    try {
        auto t0 = std::chrono::steady_clock::now();
        const auto prepared = prepare(method, train.obs, train.X, cfg.options);
        out.prepare_seconds = seconds_since(t0);

        t0 = std::chrono::steady_clock::now();
        const auto path = run_path(prepared, cfg.options);
        out.path_seconds = seconds_since(t0);

        const auto roc = roc_from_path(path, train.truth.support, scenario.I);
        out.auc = roc.auc;
        out.roc_tpr.resize(fpr_grid.size());
        for (Index k = 0; k < fpr_grid.size(); ++k) out.roc_tpr[k] = roc.tpr_at(fpr_grid[k]);

        if (cfg.compute_mse && test) {
            t0 = std::chrono::steady_clock::now();
            const auto sel =
                select(prepared.design, path, cfg.options.criterion, cfg.options.solver);
            out.select_seconds = seconds_since(t0);
            out.active_count = static_cast<Index>(sel.refit_B.active_set.size());
            out.chosen_lambda = sel.chosen_lambda;
            out.mse = prediction_mse(prepared, sel.refit_B.B, test->obs, test->X);
        }
        out.ok = true;
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

}  // namespace detail

/// Fan replicates over a worker pool; each replicate draws its own rng stream
/// from (seed, replicate) so results do not depend on the thread count, and
/// aggregation runs in replicate order.
inline ExperimentReport run_experiment(const SimScenariod& scenario,
                                       const ExperimentConfig& cfg)
{
    scenario.validate();
    require(cfg.replicates >= 1, "run_experiment: need at least one replicate");
    require(!cfg.methods.empty(), "run_experiment: no methods requested");

    ExperimentReport report;
    report.scenario = scenario;
    report.replicates = cfg.replicates;
    report.criterion = cfg.options.criterion.kind;
    report.fpr_grid = Vecd::LinSpaced(101, 0.0, 1.0);

    const std::size_t n_methods = cfg.methods.size();
    std::vector<std::vector<MethodReplicate>> grid(
        n_methods, std::vector<MethodReplicate>(static_cast<std::size_t>(cfg.replicates)));

    const Index test_n = cfg.test_subjects > 0 ? cfg.test_subjects : scenario.N;

    std::atomic<Index> next{0};
    const auto worker = [&]() {
        for (;;) {
            const Index rep = next.fetch_add(1);
            if (rep >= cfg.replicates) return;
            Rng rng = Rng::for_replicate(scenario.seed, static_cast<std::uint64_t>(rep));
            const SimDatad train = gen_dataset(scenario, rng);
            SimDatad test;
            if (cfg.compute_mse)
                test = gen_dataset_from_truth(scenario, train.truth, test_n, rng);
            for (std::size_t m = 0; m < n_methods; ++m)
                grid[m][static_cast<std::size_t>(rep)] = detail::run_one_method(
                    cfg.methods[m], train, cfg.compute_mse ? &test : nullptr, scenario, cfg,
                    report.fpr_grid);
        }
    };

    int threads = cfg.threads > 0 ? cfg.threads
                                  : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, static_cast<int>(cfg.replicates)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (std::size_t m = 0; m < n_methods; ++m) {
        MethodSummary s;
        s.method = cfg.methods[m];
        s.replicates = std::move(grid[m]);
        s.mean_roc_tpr = Vecd::Zero(report.fpr_grid.size());

        double auc_sum = 0, auc_sq = 0, mse_sum = 0, mse_sq = 0;
        for (const auto& r : s.replicates) {
            if (!r.ok) continue;
            ++s.ok_count;
            auc_sum += r.auc;
            auc_sq += r.auc * r.auc;
            if (cfg.compute_mse) {
                mse_sum += r.mse;
                mse_sq += r.mse * r.mse;
            }
            s.mean_roc_tpr += r.roc_tpr;
        }
        if (s.ok_count > 0) {
            const double n = static_cast<double>(s.ok_count);
            s.auc_mean = auc_sum / n;
            s.auc_se = n > 1 ? std::sqrt(std::max(0.0, (auc_sq / n - s.auc_mean * s.auc_mean) /
                                                           (n - 1)))
                             : 0.0;
            if (cfg.compute_mse) {
                s.mse_mean = mse_sum / n;
                s.mse_se = n > 1 ? std::sqrt(std::max(
                                       0.0, (mse_sq / n - s.mse_mean * s.mse_mean) / (n - 1)))
                                 : 0.0;
            }
            s.mean_roc_tpr /= n;
            for (Index k = 1; k < report.fpr_grid.size(); ++k)
                s.auc_of_mean_curve += (report.fpr_grid[k] - report.fpr_grid[k - 1]) *
                                       (s.mean_roc_tpr[k] + s.mean_roc_tpr[k - 1]) / 2.0;
        }
        report.methods.push_back(std::move(s));
    }
    return report;
}

inline json report_to_json(const ExperimentReport& report)
{
    const char* crit_names[] = {"aic", "bic", "ebic", "cv"};
    json methods = json::object();
    for (const auto& s : report.methods) {
        json aucs = json::array(), mses = json::array(), actives = json::array(),
             lambdas = json::array(), errors = json::array();
        for (std::size_t r = 0; r < s.replicates.size(); ++r) {
            const auto& rep = s.replicates[r];
            if (!rep.ok) {
                errors.push_back(json{{"replicate", r}, {"error", rep.error}});
                continue;
            }
            aucs.push_back(rep.auc);
            mses.push_back(rep.mse);
            actives.push_back(rep.active_count);
            lambdas.push_back(rep.chosen_lambda);
        }
        json tpr = json::array();
        for (Index k = 0; k < s.mean_roc_tpr.size(); ++k) tpr.push_back(s.mean_roc_tpr[k]);
        methods[method_name(s.method)] =
            json{{"ok_replicates", s.ok_count},
                 {"errors", errors},
                 {"auc", json{{"mean", s.auc_mean}, {"se", s.auc_se}, {"values", aucs}}},
                 {"auc_of_mean_curve", s.auc_of_mean_curve},
                 {"mean_roc_tpr", tpr},
                 {"mse", json{{"mean", s.mse_mean}, {"se", s.mse_se}, {"values", mses}}},
                 {"active_count", actives},
                 {"chosen_lambda", lambdas}};
    }
    json fpr = json::array();
    for (Index k = 0; k < report.fpr_grid.size(); ++k) fpr.push_back(report.fpr_grid[k]);
    return json{{"format_version", kFormatVersion},
                {"kind", "experiment"},
                {"scenario", scenario_to_json(report.scenario)},
                {"replicates", report.replicates},
                {"criterion", crit_names[static_cast<int>(report.criterion)]},
                {"fpr_grid", fpr},
                {"methods", methods}};
}

/// Wall-clock timings live in their own file; report.json stays byte-identical
/// across reruns of the same scenario/seed.
inline json timings_to_json(const ExperimentReport& report)
{
    json methods = json::object();
    for (const auto& s : report.methods) {
        json prep = json::array(), path = json::array(), sel = json::array();
        double total = 0;
        for (const auto& r : s.replicates) {
            prep.push_back(r.prepare_seconds);
            path.push_back(r.path_seconds);
            sel.push_back(r.select_seconds);
            total += r.prepare_seconds + r.path_seconds + r.select_seconds;
        }
        methods[method_name(s.method)] = json{{"prepare_seconds", prep},
                                              {"path_seconds", path},
                                              {"select_seconds", sel},
                                              {"total_seconds", total}};
    }
    return json{{"format_version", kFormatVersion}, {"kind", "timings"}, {"methods", methods}};
}

inline void write_report_files(const ExperimentReport& report, const std::string& out_dir)
{
    std::filesystem::create_directories(out_dir);
    write_json(out_dir + "/report.json", report_to_json(report));
    write_json(out_dir + "/timings.json", timings_to_json(report));
    for (const auto& s : report.methods) {
        std::ofstream f(out_dir + "/roc_" + method_name(s.method) + ".csv");
        require(f.good(), "write_report_files: cannot open roc csv");
        f << "fpr,tpr\n";
        for (Index k = 0; k < report.fpr_grid.size(); ++k)
            f << detail::fmt_double(report.fpr_grid[k]) << ','
              << detail::fmt_double(s.mean_roc_tpr[k]) << '\n';
    }
}

}  // namespace fslasso
