#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fslasso/pipeline.hpp"
#include "fslasso/simulate.hpp"
#include "fslasso/solver.hpp"
#include "fslasso/tuning.hpp"
#include "fslasso/types.hpp"

namespace fslasso {

using json = nlohmann::ordered_json;

inline constexpr const char* kFormatVersion = "1";

namespace detail {

inline std::string fmt_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    return out;
}

}  // namespace detail

/// Long-format CSV: subject_id,t,y.
inline void write_long_csv(const std::string& path, const ObservationSetd& obs)
{
    std::ofstream f(path);
    require(f.good(), "write_long_csv: cannot open " + path);
    f << "subject_id,t,y\n";
    for (Index n = 0; n < obs.size(); ++n) {
        const auto& s = obs.subjects[static_cast<std::size_t>(n)];
        for (Index m = 0; m < s.times.size(); ++m)
            f << n << ',' << detail::fmt_double(s.times[m]) << ','
              << detail::fmt_double(s.values[m]) << '\n';
    }
    require(f.good(), "write_long_csv: write failed for " + path);
}

inline ObservationSetd read_long_csv(const std::string& path)
{
    std::ifstream f(path);
    require(f.good(), "read_long_csv: cannot open " + path);
    std::string line;
    require(static_cast<bool>(std::getline(f, line)), "read_long_csv: empty file " + path);

    std::map<std::string, Index> ids;
    std::vector<std::vector<std::pair<double, double>>> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cols = detail::split_csv_line(line);
        require(cols.size() == 3, "read_long_csv: expected 3 columns in " + path);
        auto [it, fresh] = ids.try_emplace(cols[0], static_cast<Index>(rows.size()));
        if (fresh) rows.emplace_back();
        rows[static_cast<std::size_t>(it->second)].emplace_back(std::stod(cols[1]),
                                                                std::stod(cols[2]));
    }

    ObservationSetd obs;
    obs.subjects.resize(rows.size());
    for (std::size_t n = 0; n < rows.size(); ++n) {
        auto& pts = rows[n];
        std::sort(pts.begin(), pts.end());
        Vecd t(static_cast<Index>(pts.size())), y(static_cast<Index>(pts.size()));
        for (std::size_t m = 0; m < pts.size(); ++m) {
            t[static_cast<Index>(m)] = pts[m].first;
            y[static_cast<Index>(m)] = pts[m].second;
        }
        obs.subjects[n] = {std::move(t), std::move(y)};
    }
    obs.validate();
    return obs;
}

/// Design CSV: header row of predictor names, one row per subject.
inline void write_design_csv(const std::string& path, const Matd& X)
{
    std::ofstream f(path);
    require(f.good(), "write_design_csv: cannot open " + path);
    for (Index i = 0; i < X.cols(); ++i) f << (i ? "," : "") << "x" << (i + 1);
    f << '\n';
    for (Index n = 0; n < X.rows(); ++n) {
        for (Index i = 0; i < X.cols(); ++i)
            f << (i ? "," : "") << detail::fmt_double(X(n, i));
        f << '\n';
    }
    require(f.good(), "write_design_csv: write failed for " + path);
}

inline Matd read_design_csv(const std::string& path)
{
    std::ifstream f(path);
    require(f.good(), "read_design_csv: cannot open " + path);
    std::string line;
    require(static_cast<bool>(std::getline(f, line)), "read_design_csv: empty file " + path);
    const Index cols = static_cast<Index>(detail::split_csv_line(line).size());

    std::vector<double> values;
    Index rows = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        require(static_cast<Index>(fields.size()) == cols,
                "read_design_csv: ragged row in " + path);
        for (const auto& v : fields) values.push_back(std::stod(v));
        ++rows;
    }
    require(rows > 0, "read_design_csv: no data rows in " + path);
    Matd X(rows, cols);
    for (Index n = 0; n < rows; ++n)
        for (Index i = 0; i < cols; ++i)
            X(n, i) = values[static_cast<std::size_t>(n * cols + i)];
    return X;
}

inline json vec_to_json(const Vecd& v)
{
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Vecd vec_from_json(const json& a)
{
    Vecd v(static_cast<Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Index>(i)] = a[i].get<double>();
    return v;
}

inline json mat_to_json(const Matd& m)
{
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) rows.push_back(vec_to_json(m.row(i).transpose()));
    return rows;
}

inline Matd mat_from_json(const json& rows)
{
    const Index r = static_cast<Index>(rows.size());
    require(r > 0, "mat_from_json: empty matrix");
    const Index c = static_cast<Index>(rows[0].size());
    Matd m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                          .get<double>();
    return m;
}

inline json matern_to_json(const MaternSpecd& s)
{
    return json{{"mean", s.mean},
                {"variance", s.variance},
                {"range", s.range},
                {"nugget", s.nugget},
                {"smoothness", s.smoothness == MaternSmoothness::Nu3_2 ? "3/2" : "5/2"}};
}

inline MaternSpecd matern_from_json(const json& j)
{
    MaternSpecd s;
    s.mean = j.at("mean").get<double>();
    s.variance = j.at("variance").get<double>();
    s.range = j.at("range").get<double>();
    s.nugget = j.at("nugget").get<double>();
    const std::string nu = j.at("smoothness").get<std::string>();
    require(nu == "3/2" || nu == "5/2", "scenario: smoothness must be 3/2 or 5/2");
    s.smoothness = nu == "3/2" ? MaternSmoothness::Nu3_2 : MaternSmoothness::Nu5_2;
    return s;
}

inline json scenario_to_json(const SimScenariod& sc)
{
    return json{{"format_version", kFormatVersion},
                {"N", sc.N},
                {"I", sc.I},
                {"I0", sc.I0},
                {"rho", sc.rho},
                {"M_obs", sc.M_obs},
                {"beta_spec", matern_to_json(sc.beta_spec)},
                {"eps_spec", matern_to_json(sc.eps_spec)},
                {"design_kind",
                 sc.design_kind == SimDesignKind::GaussianAR ? "gaussian_ar"
                                                             : "binomial_probit"},
                {"seed", sc.seed}};
}

inline SimScenariod scenario_from_json(const json& j)
{
    SimScenariod sc;
    sc.N = j.at("N").get<Index>();
    sc.I = j.at("I").get<Index>();
    sc.I0 = j.at("I0").get<Index>();
    sc.rho = j.at("rho").get<double>();
    sc.M_obs = j.value("M_obs", Index(10));
    if (j.contains("beta_spec")) sc.beta_spec = matern_from_json(j.at("beta_spec"));
    else sc.beta_spec.variance = sc.I0 > 0 ? 1.0 / double(sc.I0) : 0.0;
    if (j.contains("eps_spec")) sc.eps_spec = matern_from_json(j.at("eps_spec"));
    const std::string kind = j.value("design_kind", std::string("gaussian_ar"));
    require(kind == "gaussian_ar" || kind == "binomial_probit",
            "scenario: design_kind must be gaussian_ar or binomial_probit");
    sc.design_kind =
        kind == "gaussian_ar" ? SimDesignKind::GaussianAR : SimDesignKind::BinomialProbit;
    sc.seed = j.value("seed", std::uint64_t(1));
    sc.validate();
    return sc;
}

inline SimScenariod read_scenario(const std::string& path)
{
    std::ifstream f(path);
    require(f.good(), "read_scenario: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw std::invalid_argument("read_scenario: bad JSON in " + path + ": " + e.what());
    }
    return scenario_from_json(j);
}

inline json truth_to_json(const Truthd& truth)
{
    json support = json::array();
    for (Index i : truth.support) support.push_back(i);
    return json{{"format_version", kFormatVersion},
                {"support", support},
                {"grid", vec_to_json(truth.grid)},
                {"beta_on_grid", mat_to_json(truth.beta_on_grid)},
                {"beta_spec", matern_to_json(truth.beta_spec)},
                {"eps_spec", matern_to_json(truth.eps_spec)}};
}

inline Truthd truth_from_json(const json& j)
{
    Truthd t;
    for (const auto& v : j.at("support")) t.support.push_back(v.get<Index>());
    t.grid = vec_from_json(j.at("grid"));
    t.beta_on_grid = mat_from_json(j.at("beta_on_grid"));
    t.beta_spec = matern_from_json(j.at("beta_spec"));
    t.eps_spec = matern_from_json(j.at("eps_spec"));
    return t;
}

inline Truthd read_truth(const std::string& path)
{
    std::ifstream f(path);
    require(f.good(), "read_truth: cannot open " + path);
    json j;
    f >> j;
    return truth_from_json(j);
}

inline void write_json(const std::string& path, const json& j)
{
    std::ofstream f(path);
    require(f.good(), "write_json: cannot open " + path);
    f << j.dump(2) << '\n';
    require(f.good(), "write_json: write failed for " + path);
}

inline json fit_to_json(const FitResultd& fit)
{
    json active = json::array();
    for (Index i : fit.B.active_set) active.push_back(i);
    return json{{"format_version", kFormatVersion},
                {"lambda", fit.lambda},
                {"objective", fit.objective},
                {"kkt_residual", fit.kkt_residual},
                {"iterations", fit.iterations},
                {"converged", fit.converged},
                {"active_set", active},
                {"B", mat_to_json(fit.B.B)}};
}

inline json path_to_json(const PathFitd& path)
{
    json fits = json::array();
    for (const auto& f : path.fits) {
        json active = json::array();
        for (Index i : f.B.active_set) active.push_back(i);
        fits.push_back(json{{"lambda", f.lambda},
                            {"objective", f.objective},
                            {"kkt_residual", f.kkt_residual},
                            {"iterations", f.iterations},
                            {"converged", f.converged},
                            {"active_set", active}});
    }
    json entry = json::array();
    for (Index i = 0; i < path.entry_lambda.size(); ++i) {
        if (std::isfinite(path.entry_lambda[i]))
            entry.push_back(path.entry_lambda[i]);
        else
            entry.push_back(nullptr);
    }
    return json{{"format_version", kFormatVersion},
                {"lambdas", vec_to_json(path.lambdas)},
                {"fits", fits},
                {"entry_lambda", entry}};
}

inline json selection_to_json(const SelectionReportd& sel)
{
    const char* names[] = {"aic", "bic", "ebic", "cv"};
    json active = json::array();
    for (Index i : sel.refit_B.active_set) active.push_back(i);
    return json{{"format_version", kFormatVersion},
                {"criterion", names[static_cast<int>(sel.criterion.kind)]},
                {"scores", vec_to_json(sel.scores)},
                {"chosen_lambda", sel.chosen_lambda},
                {"chosen_index", sel.chosen_index},
                {"sigma2_hat", sel.sigma2_hat},
                {"exact_fit", sel.exact_fit},
                {"active_set", active},
                {"refit_B", mat_to_json(sel.refit_B.B)}};
}

}  // namespace fslasso
