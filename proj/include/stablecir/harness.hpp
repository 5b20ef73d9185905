#pragma once

// Study configuration, replicate scheduling and aggregation behind the CLI.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "stablecir/common.hpp"
#include "stablecir/estimator.hpp"
#include "stablecir/io.hpp"
#include "stablecir/random.hpp"
#include "stablecir/sde_sim.hpp"

namespace stablecir {

struct GridPoint {
    std::size_t n = 0;
    double delta_n = 0.0;

    double horizon() const { return static_cast<double>(n) * delta_n; }
};

struct StudyConfig {
    ModelParams params;
    RegimeSpec regime;
    std::vector<GridPoint> grid;
    double p_exponent = 0.51;
    std::size_t replicates = 1;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";
    SimScheme scheme;

    void validate() const {
        try {
            params.validate();
            scheme.validate();
        } catch (const DomainError& e) {
            throw InputError(std::string("config: ") + e.what());
        }
        if (check_assumption_H(params) == AssumptionStatus::Fails)
            throw InputError("config: positivity constraint 2a >= sigma_sq violated (a=" + io::format_double(params.a) +
                             ", sigma_sq=" + io::format_double(params.sigma_sq) + ")");
        if (regime.regime == Regime::Ergodic && !(params.b > 0.0))
            throw InputError("config: the ergodic regime requires b > 0");
        if (replicates < 1) throw InputError("config: replicates must be >= 1");
        if (!(p_exponent > 0.5)) throw InputError("config: p_exponent must exceed 1/2");
        if (grid.empty()) throw InputError("config: grid must not be empty");
        for (const auto& g : grid) {
            if (g.n < 4) throw InputError("config: every grid n must be >= 4");
            if (!(g.delta_n > 0.0 && g.delta_n < 1.0)) throw InputError("config: every grid delta_n must lie in (0,1)");
        }
        for (std::size_t k = 1; k < grid.size(); ++k) {
            const double h0 = grid[k - 1].horizon(), h1 = grid[k].horizon();
            if (regime.regime == Regime::FixedWindow && std::abs(h1 - h0) > 1e-9 * std::max(h0, h1))
                throw InputError("config: fixed_window grid needs the same n*delta_n at every point");
            if (regime.regime == Regime::Ergodic && !(h1 > h0))
                throw InputError("config: ergodic grid needs n*delta_n strictly increasing");
        }
    }
};

inline io::json to_json(const StudyConfig& c) {
    io::json grid = io::json::array();
    for (const auto& g : c.grid) grid.push_back({{"n", g.n}, {"delta_n", g.delta_n}});
    return {{"params", io::to_json(c.params)},  {"regime", to_string(c.regime.regime)},
            {"grid", grid},                     {"p_exponent", c.p_exponent},
            {"replicates", c.replicates},       {"seed", c.seed},
            {"output_dir", c.output_dir.string()}, {"scheme", io::to_json(c.scheme)}};
}

inline StudyConfig parse_study_config(const io::json& j) {
    io::detail::reject_unknown(j, {"params", "regime", "grid", "p_exponent", "replicates", "seed", "output_dir", "scheme"},
                               "config");
    StudyConfig c;
    if (!j.contains("params")) throw InputError("config: missing field 'params'");
    c.params = io::model_params_from_json(j.at("params"));
    if (j.contains("regime")) {
        const auto& r = j.at("regime");
        if (!r.is_string()) throw InputError("config: regime must be a string");
        const auto s = r.get<std::string>();
        if (s == "fixed_window" || s == "FixedWindow")
            c.regime.regime = Regime::FixedWindow;
        else if (s == "ergodic" || s == "Ergodic")
            c.regime.regime = Regime::Ergodic;
        else
            throw InputError("config: regime must be fixed_window or ergodic");
    }
    if (!j.contains("grid") || !j.at("grid").is_array()) throw InputError("config: 'grid' must be an array");
    for (const auto& g : j.at("grid")) {
        GridPoint p;
        if (g.is_array() && g.size() == 2 && g[0].is_number_integer() && g[1].is_number()) {
            p.n = g[0].get<std::size_t>();
            p.delta_n = g[1].get<double>();
        } else if (g.is_object()) {
            io::detail::reject_unknown(g, {"n", "delta_n"}, "config grid entry");
            p.n = io::detail::unsigned_integer(g, "n", "config grid entry");
            p.delta_n = io::detail::number(g, "delta_n", "config grid entry");
        } else {
            throw InputError("config: grid entries must be {\"n\":..,\"delta_n\":..} or [n, delta_n]");
        }
        c.grid.push_back(p);
    }
    if (j.contains("p_exponent")) c.p_exponent = io::detail::number(j, "p_exponent", "config");
    if (j.contains("replicates")) c.replicates = io::detail::unsigned_integer(j, "replicates", "config");
    if (j.contains("seed")) c.seed = io::detail::unsigned_integer(j, "seed", "config");
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string()) throw InputError("config: output_dir must be a string");
        c.output_dir = j.at("output_dir").get<std::string>();
    }
    if (j.contains("scheme")) c.scheme = io::sim_scheme_from_json(j.at("scheme"));
    c.validate();
    return c;
}

inline StudyConfig load_study_config(const std::filesystem::path& p) {
    io::json j;
    try {
        j = io::json::parse(io::read_file(p));
    } catch (const io::json::exception& e) {
        throw InputError("config " + p.string() + ": " + e.what());
    }
    return parse_study_config(j);
}

/// Runs f(i) for i in [0, count) on `threads` workers pulling indices from a shared counter.
/// The first exception thrown by any task is rethrown after all workers finish.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& f) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
}

inline PathSample simulate_replicate(const StudyConfig& c, std::size_t grid_index, std::size_t replicate) {
    const auto& g = c.grid.at(grid_index);
    const std::uint64_t seed = derive_seed(c.seed, grid_index, replicate);
    RandomStream rng(seed);
    PathSample p = simulate_path(c.params, g.delta_n, g.n, c.scheme, rng);
    p.seed = seed;
    return p;
}

inline std::filesystem::path replicate_path_name(const std::filesystem::path& dir, std::size_t g, std::size_t r) {
    return dir / ("path_g" + std::to_string(g) + "_r" + std::to_string(r) + ".csv");
}

/// Writes one CSV plus sidecar per (grid point, replicate). Returns the CSV paths in order.
inline std::vector<std::filesystem::path> run_simulate(const StudyConfig& c, const std::filesystem::path& dir,
                                                       unsigned threads = 1) {
    const std::size_t total = c.grid.size() * c.replicates;
    std::vector<std::filesystem::path> files(total);
    parallel_for(total, threads, [&](std::size_t k) {
        const std::size_t g = k / c.replicates, r = k % c.replicates;
        files[k] = replicate_path_name(dir, g, r);
        io::write_path(simulate_replicate(c, g, r), files[k]);
    });
    return files;
}

/// Estimation of one path with the bandwidth rule at exponent p.
inline EstimationResult estimate_path(const PathSample& path, double p_exponent, std::optional<double> known_alpha,
                                      const RegimeSpec& regime = {}) {
    const TuningConfig t = TuningConfig::from_rule(path.delta_n, path.n, p_exponent);
    const Increments inc = symmetrized_increments(path, t);
    SolveOptions opt;
    opt.regime = regime;
    if (known_alpha) return estimate_known_alpha(inc, t, *known_alpha, opt);
    return estimate(inc, t, opt);
}

struct ReplicateOutcome {
    std::size_t grid_index = 0;
    std::size_t replicate = 0;
    std::uint64_t seed = 0;
    bool completed = false;  // no exception
    EstimationResult result;
    Eigen::Vector3d normalized_error = Eigen::Vector3d::Constant(std::nan(""));
    std::string error;

    bool usable() const { return completed && result.converged; }
};

struct GridSummary {
    std::size_t n = 0;
    double delta_n = 0.0;
    double u_n = 0.0;
    std::size_t replicates = 0;
    std::size_t converged = 0;
    std::size_t failures = 0;
    Eigen::Vector3d mean = Eigen::Vector3d::Constant(std::nan(""));
    Eigen::Vector3d bias = Eigen::Vector3d::Constant(std::nan(""));
    Eigen::Vector3d rmse = Eigen::Vector3d::Constant(std::nan(""));
    Eigen::Vector3d coverage = Eigen::Vector3d::Constant(std::nan(""));
    /// Covariance of Lambda_n(theta_0)^{-1} (theta_hat - theta_0); needs at least two converged replicates.
    Eigen::Matrix3d normalized_cov = Eigen::Matrix3d::Constant(std::nan(""));
    bool covariance_available = false;
    double ergodic_rate = std::nan("");
};

struct StudySummary {
    std::vector<GridSummary> rows;
    /// Least-squares slope of ln RMSE against ln n, per coordinate (NaN with fewer than two rows).
    Eigen::Vector3d rmse_slope = Eigen::Vector3d::Constant(std::nan(""));
    bool known_alpha = false;
    std::vector<std::string> flags;
};

struct StudyOptions {
    unsigned threads = 1;
    std::optional<double> known_alpha;
};

inline Theta true_theta(const ModelParams& p) { return {p.sigma_sq, p.delta, p.alpha}; }

inline ReplicateOutcome run_replicate(const StudyConfig& c, std::size_t g, std::size_t r, const StudyOptions& o) {
    ReplicateOutcome out;
    out.grid_index = g;
    out.replicate = r;
    out.seed = derive_seed(c.seed, g, r);
    try {
        const PathSample path = simulate_replicate(c, g, r);
        out.result = estimate_path(path, c.p_exponent, o.known_alpha, c.regime);
        out.completed = true;
        if (out.result.converged) {
            const Theta th0 = true_theta(c.params);
            const TuningConfig t = TuningConfig::from_rule(path.delta_n, path.n, c.p_exponent);
            const Eigen::Matrix3d lam = rate_matrix_lambda(th0, t);
            out.normalized_error = lam.triangularView<Eigen::Upper>().solve(out.result.theta_hat.vec() - th0.vec());
        }
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

inline StudySummary summarize(const StudyConfig& c, const std::vector<ReplicateOutcome>& outcomes, bool known_alpha) {
    StudySummary s;
    s.known_alpha = known_alpha;
    const Eigen::Vector3d truth = true_theta(c.params).vec();
    for (std::size_t g = 0; g < c.grid.size(); ++g) {
        GridSummary row;
        row.n = c.grid[g].n;
        row.delta_n = c.grid[g].delta_n;
        row.u_n = TuningConfig::bandwidth(row.delta_n, c.p_exponent);
        if (c.regime.regime == Regime::Ergodic)
            row.ergodic_rate = ergodic_rate_indicator(row.n, row.delta_n, c.params.alpha);
        std::vector<const ReplicateOutcome*> ok;
        for (const auto& o : outcomes) {
            if (o.grid_index != g) continue;
            ++row.replicates;
            if (o.usable())
                ok.push_back(&o);
            else
                ++row.failures;
        }
        row.converged = ok.size();
        if (!ok.empty()) {
            Eigen::Vector3d sum = Eigen::Vector3d::Zero(), sq = Eigen::Vector3d::Zero(), cover = Eigen::Vector3d::Zero();
            for (const auto* o : ok) {
                const Eigen::Vector3d v = o->result.theta_hat.vec();
                sum += v;
                sq += (v - truth).cwiseProduct(v - truth);
                for (int k = 0; k < 3; ++k)
                    if (o->result.ci_95[k].first <= truth[k] && truth[k] <= o->result.ci_95[k].second) cover[k] += 1.0;
            }
            const double m = static_cast<double>(ok.size());
            row.mean = sum / m;
            row.bias = row.mean - truth;
            row.rmse = (sq / m).cwiseSqrt();
            row.coverage = cover / m;
        }
        if (ok.size() >= 2) {
            Eigen::Vector3d zbar = Eigen::Vector3d::Zero();
            for (const auto* o : ok) zbar += o->normalized_error;
            zbar /= static_cast<double>(ok.size());
            Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
            for (const auto* o : ok) cov += (o->normalized_error - zbar) * (o->normalized_error - zbar).transpose();
            row.normalized_cov = cov / static_cast<double>(ok.size() - 1);
            row.covariance_available = true;
        } else {
            s.flags.push_back("grid point " + std::to_string(g) + ": fewer than two converged replicates, no covariance");
        }
        s.rows.push_back(row);
    }
    for (int k = 0; k < 3; ++k) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : s.rows)
            if (std::isfinite(r.rmse[k]) && r.rmse[k] > 0.0)
                pts.emplace_back(std::log(static_cast<double>(r.n)), std::log(r.rmse[k]));
        if (pts.size() < 2) continue;
        double mx = 0, my = 0;
        for (const auto& [x, y] : pts) mx += x, my += y;
        mx /= static_cast<double>(pts.size());
        my /= static_cast<double>(pts.size());
        double sxy = 0, sxx = 0;
        for (const auto& [x, y] : pts) sxy += (x - mx) * (y - my), sxx += (x - mx) * (x - mx);
        if (sxx > 0.0) s.rmse_slope[k] = sxy / sxx;
    }
    return s;
}

struct StudyRun {
    StudySummary summary;
    std::vector<ReplicateOutcome> outcomes;  // ordered by (grid index, replicate)
};

inline StudyRun run_mc_study(const StudyConfig& c, const StudyOptions& o = {}) {
    c.validate();
    const std::size_t total = c.grid.size() * c.replicates;
    StudyRun run;
    run.outcomes.resize(total);
    parallel_for(total, o.threads, [&](std::size_t k) {
        run.outcomes[k] = run_replicate(c, k / c.replicates, k % c.replicates, o);
    });
    run.summary = summarize(c, run.outcomes, o.known_alpha.has_value());
    return run;
}

namespace detail {

inline io::json vec_json(const Eigen::Vector3d& v) {
    io::json a = io::json::array();
    for (int k = 0; k < 3; ++k) a.push_back(std::isfinite(v[k]) ? io::json(v[k]) : io::json(nullptr));
    return a;
}

inline std::string csv_num(double v) { return std::isfinite(v) ? io::format_double(v) : std::string("nan"); }

}  // namespace detail

inline io::json to_json(const StudySummary& s) {
    io::json rows = io::json::array();
    for (const auto& r : s.rows) {
        io::json cov = nullptr;
        if (r.covariance_available) cov = io::matrix_json(r.normalized_cov);
        rows.push_back({{"n", r.n},
                        {"delta_n", r.delta_n},
                        {"u_n", r.u_n},
                        {"replicates", r.replicates},
                        {"converged", r.converged},
                        {"failures", r.failures},
                        {"mean", detail::vec_json(r.mean)},
                        {"bias", detail::vec_json(r.bias)},
                        {"rmse", detail::vec_json(r.rmse)},
                        {"ci_coverage", detail::vec_json(r.coverage)},
                        {"normalized_error_cov", cov},
                        {"ergodic_rate_indicator", std::isfinite(r.ergodic_rate) ? io::json(r.ergodic_rate) : io::json(nullptr)}});
    }
    return {{"coordinates", {"sigma_sq", "delta", "alpha"}},
            {"rows", rows},
            {"rmse_log_log_slope", detail::vec_json(s.rmse_slope)},
            {"known_alpha", s.known_alpha},
            {"flags", s.flags}};
}

inline std::string summary_csv(const StudySummary& s) {
    std::string out = "n,delta_n,u_n,replicates,converged,failures";
    for (const char* stat : {"mean", "bias", "rmse", "coverage", "norm_var"})
        for (const char* c : {"sigma_sq", "delta", "alpha"}) out += std::string(",") + stat + "_" + c;
    out += "\n";
    for (const auto& r : s.rows) {
        out += std::to_string(r.n) + "," + io::format_double(r.delta_n) + "," + io::format_double(r.u_n) + "," +
               std::to_string(r.replicates) + "," + std::to_string(r.converged) + "," + std::to_string(r.failures);
        for (const Eigen::Vector3d* v : {&r.mean, &r.bias, &r.rmse, &r.coverage})
            for (int k = 0; k < 3; ++k) out += "," + detail::csv_num((*v)[k]);
        for (int k = 0; k < 3; ++k) out += "," + detail::csv_num(r.normalized_cov(k, k));
        out += "\n";
    }
    return out;
}

inline std::string replicates_csv(const std::vector<ReplicateOutcome>& outcomes) {
    std::string out = "grid_index,replicate,seed,completed,error," + io::result_csv_header() + "\n";
    for (const auto& o : outcomes) {
        std::string err = o.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out += std::to_string(o.grid_index) + "," + std::to_string(o.replicate) + "," + std::to_string(o.seed) + "," +
               (o.completed ? "1" : "0") + "," + err + "," + io::result_csv_row(o.result) + "\n";
    }
    return out;
}

inline void write_study(const StudyRun& run, const std::filesystem::path& dir) {
    io::write_file_atomic(dir / "summary.json", to_json(run.summary).dump(2) + "\n");
    io::write_file_atomic(dir / "summary.csv", summary_csv(run.summary));
    io::write_file_atomic(dir / "replicates.csv", replicates_csv(run.outcomes));
}

}  // namespace stablecir
