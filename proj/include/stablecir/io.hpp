#pragma once

// CSV and JSON serialization of paths and estimation results.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "stablecir/common.hpp"
#include "stablecir/estimator.hpp"
#include "stablecir/sde_sim.hpp"

namespace stablecir::io {

using json = nlohmann::json;

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    if (r.ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
        throw InputError(where + ": cannot parse number '" + std::string(s) + "'");
    return v;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to a temporary sibling and renames, so readers never see partial files.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    const auto tmp = std::filesystem::path(p.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, p);
}

// ---- model parameters and schemes ----

inline json to_json(const ModelParams& p) {
    return {{"a", p.a}, {"b", p.b}, {"sigma_sq", p.sigma_sq}, {"delta", p.delta}, {"alpha", p.alpha}, {"x0", p.x0}};
}

inline json to_json(const SimScheme& s) {
    return {{"substeps", s.substeps}, {"positivity_rule", to_string(s.positivity_rule)}, {"floor", s.floor}};
}

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw InputError(where + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw InputError(where + ": unknown field '" + key + "'");
    }
}

inline double number(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw InputError(where + ": missing field '" + key + "'");
    if (!j.at(key).is_number()) throw InputError(where + ": field '" + std::string(key) + "' must be a number");
    return j.at(key).get<double>();
}

inline std::uint64_t unsigned_integer(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw InputError(where + ": missing field '" + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw InputError(where + ": field '" + std::string(key) + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
}

}  // namespace detail

inline ModelParams model_params_from_json(const json& j) {
    detail::reject_unknown(j, {"a", "b", "sigma_sq", "delta", "alpha", "x0"}, "params");
    ModelParams p;
    p.a = detail::number(j, "a", "params");
    p.b = detail::number(j, "b", "params");
    p.sigma_sq = detail::number(j, "sigma_sq", "params");
    p.delta = detail::number(j, "delta", "params");
    p.alpha = detail::number(j, "alpha", "params");
    p.x0 = j.contains("x0") ? detail::number(j, "x0", "params") : 1.0;
    return p;
}

inline SimScheme sim_scheme_from_json(const json& j) {
    detail::reject_unknown(j, {"substeps", "positivity_rule", "floor"}, "scheme");
    SimScheme s;
    if (j.contains("substeps")) s.substeps = static_cast<int>(detail::unsigned_integer(j, "substeps", "scheme"));
    if (j.contains("floor")) s.floor = detail::number(j, "floor", "scheme");
    if (j.contains("positivity_rule")) {
        const auto r = j.at("positivity_rule").get<std::string>();
        if (r == "full_truncation")
            s.positivity_rule = PositivityRule::FullTruncation;
        else if (r == "reflection")
            s.positivity_rule = PositivityRule::Reflection;
        else
            throw InputError("scheme: positivity_rule must be full_truncation or reflection");
    }
    return s;
}

// ---- paths ----

inline std::string path_csv(const PathSample& path) {
    std::string out = "t,x\n";
    out.reserve(32 * path.observations.size());
    for (std::size_t i = 0; i < path.observations.size(); ++i) {
        out += format_double(path.time(i));
        out += ',';
        out += format_double(path.observations[i]);
        out += '\n';
    }
    return out;
}

inline json path_sidecar(const PathSample& path) {
    json j;
    j["delta_n"] = path.delta_n;
    j["n"] = path.n;
    j["seed"] = path.seed ? json(*path.seed) : json(nullptr);
    j["scheme"] = path.scheme ? to_json(*path.scheme) : json(nullptr);
    j["params"] = path.params ? to_json(*path.params) : json(nullptr);
    return j;
}

inline std::filesystem::path sidecar_name(const std::filesystem::path& csv) {
    auto p = csv;
    p.replace_extension(".json");
    return p;
}

inline void write_path(const PathSample& path, const std::filesystem::path& csv) {
    write_file_atomic(csv, path_csv(path));
    write_file_atomic(sidecar_name(csv), path_sidecar(path).dump(2) + "\n");
}

/// Parses a `t,x` CSV. Delta_n comes from the sidecar when present, else from the time column,
/// which must then be uniform.
inline PathSample parse_path_csv(const std::string& text, const std::optional<json>& sidecar = std::nullopt) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw InputError("path CSV: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t,x") throw InputError("path CSV: header must be 't,x'");
    std::vector<double> ts, xs;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
            throw InputError("path CSV: row " + std::to_string(row) + " must have two columns");
        const std::string where = "path CSV row " + std::to_string(row);
        ts.push_back(parse_double(std::string_view(line).substr(0, comma), where));
        xs.push_back(parse_double(std::string_view(line).substr(comma + 1), where));
    }
    if (xs.size() < 3) throw InputError("path CSV: need at least 3 observations");
    PathSample p;
    p.observations = std::move(xs);
    p.n = p.observations.size() - 1;
    if (sidecar) {
        const auto& j = *sidecar;
        p.delta_n = detail::number(j, "delta_n", "path sidecar");
        if (j.contains("n") && j.at("n").is_number_integer() && j.at("n").get<std::size_t>() != p.n)
            throw InputError("path sidecar: n does not match the CSV row count");
        if (j.contains("seed") && j.at("seed").is_number_unsigned()) p.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("params") && j.at("params").is_object()) p.params = model_params_from_json(j.at("params"));
        if (j.contains("scheme") && j.at("scheme").is_object()) p.scheme = sim_scheme_from_json(j.at("scheme"));
    } else {
        p.delta_n = ts[1] - ts[0];
    }
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double expect = static_cast<double>(i) * p.delta_n;
        if (std::abs(ts[i] - expect) > 1e-9 * std::max(1.0, std::abs(expect)))
            throw InputError("path CSV: time column is not the uniform grid i*delta_n at row " + std::to_string(i + 2));
    }
    try {
        p.validate();
    } catch (const DomainError& e) {
        throw InputError(std::string("path CSV: ") + e.what());
    }
    return p;
}

inline PathSample read_path(const std::filesystem::path& csv) {
    std::optional<json> side;
    const auto sc = sidecar_name(csv);
    if (std::filesystem::exists(sc)) {
        try {
            side = json::parse(read_file(sc));
        } catch (const json::exception& e) {
            throw InputError("path sidecar " + sc.string() + ": " + e.what());
        }
    }
    return parse_path_csv(read_file(csv), side);
}

// ---- estimation results ----

inline json matrix_json(const Eigen::Matrix3d& m) {
    json a = json::array();
    for (int r = 0; r < 3; ++r) a.push_back({m(r, 0), m(r, 1), m(r, 2)});
    return a;
}

inline json to_json(const Theta& t) { return {{"sigma_sq", t.sigma_sq}, {"delta", t.delta}, {"alpha", t.alpha}}; }

inline json to_json(const EstimationResult& r) {
    json j;
    j["theta_hat"] = to_json(r.theta_hat);
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["residual_norm"] = std::isfinite(r.residual_norm) ? json(r.residual_norm) : json(nullptr);
    j["lambda_n"] = matrix_json(r.lambda_n);
    j["sigma_hat"] = matrix_json(r.sigma_hat);
    j["w_hat"] = matrix_json(r.w_hat);
    j["asy_cov"] = matrix_json(r.asy_cov);
    json ci = json::array();
    for (const auto& [lo, hi] : r.ci_95) ci.push_back({lo, hi});
    j["ci_95"] = ci;
    j["i_hat"] = r.i_hat;
    j["di_hat"] = r.di_hat;
    j["known_alpha"] = r.known_alpha;
    j["start"] = to_json(r.start);
    j["n"] = r.n;
    j["delta_n"] = r.delta_n;
    j["u_n"] = r.u_n;
    j["message"] = r.message;
    return j;
}

inline std::string result_csv_header() {
    std::string h = "sigma_sq,delta,alpha,converged,iterations,residual_norm,i_hat,di_hat";
    for (const char* c : {"sigma_sq", "delta", "alpha"}) {
        h += std::string(",ci_lo_") + c;
        h += std::string(",ci_hi_") + c;
    }
    for (const char* m : {"lambda_n", "sigma_hat", "w_hat", "asy_cov"})
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) h += "," + std::string(m) + "_" + std::to_string(r) + std::to_string(c);
    return h + ",known_alpha,n,delta_n,u_n";
}

inline std::string result_csv_row(const EstimationResult& r) {
    std::string s = format_double(r.theta_hat.sigma_sq) + "," + format_double(r.theta_hat.delta) + "," +
                    format_double(r.theta_hat.alpha) + "," + (r.converged ? "1" : "0") + "," +
                    std::to_string(r.iterations) + "," + format_double(r.residual_norm) + "," +
                    format_double(r.i_hat) + "," + format_double(r.di_hat);
    for (const auto& [lo, hi] : r.ci_95) s += "," + format_double(lo) + "," + format_double(hi);
    for (const Eigen::Matrix3d* m : {&r.lambda_n, &r.sigma_hat, &r.w_hat, &r.asy_cov})
        for (int i = 0; i < 3; ++i)
            for (int c = 0; c < 3; ++c) s += "," + format_double((*m)(i, c));
    s += std::string(",") + (r.known_alpha ? "1" : "0") + "," + std::to_string(r.n) + "," + format_double(r.delta_n) +
         "," + format_double(r.u_n);
    return s;
}

inline std::string result_csv(const EstimationResult& r) { return result_csv_header() + "\n" + result_csv_row(r) + "\n"; }

}  // namespace stablecir::io
