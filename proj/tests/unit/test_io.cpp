#include <catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <random>

#include "stablecir/io.hpp"

using namespace stablecir;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("stablecir_io_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::size_t count_char(const std::string& s, char c) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), c)); }

}  // namespace

TEST_CASE("decimal formatting round-trips every double", "[io]") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int k = 0; k < 10000; ++k) {
        const double v = std::exp(u(gen)) * (k % 2 ? 1.0 : -1.0);
        CHECK(io::parse_double(io::format_double(v), "test") == v);
    }
    CHECK(io::format_double(0.1) == "0.1");
    CHECK_THROWS_AS(io::parse_double("1.5x", "test"), InputError);
    CHECK_THROWS_AS(io::parse_double("", "test"), InputError);
    CHECK_THROWS_AS(io::parse_double("nan", "test"), InputError);
}

TEST_CASE("path CSV and sidecar round-trip exactly", "[io]") {
    ModelParams mp;
    mp.alpha = 1.37;
    SimScheme sc;
    sc.substeps = 3;
    RandomStream rng(99);
    PathSample path = simulate_path(mp, 1.0 / 300, 300, sc, rng);
    path.seed = 99;
    const auto dir = scratch("roundtrip");
    const auto csv = dir / "path.csv";
    io::write_path(path, csv);
    REQUIRE(fs::exists(dir / "path.json"));
    const std::string text = io::read_file(csv);
    CHECK(text.rfind("t,x\n", 0) == 0);
    CHECK(count_char(text, '\n') == 302);

    const PathSample back = io::read_path(csv);
    REQUIRE(back.observations.size() == path.observations.size());
    CHECK(std::memcmp(back.observations.data(), path.observations.data(), path.observations.size() * sizeof(double)) == 0);
    CHECK(back.delta_n == path.delta_n);
    CHECK(back.n == 300);
    REQUIRE(back.seed);
    CHECK(*back.seed == 99);
    REQUIRE(back.params);
    CHECK(back.params->alpha == 1.37);
    REQUIRE(back.scheme);
    CHECK(back.scheme->substeps == 3);

    fs::remove(dir / "path.json");
    const PathSample bare = io::read_path(csv);
    CHECK_THAT(bare.delta_n, Catch::Matchers::WithinRel(path.delta_n, 1e-12));
    CHECK(bare.observations == path.observations);
}

TEST_CASE("malformed path CSVs are input errors", "[io]") {
    CHECK_THROWS_AS(io::parse_path_csv(""), InputError);
    CHECK_THROWS_AS(io::parse_path_csv("time,x\n0,1\n0.1,1\n0.2,1\n"), InputError);
    CHECK_THROWS_AS(io::parse_path_csv("t,x\n0,1\n0.1,1\n"), InputError);
    CHECK_THROWS_AS(io::parse_path_csv("t,x\n0,1\n0.1,abc\n0.2,1\n"), InputError);
    CHECK_THROWS_AS(io::parse_path_csv("t,x\n0,1\n0.1,1,3\n0.2,1\n"), InputError);
    CHECK_THROWS_AS(io::parse_path_csv("t,x\n0,1\n0.1,1\n0.25,1\n"), InputError);
    CHECK_THROWS_AS(io::parse_path_csv("t,x\n0,1\n0.1,-1\n0.2,1\n"), InputError);
    CHECK_THROWS_AS(io::parse_path_csv("t,x\n0,1\n0.1,1\n0.2,1\n", io::json{{"delta_n", 0.1}, {"n", 5}}), InputError);
    CHECK_NOTHROW(io::parse_path_csv("t,x\r\n0,1\r\n0.1,1.5\r\n0.2,1\r\n"));
}

TEST_CASE("estimation result serializes to JSON and one CSV row", "[io]") {
    EstimationResult r;
    r.theta_hat = {1.1, 0.9, 1.45};
    r.converged = true;
    r.iterations = 7;
    r.residual_norm = 3e-10;
    r.lambda_n = Eigen::Matrix3d::Identity() * 0.25;
    r.asy_cov(1, 2) = -0.125;
    r.ci_95[0] = {1.0, 1.2};
    r.n = 1024;
    r.delta_n = 1.0 / 1024;
    r.u_n = 0.37;
    r.message = "converged";

    const auto j = io::to_json(r);
    CHECK(j.at("theta_hat").at("alpha").get<double>() == 1.45);
    CHECK(j.at("converged").get<bool>());
    CHECK(j.at("iterations").get<int>() == 7);
    CHECK(j.at("asy_cov").at(1).at(2).get<double>() == -0.125);
    CHECK(j.at("ci_95").at(0).at(1).get<double>() == 1.2);
    CHECK(j.at("message") == "converged");

    const std::string csv = io::result_csv(r);
    const auto nl = csv.find('\n');
    REQUIRE(nl != std::string::npos);
    const std::string header = csv.substr(0, nl), row = csv.substr(nl + 1);
    CHECK(count_char(csv, '\n') == 2);
    CHECK(count_char(header, ',') == count_char(row, ','));
    CHECK(header.rfind("sigma_sq,delta,alpha,converged", 0) == 0);
    CHECK(row.rfind("1.1,0.9,1.45,1,7,3e-10", 0) == 0);

    EstimationResult failed;
    CHECK(io::to_json(failed).at("residual_norm").is_null());
}

TEST_CASE("atomic writes leave no temporary files", "[io]") {
    const auto dir = scratch("atomic");
    io::write_file_atomic(dir / "sub" / "a.txt", "hello");
    CHECK(io::read_file(dir / "sub" / "a.txt") == "hello");
    CHECK(!fs::exists(dir / "sub" / "a.txt.tmp"));
    CHECK_THROWS_AS(io::read_file(dir / "missing"), InputError);
}
