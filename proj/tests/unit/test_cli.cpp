#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"
#include "config.hpp"
#include "image.hpp"
#include "mbsmith/estimators.hpp"

using namespace mbsmith;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / ("mbsmith_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<std::string> cells(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    for (std::string c; std::getline(in, c, ',');) out.push_back(c);
    return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("eval prints seven numbers deterministically") {
    const std::vector<std::string> args = {"eval",  "--ndf",     "ggx",  "--alpha",   "1.0",    "--theta-i", "45",
                                           "--theta-o", "45", "--phi-o", "180", "--fresnel", "none", "--samples",
                                           "100000", "--seed", "7"};
    const Run a = run(args);
    REQUIRE(a.code == 0);
    std::istringstream in(a.out);
    std::vector<double> v;
    for (double x; in >> x;) v.push_back(x);
    REQUIRE(v.size() == 7);
    for (double x : v) {
        CHECK(std::isfinite(x));
        CHECK(x >= 0.0);
    }
    CHECK(a.out == run(args).out);
    auto threaded = args;
    threaded.insert(threaded.end(), {"--threads", "3"});
    CHECK(a.out == run(threaded).out);
}

TEST_CASE("exit codes") {
    CHECK(run({"eval", "--theta-o", "120", "--samples", "10"}).code == 3);
    const Run bad = run({"eval", "--alpha", "rough"});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("--alpha") != std::string::npos);
    CHECK(run({"eval", "--ndf", "phong"}).code == 2);
    CHECK(run({"eval", "--fresnel", "conductor:unobtainium"}).code == 2);
    CHECK(run({"eval", "--no-such-flag"}).code == 2);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"furnace", "--samples", "100", "--out", "/nonexistent/dir/x.csv"}).code == 4);
    CHECK(run({"eval", "--config", "/nonexistent/cfg.txt"}).code == 4);
    CHECK(run({"slice", "--resolution", "8", "--out", (scratch_dir() / "x.pfm").string()}).code == 2);
    CHECK(run({"eval", "--help"}).code == 0);
}

TEST_CASE("config files") {
    const fs::path cfg = scratch_dir() / "run.cfg";
    {
        std::ofstream f(cfg);
        f << "# sample config\nndf = beckmann\nalpha=0.7   # rough\n\nsamples = 2000\nseed = 3\n";
    }
    const Run from_file = run({"eval", "--config", cfg.string()});
    REQUIRE(from_file.code == 0);
    const Run explicit_flags = run({"eval", "--ndf", "beckmann", "--alpha", "0.7", "--samples", "2000", "--seed", "3"});
    CHECK(from_file.out == explicit_flags.out);
    // Flags override the file.
    const Run overridden = run({"eval", "--config", cfg.string(), "--seed", "4"});
    CHECK(overridden.out == run({"eval", "--ndf", "beckmann", "--alpha", "0.7", "--samples", "2000", "--seed", "4"}).out);

    {
        std::ofstream f(cfg);
        f << "alpha = 0.5\n# fine\nalpah = 0.2\n";
    }
    const Run bad = run({"eval", "--config", cfg.string()});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("line 3") != std::string::npos);
    CHECK(bad.err.find("alpah") != std::string::npos);

    CHECK_THROWS_WITH_AS(cli::parse_config_text("a b c\n"), doctest::Contains("line 1"), cli::UsageError);
    CHECK(cli::parse_config_text("max_bounces = 4\n").at("max-bounces") == "4");
}

TEST_CASE("resolve_config validation") {
    cli::KeyValues v = {{"method", "ours-pt, independent"}, {"theta-i", "30"}, {"fresnel", "schlick:0.9,0.5,0.1"}};
    const cli::RunConfig c = cli::resolve_config(v);
    REQUIRE(c.methods.size() == 2);
    CHECK(c.methods[1] == Method::Independent);
    CHECK(c.fresnel.kind() == FresnelSpec::Kind::Schlick);
    CHECK(c.fresnel.f0().b == 0.1);
    CHECK_THROWS_AS(cli::resolve_config({{"samples", "0"}}), cli::UsageError);
    CHECK_THROWS_AS(cli::resolve_config({{"rr-start", "1"}}), cli::UsageError);
    CHECK_THROWS_AS(cli::resolve_config({{"theta-i", "95"}}), DomainError);
    CHECK_THROWS_AS(cli::resolve_config({{"fresnel", "schlick:1.5"}}), cli::UsageError);
    CHECK(cli::resolve_config({{"alpha", "0.3"}, {"alpha-y", "0.9"}}).params().alpha_y() == 0.9);
}

TEST_CASE("number format") {
    CHECK(cli::format_number(0.1) == "0.10000000000000001");
    CHECK(cli::format_number(1.0) == "1");
    CHECK(std::stod(cli::format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("furnace emits nine rows near one") {
    const fs::path out = scratch_dir() / "furnace.csv";
    REQUIRE(run({"furnace", "--samples", "100000", "--out", out.string()}).code == 0);
    const auto rows = lines(read_file(out));
    REQUIRE(rows.size() == 10);
    CHECK(rows[0] == "ndf,alpha,theta_i,albedo,stderr,bounces_mean");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto c = cells(rows[i]);
        REQUIRE(c.size() == 6);
        const double albedo = std::stod(c[3]);
        CHECK(albedo >= 0.99);
        CHECK(albedo <= 1.01);
    }
    const auto timed = lines(run({"furnace", "--samples", "1000", "--timing"}).out);
    CHECK(cells(timed[0]).back() == "seconds");
}

TEST_CASE("curve emits one row per bin") {
    const Run r = run({"curve", "--bins", "90", "--samples", "200", "--alpha", "0.5"});
    REQUIRE(r.code == 0);
    const auto rows = lines(r.out);
    CHECK(rows.size() == 91);
    for (const auto& row : rows) {
        CHECK(row.back() != ',');
        CHECK(cells(row).size() == 5);
    }
    CHECK(run({"curve", "--bins", "8"}).code == 2);
}

TEST_CASE("compare shows the independent-bounce bias") {
    const Run r = run({"compare", "--alpha", "1.0", "--bins", "16", "--samples", "20000", "--method", "independent",
                       "--method", "ours-pt"});
    REQUIRE(r.code == 0);
    const auto rows = lines(r.out);
    REQUIRE(rows.size() == 17);
    const auto header = cells(rows[0]);
    CHECK(header[3] == "independent_mean");
    CHECK(header[5] == "ours-pt_mean");
    CHECK(header[7] == "difference");
    int significant = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto c = cells(rows[i]);
        CHECK(std::stod(c[7]) != 0.0);
        significant += std::abs(std::stod(c[8])) > 3.0;
    }
    CHECK(significant >= 8);
    CHECK(run({"compare", "--method", "ours-pt"}).code == 2);
}

TEST_CASE("convergence report") {
    const Run r = run({"convergence", "--samples", "256", "--repetitions", "4", "--method", "ours-pt", "--grid-theta",
                       "16", "--grid-phi", "32"});
    REQUIRE(r.code == 0);
    const auto rows = lines(r.out);
    CHECK(rows[0] == "method,n,mse,fit_slope,fit_intercept");
    CHECK(rows[1].rfind("ours-pt,1,", 0) == 0);
    CHECK(rows.size() == 5);
}

TEST_CASE("sample histogram") {
    const Run r = run({"sample-histogram", "--bins", "4", "--phi-bins", "4", "--samples", "20000"});
    REQUIRE(r.code == 0);
    const auto rows = lines(r.out);
    CHECK(rows.size() == 17);
    CHECK(cells(rows[0]).size() == 10);
}

TEST_CASE("pfm encoding") {
    cli::Image img(2, 2);
    img.pixel(0, 0)[0] = 1.0f;  // top-left
    img.pixel(1, 1)[2] = 2.0f;  // bottom-right
    const std::string pfm = cli::encode_pfm(img);
    const std::string header = "PF\n2 2\n-1.0\n";
    REQUIRE(pfm.size() == header.size() + 2 * 2 * 3 * 4);
    CHECK(pfm.compare(0, header.size(), header) == 0);
    float first_row[6];
    std::memcpy(first_row, pfm.data() + header.size(), sizeof first_row);
    // First stored row is the bottom one.
    CHECK(first_row[5] == 2.0f);
    CHECK(first_row[0] == 0.0f);
    float second_row[6];
    std::memcpy(second_row, pfm.data() + header.size() + 24, sizeof second_row);
    CHECK(second_row[0] == 1.0f);
    const unsigned char le[4] = {0x00, 0x00, 0x80, 0x3f};  // 1.0f little-endian
    CHECK(std::memcmp(pfm.data() + header.size() + 24, le, 4) == 0);

    const std::string ppm = cli::encode_ppm(img);
    CHECK(ppm.rfind("P6\n2 2\n255\n", 0) == 0);
    CHECK(static_cast<unsigned char>(ppm[11]) == 255);
}

TEST_CASE("slice image") {
    const fs::path out = scratch_dir() / "slice.pfm";
    REQUIRE(run({"slice", "--resolution", "256", "--samples", "1", "--alpha", "0.5", "--theta-i", "30", "--out",
                 out.string()})
                .code == 0);
    const std::string pfm = read_file(out);
    const std::string header = "PF\n256 256\n-1.0\n";
    REQUIRE(pfm.size() == header.size() + 256 * 256 * 3 * 4);
    CHECK(pfm.compare(0, header.size(), header) == 0);
    auto px = [&](int x, int y_top) {
        const int file_row = 255 - y_top;
        float v[3];
        std::memcpy(v, pfm.data() + header.size() + (static_cast<std::size_t>(file_row) * 256 + x) * 12, 12);
        return std::array<float, 3>{v[0], v[1], v[2]};
    };
    for (auto [x, y] : {std::pair{0, 0}, {255, 0}, {0, 255}, {255, 255}, {2, 30}})
        for (float v : px(x, y)) CHECK(v == 0.0f);

    const fs::path again = scratch_dir() / "slice2.pfm";
    REQUIRE(run({"slice", "--resolution", "256", "--samples", "1", "--alpha", "0.5", "--theta-i", "30", "--threads",
                 "4", "--out", again.string()})
                .code == 0);
    CHECK(read_file(again) == pfm);

    const fs::path ppm = scratch_dir() / "slice.ppm";
    REQUIRE(run({"slice", "--resolution", "16", "--samples", "4", "--out", ppm.string()}).code == 0);
    CHECK(read_file(ppm).rfind("P6\n16 16\n255\n", 0) == 0);
}

TEST_CASE("slice pixel at the specular peak matches eval") {
    const int res = 32;
    const std::uint64_t n = 4000;
    const fs::path out = scratch_dir() / "peak.pfm";
    REQUIRE(run({"slice", "--resolution", std::to_string(res), "--samples", std::to_string(n), "--alpha", "0.5",
                 "--theta-i", "30", "--out", out.string()})
                .code == 0);
    const std::string pfm = read_file(out);
    const std::size_t header = std::string("PF\n32 32\n-1.0\n").size();
    const double s = std::sin(30.0 * kPi / 180.0);
    const int x = static_cast<int>((1.0 - s) * 0.5 * res), y = res / 2;
    float pixel;
    std::memcpy(&pixel, pfm.data() + header + (static_cast<std::size_t>(res - 1 - y) * res + x) * 12, 4);

    const double u = 2.0 * (x + 0.5) / res - 1.0, v = 1.0 - 2.0 * (y + 0.5) / res;
    const Direction wo = Direction::unit(u, v, std::sqrt(1.0 - u * u - v * v));
    EstimatorConfig cfg;
    cfg.sample_count = 100000;
    cfg.seed = 77;
    const EvalResult ref = eval(Direction::from_spherical(30.0 * kPi / 180.0, 0.0), wo,
                                MicrosurfaceParams::isotropic(NdfKind::GGX, 0.5), FresnelSpec::none(), cfg);
    const double pixel_se = ref.standard_error().r * std::sqrt(static_cast<double>(cfg.sample_count) / n);
    CAPTURE(pixel);
    CAPTURE(ref.value.r);
    CHECK(std::abs(pixel - ref.value.r) < 4.0 * std::hypot(pixel_se, ref.standard_error().r) + 1e-6 * ref.value.r);
}

}  // TEST_SUITE
