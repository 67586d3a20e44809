#include <doctest.h>

#include "mbsmith/pathsm.hpp"
#include "mbsmith/rng.hpp"
#include "oracles.hpp"

using namespace mbsmith;

namespace {

const Direction kDown = -Direction();
const Direction kUp = Direction();

double deg(double d) { return d * kPi / 180.0; }

}  // namespace

TEST_SUITE("pathsm") {

TEST_CASE("vertex term") {
    const auto p = MicrosurfaceParams::isotropic(NdfKind::GGX, 1.0);
    CHECK(vertex_term(kDown, kUp, p, FresnelSpec::none()).r == doctest::Approx(1.0 / (4.0 * kPi)).epsilon(1e-14));
    CHECK(vertex_term(kDown, kUp, p, FresnelSpec::schlick(Spectrum(0.0))).is_black());
    // Half vector below the horizon.
    CHECK(vertex_term(kUp, kDown, p, FresnelSpec::none()).is_black());
    // Antiparallel pair: degenerate half vector.
    CHECK(vertex_term(kDown, kDown, p, FresnelSpec::none()).is_black());
}

TEST_CASE("phase function") {
    const auto p = MicrosurfaceParams::isotropic(NdfKind::GGX, 1.0);
    CHECK(phase_function(kDown, kUp, p, FresnelSpec::none()).r == doctest::Approx(1.0 / (4.0 * kPi)).epsilon(1e-14));
    CHECK(phase_function(Direction::from_spherical(deg(120), 0), Direction::from_spherical(deg(150), kPi), p,
                         FresnelSpec::none())
              .is_black());
}

TEST_CASE("phase times (1 + Lambda(-d_in)) equals the vertex term") {
    RngStream rng(1, 0);
    const auto fr = FresnelSpec::conductor(Spectrum(0.2, 0.9, 1.1), Spectrum(3.9, 2.4, 2.1));
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann})
        for (int i = 0; i < 100; ++i) {
            const MicrosurfaceParams p(kind, 0.1 + rng.uniform(), 0.1 + rng.uniform());
            const Direction d_in = oracle::random_hemisphere(rng, false);
            const Direction d_out = oracle::random_direction(rng);
            const Spectrum v = vertex_term(d_in, d_out, p, fr);
            const Spectrum ph = phase_function(d_in, d_out, p, fr) * (1.0 + smith_lambda(-d_in, p));
            for (int c = 0; c < 3; ++c) CHECK(ph[c] == doctest::Approx(v[c]).epsilon(1e-12));
        }
}

TEST_CASE("s1 values and zero rules") {
    const auto p = MicrosurfaceParams::isotropic(NdfKind::GGX, 1.0);
    CHECK(s1(kDown, kUp, p) == 1.0);
    const Direction d0 = -Direction::from_spherical(deg(45), 0);
    const Direction d1 = Direction::from_spherical(deg(45), kPi);
    CHECK(s1(d0, d1, p) == doctest::Approx(0.7071067811865475).epsilon(1e-12));
    CHECK(s1(kDown, kDown, p) == 0.0);
    CHECK(s1(kUp, kUp, p) == 0.0);
}

TEST_CASE("s1 equals the height-correlated G2") {
    RngStream rng(2, 0);
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann})
        for (int i = 0; i < 200; ++i) {
            const double a = 0.05 + 1.5 * rng.uniform();
            const auto p = MicrosurfaceParams::isotropic(kind, a);
            const Direction d0 = oracle::random_hemisphere(rng, false);
            const Direction d1 = oracle::random_hemisphere(rng, true);
            const double ref = oracle::g2_height_correlated(kind, (-d0).theta(), d1.theta(), a);
            CHECK(s1(d0, d1, p) == doctest::Approx(ref).epsilon(1e-12));
        }
}

TEST_CASE("path shadowing examples") {
    const auto p = MicrosurfaceParams::isotropic(NdfKind::GGX, 1.0);
    const std::vector<Direction> one = {kDown, Direction::from_spherical(deg(30), 0)};
    CHECK(path_shadowing(one, p) == s1(one[0], one[1], p));

    const std::vector<Direction> two = {kDown, Direction::unit(std::sqrt(0.5), 0, -std::sqrt(0.5)), kUp};
    CHECK(path_shadowing(two, p) == doctest::Approx(1.0 / 1.2071067811865475).epsilon(1e-12));

    // d1 down, d2 up: both recursive branches are nonzero.
    const std::vector<Direction> three = {-Direction::from_spherical(deg(20), 0.3),
                                          -Direction::from_spherical(deg(70), 2.0),
                                          Direction::from_spherical(deg(60), 4.0), Direction::from_spherical(deg(10), 1.0)};
    const SegmentTable t(three, p);
    CHECK(t.window(0, 2) > 0.0);
    CHECK(t.window(1, 3) > 0.0);
    CHECK(path_shadowing(three, p) ==
          doctest::Approx(oracle::naive_segment(three, 0, 3, NdfKind::GGX, 1.0)).epsilon(1e-12));

    CHECK_THROWS_AS(path_shadowing(std::vector<Direction>{kDown}, p), std::invalid_argument);
}

TEST_CASE("dynamic programming equals naive recursion for k <= 10") {
    RngStream rng(4, 0);
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann})
        for (int k = 1; k <= 10; ++k)
            for (int rep = 0; rep < 20; ++rep) {
                const double a = 0.1 + 1.2 * rng.uniform();
                const auto p = MicrosurfaceParams::isotropic(kind, a);
                const auto path = oracle::random_path(rng, k);
                const double ref = oracle::naive_segment(path, 0, path.size() - 1, kind, a);
                CHECK(path_shadowing(path, p) == doctest::Approx(ref).epsilon(1e-12));
                const SegmentTable t(path, p);
                for (std::size_t i = 0; i < path.size(); ++i)
                    for (std::size_t j = i + 1; j < path.size(); ++j) {
                        CHECK(t.window(i, j) >= 0.0);
                        CHECK(t.window(i, j) == doctest::Approx(oracle::naive_segment(path, i, j, kind, a)).epsilon(1e-12));
                    }
                for (std::size_t i = 0; i + 1 < path.size(); ++i) CHECK(t.window(i, i + 1) == s1(path[i], path[i + 1], p));
            }
}

TEST_CASE("incremental extension equals from-scratch") {
    const auto p = MicrosurfaceParams(NdfKind::GGX, 0.4, 0.9);
    RngStream rng(6, 0);
    const auto path = oracle::random_path(rng, 8);

    PathDirections built({path[0], path[1]});
    SegmentTable table(built.view(), p);
    for (std::size_t i = 2; i < path.size(); ++i) {
        CHECK(table.peek_extend(path[i]) == SegmentTable(std::vector<Direction>(path.begin(), path.begin() + i + 1), p).full());
        table = path_shadowing_extend(table, built, path[i], p);
        built.push_back(path[i]);
        CHECK(table.full() == path_shadowing(built, p));
    }
    CHECK(table.full() == doctest::Approx(path_shadowing(path, p)).epsilon(1e-12));

    // Extending with a downward direction closes nothing.
    CHECK(path_shadowing_extend(table, built, kDown, p).full() == 0.0);
    CHECK_THROWS_AS(path_shadowing_extend(table, PathDirections({kDown, kUp}), kUp, p), std::invalid_argument);

    // One extra direction on a k = 1 table.
    const std::vector<Direction> three = {path[0], Direction::from_spherical(1.0, 0.0), path.back()};
    SegmentTable t1(std::vector<Direction>(three.begin(), three.begin() + 2), p);
    t1.extend(three[2]);
    CHECK(t1.full() == path_shadowing(three, p));
}

TEST_CASE("zero rules and reversal symmetry") {
    RngStream rng(8, 0);
    const auto p = MicrosurfaceParams::isotropic(NdfKind::Beckmann, 0.6);
    for (int k = 1; k <= 8; ++k)
        for (int rep = 0; rep < 20; ++rep) {
            auto path = oracle::random_path(rng, k);
            const PathDirections pd(path);
            CHECK(path_shadowing(pd, p) == doctest::Approx(path_shadowing(pd.reversed(), p)).epsilon(1e-13));
            auto bad_start = path;
            bad_start.front() = -bad_start.front();
            CHECK(path_shadowing(bad_start, p) == 0.0);
            auto bad_end = path;
            bad_end.back() = -bad_end.back();
            CHECK(path_shadowing(bad_end, p) == 0.0);
        }
}

TEST_CASE("path contribution") {
    const auto p = MicrosurfaceParams::isotropic(NdfKind::GGX, 1.0);
    const std::vector<Direction> normal = {kDown, kUp};
    CHECK(path_contribution(normal, p, FresnelSpec::none()).r == doctest::Approx(1.0 / (4.0 * kPi)).epsilon(1e-14));
    // Classic single scatter F D G2 / (4 cos_i cos_o) times cos_o.
    const double d = oracle::ndf_closed(NdfKind::GGX, 0.0, 1.0);
    CHECK(path_contribution(normal, p, FresnelSpec::none()).g == doctest::Approx(d * 1.0 / 4.0).epsilon(1e-14));

    CHECK(path_contribution(normal, p, FresnelSpec::schlick(Spectrum(0.0))).is_black());
    CHECK_THROWS_AS(path_contribution(std::vector<Direction>{kDown, kDown}, p, FresnelSpec::none()), DomainError);
    CHECK_THROWS_AS(path_contribution(std::vector<Direction>{kUp, kUp}, p, FresnelSpec::none()), DomainError);
}

TEST_CASE("path-level reciprocity") {
    RngStream rng(10, 0);
    const auto fr = FresnelSpec::schlick(Spectrum(0.9, 0.5, 0.1));
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann})
        for (int i = 0; i < 100; ++i) {
            const MicrosurfaceParams p(kind, 0.2 + rng.uniform(), 0.2 + rng.uniform());
            const PathDirections path(oracle::random_path(rng, 1 + i % 6));
            const PathDirections rev = path.reversed();
            // f carries 1/|d_0.z| from its first vertex, the reversed path 1/|d_k.z|.
            const Spectrum f = path_contribution(path, p, fr) * std::abs(path[0].z());
            const Spectrum g = path_contribution(rev, p, fr) * std::abs(path[path.size() - 1].z());
            for (int c = 0; c < 3; ++c) CHECK(f[c] == doctest::Approx(g[c]).epsilon(1e-9));
        }
}

}  // TEST_SUITE
