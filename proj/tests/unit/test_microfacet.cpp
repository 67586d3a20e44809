#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>

#include "mbsmith/microfacet.hpp"
#include "mbsmith/rng.hpp"
#include "oracles.hpp"

using namespace mbsmith;

namespace {

double deg(double d) { return d * kPi / 180.0; }

// Probability mass of visible_ndf(., view) in the (theta_m, phi_m) box.
double vndf_mass(const Direction& view, const MicrosurfaceParams& p, double t0, double t1, double p0, double p1) {
    return oracle::integrate(
        [&](double t) {
            return std::sin(t) * oracle::integrate(
                                     [&](double ph) { return visible_ndf(Direction::from_spherical(t, ph), view, p); },
                                     p0, p1, 2);
        },
        t0, t1, 2);
}

}  // namespace

TEST_SUITE("microfacet") {

TEST_CASE("direction construction") {
    const Direction d = Direction::from_spherical(deg(30), deg(40));
    CHECK(d.z() == doctest::Approx(std::cos(deg(30))).epsilon(1e-15));
    CHECK(d.x() * d.x() + d.y() * d.y() + d.z() * d.z() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(Direction::from_vector(Vec3(0, 0, 1e-12)).has_value());
    const Direction u = Direction::unit(3, 4, 12);
    CHECK(length(u.vec()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("roughness is clamped and validated") {
    const MicrosurfaceParams p(NdfKind::GGX, 1e-7, 50.0);
    CHECK(p.alpha_x() == MicrosurfaceParams::kMinAlpha);
    CHECK(p.alpha_y() == MicrosurfaceParams::kMaxAlpha);
    CHECK_FALSE(p.is_isotropic());
    CHECK(MicrosurfaceParams::isotropic(NdfKind::Beckmann, 0.3).is_isotropic());
    CHECK_THROWS_AS(MicrosurfaceParams(NdfKind::GGX, 0.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(MicrosurfaceParams(NdfKind::GGX, 0.5, std::nan("")), std::invalid_argument);
}

TEST_CASE("ndf values") {
    const auto ggx1 = MicrosurfaceParams::isotropic(NdfKind::GGX, 1.0);
    CHECK(ndf(Direction(), ggx1) == doctest::Approx(1.0 / kPi).epsilon(1e-14));
    CHECK(ndf(-Direction(), ggx1) == 0.0);
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann})
        for (double a : {0.1, 0.5, 1.3})
            for (double t : {0.0, 10.0, 45.0, 80.0}) {
                const auto p = MicrosurfaceParams::isotropic(kind, a);
                CHECK(ndf(Direction::from_spherical(deg(t), 1.1), p) ==
                      doctest::Approx(oracle::ndf_closed(kind, deg(t), a)).epsilon(1e-12));
            }
}

TEST_CASE("ndf projected-area normalization") {
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann})
        for (auto [ax, ay] : {std::pair{0.1, 0.1}, {1.0, 1.0}, {0.5, 0.5}, {0.2, 0.7}}) {
            CAPTURE(ax);
            CAPTURE(ay);
            const MicrosurfaceParams p(kind, ax, ay);
            // Panels concentrated near the pole so the alpha = 0.1 peak is resolved.
            const double near = oracle::integrate(
                [&](double t) {
                    return std::sin(t) * oracle::integrate(
                                             [&](double ph) {
                                                 const auto m = Direction::from_spherical(t, ph);
                                                 return ndf(m, p) * m.z();
                                             },
                                             0.0, kTwoPi, 16);
                },
                0.0, 0.6, 64);
            const double far = oracle::integrate(
                [&](double t) {
                    return std::sin(t) * oracle::integrate(
                                             [&](double ph) {
                                                 const auto m = Direction::from_spherical(t, ph);
                                                 return ndf(m, p) * m.z();
                                             },
                                             0.0, kTwoPi, 16);
                },
                0.6, kPi / 2, 32);
            CHECK(near + far == doctest::Approx(1.0).epsilon(1e-3));
        }
}

TEST_CASE("smith lambda against the slope integral") {
    const auto ggx1 = MicrosurfaceParams::isotropic(NdfKind::GGX, 1.0);
    const double l45 = smith_lambda(Direction::from_spherical(deg(45), 0.3), ggx1);
    CHECK(l45 == doctest::Approx((std::sqrt(2.0) - 1.0) / 2.0).epsilon(1e-12));
    CHECK(l45 == doctest::Approx(oracle::smith_lambda_integral(Direction::from_spherical(deg(45), 0.3), ggx1))
                     .epsilon(1e-4));

    const auto beck = MicrosurfaceParams::isotropic(NdfKind::Beckmann, 0.5);
    const Direction w60 = Direction::from_spherical(deg(60), 0.0);
    CHECK(smith_lambda(w60, beck) == doctest::Approx(oracle::smith_lambda_integral(w60, beck)).epsilon(1e-6));

    RngStream rng(3, 0);
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann})
        for (int i = 0; i < 40; ++i) {
            const MicrosurfaceParams p(kind, 0.05 + 1.5 * rng.uniform(), 0.05 + 1.5 * rng.uniform());
            const Direction w = oracle::random_hemisphere(rng, true, 0.05);
            const double ref = oracle::smith_lambda_integral(w, p);
            CHECK(smith_lambda(w, p) == doctest::Approx(ref).epsilon(1e-6).scale(1e-3));
        }
}

TEST_CASE("smith lambda and g1 basics") {
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann}) {
        const auto p = MicrosurfaceParams::isotropic(kind, 0.7);
        CHECK(smith_lambda(Direction(), p) == 0.0);
        CHECK(smith_g1(Direction(), p) == 1.0);
        CHECK_THROWS_AS(smith_lambda(Direction::from_spherical(deg(100), 0), p), DomainError);
        CHECK_THROWS_AS(smith_g1(Direction::from_spherical(deg(90.0000001), 0), p), DomainError);
        double prev_l = 0.0, prev_g = 1.0;
        for (int i = 0; i < 90; ++i) {
            const Direction w = Direction::from_spherical(deg(i + 0.5), 0.4);
            const double l = smith_lambda(w, p), g = smith_g1(w, p);
            CHECK(l >= prev_l);
            CHECK(g <= prev_g);
            CHECK(g == doctest::Approx(1.0 / (1.0 + l)).epsilon(1e-15));
            prev_l = l;
            prev_g = g;
        }
    }
    CHECK(smith_g1(Direction::from_spherical(deg(45), 0), MicrosurfaceParams::isotropic(NdfKind::GGX, 1.0)) ==
          doctest::Approx(1.0 / 1.2071067811865475).epsilon(1e-12));
}

TEST_CASE("anisotropic parameters with equal roughness reproduce the isotropic lambda") {
    RngStream rng(5, 0);
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann})
        for (int i = 0; i < 100; ++i) {
            const double a = 0.05 + 2.0 * rng.uniform();
            const Direction w = oracle::random_hemisphere(rng, true, 0.01);
            const MicrosurfaceParams p(kind, a, a);
            CHECK(smith_lambda(w, p) == doctest::Approx(oracle::lambda_closed(kind, w.theta(), a)).epsilon(1e-9));
        }
}

TEST_CASE("extinction maps downward directions through 1 + Lambda") {
    const auto p = MicrosurfaceParams::isotropic(NdfKind::GGX, 0.6);
    const Direction w = Direction::from_spherical(deg(50), 1.0);
    CHECK(extinction(w, p) == doctest::Approx(smith_lambda(w, p)));
    CHECK(extinction(-w, p) == doctest::Approx(1.0 + smith_lambda(w, p)));
    CHECK(projected_area(w, p) == doctest::Approx(w.z() * (1.0 + smith_lambda(w, p))));
    // The projected area seen from above is also the integral of <w, m>+ D(m).
    const double integral = oracle::integrate_hemisphere(
        [&](const Direction& m) { return std::max(0.0, dot(w, m)) * ndf(m, p); }, 64, 32);
    CHECK(projected_area(w, p) == doctest::Approx(integral).epsilon(1e-5));
}

TEST_CASE("vndf normalization and pointwise identity") {
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann}) {
        const auto p = MicrosurfaceParams::isotropic(kind, 0.5);
        const Direction w_inc = -Direction::from_spherical(deg(30), 0.0);
        const double total =
            oracle::integrate_hemisphere([&](const Direction& m) { return vndf_eval(m, w_inc, p); }, 64, 32);
        CHECK(total == doctest::Approx(1.0).epsilon(2e-3));
        CHECK(vndf_eval(-Direction(), w_inc, p) == 0.0);

        RngStream rng(9, 0);
        for (int i = 0; i < 50; ++i) {
            const Direction m = oracle::random_hemisphere(rng, true);
            const Direction w = oracle::random_hemisphere(rng, false);
            const double lhs = vndf_eval(m, w, p) * std::abs(w.z());
            const double rhs = smith_g1(-w, p) * std::max(0.0, dot(-w, m)) * ndf(m, p);
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
        }
    }
}

TEST_CASE("vndf samples lie on the visible side") {
    RngStream rng(11, 0);
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann})
        for (int i = 0; i < 20000; ++i) {
            const MicrosurfaceParams p(kind, 0.02 + 1.5 * rng.uniform(), 0.02 + 1.5 * rng.uniform());
            const Direction w = oracle::random_hemisphere(rng, false, 1e-3);
            const Direction m = vndf_sample(w, p, rng.uniform2());
            CHECK(m.z() > 0.0);
            CHECK(dot(-w, m) >= -1e-12);
        }
}

TEST_CASE("vndf sampler chi-square") {
    const int nt = 16, np = 32;
    const std::uint64_t n = 200000;
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann})
        for (auto [ax, ay, theta] : {std::tuple{0.5, 0.5, 30.0}, {0.3, 0.9, 70.0}}) {
            CAPTURE(static_cast<int>(kind));
            CAPTURE(theta);
            const MicrosurfaceParams p(kind, ax, ay);
            const Direction view = Direction::from_spherical(deg(theta), 0.7);
            std::vector<double> counts(nt * np, 0.0);
            RngStream rng(21, 0);
            for (std::uint64_t i = 0; i < n; ++i) {
                const Direction m = sample_visible_normal(view, p, rng.uniform(), rng.uniform());
                const int it = std::min(nt - 1, static_cast<int>(m.theta() / (kPi / 2) * nt));
                double ph = m.phi();
                if (ph < 0) ph += kTwoPi;
                const int ip = std::min(np - 1, static_cast<int>(ph / kTwoPi * np));
                counts[it * np + ip] += 1.0;
            }
            double chi2 = 0.0, pooled_obs = 0.0, pooled_exp = 0.0;
            int dof = 0;
            for (int it = 0; it < nt; ++it)
                for (int ip = 0; ip < np; ++ip) {
                    const double e = n * vndf_mass(view, p, kPi / 2 * it / nt, kPi / 2 * (it + 1) / nt,
                                                   kTwoPi * ip / np, kTwoPi * (ip + 1) / np);
                    const double o = counts[it * np + ip];
                    if (e < 5.0) {
                        pooled_obs += o;
                        pooled_exp += e;
                        continue;
                    }
                    chi2 += (o - e) * (o - e) / e;
                    ++dof;
                }
            if (pooled_exp > 0.0) {
                chi2 += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
                ++dof;
            }
            const double pval = boost::math::gamma_q(0.5 * (dof - 1), 0.5 * chi2);
            CAPTURE(chi2);
            CAPTURE(dof);
            CHECK(pval > 0.01);
        }
}

TEST_CASE("normal incidence sampling is azimuthally uniform") {
    for (auto kind : {NdfKind::GGX, NdfKind::Beckmann}) {
        const auto p = MicrosurfaceParams::isotropic(kind, 0.4);
        RngStream rng(31, 0);
        double c = 0.0, s = 0.0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const Direction m = vndf_sample(-Direction(), p, rng.uniform2());
            const double ph = m.phi();
            c += std::cos(ph);
            s += std::sin(ph);
        }
        const double z = (c * c + s * s) / n;  // Rayleigh statistic
        CHECK(std::exp(-z) > 0.01);
    }
}

}  // TEST_SUITE
