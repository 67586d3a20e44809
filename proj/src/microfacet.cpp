#include "mbsmith/microfacet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/erf.hpp>

namespace mbsmith {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

// Inverse CDF sampling of the slope density proportional to
// exp(-x^2) * max(0, mu - x), the visible-slope marginal of the unit
// Beckmann surface seen from a direction with cot(theta) = mu.
double sample_beckmann_slope_x(double mu, double u) {
    if (mu < -26.0) {
        // exp(-mu^2) underflows; the density collapses onto
        // s * exp(-2|mu| s) with s = mu - x.
        const double s = -std::log1p(-u) / (2.0 * -mu);
        return mu - s;
    }
    auto cdf = [mu](double x) { return mu * 0.5 * kSqrtPi * std::erfc(-x) + 0.5 * std::exp(-x * x); };
    const double target = u * cdf(mu);

    double hi = mu;
    double lo = std::min(mu, 0.0) - 1.0;
    while (cdf(lo) > target && lo > -40.0) lo = mu - 2.0 * (mu - lo);

    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double f = cdf(x) - target;
        if (f > 0.0)
            hi = x;
        else
            lo = x;
        if (hi - lo < 1e-14 * std::max(1.0, std::abs(x))) break;
        const double deriv = std::exp(-x * x) * (mu - x);
        double next = deriv > 0.0 ? x - f / deriv : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    return x;
}

double std_gaussian_slope(double u) {
    const double v = std::clamp(2.0 * u - 1.0, -1.0 + 1e-15, 1.0 - 1e-15);
    return boost::math::erf_inv(v);
}

Direction sample_ggx_visible(const Direction& view, const MicrosurfaceParams& p, double u1, double u2) {
    const Direction wi = Direction::unit(p.alpha_x() * view.x(), p.alpha_y() * view.y(), view.z());
    // Uniform point on the spherical cap {c : c.z > -wi.z}; wi + c is
    // distributed as the visible normals of the unit hemisphere.
    const double phi = kTwoPi * u1;
    const double z = (1.0 - u2) * (1.0 + wi.z()) - wi.z();
    const double sin_theta = std::sqrt(std::clamp(1.0 - z * z, 0.0, 1.0));
    const Vec3 h = Vec3(sin_theta * std::cos(phi), sin_theta * std::sin(phi), z) + wi.vec();
    const auto m = Direction::from_vector(Vec3(p.alpha_x() * h.x, p.alpha_y() * h.y, std::max(h.z, 0.0)));
    return m.value_or(Direction());
}

Direction sample_beckmann_visible(const Direction& view, const MicrosurfaceParams& p, double u1, double u2) {
    const Direction wi = Direction::unit(p.alpha_x() * view.x(), p.alpha_y() * view.y(), view.z());
    const double sin_theta = std::hypot(wi.x(), wi.y());
    double sx = 0.0, sy = 0.0;
    if (sin_theta < 1e-9) {
        if (wi.z() <= 0.0) return Direction();
        sx = std_gaussian_slope(u1);
        sy = std_gaussian_slope(u2);
    } else {
        const double cos_phi = wi.x() / sin_theta;
        const double sin_phi = wi.y() / sin_theta;
        const double x = sample_beckmann_slope_x(wi.z() / sin_theta, u1);
        const double y = std_gaussian_slope(u2);
        sx = cos_phi * x - sin_phi * y;
        sy = sin_phi * x + cos_phi * y;
    }
    return Direction::unit(-p.alpha_x() * sx, -p.alpha_y() * sy, 1.0);
}

}  // namespace

std::string_view to_string(NdfKind kind) { return kind == NdfKind::GGX ? "ggx" : "beckmann"; }

MicrosurfaceParams::MicrosurfaceParams(NdfKind kind, double alpha_x, double alpha_y) : kind_(kind) {
    if (!std::isfinite(alpha_x) || !std::isfinite(alpha_y) || alpha_x <= 0.0 || alpha_y <= 0.0)
        throw std::invalid_argument("roughness must be finite and positive");
    alpha_x_ = std::clamp(alpha_x, kMinAlpha, kMaxAlpha);
    alpha_y_ = std::clamp(alpha_y, kMinAlpha, kMaxAlpha);
}

double ndf(const Direction& m, const MicrosurfaceParams& p) {
    if (m.z() <= 0.0) return 0.0;
    const double ax = p.alpha_x(), ay = p.alpha_y();
    const double ex = m.x() * m.x() / (ax * ax);
    const double ey = m.y() * m.y() / (ay * ay);
    const double z2 = m.z() * m.z();
    if (p.kind() == NdfKind::GGX) {
        const double d = ex + ey + z2;
        return 1.0 / (kPi * ax * ay * d * d);
    }
    return std::exp(-(ex + ey) / z2) / (kPi * ax * ay * z2 * z2);
}

namespace detail {

double lambda_abs(const Vec3& w, const MicrosurfaceParams& p) {
    const double z = std::max(std::abs(w.z), kMinCos);
    const double q = p.projected_roughness_sq(w);
    if (q <= 0.0) return 0.0;
    if (p.kind() == NdfKind::GGX) {
        // alpha^2 tan^2 theta without forming tan directly.
        const double t2 = q / (z * z);
        return t2 / (2.0 * (1.0 + std::sqrt(1.0 + t2)));
    }
    const double a = z / std::sqrt(q);
    if (a > 26.0) return 0.0;
    const double lambda = 0.5 * (std::exp(-a * a) / (a * kSqrtPi) - std::erfc(a));
    return std::max(lambda, 0.0);
}

}  // namespace detail

double smith_lambda(const Direction& w, const MicrosurfaceParams& p) {
    if (!(w.z() > 0.0)) throw DomainError("Smith Lambda requires an upper-hemisphere direction");
    return detail::lambda_abs(w.vec(), p);
}

double smith_g1(const Direction& w, const MicrosurfaceParams& p) { return 1.0 / (1.0 + smith_lambda(w, p)); }

double extinction(const Direction& d, const MicrosurfaceParams& p) {
    const double lambda = detail::lambda_abs(d.vec(), p);
    return d.z() >= 0.0 ? lambda : 1.0 + lambda;
}

double projected_area(const Direction& view, const MicrosurfaceParams& p) {
    const double z = std::max(std::abs(view.z()), kMinCos);
    const double lambda = detail::lambda_abs(view.vec(), p);
    return view.z() >= 0.0 ? z * (1.0 + lambda) : z * lambda;
}

double visible_ndf(const Direction& m, const Direction& view, const MicrosurfaceParams& p) {
    const double c = dot(view, m);
    if (c <= 0.0 || m.z() <= 0.0) return 0.0;
    const double area = projected_area(view, p);
    if (!(area > 0.0)) return 0.0;
    return c * ndf(m, p) / area;
}

Direction sample_visible_normal(const Direction& view, const MicrosurfaceParams& p, double u1, double u2) {
    return p.kind() == NdfKind::GGX ? sample_ggx_visible(view, p, u1, u2) : sample_beckmann_visible(view, p, u1, u2);
}

double vndf_eval(const Direction& m, const Direction& w_incident, const MicrosurfaceParams& p) {
    return visible_ndf(m, -w_incident, p);
}

Direction vndf_sample(const Direction& w_incident, const MicrosurfaceParams& p, std::array<double, 2> u) {
    return sample_visible_normal(-w_incident, p, u[0], u[1]);
}

}  // namespace mbsmith
