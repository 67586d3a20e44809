#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace mbsmith {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInvPi = 1.0 / kPi;
inline constexpr double kTwoPi = 2.0 * kPi;

// Floor applied to |cos theta| wherever it appears in a denominator.
inline constexpr double kMinCos = 1e-7;

// Raised when a query direction lies on the wrong side of the macrosurface.
class DomainError : public std::domain_error {
  public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    constexpr Vec3() = default;
    constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double length(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Unit vector in the local shading frame. The geometric normal is +z.
class Direction {
  public:
    constexpr Direction() : v_(0.0, 0.0, 1.0) {}

    // z = cos(theta), phi measured from +x toward +y.
    static Direction from_spherical(double theta, double phi) {
        const double s = std::sin(theta);
        return Direction(Vec3(s * std::cos(phi), s * std::sin(phi), std::cos(theta)));
    }

    // Returns nullopt when |v| < 1e-9.
    static std::optional<Direction> from_vector(const Vec3& v) {
        const double len = length(v);
        if (!(len >= 1e-9)) return std::nullopt;
        return Direction(v / len);
    }

    // Renormalizing constructor for vectors known to be close to unit length.
    static Direction unit(double x, double y, double z) {
        const Vec3 v(x, y, z);
        return Direction(v / length(v));
    }

    constexpr double x() const { return v_.x; }
    constexpr double y() const { return v_.y; }
    constexpr double z() const { return v_.z; }
    constexpr const Vec3& vec() const { return v_; }

    double theta() const { return std::acos(std::clamp(v_.z, -1.0, 1.0)); }
    double phi() const { return std::atan2(v_.y, v_.x); }

    constexpr Direction operator-() const { return Direction(-v_); }

  private:
    constexpr explicit Direction(const Vec3& v) : v_(v) {}
    Vec3 v_;
};

constexpr double dot(const Direction& a, const Direction& b) { return dot(a.vec(), b.vec()); }

// Mirror reflection of the travelling direction d about the microfacet normal m.
inline Direction reflect(const Direction& d, const Direction& m) {
    const Vec3 r = d.vec() - m.vec() * (2.0 * dot(d, m));
    return Direction::unit(r.x, r.y, r.z);
}

// Half vector of a reflection that turns travelling direction d_in into d_out.
inline std::optional<Direction> reflection_half_vector(const Direction& d_in, const Direction& d_out) {
    return Direction::from_vector(d_out.vec() - d_in.vec());
}

}  // namespace mbsmith
