#pragma once

#include <array>
#include <string_view>

#include "mbsmith/geometry.hpp"

namespace mbsmith {

enum class NdfKind { GGX, Beckmann };

std::string_view to_string(NdfKind kind);

// Normal distribution family plus slope-space roughness. Roughness values are
// clamped to [kMinAlpha, kMaxAlpha]; non-finite or non-positive values throw.
class MicrosurfaceParams {
  public:
    static constexpr double kMinAlpha = 1e-4;
    static constexpr double kMaxAlpha = 10.0;

    MicrosurfaceParams(NdfKind kind, double alpha_x, double alpha_y);
    static MicrosurfaceParams isotropic(NdfKind kind, double alpha) { return {kind, alpha, alpha}; }

    NdfKind kind() const { return kind_; }
    double alpha_x() const { return alpha_x_; }
    double alpha_y() const { return alpha_y_; }
    bool is_isotropic() const { return alpha_x_ == alpha_y_; }

    // alpha(phi)^2 * sin^2(theta) for the (not necessarily unit) vector w.
    double projected_roughness_sq(const Vec3& w) const {
        return alpha_x_ * alpha_x_ * w.x * w.x + alpha_y_ * alpha_y_ * w.y * w.y;
    }

  private:
    NdfKind kind_;
    double alpha_x_;
    double alpha_y_;
};

// D(m), normalized so that the projected area over the upper hemisphere is 1.
// Zero for m.z <= 0.
double ndf(const Direction& m, const MicrosurfaceParams& p);

// Smith Lambda for an upper-hemisphere direction. Throws DomainError if w.z <= 0.
double smith_lambda(const Direction& w, const MicrosurfaceParams& p);

// G1(w) = 1 / (1 + Lambda(w)). Throws DomainError if w.z <= 0.
double smith_g1(const Direction& w, const MicrosurfaceParams& p);

// Attenuation coefficient |Lambda(d)| seen by light travelling along d:
// Lambda(d) when d points up, 1 + Lambda(-d) when d points down.
double extinction(const Direction& d, const MicrosurfaceParams& p);

// Projected area of the microsurface seen from `view` (any hemisphere):
// integral of max(0, view . m) D(m) dm.
double projected_area(const Direction& view, const MicrosurfaceParams& p);

// Distribution of normals visible from `view` (any hemisphere), a density over m.
double visible_ndf(const Direction& m, const Direction& view, const MicrosurfaceParams& p);

// Exact sample of visible_ndf(., view). u1, u2 in [0, 1).
Direction sample_visible_normal(const Direction& view, const MicrosurfaceParams& p, double u1, double u2);

// Path convention wrappers: w_incident is the travelling direction of the
// incident light (w_incident.z < 0 for light arriving from above).
double vndf_eval(const Direction& m, const Direction& w_incident, const MicrosurfaceParams& p);
Direction vndf_sample(const Direction& w_incident, const MicrosurfaceParams& p, std::array<double, 2> u);

namespace detail {
// Smith Lambda evaluated on |w.z| with the kMinCos floor; no domain check.
double lambda_abs(const Vec3& w, const MicrosurfaceParams& p);
}  // namespace detail

}  // namespace mbsmith
