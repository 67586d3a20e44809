#pragma once

#include <map>
#include <string>
#include <string_view>

#include "mbsmith/geometry.hpp"
#include "mbsmith/spectrum.hpp"

namespace mbsmith {

// Reflectance model applied at each microfacet.
class FresnelSpec {
  public:
    enum class Kind { None, Schlick, Conductor };

    // F == 1 (white furnace configuration).
    FresnelSpec() = default;

    static FresnelSpec none() { return {}; }
    // F0 channels must lie in [0, 1].
    static FresnelSpec schlick(const Spectrum& f0);
    // Complex index of refraction eta + i kappa per channel; all channels > 0.
    static FresnelSpec conductor(const Spectrum& eta, const Spectrum& kappa);

    Kind kind() const { return kind_; }
    const Spectrum& f0() const { return a_; }
    const Spectrum& eta() const { return a_; }
    const Spectrum& kappa() const { return b_; }

    // True when every channel evaluates identically (None, or gray parameters).
    bool is_scalar() const;

  private:
    Kind kind_ = Kind::None;
    Spectrum a_;
    Spectrum b_;
};

// Fresnel reflectance for the cosine c = |w_in . m| clamped to [0, 1].
Spectrum fresnel_eval(const Direction& w_in, const Direction& m, const FresnelSpec& spec);
Spectrum fresnel_eval(double cos_theta, const FresnelSpec& spec);

// Unpolarized reflectance of a conductor with complex IOR eta + i k.
double fresnel_conductor(double cos_theta, double eta, double k);

struct ConductorIor {
    Spectrum eta;
    Spectrum kappa;
};

// Parses `name eta_r eta_g eta_b k_r k_g k_b` lines; `#` starts a comment.
// Throws std::runtime_error naming the offending line on malformed input.
std::map<std::string, ConductorIor, std::less<>> parse_conductor_table(std::string_view text);
std::map<std::string, ConductorIor, std::less<>> load_conductor_table(const std::string& path);

// The table shipped in data/conductors.txt (copper, aluminum, gold).
const std::map<std::string, ConductorIor, std::less<>>& builtin_conductors();

}  // namespace mbsmith
