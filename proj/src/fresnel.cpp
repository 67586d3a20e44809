#include "mbsmith/fresnel.hpp"

#include <complex>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "conductors_data.hpp"

namespace mbsmith {

FresnelSpec FresnelSpec::schlick(const Spectrum& f0) {
    for (int c = 0; c < 3; ++c)
        if (!(f0[c] >= 0.0 && f0[c] <= 1.0)) throw std::invalid_argument("Schlick F0 must lie in [0, 1]");
    FresnelSpec s;
    s.kind_ = Kind::Schlick;
    s.a_ = f0;
    return s;
}

FresnelSpec FresnelSpec::conductor(const Spectrum& eta, const Spectrum& kappa) {
    for (int c = 0; c < 3; ++c)
        if (!(eta[c] > 0.0 && kappa[c] > 0.0) || !std::isfinite(eta[c]) || !std::isfinite(kappa[c]))
            throw std::invalid_argument("conductor eta and kappa must be positive");
    FresnelSpec s;
    s.kind_ = Kind::Conductor;
    s.a_ = eta;
    s.b_ = kappa;
    return s;
}

bool FresnelSpec::is_scalar() const {
    auto gray = [](const Spectrum& s) { return s.r == s.g && s.g == s.b; };
    return kind_ == Kind::None || (gray(a_) && gray(b_));
}

double fresnel_conductor(double cos_theta, double eta, double k) {
    using C = std::complex<double>;
    const double c = std::clamp(cos_theta, 0.0, 1.0);
    const C n(eta, k);
    const double sin2 = 1.0 - c * c;
    const C cos_t = std::sqrt(1.0 - sin2 / (n * n));
    const C r_parl = (n * c - cos_t) / (n * c + cos_t);
    const C r_perp = (c - n * cos_t) / (c + n * cos_t);
    return 0.5 * (std::norm(r_parl) + std::norm(r_perp));
}

Spectrum fresnel_eval(double cos_theta, const FresnelSpec& spec) {
    const double c = std::clamp(std::abs(cos_theta), 0.0, 1.0);
    switch (spec.kind()) {
        case FresnelSpec::Kind::None:
            return Spectrum(1.0);
        case FresnelSpec::Kind::Schlick: {
            const double m = 1.0 - c;
            const double m5 = (m * m) * (m * m) * m;
            const Spectrum& f0 = spec.f0();
            return f0 + (Spectrum(1.0) - f0) * m5;
        }
        case FresnelSpec::Kind::Conductor: {
            const Spectrum& eta = spec.eta();
            const Spectrum& k = spec.kappa();
            return {fresnel_conductor(c, eta.r, k.r), fresnel_conductor(c, eta.g, k.g),
                    fresnel_conductor(c, eta.b, k.b)};
        }
    }
    return Spectrum(1.0);
}

Spectrum fresnel_eval(const Direction& w_in, const Direction& m, const FresnelSpec& spec) {
    return fresnel_eval(dot(w_in, m), spec);
}

std::map<std::string, ConductorIor, std::less<>> parse_conductor_table(std::string_view text) {
    std::map<std::string, ConductorIor, std::less<>> table;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string name;
        if (!(fields >> name)) continue;
        double v[6];
        for (double& x : v)
            if (!(fields >> x)) throw std::runtime_error("conductor table line " + std::to_string(line_no) + ": expected 6 numbers");
        std::string extra;
        if (fields >> extra) throw std::runtime_error("conductor table line " + std::to_string(line_no) + ": trailing field");
        table[name] = ConductorIor{Spectrum(v[0], v[1], v[2]), Spectrum(v[3], v[4], v[5])};
    }
    return table;
}

std::map<std::string, ConductorIor, std::less<>> load_conductor_table(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open conductor table " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_conductor_table(ss.str());
}

const std::map<std::string, ConductorIor, std::less<>>& builtin_conductors() {
    static const auto table = parse_conductor_table(detail::kConductorTableText);
    return table;
}

}  // namespace mbsmith
