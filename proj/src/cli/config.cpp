#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mbsmith::cli {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        const auto part = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (!part.empty()) parts.emplace_back(part);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    throw UsageError("--" + std::string(key) + ": invalid value '" + std::string(value) + "' (expected " +
                     std::string(expected) + ")");
}

double to_double(std::string_view key, std::string_view text) {
    const auto s = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) bad_value(key, text, "a number");
    return v;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view text, Int lo, Int hi) {
    const auto s = trim(text);
    Int v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < lo || v > hi)
        bad_value(key, text, "an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
}

bool to_bool(std::string_view key, std::string_view text) {
    std::string s(trim(text));
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    bad_value(key, text, "true or false");
}

double positive(std::string_view key, std::string_view text) {
    const double v = to_double(key, text);
    if (!(v > 0.0)) bad_value(key, text, "a positive number");
    return v;
}

FresnelSpec parse_fresnel(std::string_view text) {
    const auto s = trim(text);
    if (s == "none") return FresnelSpec::none();
    const auto colon = s.find(':');
    const auto kind = s.substr(0, colon);
    const auto arg = colon == std::string_view::npos ? std::string_view{} : s.substr(colon + 1);
    if (kind == "schlick" && !arg.empty()) {
        const auto parts = split(arg, ',');
        if (parts.size() != 1 && parts.size() != 3) bad_value("fresnel", text, "schlick:F0 or schlick:R,G,B");
        Spectrum f0;
        for (int c = 0; c < 3; ++c) {
            const double v = to_double("fresnel", parts[parts.size() == 1 ? 0 : static_cast<std::size_t>(c)]);
            if (v < 0.0 || v > 1.0) bad_value("fresnel", text, "F0 in [0, 1]");
            f0[c] = v;
        }
        return FresnelSpec::schlick(f0);
    }
    if (kind == "conductor" && !arg.empty()) {
        const auto& table = builtin_conductors();
        const auto it = table.find(arg);
        if (it == table.end()) {
            std::string names;
            for (const auto& [name, ior] : table) names += (names.empty() ? "" : ", ") + name;
            bad_value("fresnel", text, "a conductor among " + names);
        }
        return FresnelSpec::conductor(it->second.eta, it->second.kappa);
    }
    bad_value("fresnel", text, "none, schlick:F0 or conductor:NAME");
}

}  // namespace

const std::set<std::string, std::less<>>& known_keys() {
    static const std::set<std::string, std::less<>> keys = {
        "ndf",     "alpha",  "alpha-x", "alpha-y",    "fresnel",    "samples",     "max-bounces", "rr-start",
        "seed",    "out",    "threads", "method",     "timing",     "oracle",      "theta-i",     "theta-o",
        "phi-o",   "bins",   "phi-bins", "resolution", "repetitions", "grid-theta", "grid-phi"};
    return keys;
}

std::string normalize_key(std::string_view key) {
    std::string k(trim(key));
    for (char& c : k) c = c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return k;
}

KeyValues parse_config_text(std::string_view text) {
    KeyValues values;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        const std::string where = "config line " + std::to_string(line_no);
        if (eq == std::string_view::npos) throw UsageError(where + ": expected 'key = value'");
        const std::string key = normalize_key(body.substr(0, eq));
        if (!known_keys().contains(key)) throw UsageError(where + ": unknown key '" + key + "'");
        if (values.contains(key)) throw UsageError(where + ": key '" + key + "' repeated");
        values[key] = std::string(trim(body.substr(eq + 1)));
    }
    return values;
}

KeyValues load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

MicrosurfaceParams RunConfig::params(double default_alpha) const {
    const double base = alpha.value_or(default_alpha);
    return MicrosurfaceParams(ndf, alpha_x.value_or(base), alpha_y.value_or(base));
}

EstimatorConfig RunConfig::estimator(std::uint64_t default_samples) const {
    EstimatorConfig c;
    c.sample_count = samples.value_or(default_samples);
    c.max_bounces = max_bounces;
    c.rr_start = rr_start;
    c.seed = seed;
    c.threads = threads;
    return c;
}

Direction direction_from_degrees(double theta_deg, double phi_deg, std::string_view flag) {
    if (!(theta_deg >= 0.0 && theta_deg < 90.0))
        throw DomainError("--" + std::string(flag) + " = " + std::to_string(theta_deg) +
                          " degrees is not above the horizon (expected 0 <= theta < 90)");
    return Direction::from_spherical(theta_deg * kPi / 180.0, phi_deg * kPi / 180.0);
}

RunConfig resolve_config(const KeyValues& values) {
    RunConfig c;
    for (const auto& [key, value] : values) {
        if (key == "ndf") {
            if (value == "ggx") c.ndf = NdfKind::GGX;
            else if (value == "beckmann") c.ndf = NdfKind::Beckmann;
            else bad_value(key, value, "ggx or beckmann");
        } else if (key == "alpha") {
            c.alpha = positive(key, value);
        } else if (key == "alpha-x") {
            c.alpha_x = positive(key, value);
        } else if (key == "alpha-y") {
            c.alpha_y = positive(key, value);
        } else if (key == "fresnel") {
            c.fresnel = parse_fresnel(value);
            c.fresnel_text = std::string(trim(value));
        } else if (key == "samples") {
            c.samples = to_int<std::uint64_t>(key, value, 1, std::uint64_t{1} << 40);
        } else if (key == "max-bounces") {
            c.max_bounces = to_int(key, value, 1, 4096);
        } else if (key == "rr-start") {
            c.rr_start = to_int(key, value, 2, 1 << 20);
        } else if (key == "seed") {
            c.seed = to_int<std::uint64_t>(key, value, 0, ~std::uint64_t{0});
        } else if (key == "out") {
            c.out = value;
        } else if (key == "threads") {
            c.threads = to_int(key, value, 0u, 4096u);
        } else if (key == "method") {
            for (const auto& name : split(value, ',')) {
                const auto m = parse_method(name);
                if (!m) bad_value(key, name, "ours-pt, ours-bdpt or independent");
                if (std::find(c.methods.begin(), c.methods.end(), *m) == c.methods.end()) c.methods.push_back(*m);
            }
        } else if (key == "timing") {
            c.timing = to_bool(key, value);
        } else if (key == "oracle") {
            c.oracle = to_bool(key, value);
        } else if (key == "theta-i") {
            c.theta_i = to_double(key, value);
        } else if (key == "theta-o") {
            c.theta_o = to_double(key, value);
        } else if (key == "phi-o") {
            c.phi_o = to_double(key, value);
        } else if (key == "bins") {
            c.bins = to_int(key, value, 1, 100000);
        } else if (key == "phi-bins") {
            c.phi_bins = to_int(key, value, 1, 100000);
        } else if (key == "resolution") {
            c.resolution = to_int(key, value, 16, 2048);
        } else if (key == "repetitions") {
            c.repetitions = to_int(key, value, 2, 1 << 20);
        } else if (key == "grid-theta") {
            c.grid_theta = to_int(key, value, 8, 512);
        } else if (key == "grid-phi") {
            c.grid_phi = to_int(key, value, 8, 4096);
            if (c.grid_phi % 2 != 0) bad_value(key, value, "an even integer");
        } else {
            throw UsageError("unknown option --" + key);
        }
    }
    if (c.rr_start < 2) bad_value("rr-start", std::to_string(c.rr_start), "an integer >= 2");
    if (c.theta_i) direction_from_degrees(*c.theta_i, 0.0, "theta-i");
    direction_from_degrees(c.theta_o, c.phi_o, "theta-o");
    return c;
}

}  // namespace mbsmith::cli
