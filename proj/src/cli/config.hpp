#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mbsmith/estimators.hpp"
#include "mbsmith/fresnel.hpp"
#include "mbsmith/microfacet.hpp"

namespace mbsmith::cli {

// Exit code 2.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Exit code 4.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Normalized key (lower case, '-' separators) to raw value text.
using KeyValues = std::map<std::string, std::string, std::less<>>;

// Every key accepted on the command line (as --key) and in config files.
const std::set<std::string, std::less<>>& known_keys();

std::string normalize_key(std::string_view key);

// Line-oriented `key = value` text with `#` comments. Throws UsageError naming
// the line for unknown keys, missing '=' or repeated keys.
KeyValues parse_config_text(std::string_view text);
// Throws IoError when the file cannot be read.
KeyValues load_config_file(const std::string& path);

struct RunConfig {
    NdfKind ndf = NdfKind::GGX;
    std::optional<double> alpha;
    std::optional<double> alpha_x;
    std::optional<double> alpha_y;
    FresnelSpec fresnel;
    std::string fresnel_text = "none";
    std::optional<std::uint64_t> samples;
    int max_bounces = 16;
    int rr_start = 6;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::string out;
    std::vector<Method> methods;
    bool timing = false;
    bool oracle = false;
    // Angles in degrees.
    std::optional<double> theta_i;
    double theta_o = 45.0;
    double phi_o = 180.0;
    std::optional<int> bins;
    std::optional<int> phi_bins;
    int resolution = 256;
    int repetitions = 16;
    int grid_theta = 32;
    int grid_phi = 64;

    // Roughness for a given default alpha; alpha-x/alpha-y override alpha.
    MicrosurfaceParams params(double default_alpha = 0.5) const;
    EstimatorConfig estimator(std::uint64_t default_samples) const;
};

// Converts and validates merged values. Malformed values throw UsageError naming
// the flag; out-of-range angles throw DomainError.
RunConfig resolve_config(const KeyValues& values);

// Degrees to a direction above the horizon; throws DomainError naming `flag`
// unless 0 <= theta < 90.
Direction direction_from_degrees(double theta_deg, double phi_deg, std::string_view flag);

}  // namespace mbsmith::cli
