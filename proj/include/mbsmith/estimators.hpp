#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "mbsmith/fresnel.hpp"
#include "mbsmith/geometry.hpp"
#include "mbsmith/microfacet.hpp"
#include "mbsmith/rng.hpp"
#include "mbsmith/spectrum.hpp"

namespace mbsmith {

struct EstimatorConfig {
    std::uint64_t sample_count = 1u << 16;
    int max_bounces = 16;
    // Russian roulette applies from this bounce index on.
    int rr_start = 6;
    std::uint64_t seed = 0;
    // Worker threads; 0 uses the hardware concurrency. Results do not depend on it.
    unsigned threads = 1;

    // Throws std::invalid_argument on sample_count < 1, max_bounces < 1 or rr_start < 2.
    void validate() const;
};

struct EvalResult {
    // Estimate of rho(w_i, w_o), outgoing cosine included.
    Spectrum value;
    // Variance of `value` (sample variance divided by the sample count).
    Spectrum variance;
    // per_bounce[k - 1] is the contribution of k-bounce paths, k = 1..max_bounces.
    std::vector<Spectrum> per_bounce;
    double mean_bounces = 0.0;
    std::uint64_t samples = 0;

    Spectrum standard_error() const { return sqrt(variance); }
};

struct SampleResult {
    Direction w_o;
    Spectrum weight;
    int bounces = 0;
    // The walk hit max_bounces; weight is zero.
    bool truncated = false;
};

enum class Method { Path, Bdpt, Independent };

// "ours-pt", "ours-bdpt", "independent".
std::string_view to_string(Method m);
std::optional<Method> parse_method(std::string_view name);

using DirectionSampler = std::function<Direction(RngStream&)>;

// All estimators take w_i and w_o pointing away from the surface (z > 0) and
// throw DomainError otherwise.

// Unidirectional walk from -w_i with a deterministic connection to w_o at every vertex.
EvalResult eval(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p, const FresnelSpec& fr,
                const EstimatorConfig& cfg);

// Walks from both ends, every light/eye vertex pair joined by one connection,
// combined with balance-heuristic weights.
EvalResult eval_bdpt(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p, const FresnelSpec& fr,
                     const EstimatorConfig& cfg);

// Same walk as eval with S_k replaced by a product of per-bounce height-correlated
// terms. Biased for k >= 2.
EvalResult eval_independent_bounce(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p,
                                   const FresnelSpec& fr, const EstimatorConfig& cfg);

EvalResult eval_method(Method method, const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p,
                       const FresnelSpec& fr, const EstimatorConfig& cfg);

// Mean of rho(w_i, w_o) with w_o drawn per sample from w_o_sampler (first
// draws of the sample's stream). The k = 1 term is evaluated at each draw.
EvalResult eval_region(Method method, const Direction& w_i, const DirectionSampler& w_o_sampler,
                       const MicrosurfaceParams& p, const FresnelSpec& fr, const EstimatorConfig& cfg);

// Random walk from -w_i. After every upward direction d the walk exits with
// probability G1(d). weight = f / walk pdf.
SampleResult sample(const Direction& w_i, const MicrosurfaceParams& p, const FresnelSpec& fr,
                    const EstimatorConfig& cfg, RngStream& rng);

// Proxy density over w_o: half single-bounce VNDF reflection (folded back into the
// upper hemisphere), half cosine. Floored at 1e-6; zero below the horizon.
double pdf(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p);

// Draws from pdf(w_i, ., p). u[0] selects the lobe.
Direction sample_pdf(const Direction& w_i, const MicrosurfaceParams& p, std::array<double, 3> u);

// Mean sample() weight over cfg.sample_count walks, using the same parallel driver.
EvalResult directional_albedo(const Direction& w_i, const MicrosurfaceParams& p, const FresnelSpec& fr,
                              const EstimatorConfig& cfg);

}  // namespace mbsmith
