#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbsmith/estimators.hpp"
#include "mbsmith/fresnel.hpp"
#include "mbsmith/geometry.hpp"
#include "mbsmith/microfacet.hpp"

namespace mbsmith {

// Gauss-Legendre nodes in cos(theta) on (0, 1) times uniform nodes in phi.
class DirectionGrid {
  public:
    // n_theta >= 1, n_phi >= 2 and even.
    DirectionGrid(int n_theta, int n_phi);

    int n_theta() const { return n_theta_; }
    int n_phi() const { return n_phi_; }
    // Ascending cos(theta) nodes and weights (the weights sum to 1).
    double mu(int i) const { return mu_[static_cast<std::size_t>(i)]; }
    double mu_weight(int i) const { return mu_w_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& mus() const { return mu_; }
    const std::vector<double>& mu_weights() const { return mu_w_; }
    double phi(int k) const { return kTwoPi * k / n_phi_; }
    double phi_weight() const { return kTwoPi / n_phi_; }
    // Solid-angle weight of node (i, k); all weights sum to 2 pi.
    double weight(int i, int /*k*/) const { return mu_weight(i) * phi_weight(); }
    Direction node(int i, int k) const;

    template <typename F>
    double integrate(F&& f) const {
        double s = 0.0;
        for (int i = 0; i < n_theta_; ++i)
            for (int k = 0; k < n_phi_; ++k) s += weight(i, k) * f(node(i, k));
        return s;
    }

  private:
    int n_theta_;
    int n_phi_;
    std::vector<double> mu_;
    std::vector<double> mu_w_;
};

// rho(theta_i, theta_o, delta_phi) of an isotropic surface on grid nodes.
struct RhoTable {
    DirectionGrid grid;
    // values[i][o * n_phi + k]: theta_i = acos(mu_i), theta_o = acos(mu_o), delta_phi = phi_k.
    std::vector<std::vector<double>> values;
    // azimuthal_mean[i][o]: exact mean of rho over delta_phi (the nodes alone
    // undersample the single-scatter lobe near grazing).
    std::vector<std::vector<double>> azimuthal_mean;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> residual_history;
    // albedo_history[n][i]: directional albedo of iterate n at theta_i node i.
    std::vector<std::vector<double>> albedo_history;

    double at(int i, int o, int k) const {
        return values[static_cast<std::size_t>(i)][static_cast<std::size_t>(o * grid.n_phi() + k)];
    }
    // Quadrature of rho(w_i, .) over the upper hemisphere (Gauss-Legendre in
    // cos(theta_o) over the azimuthal means).
    double albedo(int i) const;
};

class NonConvergenceError : public std::runtime_error {
  public:
    NonConvergenceError(double residual, int iterations);
    double residual() const { return residual_; }
    int iterations() const { return iterations_; }

  private:
    double residual_;
    int iterations_;
};

// rho_1 = v * S1 at every node.
RhoTable single_scatter_table(const MicrosurfaceParams& p, const FresnelSpec& fr, const DirectionGrid& grid);

// Picard iteration of the invariance-principle equation
//   rho(w_i, w_o) (1 + Lambda(w_i) + Lambda(w_o)) = v(w_i, w_o)
//       + int v(-w_i, -w) rho(w, w_o) dw + int rho(w_i, w) v(w, w_o) dw
// starting from rho_1. Requires isotropic roughness and scalar Fresnel
// (std::invalid_argument otherwise). Throws NonConvergenceError when the
// max-norm update is still >= tol after max_iter iterations.
RhoTable solve_rho_fixedpoint(const MicrosurfaceParams& p, const FresnelSpec& fr, const DirectionGrid& grid,
                              double tol = 1e-6, int max_iter = 200);

// Converged solution with Nystrom interpolation to arbitrary angles. Not
// thread-safe: queries fill internal caches.
class RhoOracle {
  public:
    RhoOracle(const MicrosurfaceParams& p, const FresnelSpec& fr, const DirectionGrid& grid, double tol = 1e-6,
              int max_iter = 200);
    ~RhoOracle();
    RhoOracle(RhoOracle&&) noexcept;
    RhoOracle& operator=(RhoOracle&&) noexcept;

    const RhoTable& table() const;

    // Angles in radians.
    double rho(double theta_i, double theta_o, double delta_phi);
    // Solid-angle average of rho over theta_o in [theta_lo, theta_hi], all azimuths.
    double band_average(double theta_i, double theta_lo, double theta_hi);
    // Average over signed theta_o in [lo, hi] (uniform in theta) along the plane of
    // incidence; positive theta_o lies on the specular side (delta_phi = pi).
    double in_plane_average(double theta_i, double lo, double hi);
    // Integral of rho(w_i, .) over the upper hemisphere.
    double albedo(double theta_i);

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Mean sample() weight with fr = None.
double furnace_test(const Direction& w_i, const MicrosurfaceParams& p, const EstimatorConfig& cfg);

struct ReciprocityResult {
    double forward;   // rho(w_i, w_o) / cos(theta_o)
    double backward;  // rho(w_o, w_i) / cos(theta_i)
    double z_score;   // |forward - backward| / combined standard error
};

ReciprocityResult reciprocity_audit(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p,
                                    const FresnelSpec& fr, const EstimatorConfig& cfg, Method method = Method::Path);

struct CurveBin {
    double theta_lo = 0.0;
    double theta_hi = 0.0;
    double mean = 0.0;      // solid-angle mean of rho over the band
    double variance = 0.0;  // variance of `mean`
    double seconds = 0.0;   // single-threaded wall time of the bin
    std::uint64_t samples = 0;
    double theta_mid() const { return 0.5 * (theta_lo + theta_hi); }
    double solid_angle() const { return kTwoPi * (std::cos(theta_lo) - std::cos(theta_hi)); }
};

struct CurveReport {
    Method method = Method::Path;
    double theta_i = 0.0;
    unsigned threads = 1;
    std::vector<CurveBin> bins;
};

// n_bins uniform theta_o bands over [0, pi/2); cfg.sample_count samples per bin.
// Bin b uses seed splitmix64(cfg.seed + b); bins are spread over cfg.threads
// workers, each bin evaluated single-threaded.
CurveReport reflectance_curve(double theta_i, const MicrosurfaceParams& p, const FresnelSpec& fr,
                              const EstimatorConfig& cfg, int n_bins, Method method = Method::Path);

// The same bands from the oracle (variance and time zero).
CurveReport reflectance_curve_oracle(double theta_i, RhoOracle& oracle, int n_bins);

struct EfficiencyRow {
    double theta_mid;
    double inv_eff_a;  // variance * seconds
    double inv_eff_b;
    double ratio;      // inv_eff_a / inv_eff_b
};

// Throws std::invalid_argument when the binning differs.
std::vector<EfficiencyRow> inverse_efficiency(const CurveReport& a, const CurveReport& b);

struct MseQuery {
    double theta_i;
    double theta_o;
    double phi_o;  // relative to the incident azimuth
};

struct MseOptions {
    std::vector<std::uint64_t> ladder;
    int repetitions = 16;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    int max_bounces = 16;
    int rr_start = 6;
    // Ladder entries below this are reported but excluded from the slope fit.
    std::uint64_t fit_min = 64;
};

struct MsePoint {
    std::uint64_t n;
    double mse;  // mean squared relative error against the oracle
};

struct MseSeries {
    Method method;
    std::vector<MsePoint> points;
    double slope = 0.0;  // least-squares slope of log(mse) against log(n)
    double intercept = 0.0;
};

// Default ladder {1, 2^6, 2^7, ..., 2^16}.
std::vector<std::uint64_t> default_mse_ladder();

std::vector<MseSeries> mse_convergence(const std::vector<MseQuery>& queries, const MicrosurfaceParams& p,
                                       const FresnelSpec& fr, RhoOracle& oracle, const std::vector<Method>& methods,
                                       const MseOptions& options);

// Least-squares slope and intercept of log(mse) on log(n) over points with n >= n_min.
std::pair<double, double> fit_log_log(const std::vector<MsePoint>& points, std::uint64_t n_min);

}  // namespace mbsmith
