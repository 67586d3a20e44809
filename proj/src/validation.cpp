#include "mbsmith/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <utility>

#include <boost/math/special_functions/legendre.hpp>

#include "mbsmith/parallel.hpp"
#include "mbsmith/pathsm.hpp"

namespace mbsmith {

namespace {

// Gauss-Legendre rule on (-1, 1), ascending.
std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    const std::vector<double> pos = boost::math::legendre_p_zeros<double>(n);
    std::vector<double> x;
    for (auto it = pos.rbegin(); it != pos.rend(); ++it)
        if (*it > 0.0) x.push_back(-*it);
    for (double z : pos) x.push_back(z);
    std::vector<double> w(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = boost::math::legendre_p_prime(n, x[i]);
        w[i] = 2.0 / ((1.0 - x[i] * x[i]) * d * d);
    }
    return {x, w};
}

const std::pair<std::vector<double>, std::vector<double>>& panel_rule() {
    static const auto rule = gauss_legendre(10);
    return rule;
}

// Applies the panel rule to consecutive breakpoints.
template <typename F>
void integrate_panels(const std::vector<double>& breaks, F&& f) {
    const auto& [x, w] = panel_rule();
    for (std::size_t b = 0; b + 1 < breaks.size(); ++b) {
        const double lo = breaks[b], hi = breaks[b + 1];
        const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
        if (!(half > 0.0)) continue;
        for (std::size_t q = 0; q < x.size(); ++q) f(mid + half * x[q], half * w[q]);
    }
}

std::vector<double> sorted_breaks(std::vector<double> b) {
    std::sort(b.begin(), b.end());
    std::vector<double> out;
    for (double v : b)
        if (out.empty() || v - out.back() > 1e-15) out.push_back(v);
    return out;
}

Direction at(double mu, double phi) {
    const double s = std::sqrt(std::max(0.0, 1.0 - mu * mu));
    return Direction::unit(s * std::cos(phi), s * std::sin(phi), mu);
}

}  // namespace

DirectionGrid::DirectionGrid(int n_theta, int n_phi) : n_theta_(n_theta), n_phi_(n_phi) {
    if (n_theta < 1) throw std::invalid_argument("n_theta must be positive");
    if (n_phi < 2 || n_phi % 2 != 0) throw std::invalid_argument("n_phi must be even and at least 2");
    const auto [x, w] = gauss_legendre(n_theta);
    for (std::size_t i = 0; i < x.size(); ++i) {
        mu_.push_back(0.5 * (x[i] + 1.0));
        mu_w_.push_back(0.5 * w[i]);
    }
}

Direction DirectionGrid::node(int i, int k) const { return at(mu(i), phi(k)); }

double RhoTable::albedo(int i) const {
    double s = 0.0;
    if (!azimuthal_mean.empty()) {
        for (int o = 0; o < grid.n_theta(); ++o)
            s += grid.mu_weight(o) * azimuthal_mean[static_cast<std::size_t>(i)][static_cast<std::size_t>(o)];
        return kTwoPi * s;
    }
    for (int o = 0; o < grid.n_theta(); ++o)
        for (int k = 0; k < grid.n_phi(); ++k) s += grid.weight(o, k) * at(i, o, k);
    return s;
}

NonConvergenceError::NonConvergenceError(double residual, int iterations)
    : std::runtime_error("fixed-point iteration did not converge: residual " + std::to_string(residual) + " after " +
                         std::to_string(iterations) + " iterations"),
      residual_(residual),
      iterations_(iterations) {}

namespace {

// Discretized integral operators of the fixed-point equation.
//
// Both integral terms share the kernel K(w_t, w) = F D(h) / 4 with
// h = normalize(w_t - w), nonzero for mu(w) < mu(w_t):
//   int v(-w_i, -w) R(w, w_o) dw = (1 / mu_i) int K(w_i, w) R(w, w_o) dw
//   int R(w_i, w) v(w, w_o) dw   =            int (R(w_i, w) / mu_w) K(w_o, w) dw
// The unknown is represented by Lagrange interpolation in mu over the grid
// nodes and by its trigonometric interpolant in delta_phi, so each term
// becomes a per-mode matrix product with product-integration weights
//   W_k(mu_t)[j] = int_0^mu_t dmu l_j(mu) int_0^2pi dpsi K cos(k psi).
class Discretization {
  public:
    Discretization(const MicrosurfaceParams& p, const FresnelSpec& fr, const DirectionGrid& grid)
        : p_(p), fr_(fr), grid_(grid), n_(grid.n_theta()), P_(grid.n_phi()), M_(P_ / 2 + 1), alpha_(p.alpha_x()) {
        if (!p.is_isotropic()) throw std::invalid_argument("the fixed-point oracle needs isotropic roughness");
        if (!fr.is_scalar()) throw std::invalid_argument("the fixed-point oracle needs a scalar Fresnel model");
        const auto& mu = grid.mus();
        bary_.resize(static_cast<std::size_t>(n_));
        for (int j = 0; j < n_; ++j) {
            double prod = 1.0;
            for (int m = 0; m < n_; ++m)
                if (m != j) prod *= mu[static_cast<std::size_t>(j)] - mu[static_cast<std::size_t>(m)];
            bary_[static_cast<std::size_t>(j)] = 1.0 / prod;
        }
        cos_table_.resize(static_cast<std::size_t>(M_ * P_));
        for (int k = 0; k < M_; ++k)
            for (int m = 0; m < P_; ++m) cos_table_[static_cast<std::size_t>(k * P_ + m)] = std::cos(kTwoPi * k * m / P_);
        grid_weights_.resize(static_cast<std::size_t>(n_));
        for (int t = 0; t < n_; ++t) grid_weights_[static_cast<std::size_t>(t)] = kernel_weights(mu[static_cast<std::size_t>(t)]);
    }

    int n() const { return n_; }
    int P() const { return P_; }
    int M() const { return M_; }
    double mu(int j) const { return grid_.mu(j); }
    double cos_km(int k, int m) const { return cos_table_[static_cast<std::size_t>(k * P_ + m)]; }
    const std::vector<double>& grid_weights(int t) const { return grid_weights_[static_cast<std::size_t>(t)]; }

    double vertex(double mu_i, double mu_o, double dphi) const {
        return vertex_term(-at(mu_i, 0.0), at(mu_o, dphi), p_, fr_).r;
    }
    double segment(double mu_i, double mu_o) const { return s1(-at(mu_i, 0.0), at(mu_o, 0.0), p_); }

    // Lagrange basis values l_j(x) over the grid nodes.
    void lagrange(double x, double* out) const {
        const auto& mu = grid_.mus();
        for (int j = 0; j < n_; ++j)
            if (x == mu[static_cast<std::size_t>(j)]) {
                std::fill(out, out + n_, 0.0);
                out[j] = 1.0;
                return;
            }
        double denom = 0.0;
        for (int j = 0; j < n_; ++j) {
            out[j] = bary_[static_cast<std::size_t>(j)] / (x - mu[static_cast<std::size_t>(j)]);
            denom += out[j];
        }
        for (int j = 0; j < n_; ++j) out[j] /= denom;
    }

    // W[k * n + j] as described above.
    std::vector<double> kernel_weights(double mu_t) const {
        std::vector<double> W(static_cast<std::size_t>(M_ * n_), 0.0);
        const double s_t = std::sqrt(std::max(0.0, 1.0 - mu_t * mu_t));
        const Vec3 w_t(s_t, 0.0, mu_t);

        std::vector<double> mu_breaks{0.0, mu_t};
        for (int j = 1; j < 64 && j / 64.0 < mu_t; ++j) mu_breaks.push_back(j / 64.0);
        for (int j = 1; j <= 26; ++j) mu_breaks.push_back(mu_t - mu_t * std::ldexp(1.0, -j));
        mu_breaks = sorted_breaks(std::move(mu_breaks));

        std::vector<double> khat(static_cast<std::size_t>(M_));
        std::vector<double> basis(static_cast<std::size_t>(n_));
        std::vector<double> psi_breaks;
        integrate_panels(mu_breaks, [&](double mu, double w_mu) {
            const double s = std::sqrt(std::max(0.0, 1.0 - mu * mu));
            const double eps = mu_t - mu;
            // Near the diagonal the kernel varies on an azimuthal scale ~ eps.
            psi_breaks.clear();
            for (int j = 0; j <= 32; ++j) psi_breaks.push_back(kPi * j / 32.0);
            for (double b = kPi / 64.0; b > 1e-3 * eps && b > 1e-12; b *= 0.5) psi_breaks.push_back(b);
            psi_breaks = sorted_breaks(std::move(psi_breaks));
            std::fill(khat.begin(), khat.end(), 0.0);
            integrate_panels(psi_breaks, [&](double psi, double w_psi) {
                const double c = std::cos(psi);
                const Vec3 diff = w_t - Vec3(s * c, s * std::sin(psi), mu);
                const auto h = Direction::from_vector(diff);
                if (!h || h->z() <= 0.0) return;
                const double d = ndf(*h, p_);
                if (d == 0.0) return;
                const double f = fresnel_eval(dot(w_t, h->vec()), fr_).r;
                // Factor 2: the kernel is even in psi.
                const double val = 2.0 * w_psi * f * d * 0.25;
                double c_prev = 1.0, c_cur = c;
                khat[0] += val;
                for (int k = 1; k < M_; ++k) {
                    khat[static_cast<std::size_t>(k)] += val * c_cur;
                    const double c_next = 2.0 * c * c_cur - c_prev;
                    c_prev = c_cur;
                    c_cur = c_next;
                }
            });
            lagrange(mu, basis.data());
            for (int k = 0; k < M_; ++k) {
                const double a = w_mu * khat[static_cast<std::size_t>(k)];
                double* row = W.data() + static_cast<std::size_t>(k * n_);
                for (int j = 0; j < n_; ++j) row[j] += a * basis[static_cast<std::size_t>(j)];
            }
        });
        return W;
    }

    // Trigonometric interpolation coefficients of P samples (stride 1) into
    // out[k * stride], k = 0..M-1.
    void to_modes(const double* x, double* out, std::size_t stride) const {
        for (int k = 0; k < M_; ++k) {
            double s = 0.0;
            const double* c = cos_table_.data() + static_cast<std::size_t>(k * P_);
            for (int m = 0; m < P_; ++m) s += x[m] * c[m];
            const double norm = (k == 0 || 2 * k == P_) ? 1.0 / P_ : 2.0 / P_;
            out[static_cast<std::size_t>(k) * stride] = s * norm;
        }
    }

    // Cosine-series coefficients (k = 0..M-1) of v(mu_i, mu_o, .) * seg from dense
    // sampling; the single-scatter lobe narrows like alpha (mu_i + mu_o) near
    // grazing, far below the grid's azimuthal resolution.
    void vertex_modes(double mu_i, double mu_o, double seg, double* out, std::size_t stride) const {
        const double width = std::min(1.0, std::max(alpha_, 1e-3)) * (mu_i + mu_o);
        const double want = 40.0 * kTwoPi / std::max(width, 1e-12);
        int count = 256;
        while (count < want && count < 65536) count *= 2;
        for (int k = 0; k < M_; ++k) out[static_cast<std::size_t>(k) * stride] = 0.0;
        for (int m = 0; m < count; ++m) {
            const double phi = kTwoPi * m / count;
            const double val = vertex(mu_i, mu_o, phi) * seg / count;
            if (val == 0.0) continue;
            const double c = std::cos(phi);
            double c_prev = 1.0, c_cur = c;
            out[0] += val;
            for (int k = 1; k < M_; ++k) {
                out[static_cast<std::size_t>(k) * stride] += 2.0 * val * c_cur;
                const double c_next = 2.0 * c * c_cur - c_prev;
                c_prev = c_cur;
                c_cur = c_next;
            }
        }
    }

    double eval_modes(const double* modes, std::size_t stride, double dphi) const {
        double s = 0.0;
        for (int k = 0; k < M_; ++k) s += modes[static_cast<std::size_t>(k) * stride] * std::cos(k * dphi);
        return s;
    }

  private:
    MicrosurfaceParams p_;
    FresnelSpec fr_;
    DirectionGrid grid_;
    int n_, P_, M_;
    double alpha_;
    std::vector<double> bary_;
    std::vector<double> cos_table_;
    std::vector<std::vector<double>> grid_weights_;
};

// Full-table state R[(i * n + o) * P + m]. The single-scatter part VS = V * S1
// enters the mode expansion through its dense coefficients; only the smooth
// remainder R - VS is interpolated from the P samples.
struct Solver {
    const Discretization& d;
    std::vector<double> V, S, VS, VSm;
    std::vector<double> last_mean;  // azimuthal mean of the latest iterate, [i * n + o]

    explicit Solver(const Discretization& disc) : d(disc) {
        const int n = d.n(), P = d.P(), M = d.M();
        V.resize(static_cast<std::size_t>(n * n * P));
        VS.resize(V.size());
        S.resize(static_cast<std::size_t>(n * n));
        VSm.resize(static_cast<std::size_t>(M * n * n));
        for (int i = 0; i < n; ++i)
            for (int o = 0; o < n; ++o) {
                const int io = i * n + o;
                const double seg = d.segment(d.mu(i), d.mu(o));
                S[static_cast<std::size_t>(io)] = seg;
                for (int m = 0; m < P; ++m) {
                    const auto idx = static_cast<std::size_t>(io * P + m);
                    V[idx] = d.vertex(d.mu(i), d.mu(o), kTwoPi * m / P);
                    VS[idx] = V[idx] * seg;
                }
                d.vertex_modes(d.mu(i), d.mu(o), seg, VSm.data() + io, static_cast<std::size_t>(n * n));
            }
        last_mean.assign(VSm.begin(), VSm.begin() + n * n);
    }

    std::vector<double> initial() const { return VS; }

    // modes[k * n * n + i * n + o]
    std::vector<double> modes(const std::vector<double>& R) const {
        const int n = d.n(), P = d.P();
        std::vector<double> r(VSm.size());
        std::vector<double> rest(static_cast<std::size_t>(P));
        for (int io = 0; io < n * n; ++io) {
            for (int m = 0; m < P; ++m) {
                const auto idx = static_cast<std::size_t>(io * P + m);
                rest[static_cast<std::size_t>(m)] = R[idx] - VS[idx];
            }
            d.to_modes(rest.data(), r.data() + io, static_cast<std::size_t>(n * n));
        }
        for (std::size_t q = 0; q < r.size(); ++q) r[q] += VSm[q];
        return r;
    }

    // One Picard step; returns the max-norm change.
    double step(std::vector<double>& R) {
        const int n = d.n(), P = d.P(), M = d.M();
        const std::vector<double> r = modes(R);
        std::vector<double> I(static_cast<std::size_t>(M * n * n), 0.0);
        for (int k = 0; k < M; ++k) {
            const double* rk = r.data() + static_cast<std::size_t>(k * n * n);
            double* Ik = I.data() + static_cast<std::size_t>(k * n * n);
            for (int i = 0; i < n; ++i) {
                const double* Wi = d.grid_weights(i).data() + static_cast<std::size_t>(k * n);
                const double inv_mu_i = 1.0 / d.mu(i);
                for (int j = 0; j < n; ++j) {
                    const double a = Wi[j] * inv_mu_i;
                    const double* rj = rk + j * n;
                    for (int o = 0; o < n; ++o) Ik[i * n + o] += a * rj[o];
                }
                for (int o = 0; o < n; ++o) {
                    const double* Wo = d.grid_weights(o).data() + static_cast<std::size_t>(k * n);
                    double s = 0.0;
                    for (int j = 0; j < n; ++j) s += rk[i * n + j] / d.mu(j) * Wo[j];
                    Ik[i * n + o] += s;
                }
            }
        }
        double change = 0.0;
        for (int io = 0; io < n * n; ++io) {
            last_mean[static_cast<std::size_t>(io)] = VSm[static_cast<std::size_t>(io)] + I[static_cast<std::size_t>(io)] * S[static_cast<std::size_t>(io)];
            for (int m = 0; m < P; ++m) {
                double s = 0.0;
                for (int k = 0; k < M; ++k) s += I[static_cast<std::size_t>(k * n * n + io)] * d.cos_km(k, m);
                const auto idx = static_cast<std::size_t>(io * P + m);
                const double next = (V[idx] + s) * S[static_cast<std::size_t>(io)];
                change = std::max(change, std::abs(next - R[idx]));
                R[idx] = next;
            }
        }
        return change;
    }
};

RhoTable make_table(const DirectionGrid& grid, const std::vector<double>& R, const std::vector<double>& mean) {
    RhoTable t{grid, {}, {}, 0, 0.0, {}, {}};
    const int n = grid.n_theta(), P = grid.n_phi();
    t.values.resize(static_cast<std::size_t>(n));
    t.azimuthal_mean.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        t.values[static_cast<std::size_t>(i)].assign(R.begin() + i * n * P, R.begin() + (i + 1) * n * P);
        t.azimuthal_mean[static_cast<std::size_t>(i)].assign(mean.begin() + i * n, mean.begin() + (i + 1) * n);
    }
    return t;
}

std::vector<double> albedos(const RhoTable& t) {
    std::vector<double> a;
    for (int i = 0; i < t.grid.n_theta(); ++i) a.push_back(t.albedo(i));
    return a;
}

RhoTable run_solver(const Discretization& disc, const DirectionGrid& grid, double tol, int max_iter) {
    Solver solver(disc);
    std::vector<double> R = solver.initial();
    std::vector<double> history;
    std::vector<std::vector<double>> albedo_history{albedos(make_table(grid, R, solver.last_mean))};
    double residual = std::numeric_limits<double>::infinity();
    int it = 0;
    while (it < max_iter) {
        residual = solver.step(R);
        ++it;
        history.push_back(residual);
        albedo_history.push_back(albedos(make_table(grid, R, solver.last_mean)));
        if (residual < tol) break;
    }
    if (!(residual < tol)) throw NonConvergenceError(residual, it);
    RhoTable t = make_table(grid, R, solver.last_mean);
    t.iterations = it;
    t.residual = residual;
    t.residual_history = std::move(history);
    t.albedo_history = std::move(albedo_history);
    return t;
}

}  // namespace

RhoTable single_scatter_table(const MicrosurfaceParams& p, const FresnelSpec& fr, const DirectionGrid& grid) {
    const Discretization disc(p, fr, grid);
    const int n = grid.n_theta(), P = grid.n_phi();
    std::vector<double> R(static_cast<std::size_t>(n * n * P));
    std::vector<double> mean(static_cast<std::size_t>(n * n));
    std::vector<double> modes(static_cast<std::size_t>(disc.M()));
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < n; ++o) {
            disc.vertex_modes(grid.mu(i), grid.mu(o), disc.segment(grid.mu(i), grid.mu(o)), modes.data(), 1);
            mean[static_cast<std::size_t>(i * n + o)] = modes[0];
        }
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < n; ++o)
            for (int m = 0; m < P; ++m) {
                const Direction d0 = -at(grid.mu(i), 0.0);
                const Direction w_o = at(grid.mu(o), grid.phi(m));
                R[static_cast<std::size_t>((i * n + o) * P + m)] = vertex_term(d0, w_o, p, fr).r * s1(d0, w_o, p);
            }
    RhoTable t = make_table(grid, R, mean);
    t.albedo_history.push_back(albedos(t));
    return t;
}

RhoTable solve_rho_fixedpoint(const MicrosurfaceParams& p, const FresnelSpec& fr, const DirectionGrid& grid, double tol,
                              int max_iter) {
    const Discretization disc(p, fr, grid);
    return run_solver(disc, grid, tol, max_iter);
}

struct RhoOracle::Impl {
    Discretization disc;
    RhoTable table;
    Solver solver;
    std::vector<double> modes;  // of the converged table
    double tol;
    std::map<double, std::vector<double>> weights;
    std::map<double, std::vector<double>> rows;  // row modes [k * n + o]
    std::map<double, std::vector<double>> cols;  // column modes [k * n + j]

    Impl(const MicrosurfaceParams& p, const FresnelSpec& fr, const DirectionGrid& grid, double tol_, int max_iter)
        : disc(p, fr, grid), table(run_solver(disc, grid, tol_, max_iter)), solver(disc), tol(tol_) {
        std::vector<double> R;
        for (const auto& row : table.values) R.insert(R.end(), row.begin(), row.end());
        modes = solver.modes(R);
    }

    const std::vector<double>& weights_at(double mu) {
        auto it = weights.find(mu);
        if (it == weights.end()) it = weights.emplace(mu, disc.kernel_weights(mu)).first;
        return it->second;
    }

    // Solves for R(mu_i, grid o, grid m) and returns its modes.
    const std::vector<double>& row_at(double mu_i) {
        if (auto it = rows.find(mu_i); it != rows.end()) return it->second;
        const int n = disc.n(), P = disc.P(), M = disc.M();
        const std::vector<double>& WA = weights_at(mu_i);
        std::vector<double> fixed(static_cast<std::size_t>(M * n), 0.0), v(static_cast<std::size_t>(n * P)),
            s(static_cast<std::size_t>(n));
        for (int k = 0; k < M; ++k)
            for (int j = 0; j < n; ++j) {
                const double a = WA[static_cast<std::size_t>(k * n + j)] / mu_i;
                for (int o = 0; o < n; ++o)
                    fixed[static_cast<std::size_t>(k * n + o)] += a * modes[static_cast<std::size_t>(k * n * n + j * n + o)];
            }
        std::vector<double> vm(static_cast<std::size_t>(M * n));
        for (int o = 0; o < n; ++o) {
            s[static_cast<std::size_t>(o)] = disc.segment(mu_i, disc.mu(o));
            for (int m = 0; m < P; ++m) v[static_cast<std::size_t>(o * P + m)] = disc.vertex(mu_i, disc.mu(o), kTwoPi * m / P);
            disc.vertex_modes(mu_i, disc.mu(o), s[static_cast<std::size_t>(o)], vm.data() + o, static_cast<std::size_t>(n));
        }
        std::vector<double> row(static_cast<std::size_t>(n * P)), rm(static_cast<std::size_t>(M * n));
        for (int o = 0; o < n; ++o)
            for (int m = 0; m < P; ++m) row[static_cast<std::size_t>(o * P + m)] = v[static_cast<std::size_t>(o * P + m)] * s[static_cast<std::size_t>(o)];
        iterate(row, rm, [&](int k, int o) {
            const double* Wo = disc.grid_weights(o).data() + static_cast<std::size_t>(k * n);
            double acc = fixed[static_cast<std::size_t>(k * n + o)];
            for (int j = 0; j < n; ++j) acc += rm[static_cast<std::size_t>(k * n + j)] / disc.mu(j) * Wo[j];
            return acc;
        }, v, s, vm);
        return rows.emplace(mu_i, std::move(rm)).first->second;
    }

    // Solves for R(grid j, mu_o, grid m) and returns its modes.
    const std::vector<double>& col_at(double mu_o) {
        if (auto it = cols.find(mu_o); it != cols.end()) return it->second;
        const int n = disc.n(), P = disc.P(), M = disc.M();
        const std::vector<double>& WB = weights_at(mu_o);
        std::vector<double> fixed(static_cast<std::size_t>(M * n), 0.0), v(static_cast<std::size_t>(n * P)),
            s(static_cast<std::size_t>(n));
        for (int k = 0; k < M; ++k)
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int l = 0; l < n; ++l)
                    acc += modes[static_cast<std::size_t>(k * n * n + j * n + l)] / disc.mu(l) * WB[static_cast<std::size_t>(k * n + l)];
                fixed[static_cast<std::size_t>(k * n + j)] = acc;
            }
        std::vector<double> vm(static_cast<std::size_t>(M * n));
        for (int j = 0; j < n; ++j) {
            s[static_cast<std::size_t>(j)] = disc.segment(disc.mu(j), mu_o);
            for (int m = 0; m < P; ++m) v[static_cast<std::size_t>(j * P + m)] = disc.vertex(disc.mu(j), mu_o, kTwoPi * m / P);
            disc.vertex_modes(disc.mu(j), mu_o, s[static_cast<std::size_t>(j)], vm.data() + j, static_cast<std::size_t>(n));
        }
        std::vector<double> col(static_cast<std::size_t>(n * P)), cm(static_cast<std::size_t>(M * n));
        for (int j = 0; j < n; ++j)
            for (int m = 0; m < P; ++m) col[static_cast<std::size_t>(j * P + m)] = v[static_cast<std::size_t>(j * P + m)] * s[static_cast<std::size_t>(j)];
        iterate(col, cm, [&](int k, int j) {
            const double* Wj = disc.grid_weights(j).data() + static_cast<std::size_t>(k * n);
            double acc = fixed[static_cast<std::size_t>(k * n + j)];
            for (int l = 0; l < n; ++l) acc += Wj[l] / disc.mu(j) * cm[static_cast<std::size_t>(k * n + l)];
            return acc;
        }, v, s, vm);
        return cols.emplace(mu_o, std::move(cm)).first->second;
    }

    // Fixed point of x = (v + sum_k integral_k(x) cos) * s over n vectors of P
    // samples; vm holds the dense modes of v * s. `xm` holds the modes of x on return.
    template <typename Integral>
    void iterate(std::vector<double>& x, std::vector<double>& xm, Integral&& integral, const std::vector<double>& v,
                 const std::vector<double>& s, const std::vector<double>& vm) {
        const int n = disc.n(), P = disc.P(), M = disc.M();
        std::vector<double> I(static_cast<std::size_t>(M * n));
        std::vector<double> rest(static_cast<std::size_t>(P));
        auto update_modes = [&] {
            for (int a = 0; a < n; ++a) {
                for (int m = 0; m < P; ++m) {
                    const auto idx = static_cast<std::size_t>(a * P + m);
                    rest[static_cast<std::size_t>(m)] = x[idx] - v[idx] * s[static_cast<std::size_t>(a)];
                }
                disc.to_modes(rest.data(), xm.data() + a, static_cast<std::size_t>(n));
            }
            for (std::size_t q = 0; q < xm.size(); ++q) xm[q] += vm[q];
        };
        for (int it = 0; it < 1000; ++it) {
            update_modes();
            for (int k = 0; k < M; ++k)
                for (int a = 0; a < n; ++a) I[static_cast<std::size_t>(k * n + a)] = integral(k, a);
            double change = 0.0;
            for (int a = 0; a < n; ++a)
                for (int m = 0; m < P; ++m) {
                    double acc = 0.0;
                    for (int k = 0; k < M; ++k) acc += I[static_cast<std::size_t>(k * n + a)] * disc.cos_km(k, m);
                    const auto idx = static_cast<std::size_t>(a * P + m);
                    const double next = (v[idx] + acc) * s[static_cast<std::size_t>(a)];
                    change = std::max(change, std::abs(next - x[idx]));
                    x[idx] = next;
                }
            if (change < 1e-3 * tol) break;
        }
        update_modes();
    }

    // Integral modes I_k(mu_i, mu_o), k = 0..M-1.
    std::vector<double> integral_modes(double mu_i, double mu_o) {
        const int n = disc.n(), M = disc.M();
        const std::vector<double>& WA = weights_at(mu_i);
        const std::vector<double>& WB = weights_at(mu_o);
        const std::vector<double>& rm = row_at(mu_i);
        const std::vector<double>& cm = col_at(mu_o);
        std::vector<double> I(static_cast<std::size_t>(M), 0.0);
        for (int k = 0; k < M; ++k) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) {
                const auto kj = static_cast<std::size_t>(k * n + j);
                acc += WA[kj] / mu_i * cm[kj] + rm[kj] / disc.mu(j) * WB[kj];
            }
            I[static_cast<std::size_t>(k)] = acc;
        }
        return I;
    }

    double rho(double mu_i, double mu_o, double dphi) {
        const std::vector<double> I = integral_modes(mu_i, mu_o);
        return (disc.vertex(mu_i, mu_o, dphi) + disc.eval_modes(I.data(), 1, dphi)) * disc.segment(mu_i, mu_o);
    }

    // Azimuthal mean of rho.
    double rho_mean(double mu_i, double mu_o) {
        std::vector<double> vm(static_cast<std::size_t>(disc.M()));
        const double seg = disc.segment(mu_i, mu_o);
        disc.vertex_modes(mu_i, mu_o, seg, vm.data(), 1);
        return vm[0] + integral_modes(mu_i, mu_o)[0] * seg;
    }
};

namespace {

double clamp_mu(double theta) { return std::clamp(std::cos(theta), 1e-6, 1.0); }

}  // namespace

RhoOracle::RhoOracle(const MicrosurfaceParams& p, const FresnelSpec& fr, const DirectionGrid& grid, double tol,
                     int max_iter)
    : impl_(std::make_unique<Impl>(p, fr, grid, tol, max_iter)) {}
RhoOracle::~RhoOracle() = default;
RhoOracle::RhoOracle(RhoOracle&&) noexcept = default;
RhoOracle& RhoOracle::operator=(RhoOracle&&) noexcept = default;

const RhoTable& RhoOracle::table() const { return impl_->table; }

double RhoOracle::rho(double theta_i, double theta_o, double delta_phi) {
    return impl_->rho(clamp_mu(theta_i), clamp_mu(theta_o), delta_phi);
}

double RhoOracle::band_average(double theta_i, double theta_lo, double theta_hi) {
    const double mu_i = clamp_mu(theta_i);
    const double a = std::cos(theta_hi), b = std::cos(theta_lo);
    static const auto rule = gauss_legendre(16);
    double s = 0.0;
    for (std::size_t q = 0; q < rule.first.size(); ++q) {
        const double mu = std::max(1e-6, a + (b - a) * 0.5 * (rule.first[q] + 1.0));
        s += 0.5 * rule.second[q] * impl_->rho_mean(mu_i, mu);
    }
    return s;
}

double RhoOracle::in_plane_average(double theta_i, double lo, double hi) {
    if (!(hi > lo)) throw std::invalid_argument("in_plane_average needs lo < hi");
    const double mu_i = clamp_mu(theta_i);
    static const auto rule = gauss_legendre(12);
    auto segment = [&](double a, double b) {
        double s = 0.0;
        for (std::size_t q = 0; q < rule.first.size(); ++q) {
            const double t = a + (b - a) * 0.5 * (rule.first[q] + 1.0);
            s += 0.5 * rule.second[q] * impl_->rho(mu_i, clamp_mu(std::abs(t)), t > 0.0 ? kPi : 0.0);
        }
        return s * (b - a);
    };
    double total = 0.0;
    if (lo < 0.0 && hi > 0.0)
        total = segment(lo, 0.0) + segment(0.0, hi);
    else
        total = segment(lo, hi);
    return total / (hi - lo);
}

double RhoOracle::albedo(double theta_i) {
    const double mu_i = clamp_mu(theta_i);
    static const auto rule = gauss_legendre(32);
    double s = 0.0;
    for (std::size_t q = 0; q < rule.first.size(); ++q)
        s += 0.5 * rule.second[q] * impl_->rho_mean(mu_i, 0.5 * (rule.first[q] + 1.0));
    return kTwoPi * s;
}

double furnace_test(const Direction& w_i, const MicrosurfaceParams& p, const EstimatorConfig& cfg) {
    return directional_albedo(w_i, p, FresnelSpec::none(), cfg).value.r;
}

ReciprocityResult reciprocity_audit(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p,
                                    const FresnelSpec& fr, const EstimatorConfig& cfg, Method method) {
    const EvalResult f = eval_method(method, w_i, w_o, p, fr, cfg);
    EstimatorConfig cfg_b = cfg;
    cfg_b.seed = splitmix64(cfg.seed ^ 0x5DEECE66Dull);
    const EvalResult b = eval_method(method, w_o, w_i, p, fr, cfg_b);
    ReciprocityResult r;
    r.forward = f.value.mean() / w_o.z();
    r.backward = b.value.mean() / w_i.z();
    const double var = f.variance.mean() / (w_o.z() * w_o.z()) + b.variance.mean() / (w_i.z() * w_i.z());
    r.z_score = var > 0.0 ? std::abs(r.forward - r.backward) / std::sqrt(var) : 0.0;
    return r;
}

namespace {

std::vector<std::pair<double, double>> bands(int n_bins) {
    if (n_bins < 1) throw std::invalid_argument("n_bins must be positive");
    std::vector<std::pair<double, double>> b;
    for (int i = 0; i < n_bins; ++i) b.emplace_back(0.5 * kPi * i / n_bins, 0.5 * kPi * (i + 1) / n_bins);
    return b;
}

}  // namespace

CurveReport reflectance_curve(double theta_i, const MicrosurfaceParams& p, const FresnelSpec& fr,
                              const EstimatorConfig& cfg, int n_bins, Method method) {
    cfg.validate();
    const auto b = bands(n_bins);
    const Direction w_i = Direction::from_spherical(theta_i, 0.0);
    CurveReport report;
    report.method = method;
    report.theta_i = theta_i;
    report.threads = resolve_threads(cfg.threads);
    report.bins.resize(b.size());
    parallel_for(b.size(), cfg.threads, [&](std::size_t i) {
        const double mu_hi = std::cos(b[i].first), mu_lo = std::cos(b[i].second);
        EstimatorConfig c = cfg;
        c.threads = 1;
        c.seed = splitmix64(cfg.seed + i);
        const DirectionSampler sampler = [&](RngStream& rng) {
            const double mu = std::max(1e-9, mu_lo + (mu_hi - mu_lo) * rng.uniform());
            return at(mu, kTwoPi * rng.uniform());
        };
        const auto t0 = std::chrono::steady_clock::now();
        const EvalResult r = eval_region(method, w_i, sampler, p, fr, c);
        const auto t1 = std::chrono::steady_clock::now();
        CurveBin& bin = report.bins[i];
        bin.theta_lo = b[i].first;
        bin.theta_hi = b[i].second;
        bin.mean = r.value.mean();
        bin.variance = r.variance.mean();
        bin.seconds = std::chrono::duration<double>(t1 - t0).count();
        bin.samples = r.samples;
    });
    return report;
}

CurveReport reflectance_curve_oracle(double theta_i, RhoOracle& oracle, int n_bins) {
    CurveReport report;
    report.theta_i = theta_i;
    for (const auto& [lo, hi] : bands(n_bins)) {
        CurveBin bin;
        bin.theta_lo = lo;
        bin.theta_hi = hi;
        bin.mean = oracle.band_average(theta_i, lo, hi);
        report.bins.push_back(bin);
    }
    return report;
}

std::vector<EfficiencyRow> inverse_efficiency(const CurveReport& a, const CurveReport& b) {
    if (a.bins.size() != b.bins.size()) throw std::invalid_argument("reports have different bin counts");
    std::vector<EfficiencyRow> rows;
    for (std::size_t i = 0; i < a.bins.size(); ++i) {
        const CurveBin& x = a.bins[i];
        const CurveBin& y = b.bins[i];
        if (std::abs(x.theta_lo - y.theta_lo) > 1e-12 || std::abs(x.theta_hi - y.theta_hi) > 1e-12)
            throw std::invalid_argument("reports have different bin edges");
        EfficiencyRow r;
        r.theta_mid = x.theta_mid();
        r.inv_eff_a = x.variance * x.seconds;
        r.inv_eff_b = y.variance * y.seconds;
        r.ratio = r.inv_eff_b > 0.0 ? r.inv_eff_a / r.inv_eff_b : (r.inv_eff_a == 0.0 ? 1.0 : HUGE_VAL);
        rows.push_back(r);
    }
    return rows;
}

std::vector<std::uint64_t> default_mse_ladder() {
    std::vector<std::uint64_t> l{1};
    for (int e = 6; e <= 16; ++e) l.push_back(std::uint64_t{1} << e);
    return l;
}

std::pair<double, double> fit_log_log(const std::vector<MsePoint>& points, std::uint64_t n_min) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (const auto& pt : points) {
        if (pt.n < n_min || !(pt.mse > 0.0)) continue;
        const double x = std::log(static_cast<double>(pt.n)), y = std::log(pt.mse);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    if (m < 2) return {0.0, 0.0};
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return {slope, (sy - slope * sx) / m};
}

std::vector<MseSeries> mse_convergence(const std::vector<MseQuery>& queries, const MicrosurfaceParams& p,
                                       const FresnelSpec& fr, RhoOracle& oracle, const std::vector<Method>& methods,
                                       const MseOptions& options) {
    if (queries.empty()) throw std::invalid_argument("mse_convergence needs at least one query");
    if (options.repetitions < 1) throw std::invalid_argument("repetitions must be positive");
    std::vector<double> reference;
    for (const auto& q : queries) reference.push_back(oracle.rho(q.theta_i, q.theta_o, q.phi_o));

    std::vector<MseSeries> out;
    for (Method method : methods) {
        MseSeries series{method, {}, 0.0, 0.0};
        for (std::uint64_t n : options.ladder) {
            const std::size_t tasks = queries.size() * static_cast<std::size_t>(options.repetitions);
            std::vector<double> err(tasks);
            parallel_for(tasks, options.threads, [&](std::size_t t) {
                const std::size_t qi = t % queries.size();
                const std::uint64_t rep = t / queries.size();
                const MseQuery& q = queries[qi];
                EstimatorConfig cfg;
                cfg.sample_count = n;
                cfg.max_bounces = options.max_bounces;
                cfg.rr_start = options.rr_start;
                cfg.threads = 1;
                cfg.seed = splitmix64(splitmix64(splitmix64(options.seed + static_cast<std::uint64_t>(method)) + n) +
                                      rep * 1000003u + qi);
                const EvalResult r = eval_method(method, Direction::from_spherical(q.theta_i, 0.0),
                                                 Direction::from_spherical(q.theta_o, q.phi_o), p, fr, cfg);
                const double rel = (r.value.mean() - reference[qi]) / reference[qi];
                err[t] = rel * rel;
            });
            double mse = 0.0;
            for (double e : err) mse += e;
            series.points.push_back({n, mse / static_cast<double>(tasks)});
        }
        std::tie(series.slope, series.intercept) = fit_log_log(series.points, options.fit_min);
        out.push_back(std::move(series));
    }
    return out;
}

}  // namespace mbsmith
