#include "mbsmith/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mbsmith/parallel.hpp"
#include "mbsmith/pathsm.hpp"

namespace mbsmith {

void EstimatorConfig::validate() const {
    if (sample_count < 1) throw std::invalid_argument("sample_count must be positive");
    if (max_bounces < 1) throw std::invalid_argument("max_bounces must be at least 1");
    if (rr_start < 2) throw std::invalid_argument("rr_start must be at least 2");
}

namespace {

constexpr std::uint64_t kChunk = 1024;

void check_query(const Direction& w, const char* name) {
    if (!(w.z() > 0.0)) throw DomainError(std::string(name) + " is below the horizon");
}

// Running mean / M2 over per-sample spectra plus per-bounce sums.
struct Accumulator {
    std::uint64_t n = 0;
    Spectrum mean;
    Spectrum m2;
    std::vector<Spectrum> bounce_sum;
    double bounce_count_sum = 0.0;

    explicit Accumulator(int max_bounces) : bounce_sum(static_cast<std::size_t>(max_bounces)) {}

    void add(const Spectrum& x) {
        ++n;
        const Spectrum delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }

    void merge(const Accumulator& o) {
        if (o.n == 0) return;
        const double na = static_cast<double>(n), nb = static_cast<double>(o.n), nt = na + nb;
        const Spectrum delta = o.mean - mean;
        mean += delta * (nb / nt);
        m2 += o.m2 + delta * delta * (na * nb / nt);
        n += o.n;
        for (std::size_t k = 0; k < bounce_sum.size(); ++k) bounce_sum[k] += o.bounce_sum[k];
        bounce_count_sum += o.bounce_count_sum;
    }
};

// Sample i draws from RngStream(seed, i). Chunks are reduced in index order,
// so the result is independent of the thread count.
// `make` builds per-worker state handed to every `body` call of that worker.
template <typename Make, typename Body>
Accumulator run_samples(const EstimatorConfig& cfg, Make&& make, Body&& body) {
    const std::uint64_t n_chunks = (cfg.sample_count + kChunk - 1) / kChunk;
    std::vector<Accumulator> chunks(n_chunks, Accumulator(cfg.max_bounces));
    parallel_for_with_state(
        n_chunks, cfg.threads,
        [&] { return std::pair(make(), std::vector<Spectrum>(static_cast<std::size_t>(cfg.max_bounces))); },
        [&](auto& worker, std::size_t c) {
            auto& [state, per_bounce] = worker;
            Accumulator& acc = chunks[c];
            const std::uint64_t end = std::min<std::uint64_t>(cfg.sample_count, (c + 1) * kChunk);
            for (std::uint64_t i = c * kChunk; i < end; ++i) {
                std::fill(per_bounce.begin(), per_bounce.end(), Spectrum());
                RngStream rng(cfg.seed, i);
                int bounces = 0;
                const Spectrum x = body(state, rng, per_bounce, bounces);
                acc.add(x);
                for (std::size_t k = 0; k < per_bounce.size(); ++k) acc.bounce_sum[k] += per_bounce[k];
                acc.bounce_count_sum += bounces;
            }
        });
    Accumulator total(cfg.max_bounces);
    for (const auto& c : chunks) total.merge(c);
    return total;
}

EvalResult finish(const Accumulator& acc, const Spectrum& deterministic_k1) {
    EvalResult r;
    r.samples = acc.n;
    const double n = static_cast<double>(acc.n);
    r.per_bounce.resize(acc.bounce_sum.size());
    for (std::size_t k = 0; k < acc.bounce_sum.size(); ++k) r.per_bounce[k] = acc.bounce_sum[k] / n;
    if (!r.per_bounce.empty()) r.per_bounce[0] += deterministic_k1;
    r.value = acc.mean + deterministic_k1;
    r.variance = acc.n > 1 ? acc.m2 / ((n - 1.0) * n) : Spectrum();
    r.mean_bounces = acc.bounce_count_sum / n;
    return r;
}

// Density of sampling d_out from d_in by reflecting about a visible normal.
double direction_pdf(const Direction& d_in, const Direction& d_out, const MicrosurfaceParams& p) {
    const auto h = reflection_half_vector(d_in, d_out);
    if (!h || h->z() <= 0.0) return 0.0;
    const double dv = visible_ndf(*h, -d_in, p);
    if (dv == 0.0) return 0.0;
    return dv / (4.0 * std::max(std::abs(dot(*h, d_in)), kMinCos));
}

struct Step {
    Direction d;
    Spectrum f;  // Fresnel factor of the scattering event
};

// Samples the next travelling direction from d by reflection about a visible normal.
Step scatter(const Direction& d, const MicrosurfaceParams& p, const FresnelSpec& fr, RngStream& rng) {
    const auto u = rng.uniform2();
    const Direction h = sample_visible_normal(-d, p, u[0], u[1]);
    return {reflect(d, h), fresnel_eval(-d, h, fr)};
}

// Probability that a walk which has just produced direction d keeps scattering
// (before Russian roulette).
double continue_probability(const Direction& d, const MicrosurfaceParams& p) {
    if (d.z() <= 0.0) return 1.0;
    const double lambda = detail::lambda_abs(d.vec(), p);
    return lambda / (1.0 + lambda);
}

// Russian roulette on the Fresnel throughput; returns the survival probability
// or 0 when the walk dies.
double roulette(int bounce, const EstimatorConfig& cfg, Spectrum& rr_throughput, RngStream& rng) {
    if (bounce < cfg.rr_start) return 1.0;
    const double q = std::min(1.0, rr_throughput.max_channel());
    if (q <= 0.0 || rng.uniform() >= q) return 0.0;
    rr_throughput /= q;
    return q;
}

// Shadowing term for the unidirectional walk: exact S_k via the segment table.
class ExactShadowing {
  public:
    ExactShadowing(const Direction& d0, const MicrosurfaceParams& p) : table_(p) { table_.extend(d0); }
    void push(const Direction& d) { table_.extend(d); }
    double connect(const Direction& w_o) const { return table_.peek_extend(w_o); }

  private:
    SegmentTable table_;
};

// Independent-bounce product of per-bounce G2(d_i, d_{i+1}), every direction
// folded into the upper hemisphere.
class IndependentShadowing {
  public:
    IndependentShadowing(const Direction& d0, const MicrosurfaceParams& p) : p_(p) {
        last_lambda_ = detail::lambda_abs(d0.vec(), p_);
    }
    void push(const Direction& d) {
        const double lambda = detail::lambda_abs(d.vec(), p_);
        weight_ /= 1.0 + last_lambda_ + lambda;
        last_lambda_ = lambda;
    }
    double connect(const Direction& w_o) const {
        return weight_ / (1.0 + last_lambda_ + detail::lambda_abs(w_o.vec(), p_));
    }

  private:
    MicrosurfaceParams p_;
    double last_lambda_ = 0.0;
    double weight_ = 1.0;
};

// Walk contributions of k >= 2 for one sample.
template <typename Shadowing>
Spectrum walk_sample(const Direction& d0, const Direction& w_o, const MicrosurfaceParams& p, const FresnelSpec& fr,
                     const EstimatorConfig& cfg, RngStream& rng, std::vector<Spectrum>& per_bounce, int& bounces) {
    Spectrum total;
    Spectrum beta(1.0);
    Spectrum rr_throughput(1.0);
    Shadowing shadow(d0, p);
    Direction d = d0;
    bounces = 1;
    // j = number of sampled directions; the connected path has j + 1 bounces.
    for (int j = 1; j + 1 <= cfg.max_bounces; ++j) {
        const Step s = scatter(d, p, fr, rng);
        beta *= s.f * extinction(d, p);
        rr_throughput *= s.f;
        shadow.push(s.d);
        d = s.d;
        bounces = j + 1;
        const Spectrum v = vertex_term(d, w_o, p, fr);
        if (!v.is_black()) {
            const Spectrum c = beta * v * shadow.connect(w_o);
            per_bounce[static_cast<std::size_t>(j)] += c;
            total += c;
        }
        const double q_exit = continue_probability(d, p);
        if (q_exit <= 0.0 || rng.uniform() >= q_exit) break;
        const double q_rr = roulette(j, cfg, rr_throughput, rng);
        if (q_rr <= 0.0) break;
        beta /= q_exit * q_rr;
    }
    return total;
}

// One side of a bidirectional walk. rr[m] is the Russian roulette survival
// probability accumulated before dirs[m] was produced.
struct Subpath {
    std::vector<Direction> dirs;
    std::vector<double> rr;
};

void grow(Subpath& sp, const Direction& start, int max_steps, const MicrosurfaceParams& p, const FresnelSpec& fr,
          const EstimatorConfig& cfg, RngStream& rng) {
    sp.dirs.assign(1, start);
    sp.rr.assign(1, 1.0);
    Spectrum rr_throughput(1.0);
    double rr = 1.0;
    Direction d = start;
    for (int j = 1; j <= max_steps; ++j) {
        const Step s = scatter(d, p, fr, rng);
        d = s.d;
        rr_throughput *= s.f;
        sp.dirs.push_back(d);
        sp.rr.push_back(rr);
        if (j == max_steps) break;
        const double q_exit = continue_probability(d, p);
        if (q_exit <= 0.0 || rng.uniform() >= q_exit) break;
        const double q_rr = roulette(j, cfg, rr_throughput, rng);
        if (q_rr <= 0.0) break;
        rr *= q_rr;
    }
}

struct BdptScratch {
    Subpath light, eye;
    std::vector<Direction> x;
    std::vector<double> pf, pr, cf, cr;
};

// Contributions of k >= 2 for one sample. Path (s, t) joins light vertex s to
// eye vertex t: (l_0 .. l_s, -e_t .. -e_0), k = s + t + 1 bounces.
Spectrum bdpt_sample(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p, const FresnelSpec& fr,
                     const EstimatorConfig& cfg, RngStream& rng, std::vector<Spectrum>& per_bounce, int& bounces,
                     BdptScratch& sc) {
    Spectrum total;
    bounces = 1;
    const int max_steps = cfg.max_bounces - 1;
    if (max_steps < 1) return total;
    grow(sc.light, -w_i, max_steps, p, fr, cfg, rng);
    grow(sc.eye, -w_o, max_steps, p, fr, cfg, rng);
    const int n_l = static_cast<int>(sc.light.dirs.size()) - 1;
    const int n_e = static_cast<int>(sc.eye.dirs.size()) - 1;
    bounces = 1 + std::max(n_l, n_e);

    auto& x = sc.x;
    auto& pf = sc.pf;
    auto& pr = sc.pr;
    auto& cf = sc.cf;
    auto& cr = sc.cr;
    for (int s = 0; s <= n_l; ++s) {
        for (int t = 0; t <= n_e; ++t) {
            const int k = s + t + 1;
            if (k < 2 || k > cfg.max_bounces) continue;
            x.clear();
            for (int m = 0; m <= s; ++m) x.push_back(sc.light.dirs[static_cast<std::size_t>(m)]);
            for (int m = t; m >= 0; --m) x.push_back(-sc.eye.dirs[static_cast<std::size_t>(m)]);
            const Spectrum f = path_contribution(std::span<const Direction>(x), p, fr);
            if (f.is_black()) continue;
            // pf[m]: light-side density of x_m given x_{m-1}; pr[m]: eye-side
            // density of x_m given x_{m+1}; cf/cr: probability that the
            // respective walk continues after producing x_m.
            const auto n = static_cast<std::size_t>(k + 1);
            pf.assign(n, 0.0);
            pr.assign(n, 0.0);
            cf.assign(n, 1.0);
            cr.assign(n, 1.0);
            for (std::size_t m = 1; m + 1 < n; ++m) {
                pf[m] = direction_pdf(x[m - 1], x[m], p);
                pr[m] = direction_pdf(-x[m + 1], -x[m], p);
                cf[m] = continue_probability(x[m], p);
                cr[m] = continue_probability(-x[m], p);
            }
            // Strategy sp samples x_1..x_sp from the light side and
            // x_{sp+1}..x_{k-1} from the eye side. Balance heuristic: the
            // weighted contribution is f / sum of all strategy densities.
            double denom = 0.0;
            for (int sp = 0; sp < k; ++sp) {
                double q = 1.0;
                for (int m = 1; m <= sp; ++m) {
                    const auto um = static_cast<std::size_t>(m);
                    q *= pf[um] * (m < sp ? cf[um] : 1.0);
                }
                for (int m = sp + 1; m < k; ++m) {
                    const auto um = static_cast<std::size_t>(m);
                    q *= pr[um] * (m > sp + 1 ? cr[um] : 1.0);
                }
                denom += q;
            }
            if (!(denom > 0.0)) continue;
            const double rr = sc.light.rr[static_cast<std::size_t>(s)] * sc.eye.rr[static_cast<std::size_t>(t)];
            const Spectrum c = f / (denom * rr);
            per_bounce[static_cast<std::size_t>(k - 1)] += c;
            total += c;
        }
    }
    return total;
}

Spectrum single_bounce(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p, const FresnelSpec& fr) {
    const Direction d0 = -w_i;
    return vertex_term(d0, w_o, p, fr) * s1(d0, w_o, p);
}

// Per-sample estimator of the k >= 2 terms for a fixed method.
class MethodSampler {
  public:
    MethodSampler(Method m, const MicrosurfaceParams& p, const FresnelSpec& fr, const EstimatorConfig& cfg)
        : method_(m), p_(p), fr_(fr), cfg_(cfg) {}

    Spectrum operator()(const Direction& w_i, const Direction& w_o, RngStream& rng, std::vector<Spectrum>& per_bounce,
                        int& bounces) {
        switch (method_) {
            case Method::Path:
                return walk_sample<ExactShadowing>(-w_i, w_o, p_, fr_, cfg_, rng, per_bounce, bounces);
            case Method::Independent:
                return walk_sample<IndependentShadowing>(-w_i, w_o, p_, fr_, cfg_, rng, per_bounce, bounces);
            case Method::Bdpt:
                return bdpt_sample(w_i, w_o, p_, fr_, cfg_, rng, per_bounce, bounces, scratch_);
        }
        return {};
    }

  private:
    Method method_;
    const MicrosurfaceParams& p_;
    const FresnelSpec& fr_;
    const EstimatorConfig& cfg_;
    BdptScratch scratch_;
};

}  // namespace

std::string_view to_string(Method m) {
    switch (m) {
        case Method::Path: return "ours-pt";
        case Method::Bdpt: return "ours-bdpt";
        case Method::Independent: return "independent";
    }
    return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
    for (Method m : {Method::Path, Method::Bdpt, Method::Independent})
        if (to_string(m) == name) return m;
    return std::nullopt;
}

EvalResult eval_method(Method method, const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p,
                       const FresnelSpec& fr, const EstimatorConfig& cfg) {
    check_query(w_i, "w_i");
    check_query(w_o, "w_o");
    cfg.validate();
    const Spectrum k1 = single_bounce(w_i, w_o, p, fr);
    auto make = [&] { return MethodSampler(method, p, fr, cfg); };
    auto body = [&](MethodSampler& sampler, RngStream& rng, std::vector<Spectrum>& per_bounce, int& bounces) {
        return sampler(w_i, w_o, rng, per_bounce, bounces);
    };
    return finish(run_samples(cfg, make, body), k1);
}

EvalResult eval(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p, const FresnelSpec& fr,
                const EstimatorConfig& cfg) {
    return eval_method(Method::Path, w_i, w_o, p, fr, cfg);
}

EvalResult eval_bdpt(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p, const FresnelSpec& fr,
                     const EstimatorConfig& cfg) {
    return eval_method(Method::Bdpt, w_i, w_o, p, fr, cfg);
}

EvalResult eval_independent_bounce(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p,
                                   const FresnelSpec& fr, const EstimatorConfig& cfg) {
    return eval_method(Method::Independent, w_i, w_o, p, fr, cfg);
}

EvalResult eval_region(Method method, const Direction& w_i, const DirectionSampler& w_o_sampler,
                       const MicrosurfaceParams& p, const FresnelSpec& fr, const EstimatorConfig& cfg) {
    check_query(w_i, "w_i");
    cfg.validate();
    auto make = [&] { return MethodSampler(method, p, fr, cfg); };
    auto body = [&](MethodSampler& sampler, RngStream& rng, std::vector<Spectrum>& per_bounce, int& bounces) {
        const Direction w_o = w_o_sampler(rng);
        check_query(w_o, "sampled w_o");
        const Spectrum k1 = single_bounce(w_i, w_o, p, fr);
        per_bounce[0] += k1;
        return k1 + sampler(w_i, w_o, rng, per_bounce, bounces);
    };
    return finish(run_samples(cfg, make, body), Spectrum());
}

SampleResult sample(const Direction& w_i, const MicrosurfaceParams& p, const FresnelSpec& fr,
                    const EstimatorConfig& cfg, RngStream& rng) {
    check_query(w_i, "w_i");
    SegmentTable table(p);
    Direction d = -w_i;
    table.extend(d);
    Spectrum weight(1.0);
    for (int k = 1; k <= cfg.max_bounces; ++k) {
        const Step s = scatter(d, p, fr, rng);
        weight *= s.f * extinction(d, p);
        d = s.d;
        table.extend(d);
        if (d.z() > 0.0) {
            const double g = 1.0 / (1.0 + detail::lambda_abs(d.vec(), p));
            if (rng.uniform() < g) return {d, weight * (table.full() / g), k, false};
            weight /= 1.0 - g;
        }
    }
    return {Direction(), Spectrum(), cfg.max_bounces, true};
}

EvalResult directional_albedo(const Direction& w_i, const MicrosurfaceParams& p, const FresnelSpec& fr,
                              const EstimatorConfig& cfg) {
    check_query(w_i, "w_i");
    cfg.validate();
    auto make = [] { return 0; };
    auto body = [&](int, RngStream& rng, std::vector<Spectrum>& per_bounce, int& bounces) {
        const SampleResult r = sample(w_i, p, fr, cfg, rng);
        bounces = r.bounces;
        if (!r.truncated) per_bounce[static_cast<std::size_t>(r.bounces - 1)] += r.weight;
        return r.weight;
    };
    return finish(run_samples(cfg, make, body), Spectrum());
}

namespace {

double reflection_pdf(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p) {
    return direction_pdf(-w_i, w_o, p);
}

}  // namespace

double pdf(const Direction& w_i, const Direction& w_o, const MicrosurfaceParams& p) {
    if (!(w_o.z() > 0.0) || !(w_i.z() > 0.0)) return 0.0;
    const Direction mirrored = Direction::unit(w_o.x(), w_o.y(), -w_o.z());
    const double lobe = reflection_pdf(w_i, w_o, p) + reflection_pdf(w_i, mirrored, p);
    const double cosine = w_o.z() * kInvPi;
    return std::max(1e-6, 0.5 * lobe + 0.5 * cosine);
}

Direction sample_pdf(const Direction& w_i, const MicrosurfaceParams& p, std::array<double, 3> u) {
    if (u[0] < 0.5) {
        const Direction h = sample_visible_normal(w_i, p, u[1], u[2]);
        const Direction r = reflect(-w_i, h);
        return r.z() >= 0.0 ? r : Direction::unit(r.x(), r.y(), -r.z());
    }
    const double r = std::sqrt(u[1]);
    const double phi = kTwoPi * u[2];
    return Direction::unit(r * std::cos(phi), r * std::sin(phi), std::sqrt(std::max(0.0, 1.0 - u[1])));
}

}  // namespace mbsmith
