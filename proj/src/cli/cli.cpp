#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <list>
#include <map>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "config.hpp"
#include "image.hpp"
#include "mbsmith/estimators.hpp"
#include "mbsmith/parallel.hpp"
#include "mbsmith/validation.hpp"

namespace mbsmith::cli {

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

constexpr double kDeg = 180.0 / kPi;

class Csv {
  public:
    explicit Csv(std::vector<std::string> header) : width_(header.size()) { append(header); }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != width_) throw std::logic_error("CSV row width mismatch");
        append(cells);
    }
    const std::string& text() const { return text_; }

  private:
    void append(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }

    std::size_t width_;
    std::string text_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Writes to --out, or to `out` when no path (or "-") was given.
void emit(const RunConfig& c, const std::string& text, std::ostream& out) {
    if (c.out.empty() || c.out == "-") {
        out << text;
        return;
    }
    std::ofstream f(c.out, std::ios::binary);
    if (!f || !f.write(text.data(), static_cast<std::streamsize>(text.size()))) throw IoError("cannot write " + c.out);
}

std::vector<Method> methods_or(const RunConfig& c, std::vector<Method> fallback) {
    return c.methods.empty() ? fallback : c.methods;
}

Direction incident(const RunConfig& c) { return direction_from_degrees(c.theta_i.value_or(45.0), 0.0, "theta-i"); }

void cmd_eval(const RunConfig& c, std::ostream& out) {
    const Method m = methods_or(c, {Method::Path}).front();
    const Direction w_o = direction_from_degrees(c.theta_o, c.phi_o, "theta-o");
    const EvalResult r = eval_method(m, incident(c), w_o, c.params(), c.fresnel, c.estimator(1u << 16));
    const Spectrum se = r.standard_error();
    std::string line;
    for (double v : {r.value.r, r.value.g, r.value.b, se.r, se.g, se.b, r.mean_bounces})
        line += (line.empty() ? "" : " ") + format_number(v);
    emit(c, line + "\n", out);
}

void cmd_sample_histogram(const RunConfig& c, std::ostream& out) {
    const int nt = c.bins.value_or(16);
    const int np = c.phi_bins.value_or(2 * nt);
    const Direction w_i = incident(c);
    const MicrosurfaceParams p = c.params();
    const EstimatorConfig cfg = c.estimator(1u << 20);
    cfg.validate();
    const std::size_t n_bins = static_cast<std::size_t>(nt) * static_cast<std::size_t>(np);

    struct Partial {
        std::vector<Spectrum> sum, sum_sq;
        std::uint64_t truncated = 0;
    };
    constexpr std::uint64_t kChunk = 4096;
    const std::uint64_t n = cfg.sample_count;
    std::vector<Partial> partials((n + kChunk - 1) / kChunk);
    parallel_for(partials.size(), cfg.threads, [&](std::size_t ch) {
        Partial h{std::vector<Spectrum>(n_bins), std::vector<Spectrum>(n_bins), 0};
        const std::uint64_t end = std::min(n, (ch + 1) * kChunk);
        for (std::uint64_t i = ch * kChunk; i < end; ++i) {
            RngStream rng(cfg.seed, i);
            const SampleResult s = sample(w_i, p, c.fresnel, cfg, rng);
            if (s.truncated) {
                ++h.truncated;
                continue;
            }
            const int it = std::min(nt - 1, static_cast<int>(s.w_o.theta() / (0.5 * kPi) * nt));
            double phi = s.w_o.phi();
            if (phi < 0.0) phi += kTwoPi;
            const int ip = std::min(np - 1, static_cast<int>(phi / kTwoPi * np));
            const std::size_t idx = static_cast<std::size_t>(it) * np + ip;
            h.sum[idx] += s.weight;
            h.sum_sq[idx] += s.weight * s.weight;
        }
        partials[ch] = std::move(h);
    });
    std::vector<Spectrum> sum(n_bins), sum_sq(n_bins);
    for (const auto& h : partials)
        for (std::size_t b = 0; b < n_bins; ++b) {
            sum[b] += h.sum[b];
            sum_sq[b] += h.sum_sq[b];
        }

    Csv csv({"theta_lo", "theta_hi", "phi_lo", "phi_hi", "rho_r", "rho_g", "rho_b", "stderr_r", "stderr_g",
             "stderr_b"});
    const double nd = static_cast<double>(n);
    for (int it = 0; it < nt; ++it) {
        const double t0 = 0.5 * kPi * it / nt, t1 = 0.5 * kPi * (it + 1) / nt;
        for (int ip = 0; ip < np; ++ip) {
            const double p0 = kTwoPi * ip / np, p1 = kTwoPi * (ip + 1) / np;
            const double omega = (std::cos(t0) - std::cos(t1)) * (p1 - p0);
            const std::size_t idx = static_cast<std::size_t>(it) * np + ip;
            std::vector<std::string> row = {format_number(t0 * kDeg), format_number(t1 * kDeg),
                                            format_number(p0 * kDeg), format_number(p1 * kDeg)};
            Spectrum mean, se;
            for (int ch = 0; ch < 3; ++ch) {
                mean[ch] = sum[idx][ch] / (nd * omega);
                const double var = n > 1 ? std::max(0.0, sum_sq[idx][ch] / (omega * omega) - nd * mean[ch] * mean[ch]) /
                                               (nd - 1.0)
                                         : 0.0;
                se[ch] = std::sqrt(var / nd);
            }
            for (int ch = 0; ch < 3; ++ch) row.push_back(format_number(mean[ch]));
            for (int ch = 0; ch < 3; ++ch) row.push_back(format_number(se[ch]));
            csv.row(row);
        }
    }
    emit(c, csv.text(), out);
}

void cmd_furnace(const RunConfig& c, std::ostream& out) {
    const std::vector<double> alphas = c.alpha ? std::vector<double>{*c.alpha} : std::vector<double>{0.1, 0.5, 1.0};
    const std::vector<double> thetas =
        c.theta_i ? std::vector<double>{*c.theta_i} : std::vector<double>{15.0, 45.0, 75.0};
    std::vector<std::string> header = {"ndf", "alpha", "theta_i", "albedo", "stderr", "bounces_mean"};
    if (c.timing) header.push_back("seconds");
    Csv csv(header);
    const EstimatorConfig cfg = c.estimator(1000000);
    for (double a : alphas) {
        const MicrosurfaceParams p(c.ndf, c.alpha_x.value_or(a), c.alpha_y.value_or(a));
        for (double t : thetas) {
            const Direction w_i = direction_from_degrees(t, 0.0, "theta-i");
            const auto t0 = std::chrono::steady_clock::now();
            const EvalResult r = directional_albedo(w_i, p, FresnelSpec::none(), cfg);
            const double secs = seconds_since(t0);
            std::vector<std::string> row = {std::string(to_string(c.ndf)), format_number(a), format_number(t),
                                            format_number(r.value.r), format_number(r.standard_error().r),
                                            format_number(r.mean_bounces)};
            if (c.timing) row.push_back(format_number(secs));
            csv.row(row);
        }
    }
    emit(c, csv.text(), out);
}

std::vector<CurveReport> curves(const RunConfig& c, const std::vector<Method>& methods, int n_bins) {
    const MicrosurfaceParams p = c.params();
    const EstimatorConfig cfg = c.estimator(1u << 14);
    const double theta_i = incident(c).theta();
    std::vector<CurveReport> reports;
    for (Method m : methods) reports.push_back(reflectance_curve(theta_i, p, c.fresnel, cfg, n_bins, m));
    return reports;
}

std::vector<std::string> band_cells(const CurveBin& b) {
    return {format_number(b.theta_lo * kDeg), format_number(b.theta_hi * kDeg), format_number(b.theta_mid() * kDeg)};
}

void cmd_curve(const RunConfig& c, std::ostream& out) {
    const int n_bins = c.bins.value_or(90);
    if (n_bins < 16) throw UsageError("--bins: curve needs at least 16 bins");
    const auto methods = methods_or(c, {Method::Path});
    const auto reports = curves(c, methods, n_bins);
    std::optional<CurveReport> oracle;
    if (c.oracle) {
        RhoOracle o(c.params(), c.fresnel, DirectionGrid(c.grid_theta, c.grid_phi));
        oracle = reflectance_curve_oracle(incident(c).theta(), o, n_bins);
    }

    std::vector<std::string> header = {"theta_lo", "theta_hi", "theta_mid"};
    for (Method m : methods) {
        const std::string name(to_string(m));
        header.insert(header.end(), {name + "_mean", name + "_variance"});
        if (c.timing) header.insert(header.end(), {name + "_seconds", name + "_inv_eff"});
    }
    if (oracle) header.push_back("oracle_mean");
    Csv csv(header);
    for (int b = 0; b < n_bins; ++b) {
        auto row = band_cells(reports.front().bins[static_cast<std::size_t>(b)]);
        for (const auto& r : reports) {
            const CurveBin& bin = r.bins[static_cast<std::size_t>(b)];
            row.insert(row.end(), {format_number(bin.mean), format_number(bin.variance)});
            if (c.timing)
                row.insert(row.end(), {format_number(bin.seconds), format_number(bin.variance * bin.seconds)});
        }
        if (oracle) row.push_back(format_number(oracle->bins[static_cast<std::size_t>(b)].mean));
        csv.row(row);
    }
    emit(c, csv.text(), out);
}

void cmd_compare(const RunConfig& c, std::ostream& out) {
    const int n_bins = c.bins.value_or(90);
    if (n_bins < 16) throw UsageError("--bins: compare needs at least 16 bins");
    const auto methods = methods_or(c, {Method::Path, Method::Independent});
    if (methods.size() != 2) throw UsageError("--method: compare takes exactly two methods");
    const auto reports = curves(c, methods, n_bins);
    const std::string a(to_string(methods[0])), b(to_string(methods[1]));

    std::vector<std::string> header = {"theta_lo", "theta_hi", "theta_mid", a + "_mean", a + "_variance",
                                       b + "_mean", b + "_variance", "difference", "z_score"};
    std::vector<EfficiencyRow> eff;
    if (c.timing) {
        header.insert(header.end(), {a + "_seconds", b + "_seconds", a + "_inv_eff", b + "_inv_eff", "inv_eff_ratio"});
        eff = inverse_efficiency(reports[0], reports[1]);
    }
    Csv csv(header);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n_bins); ++i) {
        const CurveBin& x = reports[0].bins[i];
        const CurveBin& y = reports[1].bins[i];
        const double diff = x.mean - y.mean;
        const double sd = std::sqrt(x.variance + y.variance);
        auto row = band_cells(x);
        row.insert(row.end(), {format_number(x.mean), format_number(x.variance), format_number(y.mean),
                               format_number(y.variance), format_number(diff),
                               format_number(sd > 0.0 ? diff / sd : 0.0)});
        if (c.timing)
            row.insert(row.end(), {format_number(x.seconds), format_number(y.seconds), format_number(eff[i].inv_eff_a),
                                   format_number(eff[i].inv_eff_b), format_number(eff[i].ratio)});
        csv.row(row);
    }
    emit(c, csv.text(), out);
}

void cmd_convergence(const RunConfig& c, std::ostream& out) {
    const MicrosurfaceParams p = c.params();
    const double theta_i = c.theta_i.value_or(45.0);
    direction_from_degrees(theta_i, 0.0, "theta-i");
    const std::vector<MseQuery> queries = {{theta_i * kPi / 180.0, c.theta_o * kPi / 180.0, c.phi_o * kPi / 180.0}};
    MseOptions opt;
    for (std::uint64_t n : default_mse_ladder())
        if (!c.samples || n <= *c.samples) opt.ladder.push_back(n);
    opt.repetitions = c.repetitions;
    opt.seed = c.seed;
    opt.threads = c.threads;
    opt.max_bounces = c.max_bounces;
    opt.rr_start = c.rr_start;
    RhoOracle oracle(p, c.fresnel, DirectionGrid(c.grid_theta, c.grid_phi));
    const auto series = mse_convergence(queries, p, c.fresnel, oracle,
                                        methods_or(c, {Method::Path, Method::Bdpt, Method::Independent}), opt);
    Csv csv({"method", "n", "mse", "fit_slope", "fit_intercept"});
    for (const auto& s : series)
        for (const auto& pt : s.points)
            csv.row({std::string(to_string(s.method)), std::to_string(pt.n), format_number(pt.mse),
                     format_number(s.slope), format_number(s.intercept)});
    emit(c, csv.text(), out);
}

void cmd_slice(const RunConfig& c, std::ostream&) {
    if (c.out.empty() || c.out == "-") throw UsageError("--out: slice needs an image path (.pfm or .ppm)");
    const int res = c.resolution;
    const Method m = methods_or(c, {Method::Path}).front();
    const Direction w_i = incident(c);
    const MicrosurfaceParams p = c.params();
    const EstimatorConfig base = c.estimator(256);
    base.validate();
    Image img(res, res);
    parallel_for(static_cast<std::size_t>(res), base.threads, [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < res; ++x) {
            const double u = 2.0 * (x + 0.5) / res - 1.0;
            const double v = 1.0 - 2.0 * (y + 0.5) / res;
            const double r2 = u * u + v * v;
            if (r2 >= 1.0) continue;
            EstimatorConfig cfg = base;
            cfg.threads = 1;
            cfg.seed = splitmix64(base.seed + static_cast<std::uint64_t>(y) * res + x);
            const EvalResult r = eval_method(m, w_i, Direction::unit(u, v, std::sqrt(1.0 - r2)), p, c.fresnel, cfg);
            float* px = img.pixel(x, y);
            for (int ch = 0; ch < 3; ++ch) px[ch] = static_cast<float>(r.value[ch]);
        }
    });
    write_image(c.out, img);
}

struct Command {
    std::string name;
    std::string help;
    std::vector<std::string> keys;
    std::function<void(const RunConfig&, std::ostream&)> action;
};

const std::vector<Command>& commands() {
    static const std::vector<std::string> common = {"ndf",     "alpha", "alpha-x", "alpha-y", "fresnel",
                                                     "samples", "max-bounces", "rr-start", "seed", "out",
                                                     "threads"};
    auto with = [&](std::vector<std::string> extra) {
        extra.insert(extra.begin(), common.begin(), common.end());
        return extra;
    };
    static const std::vector<Command> list = {
        {"eval", "Estimate rho(w_i, w_o); prints rho_rgb, stderr_rgb and the mean bounce count",
         with({"method", "theta-i", "theta-o", "phi-o"}), cmd_eval},
        {"sample-histogram", "Weighted histogram of sample() over (theta_o, phi_o) bins",
         with({"theta-i", "bins", "phi-bins"}), cmd_sample_histogram},
        {"furnace", "Directional albedo with F = 1 over a roughness x incidence grid", with({"theta-i", "timing"}),
         cmd_furnace},
        {"curve", "Mean reflectance per theta_o band",
         with({"method", "theta-i", "bins", "timing", "oracle", "grid-theta", "grid-phi"}), cmd_curve},
        {"compare", "Two estimators side by side per theta_o band", with({"method", "theta-i", "bins", "timing"}),
         cmd_compare},
        {"convergence", "MSE against the fixed-point oracle over a sample-count ladder",
         with({"method", "theta-i", "theta-o", "phi-o", "repetitions", "grid-theta", "grid-phi"}), cmd_convergence},
        {"slice", "Image of rho over the outgoing hemisphere (orthographic disk)",
         with({"method", "theta-i", "resolution"}), cmd_slice},
    };
    return list;
}

struct Bound {
    const Command* command = nullptr;
    CLI::App* app = nullptr;
    std::map<std::string, std::string> values;
    std::vector<std::string> methods;
    std::map<std::string, bool> flags;
    std::string config;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multiple-bounce Smith microfacet BRDF tools", "mbsmith"};
    app.require_subcommand(1);
    std::list<Bound> bound;
    for (const auto& cmd : commands()) {
        Bound& b = bound.emplace_back();
        b.command = &cmd;
        b.app = app.add_subcommand(cmd.name, cmd.help);
        b.app->add_option("--config", b.config, "key = value file; flags override its entries");
        for (const auto& key : cmd.keys) {
            if (key == "method")
                b.app->add_option("--method", b.methods, "ours-pt | ours-bdpt | independent (repeatable)")
                    ->delimiter(',');
            else if (key == "timing" || key == "oracle")
                b.app->add_flag("--" + key, b.flags[key]);
            else
                b.app->add_option("--" + key, b.values[key]);
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kUsage;
    }

    try {
        for (auto& b : bound) {
            if (!b.app->parsed()) continue;
            KeyValues values = b.config.empty() ? KeyValues{} : load_config_file(b.config);
            for (const auto& [key, v] : b.values)
                if (b.app->get_option("--" + key)->count() > 0) values[key] = v;
            for (const auto& [key, v] : b.flags)
                if (b.app->get_option("--" + key)->count() > 0) values[key] = v ? "true" : "false";
            if (!b.methods.empty()) {
                std::string joined;
                for (const auto& m : b.methods) joined += (joined.empty() ? "" : ",") + m;
                values["method"] = joined;
            }
            b.command->action(resolve_config(values), out);
            return kOk;
        }
        throw UsageError("no subcommand given");
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return kDomain;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
}

}  // namespace mbsmith::cli
