#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <tuple>
#include <vector>

#include "mbsmith/estimators.hpp"
#include "mbsmith/fresnel.hpp"
#include "mbsmith/microfacet.hpp"
#include "mbsmith/pathsm.hpp"
#include "mbsmith/validation.hpp"

namespace py = pybind11;
using namespace mbsmith;

namespace {

using Vec = std::array<double, 3>;
using Rgb = std::tuple<double, double, double>;

Direction dir(const Vec& v) { return Direction::unit(v[0], v[1], v[2]); }
Vec vec(const Direction& d) { return {d.x(), d.y(), d.z()}; }
Rgb rgb(const Spectrum& s) { return {s.r, s.g, s.b}; }
Spectrum spectrum(const Rgb& t) { return {std::get<0>(t), std::get<1>(t), std::get<2>(t)}; }

std::vector<Direction> path_of(const std::vector<Vec>& v) {
    std::vector<Direction> out;
    out.reserve(v.size());
    for (const auto& d : v) out.push_back(dir(d));
    return out;
}

EstimatorConfig make_config(std::uint64_t samples, int max_bounces, int rr_start, std::uint64_t seed, unsigned threads) {
    EstimatorConfig c;
    c.sample_count = samples;
    c.max_bounces = max_bounces;
    c.rr_start = rr_start;
    c.seed = seed;
    c.threads = threads;
    c.validate();
    return c;
}

py::dict to_dict(const EvalResult& r) {
    py::dict d;
    d["value"] = rgb(r.value);
    d["stderr"] = rgb(r.standard_error());
    std::vector<Rgb> pb;
    for (const auto& s : r.per_bounce) pb.push_back(rgb(s));
    d["per_bounce"] = pb;
    d["mean_bounces"] = r.mean_bounces;
    d["samples"] = r.samples;
    return d;
}

Method method_of(const std::string& name) {
    const auto m = parse_method(name);
    if (!m) throw py::value_error("unknown method '" + name + "' (expected ours-pt, ours-bdpt or independent)");
    return *m;
}

}  // namespace

PYBIND11_MODULE(mbsmith, m) {
    m.doc() = "Multiple-scattering microfacet reflectance with a position-free path formulation.";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<NonConvergenceError>(m, "NonConvergenceError", PyExc_RuntimeError);

    py::enum_<NdfKind>(m, "NdfKind").value("GGX", NdfKind::GGX).value("Beckmann", NdfKind::Beckmann);

    py::class_<MicrosurfaceParams>(m, "Microsurface")
        .def(py::init<NdfKind, double, double>(), py::arg("kind"), py::arg("alpha_x"), py::arg("alpha_y"))
        .def(py::init([](NdfKind k, double a) { return MicrosurfaceParams::isotropic(k, a); }), py::arg("kind"),
             py::arg("alpha"))
        .def_property_readonly("kind", &MicrosurfaceParams::kind)
        .def_property_readonly("alpha_x", &MicrosurfaceParams::alpha_x)
        .def_property_readonly("alpha_y", &MicrosurfaceParams::alpha_y);

    py::class_<FresnelSpec>(m, "Fresnel")
        .def_static("none", &FresnelSpec::none)
        .def_static("schlick", [](const Rgb& f0) { return FresnelSpec::schlick(spectrum(f0)); }, py::arg("f0"))
        .def_static("conductor",
                    [](const Rgb& eta, const Rgb& kappa) { return FresnelSpec::conductor(spectrum(eta), spectrum(kappa)); },
                    py::arg("eta"), py::arg("kappa"))
        .def_static("named_conductor", [](const std::string& name) {
            const auto& table = builtin_conductors();
            const auto it = table.find(name);
            if (it == table.end()) throw py::key_error(name);
            return FresnelSpec::conductor(it->second.eta, it->second.kappa);
        });

    m.def("direction", [](double theta, double phi) { return vec(Direction::from_spherical(theta, phi)); },
          py::arg("theta"), py::arg("phi"), "Unit vector from polar and azimuthal angles in radians.");

    m.def("ndf", [](const Vec& h, const MicrosurfaceParams& p) { return ndf(dir(h), p); });
    m.def("smith_lambda", [](const Vec& w, const MicrosurfaceParams& p) { return smith_lambda(dir(w), p); });
    m.def("smith_g1", [](const Vec& w, const MicrosurfaceParams& p) { return smith_g1(dir(w), p); });
    m.def("vndf_sample",
          [](const Vec& w_incident, const MicrosurfaceParams& p, double u1, double u2) {
              return vec(vndf_sample(dir(w_incident), p, {u1, u2}));
          });

    m.def("path_shadowing",
          [](const std::vector<Vec>& path, const MicrosurfaceParams& p) { return path_shadowing(path_of(path), p); },
          py::arg("path"), py::arg("surface"));
    m.def("path_contribution",
          [](const std::vector<Vec>& path, const MicrosurfaceParams& p, const FresnelSpec& fr) {
              return rgb(path_contribution(path_of(path), p, fr));
          },
          py::arg("path"), py::arg("surface"), py::arg("fresnel") = FresnelSpec::none());

    m.def("eval",
          [](const Vec& wi, const Vec& wo, const MicrosurfaceParams& p, const FresnelSpec& fr, const std::string& method,
             std::uint64_t samples, int max_bounces, int rr_start, std::uint64_t seed, unsigned threads) {
              const auto cfg = make_config(samples, max_bounces, rr_start, seed, threads);
              const Method meth = method_of(method);
              py::gil_scoped_release release;
              return eval_method(meth, dir(wi), dir(wo), p, fr, cfg);
          },
          py::arg("w_i"), py::arg("w_o"), py::arg("surface"), py::arg("fresnel") = FresnelSpec::none(),
          py::arg("method") = "ours-pt", py::arg("samples") = 1u << 16, py::arg("max_bounces") = 16,
          py::arg("rr_start") = 6, py::arg("seed") = 0, py::arg("threads") = 1);

    m.def("sample",
          [](const Vec& wi, const MicrosurfaceParams& p, const FresnelSpec& fr, std::uint64_t seed, std::uint64_t index,
             int max_bounces) {
              auto cfg = make_config(1, max_bounces, 6, seed, 1);
              RngStream rng(seed, index);
              const SampleResult r = sample(dir(wi), p, fr, cfg, rng);
              return py::make_tuple(vec(r.w_o), rgb(r.weight), r.bounces);
          },
          py::arg("w_i"), py::arg("surface"), py::arg("fresnel") = FresnelSpec::none(), py::arg("seed") = 0,
          py::arg("index") = 0, py::arg("max_bounces") = 16,
          "One random walk; returns (w_o, weight, bounces).");

    m.def("pdf", [](const Vec& wi, const Vec& wo, const MicrosurfaceParams& p) { return pdf(dir(wi), dir(wo), p); });

    m.def("furnace_test",
          [](const Vec& wi, const MicrosurfaceParams& p, std::uint64_t samples, std::uint64_t seed, unsigned threads) {
              const auto cfg = make_config(samples, 16, 6, seed, threads);
              py::gil_scoped_release release;
              return furnace_test(dir(wi), p, cfg);
          },
          py::arg("w_i"), py::arg("surface"), py::arg("samples") = 100000, py::arg("seed") = 0,
          py::arg("threads") = 1);

    py::class_<RhoOracle>(m, "RhoOracle")
        .def(py::init([](const MicrosurfaceParams& p, const FresnelSpec& fr, int n_theta, int n_phi) {
                 py::gil_scoped_release release;
                 return RhoOracle(p, fr, DirectionGrid(n_theta, n_phi));
             }),
             py::arg("surface"), py::arg("fresnel") = FresnelSpec::none(), py::arg("n_theta") = 32,
             py::arg("n_phi") = 64)
        .def("rho", &RhoOracle::rho, py::arg("theta_i"), py::arg("theta_o"), py::arg("delta_phi"))
        .def("albedo", &RhoOracle::albedo, py::arg("theta_i"))
        .def("band_average", &RhoOracle::band_average)
        .def_property_readonly("iterations", [](const RhoOracle& o) { return o.table().iterations; })
        .def_property_readonly("residual", [](const RhoOracle& o) { return o.table().residual; });

    py::class_<EvalResult>(m, "EvalResult")
        .def_property_readonly("value", [](const EvalResult& r) { return rgb(r.value); })
        .def_property_readonly("stderr", [](const EvalResult& r) { return rgb(r.standard_error()); })
        .def_property_readonly("mean_bounces", [](const EvalResult& r) { return r.mean_bounces; })
        .def_property_readonly("samples", [](const EvalResult& r) { return r.samples; })
        .def("as_dict", &to_dict);
}
