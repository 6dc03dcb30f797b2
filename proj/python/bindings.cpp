// Python bindings for the core operations: transforms, reference solvers,
// the model forward/step path, metrics and the dataset format.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pefnn/fft.hpp"
#include "pefnn/io.hpp"
#include "pefnn/metrics.hpp"
#include "pefnn/solvers.hpp"

namespace py = pybind11;
using namespace pefnn;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using CArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;

// accepts (h,w), (c,h,w) or (b,c,h,w)
Field field_from_array(const DArray& arr) {
    const auto n = arr.ndim();
    int b = 1, c = 1, h, w;
    if (n == 2) {
        h = static_cast<int>(arr.shape(0));
        w = static_cast<int>(arr.shape(1));
    } else if (n == 3) {
        c = static_cast<int>(arr.shape(0));
        h = static_cast<int>(arr.shape(1));
        w = static_cast<int>(arr.shape(2));
    } else if (n == 4) {
        b = static_cast<int>(arr.shape(0));
        c = static_cast<int>(arr.shape(1));
        h = static_cast<int>(arr.shape(2));
        w = static_cast<int>(arr.shape(3));
    } else {
        throw ShapeMismatch("expected a 2d, 3d or 4d array");
    }
    Field f(b, c, h, w);
    std::copy(arr.data(), arr.data() + f.size(), f.data.begin());
    return f;
}

DArray field_to_array(const Field& f, py::ssize_t ndim = 4) {
    DArray out;
    if (ndim == 2 && f.b == 1 && f.c == 1)
        out = DArray({static_cast<py::ssize_t>(f.h), static_cast<py::ssize_t>(f.w)});
    else
        out = DArray({static_cast<py::ssize_t>(f.b), static_cast<py::ssize_t>(f.c),
                      static_cast<py::ssize_t>(f.h), static_cast<py::ssize_t>(f.w)});
    std::copy(f.data.begin(), f.data.end(), out.mutable_data());
    return out;
}

DArray trajectory_to_array(const Trajectory& traj) {
    DArray out({static_cast<py::ssize_t>(traj.t), static_cast<py::ssize_t>(traj.c),
                static_cast<py::ssize_t>(traj.h), static_cast<py::ssize_t>(traj.w)});
    std::copy(traj.data.begin(), traj.data.end(), out.mutable_data());
    return out;
}

Trajectory trajectory_from_array(const DArray& arr, double dt_record, double dx) {
    if (arr.ndim() != 4) throw ShapeMismatch("trajectory array must be (t, c, h, w)");
    Trajectory traj(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
                    static_cast<int>(arr.shape(2)), static_cast<int>(arr.shape(3)));
    traj.dt_record = dt_record;
    traj.dx = traj.dy = dx;
    std::copy(arr.data(), arr.data() + traj.data.size(), traj.data.begin());
    return traj;
}

ModelConfig config_from_kwargs(int n_layers, int d_z, int m, const std::string& kernel,
                               int d_g, int in_channels, int out_channels, double dt,
                               const std::string& integrator, int pad,
                               const std::string& activation, double fusion_scale) {
    ModelConfig cfg;
    cfg.n_layers = n_layers;
    cfg.d_z = d_z;
    cfg.m = m;
    cfg.kernel_mode = kernel_mode_from_name(kernel);
    cfg.d_g = d_g;
    cfg.in_channels = in_channels;
    cfg.out_channels = out_channels;
    cfg.dt = dt;
    cfg.integrator = integrator_from_name(integrator);
    cfg.pad = pad;
    cfg.activation = activation_from_name(activation);
    cfg.fusion_scale = fusion_scale;
    cfg.validate();
    return cfg;
}

} // namespace

PYBIND11_MODULE(_pefnn, mod) {
    mod.doc() = "momentum-conserving spectral PDE surrogate toolkit";

    mod.def(
        "fft2",
        [](const DArray& arr) {
            Field f = field_from_array(arr);
            ComplexField F = fft2(f);
            CArray out({static_cast<py::ssize_t>(F.b), static_cast<py::ssize_t>(F.c),
                        static_cast<py::ssize_t>(F.h), static_cast<py::ssize_t>(F.w)});
            std::copy(F.data.begin(), F.data.end(), out.mutable_data());
            return out;
        },
        py::arg("field"), "unnormalized forward 2D DFT over the trailing two axes");

    mod.def(
        "ifft2",
        [](const CArray& arr) {
            if (arr.ndim() != 4) throw ShapeMismatch("expected (b, c, h, w)");
            ComplexField F(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
                           static_cast<int>(arr.shape(2)), static_cast<int>(arr.shape(3)));
            std::copy(arr.data(), arr.data() + F.size(), F.data.begin());
            return field_to_array(ifft2(F));
        },
        py::arg("spectrum"),
        "normalized inverse 2D DFT; raises on non-Hermitian imaginary residue");

    mod.def(
        "grf_sample",
        [](int n, double alpha, double tau, std::uint64_t seed) {
            NSConfig cfg;
            cfg.n = n;
            cfg.alpha_grf = alpha;
            cfg.tau_grf = tau;
            cfg.seed = seed;
            return field_to_array(grf_sample(cfg), 2);
        },
        py::arg("n"), py::arg("alpha") = 2.5, py::arg("tau") = 7.0, py::arg("seed") = 0,
        "periodic Gaussian random field with (|k|^2 + tau^2)^(-alpha) amplitude");

    mod.def(
        "ns_solve",
        [](const DArray& w0, double viscosity, double horizon, double record_dt,
           double forcing_amplitude, double cfl) {
            Field f = field_from_array(w0);
            NSConfig cfg;
            cfg.n = f.h;
            cfg.viscosity = viscosity;
            cfg.horizon = horizon;
            cfg.record_dt = record_dt;
            cfg.forcing_amplitude = forcing_amplitude;
            cfg.cfl_safety = cfl;
            return trajectory_to_array(ns_solve(f, cfg));
        },
        py::arg("w0"), py::arg("viscosity") = 1e-3, py::arg("horizon") = 10.0,
        py::arg("record_dt") = 1.0, py::arg("forcing_amplitude") = 0.1,
        py::arg("cfl") = 0.5, "pseudo-spectral vorticity solver on the periodic unit square");

    mod.def(
        "swe_dambreak",
        [](int n, int records, double t_end, double gravity, double dam_radius) {
            SWEConfig cfg;
            cfg.n = n;
            cfg.records = records;
            cfg.t_end = t_end;
            cfg.gravity = gravity;
            cfg.dam_radius = dam_radius;
            return trajectory_to_array(swe_dambreak_solve(cfg));
        },
        py::arg("n") = 32, py::arg("records") = 25, py::arg("t_end") = 1.0,
        py::arg("gravity") = 1.0, py::arg("dam_radius") = 0.5,
        "finite-volume radial dam break with reflective walls");

    mod.def(
        "make_synthetic_dem",
        [](const std::string& kind, int n, std::uint64_t seed) {
            return field_to_array(make_synthetic_dem(kind, n, seed), 2);
        },
        py::arg("kind"), py::arg("n"), py::arg("seed") = 0);

    mod.def(
        "flood_solve",
        [](const DArray& dem, double dx, double manning, double rain_rate,
           double rain_end, double horizon, double record_every, double theta,
           double alpha, bool open_boundaries) {
            FloodConfig cfg;
            cfg.dem = field_from_array(dem);
            cfg.dx = dx;
            cfg.theta = theta;
            cfg.alpha = alpha;
            cfg.horizon = horizon;
            cfg.record_every = record_every;
            cfg.open_boundaries = open_boundaries;
            cfg.manning = Field(1, 1, cfg.dem.h, cfg.dem.w);
            for (auto& v : cfg.manning.data) v = manning;
            if (rain_rate > 0.0) {
                cfg.rain = Field(1, 1, cfg.dem.h, cfg.dem.w);
                for (auto& v : cfg.rain.data) v = rain_rate;
                cfg.rain_end = rain_end;
            }
            return trajectory_to_array(flood_solve(cfg));
        },
        py::arg("dem"), py::arg("dx") = 480.0, py::arg("manning") = 0.05,
        py::arg("rain_rate") = 0.0, py::arg("rain_end") = 1e300,
        py::arg("horizon") = 3600.0, py::arg("record_every") = 30.0,
        py::arg("theta") = 0.7, py::arg("alpha") = 0.7, py::arg("open_boundaries") = false,
        "local-inertial staggered-grid flood solver");

    mod.def(
        "l_rmse",
        [](const DArray& pred, const DArray& truth) {
            return l_rmse(field_from_array(pred), field_from_array(truth));
        },
        py::arg("pred"), py::arg("truth"));

    mod.def(
        "momentum_loss",
        [](const DArray& pred, const DArray& truth) {
            return momentum_loss(field_from_array(pred), field_from_array(truth));
        },
        py::arg("pred"), py::arg("truth"));

    mod.def(
        "write_dataset",
        [](const std::string& path, const std::vector<DArray>& trajectories, bool f64,
           double dt_record, double dx) {
            Dataset data;
            for (const auto& arr : trajectories)
                data.push_back(trajectory_from_array(arr, dt_record, dx));
            write_dataset(path, data, f64);
        },
        py::arg("path"), py::arg("trajectories"), py::arg("f64") = false,
        py::arg("dt_record") = 1.0, py::arg("dx") = 1.0);

    mod.def(
        "read_dataset",
        [](const std::string& path) {
            Dataset data = read_dataset(path);
            py::list out;
            for (const auto& traj : data) out.append(trajectory_to_array(traj));
            return out;
        },
        py::arg("path"));

    py::class_<Model>(mod, "Model")
        .def(py::init([](int n_layers, int d_z, int m, const std::string& kernel, int d_g,
                         int in_channels, int out_channels, double dt,
                         const std::string& integrator, int pad,
                         const std::string& activation, double fusion_scale) {
                 return Model(config_from_kwargs(n_layers, d_z, m, kernel, d_g, in_channels,
                                                 out_channels, dt, integrator, pad,
                                                 activation, fusion_scale));
             }),
             py::arg("n_layers") = 4, py::arg("d_z") = 10, py::arg("m") = 12,
             py::arg("kernel") = "single", py::arg("d_g") = 1, py::arg("in_channels") = 1,
             py::arg("out_channels") = 1, py::arg("dt") = 1.0,
             py::arg("integrator") = "euler", py::arg("pad") = 0,
             py::arg("activation") = "gelu", py::arg("fusion_scale") = 1.0)
        .def("init_params", &Model::init_params, py::arg("seed"))
        .def("n_params", [](const Model& m) { return m.params().size(); })
        .def("get_params",
             [](const Model& m) {
                 DArray out(static_cast<py::ssize_t>(m.params().size()));
                 std::copy(m.params().values.begin(), m.params().values.end(),
                           out.mutable_data());
                 return out;
             })
        .def("set_params",
             [](Model& m, const DArray& values) {
                 if (static_cast<std::size_t>(values.size()) != m.params().size())
                     throw ShapeMismatch("parameter vector size mismatch");
                 std::copy(values.data(), values.data() + values.size(),
                           m.params().values.begin());
             })
        .def("fhat",
             [](const Model& m, const DArray& u) { return field_to_array(m.fhat(field_from_array(u))); },
             py::arg("u"), "nonlinear right-hand side F_hat(u)")
        .def("step",
             [](const Model& m, const DArray& u) { return field_to_array(m.step(field_from_array(u))); },
             py::arg("u"), "one explicit time step")
        .def("rollout",
             [](const Model& m, const DArray& u0, int steps) {
                 Field u = field_from_array(u0);
                 py::list out;
                 for (int s = 0; s < steps; ++s) {
                     u = m.step(u);
                     out.append(field_to_array(u));
                 }
                 return out;
             },
             py::arg("u0"), py::arg("steps"))
        .def("save",
             [](const Model& m, const std::string& path) { save_checkpoint(path, m); },
             py::arg("path"))
        .def_static("load", [](const std::string& path) {
            return model_from_checkpoint(load_checkpoint(path));
        });

    mod.def(
        "train_markov",
        [](Model& model, const std::vector<DArray>& trajectories, int epochs,
           int batch_size, double lr0, double weight_decay, std::uint64_t seed) {
            Dataset data;
            for (const auto& arr : trajectories)
                data.push_back(trajectory_from_array(arr, 1.0, 1.0));
            TrainConfig cfg;
            cfg.strategy = Strategy::Markov;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.lr0 = lr0;
            cfg.weight_decay = weight_decay;
            cfg.seed = seed;
            TrainHistory h = train_markov(model, data, nullptr, cfg);
            py::list out;
            for (const auto& e : h.epochs)
                out.append(py::make_tuple(e.epoch, e.lr, e.train_loss, e.valid_loss));
            return out;
        },
        py::arg("model"), py::arg("trajectories"), py::arg("epochs") = 10,
        py::arg("batch_size") = 8, py::arg("lr0") = 1e-3, py::arg("weight_decay") = 1e-4,
        py::arg("seed") = 0, "one-step-ahead supervised training");

    py::register_exception<ModeOverflow>(mod, "ModeOverflowError");
    py::register_exception<NonFinite>(mod, "NonFiniteError");
    py::register_exception<ImaginaryResidue>(mod, "ImaginaryResidueError");
    py::register_exception<DataError>(mod, "DataFormatError");
}
