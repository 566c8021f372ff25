#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "nlsa/adiabatic.hpp"
#include "nlsa/dynamics.hpp"
#include "nlsa/errors.hpp"
#include "nlsa/geometry.hpp"
#include "nlsa/model.hpp"
#include "nlsa/stationary.hpp"

namespace py = pybind11;
using namespace nlsa;

namespace {

ProjectiveCoords coords_of(const RVector& Q, const RVector& P) { return ProjectiveCoords{Q, P}; }

// Trajectory as a dict of arrays; Q and P are (samples, N - 1).
py::dict trajectory_dict(const Trajectory& tr) {
    const Eigen::Index n = static_cast<Eigen::Index>(tr.size());
    const Eigen::Index m = n ? tr.coords[0].Q.size() : 0;
    RVector t(n), R(n), lambda(n), aa(n), dyn(n), energy(n);
    RMatrix Q(n, m), P(n, m);
    CMatrix psi(n, m + 1);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto i = static_cast<std::size_t>(k);
        t[k] = tr.times[i];
        R[k] = tr.R[i];
        lambda[k] = tr.ledger[i].lambda;
        aa[k] = tr.ledger[i].aa_integrand_accum;
        dyn[k] = tr.ledger[i].dynamical_accum;
        energy[k] = tr.energies[i];
        Q.row(k) = tr.coords[i].Q.transpose();
        P.row(k) = tr.coords[i].P.transpose();
        psi.row(k) = tr.states[i].amplitudes().transpose();
    }
    py::dict d;
    d["t"] = t;
    d["R"] = R;
    d["Q"] = Q;
    d["P"] = P;
    d["psi"] = psi;
    d["lambda"] = lambda;
    d["aa_accum"] = aa;
    d["dynamical_accum"] = dyn;
    d["energy"] = energy;
    d["max_norm_drift"] = tr.max_norm_drift;
    d["final_norm_error"] = tr.final_norm_error;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Nonlinear adiabatic evolution: fixed points, orbits, sweeps.";

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidParameter>(m, "InvalidParameter", PyExc_ValueError);
    py::register_exception<NotPeriodic>(m, "NotPeriodic", error.ptr());
    py::register_exception<NotClosed>(m, "NotClosed", error.ptr());
    py::register_exception<NotStationary>(m, "NotStationary", error.ptr());
    py::register_exception<StepCollapse>(m, "StepCollapse", error.ptr());
    py::register_exception<EndpointsNotLinear>(m, "EndpointsNotLinear", error.ptr());
    py::register_exception<LabelNotFound>(m, "LabelNotFound", error.ptr());
    py::register_exception<UnsupportedTopology>(m, "UnsupportedTopology", error.ptr());

    py::class_<StateVector>(m, "StateVector")
        .def(py::init([](const CVector& a) { return StateVector::normalized(a); }), py::arg("amplitudes"),
             "Normalizes the amplitudes.")
        .def_property_readonly("amplitudes", &StateVector::amplitudes)
        .def_property_readonly("levels", &StateVector::levels)
        .def("population", &StateVector::population)
        .def("__repr__", [](const StateVector& s) { return "StateVector(levels=" + std::to_string(s.levels()) + ")"; });

    py::class_<ProjectiveCoords>(m, "ProjectiveCoords")
        .def(py::init(&coords_of), py::arg("Q"), py::arg("P"))
        .def_readwrite("Q", &ProjectiveCoords::Q)
        .def_readwrite("P", &ProjectiveCoords::P);

    m.def("reduce", [](const StateVector& s) { return reduce(s).coords; }, "Chart coordinates (gauge: last level).");
    m.def("reconstruct", [](const ProjectiveCoords& c, double phase) { return reconstruct(c, phase); },
          py::arg("coords"), py::arg("phase") = 0.0);
    m.def("projective_distance", &projective_distance);

    py::class_<Model, std::shared_ptr<Model>>(m, "Model")
        .def_property_readonly("levels", &Model::levels)
        .def_property_readonly("name", &Model::name)
        .def("total_energy", py::overload_cast<const StateVector&, double>(&Model::total_energy, py::const_))
        .def("apply", py::overload_cast<const StateVector&, double>(&Model::apply, py::const_))
        .def("classical_hamiltonian", &Model::classical_hamiltonian)
        .def("linear_reference", &Model::linear_reference);

    py::class_<TwoLevelModel, Model, std::shared_ptr<TwoLevelModel>>(m, "TwoLevelModel")
        .def(py::init<double, double>(), py::arg("c"), py::arg("v") = 1.0)
        .def_property_readonly("c", &TwoLevelModel::c)
        .def_property_readonly("v", &TwoLevelModel::v)
        .def("hamiltonian", &TwoLevelModel::hamiltonian, py::arg("q"), py::arg("p"), py::arg("R"));

    py::class_<LinearModel, Model, std::shared_ptr<LinearModel>>(m, "LinearModel")
        .def(py::init<CMatrix, CMatrix>(), py::arg("h0"), py::arg("h1"))
        .def("matrix", &LinearModel::matrix);

    py::class_<IntegratorConfig>(m, "IntegratorConfig")
        .def(py::init<>())
        .def_readwrite("rtol", &IntegratorConfig::rtol)
        .def_readwrite("atol", &IntegratorConfig::atol)
        .def_readwrite("renormalize", &IntegratorConfig::renormalize);

    m.def(
        "evolve",
        [](const StateVector& s, const Model& model, double t1, double R, double alpha, double dt,
           const IntegratorConfig& cfg) {
            const Schedule sch = alpha == 0.0 ? constant_schedule(R) : linear_ramp(R, alpha);
            const RecordOptions rec = dt > 0 ? RecordOptions{RecordMode::uniform, dt} : RecordOptions{};
            return trajectory_dict(evolve_quantum(s, model, sch, 0.0, t1, cfg, rec));
        },
        py::arg("state"), py::arg("model"), py::arg("t1"), py::arg("R") = 0.0, py::arg("alpha") = 0.0,
        py::arg("dt") = 0.0, py::arg("config") = IntegratorConfig{},
        "Quantum evolution over [0, t1] with R(t) = R + alpha t.");
    m.def(
        "evolve_classical",
        [](const ProjectiveCoords& c, const Model& model, double t1, double R, double alpha, double dt,
           const IntegratorConfig& cfg) {
            const Schedule sch = alpha == 0.0 ? constant_schedule(R) : linear_ramp(R, alpha);
            const RecordOptions rec = dt > 0 ? RecordOptions{RecordMode::uniform, dt} : RecordOptions{};
            return trajectory_dict(evolve_classical(c, model, sch, 0.0, t1, cfg, rec));
        },
        py::arg("coords"), py::arg("model"), py::arg("t1"), py::arg("R") = 0.0, py::arg("alpha") = 0.0,
        py::arg("dt") = 0.0, py::arg("config") = IntegratorConfig{});
    m.def("find_period", &find_period, py::arg("state"), py::arg("model"), py::arg("R"),
          py::arg("config") = IntegratorConfig{}, py::arg("max_time") = 1000.0);

    py::class_<FixedPoint>(m, "FixedPoint")
        .def_readonly("coords", &FixedPoint::coords)
        .def_readonly("R", &FixedPoint::R)
        .def_readonly("eigenvalues", &FixedPoint::eigenvalues)
        .def_property_readonly("stability", [](const FixedPoint& f) { return to_string(f.stability); })
        .def_readonly("omega", &FixedPoint::omega)
        .def_readonly("kappa", &FixedPoint::kappa)
        .def_readonly("chemical_potential", &FixedPoint::chemical_potential)
        .def_readonly("total_energy", &FixedPoint::total_energy)
        .def_readonly("label", &FixedPoint::label)
        .def("state", &FixedPoint::state)
        .def("__repr__", [](const FixedPoint& f) {
            return "FixedPoint(" + f.label + ", " + to_string(f.stability) + ", R=" + std::to_string(f.R) + ")";
        });

    m.def("find_fixed_points", [](const Model& model, double R) { return find_fixed_points(model, R); },
          py::arg("model"), py::arg("R"));
    m.def(
        "assign_labels",
        [](std::vector<FixedPoint> pts) {
            assign_labels(pts);
            return pts;
        },
        "Returns the points labelled f1, f2, ...");
    m.def("classify", [](const Model& model, const ProjectiveCoords& c, double R) { return classify(model, c, R); },
          py::arg("model"), py::arg("coords"), py::arg("R"));
    m.def("locate_label", &locate_label, py::arg("model"), py::arg("label"), py::arg("R"), py::arg("R_ref") = -0.05);

    py::class_<ContinuationOptions>(m, "ContinuationOptions")
        .def(py::init<>())
        .def_readwrite("R_min", &ContinuationOptions::R_min)
        .def_readwrite("R_max", &ContinuationOptions::R_max)
        .def_readwrite("R_ref", &ContinuationOptions::R_ref)
        .def_readwrite("ds", &ContinuationOptions::ds)
        .def_readwrite("ds_max", &ContinuationOptions::ds_max);
    py::class_<TurningPoint>(m, "TurningPoint")
        .def_readonly("R", &TurningPoint::R)
        .def_readonly("coords", &TurningPoint::coords)
        .def_readonly("total_energy", &TurningPoint::total_energy)
        .def_readonly("chemical_potential", &TurningPoint::chemical_potential);
    py::class_<Branch>(m, "Branch")
        .def_readonly("label", &Branch::label)
        .def_property_readonly("stability", [](const Branch& b) { return to_string(b.stability); })
        .def_readonly("points", &Branch::points);
    py::class_<BranchDiagram>(m, "BranchDiagram")
        .def_readonly("branches", &BranchDiagram::branches)
        .def_readonly("turning_points", &BranchDiagram::turning_points);
    m.def("continue_branches", &continue_branches, py::arg("model"), py::arg("options") = ContinuationOptions{});

    py::class_<Orbit>(m, "Orbit")
        .def_readonly("R", &Orbit::R)
        .def_readonly("tau", &Orbit::tau)
        .def_readonly("omega", &Orbit::omega)
        .def_readonly("action", &Orbit::action)
        .def_readonly("aa_phase", &Orbit::aa_phase)
        .def_readonly("aa_phase_canonical", &Orbit::aa_phase_canonical)
        .def_readonly("winding", &Orbit::winding)
        .def_property_readonly("kind", [](const Orbit& o) { return to_string(o.kind); })
        .def_property_readonly("trajectory", [](const Orbit& o) { return trajectory_dict(o.trajectory); });
    m.def("trace_orbit", [](const Model& model, const StateVector& s, double R) { return trace_orbit(model, s, R); },
          py::arg("model"), py::arg("state"), py::arg("R"));

    py::class_<SweepSpec>(m, "SweepSpec")
        .def(py::init([](double R0, double R1, double alpha, double upper, double phase, std::size_t gamma_samples) {
                 SweepSpec s;
                 s.R0 = R0;
                 s.R1 = R1;
                 s.alpha = alpha;
                 s.gamma_samples = gamma_samples;
                 s.initial = InitialCondition::upper_level(upper, phase);
                 return s;
             }),
             py::arg("R0") = -10.0, py::arg("R1") = 10.0, py::arg("alpha") = 1e-4, py::arg("upper") = 0.0,
             py::arg("phase") = 0.0, py::arg("gamma_samples") = 400)
        .def_readwrite("R0", &SweepSpec::R0)
        .def_readwrite("R1", &SweepSpec::R1)
        .def_readwrite("alpha", &SweepSpec::alpha)
        .def_readwrite("gamma_samples", &SweepSpec::gamma_samples)
        .def_readwrite("sample_dt", &SweepSpec::sample_dt)
        .def_readwrite("omega_floor", &SweepSpec::omega_floor);

    py::class_<SweepRecord>(m, "SweepRecord")
        .def_readonly("t", &SweepRecord::t)
        .def_readonly("R", &SweepRecord::R)
        .def_readonly("gamma_aa", &SweepRecord::gamma_aa)
        .def_readonly("omega", &SweepRecord::omega)
        .def_readonly("initial_populations", &SweepRecord::initial_populations)
        .def_readonly("final_populations", &SweepRecord::final_populations)
        .def_readonly("initial_action", &SweepRecord::initial_action)
        .def_readonly("final_action", &SweepRecord::final_action)
        .def_readonly("omega_min", &SweepRecord::omega_min)
        .def_readonly("omega_floor_hit", &SweepRecord::omega_floor_hit)
        .def_readonly("warnings", &SweepRecord::warnings)
        .def_readonly("tracked_label", &SweepRecord::tracked_label);
    m.def("sweep", &sweep, py::arg("model"), py::arg("spec"), py::arg("config") = IntegratorConfig{});

    py::class_<TunnelingReport>(m, "TunnelingReport")
        .def_readonly("probability", &TunnelingReport::probability)
        .def_readonly("action_change", &TunnelingReport::action_change)
        .def_readonly("gamma_jump", &TunnelingReport::gamma_jump)
        .def_readonly("jump_over_2pi", &TunnelingReport::jump_over_2pi);
    m.def("tunneling_probability", &tunneling_probability);

    py::class_<FollowingResult>(m, "FollowingResult")
        .def_property_readonly("verdict", [](const FollowingResult& f) { return to_string(f.verdict); })
        .def_readonly("R_break", &FollowingResult::R_break)
        .def_readonly("divergence_rate", &FollowingResult::divergence_rate);
    m.def(
        "eigenstate_following",
        [](const std::string& label, const Model& model, SweepSpec spec) {
            return eigenstate_following(label, model, spec);
        },
        py::arg("label"), py::arg("model"), py::arg("spec"));

    py::class_<LadderRow>(m, "LadderRow")
        .def_readonly("alpha", &LadderRow::alpha)
        .def_readonly("max_action_drift", &LadderRow::max_action_drift)
        .def_readonly("endpoint_drift", &LadderRow::endpoint_drift);
    py::class_<InvarianceReport>(m, "InvarianceReport")
        .def_readonly("rows", &InvarianceReport::rows)
        .def_readonly("monotone", &InvarianceReport::monotone)
        .def_readonly("order", &InvarianceReport::order);
    m.def("run_ladder", &run_ladder, py::arg("model"), py::arg("spec"), py::arg("alphas"),
          py::arg("config") = IntegratorConfig{});
    m.def("invariance_report", &invariance_report);
}
