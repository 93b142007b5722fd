#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "transport/cli.hpp"
#include "transport/error.hpp"
#include "transport/estimators.hpp"
#include "transport/simulation.hpp"

namespace py = pybind11;
using namespace transport;

namespace {

Dataset make_dataset(const Eigen::VectorXi& s, const Eigen::VectorXi& a, Eigen::VectorXd y,
                     const Eigen::MatrixXd& w, std::vector<std::string> names) {
  if (names.empty())
    for (Index j = 0; j < w.cols(); ++j) names.push_back("w" + std::to_string(j));
  std::vector<bool> missing(static_cast<std::size_t>(s.size()));
  for (Index i = 0; i < s.size() && i < y.size(); ++i) {
    missing[static_cast<std::size_t>(i)] = s[i] == 0;
    if (s[i] == 0) y[i] = std::nan("");
  }
  return Dataset(s, a, std::move(y), std::move(missing), w, std::move(names));
}

DgmSpec dgm(int id, std::optional<double> noise_sd) {
  DgmSpec spec = builtin_dgm(id);
  return noise_sd ? with_noise_sd(spec, *noise_sd) : spec;
}

IndexSet columns(const Dataset& ds, const std::vector<std::string>& names) {
  return ds.columns(names);
}

py::dict to_dict(const Estimate& e) {
  py::dict d;
  d["estimand"] = to_string(e.estimand);
  d["point"] = e.point;
  d["plug_in"] = e.plug_in;
  d["se"] = e.se;
  d["ci95"] = py::make_tuple(e.ci95.lo, e.ci95.hi);
  d["eif"] = e.eif;
  d["selected_v"] = e.selected_v;
  d["selected_z"] = e.selected_z;
  py::dict diag;
  diag["folds"] = e.diagnostics.folds;
  diag["clipped"] = e.diagnostics.clipped;
  diag["learner_choices"] = e.diagnostics.learner_choices;
  diag["warnings"] = e.diagnostics.warnings;
  diag["constant_cate_fallback"] = e.diagnostics.constant_cate_fallback;
  d["diagnostics"] = diag;
  return d;
}

py::dict estimate(const Dataset& ds, const std::string& estimator,
                  const std::vector<std::string>& v, const std::vector<std::string>& z, int folds,
                  std::uint64_t seed, std::pair<double, double> clip, bool interpretable,
                  const std::string& config) {
  const Estimand est = parse_estimand(estimator);
  EstimatorOptions opt;
  if (!config.empty()) opt.learners = parse_learner_config(config);
  opt.folds = make_folds(ds.n(), folds, seed);
  opt.clip_lo = clip.first;
  opt.clip_hi = clip.second;
  opt.interpretable = interpretable;
  SubsetSpec sub{columns(ds, v), columns(ds, z), {}};
  Estimate e;
  {
    py::gil_scoped_release release;
    TransportEstimator ctx(ds, opt);
    e = ctx.run(est, &sub);
  }
  return to_dict(e);
}

py::list simulate(int id, Index n, int reps, const std::vector<std::string>& estimators,
                  int folds, std::uint64_t seed, int jobs, std::optional<double> noise_sd,
                  bool rel_eff, bool interpretable, bool oracle) {
  MonteCarloConfig cfg;
  cfg.spec = dgm(id, noise_sd);
  cfg.n = n;
  cfg.reps = reps;
  cfg.estimators.clear();
  for (const auto& e : estimators) cfg.estimators.push_back(parse_estimand(e));
  cfg.folds = folds;
  cfg.seed = seed;
  cfg.jobs = jobs;
  cfg.rel_eff = rel_eff;
  cfg.interpretable = interpretable;
  cfg.oracle = oracle;
  MonteCarloResult r;
  {
    py::gil_scoped_release release;
    r = run_monte_carlo(cfg);
  }
  py::list rows;
  for (const auto& m : r.rows) {
    py::dict d;
    d["estimator"] = m.estimator;
    d["n"] = m.n;
    d["truth"] = m.truth;
    d["mean"] = m.mean_point;
    d["abs_bias"] = m.abs_bias;
    d["mc_se"] = m.mc_se;
    d["coverage95"] = m.coverage95;
    d["n_times_var"] = m.n_times_var;
    d["mean_est_var"] = m.mean_est_var;
    d["rel_eff"] = m.rel_eff;
    d["replications"] = m.replications;
    d["failures"] = m.failures;
    rows.append(d);
  }
  return rows;
}

py::dict bounds(int id, std::optional<double> noise_sd) {
  const BoundsResult b = efficiency_bounds(dgm(id, noise_sd));
  py::dict d;
  d["bound_lambda"] = b.bound_lambda;
  d["bound_theta"] = b.bound_theta;
  d["q"] = b.q;
  d["eif_variance_lambda"] = b.eif_variance_lambda;
  d["eif_variance_theta"] = b.eif_variance_theta;
  py::list tau2;
  for (const auto& row : b.tau2) {
    py::dict r;
    r["x"] = row.x;
    r["prob"] = row.prob;
    r["e_s"] = row.e_s;
    r["tau2"] = row.tau2;
    tau2.append(r);
  }
  d["tau2"] = tau2;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "One-step estimators of the transported average treatment effect";

  auto base = py::register_exception<Error>(m, "TransportError", PyExc_RuntimeError);
  py::register_exception<ArgumentError>(m, "ArgumentError", base);
  py::register_exception<ValidationError>(m, "ValidationError", base);
  py::register_exception<SchemaError>(m, "SchemaError", base);
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base);
  py::register_exception<FoldError>(m, "FoldError", base);
  py::register_exception<PreconditionError>(m, "PreconditionError", base);
  py::register_exception<InferenceError>(m, "InferenceError", base);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("s"), py::arg("a"), py::arg("y"), py::arg("w"),
           py::arg("names") = std::vector<std::string>{},
           "Outcomes on rows with s == 0 are ignored.")
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("p", &Dataset::p)
      .def_property_readonly("n_source", &Dataset::n_source)
      .def_property_readonly("n_target", &Dataset::n_target)
      .def_property_readonly("s", &Dataset::s)
      .def_property_readonly("a", &Dataset::a)
      .def_property_readonly("y", &Dataset::y)
      .def_property_readonly("w", &Dataset::w)
      .def_property_readonly("names", &Dataset::column_names)
      .def("mask_target_columns",
           [](const Dataset& ds, const std::vector<std::string>& names) {
             return ds.mask_target_columns(ds.columns(names));
           },
           py::arg("names"))
      .def("to_csv", [](const Dataset& ds) { return to_csv(ds); })
      .def("__len__", &Dataset::n);

  m.def("load_csv",
        [](const std::string& path, const std::string& schema_json) {
          return load_csv(path, parse_schema(schema_json));
        },
        py::arg("path"), py::arg("schema_json"));

  m.def("sample_dgm",
        [](int id, Index n, std::uint64_t seed, std::optional<double> noise_sd) {
          return sample_dgm(dgm(id, noise_sd), n, seed);
        },
        py::arg("dgm"), py::arg("n"), py::arg("seed"), py::arg("noise_sd") = py::none());

  m.def("true_value",
        [](int id, std::optional<double> noise_sd) { return true_value(dgm(id, noise_sd)); },
        py::arg("dgm"), py::arg("noise_sd") = py::none());

  m.def("estimate", &estimate, py::arg("data"), py::arg("estimator"),
        py::arg("v") = std::vector<std::string>{}, py::arg("z") = std::vector<std::string>{},
        py::arg("folds") = 5, py::arg("seed") = 1,
        py::arg("clip") = std::make_pair(0.01, 0.99), py::arg("interpretable") = false,
        py::arg("config") = std::string{});

  m.def("simulate", &simulate, py::arg("dgm"), py::arg("n"), py::arg("reps"),
        py::arg("estimators") = std::vector<std::string>{"lambda", "theta"}, py::arg("folds") = 5,
        py::arg("seed") = 1, py::arg("jobs") = 1, py::arg("noise_sd") = py::none(),
        py::arg("rel_eff") = true, py::arg("interpretable") = false, py::arg("oracle") = false);

  m.def("efficiency_bounds", &bounds, py::arg("dgm"), py::arg("noise_sd") = py::none());

  m.def("eif_inference",
        [](const Eigen::VectorXd& eif, double point) {
          const Inference inf = eif_inference(eif, point);
          return py::make_tuple(inf.se, py::make_tuple(inf.ci95.lo, inf.ci95.hi));
        },
        py::arg("eif"), py::arg("point"));

  m.def("pseudo_outcome_T", &pseudo_outcome_T, py::arg("a"), py::arg("y"), py::arg("m1"),
        py::arg("m0"), py::arg("e_a"));
  m.def("pseudo_outcome_U", &pseudo_outcome_U, py::arg("s"), py::arg("f_hat"),
        py::arg("ef_z_s1"), py::arg("e_s_z"));
}
