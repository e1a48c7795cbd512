#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tmkt/cli.hpp"
#include "tmkt/errors.hpp"
#include "tmkt/objectives.hpp"
#include "tmkt/tsm_sampler.hpp"
#include "tmkt/variance_lab.hpp"

namespace py = pybind11;
using namespace tmkt;

PYBIND11_MODULE(_tmkt, m) {
  m.doc() = "Temporal mixing sampler, variance lab and CLI entry point";

  static py::exception<Error> tmkt_error(m, "TmktError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = std::string(category_name(e.category())) + ": " + e.what();
      py::set_error(tmkt_error, msg.c_str());
    }
  });

  py::enum_<tsm::MixMode>(m, "MixMode")
      .value("UNCONDITIONAL", tsm::MixMode::Unconditional)
      .value("CONDITIONAL", tsm::MixMode::Conditional);

  m.def("solve_p", &tsm::solve_p, py::arg("timesteps"), py::arg("ratio"),
        py::arg("mode") = tsm::MixMode::Unconditional);
  m.def("expected_replaced", &tsm::expected_replaced, py::arg("timesteps"), py::arg("p"),
        py::arg("mode") = tsm::MixMode::Unconditional);
  m.def("conditional_lower_bound", &tsm::conditional_lower_bound, py::arg("timesteps"));
  m.def("t_star_pmf", &tsm::t_star_pmf, py::arg("timesteps"), py::arg("p"),
        py::arg("mode") = tsm::MixMode::Unconditional);
  m.def(
      "t_star_histogram",
      [](int timesteps, double ratio, tsm::MixMode mode, std::int64_t draws, std::uint64_t seed) {
        const auto spec = tsm::make_mix_spec(timesteps, ratio, mode);
        return tsm::t_star_histogram(spec, draws, seed);
      },
      py::arg("timesteps"), py::arg("ratio"), py::arg("mode") = tsm::MixMode::Unconditional,
      py::arg("draws") = 100000, py::arg("seed") = 0);

  m.def("linear_cka", &obj::linear_cka, py::arg("x"), py::arg("y"));

  py::class_<var::GradientModel>(m, "GradientModel")
      .def_readwrite("mu_a", &var::GradientModel::mu_a)
      .def_readwrite("mu_e", &var::GradientModel::mu_e)
      .def_readwrite("sigma_a", &var::GradientModel::sigma_a)
      .def_readwrite("sigma_e", &var::GradientModel::sigma_e)
      .def_readwrite("r_a", &var::GradientModel::r_a)
      .def_readwrite("r_e", &var::GradientModel::r_e)
      .def_readwrite("r_ae", &var::GradientModel::r_ae)
      .def_readwrite("alpha", &var::GradientModel::alpha)
      .def_readwrite("timesteps", &var::GradientModel::timesteps)
      .def_readwrite("batch", &var::GradientModel::batch)
      .def("validate", &var::GradientModel::validate);

  m.def("random_model", &var::random_model, py::arg("dim"), py::arg("timesteps"), py::arg("batch"),
        py::arg("alpha"), py::arg("seed"));
  m.def("analytic_mean", &var::analytic_mean);
  m.def("analytic_cov_tsm", &var::analytic_cov_tsm);
  m.def("analytic_cov_bm", &var::analytic_cov_bm);
  m.def("cov_difference", [](const var::GradientModel& model) {
    const auto d = var::cov_difference(model);
    py::dict out;
    out["trace_lhs"] = d.trace_lhs;
    out["trace_rhs"] = d.trace_rhs;
    out["min_eigenvalue"] = d.min_eigenvalue;
    return out;
  });

  // Same behaviour as the tmkt executable, minus the process boundary.
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli_dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
