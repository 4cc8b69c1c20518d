#include "ctnreg/dataio.hpp"
#include "ctnreg/dnn.hpp"
#include "ctnreg/error.hpp"
#include "ctnreg/linalg.hpp"
#include "ctnreg/mlr.hpp"
#include "ctnreg/optim.hpp"
#include "ctnreg/regularizers.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

namespace py = pybind11;
using namespace ctnreg;

namespace {

RegularizerKind kind_from(const std::string& name) {
  const auto kind = parse_regularizer_kind(name);
  if (!kind) throw Error(ErrorKind::kInvalidInput, "unknown regularizer '" + name + "'");
  return *kind;
}

// numpy arrays index the first axis slowest; DenseTensor stores the first
// index fastest, so go through Fortran order both ways.
DenseTensor tensor_from(const py::array_t<double, py::array::f_style | py::array::forcecast>& a) {
  std::vector<Index> shape(a.shape(), a.shape() + a.ndim());
  std::vector<double> entries(a.data(), a.data() + a.size());
  return DenseTensor(std::move(shape), std::move(entries));
}

py::array_t<double> tensor_to(const DenseTensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double, py::array::f_style> out(shape);
  std::copy(t.entries().begin(), t.entries().end(), out.mutable_data());
  return out;
}

py::dict report_dict(const FitReport& r) {
  py::dict d;
  d["stop_reason"] = std::string(to_string(r.stop_reason));
  d["iterations"] = r.iterations;
  d["objective_trajectory"] = r.objective_trajectory;
  d["final_grad_norm"] = r.final_grad_norm;
  d["evaluations"] = r.evaluations;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Coupled nuclear-norm regularization for logistic regression and small networks.";

  static py::exception<Error> error(m, "Error", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  // linear algebra
  m.def(
      "thin_svd",
      [](const Matrix& a, double tol) {
        ThinSvd s = thin_svd(a, tol);
        return py::make_tuple(s.u, s.singulars, s.v);
      },
      py::arg("a"), py::arg("rank_tolerance") = kDefaultRankTolerance,
      "Thin SVD (u, s, v) keeping singular values above rank_tolerance * s_max.");
  m.def("nuclear_norm", &nuclear_norm, py::arg("a"));
  m.def("nuclear_norm_subgrad", &nuclear_norm_subgrad, py::arg("a"));
  m.def(
      "unfold", [](const py::array_t<double, py::array::f_style | py::array::forcecast>& t,
                   std::size_t mode) { return mode_n_unfold(tensor_from(t), mode); },
      py::arg("tensor"), py::arg("mode"), "Mode-n unfolding, modes counted from 1.");
  m.def(
      "fold",
      [](const Matrix& a, std::size_t mode, const std::vector<Index>& shape) {
        return tensor_to(mode_n_fold(a, mode, shape));
      },
      py::arg("a"), py::arg("mode"), py::arg("shape"));
  m.def(
      "coupled_tensor_norm",
      [](const py::array_t<double, py::array::f_style | py::array::forcecast>& t, const Matrix& a,
         std::size_t mode) { return coupled_tensor_norm(tensor_from(t), a, mode); },
      py::arg("tensor"), py::arg("a"), py::arg("mode"));

  // regularizers
  m.def(
      "coupled_reg",
      [](const Matrix& x, const Matrix& w) {
        ValueAndGrad r = CoupledMlrRegularizer(x).value_and_grad(w);
        return py::make_tuple(r.value, r.grad);
      },
      py::arg("x"), py::arg("w"), "Value and gradient of ||[X, X W^T]||_*.");
  m.def(
      "concat_subgrad",
      [](const Matrix& x, const Matrix& xi) {
        ConcatSubgradient g = ConcatNuclearNorm(x).value_and_subgrad(xi);
        return py::make_tuple(g.value, g.subgrad);
      },
      py::arg("x"), py::arg("xi"), "Value and a subgradient of ||[X, xi]||_*.");
  m.def(
      "baseline_reg",
      [](const Matrix& w, const std::string& kind, double lambda) {
        ValueAndGrad r = baseline_reg(w, {kind_from(kind), lambda});
        return py::make_tuple(r.value, r.grad);
      },
      py::arg("w"), py::arg("kind"), py::arg("lam") = 1.0);

  py::class_<CoupledMlrRegularizer>(m, "CoupledRegularizer")
      .def(py::init<const Matrix&>(), py::arg("x"))
      .def("value", &CoupledMlrRegularizer::value, py::arg("w"))
      .def(
          "value_and_grad",
          [](const CoupledMlrRegularizer& r, const Matrix& w) {
            ValueAndGrad v = r.value_and_grad(w);
            return py::make_tuple(v.value, v.grad);
          },
          py::arg("w"));

  // logistic regression
  m.def("softmax_probs", &softmax_probs, py::arg("w"), py::arg("x"));
  m.def(
      "mlr_loss",
      [](const Matrix& w, const Matrix& x, const Matrix& y) {
        ValueAndGrad r = mlr_loss_and_grad(w, x, y);
        return py::make_tuple(r.value, r.grad);
      },
      py::arg("w"), py::arg("x"), py::arg("y"));
  m.def("predict", &predict, py::arg("w"), py::arg("x"));
  m.def("accuracy", &accuracy, py::arg("predicted"), py::arg("y"));
  m.def(
      "fit_mlr",
      [](const Matrix& x, const Matrix& y, const std::string& reg, double lambda, int max_iters,
         double tol) {
        const MlrObjective obj(x, y, {kind_from(reg), lambda});
        GdConfig cfg;
        cfg.max_iters = max_iters;
        cfg.step_tol = tol;
        cfg.grad_tol = tol;
        GdResult r;
        {
          py::gil_scoped_release release;
          r = gradient_descent([&](const Matrix& w) { return obj.value_and_grad(w); }, y.cols(),
                               x.cols(), cfg);
        }
        return py::make_tuple(r.w, report_dict(r.report));
      },
      py::arg("x"), py::arg("y"), py::arg("reg") = "none", py::arg("lam") = 0.0,
      py::arg("max_iters") = 2000, py::arg("tol") = 1e-4,
      "Gradient descent with a Wolfe line search from W = 0. Returns (W, report).");

  // data
  m.def(
      "gen_synthetic",
      [](Index n_per_class, Index classes, Index features, Index rank, double noise,
         std::uint64_t seed) {
        const Dataset d = gen_synthetic_lowrank({n_per_class, classes, features, rank, noise, seed});
        return py::make_tuple(d.x, d.y);
      },
      py::arg("n_per_class") = 100, py::arg("classes") = 4, py::arg("features") = 400,
      py::arg("rank") = 5, py::arg("noise") = 0.1, py::arg("seed") = 0,
      "Low-rank class-structured data; returns (X, one-hot Y).");

  // networks
  m.def(
      "train_penalty",
      [](const Matrix& x, const Matrix& y, const std::vector<Index>& hidden, double lambda,
         double mu, int outer_iters, int epochs, int batch_size, double learning_rate,
         std::uint64_t seed) {
        AltMinConfig cfg;
        cfg.hidden = hidden;
        cfg.lambda = lambda;
        cfg.mu = mu;
        cfg.outer_iters = outer_iters;
        cfg.sgd.epochs = epochs;
        cfg.sgd.batch_size = batch_size;
        cfg.sgd.learning_rate = learning_rate;
        cfg.seed = seed;
        AltMinResult r;
        {
          py::gil_scoped_release release;
          r = alternating_minimize(x, y, cfg);
        }
        py::dict report;
        report["objective_history"] = r.report.objective_history;
        report["xi_change"] = r.report.xi_change;
        report["descent_margin"] = r.report.descent_margin;
        report["eps_mono"] = r.report.eps_mono;
        report["outer_iterations"] = r.report.outer_iterations;
        report["converged"] = r.report.converged;
        return py::make_tuple(r.state.theta.weights, r.state.theta.biases, r.state.xi, report);
      },
      py::arg("x"), py::arg("y"), py::arg("hidden") = std::vector<Index>{256},
      py::arg("lam") = 1e-3, py::arg("mu") = 1e-2, py::arg("outer_iters") = 25,
      py::arg("epochs") = 2, py::arg("batch_size") = 128, py::arg("learning_rate") = 0.01,
      py::arg("seed") = 0,
      "Alternating minimisation of the penalty objective. Returns (weights, biases, xi, report).");
  m.def(
      "mlp_forward",
      [](const std::vector<Matrix>& weights, const std::vector<Vector>& biases, const Matrix& x) {
        MlpParams p;
        p.weights = weights;
        p.biases = biases;
        p.sizes.clear();
        if (!weights.empty()) p.sizes.push_back(weights.front().cols());
        for (const Matrix& w : weights) p.sizes.push_back(w.rows());
        p.validate();
        return mlp_forward(p, x);
      },
      py::arg("weights"), py::arg("biases"), py::arg("x"));
}
