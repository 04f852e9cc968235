#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "difw/alignment.hpp"
#include "difw/basis.hpp"
#include "difw/error.hpp"
#include "difw/gradient.hpp"
#include "difw/integrator.hpp"
#include "difw/sampler.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a, const char* name) {
  if (a.ndim() != 1) throw difw::InvalidArgument(std::string(name) + " must be one-dimensional");
  return std::vector<double>(a.data(), a.data() + a.size());
}

Array to_array(const std::vector<double>& v) {
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

difw::CpaBasis make_basis(int n_cells, bool zero_boundary, const std::string& method) {
  return difw::CpaBasis(difw::Tessellation(difw::Domain{}, n_cells), difw::parse_basis_method(method),
                        zero_boundary);
}

Array integrate_grid(const Array& theta, const Array& points, int n_cells, bool zero_boundary,
                     const std::string& method, double t, int threads) {
  const difw::CpaBasis basis = make_basis(n_cells, zero_boundary, method);
  const std::vector<double> th = to_vector(theta, "theta");
  const std::vector<double> pts = to_vector(points, "points");
  std::vector<double> phi;
  {
    py::gil_scoped_release release;
    phi = difw::transform_points(basis.tessellation(), basis.theta_to_field(th), pts, t, threads);
  }
  return to_array(phi);
}

Array grad_grid(const Array& theta, const Array& points, int n_cells, bool zero_boundary,
                const std::string& method, double t, int threads) {
  const difw::CpaBasis basis = make_basis(n_cells, zero_boundary, method);
  const std::vector<double> th = to_vector(theta, "theta");
  const std::vector<double> pts = to_vector(points, "points");
  difw::GradientMatrix g;
  {
    py::gil_scoped_release release;
    const difw::AffineField field = basis.theta_to_field(th);
    g = difw::grad_grid(basis, field, difw::integrate_grid(basis.tessellation(), field, pts, t, threads),
                        threads);
  }
  Array out({static_cast<py::ssize_t>(g.rows()), static_cast<py::ssize_t>(g.cols())});
  std::copy(g.data(), g.data() + g.size(), out.mutable_data());
  return out;
}

Array sample_prior(int n_cells, bool zero_boundary, const std::string& method, double lambda_sigma,
                   double lambda_smooth, std::uint64_t seed) {
  const difw::CpaBasis basis = make_basis(n_cells, zero_boundary, method);
  return to_array(difw::sample_prior(difw::PriorCovariance(basis, lambda_sigma, lambda_smooth), seed));
}

Array basis_matrix(int n_cells, bool zero_boundary, const std::string& method) {
  const difw::CpaBasis basis = make_basis(n_cells, zero_boundary, method);
  const Eigen::MatrixXd& b = basis.matrix();
  Array out({static_cast<py::ssize_t>(b.rows()), static_cast<py::ssize_t>(b.cols())});
  for (Eigen::Index r = 0; r < b.rows(); ++r)
    for (Eigen::Index c = 0; c < b.cols(); ++c) out.mutable_at(r, c) = b(r, c);
  return out;
}

Array warp_signal(const Array& signal, const Array& phi) {
  const std::vector<double> y = to_vector(signal, "signal");
  const std::vector<double> p = to_vector(phi, "phi");
  if (y.size() != p.size()) throw difw::InvalidArgument("signal and phi must have the same length");
  return to_array(difw::warp_signal(difw::SampledFunction(difw::uniform_grid(static_cast<int>(y.size())), y), p).y);
}

difw::TimeSeriesBatch to_batch(const Array& signals, const py::object& labels) {
  if (signals.ndim() != 2 && signals.ndim() != 3) {
    throw difw::InvalidArgument("signals must have shape (N, T) or (N, C, T)");
  }
  const int n = static_cast<int>(signals.shape(0));
  const int channels = signals.ndim() == 3 ? static_cast<int>(signals.shape(1)) : 1;
  const int length = static_cast<int>(signals.shape(signals.ndim() - 1));
  difw::TimeSeriesBatch batch(n, length, channels);
  std::copy(signals.data(), signals.data() + signals.size(), batch.values.begin());
  if (!labels.is_none()) {
    batch.labels = labels.cast<std::vector<int>>();
    if (static_cast<int>(batch.labels.size()) != n) throw difw::InvalidArgument("labels must have length N");
  }
  batch.validate();
  return batch;
}

Array batch_array(const difw::TimeSeriesBatch& b, bool with_channels) {
  std::vector<py::ssize_t> shape{b.n_signals};
  if (with_channels) shape.push_back(b.n_channels);
  shape.push_back(b.length);
  Array out(shape);
  std::copy(b.values.begin(), b.values.end(), out.mutable_data());
  return out;
}

py::dict align_joint(const Array& signals, const py::object& labels, const difw::AlignmentConfig& config) {
  const difw::TimeSeriesBatch batch = to_batch(signals, labels);
  difw::AlignmentResult r;
  {
    py::gil_scoped_release release;
    r = difw::align_joint(batch, config);
  }
  const bool channels = signals.ndim() == 3;
  const py::ssize_t d = r.thetas.empty() || r.thetas[0].empty() ? 0 : r.thetas[0][0].size();
  Array thetas({static_cast<py::ssize_t>(r.thetas.size()), static_cast<py::ssize_t>(config.n_layers), d});
  double* out = thetas.mutable_data();
  for (const auto& stack : r.thetas)
    for (const auto& layer : stack) out = std::copy(layer.begin(), layer.end(), out);
  Array history({static_cast<py::ssize_t>(r.history.size()), py::ssize_t{2}});
  for (std::size_t e = 0; e < r.history.size(); ++e) {
    history.mutable_at(e, 0) = r.history[e].data;
    history.mutable_at(e, 1) = r.history[e].reg;
  }
  py::dict result;
  result["thetas"] = thetas;
  result["warped"] = batch_array(r.warped, channels);
  result["centroids"] = batch_array(r.centroids, channels);
  result["history"] = history;
  return result;
}

}  // namespace

PYBIND11_MODULE(_difw, m) {
  m.doc() = "Closed-form CPA diffeomorphic warping of [0, 1]";

  py::register_exception<difw::InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<difw::OutOfDomain>(m, "OutOfDomain", PyExc_ValueError);
  py::register_exception<difw::DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<difw::NumericError>(m, "NumericError", PyExc_RuntimeError);
  py::register_exception<difw::InvalidState>(m, "InvalidState", PyExc_RuntimeError);
  py::register_exception<difw::InternalError>(m, "InternalError", PyExc_RuntimeError);

  m.def("integrate_grid", &integrate_grid, "Flow of the CPA field for time t at each point", py::arg("theta"),
        py::arg("points"), py::arg("n_cells"), py::arg("zero_boundary") = false, py::arg("basis") = "sparse",
        py::arg("t") = 1.0, py::arg("threads") = 1);
  m.def("grad_grid", &grad_grid, "d phi / d theta, one row per point", py::arg("theta"), py::arg("points"),
        py::arg("n_cells"), py::arg("zero_boundary") = false, py::arg("basis") = "sparse", py::arg("t") = 1.0,
        py::arg("threads") = 1);
  m.def("sample_prior", &sample_prior, "Seeded draw from the smoothness prior", py::arg("n_cells"),
        py::arg("zero_boundary") = false, py::arg("basis") = "sparse", py::arg("lambda_sigma") = 1e-2,
        py::arg("lambda_smooth") = 0.5, py::arg("seed") = 0);
  m.def("basis_matrix", &basis_matrix, "Null-space basis B with vec(A) = B theta", py::arg("n_cells"),
        py::arg("zero_boundary") = false, py::arg("basis") = "sparse");
  m.def("warp_signal", &warp_signal, "Samples a uniformly gridded signal at the warped positions",
        py::arg("signal"), py::arg("phi"));

  const difw::AlignmentConfig defaults;
  m.def(
      "align_joint",
      [](const Array& signals, const py::object& labels, int n_cells, bool zero_boundary, const std::string& basis,
         double lambda_sigma, double lambda_smooth, int n_layers, int n_squarings, double learning_rate,
         int epochs, int batch_size, std::uint64_t seed, int threads) {
        difw::AlignmentConfig c;
        c.n_cells = n_cells;
        c.zero_boundary = zero_boundary;
        c.basis = difw::parse_basis_method(basis);
        c.lambda_sigma = lambda_sigma;
        c.lambda_smooth = lambda_smooth;
        c.n_layers = n_layers;
        c.n_squarings = n_squarings;
        c.learning_rate = learning_rate;
        c.epochs = epochs;
        c.batch_size = batch_size;
        c.seed = seed;
        c.threads = threads;
        c.validate();
        return align_joint(signals, labels, c);
      },
      "Joint alignment; returns thetas (N, layers, d), warped, centroids and history (epochs + 1, [data, reg])",
      py::arg("signals"), py::arg("labels") = py::none(), py::arg("n_cells") = defaults.n_cells,
      py::arg("zero_boundary") = defaults.zero_boundary, py::arg("basis") = difw::to_string(defaults.basis),
      py::arg("lambda_sigma") = defaults.lambda_sigma, py::arg("lambda_smooth") = defaults.lambda_smooth,
      py::arg("n_layers") = defaults.n_layers, py::arg("n_squarings") = defaults.n_squarings,
      py::arg("learning_rate") = defaults.learning_rate, py::arg("epochs") = defaults.epochs,
      py::arg("batch_size") = defaults.batch_size, py::arg("seed") = defaults.seed,
      py::arg("threads") = defaults.threads);
}
