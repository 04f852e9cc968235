#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "difw/alignment.hpp"
#include "difw/basis.hpp"
#include "difw/error.hpp"
#include "difw/gradient.hpp"
#include "difw/integrator.hpp"
#include "difw/io.hpp"
#include "difw/oracle.hpp"
#include "difw/parallel.hpp"

namespace {

using namespace difw;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Writes to `path`, or to stdout when it is empty.
void emit_json(const std::string& path, const nlohmann::json& j) {
  if (path.empty()) {
    write_json(std::cout, j);
  } else {
    write_json(path, j);
  }
}

void emit_csv(const std::string& path, const std::vector<std::string>& header,
              const std::vector<std::vector<double>>& rows) {
  if (path.empty()) {
    write_csv(std::cout, header, rows);
  } else {
    write_csv(path, header, rows);
  }
}

struct SweepOptions {
  int cells = 16;
  bool zero_boundary = false;
  std::string basis = "sparse";
  std::string draw = "prior";
  double lambda_sigma = 1e-2;
  double lambda_smooth = 0.5;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--cells", cells, "Number of cells")->check(CLI::PositiveNumber);
    app->add_flag("--zero-boundary,!--no-zero-boundary", zero_boundary,
                  "Zero velocity at the domain ends");
    app->add_option("--basis", basis, "Null-space basis: sparse, svd, qr or rref");
    app->add_option("--draw", draw, "Parameter draw: prior or normal");
    app->add_option("--lambda-sigma", lambda_sigma, "Prior overall scale");
    app->add_option("--lambda-smooth", lambda_smooth, "Prior length-scale");
    app->add_option("--seed", seed, "Random seed");
  }

  FieldSweep sweep() const {
    FieldSweep s;
    s.n_cells = cells;
    s.zero_boundary = zero_boundary;
    s.method = parse_basis_method(basis);
    s.draw = parse_theta_draw(draw);
    s.lambda_sigma = lambda_sigma;
    s.lambda_smooth = lambda_smooth;
    s.seed = seed;
    return s;
  }
};

struct AlignOptions {
  AlignmentConfig config;
  std::string basis = "sparse";

  void add(CLI::App* app) {
    app->add_option("--cells", config.n_cells, "Number of cells")->check(CLI::PositiveNumber);
    app->add_flag("--zero-boundary,!--no-zero-boundary", config.zero_boundary,
                  "Zero velocity at the domain ends");
    app->add_option("--basis", basis, "Null-space basis: sparse, svd, qr or rref");
    app->add_option("--layers", config.n_layers, "Number of composed warps");
    app->add_option("--lambda-sigma", config.lambda_sigma, "Prior overall scale");
    app->add_option("--lambda-smooth", config.lambda_smooth, "Prior length-scale");
    app->add_option("--squarings", config.n_squarings, "Scaling-and-squaring steps");
    app->add_option("--epochs", config.epochs, "Optimization epochs");
    app->add_option("--lr", config.learning_rate, "Learning rate");
    app->add_option("--batch-size", config.batch_size, "Minibatch size (0: full batch)");
    app->add_option("--seed", config.seed, "Random seed");
  }

  AlignmentConfig resolved(int threads) const {
    AlignmentConfig c = config;
    c.basis = parse_basis_method(basis);
    c.threads = threads;
    c.validate();
    return c;
  }
};

std::vector<double> uniform_points(int n) {
  if (n < 1) throw InvalidArgument("--points must be positive");
  if (n == 1) return {0.0};
  return uniform_grid(n);
}

int run(int argc, char** argv) {
  CLI::App app{"Closed-form CPA diffeomorphic warping of [0, 1]"};
  app.require_subcommand(1);
  int threads = default_threads();
  app.add_option("--threads", threads, "Worker threads (default: DIFW_THREADS or 1)")
      ->check(CLI::PositiveNumber);

  // warp
  CLI::App* warp = app.add_subcommand("warp", "Integrate a CPA field on a uniform grid");
  int warp_cells = 2;
  bool warp_zb = false;
  std::string warp_basis = "sparse";
  std::string warp_theta = "zeros";
  int warp_points = 101;
  double warp_time = 1.0;
  int warp_squarings = 0;
  bool warp_grad = false;
  std::string warp_out;
  warp->add_option("--cells", warp_cells, "Number of cells")->check(CLI::PositiveNumber);
  warp->add_flag("--zero-boundary,!--no-zero-boundary", warp_zb, "Zero velocity at the domain ends");
  warp->add_option("--basis", warp_basis, "Null-space basis: sparse, svd, qr or rref");
  warp->add_option("--theta", warp_theta, "'zeros', an inline JSON array, or a JSON file");
  warp->add_option("--points", warp_points, "Number of uniform grid points");
  warp->add_option("--time", warp_time, "Integration time");
  warp->add_option("--squarings", warp_squarings, "Scaling-and-squaring steps (0: exact)");
  warp->add_flag("--grad", warp_grad, "Append d phi / d theta columns");
  warp->add_option("--out", warp_out, "Output CSV (default: stdout)");

  // grad-check
  CLI::App* gc = app.add_subcommand("grad-check", "Exact gradient against finite differences");
  SweepOptions gc_sweep;
  gc_sweep.add(gc);
  int gc_trials = 100;
  int gc_points = 100;
  double gc_step = 1e-6;
  std::string gc_out;
  gc->add_option("--trials", gc_trials, "Number of random fields");
  gc->add_option("--points", gc_points, "Uniform points per field");
  gc->add_option("--step", gc_step, "Central-difference step");
  gc->add_option("--out", gc_out, "Output JSON (default: stdout)");

  // precision
  CLI::App* prec = app.add_subcommand("precision", "Closed form against a fixed-step solver");
  SweepOptions prec_sweep;
  prec_sweep.add(prec);
  int prec_fields = 100;
  int prec_points = 1000;
  std::string prec_method = "euler";
  SolverConfig prec_solver;
  std::string prec_out;
  std::string prec_csv;
  prec->add_option("--fields", prec_fields, "Number of random fields");
  prec->add_option("--points", prec_points, "Uniform points per field");
  prec->add_option("--method", prec_method, "Numeric solver: euler or rk4");
  prec->add_option("--steps", prec_solver.n_steps, "Solver steps");
  prec->add_option("--step", prec_solver.fd_step, "Finite-difference step of the solver gradient");
  prec->add_option("--out", prec_out, "Output JSON (default: stdout)");
  prec->add_option("--csv", prec_csv, "Per-field errors as CSV");

  // bench
  CLI::App* bench = app.add_subcommand("bench", "Closed form against numeric integration speed");
  SweepOptions bench_sweep;
  bench_sweep.cells = 30;
  bench_sweep.draw = "normal";
  bench_sweep.add(bench);
  int bench_batch = 40;
  int bench_points = 1000;
  int bench_reps = 20;
  double bench_target = 1e-5;
  std::string bench_out;
  std::string bench_csv;
  bench->add_option("--batch", bench_batch, "Fields per batch");
  bench->add_option("--points", bench_points, "Points per field");
  bench->add_option("--reps", bench_reps, "Timed repetitions");
  bench->add_option("--target", bench_target, "Accuracy the numeric solver is tuned to");
  bench->add_option("--out", bench_out, "Output JSON (default: stdout)");
  bench->add_option("--csv", bench_csv, "Timings as CSV");

  // align
  CLI::App* align = app.add_subcommand("align", "Jointly align the signals of a CSV file");
  AlignOptions align_opts;
  align_opts.add(align);
  std::string align_in;
  std::string align_out = ".";
  align->add_option("input", align_in, "Signals CSV (optional first column 'label')")->required();
  align->add_option("--out", align_out, "Output directory");

  // ncc
  CLI::App* ncc = app.add_subcommand("ncc", "Nearest-centroid classification");
  AlignOptions ncc_opts;
  ncc_opts.add(ncc);
  std::string ncc_train;
  std::string ncc_test;
  NccPredictConfig ncc_predict_cfg;
  std::string ncc_out;
  ncc->add_option("--train", ncc_train, "Labeled training CSV")->required();
  ncc->add_option("--test", ncc_test, "Labeled test CSV")->required();
  ncc->add_option("--predict-steps", ncc_predict_cfg.steps, "Test-time warp steps");
  ncc->add_option("--predict-lr", ncc_predict_cfg.learning_rate, "Test-time learning rate");
  ncc->add_option("--out", ncc_out, "Output JSON (default: stdout)");

  // synth
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic warped dataset");
  SyntheticConfig synth_cfg;
  std::string synth_out;
  synth->add_option("--classes", synth_cfg.n_classes, "Number of classes");
  synth->add_option("--per-class", synth_cfg.n_per_class, "Signals per class");
  synth->add_option("--length", synth_cfg.length, "Samples per signal");
  synth->add_option("--cells", synth_cfg.n_cells, "Cells of the latent warps");
  synth->add_option("--lambda-sigma", synth_cfg.lambda_sigma, "Latent prior scale");
  synth->add_option("--lambda-smooth", synth_cfg.lambda_smooth, "Latent prior length-scale");
  synth->add_option("--noise", synth_cfg.noise, "Noise level relative to the amplitude");
  synth->add_option("--class-gap", synth_cfg.class_gap, "Shoulder height step between classes");
  synth->add_option("--seed", synth_cfg.seed, "Random seed");
  synth->add_option("--out", synth_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (*warp) {
    const CpaBasis basis(Tessellation(Domain{}, warp_cells), parse_basis_method(warp_basis), warp_zb);
    const std::vector<double> theta = parse_theta(warp_theta, basis.dim());
    const AffineField field = basis.theta_to_field(theta);
    const std::vector<double> pts = uniform_points(warp_points);
    std::vector<double> phi;
    GradientMatrix jac;
    if (warp_squarings > 0 || warp_grad) {
      SquaredWarp sq =
          scaling_squaring_with_grad(basis, field, pts, warp_time, warp_squarings, threads);
      phi = std::move(sq.values);
      jac = std::move(sq.jacobian);
    } else {
      phi = transform_points(basis.tessellation(), field, pts, warp_time, threads);
    }
    std::vector<std::string> header{"x", "phi"};
    if (warp_grad) {
      for (int k = 0; k < basis.dim(); ++k) header.push_back("dphi_dtheta" + std::to_string(k));
    }
    std::vector<std::vector<double>> rows;
    for (std::size_t p = 0; p < pts.size(); ++p) {
      std::vector<double> row{pts[p], phi[p]};
      if (warp_grad) {
        for (int k = 0; k < basis.dim(); ++k) row.push_back(jac(static_cast<Eigen::Index>(p), k));
      }
      rows.push_back(std::move(row));
    }
    emit_csv(warp_out, header, rows);
  } else if (*gc) {
    const GradCheckReport report =
        grad_check(gc_trials, gc_points, gc_sweep.sweep(), gc_step, threads);
    nlohmann::json j = report;
    j["seed"] = gc_sweep.seed;
    emit_json(gc_out, j);
  } else if (*prec) {
    prec_solver.method = parse_ode_method(prec_method);
    const PrecisionReport report =
        precision_report(prec_fields, prec_points, prec_solver, prec_sweep.sweep(), threads);
    nlohmann::json j = report;
    j["seed"] = prec_sweep.seed;
    emit_json(prec_out, j);
    if (!prec_csv.empty()) {
      std::vector<std::vector<double>> rows;
      for (int f = 0; f < report.n_fields; ++f) {
        rows.push_back({static_cast<double>(f), report.integration_max_abs[f],
                        report.gradient_max_abs[f]});
      }
      write_csv(prec_csv, {"field", "integration_max_abs", "gradient_max_abs"}, rows);
    }
  } else if (*bench) {
    const SpeedReport report =
        speed_report(bench_batch, bench_points, bench_sweep.sweep(), bench_reps, bench_target);
    nlohmann::json j = report;
    j["seed"] = bench_sweep.seed;
    j["draw"] = bench_sweep.draw;
    emit_json(bench_out, j);
    if (!bench_csv.empty()) {
      write_csv(bench_csv,
                {"closed_forward_s", "numeric_forward_s", "closed_backward_s",
                 "finite_diff_backward_s"},
                {{report.closed_forward_s, report.numeric_forward_s, report.closed_backward_s,
                  report.finite_diff_backward_s}});
    }
  } else if (*align) {
    const AlignmentConfig config = align_opts.resolved(threads);
    const TimeSeriesBatch batch = read_batch_csv(align_in);
    const AlignmentResult result = align_joint(batch, config);
    std::filesystem::create_directories(align_out);
    const std::filesystem::path dir(align_out);
    write_batch_csv((dir / "aligned.csv").string(), result.warped);
    write_batch_csv((dir / "centroids.csv").string(), result.centroids);
    nlohmann::json j;
    j["config"] = config;
    j["thetas"] = result.thetas;
    write_json((dir / "theta.json").string(), j);
    std::vector<std::vector<double>> rows;
    for (std::size_t e = 0; e < result.history.size(); ++e) {
      const LossRecord& r = result.history[e];
      rows.push_back({static_cast<double>(e), r.data, r.reg, r.total()});
    }
    write_csv((dir / "loss.csv").string(), {"epoch", "data", "reg", "total"}, rows);
  } else if (*ncc) {
    const AlignmentConfig config = ncc_opts.resolved(threads);
    const TimeSeriesBatch train = read_batch_csv(ncc_train);
    const TimeSeriesBatch test = read_batch_csv(ncc_test);
    if (!train.labeled()) throw DataError(ncc_train + ":1: training data needs a 'label' column");
    if (!test.labeled()) throw DataError(ncc_test + ":1: test data needs a 'label' column");
    const NccModel model = ncc_fit(train, config, ncc_predict_cfg);
    const std::vector<int> predicted = ncc_predict(model, test);
    const std::vector<int> baseline = ncc_predict(euclidean_ncc_fit(train), test);
    nlohmann::json j;
    j["config"] = config;
    j["n_train"] = train.n_signals;
    j["n_test"] = test.n_signals;
    j["accuracy"] = accuracy(predicted, test.labels);
    j["euclidean_accuracy"] = accuracy(baseline, test.labels);
    j["predicted"] = predicted;
    j["euclidean_predicted"] = baseline;
    emit_json(ncc_out, j);
  } else if (*synth) {
    write_batch_csv(synth_out, synthetic_batch(synth_cfg));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const difw::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const difw::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const difw::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const difw::OutOfDomain& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const difw::InvalidState& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
}
