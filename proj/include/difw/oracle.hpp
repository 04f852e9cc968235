#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difw/basis.hpp"
#include "difw/gradient.hpp"
#include "json.hpp"

namespace difw {

// Fixed-step numeric integration of dx/dt = v(x), used as independent ground
// truth for the closed form.

enum class OdeMethod { Rk4, Euler };

std::string to_string(OdeMethod method);
OdeMethod parse_ode_method(std::string_view name);

/// Fixed-step solve; velocity uses min-rule cell membership and every stage
/// point and step result is clamped to the domain.
double ode_solve(const AffineField& field, const Tessellation& tess, double x, double t,
                 int n_steps, OdeMethod method = OdeMethod::Rk4);

/// ode_solve over many points; identical values, stepped in lockstep.
std::vector<double> ode_solve_grid(const AffineField& field, const Tessellation& tess,
                                   std::span<const double> points, double t, int n_steps,
                                   OdeMethod method = OdeMethod::Rk4, int threads = 1);

/// Central differences of the closed-form flow with respect to theta.
std::vector<double> finite_diff_grad(const CpaBasis& basis, std::span<const double> theta, double x,
                                     double t, double h);

/// Central differences for a whole grid of points.
GradientMatrix finite_diff_grid(const CpaBasis& basis, std::span<const double> theta,
                                std::span<const double> points, double t, double h,
                                int threads = 1);

/// 0 when |g - fd| <= abs_floor, otherwise |g - fd| / max(|g|, |fd|).
double relative_error(double g, double fd, double abs_floor = 1e-9);

/// How the reports draw random parameters.
enum class ThetaDraw {
  Prior,           // theta ~ N(0, Sigma_CPA)
  StandardNormal,  // theta ~ N(0, I_d), independent of lambda_sigma / lambda_smooth
};

std::string to_string(ThetaDraw draw);
ThetaDraw parse_theta_draw(std::string_view name);

/// Shared workload description for the reports.
struct FieldSweep {
  int n_cells = 16;
  bool zero_boundary = true;
  BasisMethod method = BasisMethod::Sparse;
  ThetaDraw draw = ThetaDraw::Prior;
  double lambda_sigma = 1e-2;
  double lambda_smooth = 0.5;
  std::uint64_t seed = 0;
};

std::vector<double> draw_theta(const FieldSweep& sweep, const PriorCovariance& prior,
                               std::mt19937_64& rng);

/// Exact gradient against central differences of the closed form.
struct GradCheckReport {
  int n_fields = 0;
  int n_points = 0;
  int n_cells = 0;
  double fd_step = 0.0;
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::vector<double> field_max_rel_err;
};

/// n_fields draws, each checked on n_points uniform points.
GradCheckReport grad_check(int n_fields, int n_points, const FieldSweep& sweep,
                           double fd_step = 1e-6, int threads = 1);

struct SolverConfig {
  OdeMethod method = OdeMethod::Euler;
  int n_steps = 100;
  /// Step of the central differences that give the numeric solver's gradient.
  double fd_step = 1e-6;
};

struct PrecisionReport {
  int n_fields = 0;
  int n_points = 0;
  SolverConfig solver;
  std::vector<double> integration_max_abs;  // per field
  std::vector<double> gradient_max_abs;     // per field
  double integration_error = 0.0;           // mean of the per-field maxima
  double gradient_error = 0.0;
};

/// Compares the closed form against the configured numeric solver on
/// n_fields prior samples and n_points uniform points in the domain.
PrecisionReport precision_report(int n_fields, int n_points, const SolverConfig& solver,
                                 const FieldSweep& sweep, int threads = 1);

struct SpeedReport {
  int batch = 0;
  int n_points = 0;
  int n_cells = 0;
  int repetitions = 0;
  double target_accuracy = 0.0;
  int numeric_steps = 0;            // fewest RK4 steps reaching target_accuracy
  double numeric_error = 0.0;       // achieved max-abs error at that step count
  double closed_forward_s = 0.0;    // medians over repetitions, seconds per batch
  double closed_backward_s = 0.0;   // forward with traces plus exact gradient
  double numeric_forward_s = 0.0;
  double finite_diff_backward_s = 0.0;  // central differences of the closed form
  double forward_speedup() const { return numeric_forward_s / closed_forward_s; }
  double backward_speedup() const { return finite_diff_backward_s / closed_backward_s; }
};

SpeedReport speed_report(int batch, int n_points, const FieldSweep& sweep, int repetitions = 20,
                         double target_accuracy = 1e-5);

void to_json(nlohmann::json& j, const PrecisionReport& report);
void to_json(nlohmann::json& j, const SpeedReport& report);
void to_json(nlohmann::json& j, const GradCheckReport& report);

}  // namespace difw
