#include "difw/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>

#include "difw/error.hpp"
#include "difw/integrator.hpp"
#include "difw/parallel.hpp"
#include "difw/sampler.hpp"

namespace difw {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.98;
constexpr double kAdamEps = 1e-8;

// Adam state of one parameter vector.
struct Adam {
  std::vector<double> m;
  std::vector<double> v;
  int steps = 0;

  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& x, const std::vector<double>& g, double lr) {
    ++steps;
    const double c1 = 1.0 - std::pow(kBeta1, steps);
    const double c2 = 1.0 - std::pow(kBeta2, steps);
    for (std::size_t k = 0; k < x.size(); ++k) {
      m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g[k];
      v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g[k] * g[k];
      x[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + kAdamEps);
    }
  }
};

// Parameters are optimized in whitened coordinates u with theta = chol * u,
// so the regularizer of one layer is ||u||^2.
ThetaStack color_stack(const PriorCovariance& prior, const std::vector<double>& u, int n_layers) {
  const std::size_t d = static_cast<std::size_t>(prior.dim());
  ThetaStack stack(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    stack[l] = prior.color(std::span<const double>(u.data() + l * d, d));
  }
  return stack;
}

// d loss / d u from d loss / d theta (data part only).
void whitened_grad(const PriorCovariance& prior, const ThetaStack& grad_theta,
                   std::vector<double>& out) {
  const Eigen::MatrixXd& chol = prior.cholesky();
  const Eigen::Index d = chol.rows();
  for (std::size_t l = 0; l < grad_theta.size(); ++l) {
    const Eigen::Map<const Eigen::VectorXd> g(grad_theta[l].data(), d);
    Eigen::Map<Eigen::VectorXd>(out.data() + l * d, d) = chol.transpose() * g;
  }
}

double squared_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

void check_finite(double value, const std::string& what) {
  if (!std::isfinite(value)) {
    throw NumericError(what + " is not finite (learning rate too high?)");
  }
}

// Per-class means; classes 1..K must all be present when labeled.
TimeSeriesBatch class_means(const TimeSeriesBatch& batch) {
  const int k_max = batch.n_classes();
  TimeSeriesBatch out(k_max, batch.length, batch.n_channels);
  out.labels.resize(k_max);
  std::vector<int> counts(k_max, 0);
  for (int i = 0; i < batch.n_signals; ++i) {
    const int k = batch.labeled() ? batch.labels[i] - 1 : 0;
    ++counts[k];
    const auto src = batch.signal(i);
    auto dst = out.signal(k);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }
  for (int k = 0; k < k_max; ++k) {
    if (counts[k] == 0) throw InvalidArgument("class " + std::to_string(k + 1) + " is empty");
    out.labels[k] = k + 1;
    for (double& v : out.signal(k)) v /= counts[k];
  }
  return out;
}

// Data loss of the signals `idx` and its gradient with respect to each of
// them. Groups are the classes (multi) or the whole selection (single).
double data_loss_and_grad(const std::vector<std::vector<double>>& warped,
                          std::span<const int> idx, std::span<const int> group, int n_groups,
                          bool multi, std::vector<std::vector<double>>& grad) {
  const std::size_t width = warped[idx[0]].size();
  std::vector<std::vector<double>> mean(n_groups, std::vector<double>(width, 0.0));
  std::vector<int> count(n_groups, 0);
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const int k = group[n];
    ++count[k];
    const auto& z = warped[idx[n]];
    for (std::size_t j = 0; j < width; ++j) mean[k][j] += z[j];
  }
  for (int k = 0; k < n_groups; ++k) {
    if (count[k] == 0) continue;
    for (double& v : mean[k]) v /= count[k];
  }
  double loss = 0.0;
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const int k = group[n];
    const double scale = multi ? 1.0 / (static_cast<double>(count[k]) * count[k])
                               : 1.0 / static_cast<double>(idx.size());
    const auto& z = warped[idx[n]];
    auto& g = grad[idx[n]];
    g.resize(width);
    for (std::size_t j = 0; j < width; ++j) {
      const double r = z[j] - mean[k][j];
      loss += scale * r * r;
      g[j] = 2.0 * scale * r;
    }
  }
  return loss;
}

}  // namespace

// ---------------------------------------------------------------- batch

TimeSeriesBatch::TimeSeriesBatch(int n, int t, int channels)
    : n_signals(n), n_channels(channels), length(t) {
  if (n < 0 || t < 0 || channels < 1) throw InvalidArgument("invalid batch shape");
  values.assign(static_cast<std::size_t>(n) * channels * t, 0.0);
}

TimeSeriesBatch TimeSeriesBatch::from_rows(const std::vector<std::vector<double>>& rows,
                                           std::vector<int> labels) {
  const int t = rows.empty() ? 0 : static_cast<int>(rows[0].size());
  TimeSeriesBatch out(static_cast<int>(rows.size()), t);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != t) {
      throw InvalidArgument("signal " + std::to_string(i) + " has " +
                            std::to_string(rows[i].size()) + " samples, expected " +
                            std::to_string(t));
    }
    std::copy(rows[i].begin(), rows[i].end(), out.signal(static_cast<int>(i)).begin());
  }
  out.labels = std::move(labels);
  out.validate();
  return out;
}

std::span<double> TimeSeriesBatch::signal(int i) {
  const std::size_t w = static_cast<std::size_t>(n_channels) * length;
  return {values.data() + i * w, w};
}

std::span<const double> TimeSeriesBatch::signal(int i) const {
  const std::size_t w = static_cast<std::size_t>(n_channels) * length;
  return {values.data() + i * w, w};
}

std::span<const double> TimeSeriesBatch::channel(int i, int c) const {
  return {values.data() + index(i, c, 0), static_cast<std::size_t>(length)};
}

int TimeSeriesBatch::n_classes() const {
  if (labels.empty()) return 1;
  return *std::max_element(labels.begin(), labels.end());
}

std::vector<int> TimeSeriesBatch::members(int label) const {
  std::vector<int> out;
  for (int i = 0; i < n_signals; ++i) {
    if (labeled() ? labels[i] == label : label == 1) out.push_back(i);
  }
  return out;
}

TimeSeriesBatch TimeSeriesBatch::subset(std::span<const int> indices) const {
  TimeSeriesBatch out(static_cast<int>(indices.size()), length, n_channels);
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const auto src = signal(indices[n]);
    std::copy(src.begin(), src.end(), out.signal(static_cast<int>(n)).begin());
    if (labeled()) out.labels.push_back(labels[indices[n]]);
  }
  return out;
}

void TimeSeriesBatch::validate() const {
  if (n_signals < 0 || length < 0 || n_channels < 1) throw InvalidArgument("invalid batch shape");
  if (values.size() != static_cast<std::size_t>(n_signals) * n_channels * length) {
    throw InvalidArgument("batch holds " + std::to_string(values.size()) + " values, expected " +
                          std::to_string(static_cast<std::size_t>(n_signals) * n_channels * length));
  }
  if (!labels.empty() && labels.size() != static_cast<std::size_t>(n_signals)) {
    throw InvalidArgument("batch has " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(n_signals) + " signals");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1) {
      throw InvalidArgument("signal " + std::to_string(i) + ": label " +
                            std::to_string(labels[i]) + " is not in 1..K");
    }
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw InvalidArgument("signal " + std::to_string(i / (values.size() / n_signals)) +
                            " has a non-finite value");
    }
  }
}

std::vector<double> uniform_grid(int length) {
  if (length < 2) throw InvalidArgument("signals need at least 2 samples");
  std::vector<double> grid(length);
  for (int j = 0; j < length; ++j) grid[j] = static_cast<double>(j) / (length - 1);
  grid.back() = 1.0;
  return grid;
}

// ---------------------------------------------------------------- losses

double loss_data_single(const TimeSeriesBatch& warped) {
  warped.validate();
  if (warped.n_signals < 1) throw InvalidArgument("loss needs at least one signal");
  const std::size_t w = static_cast<std::size_t>(warped.n_channels) * warped.length;
  std::vector<double> mean(w, 0.0);
  for (int i = 0; i < warped.n_signals; ++i) {
    const auto z = warped.signal(i);
    for (std::size_t j = 0; j < w; ++j) mean[j] += z[j];
  }
  for (double& m : mean) m /= warped.n_signals;
  double loss = 0.0;
  for (int i = 0; i < warped.n_signals; ++i) {
    const auto z = warped.signal(i);
    for (std::size_t j = 0; j < w; ++j) loss += (z[j] - mean[j]) * (z[j] - mean[j]);
  }
  return loss / warped.n_signals;
}

double loss_data_multi(const TimeSeriesBatch& warped, std::span<const int> labels) {
  if (labels.size() != static_cast<std::size_t>(warped.n_signals)) {
    throw InvalidArgument("batch has " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(warped.n_signals) + " signals");
  }
  TimeSeriesBatch labeled = warped;
  labeled.labels.assign(labels.begin(), labels.end());
  labeled.validate();
  if (labeled.n_signals < 1) throw InvalidArgument("loss needs at least one signal");
  double loss = 0.0;
  for (int k = 1; k <= labeled.n_classes(); ++k) {
    const std::vector<int> idx = labeled.members(k);
    if (idx.empty()) throw InvalidArgument("class " + std::to_string(k) + " is empty");
    loss += loss_data_single(labeled.subset(idx)) / static_cast<double>(idx.size());
  }
  return loss;
}

double loss_reg(const std::vector<std::vector<double>>& thetas, const PriorCovariance& prior) {
  if (thetas.empty()) throw InvalidArgument("loss needs at least one parameter vector");
  if (prior.degenerate()) throw NumericError("prior covariance is singular");
  double sum = 0.0;
  for (const auto& theta : thetas) sum += prior.quadratic_form(theta);
  return sum / static_cast<double>(thetas.size());
}

// ---------------------------------------------------------------- config

void AlignmentConfig::validate() const {
  if (n_cells < 1) throw InvalidArgument("number of cells must be positive");
  if (!(lambda_sigma > 0.0)) throw InvalidArgument("lambda_sigma must be positive");
  if (!(lambda_smooth > 0.0)) throw InvalidArgument("lambda_smooth must be positive");
  if (n_layers < 1) throw InvalidArgument("number of layers must be at least 1");
  if (n_squarings < 0) throw InvalidArgument("number of squarings must be nonnegative");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (epochs < 0) throw InvalidArgument("number of epochs must be nonnegative");
  if (batch_size < 0) throw InvalidArgument("batch size must be nonnegative");
}

void to_json(nlohmann::json& j, const AlignmentConfig& c) {
  j = nlohmann::json{{"n_cells", c.n_cells},
                     {"zero_boundary", c.zero_boundary},
                     {"basis", to_string(c.basis)},
                     {"lambda_sigma", c.lambda_sigma},
                     {"lambda_smooth", c.lambda_smooth},
                     {"n_layers", c.n_layers},
                     {"n_squarings", c.n_squarings},
                     {"learning_rate", c.learning_rate},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed}};
}

// ---------------------------------------------------------------- warp model

namespace {

CpaBasis make_basis(const AlignmentConfig& config) {
  config.validate();
  return CpaBasis(Tessellation(Domain{}, config.n_cells), config.basis, config.zero_boundary);
}

}  // namespace

WarpModel::WarpModel(const AlignmentConfig& config)
    : config_(config),
      basis_(make_basis(config)),
      prior_(basis_, config.lambda_sigma, config.lambda_smooth) {
  if (prior_.degenerate()) throw NumericError("prior covariance is singular");
}

std::vector<double> WarpModel::warp(std::span<const double> signal, int n_channels, int length,
                                    const ThetaStack& stack) const {
  const std::vector<double> grid = uniform_grid(length);
  std::vector<double> cur(signal.begin(), signal.end());
  std::vector<double> next(cur.size());
  for (const auto& theta : stack) {
    const AffineField field = basis_.theta_to_field(theta);
    const std::vector<double> phi =
        scaling_squaring(basis_.tessellation(), field, grid, 1.0, config_.n_squarings);
    for (int c = 0; c < n_channels; ++c) {
      const std::span<const double> y(cur.data() + c * length, length);
      for (int j = 0; j < length; ++j) next[c * length + j] = interp(grid, y, phi[j]);
    }
    cur.swap(next);
  }
  return cur;
}

WarpModel::Forward WarpModel::forward(std::span<const double> signal, int n_channels, int length,
                                      const ThetaStack& stack) const {
  const std::vector<double> grid = uniform_grid(length);
  Forward fwd;
  fwd.output.assign(signal.begin(), signal.end());
  for (const auto& theta : stack) {
    const AffineField field = basis_.theta_to_field(theta);
    SquaredWarp sq = scaling_squaring_with_grad(basis_, field, grid, 1.0, config_.n_squarings);
    std::vector<double> next(fwd.output.size());
    for (int c = 0; c < n_channels; ++c) {
      const std::span<const double> y(fwd.output.data() + c * length, length);
      for (int j = 0; j < length; ++j) next[c * length + j] = interp(grid, y, sq.values[j]);
    }
    fwd.inputs.push_back(std::move(fwd.output));
    fwd.positions.push_back(std::move(sq.values));
    fwd.jacobians.push_back(std::move(sq.jacobian));
    fwd.output = std::move(next);
  }
  return fwd;
}

ThetaStack WarpModel::backward(const Forward& fwd, int n_channels, int length,
                               std::vector<double> grad_out) const {
  const std::vector<double> grid = uniform_grid(length);
  const int n_layers = static_cast<int>(fwd.inputs.size());
  ThetaStack grad(n_layers);
  std::vector<double> d_phi(length);
  for (int l = n_layers - 1; l >= 0; --l) {
    const std::vector<double>& input = fwd.inputs[l];
    std::vector<double> grad_in(input.size(), 0.0);
    std::fill(d_phi.begin(), d_phi.end(), 0.0);
    for (int c = 0; c < n_channels; ++c) {
      const std::span<const double> y(input.data() + c * length, length);
      for (int j = 0; j < length; ++j) {
        const double g = grad_out[c * length + j];
        const InterpGrad ig = interp_grad(grid, y, fwd.positions[l][j]);
        d_phi[j] += g * ig.d_query;
        grad_in[c * length + ig.lo] += g * ig.d_y_lo;
        grad_in[c * length + ig.lo + 1] += g * ig.d_y_hi;
      }
    }
    const Eigen::VectorXd g_theta =
        fwd.jacobians[l].transpose() * Eigen::Map<const Eigen::VectorXd>(d_phi.data(), length);
    grad[l].assign(g_theta.data(), g_theta.data() + g_theta.size());
    grad_out.swap(grad_in);
  }
  return grad;
}

// ---------------------------------------------------------------- alignment

namespace {

void check_batch(const TimeSeriesBatch& batch) {
  batch.validate();
  if (batch.n_signals < 1) throw InvalidArgument("batch is empty");
  if (batch.length < 2) throw InvalidArgument("signals need at least 2 samples");
}

}  // namespace

AlignmentResult align_joint(const TimeSeriesBatch& batch, const AlignmentConfig& config) {
  check_batch(batch);
  const WarpModel model(config);
  const PriorCovariance& prior = model.prior();
  const int n = batch.n_signals;
  const int n_layers = config.n_layers;
  const std::size_t n_params = static_cast<std::size_t>(model.dim()) * n_layers;
  const bool multi = batch.labeled() && batch.n_classes() > 1;
  const int n_groups = multi ? batch.n_classes() : 1;
  if (multi) {
    for (int k = 1; k <= n_groups; ++k) {
      if (batch.members(k).empty()) throw InvalidArgument("class " + std::to_string(k) + " is empty");
    }
  }
  auto group_of = [&](int i) { return multi ? batch.labels[i] - 1 : 0; };

  std::vector<std::vector<double>> u(n, std::vector<double>(n_params, 0.0));
  std::vector<Adam> adam(n, Adam(n_params));
  std::vector<ThetaStack> thetas(n);
  std::vector<std::vector<double>> warped(n);
  std::vector<std::vector<double>> grad_out(n);

  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);

  auto evaluate_all = [&]() {
    parallel_for(n, config.threads, [&](std::size_t i) {
      thetas[i] = color_stack(prior, u[i], n_layers);
      warped[i] = model.warp(batch.signal(static_cast<int>(i)), batch.n_channels, batch.length,
                             thetas[i]);
    });
    std::vector<int> groups(n);
    for (int i = 0; i < n; ++i) groups[i] = group_of(i);
    std::vector<std::vector<double>> unused(n);
    LossRecord rec;
    rec.data = data_loss_and_grad(warped, all, groups, n_groups, multi, unused);
    for (int i = 0; i < n; ++i) rec.reg += squared_norm(u[i]);
    rec.reg /= n;
    check_finite(rec.data, "data loss");
    check_finite(rec.reg, "regularization loss");
    return rec;
  };

  AlignmentResult result;
  result.history.push_back(evaluate_all());

  std::mt19937_64 rng(config.seed);
  const int batch_size = config.batch_size == 0 ? n : std::min(config.batch_size, n);
  std::vector<int> order = all;
  std::vector<WarpModel::Forward> fwd(n);
  std::vector<std::vector<double>> grad_u(n, std::vector<double>(n_params));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch_size < n) std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += batch_size) {
      const int stop = std::min(n, start + batch_size);
      const std::span<const int> idx(order.data() + start, stop - start);
      parallel_for(idx.size(), config.threads, [&](std::size_t m) {
        const int i = idx[m];
        fwd[i] = model.forward(batch.signal(i), batch.n_channels, batch.length,
                               color_stack(prior, u[i], n_layers));
        warped[i] = fwd[i].output;
      });
      std::vector<int> groups(idx.size());
      for (std::size_t m = 0; m < idx.size(); ++m) groups[m] = group_of(idx[m]);
      data_loss_and_grad(warped, idx, groups, n_groups, multi, grad_out);
      const double reg_scale = 2.0 / static_cast<double>(idx.size());
      parallel_for(idx.size(), config.threads, [&](std::size_t m) {
        const int i = idx[m];
        const ThetaStack g = model.backward(fwd[i], batch.n_channels, batch.length, grad_out[i]);
        whitened_grad(prior, g, grad_u[i]);
        for (std::size_t k = 0; k < n_params; ++k) grad_u[i][k] += reg_scale * u[i][k];
        adam[i].step(u[i], grad_u[i], config.learning_rate);
      });
    }
    result.history.push_back(evaluate_all());
  }

  result.thetas = thetas;
  result.warped = TimeSeriesBatch(n, batch.length, batch.n_channels);
  result.warped.labels = batch.labels;
  for (int i = 0; i < n; ++i) {
    std::copy(warped[i].begin(), warped[i].end(), result.warped.signal(i).begin());
  }
  result.centroids = class_means(result.warped);
  return result;
}

TimeSeriesBatch apply_warps(const TimeSeriesBatch& batch, const std::vector<ThetaStack>& thetas,
                            const AlignmentConfig& config) {
  check_batch(batch);
  if (thetas.size() != static_cast<std::size_t>(batch.n_signals)) {
    throw InvalidArgument("got " + std::to_string(thetas.size()) + " parameter stacks for " +
                          std::to_string(batch.n_signals) + " signals");
  }
  const WarpModel model(config);
  TimeSeriesBatch out = batch;
  parallel_for(batch.n_signals, config.threads, [&](std::size_t i) {
    const std::vector<double> z = model.warp(batch.signal(static_cast<int>(i)), batch.n_channels,
                                             batch.length, thetas[i]);
    std::copy(z.begin(), z.end(), out.signal(static_cast<int>(i)).begin());
  });
  return out;
}

// ---------------------------------------------------------------- NCC

NccModel ncc_fit(const TimeSeriesBatch& train, const AlignmentConfig& config,
                 const NccPredictConfig& predict) {
  check_batch(train);
  if (!train.labeled()) throw InvalidArgument("nearest-centroid training needs labels");
  if (predict.steps < 0) throw InvalidArgument("number of prediction steps must be nonnegative");
  if (!(predict.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  NccModel model;
  model.config = config;
  model.predict = predict;
  const int k_max = train.n_classes();
  model.centroids = TimeSeriesBatch(k_max, train.length, train.n_channels);
  for (int k = 1; k <= k_max; ++k) {
    const std::vector<int> idx = train.members(k);
    if (idx.empty()) throw InvalidArgument("class " + std::to_string(k) + " is empty");
    TimeSeriesBatch cls = train.subset(idx);
    cls.labels.clear();
    const AlignmentResult res = align_joint(cls, config);
    const auto c = res.centroids.signal(0);
    std::copy(c.begin(), c.end(), model.centroids.signal(k - 1).begin());
    model.centroids.labels.push_back(k);
  }
  model.fitted = true;
  return model;
}

NccModel euclidean_ncc_fit(const TimeSeriesBatch& train) {
  check_batch(train);
  if (!train.labeled()) throw InvalidArgument("nearest-centroid training needs labels");
  NccModel model;
  model.aligned = false;
  model.centroids = class_means(train);
  model.fitted = true;
  return model;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

// Squared distance to `target` after warping `signal` toward it: Adam on
// ||z - target||^2 + ||u||^2, keeping the iterate with the best objective.
double warped_distance(const WarpModel& model, const NccPredictConfig& predict,
                       std::span<const double> signal, std::span<const double> target,
                       int n_channels, int length) {
  const int n_layers = model.config().n_layers;
  const std::size_t n_params = static_cast<std::size_t>(model.dim()) * n_layers;
  std::vector<double> u(n_params, 0.0);
  std::vector<double> grad_u(n_params);
  Adam adam(n_params);
  double best_objective = std::numeric_limits<double>::infinity();
  double best_distance = 0.0;
  for (int step = 0; step <= predict.steps; ++step) {
    const WarpModel::Forward fwd =
        model.forward(signal, n_channels, length, color_stack(model.prior(), u, n_layers));
    const double dist = squared_distance(fwd.output, target);
    const double objective = dist + squared_norm(u);
    check_finite(objective, "prediction objective");
    if (objective < best_objective) {
      best_objective = objective;
      best_distance = dist;
    }
    if (step == predict.steps) break;
    std::vector<double> g(fwd.output.size());
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = 2.0 * (fwd.output[j] - target[j]);
    whitened_grad(model.prior(), model.backward(fwd, n_channels, length, std::move(g)), grad_u);
    for (std::size_t k = 0; k < n_params; ++k) grad_u[k] += 2.0 * u[k];
    adam.step(u, grad_u, predict.learning_rate);
  }
  return best_distance;
}

}  // namespace

std::vector<int> ncc_predict(const NccModel& model, const TimeSeriesBatch& test) {
  if (!model.fitted) throw InvalidState("nearest-centroid model is not fitted");
  check_batch(test);
  const TimeSeriesBatch& cent = model.centroids;
  if (test.length != cent.length || test.n_channels != cent.n_channels) {
    throw InvalidArgument("test signals have shape " + std::to_string(test.n_channels) + "x" +
                          std::to_string(test.length) + ", centroids " +
                          std::to_string(cent.n_channels) + "x" + std::to_string(cent.length));
  }
  std::optional<WarpModel> warp_model;
  if (model.aligned) warp_model.emplace(model.config);
  std::vector<int> predicted(test.n_signals);
  parallel_for(test.n_signals, model.aligned ? model.config.threads : 1, [&](std::size_t i) {
    const auto y = test.signal(static_cast<int>(i));
    double best = std::numeric_limits<double>::infinity();
    int best_label = cent.labels.empty() ? 1 : cent.labels[0];
    for (int k = 0; k < cent.n_signals; ++k) {
      const double d = model.aligned ? warped_distance(*warp_model, model.predict, y,
                                                       cent.signal(k), test.n_channels,
                                                       test.length)
                                     : squared_distance(y, cent.signal(k));
      if (d < best) {
        best = d;
        best_label = cent.labels[k];
      }
    }
    predicted[i] = best_label;
  });
  return predicted;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw InvalidArgument("accuracy needs equally many predictions and labels");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------- synthetic data

namespace {

double bump(double x, double center, double width) {
  const double s = (x - center) / width;
  return std::exp(-s * s);
}

}  // namespace

double synthetic_base(int label, double x, double class_gap) {
  // Two narrow peaks; higher classes carry a growing shoulder on the right
  // flank of the second one. A small shift of that peak changes the signal
  // along the shoulder, so misalignment and class identity interact.
  return bump(x, 0.3, 0.04) + 0.5 * bump(x, 0.65, 0.04) +
         class_gap * (label - 1) * bump(x, 0.69, 0.04);
}

TimeSeriesBatch synthetic_batch(const SyntheticConfig& config) {
  if (config.n_classes < 1 || config.n_per_class < 1) {
    throw InvalidArgument("synthetic batch needs at least one class and one signal per class");
  }
  if (config.noise < 0.0) throw InvalidArgument("noise level must be nonnegative");
  const CpaBasis basis(Tessellation(Domain{}, config.n_cells), BasisMethod::Sparse,
                       config.zero_boundary);
  const PriorCovariance prior(basis, config.lambda_sigma, config.lambda_smooth);
  const std::vector<double> grid = uniform_grid(config.length);
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  TimeSeriesBatch out(config.n_classes * config.n_per_class, config.length);
  for (int k = 1; k <= config.n_classes; ++k) {
    double amplitude = 0.0;
    for (double x : grid) amplitude = std::max(amplitude, std::abs(synthetic_base(k, x, config.class_gap)));
    for (int m = 0; m < config.n_per_class; ++m) {
      const int i = (k - 1) * config.n_per_class + m;
      const std::vector<double> theta = prior.sample(rng);
      const std::vector<double> phi =
          transform_points(basis.tessellation(), basis.theta_to_field(theta), grid, 1.0);
      auto y = out.signal(i);
      for (int j = 0; j < config.length; ++j) {
        y[j] = synthetic_base(k, phi[j], config.class_gap) + config.noise * amplitude * normal(rng);
      }
      out.labels.push_back(k);
    }
  }
  return out;
}

}  // namespace difw
