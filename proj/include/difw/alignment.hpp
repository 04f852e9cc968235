#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "difw/basis.hpp"
#include "difw/gradient.hpp"
#include "json.hpp"

namespace difw {

/// N signals of T samples on the uniform grid x_j = j / (T - 1), optionally
/// with several channels and class labels 1..K. Values are stored signal by
/// signal, channel by channel.
struct TimeSeriesBatch {
  int n_signals = 0;
  int n_channels = 1;
  int length = 0;
  std::vector<double> values;
  std::vector<int> labels;  // empty when unlabeled

  TimeSeriesBatch() = default;
  TimeSeriesBatch(int n_signals, int length, int n_channels = 1);

  /// One single-channel signal per row.
  static TimeSeriesBatch from_rows(const std::vector<std::vector<double>>& rows,
                                   std::vector<int> labels = {});

  double& at(int i, int c, int t) { return values[index(i, c, t)]; }
  double at(int i, int c, int t) const { return values[index(i, c, t)]; }
  /// All channels of signal i, contiguous.
  std::span<double> signal(int i);
  std::span<const double> signal(int i) const;
  std::span<const double> channel(int i, int c) const;

  bool labeled() const { return !labels.empty(); }
  /// Largest label (K), or 1 when unlabeled.
  int n_classes() const;
  /// Signals with label k, in their original order.
  TimeSeriesBatch subset(std::span<const int> indices) const;
  std::vector<int> members(int label) const;

  /// Throws InvalidArgument on inconsistent sizes or labels outside 1..K.
  void validate() const;

 private:
  std::size_t index(int i, int c, int t) const {
    return (static_cast<std::size_t>(i) * n_channels + c) * length + t;
  }
};

/// Uniform grid j / (T - 1), j = 0..T-1.
std::vector<double> uniform_grid(int length);

/// (1/N) sum_i ||z_i - mean_j z_j||^2 over all channels and samples.
double loss_data_single(const TimeSeriesBatch& warped);

/// sum_k (1/N_k) loss_data_single(class k). Every class 1..K must be present.
double loss_data_multi(const TimeSeriesBatch& warped, std::span<const int> labels);

/// (1/N) sum_i theta_i^T Sigma^-1 theta_i.
double loss_reg(const std::vector<std::vector<double>>& thetas, const PriorCovariance& prior);

struct AlignmentConfig {
  int n_cells = 16;
  bool zero_boundary = true;
  BasisMethod basis = BasisMethod::Sparse;
  double lambda_sigma = 0.3;
  double lambda_smooth = 0.5;
  int n_layers = 1;
  int n_squarings = 0;
  double learning_rate = 1e-3;
  int epochs = 500;
  int batch_size = 0;  // 0 or >= N: full batch, one step per epoch
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

/// Warp parameters of one signal: one theta per layer.
using ThetaStack = std::vector<std::vector<double>>;

struct LossRecord {
  double data = 0.0;
  double reg = 0.0;
  double total() const { return data + reg; }
};

struct AlignmentResult {
  std::vector<ThetaStack> thetas;   // per signal
  TimeSeriesBatch warped;
  TimeSeriesBatch centroids;        // one per class (one when unlabeled), labels 1..K
  std::vector<LossRecord> history;  // full-batch loss before training and after each epoch
};

/// Shared pieces of a warp model: tessellation, basis and prior of a config.
class WarpModel {
 public:
  explicit WarpModel(const AlignmentConfig& config);

  const AlignmentConfig& config() const { return config_; }
  const CpaBasis& basis() const { return basis_; }
  const PriorCovariance& prior() const { return prior_; }
  int dim() const { return basis_.dim(); }

  /// Applies the layer warps of `stack` to every channel of `signal`.
  std::vector<double> warp(std::span<const double> signal, int n_channels, int length,
                           const ThetaStack& stack) const;

  /// Layer-by-layer forward pass keeping what the backward pass needs.
  struct Forward {
    std::vector<std::vector<double>> inputs;     // per layer, the signal it warps
    std::vector<std::vector<double>> positions;  // per layer, phi_l on the grid
    std::vector<GradientMatrix> jacobians;       // per layer, d phi_l / d theta_l
    std::vector<double> output;
  };
  Forward forward(std::span<const double> signal, int n_channels, int length,
                  const ThetaStack& stack) const;
  /// d loss / d theta per layer from d loss / d output.
  ThetaStack backward(const Forward& fwd, int n_channels, int length,
                      std::vector<double> grad_out) const;

 private:
  AlignmentConfig config_;
  CpaBasis basis_;
  PriorCovariance prior_;
};

/// Joint alignment by Adam on the per-signal parameter stacks. Uses the
/// multi-class loss when the batch is labeled with K > 1, else the single one.
AlignmentResult align_joint(const TimeSeriesBatch& batch, const AlignmentConfig& config);

/// Applies given parameter stacks to a batch.
TimeSeriesBatch apply_warps(const TimeSeriesBatch& batch, const std::vector<ThetaStack>& thetas,
                            const AlignmentConfig& config);

/// Optimizer settings of the test-time warp toward a centroid.
struct NccPredictConfig {
  int steps = 100;
  double learning_rate = 1e-2;
};

struct NccModel {
  bool fitted = false;
  bool aligned = true;  // false: plain Euclidean nearest centroid
  AlignmentConfig config;
  NccPredictConfig predict;
  TimeSeriesBatch centroids;  // labels 1..K
};

/// Aligns each class separately; centroid k is the mean of aligned class k.
NccModel ncc_fit(const TimeSeriesBatch& train, const AlignmentConfig& config,
                 const NccPredictConfig& predict = {});
/// Centroids are the plain class means.
NccModel euclidean_ncc_fit(const TimeSeriesBatch& train);

/// Label of the nearest centroid per test signal; ties go to the lower label.
std::vector<int> ncc_predict(const NccModel& model, const TimeSeriesBatch& test);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Per-class base signals warped by latent prior samples plus Gaussian noise.
struct SyntheticConfig {
  int n_classes = 1;
  int n_per_class = 20;
  int length = 128;
  int n_cells = 16;
  bool zero_boundary = true;
  double lambda_sigma = 1e-2;
  double lambda_smooth = 0.5;
  double noise = 0.01;  // standard deviation relative to the base amplitude
  double class_gap = 0.02;  // shoulder height step between consecutive classes
  std::uint64_t seed = 0;
};

/// Base signal of class k (1-based) evaluated at x.
double synthetic_base(int label, double x, double class_gap = 0.02);

TimeSeriesBatch synthetic_batch(const SyntheticConfig& config);

void to_json(nlohmann::json& j, const AlignmentConfig& config);

}  // namespace difw
