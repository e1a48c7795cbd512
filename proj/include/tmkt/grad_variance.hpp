#pragma once

// Empirical gradient covariance of the mixed-stream classification loss at a
// frozen parameter snapshot, for time-step mixup versus batch mixing.
//
// Both strategies see the same batches (common random numbers). Time-step
// mixup replaces the last alpha*T frames of every sample; batch mixing makes
// each sample all-event with probability alpha.

#include <Eigen/Dense>
#include <cstdint>

#include "tmkt/run_config.hpp"
#include "tmkt/trainer.hpp"

namespace tmkt::train {

struct GradVarOptions {
  double alpha = 0.5;
  int num_batches = 200;
  std::uint64_t seed = 0;
  bool repeat_first_batch = false;  // removes the batch-to-batch variance source
};

struct GradVarResult {
  Strategy strategy = Strategy::TMKT;
  double trace = 0.0;    // trace of the sample covariance of per-batch gradients
  Eigen::MatrixXd gram;  // centered Gram matrix of the per-batch gradients
  int batches = 0;
  std::size_t dim = 0;
};

/// Throws Domain when num_batches < 2 or alpha*T is not an integer.
GradVarResult measure_gradient_variance(const Trainer& trainer, Strategy strategy, const GradVarOptions& options);

/// Sample-covariance trace of the bootstrap resample given by counts (sum = N).
double resampled_trace(const Eigen::MatrixXd& centered_gram, const Eigen::VectorXd& counts);

struct VarianceComparison {
  double alpha = 0.0;
  double trace_tsm = 0.0;
  double trace_bm = 0.0;
  double diff = 0.0;  // trace_bm - trace_tsm
  double ci_low = 0.0;
  double ci_high = 0.0;
  int resamples = 0;
};

/// Paired percentile bootstrap over batches (the same resampled indices for both strategies).
VarianceComparison compare_gradient_variance(const Trainer& trainer, const GradVarOptions& options,
                                             int resamples = 2000, double level = 0.95);

}  // namespace tmkt::train
