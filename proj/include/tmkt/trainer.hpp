#pragma once

// Two-stream training: every batch runs a mixed stream (time-step mixup or
// batch mixing) and the paired event stream through one shared backbone with
// separate class heads.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tmkt/checkpoint.hpp"
#include "tmkt/data_forge.hpp"
#include "tmkt/objectives.hpp"
#include "tmkt/run_config.hpp"
#include "tmkt/spiking_core.hpp"
#include "tmkt/tsm_sampler.hpp"

namespace tmkt::train {

struct Dataset {
  std::vector<data::PairedSample> train;
  std::vector<data::PairedSample> test;
  int num_classes = 0;
  SeqShape shape;
};

/// Loads and validates both splits; shape and label problems surface here, before training.
Dataset load_dataset(const std::string& manifest_path, int timesteps);

snn::NetworkSpec network_spec_for(const RunConfig& config, const Dataset& data);

inline constexpr int kMetricsSchema = 1;

struct MetricsRecord {
  int epoch = 0;
  std::string strategy;
  double train_accuracy = 0.0;  // event stream, event head, during the epoch
  double eval_accuracy = 0.0;   // event-only test split, after the epoch
  obj::LossBreakdown loss;      // epoch means of the components; total recomputed from them
  double mean_gate = 0.0;
  double grad_variance_trace = 0.0;  // trace of the covariance of per-batch gradients
  int skipped_cka = 0;
  int batches = 0;
  double wall_seconds = 0.0;
};

/// One JSON object per line. wall_seconds is omitted when include_wall is false.
std::string to_json_line(const MetricsRecord& record, bool include_wall = true);

/// Class-balanced batches: each class is shuffled, then classes are interleaved
/// round robin and cut into consecutive batches. Batches smaller than 2 are dropped.
std::vector<std::vector<int>> class_balanced_batches(std::span<const int> labels, int batch_size,
                                                     std::uint64_t seed);

enum class GradTarget {
  Total,                 // cls_m + lambda * rda + mag + mrp
  MixedClassification,  // cls_m only (mixed stream)
};

struct BatchOutput {
  obj::LossBreakdown loss;
  int event_correct = 0;
  int samples = 0;
  int skipped_cka = 0;
};

class Trainer {
 public:
  Trainer(RunConfig config, const Dataset& data);

  const RunConfig& config() const { return config_; }
  snn::SpikingNetwork<float>& network() { return net_; }
  const snn::SpikingNetwork<float>& network() const { return net_; }
  obj::AlignmentGate& gate() { return gate_; }
  const obj::AlignmentGate& gate() const { return gate_; }
  std::vector<int> train_labels() const;

  /// Mixing plan for each sample of a batch under the given strategy.
  /// Batch mixing makes each sample all-event with probability ratio.
  std::vector<tsm::SwitchPlan> plan_batch(std::size_t n, Strategy strategy, double ratio,
                                          const tsm::EpochProgress& progress, std::uint64_t seed) const;

  /// Forward + backward on training samples; gradients accumulate into grads
  /// (from network().zero_grads()) and d_theta (length T).
  BatchOutput compute_batch(std::span<const int> indices, std::span<const tsm::SwitchPlan> plans,
                            std::uint64_t pairing_seed, GradTarget target, snn::TensorList<float>& grads,
                            std::vector<double>& d_theta) const;

  void apply_update(const snn::TensorList<float>& grads, std::span<const double> d_theta);

  MetricsRecord run_epoch(int epoch);

  /// Event-only accuracy through the event head. Throws if a sample carries static frames.
  double evaluate(const std::vector<data::PairedSample>& samples) const;

  ckpt::Checkpoint checkpoint() const;

 private:
  RunConfig config_;
  const Dataset* data_;
  tsm::MixSpec mix_;
  snn::SpikingNetwork<float> net_;
  obj::AlignmentGate gate_;
  // Adam moments, parameters first, then the gate.
  std::vector<std::vector<double>> m_, v_;
  std::vector<double> m_theta_, v_theta_;
  std::int64_t step_ = 0;
};

/// Predicted class: argmax of the time-averaged logits.
int predict(const std::vector<float>& logits, int timesteps, int classes);

struct TrainResult {
  std::vector<MetricsRecord> history;
  double final_eval_accuracy = 0.0;
  ckpt::Checkpoint final_checkpoint;
};

/// Full run. Writes metrics_path (JSONL) and checkpoint_path when set; logs to log when non-null.
TrainResult train(const RunConfig& config, std::ostream* log = nullptr);
TrainResult train(const RunConfig& config, const Dataset& data, std::ostream* log = nullptr);

double evaluate_checkpoint(const ckpt::Checkpoint& checkpoint, const std::vector<data::PairedSample>& samples);

}  // namespace tmkt::train
