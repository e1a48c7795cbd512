#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "tmkt/spiking_core.hpp"
#include "tmkt/tsm_sampler.hpp"

namespace tmkt {

enum class Strategy { TMKT, BatchMixing };

Strategy parse_strategy(std::string_view text);
std::string_view to_string(Strategy strategy);

struct OptimizerConfig {
  std::string kind = "adam";
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Everything a training run depends on. Spatial size, channel count and the
/// number of classes come from the dataset; the remaining architecture fields
/// come from here.
struct RunConfig {
  std::string dataset;  // manifest file or its directory
  snn::NetworkSpec arch;
  snn::LIFParams lif;
  int timesteps = 8;
  double ratio = 0.4;  // r_m, target replaced fraction
  tsm::MixMode mode = tsm::MixMode::Unconditional;
  tsm::Schedule schedule = tsm::Schedule::ProbabilisticTSM;
  tsm::Layout layout = tsm::Layout::RtoD;
  double lambda = 0.5;
  OptimizerConfig optimizer;
  int epochs = 30;
  int batch_size = 10;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::TMKT;
  bool deterministic = true;
  bool aux_losses = true;  // MAG and MRP
  std::string metrics_path;
  std::string checkpoint_path;

  /// Throws Config on invalid values (lambda < 0, batch < 2, infeasible ratio, ...).
  void validate() const;
  tsm::MixSpec mix_spec() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);

}  // namespace tmkt
