#include "tmkt/run_config.hpp"

#include <fstream>
#include <sstream>

#include "json_fields.hpp"
#include "tmkt/errors.hpp"

namespace tmkt {

using nlohmann::json;

namespace detail {

json spec_to_json(const snn::NetworkSpec& s) {
  return {{"in_channels", s.in_channels}, {"height", s.height},   {"width", s.width},
          {"conv_channels", s.conv_channels}, {"kernel", s.kernel}, {"hidden", s.hidden},
          {"num_classes", s.num_classes}, {"timesteps", s.timesteps}, {"init_gain", s.init_gain}};
}

snn::NetworkSpec spec_from_json(const json& j, snn::NetworkSpec s) {
  s.in_channels = j.value("in_channels", s.in_channels);
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.conv_channels = j.value("conv_channels", s.conv_channels);
  s.kernel = j.value("kernel", s.kernel);
  s.hidden = j.value("hidden", s.hidden);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.timesteps = j.value("timesteps", s.timesteps);
  s.init_gain = j.value("init_gain", s.init_gain);
  return s;
}

json lif_to_json(const snn::LIFParams& p) {
  return {{"tau", p.tau},
          {"v_th", p.v_th},
          {"surrogate", std::string(snn::to_string(p.surrogate))},
          {"surrogate_width", p.surrogate_width}};
}

snn::LIFParams lif_from_json(const json& j, snn::LIFParams p) {
  p.tau = j.value("tau", p.tau);
  p.v_th = j.value("v_th", p.v_th);
  if (j.contains("surrogate")) p.surrogate = snn::parse_surrogate(j.at("surrogate").get<std::string>());
  p.surrogate_width = j.value("surrogate_width", p.surrogate_width);
  return p;
}

}  // namespace detail

Strategy parse_strategy(std::string_view text) {
  if (text == "tmkt" || text == "tsm") return Strategy::TMKT;
  if (text == "batch_mixing" || text == "bm") return Strategy::BatchMixing;
  throw Error(ErrorCategory::Config, "unknown strategy '" + std::string(text) + "'");
}

std::string_view to_string(Strategy strategy) {
  return strategy == Strategy::TMKT ? "tmkt" : "batch_mixing";
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCategory::Config, "run config: " + what); };
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (batch_size < 2) fail("batch_size must be >= 2 (alignment needs same-class partners)");
  if (epochs < 0) fail("epochs must be >= 0");
  if (timesteps < 1) fail("timesteps must be >= 1");
  if (!(ratio > 0.0 && ratio <= 1.0)) fail("ratio must lie in (0,1]");
  if (optimizer.kind != "adam" && optimizer.kind != "sgd") fail("optimizer kind must be 'adam' or 'sgd'");
  if (!(optimizer.lr > 0.0)) fail("learning rate must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    fail("Adam betas must lie in [0,1)");
  }
  if (mode == tsm::MixMode::Conditional && schedule == tsm::Schedule::ProbabilisticTSM &&
      ratio < tsm::conditional_lower_bound(timesteps) - 1e-12) {
    std::ostringstream msg;
    msg << "ratio " << ratio << " is infeasible in conditional mode for T=" << timesteps
        << " (needs >= " << tsm::conditional_lower_bound(timesteps) << ")";
    fail(msg.str());
  }
  try {
    lif.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

tsm::MixSpec RunConfig::mix_spec() const {
  if (schedule == tsm::Schedule::ProbabilisticTSM) return tsm::make_mix_spec(timesteps, ratio, mode, schedule, layout);
  tsm::MixSpec spec;
  spec.timesteps = timesteps;
  spec.ratio = ratio;
  spec.mode = mode;
  spec.schedule = schedule;
  spec.layout = layout;
  return spec;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  try {
    const json j = json::parse(text);
    c.dataset = j.value("dataset", c.dataset);
    if (j.contains("architecture")) {
      const json& a = j.at("architecture");
      c.arch = detail::spec_from_json(a, c.arch);
      c.lif = detail::lif_from_json(a, c.lif);
    }
    c.timesteps = j.value("timesteps", c.timesteps);
    c.ratio = j.value("ratio", c.ratio);
    if (j.contains("mix")) {
      const json& m = j.at("mix");
      if (m.contains("mode")) c.mode = tsm::parse_mix_mode(m.at("mode").get<std::string>());
      if (m.contains("schedule")) c.schedule = tsm::parse_schedule(m.at("schedule").get<std::string>());
      if (m.contains("layout")) c.layout = tsm::parse_layout(m.at("layout").get<std::string>());
    }
    c.lambda = j.value("lambda", c.lambda);
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      c.optimizer.kind = o.value("kind", c.optimizer.kind);
      c.optimizer.lr = o.value("lr", c.optimizer.lr);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
      c.optimizer.eps = o.value("eps", c.optimizer.eps);
      c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
    }
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    c.deterministic = j.value("deterministic", c.deterministic);
    c.aux_losses = j.value("aux_losses", c.aux_losses);
    c.metrics_path = j.value("metrics_path", c.metrics_path);
    c.checkpoint_path = j.value("checkpoint_path", c.checkpoint_path);
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::Config, std::string("run config: ") + e.what());
  }
  c.arch.timesteps = c.timesteps;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::Config, "cannot open config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig c = parse_run_config(text.str());
  // Relative dataset paths are taken relative to the config file.
  if (!c.dataset.empty() && std::filesystem::path(c.dataset).is_relative() && path.has_parent_path()) {
    const auto candidate = path.parent_path() / c.dataset;
    if (std::filesystem::exists(candidate)) c.dataset = candidate.string();
  }
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  json arch = detail::spec_to_json(c.arch);
  arch.update(detail::lif_to_json(c.lif));
  const json j = {{"dataset", c.dataset},
                  {"architecture", arch},
                  {"timesteps", c.timesteps},
                  {"ratio", c.ratio},
                  {"mix",
                   {{"mode", std::string(tsm::to_string(c.mode))},
                    {"schedule", std::string(tsm::to_string(c.schedule))},
                    {"layout", std::string(tsm::to_string(c.layout))}}},
                  {"lambda", c.lambda},
                  {"optimizer",
                   {{"kind", c.optimizer.kind},
                    {"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"weight_decay", c.optimizer.weight_decay}}},
                  {"epochs", c.epochs},
                  {"batch_size", c.batch_size},
                  {"seed", c.seed},
                  {"strategy", std::string(to_string(c.strategy))},
                  {"deterministic", c.deterministic},
                  {"aux_losses", c.aux_losses},
                  {"metrics_path", c.metrics_path},
                  {"checkpoint_path", c.checkpoint_path}};
  return j.dump(2);
}

}  // namespace tmkt
