#include "tmkt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "tmkt/errors.hpp"
#include "tmkt/rng.hpp"

namespace tmkt::train {

using nlohmann::json;

namespace {

obj::Matrix to_matrix(const std::vector<float>& v, int rows, int cols, std::size_t offset = 0) {
  obj::Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = v[offset + static_cast<std::size_t>(r) * cols + c];
  return m;
}

obj::Vector to_vector(const std::vector<float>& v) {
  obj::Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

void check_dataset(const std::vector<data::PairedSample>& samples, const SeqShape& shape, int classes,
                   const char* split) {
  for (const auto& s : samples) {
    if (!(s.static_seq.shape == shape) || !(s.event_seq.shape == shape)) {
      throw Error(ErrorCategory::Data, std::string(split) + " sample " + s.id + " has shape " +
                                           s.event_seq.shape.to_string() + ", expected " + shape.to_string());
    }
    if (s.static_seq.label != s.event_seq.label || s.label() < 0 || s.label() >= classes) {
      throw Error(ErrorCategory::Data, std::string(split) + " sample " + s.id + " has an invalid label pairing");
    }
  }
}

}  // namespace

Dataset load_dataset(const std::string& manifest_path, int timesteps) {
  if (manifest_path.empty()) throw Error(ErrorCategory::Config, "run config: no dataset given");
  const data::DatasetManifest manifest = data::load_manifest(manifest_path);
  Dataset d;
  d.num_classes = static_cast<int>(manifest.class_names.size());
  d.train = data::load_pairs(manifest, "train");
  d.test = data::load_pairs(manifest, "test");
  if (d.train.empty()) throw Error(ErrorCategory::Data, "dataset has no training samples");
  d.shape = d.train.front().static_seq.shape;
  if (d.shape.timesteps != timesteps) {
    throw Error(ErrorCategory::Config, "dataset sequences have T=" + std::to_string(d.shape.timesteps) +
                                           " but the run config asks for T=" + std::to_string(timesteps));
  }
  check_dataset(d.train, d.shape, d.num_classes, "train");
  check_dataset(d.test, d.shape, d.num_classes, "test");
  return d;
}

snn::NetworkSpec network_spec_for(const RunConfig& config, const Dataset& data) {
  snn::NetworkSpec spec = config.arch;
  spec.in_channels = data.shape.channels;
  spec.height = data.shape.height;
  spec.width = data.shape.width;
  spec.timesteps = data.shape.timesteps;
  spec.num_classes = data.num_classes;
  return spec;
}

std::string to_json_line(const MetricsRecord& r, bool include_wall) {
  json j = {{"schema", kMetricsSchema},
            {"epoch", r.epoch},
            {"strategy", r.strategy},
            {"train_accuracy", r.train_accuracy},
            {"eval_accuracy", r.eval_accuracy},
            {"loss",
             {{"cls_m", r.loss.cls_m},
              {"rda", r.loss.rda},
              {"da", r.loss.da},
              {"cls_e", r.loss.cls_e},
              {"mag", r.loss.mag},
              {"mrp", r.loss.mrp},
              {"total", r.loss.total},
              {"lambda", r.loss.lambda}}},
            {"mean_gate", r.mean_gate},
            {"grad_variance_trace", r.grad_variance_trace},
            {"skipped_cka", r.skipped_cka},
            {"batches", r.batches}};
  if (include_wall) j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

std::vector<std::vector<int>> class_balanced_batches(std::span<const int> labels, int batch_size,
                                                     std::uint64_t seed) {
  if (batch_size < 2) throw Error(ErrorCategory::Config, "batch_size must be >= 2");
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  std::size_t longest = 0;
  for (auto& [label, idx] : by_class) {
    Engine rng(derive_seed(seed, static_cast<std::uint64_t>(label)));
    std::shuffle(idx.begin(), idx.end(), rng);
    longest = std::max(longest, idx.size());
  }
  std::vector<int> order;
  order.reserve(labels.size());
  for (std::size_t r = 0; r < longest; ++r) {
    for (const auto& [label, idx] : by_class) {
      if (r < idx.size()) order.push_back(idx[r]);
    }
  }
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    if (end - start >= 2) batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

int predict(const std::vector<float>& logits, int timesteps, int classes) {
  int best = 0;
  double best_score = -1e300;
  for (int c = 0; c < classes; ++c) {
    double s = 0.0;
    for (int t = 0; t < timesteps; ++t) s += logits[static_cast<std::size_t>(t) * classes + c];
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

Trainer::Trainer(RunConfig config, const Dataset& data)
    : config_(std::move(config)),
      data_(&data),
      mix_(config_.mix_spec()),
      net_(network_spec_for(config_, data), config_.lif, config_.seed),
      gate_(data.shape.timesteps) {
  config_.validate();
  for (const auto& t : net_.parameters()) {
    m_.emplace_back(t.data.size(), 0.0);
    v_.emplace_back(t.data.size(), 0.0);
  }
  m_theta_.assign(gate_.theta.size(), 0.0);
  v_theta_.assign(gate_.theta.size(), 0.0);
}

std::vector<int> Trainer::train_labels() const {
  std::vector<int> labels;
  for (const auto& s : data_->train) labels.push_back(s.label());
  return labels;
}

std::vector<tsm::SwitchPlan> Trainer::plan_batch(std::size_t n, Strategy strategy, double ratio,
                                                 const tsm::EpochProgress& progress, std::uint64_t seed) const {
  const int T = net_.spec().timesteps;
  tsm::MixSpec spec = mix_;
  if (ratio != spec.ratio) {
    spec.ratio = ratio;
    if (spec.schedule == tsm::Schedule::ProbabilisticTSM) spec.p = tsm::solve_p(T, ratio, spec.mode);
  }
  std::vector<tsm::SwitchPlan> plans;
  plans.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t s = derive_seed(seed, i);
    if (strategy == Strategy::TMKT) {
      plans.push_back(tsm::schedule_t_star(spec, progress, s));
    } else {
      Engine rng(s);
      const bool event = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < ratio;
      plans.push_back(tsm::plan_from_event_count(tsm::Layout::RtoD, T, event ? T : 0, 0));
    }
  }
  return plans;
}

BatchOutput Trainer::compute_batch(std::span<const int> indices, std::span<const tsm::SwitchPlan> plans,
                                   std::uint64_t pairing_seed, GradTarget target, snn::TensorList<float>& grads,
                                   std::vector<double>& d_theta) const {
  const auto& samples = data_->train;
  const std::size_t n = indices.size();
  if (n < 2 || plans.size() != n) throw Error(ErrorCategory::Domain, "compute_batch: need >= 2 samples and one plan each");
  const int T = net_.spec().timesteps;
  const int C = net_.spec().num_classes;
  const int f = net_.spec().feature_dim();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (d_theta.size() != static_cast<std::size_t>(T)) d_theta.assign(static_cast<std::size_t>(T), 0.0);

  BatchOutput out;
  out.samples = static_cast<int>(n);
  std::vector<int> labels(n);
  std::vector<tsm::MixedSample> mixed(n);
  std::vector<snn::ForwardRecord<float>> rec_m(n);
  std::vector<snn::OutputGrads<float>> up_m(n);
  obj::LossComponents comp;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples.at(static_cast<std::size_t>(indices[i]));
    labels[i] = s.label();
    mixed[i] = tsm::apply_plan(s.static_seq, s.event_seq, plans[i]);
    rec_m[i] = net_.forward(mixed[i].frames.data, snn::ClassHead::Mixed);
    const obj::TetResult tet = obj::tet_loss(to_matrix(rec_m[i].logits, T, C), labels[i]);
    comp.cls_m += tet.value * inv_n;
    up_m[i].logits.resize(static_cast<std::size_t>(T) * C);
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < C; ++c)
        up_m[i].logits[static_cast<std::size_t>(t) * C + c] = static_cast<float>(tet.grad(t, c) * inv_n);
  }

  if (target == GradTarget::MixedClassification) {
    out.loss = obj::total_loss(comp, 0.0);
    for (std::size_t i = 0; i < n; ++i) net_.backward(rec_m[i], up_m[i], grads);
    return out;
  }

  const double lambda = config_.lambda;
  std::vector<snn::ForwardRecord<float>> rec_e(n);
  std::vector<snn::OutputGrads<float>> up_e(n);
  std::vector<obj::Matrix> ce_grad(n);  // per-step d CE_t / d logits, T x C
  std::vector<double> cls_steps(static_cast<std::size_t>(T), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples.at(static_cast<std::size_t>(indices[i]));
    rec_e[i] = net_.forward(s.event_seq.data, snn::ClassHead::Event);
    if (predict(rec_e[i].logits, T, C) == labels[i]) ++out.event_correct;
    const obj::TetResult tet = obj::tet_loss(to_matrix(rec_e[i].logits, T, C), labels[i]);
    for (int t = 0; t < T; ++t) cls_steps[static_cast<std::size_t>(t)] += tet.per_step[static_cast<std::size_t>(t)] * inv_n;
    ce_grad[i] = tet.grad * static_cast<double>(T);
    up_e[i].membrane.assign(static_cast<std::size_t>(T) * f, 0.0f);
  }

  // Alignment on penultimate pre-reset potentials; mixed row i meets a same-class event sample.
  const std::vector<int> pairs = obj::pair_same_class(labels, labels, pairing_seed);
  std::vector<obj::Matrix> vm(static_cast<std::size_t>(T)), ve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    vm[static_cast<std::size_t>(t)].resize(static_cast<Eigen::Index>(n), f);
    ve[static_cast<std::size_t>(t)].resize(static_cast<Eigen::Index>(n), f);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = static_cast<std::size_t>(t) * f;
      for (int k = 0; k < f; ++k) {
        vm[static_cast<std::size_t>(t)](static_cast<Eigen::Index>(i), k) = rec_m[i].membrane[off + k];
        ve[static_cast<std::size_t>(t)](static_cast<Eigen::Index>(i), k) =
            rec_e[static_cast<std::size_t>(pairs[i])].membrane[off + k];
      }
    }
  }
  const obj::DaResult da = obj::da_loss(vm, ve);
  const obj::RdaResult rda = obj::rda_loss(da.per_step, cls_steps, gate_, da.skipped);
  out.skipped_cka = da.skipped_steps;
  comp.da = da.value;
  comp.rda = rda.value;
  for (double c : cls_steps) comp.cls_e += c / T;

  for (int t = 0; t < T; ++t) {
    const std::size_t ts = static_cast<std::size_t>(t);
    d_theta[ts] += lambda * rda.d_theta[ts];
    // d da_t / dV = T * (d DA / dV), since DA averages da_t over steps.
    const double w_da = lambda * rda.d_da[ts] * T;
    const double w_cls = lambda * rda.d_cls[ts] * inv_n;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = ts * f;
      if (up_m[i].membrane.empty()) up_m[i].membrane.assign(static_cast<std::size_t>(T) * f, 0.0f);
      auto& dst_e = up_e[static_cast<std::size_t>(pairs[i])].membrane;
      for (int k = 0; k < f; ++k) {
        up_m[i].membrane[off + k] += static_cast<float>(w_da * da.d_mixed[ts](static_cast<Eigen::Index>(i), k));
        dst_e[off + k] += static_cast<float>(w_da * da.d_event[ts](static_cast<Eigen::Index>(i), k));
      }
      if (up_e[i].logits.empty()) up_e[i].logits.assign(static_cast<std::size_t>(T) * C, 0.0f);
      for (int c = 0; c < C; ++c) {
        up_e[i].logits[ts * C + c] = static_cast<float>(w_cls * ce_grad[i](t, c));
      }
    }
  }

  if (config_.aux_losses) {
    for (std::size_t i = 0; i < n; ++i) {
      const obj::MagResult mag = obj::mag_loss(to_vector(rec_m[i].modality_prob), mixed[i].modality_labels);
      const obj::MrpResult mrp = obj::mrp_loss_target(to_vector(rec_m[i].ratio_prob), mixed[i].static_ratio_target);
      comp.mag += mag.value * inv_n;
      comp.mrp += mrp.value * inv_n;
      up_m[i].modality_prob.resize(static_cast<std::size_t>(T));
      up_m[i].ratio_prob.resize(static_cast<std::size_t>(T));
      for (int t = 0; t < T; ++t) {
        up_m[i].modality_prob[static_cast<std::size_t>(t)] = static_cast<float>(mag.grad(t) * inv_n);
        up_m[i].ratio_prob[static_cast<std::size_t>(t)] = static_cast<float>(mrp.grad(t) * inv_n);
      }
    }
  }

  out.loss = obj::total_loss(comp, lambda);
  // Fixed reduction order: sample by sample, mixed stream before event stream.
  for (std::size_t i = 0; i < n; ++i) {
    net_.backward(rec_m[i], up_m[i], grads);
    net_.backward(rec_e[i], up_e[i], grads);
  }
  return out;
}

void Trainer::apply_update(const snn::TensorList<float>& grads, std::span<const double> d_theta) {
  const auto& o = config_.optimizer;
  auto& params = net_.parameters();
  ++step_;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step_));
  const bool adam = o.kind == "adam";
  auto update = [&](double& p, double g, double& m, double& v) {
    g += o.weight_decay * p;
    if (!adam) {
      p -= o.lr * g;
      return;
    }
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g * g;
    p -= o.lr * (m / bc1) / (std::sqrt(v / bc2) + o.eps);
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& data = params[k].data;
    for (std::size_t i = 0; i < data.size(); ++i) {
      double p = data[i];
      update(p, grads[k].data[i], m_[k][i], v_[k][i]);
      data[i] = static_cast<float>(p);
    }
  }
  for (std::size_t t = 0; t < gate_.theta.size(); ++t) {
    update(gate_.theta[t], d_theta[t], m_theta_[t], v_theta_[t]);
  }
}

MetricsRecord Trainer::run_epoch(int epoch) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<int> labels = train_labels();
  const auto batches =
      class_balanced_batches(labels, config_.batch_size, derive_seed(config_.seed, streams::kShuffle, epoch));

  MetricsRecord rec;
  rec.epoch = epoch;
  rec.strategy = std::string(to_string(config_.strategy));
  obj::LossComponents sum;
  int correct = 0, seen = 0;
  // Welford over flattened per-batch gradients; only the trace is kept.
  std::vector<double> mean;
  double m2 = 0.0;
  std::vector<double> flat;

  for (std::size_t b = 0; b < batches.size(); ++b) {
    const std::uint64_t counter = static_cast<std::uint64_t>(epoch) * 1000003ULL + b;
    const tsm::EpochProgress progress{static_cast<int>(b), static_cast<int>(batches.size()), epoch,
                                      std::max(1, config_.epochs)};
    const auto plans = plan_batch(batches[b].size(), config_.strategy, config_.ratio, progress,
                                  derive_seed(config_.seed, streams::kMix, counter));
    auto grads = net_.zero_grads();
    std::vector<double> d_theta(gate_.theta.size(), 0.0);
    const BatchOutput out = compute_batch(batches[b], plans, derive_seed(config_.seed, streams::kPairing, counter),
                                          GradTarget::Total, grads, d_theta);
    flat.clear();
    for (const auto& g : grads) flat.insert(flat.end(), g.data.begin(), g.data.end());
    if (mean.empty()) mean.assign(flat.size(), 0.0);
    const double k = static_cast<double>(b + 1);
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double delta = flat[i] - mean[i];
      mean[i] += delta / k;
      m2 += delta * (flat[i] - mean[i]);
    }
    apply_update(grads, d_theta);

    sum.cls_m += out.loss.cls_m;
    sum.rda += out.loss.rda;
    sum.da += out.loss.da;
    sum.cls_e += out.loss.cls_e;
    sum.mag += out.loss.mag;
    sum.mrp += out.loss.mrp;
    rec.skipped_cka += out.skipped_cka;
    correct += out.event_correct;
    seen += out.samples;
  }
  rec.batches = static_cast<int>(batches.size());
  const double nb = std::max<std::size_t>(1, batches.size());
  const obj::LossComponents mean_comp{sum.cls_m / nb, sum.rda / nb, sum.da / nb,
                                      sum.cls_e / nb, sum.mag / nb, sum.mrp / nb};
  rec.loss = obj::total_loss(mean_comp, config_.lambda);
  rec.train_accuracy = seen > 0 ? static_cast<double>(correct) / seen : 0.0;
  rec.grad_variance_trace = batches.size() > 1 ? m2 / (static_cast<double>(batches.size()) - 1.0) : 0.0;
  rec.mean_gate = gate_.mean_gate();
  rec.eval_accuracy = data_->test.empty() ? 0.0 : evaluate(data_->test);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

double Trainer::evaluate(const std::vector<data::PairedSample>& samples) const {
  if (samples.empty()) return 0.0;
  const int T = net_.spec().timesteps;
  const int C = net_.spec().num_classes;
  int correct = 0;
  for (const auto& s : samples) {
    if (!s.event_seq.all(Modality::Event)) {
      throw Error(ErrorCategory::Data, "event-only evaluation received static frames in sample " + s.id);
    }
    const auto rec = net_.forward(s.event_seq.data, snn::ClassHead::Event);
    if (predict(rec.logits, T, C) == s.label()) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

ckpt::Checkpoint Trainer::checkpoint() const {
  return {net_.spec(), net_.lif(), net_.parameters(), gate_.theta};
}

TrainResult train(const RunConfig& config, std::ostream* log) {
  const Dataset data = load_dataset(config.dataset, config.timesteps);
  return train(config, data, log);
}

TrainResult train(const RunConfig& config, const Dataset& data, std::ostream* log) {
  Trainer trainer(config, data);
  std::ofstream metrics;
  if (!config.metrics_path.empty()) {
    const std::filesystem::path p(config.metrics_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    metrics.open(p, std::ios::trunc);
    if (!metrics) throw Error(ErrorCategory::Config, "cannot open metrics file '" + config.metrics_path + "'");
  }
  TrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    MetricsRecord rec = trainer.run_epoch(epoch);
    if (metrics) metrics << to_json_line(rec) << '\n' << std::flush;
    if (log) {
      *log << "[" << to_string(config.strategy) << "] epoch " << epoch + 1 << "/" << config.epochs
           << " loss " << rec.loss.total << " train_acc " << rec.train_accuracy << " eval_acc "
           << rec.eval_accuracy << " (" << rec.wall_seconds << " s)\n";
    }
    result.history.push_back(std::move(rec));
  }
  result.final_eval_accuracy =
      result.history.empty() ? trainer.evaluate(data.test) : result.history.back().eval_accuracy;
  result.final_checkpoint = trainer.checkpoint();
  if (!config.checkpoint_path.empty()) ckpt::save_checkpoint(config.checkpoint_path, result.final_checkpoint);
  return result;
}

double evaluate_checkpoint(const ckpt::Checkpoint& checkpoint, const std::vector<data::PairedSample>& samples) {
  const auto net = ckpt::restore_network(checkpoint);
  const int T = net.spec().timesteps;
  const int C = net.spec().num_classes;
  if (samples.empty()) return 0.0;
  int correct = 0;
  for (const auto& s : samples) {
    if (!s.event_seq.all(Modality::Event)) {
      throw Error(ErrorCategory::Data, "event-only evaluation received static frames in sample " + s.id);
    }
    if (s.event_seq.data.size() != static_cast<std::size_t>(net.spec().frame_size()) * T) {
      throw Error(ErrorCategory::Data, "sample " + s.id + " does not match the checkpoint architecture");
    }
    if (predict(net.forward(s.event_seq.data, snn::ClassHead::Event).logits, T, C) == s.label()) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace tmkt::train
