#include "tmkt/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "tmkt/checkpoint.hpp"
#include "tmkt/data_forge.hpp"
#include "tmkt/errors.hpp"
#include "tmkt/grad_variance.hpp"
#include "tmkt/objectives.hpp"
#include "tmkt/rng.hpp"
#include "tmkt/run_config.hpp"
#include "tmkt/trainer.hpp"
#include "tmkt/tsm_sampler.hpp"
#include "tmkt/variance_lab.hpp"

namespace tmkt {

using nlohmann::json;

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::MatrixXd matrix_from_json(const json& j, const char* name) {
  const auto rows = j.at(name).get<std::vector<std::vector<double>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = n == 0 ? 0 : static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != m) {
      throw Error(ErrorCategory::Config, std::string("model file: ragged matrix '") + name + "'");
    }
    for (Eigen::Index k = 0; k < m; ++k) out(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  return out;
}

var::GradientModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::Config, "cannot open model file '" + path + "'");
  var::GradientModel m;
  try {
    const json j = json::parse(in);
    const auto mu_a = j.at("mu_a").get<std::vector<double>>();
    const auto mu_e = j.at("mu_e").get<std::vector<double>>();
    m.mu_a = Eigen::Map<const Eigen::VectorXd>(mu_a.data(), static_cast<Eigen::Index>(mu_a.size()));
    m.mu_e = Eigen::Map<const Eigen::VectorXd>(mu_e.data(), static_cast<Eigen::Index>(mu_e.size()));
    m.sigma_a = matrix_from_json(j, "sigma_a");
    m.sigma_e = matrix_from_json(j, "sigma_e");
    m.r_a = matrix_from_json(j, "r_a");
    m.r_e = matrix_from_json(j, "r_e");
    m.r_ae = matrix_from_json(j, "r_ae");
    m.alpha = j.at("alpha").get<double>();
    m.timesteps = j.at("timesteps").get<int>();
    m.batch = j.at("batch").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::Config, std::string("model file: ") + e.what());
  }
  m.validate();
  return m;
}

json record_json(const train::MetricsRecord& r) { return json::parse(train::to_json_line(r)); }

struct Flags {
  // shared
  int timesteps = -1;  // per-command default when unset
  double ratio = 0.4;
  std::string mode = "unconditional";
  std::string schedule = "probabilistic";
  std::string layout = "r2d";
  std::uint64_t seed = 0;
  std::int64_t draws = 100000;
  int epoch = 0;
  int max_epochs = 1;
  // gen-data
  int classes = 5;
  int per_class = 40;
  int size = 24;
  double threshold = 0.1;
  double test_fraction = 0.25;
  std::string out;
  // mix
  std::string static_path, event_path;
  int t_star = 0;
  // train / eval / gradvar
  std::string config, dataset, checkpoint, metrics, strategy, split = "test";
  int epochs = -1;
  bool seed_set = false;
  double alpha = -1.0;
  int batches = 200;
  int resamples = 2000;
  bool repeat_first = false;
  // varsim
  int dim = 2;
  int batch = 8;
  std::int64_t replications = 100000;
  std::string model_file;
  // cka-check
  int n = 16;
  int d1 = 8;
  int d2 = 6;
};

int run_solve_p(const Flags& f, std::ostream& out) {
  const auto mode = tsm::parse_mix_mode(f.mode);
  const double p = tsm::solve_p(f.timesteps, f.ratio, mode);
  const json j = {{"timesteps", f.timesteps},
                  {"ratio", f.ratio},
                  {"mode", f.mode},
                  {"p", p},
                  {"achieved_expectation", tsm::expected_replaced(f.timesteps, p, mode)},
                  {"target_expectation", f.timesteps * f.ratio}};
  out << j.dump(2) << '\n';
  return 0;
}

int run_sample_tstar(const Flags& f, std::ostream& out) {
  if (f.draws < 1) throw Error(ErrorCategory::Usage, "--draws must be >= 1");
  const auto mode = tsm::parse_mix_mode(f.mode);
  const auto schedule = tsm::parse_schedule(f.schedule);
  const auto layout = tsm::parse_layout(f.layout);
  tsm::MixSpec spec;
  if (schedule == tsm::Schedule::ProbabilisticTSM) {
    spec = tsm::make_mix_spec(f.timesteps, f.ratio, mode, schedule, layout);
  } else {
    spec.timesteps = f.timesteps;
    spec.ratio = f.ratio;
    spec.mode = mode;
    spec.schedule = schedule;
    spec.layout = layout;
  }
  std::vector<std::int64_t> hist;
  if (schedule == tsm::Schedule::ProbabilisticTSM) {
    hist = tsm::t_star_histogram(spec, f.draws, f.seed);
  } else {
    hist.assign(static_cast<std::size_t>(f.timesteps) + 1, 0);
    const tsm::EpochProgress progress{0, 1, f.epoch, f.max_epochs};
    for (std::int64_t i = 0; i < f.draws; ++i) {
      const auto plan = tsm::schedule_t_star(spec, progress, derive_seed(f.seed, static_cast<std::uint64_t>(i)));
      ++hist[static_cast<std::size_t>(plan.t_star - 1)];
    }
  }
  double replaced = 0.0;
  for (std::size_t k = 0; k < hist.size(); ++k) {
    replaced += static_cast<double>(hist[k]) * static_cast<double>(f.timesteps - static_cast<int>(k));
  }
  json j = {{"timesteps", f.timesteps},
            {"ratio", f.ratio},
            {"mode", f.mode},
            {"schedule", f.schedule},
            {"layout", f.layout},
            {"draws", f.draws},
            {"histogram", hist},
            {"histogram_index", "entry k counts draws with t_star = k + 1"},
            {"mean_replaced", replaced / static_cast<double>(f.draws)}};
  if (schedule == tsm::Schedule::ProbabilisticTSM) {
    j["p"] = spec.p;
    j["expected_replaced"] = tsm::expected_replaced(f.timesteps, spec.p, mode);
  }
  out << j.dump(2) << '\n';
  return 0;
}

int run_gen_data(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.out.empty()) throw Error(ErrorCategory::Usage, "gen-data needs --out");
  data::GeneratorParams p;
  p.classes = f.classes;
  p.per_class = f.per_class;
  p.height = p.width = f.size;
  p.timesteps = f.timesteps;
  p.seed = f.seed;
  p.contrast_threshold = f.threshold;
  p.test_fraction = f.test_fraction;
  err << "generating " << p.classes * p.per_class << " paired samples into " << f.out << '\n';
  const auto m = data::gen_paired_dataset(p, f.out);
  int n_test = 0;
  for (const auto& s : m.samples) n_test += s.split == "test";
  out << json{{"manifest", (std::filesystem::path(f.out) / data::kManifestName).string()},
              {"classes", m.class_names},
              {"samples", m.samples.size()},
              {"train", static_cast<int>(m.samples.size()) - n_test},
              {"test", n_test},
              {"shape", {p.timesteps, 2, p.height, p.width}}}
             .dump(2)
      << '\n';
  return 0;
}

int run_mix(const Flags& f, std::ostream& out) {
  if (f.static_path.empty() || f.event_path.empty()) throw Error(ErrorCategory::Usage, "mix needs --static and --event");
  const FrameSeq s = io::load_sequence(f.static_path, Modality::Static, 0);
  const FrameSeq e = io::load_sequence(f.event_path, Modality::Event, 0);
  const int T = s.timesteps();
  tsm::MixedSample mixed;
  if (f.t_star > 0) {
    mixed = tsm::mix_sequence(s, e, f.t_star);
  } else {
    tsm::MixSpec spec;
    double ratio = f.ratio;
    auto mode = tsm::parse_mix_mode(f.mode);
    auto schedule = tsm::parse_schedule(f.schedule);
    auto layout = tsm::parse_layout(f.layout);
    if (!f.config.empty()) {
      const RunConfig c = load_run_config(f.config);
      ratio = c.ratio;
      mode = c.mode;
      schedule = c.schedule;
      layout = c.layout;
    }
    spec = schedule == tsm::Schedule::ProbabilisticTSM ? tsm::make_mix_spec(T, ratio, mode, schedule, layout)
                                                       : tsm::MixSpec{T, ratio, 1.0, mode, schedule, layout};
    const auto plan = tsm::schedule_t_star(spec, {0, 1, f.epoch, f.max_epochs}, f.seed);
    mixed = tsm::apply_plan(s, e, plan);
  }
  if (!f.out.empty()) io::save_sequence(f.out, mixed.frames);
  std::vector<int> labels(mixed.modality_labels.begin(), mixed.modality_labels.end());
  out << json{{"t_star", mixed.t_star},
              {"modality_labels", labels},
              {"static_ratio_target", mixed.static_ratio_target},
              {"shape", {T, s.shape.channels, s.shape.height, s.shape.width}},
              {"out", f.out}}
             .dump(2)
      << '\n';
  return 0;
}

RunConfig config_with_overrides(const Flags& f) {
  if (f.config.empty()) throw Error(ErrorCategory::Usage, "--config is required");
  RunConfig c = load_run_config(f.config);
  if (!f.dataset.empty()) c.dataset = f.dataset;
  if (f.epochs >= 0) c.epochs = f.epochs;
  if (f.seed_set) c.seed = f.seed;
  if (!f.strategy.empty()) c.strategy = parse_strategy(f.strategy);
  if (!f.metrics.empty()) c.metrics_path = f.metrics;
  if (!f.checkpoint.empty()) c.checkpoint_path = f.checkpoint;
  c.validate();
  return c;
}

int run_train(const Flags& f, std::ostream& out, std::ostream& err) {
  const RunConfig c = config_with_overrides(f);
  const auto result = train::train(c, &err);
  json history = json::array();
  for (const auto& r : result.history) history.push_back(record_json(r));
  out << json{{"strategy", std::string(to_string(c.strategy))},
              {"epochs", c.epochs},
              {"final_eval_accuracy", result.final_eval_accuracy},
              {"checkpoint", c.checkpoint_path},
              {"metrics", c.metrics_path},
              {"history", history}}
             .dump(2)
      << '\n';
  return 0;
}

int run_eval(const Flags& f, std::ostream& out) {
  if (f.checkpoint.empty()) throw Error(ErrorCategory::Usage, "eval needs --checkpoint");
  std::string dataset = f.dataset;
  if (dataset.empty() && !f.config.empty()) dataset = load_run_config(f.config).dataset;
  if (dataset.empty()) throw Error(ErrorCategory::Usage, "eval needs --dataset or --config");
  const auto ckpt = ckpt::load_checkpoint(f.checkpoint);
  const auto manifest = data::load_manifest(dataset);
  const auto samples = data::load_pairs(manifest, f.split == "all" ? "" : f.split);
  const double acc = train::evaluate_checkpoint(ckpt, samples);
  out << json{{"accuracy", acc}, {"samples", samples.size()}, {"split", f.split}}.dump(2) << '\n';
  return 0;
}

int run_gradvar(const Flags& f, std::ostream& out, std::ostream& err) {
  const RunConfig c = config_with_overrides(f);
  const auto data = train::load_dataset(c.dataset, c.timesteps);
  const train::Trainer trainer(c, data);
  train::GradVarOptions opt;
  opt.alpha = f.alpha >= 0.0 ? f.alpha : c.ratio;
  opt.num_batches = f.batches;
  opt.seed = c.seed;
  opt.repeat_first_batch = f.repeat_first;
  const std::string which = f.strategy.empty() ? "both" : f.strategy;
  err << "measuring gradient covariance over " << opt.num_batches << " batches at alpha=" << opt.alpha << '\n';
  if (which == "both") {
    const auto cmp = train::compare_gradient_variance(trainer, opt, f.resamples);
    out << json{{"alpha", cmp.alpha},
                {"batches", opt.num_batches},
                {"trace_tsm", cmp.trace_tsm},
                {"trace_bm", cmp.trace_bm},
                {"difference", cmp.diff},
                {"ci95", {cmp.ci_low, cmp.ci_high}},
                {"resamples", cmp.resamples}}
               .dump(2)
        << '\n';
    return 0;
  }
  const auto res = train::measure_gradient_variance(trainer, parse_strategy(which), opt);
  out << json{{"alpha", opt.alpha},
              {"strategy", std::string(to_string(res.strategy))},
              {"batches", res.batches},
              {"dim", res.dim},
              {"trace", res.trace}}
             .dump(2)
      << '\n';
  return 0;
}

int run_varsim(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.replications < 2) throw Error(ErrorCategory::Usage, "--replications must be >= 2");
  const var::GradientModel m =
      f.model_file.empty() ? var::random_model(f.dim, f.timesteps, f.batch, f.alpha < 0.0 ? 0.5 : f.alpha, f.seed)
                           : load_model_file(f.model_file);
  err << "simulating " << f.replications << " replications per estimator (d=" << m.dim() << ")\n";
  const auto tsm_mc = var::mc_estimate(m, var::Estimator::TSM, f.replications, derive_seed(f.seed, 1));
  const auto bm_mc = var::mc_estimate(m, var::Estimator::BM, f.replications, derive_seed(f.seed, 2));
  const auto cov_tsm = var::analytic_cov_tsm(m);
  const auto cov_bm = var::analytic_cov_bm(m);
  const auto diff = var::cov_difference(m);
  out << json{{"dim", m.dim()},
              {"timesteps", m.timesteps},
              {"batch", m.batch},
              {"alpha", m.alpha},
              {"replications", f.replications},
              {"mean_analytic", vector_json(var::analytic_mean(m))},
              {"mean_tsm_mc", vector_json(tsm_mc.mean)},
              {"mean_bm_mc", vector_json(bm_mc.mean)},
              {"cov_tsm_analytic", matrix_json(cov_tsm)},
              {"cov_bm_analytic", matrix_json(cov_bm)},
              {"cov_tsm_mc", matrix_json(tsm_mc.cov)},
              {"cov_bm_mc", matrix_json(bm_mc.cov)},
              {"cov_tsm_mc_stderr", matrix_json(tsm_mc.cov_stderr)},
              {"cov_bm_mc_stderr", matrix_json(bm_mc.cov_stderr)},
              {"diff_analytic", matrix_json(diff.diff)},
              {"diff_mc", matrix_json(bm_mc.cov - tsm_mc.cov)},
              {"trace_identity_lhs", diff.trace_lhs},
              {"trace_identity_rhs", diff.trace_rhs},
              {"min_eig_diff", diff.min_eigenvalue}}
             .dump(2)
      << '\n';
  return 0;
}

int run_cka_check(const Flags& f, std::ostream& out) {
  if (f.n < 2 || f.d1 < 1 || f.d2 < 1) throw Error(ErrorCategory::Usage, "cka-check needs n >= 2 and positive widths");
  Engine rng(f.seed);
  std::normal_distribution<double> normal;
  auto gaussian = [&](int r, int c) {
    obj::Matrix m(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) m(i, j) = normal(rng);
    return m;
  };
  const obj::Matrix X = gaussian(f.n, f.d1);
  const obj::Matrix Y = gaussian(f.n, f.d2);
  const Eigen::HouseholderQR<obj::Matrix> qr(gaussian(f.d1, f.d1));
  const obj::Matrix Q = qr.householderQ();
  const double base = obj::linear_cka(X, Y);
  const double self = obj::linear_cka(X, X);
  const double sym = obj::linear_cka(Y, X);
  const double rotated = obj::linear_cka(X * Q, Y);
  const double scaled = obj::linear_cka(-3.5 * X, Y);
  const double tol = 1e-6;
  const bool ok = std::abs(self - 1.0) <= tol && std::abs(sym - base) <= tol && std::abs(rotated - base) <= tol &&
                  std::abs(scaled - base) <= tol && base >= -tol && base <= 1.0 + tol;
  out << json{{"n", f.n},
              {"cka_xy", base},
              {"cka_xx", self},
              {"cka_yx", sym},
              {"cka_xq_y", rotated},
              {"cka_scaled_x_y", scaled},
              {"tolerance", tol},
              {"ok", ok}}
             .dump(2)
      << '\n';
  return ok ? 0 : exit_code(ErrorCategory::Numeric);
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Time-step mixup knowledge transfer for spiking networks", "tmkt"};
  app.require_subcommand(1);
  Flags f;

  auto mix_flags = [&](CLI::App* sub) {
    sub->add_option("--timesteps", f.timesteps, "Time steps T (default 10)");
    sub->add_option("--ratio", f.ratio, "Target replaced-frame fraction r_m");
    sub->add_option("--mode", f.mode, "unconditional | conditional");
  };
  auto schedule_flags = [&](CLI::App* sub) {
    sub->add_option("--schedule", f.schedule, "probabilistic | fixed | dynamic-linear | dynamic-nonlinear");
    sub->add_option("--layout", f.layout, "r2d | d2r | mid | rand");
    sub->add_option("--epoch", f.epoch, "Current epoch for dynamic schedules");
    sub->add_option("--max-epochs", f.max_epochs, "Total epochs for dynamic schedules");
  };
  auto seed_flag = [&](CLI::App* sub) {
    sub->add_option("--seed", f.seed, "Random seed")->each([&](const std::string&) { f.seed_set = true; });
  };
  auto run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "Run configuration JSON");
    sub->add_option("--dataset", f.dataset, "Dataset manifest or directory");
    seed_flag(sub);
  };

  auto* solve = app.add_subcommand("solve-p", "Solve the replacement probability p for a target ratio");
  mix_flags(solve);

  auto* sample = app.add_subcommand("sample-tstar", "Histogram of the switch point t* over many draws");
  mix_flags(sample);
  schedule_flags(sample);
  seed_flag(sample);
  sample->add_option("--draws", f.draws, "Number of draws");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic paired static/event dataset");
  gen->add_option("--classes", f.classes, "Number of classes");
  gen->add_option("--per-class", f.per_class, "Samples per class");
  gen->add_option("--size", f.size, "Frame height and width");
  gen->add_option("--timesteps", f.timesteps, "Time steps T (default 8)");
  seed_flag(gen);
  gen->add_option("--out", f.out, "Output directory")->required();
  gen->add_option("--threshold", f.threshold, "Event contrast threshold");
  gen->add_option("--test-fraction", f.test_fraction, "Fraction of each class held out for testing");

  auto* mix = app.add_subcommand("mix", "Mix one static/event pair into a time-step mixup sequence");
  mix->add_option("--static", f.static_path, "Static sequence file")->required();
  mix->add_option("--event", f.event_path, "Event sequence file")->required();
  mix->add_option("--t-star", f.t_star, "Explicit switch point in [1, T+1]");
  mix->add_option("--config", f.config, "Take ratio/mode/schedule/layout from a run configuration");
  mix->add_option("--out", f.out, "Write the mixed sequence here");
  mix->add_option("--ratio", f.ratio, "Target replaced-frame fraction r_m");
  mix->add_option("--mode", f.mode, "unconditional | conditional");
  schedule_flags(mix);
  seed_flag(mix);

  auto* trn = app.add_subcommand("train", "Train with time-step mixup or the batch-mixing baseline");
  run_flags(trn);
  trn->add_option("--epochs", f.epochs, "Override the number of epochs");
  trn->add_option("--strategy", f.strategy, "tmkt | batch_mixing");
  trn->add_option("--metrics", f.metrics, "Metrics JSONL path");
  trn->add_option("--checkpoint", f.checkpoint, "Checkpoint output path");

  auto* evl = app.add_subcommand("eval", "Event-only accuracy of a checkpoint");
  run_flags(evl);
  evl->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  evl->add_option("--split", f.split, "train | test | all");

  auto* gv = app.add_subcommand("gradvar", "Empirical gradient-covariance trace at initialization");
  run_flags(gv);
  gv->add_option("--alpha", f.alpha, "Event fraction alpha (defaults to the config ratio)");
  gv->add_option("--batches", f.batches, "Number of batches");
  gv->add_option("--strategy", f.strategy, "tmkt | batch_mixing | both");
  gv->add_option("--resamples", f.resamples, "Bootstrap resamples");
  gv->add_flag("--repeat-first", f.repeat_first, "Reuse the first batch (variance source removed)");

  auto* vs = app.add_subcommand("varsim", "Analytic vs Monte Carlo gradient covariances of the two estimators");
  vs->add_option("--dim", f.dim, "Gradient dimension for a random model");
  vs->add_option("--timesteps", f.timesteps, "Time steps T (default 4)");
  vs->add_option("--batch", f.batch, "Batch size B");
  vs->add_option("--alpha", f.alpha, "Event fraction alpha");
  vs->add_option("--replications", f.replications, "Monte Carlo replications");
  seed_flag(vs);
  vs->add_option("--model-file", f.model_file, "Gradient model JSON");

  auto* ck = app.add_subcommand("cka-check", "Linear CKA invariance checks on random matrices");
  ck->add_option("--n", f.n, "Rows");
  ck->add_option("--d1", f.d1, "Columns of X");
  ck->add_option("--d2", f.d2, "Columns of Y");
  seed_flag(ck);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  if (f.timesteps < 0) f.timesteps = gen->parsed() ? 8 : vs->parsed() ? 4 : 10;
  try {
    if (solve->parsed()) return run_solve_p(f, out);
    if (sample->parsed()) return run_sample_tstar(f, out);
    if (gen->parsed()) return run_gen_data(f, out, err);
    if (mix->parsed()) return run_mix(f, out);
    if (trn->parsed()) return run_train(f, out, err);
    if (evl->parsed()) return run_eval(f, out);
    if (gv->parsed()) return run_gradvar(f, out, err);
    if (vs->parsed()) return run_varsim(f, out, err);
    if (ck->parsed()) return run_cka_check(f, out);
  } catch (const Error& e) {
    json detail = {{"category", std::string(category_name(e.category()))}, {"message", e.what()}};
    if (const auto* inf = dynamic_cast<const InfeasibleRatio*>(&e)) detail["lower_bound"] = inf->lower_bound();
    out << json{{"error", detail}}.dump(2) << '\n';
    err << "error (" << category_name(e.category()) << "): " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    out << json{{"error", {{"category", "internal"}, {"message", e.what()}}}}.dump(2) << '\n';
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace tmkt
