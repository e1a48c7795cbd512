#include "tmkt/grad_variance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "tmkt/errors.hpp"
#include "tmkt/rng.hpp"

namespace tmkt::train {

namespace {

// Class-balanced draw: slot j takes a uniform training sample of class j mod C.
std::vector<int> draw_batch(const std::map<int, std::vector<int>>& by_class, int batch_size, std::uint64_t seed) {
  Engine rng(seed);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  auto it = by_class.begin();
  for (int j = 0; j < batch_size; ++j) {
    const auto& pool = it->second;
    out.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
    if (++it == by_class.end()) it = by_class.begin();
  }
  return out;
}

}  // namespace

GradVarResult measure_gradient_variance(const Trainer& trainer, Strategy strategy, const GradVarOptions& opt) {
  if (opt.num_batches < 2) throw Error(ErrorCategory::Domain, "gradient variance needs num_batches >= 2");
  const auto& net = trainer.network();
  const int T = net.spec().timesteps;
  const double n_event_real = opt.alpha * T;
  const int n_event = static_cast<int>(std::lround(n_event_real));
  if (!(opt.alpha >= 0.0 && opt.alpha <= 1.0) || std::abs(n_event_real - n_event) > 1e-9) {
    std::ostringstream msg;
    msg << "alpha*T must be an integer in [0, T] (alpha=" << opt.alpha << ", T=" << T << ")";
    throw Error(ErrorCategory::Domain, msg.str());
  }
  std::map<int, std::vector<int>> by_class;
  const auto labels = trainer.train_labels();
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  const int B = trainer.config().batch_size;

  GradVarResult res;
  res.strategy = strategy;
  res.batches = opt.num_batches;
  Eigen::MatrixXd grads;  // dim x batches
  for (int b = 0; b < opt.num_batches; ++b) {
    const std::uint64_t key = opt.repeat_first_batch ? 0 : static_cast<std::uint64_t>(b);
    const auto batch = draw_batch(by_class, B, derive_seed(opt.seed, streams::kBatchDraw, key));
    std::vector<tsm::SwitchPlan> plans;
    for (int i = 0; i < B; ++i) {
      int events = n_event;
      if (strategy == Strategy::BatchMixing) {
        Engine rng(derive_seed(opt.seed, streams::kMix, key * 1000003ULL + static_cast<std::uint64_t>(i)));
        events = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < opt.alpha ? T : 0;
      }
      plans.push_back(tsm::plan_from_event_count(tsm::Layout::RtoD, T, events, 0));
    }
    auto g = net.zero_grads();
    std::vector<double> d_theta;
    trainer.compute_batch(batch, plans, derive_seed(opt.seed, streams::kPairing, key),
                          GradTarget::MixedClassification, g, d_theta);
    std::size_t dim = 0;
    for (const auto& t : g) dim += t.data.size();
    if (grads.size() == 0) grads.resize(static_cast<Eigen::Index>(dim), opt.num_batches);
    Eigen::Index row = 0;
    for (const auto& t : g)
      for (float v : t.data) grads(row++, b) = v;
  }
  res.dim = static_cast<std::size_t>(grads.rows());
  const Eigen::VectorXd mean = grads.rowwise().mean();
  grads.colwise() -= mean;
  res.trace = grads.squaredNorm() / (opt.num_batches - 1.0);
  res.gram = grads.transpose() * grads;
  return res;
}

double resampled_trace(const Eigen::MatrixXd& gram, const Eigen::VectorXd& counts) {
  const double n = counts.sum();
  if (n < 2) return 0.0;
  // sum_s |g_s - g_bar|^2 = sum_s G_ss - (1/N) sum_{s,s'} G_ss'
  const double ss = counts.dot(gram.diagonal()) - counts.dot(gram * counts) / n;
  return ss / (n - 1.0);
}

VarianceComparison compare_gradient_variance(const Trainer& trainer, const GradVarOptions& opt, int resamples,
                                             double level) {
  const GradVarResult tsm = measure_gradient_variance(trainer, Strategy::TMKT, opt);
  const GradVarResult bm = measure_gradient_variance(trainer, Strategy::BatchMixing, opt);
  VarianceComparison out;
  out.alpha = opt.alpha;
  out.trace_tsm = tsm.trace;
  out.trace_bm = bm.trace;
  out.diff = bm.trace - tsm.trace;
  out.resamples = resamples;
  if (resamples < 1) return out;
  const int n = opt.num_batches;
  Engine rng(derive_seed(opt.seed, streams::kBootstrap));
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<double> diffs(static_cast<std::size_t>(resamples));
  Eigen::VectorXd counts(n);
  for (int r = 0; r < resamples; ++r) {
    counts.setZero();
    for (int i = 0; i < n; ++i) counts(pick(rng)) += 1.0;
    diffs[static_cast<std::size_t>(r)] = resampled_trace(bm.gram, counts) - resampled_trace(tsm.gram, counts);
  }
  std::sort(diffs.begin(), diffs.end());
  const double tail = 0.5 * (1.0 - level);
  auto quantile = [&](double q) {
    const double pos = q * (resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, diffs.size() - 1);
    return diffs[lo] + (pos - lo) * (diffs[hi] - diffs[lo]);
  };
  out.ci_low = quantile(tail);
  out.ci_high = quantile(1.0 - tail);
  return out;
}

}  // namespace tmkt::train
