// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//   tmkt_acceptance [--workdir DIR] [--only N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tmkt/checkpoint.hpp"
#include "tmkt/data_forge.hpp"
#include "tmkt/errors.hpp"
#include "tmkt/grad_variance.hpp"
#include "tmkt/objectives.hpp"
#include "tmkt/spiking_core.hpp"
#include "tmkt/trainer.hpp"
#include "tmkt/tsm_sampler.hpp"
#include "tmkt/variance_lab.hpp"
#include "../support/ridders.hpp"

#ifdef TMKT_HAVE_BOOST_MATH
#include <boost/math/distributions/chi_squared.hpp>
#endif

namespace fs = std::filesystem;
using namespace tmkt;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path g_workdir;

// Shared desk-scale dataset: 5 classes, 24x24, T=8, 100 pairs per class.
const fs::path& desk_dataset() {
  static const fs::path dir = [] {
    const fs::path d = g_workdir / "desk5";
    fs::remove_all(d);
    data::GeneratorParams p;
    p.classes = 5;
    p.per_class = 100;
    p.height = 24;
    p.width = 24;
    p.timesteps = 8;
    p.seed = 0;
    data::gen_paired_dataset(p, d);
    return d;
  }();
  return dir;
}

RunConfig desk_config() {
  RunConfig c;
  c.dataset = desk_dataset().string();
  c.timesteps = 8;
  c.ratio = 0.4;
  c.epochs = 30;
  c.batch_size = 10;
  c.seed = 0;
  return c;
}

// ---------------------------------------------------------------------------

void expectation_matching(Outcome& o) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int cases = 0;
  for (int T : {4, 6, 8, 10, 12}) {
    for (int k = 1; k <= 9; ++k) {
      const double r = k / 10.0;
      const double p = tsm::solve_p(T, r, tsm::MixMode::Unconditional);
      worst = std::max(worst, std::abs(tsm::expected_replaced(T, p, tsm::MixMode::Unconditional) - T * r));
      ++cases;
    }
  }
  const double secs = seconds_since(t0);
  o.detail << cases << " cases, max |E - T*r| = " << worst << ", " << secs << " s";
  o.require(worst <= 1e-9, "tolerance 1e-9");
  o.require(secs < 1.0, "runtime < 1 s");
}

void sampler_law(Outcome& o) {
  const auto t0 = Clock::now();
  const int T = 10;
  const auto spec = tsm::make_mix_spec(T, 0.4, tsm::MixMode::Unconditional);
  const std::int64_t n = 1000000;
  const auto counts = tsm::t_star_histogram(spec, n, 20240611);
  const auto pmf = tsm::t_star_pmf(T, spec.p, tsm::MixMode::Unconditional);
  double s1 = 0.0, s2 = 0.0, chi2 = 0.0;
  for (int k = 0; k <= T; ++k) {
    const double replaced = T - k;  // t* = k+1; t* = T+1 replaces nothing
    s1 += counts[static_cast<std::size_t>(k)] * replaced;
    s2 += counts[static_cast<std::size_t>(k)] * replaced * replaced;
    const double e = n * pmf[static_cast<std::size_t>(k)];
    chi2 += (counts[static_cast<std::size_t>(k)] - e) * (counts[static_cast<std::size_t>(k)] - e) / e;
  }
  const double mean = s1 / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
#ifdef TMKT_HAVE_BOOST_MATH
  const double pval = boost::math::cdf(boost::math::complement(boost::math::chi_squared(T), chi2));
#else
  const double pval = chi2 < 29.588 ? 1.0 : 0.0;  // 0.999 quantile, 10 dof
#endif
  const double secs = seconds_since(t0);
  o.detail << "mean replaced " << mean << " (se " << se << "), chi2 " << chi2 << " p=" << pval << ", " << secs << " s";
  o.require(std::abs(mean - 4.0) <= 3.0 * se, "mean within 3 se");
  o.require(pval > 0.001, "chi2 p > 0.001");
  o.require(secs < 10.0, "runtime < 10 s");
}

void conditional_feasibility(Outcome& o) {
  bool raised = false;
  double bound = 0.0;
  try {
    tsm::solve_p(10, 0.4, tsm::MixMode::Conditional);
  } catch (const InfeasibleRatio& e) {
    raised = e.category() == ErrorCategory::Infeasible;
    bound = e.lower_bound();
  }
  const double p = tsm::solve_p(10, 0.6, tsm::MixMode::Conditional);
  const double err = std::abs(tsm::expected_replaced(10, p, tsm::MixMode::Conditional) - 6.0);
  o.detail << "r=0.4 infeasible: " << (raised ? "yes" : "no") << " (bound " << bound << "), r=0.6 p=" << p
           << " round-trip err " << err;
  o.require(raised, "infeasibility error");
  o.require(std::abs(bound - 0.55) < 1e-15, "lower bound 0.55");
  o.require(err < 1e-9, "round trip < 1e-9");
}

void theorem(Outcome& o) {
  const auto t0 = Clock::now();
  int models = 0, mean_mismatch = 0;
  double min_eig = 1e300, worst_trace = 0.0;
  for (std::uint64_t seed = 0; seed < 1200; ++seed) {
    const int dim = 1 + static_cast<int>(seed % 6);
    const int T = 8;
    const double alpha = static_cast<double>(1 + seed % 7) / T;
    const int batch = 1 + static_cast<int>(seed % 16);
    const auto m = var::random_model(dim, T, batch, alpha, 1000 + seed);
    // Frame-count weights for time-step mixup, mixture weights for batch mixing.
    const double w_static_tsm = static_cast<double>(m.n_static()) / T;
    const double w_event_tsm = static_cast<double>(m.n_event()) / T;
    const var::Vector mean_tsm = w_static_tsm * m.mu_a + w_event_tsm * m.mu_e;
    const var::Vector mean_bm = (1.0 - m.alpha) * m.mu_a + m.alpha * m.mu_e;
    if (!(mean_tsm.array() == mean_bm.array()).all() || !(mean_tsm.array() == var::analytic_mean(m).array()).all())
      ++mean_mismatch;
    const auto d = var::cov_difference(m);
    min_eig = std::min(min_eig, d.min_eigenvalue);
    worst_trace = std::max(worst_trace, std::abs(d.trace_lhs - d.trace_rhs));
    ++models;
  }

  // Covariance elements gate the check; the MC means are reported alongside.
  int spot_fail = 0, spot_checks = 0;
  double worst_mean_z = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto m = var::random_model(2, 4, 8, 0.5, 77 + s);
    for (auto est : {var::Estimator::TSM, var::Estimator::BM}) {
      const auto mc = var::mc_estimate(m, est, 1000000, 500 + s);
      const var::Matrix cov = est == var::Estimator::TSM ? var::analytic_cov_tsm(m) : var::analytic_cov_bm(m);
      const var::Vector mean = var::analytic_mean(m);
      for (int i = 0; i < 2; ++i) {
        worst_mean_z = std::max(worst_mean_z, std::abs(mc.mean(i) - mean(i)) / mc.mean_stderr(i));
        for (int j = i; j < 2; ++j) {
          ++spot_checks;
          if (std::abs(mc.cov(i, j) - cov(i, j)) > 3.0 * mc.cov_stderr(i, j)) ++spot_fail;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  o.detail << models << " models: mean mismatches " << mean_mismatch << ", min eig " << min_eig
           << ", max trace gap " << worst_trace << "; MC 1e6 covariance elements " << spot_checks - spot_fail << "/"
           << spot_checks << " within 3 se (max |z| of MC means " << worst_mean_z << "), " << secs << " s";
  o.require(models >= 1000, ">= 1000 models");
  o.require(mean_mismatch == 0, "exact mean equality");
  o.require(min_eig >= -1e-10, "min eigenvalue >= -1e-10");
  o.require(worst_trace <= 1e-12, "trace identity 1e-12");
  o.require(spot_fail == 0, "MC covariances within 3 se");
  o.require(secs < 300.0, "runtime < 5 min");
}

// Straight-from-definition CKA with explicit J and traces.
double cka_oracle(const obj::Matrix& X, const obj::Matrix& Y) {
  const int n = static_cast<int>(X.rows());
  const obj::Matrix J = obj::Matrix::Identity(n, n) - obj::Matrix::Constant(n, n, 1.0 / n);
  const obj::Matrix K = X * X.transpose(), L = Y * Y.transpose();
  auto h = [&](const obj::Matrix& A, const obj::Matrix& B) { return (A * J * B * J).trace(); };
  return h(K, L) / std::sqrt(h(K, K) * h(L, L));
}

void cka_suite(Outcome& o) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01(0.0, 1.0);
  auto randn = [&](int r, int c) {
    obj::Matrix m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = n01(rng);
    return m;
  };
  double self = 0.0, orth = 0.0, iso = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const obj::Matrix X = randn(24, 8), Y = randn(24, 5);
    self = std::max(self, std::abs(obj::linear_cka(X, X) - 1.0));
    const double base = obj::linear_cka(X, Y);
    Eigen::HouseholderQR<obj::Matrix> qr(randn(8, 8));
    const obj::Matrix Q = qr.householderQ();
    orth = std::max(orth, std::abs(obj::linear_cka(X * Q, Y) - base));
    iso = std::max(iso, std::abs(obj::linear_cka(2.5 * X, 0.1 * Y) - base));
  }
  obj::Matrix X(4, 2), Y(4, 2);
  X << 1, 2, 3, 4, 5, 7, 0, -1;
  Y << 2, 0, 1, 1, 0, 3, 4, -2;
  const double hand = std::abs(obj::linear_cka(X, Y) - cka_oracle(X, Y));
  o.detail << "|CKA(X,X)-1| " << self << ", orthogonal " << orth << ", isotropic " << iso << ", 4x2 hand case "
           << hand;
  o.require(self <= 1e-6, "self similarity");
  o.require(orth <= 1e-6, "orthogonal invariance");
  o.require(iso <= 1e-6, "isotropic scaling invariance");
  o.require(hand <= 1e-10, "definition oracle");
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

template <class F>
double fd_check(obj::Matrix& m, const obj::Matrix& analytic, F f) {
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      const double orig = m(i, j);
      m(i, j) = orig + h;
      const double fp = f();
      m(i, j) = orig - h;
      const double fm = f();
      m(i, j) = orig;
      worst = std::max(worst, rel_err((fp - fm) / (2 * h), analytic(i, j)));
    }
  return worst;
}

void gradient_checks(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.05, 0.95);
  auto randn = [&](int r, int c) {
    obj::Matrix m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = n01(rng);
    return m;
  };
  double tet = 0.0, da = 0.0, rda = 0.0, mag = 0.0, mrp = 0.0, bptt = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    obj::Matrix L = randn(8, 5);  // 40 coordinates
    const auto t = obj::tet_loss(L, rep % 5);
    tet = std::max(tet, fd_check(L, t.grad, [&] { return obj::tet_loss(L, rep % 5).value; }));

    std::vector<obj::Matrix> vm{randn(6, 4), randn(6, 4)}, ve{randn(6, 4), randn(6, 4)};  // 24 per step
    const auto d = obj::da_loss(vm, ve);
    for (std::size_t s = 0; s < 2; ++s) {
      da = std::max(da, fd_check(vm[s], d.d_mixed[s], [&] { return obj::da_loss(vm, ve).value; }));
      da = std::max(da, fd_check(ve[s], d.d_event[s], [&] { return obj::da_loss(vm, ve).value; }));
    }

    obj::Matrix dav(8, 1), clsv(8, 1), theta(8, 1);
    for (int i = 0; i < 8; ++i) {
      dav(i, 0) = u01(rng);
      clsv(i, 0) = 2 * u01(rng);
      theta(i, 0) = n01(rng);
    }
    auto rda_val = [&] {
      obj::AlignmentGate g(8);
      for (int i = 0; i < 8; ++i) g.theta[static_cast<std::size_t>(i)] = theta(i, 0);
      std::vector<double> a(dav.data(), dav.data() + 8), c(clsv.data(), clsv.data() + 8);
      return obj::rda_loss(a, c, g);
    };
    const auto r = rda_val();
    rda = std::max(rda, fd_check(dav, Eigen::Map<const obj::Matrix>(r.d_da.data(), 8, 1), [&] { return rda_val().value; }));
    rda = std::max(rda, fd_check(clsv, Eigen::Map<const obj::Matrix>(r.d_cls.data(), 8, 1), [&] { return rda_val().value; }));
    rda = std::max(rda, fd_check(theta, Eigen::Map<const obj::Matrix>(r.d_theta.data(), 8, 1), [&] { return rda_val().value; }));

    obj::Matrix probs(8, 1);
    for (int i = 0; i < 8; ++i) probs(i, 0) = u01(rng);
    const std::vector<std::uint8_t> labels{1, 1, 1, 0, 0, 0, 0, 0};
    const auto mg = obj::mag_loss(probs.col(0), labels);
    mag = std::max(mag, fd_check(probs, obj::Matrix(mg.grad), [&] { return obj::mag_loss(probs.col(0), labels).value; }));
    const auto mr = obj::mrp_loss(probs.col(0), 4);
    mrp = std::max(mrp, fd_check(probs, obj::Matrix(mr.grad), [&] { return obj::mrp_loss(probs.col(0), 4).value; }));
  }

  // Smooth-proxy spiking network: analytic BPTT in double against
  // extrapolated central differences of a long double replica.
  snn::NetworkSpec spec;
  spec.in_channels = 2;
  spec.height = 4;
  spec.width = 4;
  spec.conv_channels = {3};
  spec.hidden = {6, 5};
  spec.num_classes = 3;
  spec.timesteps = 3;
  snn::LIFParams lif;
  lif.surrogate = snn::Surrogate::SigmoidDerivative;
  lif.spike_fn = snn::SpikeFn::SmoothSigmoid;
  lif.reset_grad = snn::ResetGrad::Full;
  int bptt_coords = 0;
  for (std::uint64_t inst = 0; inst < 3; ++inst) {
    snn::SpikingNetwork<double> net(spec, lif, 3 + inst);
    snn::SpikingNetwork<long double> ref(spec, lif, 3 + inst);
    ref.parameters() = snn::convert_tensors<long double>(net.parameters());
    std::vector<double> x(static_cast<std::size_t>(spec.frame_size() * spec.timesteps));
    for (auto& v : x) v = u01(rng);
    const std::vector<long double> xl(x.begin(), x.end());
    snn::OutputGrads<double> up;
    up.logits.resize(static_cast<std::size_t>(spec.timesteps * spec.num_classes));
    up.membrane.resize(static_cast<std::size_t>(spec.timesteps * spec.feature_dim()));
    up.modality_prob.resize(static_cast<std::size_t>(spec.timesteps));
    up.ratio_prob.resize(static_cast<std::size_t>(spec.timesteps));
    for (auto* w : {&up.logits, &up.membrane, &up.modality_prob, &up.ratio_prob})
      for (auto& v : *w) v = n01(rng);
    auto probe = [&] {
      const auto r = ref.forward(xl, snn::ClassHead::Mixed);
      long double v = 0.0L;
      for (std::size_t i = 0; i < r.logits.size(); ++i) v += up.logits[i] * r.logits[i];
      for (std::size_t i = 0; i < r.membrane.size(); ++i) v += up.membrane[i] * r.membrane[i];
      for (std::size_t i = 0; i < r.modality_prob.size(); ++i) v += up.modality_prob[i] * r.modality_prob[i];
      for (std::size_t i = 0; i < r.ratio_prob.size(); ++i) v += up.ratio_prob[i] * r.ratio_prob[i];
      return v;
    };
    auto grads = net.zero_grads();
    net.backward(net.forward(x, snn::ClassHead::Mixed), up, grads);
    for (std::size_t k = 0; k < ref.parameters().size(); ++k) {
      auto& data = ref.parameters()[k].data;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const long double orig = data[i];
        const auto fd = testing::ridders(
            [&](long double delta) {
              data[i] = orig + delta;
              const long double v = probe();
              data[i] = orig;
              return v;
            },
            0.05L);
        const double num = static_cast<double>(fd.derivative), an = grads[k].data[i];
        const double scale = std::max(std::abs(num), std::abs(an));
        bptt = std::max(bptt, scale == 0.0 ? 0.0 : std::abs(num - an) / scale);
        ++bptt_coords;
      }
    }
  }
  const double secs = seconds_since(t0);
  o.detail << "max rel err: TET " << tet << ", DA " << da << ", RDA " << rda << ", MAG " << mag << ", MRP " << mrp
           << ", BPTT " << bptt << " (" << bptt_coords << " coordinates), " << secs << " s";
  for (auto [name, v] : {std::pair{"TET", tet}, {"DA", da}, {"RDA", rda}, {"MAG", mag}, {"MRP", mrp}, {"BPTT", bptt}})
    o.require(v < 1e-3, std::string(name) + " rel err < 1e-3");
  o.require(secs < 60.0, "runtime < 1 min");
}

void variance_reduction(Outcome& o) {
  const auto t0 = Clock::now();
  const auto data = train::load_dataset(desk_dataset().string(), 8);
  const train::Trainer frozen(desk_config(), data);
  for (double alpha : {0.25, 0.5}) {
    train::GradVarOptions opt;
    opt.alpha = alpha;
    opt.num_batches = 200;
    opt.seed = 1;
    const auto c = train::compare_gradient_variance(frozen, opt, 2000, 0.95);
    o.detail << "alpha " << alpha << ": tr(BM) " << c.trace_bm << " vs tr(TSM) " << c.trace_tsm << ", diff CI ["
             << c.ci_low << ", " << c.ci_high << "]; ";
    o.require(c.trace_bm > c.trace_tsm, "tr(BM) > tr(TSM) at alpha " + std::to_string(alpha));
    o.require(c.ci_low > 0.0 || c.ci_high < 0.0, "CI excludes 0 at alpha " + std::to_string(alpha));
  }
  o.detail << seconds_since(t0) << " s";
}

void end_to_end(Outcome& o) {
  const auto t0 = Clock::now();
  const auto data = train::load_dataset(desk_dataset().string(), 8);
  auto cfg = desk_config();
  cfg.metrics_path = (g_workdir / "e2e_tmkt.jsonl").string();
  const auto tmkt_run = train::train(cfg, data);
  cfg.strategy = Strategy::BatchMixing;
  cfg.metrics_path = (g_workdir / "e2e_bm.jsonl").string();
  const auto bm_run = train::train(cfg, data);
  const double secs = seconds_since(t0);
  o.detail << "TMKT event-test acc " << tmkt_run.final_eval_accuracy << ", batch mixing " << bm_run.final_eval_accuracy
           << " (" << data.test.size() << " test samples), " << secs << " s";
  o.require(tmkt_run.final_eval_accuracy >= 0.80, "TMKT >= 80%");
  o.require(tmkt_run.final_eval_accuracy >= bm_run.final_eval_accuracy, "TMKT >= batch mixing");
  o.require(secs < 900.0, "runtime < 15 min");
}

void ablation_plumbing(Outcome& o) {
  const fs::path dir = g_workdir / "smoke5";
  fs::remove_all(dir);
  data::GeneratorParams p;
  p.classes = 5;
  p.per_class = 12;
  p.seed = 4;
  data::gen_paired_dataset(p, dir);
  const auto data = train::load_dataset(dir.string(), 8);
  struct Variant {
    tsm::Schedule schedule;
    tsm::Layout layout;
  };
  const std::vector<Variant> variants{
      {tsm::Schedule::FixedRatio, tsm::Layout::RtoD},       {tsm::Schedule::DynamicLinear, tsm::Layout::RtoD},
      {tsm::Schedule::DynamicNonLinear, tsm::Layout::RtoD}, {tsm::Schedule::ProbabilisticTSM, tsm::Layout::RtoD},
      {tsm::Schedule::FixedRatio, tsm::Layout::DtoR},       {tsm::Schedule::FixedRatio, tsm::Layout::MidDVS},
      {tsm::Schedule::FixedRatio, tsm::Layout::RandDVS}};
  int ok = 0;
  for (const auto& v : variants) {
    auto cfg = desk_config();
    cfg.dataset = dir.string();
    cfg.epochs = 3;
    cfg.schedule = v.schedule;
    cfg.layout = v.layout;
    try {
      const auto r = train::train(cfg, data);
      if (r.history.size() == 3) ++ok;
    } catch (const std::exception& e) {
      o.require(false, std::string(tsm::to_string(v.schedule)) + "/" + std::string(tsm::to_string(v.layout)) + ": " +
                           e.what());
    }
  }
  o.detail << ok << "/" << variants.size() << " schedule/layout variants completed 3 epochs";
  o.require(ok == static_cast<int>(variants.size()), "all variants run");
}

void format_round_trips(Outcome& o) {
  const auto m = data::load_manifest(desk_dataset());
  const auto& s = m.samples.front();
  const auto seq_bytes = io::read_file(m.root / s.event_path);
  const auto seq = io::decode_sequence(seq_bytes, Modality::Event, s.label);
  const fs::path seq_copy = g_workdir / "copy.tmkt";
  io::save_sequence(seq_copy, seq);
  const bool seq_ok = io::read_file(seq_copy) == seq_bytes &&
                      io::load_sequence(seq_copy, Modality::Event, s.label).data == seq.data;

  const auto data = train::load_dataset(desk_dataset().string(), 8);
  auto cfg = desk_config();
  cfg.epochs = 1;
  const train::Trainer tr(cfg, data);
  const auto ck = tr.checkpoint();
  const fs::path ck_path = g_workdir / "rt.ckpt";
  ckpt::save_checkpoint(ck_path, ck);
  const auto back = ckpt::load_checkpoint(ck_path);
  bool ck_ok = back.gate_theta == ck.gate_theta && back.parameters.size() == ck.parameters.size();
  for (std::size_t i = 0; ck_ok && i < ck.parameters.size(); ++i)
    ck_ok = std::memcmp(back.parameters[i].data.data(), ck.parameters[i].data.data(),
                        ck.parameters[i].data.size() * sizeof(float)) == 0 &&
            back.parameters[i].shape == ck.parameters[i].shape;
  ck_ok = ck_ok && ckpt::encode_checkpoint(back) == io::read_file(ck_path);

  auto category = [](auto f) {
    try {
      f();
    } catch (const Error& e) {
      return std::string(category_name(e.category()));
    }
    return std::string("none");
  };
  auto truncated = seq_bytes;
  truncated.resize(truncated.size() - 1);
  auto bad_magic = seq_bytes;
  bad_magic[1] = 'X';
  auto ck_bytes = io::read_file(ck_path);
  auto ck_flip = ck_bytes;
  ck_flip.back() ^= 1;
  auto ck_cut = ck_bytes;
  ck_cut.resize(20);
  const std::vector<std::string> cats{
      category([&] { io::decode_sequence(truncated, Modality::Event, 0); }),
      category([&] { io::decode_sequence(bad_magic, Modality::Event, 0); }),
      category([&] { ckpt::decode_checkpoint(ck_flip); }),
      category([&] { ckpt::decode_checkpoint(ck_cut); }),
  };
  const bool cats_ok = std::all_of(cats.begin(), cats.end(), [](const std::string& c) { return c == "format"; });
  o.detail << "sequence " << (seq_ok ? "bit-exact" : "MISMATCH") << ", checkpoint " << (ck_ok ? "bit-exact" : "MISMATCH")
           << ", corruption categories:";
  for (const auto& c : cats) o.detail << " " << c;
  o.require(seq_ok, "sequence round trip");
  o.require(ck_ok, "checkpoint round trip");
  o.require(cats_ok, "corruptions are format errors");
}

}  // namespace

int main(int argc, char** argv) {
  g_workdir = fs::temp_directory_path() / "tmkt_acceptance";
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--workdir") == 0 && i + 1 < argc) {
      g_workdir = argv[++i];
    } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: tmkt_acceptance [--workdir DIR] [--only N]\n";
      return 2;
    }
  }
  fs::create_directories(g_workdir);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"expectation matching", expectation_matching},
      {"sampler law", sampler_law},
      {"conditional-mode feasibility", conditional_feasibility},
      {"variance theorem reproduction", theorem},
      {"CKA suite", cka_suite},
      {"gradient checks", gradient_checks},
      {"empirical variance reduction", variance_reduction},
      {"end-to-end learning", end_to_end},
      {"ablation plumbing", ablation_plumbing},
      {"format round trips", format_round_trips},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && only != static_cast<int>(i + 1)) continue;
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << i + 1 << ". " << criteria[i].first << ": " << o.detail.str()
              << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criterion(s) failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
