#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "support/ridders.hpp"
#include "tmkt/errors.hpp"
#include "tmkt/spiking_core.hpp"

using namespace tmkt;
using namespace tmkt::snn;

namespace {

struct StepOut {
  double u, s, pre;
};

StepOut step1(const LIFParams& p, double prev, double input) {
  double u, s, pre;
  lif_step<double>(p, std::span<const double>(&prev, 1), std::span<const double>(&input, 1), std::span<double>(&u, 1),
                   std::span<double>(&s, 1), std::span<double>(&pre, 1));
  return {u, s, pre};
}

NetworkSpec tiny_spec() {
  NetworkSpec spec;
  spec.in_channels = 2;
  spec.height = 4;
  spec.width = 4;
  spec.conv_channels = {3};
  spec.hidden = {6, 5};
  spec.num_classes = 3;
  spec.timesteps = 3;
  spec.init_gain = 3.0;
  return spec;
}

LIFParams smooth_lif() {
  LIFParams lif;
  lif.surrogate = Surrogate::SigmoidDerivative;
  lif.spike_fn = SpikeFn::SmoothSigmoid;
  lif.reset_grad = ResetGrad::Full;
  lif.surrogate_width = 1.0;
  return lif;
}

struct Probe {
  std::vector<double> w_logits, w_membrane, w_mod, w_ratio;
};

template <typename Real>
Real probe_value(const ForwardRecord<Real>& r, const Probe& pr) {
  Real v = 0.0;
  for (std::size_t i = 0; i < r.logits.size(); ++i) v += pr.w_logits[i] * r.logits[i];
  for (std::size_t i = 0; i < r.membrane.size(); ++i) v += pr.w_membrane[i] * r.membrane[i];
  for (std::size_t i = 0; i < r.modality_prob.size(); ++i) v += pr.w_mod[i] * r.modality_prob[i];
  for (std::size_t i = 0; i < r.ratio_prob.size(); ++i) v += pr.w_ratio[i] * r.ratio_prob[i];
  return v;
}

}  // namespace

TEST_CASE("lif_step hand cases") {
  LIFParams p;
  p.tau = 1.0;
  auto q = step1(p, 0.0, 0.0);
  CHECK(q.u == 0.0);
  CHECK(q.s == 0.0);
  CHECK(q.pre == 0.0);

  p.tau = 0.5;
  q = step1(p, 0.4, 0.9);
  CHECK(q.pre == doctest::Approx(1.1));
  CHECK(q.s == 1.0);
  CHECK(q.u == 0.0);

  q = step1(p, 0.4, 0.5);
  CHECK(q.pre == doctest::Approx(0.7));
  CHECK(q.s == 0.0);
  CHECK(q.u == doctest::Approx(0.7));

  CHECK_THROWS_AS(step1(p, 0.0, std::numeric_limits<double>::infinity()), Error);
  CHECK_THROWS_AS(step1(p, std::nan(""), 0.0), Error);
}

TEST_CASE("surrogates peak at threshold and vanish far away") {
  for (auto s : {Surrogate::Rectangular, Surrogate::Triangular, Surrogate::SigmoidDerivative}) {
    LIFParams p;
    p.surrogate = s;
    p.surrogate_width = 0.5;
    const double peak = surrogate_grad<double>(p, p.v_th);
    CHECK(peak == doctest::Approx(2.0));
    for (double dx : {-0.3, -0.1, 0.05, 0.2}) CHECK(surrogate_grad<double>(p, p.v_th + dx) <= peak);
    const double far = surrogate_grad<double>(p, p.v_th + 10.5 * p.surrogate_width);
    if (s == Surrogate::SigmoidDerivative) {
      CHECK(far < 1e-4);
    } else {
      CHECK(far == 0.0);
    }
  }
  CHECK(parse_surrogate("triangular") == Surrogate::Triangular);
  CHECK_THROWS_AS(parse_surrogate("box"), Error);
}

TEST_CASE("single neuron chain matches a desk simulation") {
  NetworkSpec spec;
  spec.in_channels = 1;
  spec.height = 1;
  spec.width = 1;
  spec.conv_channels = {};
  spec.hidden = {1};
  spec.num_classes = 2;
  spec.timesteps = 5;
  LIFParams lif;
  lif.tau = 0.5;
  lif.v_th = 1.0;
  SpikingNetwork<double> net(spec, lif, 1);
  net.parameters()[static_cast<std::size_t>(net.index_of("dense0.weight"))].data = {0.6};
  const std::vector<double> x(5, 1.0);
  const auto rec = net.forward(x, ClassHead::Event);

  // u_hat: 0.6, 0.9, 1.05 (spike, reset), 0.6, 0.9
  double u = 0.0;
  for (int t = 0; t < 5; ++t) {
    const double u_hat = 0.5 * u + 0.6;
    const double s = u_hat >= 1.0 ? 1.0 : 0.0;
    CHECK(rec.membrane[static_cast<std::size_t>(t)] == doctest::Approx(u_hat));
    CHECK(rec.features[static_cast<std::size_t>(t)] == s);
    u = u_hat * (1.0 - s);
  }
  CHECK(rec.features == std::vector<double>{0, 0, 1, 0, 0});
}

TEST_CASE("silent input gives silent layers and bias-only logits") {
  const auto spec = tiny_spec();
  SpikingNetwork<double> net(spec, LIFParams{}, 3);
  auto& hb = net.parameters()[static_cast<std::size_t>(net.index_of("head_mixed.bias"))].data;
  hb = {0.1, -0.2, 0.3};
  const std::vector<double> zeros(static_cast<std::size_t>(spec.frame_size() * spec.timesteps), 0.0);
  const auto rec = net.forward(zeros, ClassHead::Mixed);
  for (const auto& l : rec.conv)
    for (double s : l.spikes) CHECK(s == 0.0);
  for (const auto& l : rec.dense)
    for (double s : l.spikes) CHECK(s == 0.0);
  for (int t = 0; t < spec.timesteps; ++t)
    for (int c = 0; c < 3; ++c) CHECK(rec.logits[static_cast<std::size_t>(t * 3 + c)] == hb[static_cast<std::size_t>(c)]);
}

TEST_CASE("stateless regime gives identical per-step features") {
  auto spec = tiny_spec();
  spec.timesteps = 4;
  LIFParams lif;
  lif.tau = 0.0;
  lif.v_th = 1e30;
  SpikingNetwork<double> net(spec, lif, 5);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> frame(static_cast<std::size_t>(spec.frame_size()));
  for (auto& v : frame) v = u(rng);
  std::vector<double> seq;
  for (int t = 0; t < spec.timesteps; ++t) seq.insert(seq.end(), frame.begin(), frame.end());
  const auto rec = net.forward(seq, ClassHead::Event);
  const std::size_t f = static_cast<std::size_t>(spec.feature_dim());
  for (int t = 1; t < spec.timesteps; ++t) {
    for (std::size_t i = 0; i < f; ++i) {
      CHECK(rec.membrane[t * f + i] == rec.membrane[i]);
      CHECK(rec.features[t * f + i] == rec.features[i]);
    }
  }
}

TEST_CASE("forward rejects the wrong input size") {
  SpikingNetwork<double> net(tiny_spec(), LIFParams{}, 1);
  std::vector<double> bad(7, 0.0);
  try {
    net.forward(bad, ClassHead::Mixed);
    FAIL("expected configuration error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Config);
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  const auto spec = tiny_spec();
  SpikingNetwork<double> net(spec, LIFParams{}, 4);
  std::vector<double> x(static_cast<std::size_t>(spec.frame_size() * spec.timesteps), 0.7);
  const auto rec = net.forward(x, ClassHead::Mixed);
  auto g = net.zero_grads();
  net.backward(rec, OutputGrads<double>{}, g);
  for (const auto& t : g)
    for (double v : t.data) CHECK(v == 0.0);

  ForwardRecord<double> empty;
  CHECK_THROWS_AS(net.backward(empty, OutputGrads<double>{}, g), Error);
}

TEST_CASE("smooth-proxy backward pass matches extrapolated finite differences") {
  const auto spec = tiny_spec();
  const auto lif = smooth_lif();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  for (auto head : {ClassHead::Mixed, ClassHead::Event}) {
    SpikingNetwork<double> net(spec, lif, 21);
    // Differences are taken in long double so gradients far below the probe's
    // magnitude are still resolved.
    SpikingNetwork<long double> ref(spec, lif, 21);
    ref.parameters() = convert_tensors<long double>(net.parameters());
    std::vector<double> x(static_cast<std::size_t>(spec.frame_size() * spec.timesteps));
    for (auto& v : x) v = u01(rng);
    const std::vector<long double> xl(x.begin(), x.end());
    const int T = spec.timesteps;
    Probe pr;
    pr.w_logits.resize(static_cast<std::size_t>(T * spec.num_classes));
    pr.w_membrane.resize(static_cast<std::size_t>(T * spec.feature_dim()));
    pr.w_mod.resize(static_cast<std::size_t>(T));
    pr.w_ratio.resize(static_cast<std::size_t>(T));
    for (auto* w : {&pr.w_logits, &pr.w_membrane, &pr.w_mod, &pr.w_ratio})
      for (auto& v : *w) v = n01(rng);

    const auto rec = net.forward(x, head);
    OutputGrads<double> up{pr.w_logits, pr.w_membrane, pr.w_mod, pr.w_ratio};
    auto g = net.zero_grads();
    net.backward(rec, up, g);

    int checked = 0;
    double worst = 0.0;
    for (std::size_t k = 0; k < ref.parameters().size(); ++k) {
      auto& data = ref.parameters()[k].data;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const long double orig = data[i];
        const auto fd = tmkt::testing::ridders(
            [&](long double delta) {
              data[i] = orig + delta;
              const long double v = probe_value(ref.forward(xl, head), pr);
              data[i] = orig;
              return v;
            },
            0.05L);
        const double num = static_cast<double>(fd.derivative);
        const double an = g[k].data[i];
        const double scale = std::max(std::abs(num), std::abs(an));
        worst = std::max(worst, scale == 0.0 ? 0.0 : std::abs(num - an) / scale);
        ++checked;
      }
    }
    CHECK(checked == static_cast<int>(net.parameter_count()));
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("class heads are the only unshared tensors") {
  SpikingNetwork<float> net(tiny_spec(), LIFParams{}, 1);
  int unshared = 0;
  for (const auto& t : net.parameters()) unshared += SpikingNetwork<float>::is_shared(t.name) ? 0 : 1;
  CHECK(unshared == 4);
  const auto before = checksum(net.parameters(), true);
  net.parameters()[static_cast<std::size_t>(net.index_of("head_event.weight"))].data[0] += 1.0f;
  CHECK(checksum(net.parameters(), true) == before);
  net.parameters()[static_cast<std::size_t>(net.index_of("dense0.weight"))].data[0] += 1.0f;
  CHECK(checksum(net.parameters(), true) != before);
}

TEST_CASE("initialization is seeded") {
  SpikingNetwork<float> a(tiny_spec(), LIFParams{}, 9), b(tiny_spec(), LIFParams{}, 9), c(tiny_spec(), LIFParams{}, 10);
  CHECK(checksum(a.parameters(), false) == checksum(b.parameters(), false));
  CHECK(checksum(a.parameters(), false) != checksum(c.parameters(), false));
  const auto d = convert_tensors<double>(a.parameters());
  CHECK(checksum(convert_tensors<float>(d), false) == checksum(a.parameters(), false));
}

TEST_CASE("spec validation") {
  auto spec = tiny_spec();
  spec.kernel = 2;
  CHECK_THROWS_AS(SpikingNetwork<float>(spec, LIFParams{}, 0), Error);
  spec = tiny_spec();
  spec.height = 5;
  CHECK_THROWS_AS(SpikingNetwork<float>(spec, LIFParams{}, 0), Error);
  LIFParams lif;
  lif.tau = 1.5;
  CHECK_THROWS_AS(lif.validate(), Error);
}
