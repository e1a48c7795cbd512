#include "tmkt/spiking_core.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "tmkt/errors.hpp"
#include "tmkt/rng.hpp"

namespace tmkt::snn {

namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

template <typename Real>
Eigen::Map<RowMat<Real>> as_matrix(std::vector<Real>& data, int rows, int cols, std::size_t offset = 0) {
  return {data.data() + offset, rows, cols};
}
template <typename Real>
Eigen::Map<const RowMat<Real>> as_matrix(const std::vector<Real>& data, int rows, int cols,
                                         std::size_t offset = 0) {
  return {data.data() + offset, rows, cols};
}
template <typename Real>
Eigen::Map<Vec<Real>> as_vector(std::vector<Real>& data, int n, std::size_t offset = 0) {
  return {data.data() + offset, n};
}
template <typename Real>
Eigen::Map<const Vec<Real>> as_vector(const std::vector<Real>& data, int n, std::size_t offset = 0) {
  return {data.data() + offset, n};
}

// Same-padding, stride-1 patch extraction: col is (c*k*k) x (h*w).
template <typename Real>
void im2col(const Real* in, int c, int h, int w, int k, Real* col) {
  const int pad = k / 2;
  const int hw = h * w;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Real* row = col + static_cast<std::size_t>((ci * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          Real* dst = row + y * w;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, Real(0));
            continue;
          }
          const Real* src = in + (ci * h + sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad;
            dst[x] = (sx < 0 || sx >= w) ? Real(0) : src[sx];
          }
        }
      }
    }
  }
}

template <typename Real>
void col2im(const Real* col, int c, int h, int w, int k, Real* out) {
  const int pad = k / 2;
  const int hw = h * w;
  std::fill(out, out + static_cast<std::size_t>(c) * hw, Real(0));
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Real* row = col + static_cast<std::size_t>((ci * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          Real* dst = out + (ci * h + sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad;
            if (sx >= 0 && sx < w) dst[sx] += row[y * w + x];
          }
        }
      }
    }
  }
}

template <typename Real>
void avg_pool2(const Real* in, int c, int h, int w, Real* out) {
  const int oh = h / 2, ow = w / 2;
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const Real* p = in + (ci * h + 2 * y) * w + 2 * x;
        out[(ci * oh + y) * ow + x] = Real(0.25) * (p[0] + p[1] + p[w] + p[w + 1]);
      }
    }
  }
}

template <typename Real>
void avg_pool2_backward(const Real* d_out, int c, int h, int w, Real* d_in) {
  const int oh = h / 2, ow = w / 2;
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const Real g = Real(0.25) * d_out[(ci * oh + y) * ow + x];
        Real* p = d_in + (ci * h + 2 * y) * w + 2 * x;
        p[0] = g;
        p[1] = g;
        p[w] = g;
        p[w + 1] = g;
      }
    }
  }
}

template <typename Real>
Real sigmoid(Real x) {
  return Real(1) / (Real(1) + std::exp(-x));
}

// d s / d u_hat as used in backward.
template <typename Real>
Real spike_derivative(const LIFParams& p, Real pre_reset, Real spike) {
  if (p.spike_fn == SpikeFn::SmoothSigmoid) {
    return static_cast<Real>(p.sigmoid_slope()) * spike * (Real(1) - spike);
  }
  return surrogate_grad<Real>(p, pre_reset);
}

// Backprop through one LIF layer at one step. d_spikes may be null.
template <typename Real>
void lif_backward_step(const LIFParams& p, int n, const Real* pre_reset, const Real* spikes,
                       const Real* d_spikes, const Real* d_pre_direct, Real* carry, Real* d_pre) {
  const Real tau = static_cast<Real>(p.tau);
  for (int i = 0; i < n; ++i) {
    const Real ds_du = spike_derivative<Real>(p, pre_reset[i], spikes[i]);
    Real reset_factor = Real(1) - spikes[i];
    if (p.reset_grad == ResetGrad::Full) reset_factor -= pre_reset[i] * ds_du;
    Real g = carry[i] * reset_factor;
    if (d_spikes) g += d_spikes[i] * ds_du;
    if (d_pre_direct) g += d_pre_direct[i];
    d_pre[i] = g;
    carry[i] = tau * g;
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCategory::Config, message);
}

}  // namespace

Surrogate parse_surrogate(std::string_view text) {
  if (text == "rectangular") return Surrogate::Rectangular;
  if (text == "triangular") return Surrogate::Triangular;
  if (text == "sigmoid") return Surrogate::SigmoidDerivative;
  throw Error(ErrorCategory::Config, "unknown surrogate '" + std::string(text) + "'");
}

std::string_view to_string(Surrogate s) {
  switch (s) {
    case Surrogate::Rectangular: return "rectangular";
    case Surrogate::Triangular: return "triangular";
    case Surrogate::SigmoidDerivative: return "sigmoid";
  }
  return "?";
}

void LIFParams::validate() const {
  require(tau >= 0.0 && tau <= 1.0, "LIF tau must lie in [0,1]");
  require(v_th > 0.0, "LIF threshold must be positive");
  require(surrogate_width > 0.0, "surrogate width must be positive");
}

template <typename Real>
Real surrogate_grad(const LIFParams& params, Real pre_reset) {
  const Real w = static_cast<Real>(params.surrogate_width);
  const Real x = pre_reset - static_cast<Real>(params.v_th);
  switch (params.surrogate) {
    case Surrogate::Rectangular:
      return std::abs(x) < w / Real(2) ? Real(1) / w : Real(0);
    case Surrogate::Triangular:
      return std::max(Real(0), Real(1) - std::abs(x) / w) / w;
    case Surrogate::SigmoidDerivative: {
      const Real k = static_cast<Real>(params.sigmoid_slope());
      const Real s = sigmoid(k * x);
      return k * s * (Real(1) - s);
    }
  }
  return Real(0);
}

template <typename Real>
void surrogate_grad(const LIFParams& params, std::span<const Real> pre_reset, std::span<Real> out) {
  if (pre_reset.size() != out.size()) throw Error(ErrorCategory::Domain, "surrogate_grad: size mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = surrogate_grad<Real>(params, pre_reset[i]);
}

template <typename Real>
void lif_step(const LIFParams& params, std::span<const Real> prev_membrane,
              std::span<const Real> weighted_input, std::span<Real> new_membrane,
              std::span<Real> spikes, std::span<Real> pre_reset) {
  const std::size_t n = prev_membrane.size();
  if (weighted_input.size() != n || new_membrane.size() != n || spikes.size() != n ||
      pre_reset.size() != n) {
    throw Error(ErrorCategory::Domain, "lif_step: shape mismatch");
  }
  const Real tau = static_cast<Real>(params.tau);
  const Real v_th = static_cast<Real>(params.v_th);
  const bool smooth = params.spike_fn == SpikeFn::SmoothSigmoid;
  const Real k = static_cast<Real>(params.sigmoid_slope());
  for (std::size_t i = 0; i < n; ++i) {
    const Real u_hat = tau * prev_membrane[i] + weighted_input[i];
    if (!std::isfinite(u_hat)) {
      throw Error(ErrorCategory::Numeric, "lif_step: non-finite membrane potential at neuron " +
                                              std::to_string(i));
    }
    const Real s = smooth ? sigmoid(k * (u_hat - v_th)) : (u_hat >= v_th ? Real(1) : Real(0));
    pre_reset[i] = u_hat;
    spikes[i] = s;
    new_membrane[i] = u_hat * (Real(1) - s);
  }
}

void NetworkSpec::validate() const {
  require(in_channels > 0 && height > 0 && width > 0, "network input dims must be positive");
  require(kernel > 0 && kernel % 2 == 1, "conv kernel must be a positive odd integer");
  require(!hidden.empty(), "network needs at least one hidden dense layer (the penultimate tap)");
  require(num_classes >= 2, "network needs at least two classes");
  require(timesteps >= 1, "timesteps must be >= 1");
  int h = height, w = width;
  for (int c : conv_channels) {
    require(c > 0, "conv channels must be positive");
    require(h % 2 == 0 && w % 2 == 0, "input height/width must stay even through every pooling stage");
    h /= 2;
    w /= 2;
  }
  for (int d : hidden) require(d > 0, "hidden widths must be positive");
}

template <typename Real>
bool SpikingNetwork<Real>::is_shared(std::string_view name) {
  return !(name.starts_with("head_mixed.") || name.starts_with("head_event."));
}

template <typename Real>
SpikingNetwork<Real>::SpikingNetwork(NetworkSpec spec, LIFParams lif, std::uint64_t seed)
    : spec_(std::move(spec)), lif_(lif) {
  spec_.validate();
  lif_.validate();
  Engine rng(derive_seed(seed, streams::kInit));

  auto add = [&](std::string name, std::vector<int> shape, int fan_in, double bound) {
    Tensor<Real> t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    std::size_t n = 1;
    for (int d : t.shape) n *= static_cast<std::size_t>(d);
    t.data.resize(n);
    std::uniform_real_distribution<double> dist(-bound, bound);
    if (fan_in > 0) {
      for (auto& v : t.data) v = static_cast<Real>(dist(rng));
    } else {
      std::fill(t.data.begin(), t.data.end(), Real(0));
    }
    params_.push_back(std::move(t));
    return static_cast<int>(params_.size()) - 1;
  };
  const double gain = spec_.init_gain;

  int c = spec_.in_channels, h = spec_.height, w = spec_.width;
  for (std::size_t l = 0; l < spec_.conv_channels.size(); ++l) {
    const int out_c = spec_.conv_channels[l];
    const int fan_in = c * spec_.kernel * spec_.kernel;
    conv_w_.push_back(add("conv" + std::to_string(l) + ".weight", {out_c, c, spec_.kernel, spec_.kernel},
                          fan_in, gain * std::sqrt(3.0 / fan_in)));
    conv_geom_.push_back({c, out_c, h, w});
    c = out_c;
    h /= 2;
    w /= 2;
  }
  int in = c * h * w;
  for (std::size_t j = 0; j < spec_.hidden.size(); ++j) {
    const int out = spec_.hidden[j];
    dense_w_.push_back(add("dense" + std::to_string(j) + ".weight", {out, in}, in, gain * std::sqrt(3.0 / in)));
    in = out;
  }
  const int f = spec_.feature_dim();
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(f));
  head_m_w_ = add("head_mixed.weight", {spec_.num_classes, f}, f, head_bound);
  head_m_b_ = add("head_mixed.bias", {spec_.num_classes}, 0, 0.0);
  head_e_w_ = add("head_event.weight", {spec_.num_classes, f}, f, head_bound);
  head_e_b_ = add("head_event.bias", {spec_.num_classes}, 0, 0.0);
  mod_w_ = add("modality_head.weight", {1, f}, f, head_bound);
  mod_b_ = add("modality_head.bias", {1}, 0, 0.0);
  ratio_w_ = add("ratio_head.weight", {1, f}, f, head_bound);
  ratio_b_ = add("ratio_head.bias", {1}, 0, 0.0);
}

template <typename Real>
TensorList<Real> SpikingNetwork<Real>::zero_grads() const {
  TensorList<Real> grads = params_;
  for (auto& t : grads) std::fill(t.data.begin(), t.data.end(), Real(0));
  return grads;
}

template <typename Real>
std::size_t SpikingNetwork<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : params_) n += t.data.size();
  return n;
}

template <typename Real>
int SpikingNetwork<Real>::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  throw Error(ErrorCategory::Config, "no parameter named '" + std::string(name) + "'");
}

template <typename Real>
ForwardRecord<Real> SpikingNetwork<Real>::forward(std::span<const Real> seq, ClassHead head) const {
  const int T = spec_.timesteps;
  const std::size_t frame = static_cast<std::size_t>(spec_.frame_size());
  if (seq.size() != frame * static_cast<std::size_t>(T)) {
    std::ostringstream msg;
    msg << "forward: expected " << frame * T << " input values (T=" << T << "), got " << seq.size();
    throw Error(ErrorCategory::Config, msg.str());
  }
  const int k = spec_.kernel;
  ForwardRecord<Real> rec;
  rec.timesteps = T;
  rec.head = head;
  rec.conv.resize(conv_geom_.size());
  rec.dense.resize(dense_w_.size());

  std::vector<std::vector<Real>> membrane;  // post-reset state per layer
  for (std::size_t l = 0; l < conv_geom_.size(); ++l) {
    const auto& g = conv_geom_[l];
    auto& lr = rec.conv[l];
    lr.size = g.out_c * g.h * g.w;
    lr.input_size = g.in_c * g.h * g.w;
    lr.input.resize(static_cast<std::size_t>(T) * lr.input_size);
    lr.pre_reset.resize(static_cast<std::size_t>(T) * lr.size);
    lr.spikes.resize(static_cast<std::size_t>(T) * lr.size);
    membrane.emplace_back(static_cast<std::size_t>(lr.size), Real(0));
  }
  int in = conv_geom_.empty() ? static_cast<int>(frame)
                              : conv_geom_.back().out_c * (conv_geom_.back().h / 2) * (conv_geom_.back().w / 2);
  for (std::size_t j = 0; j < dense_w_.size(); ++j) {
    auto& lr = rec.dense[j];
    lr.size = spec_.hidden[j];
    lr.input_size = in;
    lr.input.resize(static_cast<std::size_t>(T) * in);
    lr.pre_reset.resize(static_cast<std::size_t>(T) * lr.size);
    lr.spikes.resize(static_cast<std::size_t>(T) * lr.size);
    membrane.emplace_back(static_cast<std::size_t>(lr.size), Real(0));
    in = lr.size;
  }
  const int f = spec_.feature_dim();
  const int nc = spec_.num_classes;
  rec.logits.resize(static_cast<std::size_t>(T) * nc);
  rec.features.resize(static_cast<std::size_t>(T) * f);
  rec.membrane.resize(static_cast<std::size_t>(T) * f);
  rec.modality_prob.resize(static_cast<std::size_t>(T));
  rec.ratio_prob.resize(static_cast<std::size_t>(T));

  std::vector<Real> col, current, next;
  for (int t = 0; t < T; ++t) {
    current.assign(seq.begin() + static_cast<std::ptrdiff_t>(t * frame),
                   seq.begin() + static_cast<std::ptrdiff_t>((t + 1) * frame));
    for (std::size_t l = 0; l < conv_geom_.size(); ++l) {
      const auto& g = conv_geom_[l];
      auto& lr = rec.conv[l];
      const int hw = g.h * g.w;
      const int kk = g.in_c * k * k;
      std::copy(current.begin(), current.end(), lr.input.begin() + static_cast<std::ptrdiff_t>(t) * lr.input_size);
      col.resize(static_cast<std::size_t>(kk) * hw);
      im2col(current.data(), g.in_c, g.h, g.w, k, col.data());
      next.resize(static_cast<std::size_t>(lr.size));
      Eigen::Map<RowMat<Real>>(next.data(), g.out_c, hw).noalias() =
          as_matrix(params_[conv_w_[l]].data, g.out_c, kk) * as_matrix(col, kk, hw);
      const std::size_t off = static_cast<std::size_t>(t) * lr.size;
      std::span<Real> pre(lr.pre_reset.data() + off, lr.size), spk(lr.spikes.data() + off, lr.size);
      lif_step<Real>(lif_, membrane[l], next, membrane[l], spk, pre);
      current.resize(static_cast<std::size_t>(g.out_c) * (g.h / 2) * (g.w / 2));
      avg_pool2(spk.data(), g.out_c, g.h, g.w, current.data());
    }
    for (std::size_t j = 0; j < dense_w_.size(); ++j) {
      auto& lr = rec.dense[j];
      std::copy(current.begin(), current.end(), lr.input.begin() + static_cast<std::ptrdiff_t>(t) * lr.input_size);
      next.resize(static_cast<std::size_t>(lr.size));
      as_vector(next, lr.size).noalias() =
          as_matrix(params_[dense_w_[j]].data, lr.size, lr.input_size) * as_vector(current, lr.input_size);
      const std::size_t off = static_cast<std::size_t>(t) * lr.size;
      std::span<Real> pre(lr.pre_reset.data() + off, lr.size), spk(lr.spikes.data() + off, lr.size);
      auto& mem = membrane[conv_geom_.size() + j];
      lif_step<Real>(lif_, mem, next, mem, spk, pre);
      current.assign(spk.begin(), spk.end());
    }
    const auto& last = rec.dense.back();
    const std::size_t foff = static_cast<std::size_t>(t) * f;
    std::copy_n(last.spikes.begin() + static_cast<std::ptrdiff_t>(foff), f, rec.features.begin() + static_cast<std::ptrdiff_t>(foff));
    std::copy_n(last.pre_reset.begin() + static_cast<std::ptrdiff_t>(foff), f, rec.membrane.begin() + static_cast<std::ptrdiff_t>(foff));

    const int hw_idx = head == ClassHead::Mixed ? head_m_w_ : head_e_w_;
    const int hb_idx = head == ClassHead::Mixed ? head_m_b_ : head_e_b_;
    as_vector(rec.logits, nc, static_cast<std::size_t>(t) * nc).noalias() =
        as_matrix(params_[hw_idx].data, nc, f) * as_vector(rec.features, f, foff) +
        as_vector(params_[hb_idx].data, nc);
    const auto v = as_vector(rec.membrane, f, foff);
    rec.modality_prob[static_cast<std::size_t>(t)] =
        sigmoid<Real>(as_vector(params_[mod_w_].data, f).dot(v) + params_[mod_b_].data[0]);
    rec.ratio_prob[static_cast<std::size_t>(t)] =
        sigmoid<Real>(as_vector(params_[ratio_w_].data, f).dot(v) + params_[ratio_b_].data[0]);
  }
  return rec;
}

template <typename Real>
void SpikingNetwork<Real>::backward(const ForwardRecord<Real>& rec, const OutputGrads<Real>& up,
                                    TensorList<Real>& grads) const {
  const int T = spec_.timesteps;
  if (rec.timesteps != T || rec.dense.size() != dense_w_.size() || rec.conv.size() != conv_geom_.size() ||
      rec.logits.empty()) {
    throw Error(ErrorCategory::Usage, "backward: missing or mismatched forward record");
  }
  if (grads.size() != params_.size()) {
    throw Error(ErrorCategory::Usage, "backward: gradient list does not match the parameters");
  }
  const int f = spec_.feature_dim();
  const int nc = spec_.num_classes;
  auto check_size = [&](const std::vector<Real>& v, std::size_t n, const char* what) {
    if (!v.empty() && v.size() != n) {
      throw Error(ErrorCategory::Usage, std::string("backward: upstream ") + what + " has the wrong size");
    }
  };
  check_size(up.logits, static_cast<std::size_t>(T) * nc, "logits");
  check_size(up.membrane, static_cast<std::size_t>(T) * f, "membrane");
  check_size(up.modality_prob, static_cast<std::size_t>(T), "modality_prob");
  check_size(up.ratio_prob, static_cast<std::size_t>(T), "ratio_prob");

  const int k = spec_.kernel;
  const int hw_idx = rec.head == ClassHead::Mixed ? head_m_w_ : head_e_w_;
  const int hb_idx = rec.head == ClassHead::Mixed ? head_m_b_ : head_e_b_;

  std::vector<std::vector<Real>> carry_dense, carry_conv;
  for (const auto& lr : rec.dense) carry_dense.emplace_back(static_cast<std::size_t>(lr.size), Real(0));
  for (const auto& lr : rec.conv) carry_conv.emplace_back(static_cast<std::size_t>(lr.size), Real(0));

  std::vector<Real> d_feat(static_cast<std::size_t>(f)), d_v(static_cast<std::size_t>(f));
  std::vector<Real> d_pre, d_below, d_spk, col, dcol;

  for (int t = T - 1; t >= 0; --t) {
    const std::size_t foff = static_cast<std::size_t>(t) * f;
    std::fill(d_feat.begin(), d_feat.end(), Real(0));
    std::fill(d_v.begin(), d_v.end(), Real(0));
    if (!up.logits.empty()) {
      const auto dl = as_vector(up.logits, nc, static_cast<std::size_t>(t) * nc);
      as_vector(d_feat, f).noalias() = as_matrix(params_[hw_idx].data, nc, f).transpose() * dl;
      as_matrix(grads[hw_idx].data, nc, f).noalias() += dl * as_vector(rec.features, f, foff).transpose();
      as_vector(grads[hb_idx].data, nc) += dl;
    }
    if (!up.membrane.empty()) as_vector(d_v, f) += as_vector(up.membrane, f, foff);
    const auto v = as_vector(rec.membrane, f, foff);
    if (!up.modality_prob.empty()) {
      const Real p = rec.modality_prob[static_cast<std::size_t>(t)];
      const Real g = up.modality_prob[static_cast<std::size_t>(t)] * p * (Real(1) - p);
      as_vector(d_v, f) += g * as_vector(params_[mod_w_].data, f);
      as_vector(grads[mod_w_].data, f) += g * v;
      grads[mod_b_].data[0] += g;
    }
    if (!up.ratio_prob.empty()) {
      const Real r = rec.ratio_prob[static_cast<std::size_t>(t)];
      const Real g = up.ratio_prob[static_cast<std::size_t>(t)] * r * (Real(1) - r);
      as_vector(d_v, f) += g * as_vector(params_[ratio_w_].data, f);
      as_vector(grads[ratio_w_].data, f) += g * v;
      grads[ratio_b_].data[0] += g;
    }

    // Dense layers, top down. d_below holds dL/d(input of the layer above).
    d_below = d_feat;
    for (int j = static_cast<int>(dense_w_.size()) - 1; j >= 0; --j) {
      const auto& lr = rec.dense[static_cast<std::size_t>(j)];
      const std::size_t off = static_cast<std::size_t>(t) * lr.size;
      const bool top = j == static_cast<int>(dense_w_.size()) - 1;
      d_pre.resize(static_cast<std::size_t>(lr.size));
      lif_backward_step<Real>(lif_, lr.size, lr.pre_reset.data() + off, lr.spikes.data() + off, d_below.data(),
                              top ? d_v.data() : nullptr, carry_dense[static_cast<std::size_t>(j)].data(),
                              d_pre.data());
      const auto dp = as_vector(d_pre, lr.size);
      as_matrix(grads[dense_w_[static_cast<std::size_t>(j)]].data, lr.size, lr.input_size).noalias() +=
          dp * as_vector(lr.input, lr.input_size, static_cast<std::size_t>(t) * lr.input_size).transpose();
      d_below.resize(static_cast<std::size_t>(lr.input_size));
      as_vector(d_below, lr.input_size).noalias() =
          as_matrix(params_[dense_w_[static_cast<std::size_t>(j)]].data, lr.size, lr.input_size).transpose() * dp;
    }

    for (int l = static_cast<int>(conv_geom_.size()) - 1; l >= 0; --l) {
      const auto& g = conv_geom_[static_cast<std::size_t>(l)];
      const auto& lr = rec.conv[static_cast<std::size_t>(l)];
      const int hw = g.h * g.w;
      const int kk = g.in_c * k * k;
      const std::size_t off = static_cast<std::size_t>(t) * lr.size;
      d_spk.resize(static_cast<std::size_t>(lr.size));
      avg_pool2_backward(d_below.data(), g.out_c, g.h, g.w, d_spk.data());
      d_pre.resize(static_cast<std::size_t>(lr.size));
      lif_backward_step<Real>(lif_, lr.size, lr.pre_reset.data() + off, lr.spikes.data() + off, d_spk.data(),
                              nullptr, carry_conv[static_cast<std::size_t>(l)].data(), d_pre.data());
      col.resize(static_cast<std::size_t>(kk) * hw);
      im2col(lr.input.data() + static_cast<std::size_t>(t) * lr.input_size, g.in_c, g.h, g.w, k, col.data());
      const auto dp = as_matrix(d_pre, g.out_c, hw);
      as_matrix(grads[conv_w_[static_cast<std::size_t>(l)]].data, g.out_c, kk).noalias() +=
          dp * as_matrix(col, kk, hw).transpose();
      if (l > 0) {
        dcol.resize(static_cast<std::size_t>(kk) * hw);
        as_matrix(dcol, kk, hw).noalias() =
            as_matrix(params_[conv_w_[static_cast<std::size_t>(l)]].data, g.out_c, kk).transpose() * dp;
        d_below.resize(static_cast<std::size_t>(lr.input_size));
        col2im(dcol.data(), g.in_c, g.h, g.w, k, d_below.data());
      }
    }
  }
}

template <typename To, typename From>
TensorList<To> convert_tensors(const TensorList<From>& src) {
  TensorList<To> out;
  out.reserve(src.size());
  for (const auto& t : src) {
    Tensor<To> c;
    c.name = t.name;
    c.shape = t.shape;
    c.data.assign(t.data.begin(), t.data.end());
    out.push_back(std::move(c));
  }
  return out;
}

template <typename Real>
std::uint64_t checksum(const TensorList<Real>& tensors, bool shared_only) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tensors) {
    if (shared_only && !SpikingNetwork<Real>::is_shared(t.name)) continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data.data());
    for (std::size_t i = 0; i < t.data.size() * sizeof(Real); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

#define TMKT_INSTANTIATE(Real)                                                                        \
  template Real surrogate_grad<Real>(const LIFParams&, Real);                                         \
  template void surrogate_grad<Real>(const LIFParams&, std::span<const Real>, std::span<Real>);       \
  template void lif_step<Real>(const LIFParams&, std::span<const Real>, std::span<const Real>,        \
                               std::span<Real>, std::span<Real>, std::span<Real>);                    \
  template class SpikingNetwork<Real>;                                                                \
  template std::uint64_t checksum<Real>(const TensorList<Real>&, bool);

TMKT_INSTANTIATE(float)
TMKT_INSTANTIATE(double)
TMKT_INSTANTIATE(long double)  // extended-precision finite-difference reference
#undef TMKT_INSTANTIATE

template TensorList<double> convert_tensors<double, float>(const TensorList<float>&);
template TensorList<float> convert_tensors<float, double>(const TensorList<double>&);
template TensorList<long double> convert_tensors<long double, double>(const TensorList<double>&);

}  // namespace tmkt::snn
