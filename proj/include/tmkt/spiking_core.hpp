#pragma once

// Leaky integrate-and-fire network with surrogate-gradient BPTT.
//
// Per layer and time step:
//   u_hat = tau * u_prev + W x_t
//   s     = H(u_hat - v_th)
//   u     = u_hat * (1 - s)
//
// The backbone is a stack of conv(k x k, same padding)-LIF-avgpool(2) blocks
// followed by dense-LIF layers; the last dense LIF layer is the penultimate
// layer. Its spikes feed the class heads, and its pre-reset membrane V_t
// feeds the modality head g_s, the ratio head g_m and domain alignment.
// Backbone layers carry no bias, so a silent input produces silent layers.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tmkt::snn {

enum class Surrogate { Rectangular, Triangular, SigmoidDerivative };

/// Forward nonlinearity. SmoothSigmoid replaces the Heaviside step with the
/// sigmoid whose derivative is the SigmoidDerivative surrogate; it exists so
/// that BPTT can be checked against finite differences.
enum class SpikeFn { Heaviside, SmoothSigmoid };

/// Detached: the reset factor (1 - s) is treated as a constant in backward.
/// Full: differentiate through s in u_hat * (1 - s) as well.
enum class ResetGrad { Detached, Full };

Surrogate parse_surrogate(std::string_view text);
std::string_view to_string(Surrogate s);

struct LIFParams {
  double tau = 0.5;
  double v_th = 1.0;
  Surrogate surrogate = Surrogate::Triangular;
  double surrogate_width = 1.0;
  SpikeFn spike_fn = SpikeFn::Heaviside;
  ResetGrad reset_grad = ResetGrad::Detached;

  void validate() const;
  // Sigmoid slope chosen so that every surrogate peaks at 1/width.
  double sigmoid_slope() const { return 4.0 / surrogate_width; }
};

template <typename Real>
Real surrogate_grad(const LIFParams& params, Real pre_reset);

template <typename Real>
void surrogate_grad(const LIFParams& params, std::span<const Real> pre_reset, std::span<Real> out);

/// One LIF update for a vector of neurons. Throws Numeric on non-finite input.
template <typename Real>
void lif_step(const LIFParams& params, std::span<const Real> prev_membrane,
              std::span<const Real> weighted_input, std::span<Real> new_membrane,
              std::span<Real> spikes, std::span<Real> pre_reset);

struct NetworkSpec {
  int in_channels = 2;
  int height = 24;
  int width = 24;
  std::vector<int> conv_channels{16, 32};
  int kernel = 3;
  std::vector<int> hidden{64};
  int num_classes = 5;
  int timesteps = 8;
  double init_gain = 3.0;  // scales the U(+-sqrt(3/fan_in)) backbone init

  void validate() const;
  int feature_dim() const { return hidden.back(); }
  int frame_size() const { return in_channels * height * width; }
};

enum class ClassHead { Mixed, Event };

template <typename Real>
struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<Real> data;
};

template <typename Real>
using TensorList = std::vector<Tensor<Real>>;

template <typename Real>
struct LayerRecord {
  int size = 0;        // neurons per step
  int input_size = 0;  // input elements per step
  std::vector<Real> input;      // T x input_size (layer input: frame, pooled or dense spikes)
  std::vector<Real> pre_reset;  // T x size
  std::vector<Real> spikes;     // T x size
};

/// Everything forward() produced, kept for backward().
template <typename Real>
struct ForwardRecord {
  int timesteps = 0;
  ClassHead head = ClassHead::Mixed;
  std::vector<LayerRecord<Real>> conv;
  std::vector<LayerRecord<Real>> dense;
  std::vector<Real> logits;         // T x num_classes
  std::vector<Real> features;       // T x feature_dim, penultimate spikes
  std::vector<Real> membrane;       // T x feature_dim, penultimate pre-reset V_t
  std::vector<Real> modality_prob;  // T, g_s(V_t)
  std::vector<Real> ratio_prob;     // T, g_m(V_t)
};

/// Upstream gradients; empty vectors mean zero.
template <typename Real>
struct OutputGrads {
  std::vector<Real> logits;         // T x num_classes
  std::vector<Real> membrane;       // T x feature_dim
  std::vector<Real> modality_prob;  // T
  std::vector<Real> ratio_prob;     // T
};

template <typename Real>
class SpikingNetwork {
 public:
  SpikingNetwork(NetworkSpec spec, LIFParams lif, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  const LIFParams& lif() const { return lif_; }
  LIFParams& lif() { return lif_; }

  TensorList<Real>& parameters() { return params_; }
  const TensorList<Real>& parameters() const { return params_; }
  TensorList<Real> zero_grads() const;
  std::size_t parameter_count() const;

  int index_of(std::string_view name) const;
  /// True for tensors used by both streams (everything except the two class heads).
  static bool is_shared(std::string_view name);

  /// Runs the sequence from zero membrane state. seq holds T x C x H x W values.
  ForwardRecord<Real> forward(std::span<const Real> seq, ClassHead head) const;

  /// Reverse-time accumulation into grads (which must come from zero_grads()).
  void backward(const ForwardRecord<Real>& record, const OutputGrads<Real>& upstream,
                TensorList<Real>& grads) const;

 private:
  struct ConvGeom {
    int in_c, out_c, h, w;
  };

  NetworkSpec spec_;
  LIFParams lif_;
  TensorList<Real> params_;
  std::vector<ConvGeom> conv_geom_;
  std::vector<int> conv_w_, dense_w_;
  int head_m_w_ = -1, head_m_b_ = -1, head_e_w_ = -1, head_e_b_ = -1;
  int mod_w_ = -1, mod_b_ = -1, ratio_w_ = -1, ratio_b_ = -1;
};

/// Converts parameters between precisions (used for double-precision gradient checks).
template <typename To, typename From>
TensorList<To> convert_tensors(const TensorList<From>& src);

/// FNV-1a over the raw bytes of the selected tensors.
template <typename Real>
std::uint64_t checksum(const TensorList<Real>& tensors, bool shared_only);

}  // namespace tmkt::snn
