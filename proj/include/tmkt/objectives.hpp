#pragma once

// Loss functions for two-stream training. Every loss returns its value and
// the gradient with respect to its direct inputs; the trainer chains those
// into the network's backward pass.

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace tmkt::obj {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Softmax cross-entropy of one logit vector; optional gradient w.r.t. the logits.
double cross_entropy(const Eigen::Ref<const Vector>& logits, int label, Vector* grad = nullptr);

struct TetResult {
  double value = 0.0;
  std::vector<double> per_step;  // CE at each step
  Matrix grad;                   // T x C, d value / d logits
};

/// Mean over steps of the per-step cross-entropy; logits is T x C.
TetResult tet_loss(const Matrix& logits, int label);

/// HSIC(K, L) = tr(K J L J) / (n-1)^2 for n x n Gram matrices.
double hsic(const Matrix& K, const Matrix& L);

/// Linear CKA between row-matched feature matrices X (n x d1) and Y (n x d2).
/// Throws DegenerateInput when either side has zero variance.
double linear_cka(const Matrix& X, const Matrix& Y);

struct CkaGrad {
  double value = 0.0;
  Matrix dX;
  Matrix dY;
};
CkaGrad linear_cka_with_grad(const Matrix& X, const Matrix& Y);

struct DaResult {
  double value = 0.0;              // (1/T) sum_t da_t, skipped steps count as 0
  std::vector<double> per_step;    // da_t = 1 - CKA_t
  std::vector<std::uint8_t> skipped;
  int skipped_steps = 0;
  std::vector<Matrix> d_mixed;     // d value / d V_m[t]
  std::vector<Matrix> d_event;     // d value / d V_e[t]
};

/// Domain alignment over T steps; row i of mixed[t] is matched with row i of event[t].
DaResult da_loss(const std::vector<Matrix>& mixed, const std::vector<Matrix>& event);

/// For every mixed sample, a uniformly random event sample with the same label.
std::vector<int> pair_same_class(std::span<const int> mixed_labels, std::span<const int> event_labels,
                                 std::uint64_t seed);

struct AlignmentGate {
  std::vector<double> theta;

  explicit AlignmentGate(int timesteps = 0) : theta(static_cast<std::size_t>(timesteps), 0.0) {}
  double gate(int t) const;
  double mean_gate() const;
};

struct RdaResult {
  double value = 0.0;
  std::vector<double> d_da;     // d value / d da_t
  std::vector<double> d_cls;    // d value / d cls_e_t
  std::vector<double> d_theta;  // d value / d theta_t
};

/// (1/T) sum_t [g_t * da_t + (1 - g_t) * cls_t], g_t = sigmoid(theta_t).
/// Steps flagged in skip contribute only the classification term with weight
/// (1 - g_t) and pass no gradient to theta_t.
RdaResult rda_loss(std::span<const double> da_steps, std::span<const double> cls_e_steps,
                   const AlignmentGate& gate, std::span<const std::uint8_t> skip = {});

inline constexpr double kProbClamp = 1e-7;

struct MagResult {
  double value = 0.0;
  Vector grad;  // d value / d prob_t
};

/// Mean binary cross-entropy between per-step source probabilities and labels (1 = static).
MagResult mag_loss(const Vector& probs, std::span<const std::uint8_t> labels);

struct MrpResult {
  double value = 0.0;
  double estimate = 0.0;  // mean_t probs
  double target = 0.0;
  Vector grad;
};

/// Squared error between mean_t probs and the static fraction (t_star - 1) / T.
MrpResult mrp_loss(const Vector& probs, int t_star);
MrpResult mrp_loss_target(const Vector& probs, double static_fraction);

struct LossComponents {
  double cls_m = 0.0;
  double rda = 0.0;
  double da = 0.0;
  double cls_e = 0.0;
  double mag = 0.0;
  double mrp = 0.0;
};

struct LossBreakdown {
  double cls_m = 0.0;
  double rda = 0.0;
  double da = 0.0;
  double cls_e = 0.0;
  double mag = 0.0;
  double mrp = 0.0;
  double total = 0.0;
  double lambda = 0.5;

  double recompute_total() const;
};

/// total = cls_m + lambda * rda + mag + mrp. Throws Numeric naming the first
/// non-finite component.
LossBreakdown total_loss(const LossComponents& components, double lambda);

}  // namespace tmkt::obj
