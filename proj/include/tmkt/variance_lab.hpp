#pragma once

// Second-order model of per-frame gradients and the two batch estimators it
// induces: time-step mixup (first n_a frames static, last n_e event) and
// batch mixing (each sample entirely static or entirely event, event with
// probability alpha). Closed-form covariances are paired with a Gaussian
// latent-factor Monte Carlo sampler that realizes the same statistics.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

namespace tmkt::var {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct GradientModel {
  Vector mu_a, mu_e;
  Matrix sigma_a, sigma_e;  // per-frame covariance
  Matrix r_a, r_e;          // covariance between two distinct frames of one segment
  Matrix r_ae;              // Cov(g_a^t, g_e^s)
  double alpha = 0.5;       // n_e / T
  int timesteps = 4;
  int batch = 8;

  int dim() const { return static_cast<int>(mu_a.size()); }
  int n_event() const;
  int n_static() const { return timesteps - n_event(); }
  Matrix block_r() const;  // [[R_a, R_ae], [R_ae^T, R_e]]

  /// Throws Domain on any violated invariant (shapes, integrality of alpha*T,
  /// PSD of the block matrix and of Sigma - R).
  void validate() const;
};

enum class Estimator { TSM, BM };

Vector analytic_mean(const GradientModel& model);
Matrix analytic_cov_tsm(const GradientModel& model);
Matrix analytic_cov_bm(const GradientModel& model);

struct CovDifference {
  Matrix diff;               // (alpha(1-alpha)/B) [dmu dmu^T + R_a + R_e - R_ae - R_ae^T]
  double trace_lhs = 0.0;    // tr(cov_bm - cov_tsm)
  double trace_rhs = 0.0;    // (alpha(1-alpha)/B) (|dmu|^2 + tr(R_sigma))
  double min_eigenvalue = 0.0;
};
CovDifference cov_difference(const GradientModel& model);

/// Draws one sample's per-frame gradients: column t of the returned d x T
/// matrices is g^t. Static and event frames share the latent draw, so
/// Cov(a.col(t), e.col(s)) = R_ae.
class FrameSampler {
 public:
  explicit FrameSampler(const GradientModel& model);

  template <class Urbg>
  void draw(Urbg& rng, Matrix& static_frames, Matrix& event_frames) const;

 private:
  const GradientModel& model_;
  Matrix latent_factor_;  // 2d x 2d, L L^T = block_r
  Matrix noise_a_, noise_e_;  // factors of Sigma - R
};

struct McEstimate {
  Vector mean;
  Matrix cov;         // unbiased, (replications - 1) normalization
  Matrix cov_stderr;  // elementwise standard error of cov
  Vector mean_stderr;
  std::int64_t replications = 0;
};

/// Monte Carlo over replications of the batch estimator. Replication r uses
/// its own engine seeded from (seed, r), so the result does not depend on
/// evaluation order.
McEstimate mc_estimate(const GradientModel& model, Estimator estimator, std::int64_t replications,
                       std::uint64_t seed);

/// Random model satisfying every invariant: a PSD block for the R matrices
/// plus PSD inflation for Sigma.
GradientModel random_model(int dim, int timesteps, int batch, double alpha, std::uint64_t seed);

/// Symmetric PSD square root factor (eigen decomposition, negative eigenvalues clipped).
Matrix psd_factor(const Matrix& m);

// Implementation of the template member.
template <class Urbg>
void FrameSampler::draw(Urbg& rng, Matrix& static_frames, Matrix& event_frames) const {
  const int d = model_.dim();
  const int T = model_.timesteps;
  std::normal_distribution<double> normal(0.0, 1.0);
  static_frames.resize(d, T);
  event_frames.resize(d, T);
  double z[64];
  double latent[64];
  const int d2 = 2 * d;
  // Written as explicit loops to avoid temporaries in the hot path.
  std::vector<double> zbuf, ubuf;
  double* zp = z;
  double* up = latent;
  if (d2 > 64) {
    zbuf.resize(static_cast<std::size_t>(d2));
    ubuf.resize(static_cast<std::size_t>(d2));
    zp = zbuf.data();
    up = ubuf.data();
  }
  for (int i = 0; i < d2; ++i) zp[i] = normal(rng);
  for (int i = 0; i < d2; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d2; ++j) acc += latent_factor_(i, j) * zp[j];
    up[i] = acc;
  }
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < d; ++i) zp[i] = normal(rng);
    for (int i = 0; i < d; ++i) zp[d + i] = normal(rng);
    for (int i = 0; i < d; ++i) {
      double na = 0.0, ne = 0.0;
      for (int j = 0; j < d; ++j) {
        na += noise_a_(i, j) * zp[j];
        ne += noise_e_(i, j) * zp[d + j];
      }
      static_frames(i, t) = model_.mu_a(i) + up[i] + na;
      event_frames(i, t) = model_.mu_e(i) + up[d + i] + ne;
    }
  }
}

/// Batch estimate G for one replication (exposed for order-independence checks).
Vector mc_replicate(const GradientModel& model, const FrameSampler& sampler, Estimator estimator,
                    std::uint64_t seed, std::int64_t replication);

}  // namespace tmkt::var
