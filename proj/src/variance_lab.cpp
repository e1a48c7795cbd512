#include "tmkt/variance_lab.hpp"

#include <cmath>
#include <sstream>

#include "tmkt/errors.hpp"
#include "tmkt/rng.hpp"

namespace tmkt::var {

namespace {

double min_eigenvalue(const Matrix& m) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

void model_error(const std::string& what) { throw Error(ErrorCategory::Domain, "gradient model: " + what); }

void require_square(const Matrix& m, int d, const char* name) {
  if (m.rows() != d || m.cols() != d) {
    std::ostringstream msg;
    msg << name << " must be " << d << "x" << d << ", got " << m.rows() << "x" << m.cols();
    model_error(msg.str());
  }
}

void require_symmetric(const Matrix& m, const char* name) {
  const double tol = 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol) model_error(std::string(name) + " must be symmetric");
}

void require_psd(const Matrix& m, const char* name) {
  const double tol = 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff());
  const double lo = min_eigenvalue(m);
  if (lo < -tol) {
    std::ostringstream msg;
    msg << name << " must be positive semidefinite (min eigenvalue " << lo << ")";
    model_error(msg.str());
  }
}

}  // namespace

int GradientModel::n_event() const { return static_cast<int>(std::lround(alpha * timesteps)); }

Matrix GradientModel::block_r() const {
  const int d = dim();
  Matrix block(2 * d, 2 * d);
  block << r_a, r_ae, r_ae.transpose(), r_e;
  return block;
}

void GradientModel::validate() const {
  const int d = dim();
  if (d < 1) model_error("dimension must be >= 1");
  if (mu_e.size() != d) model_error("mu_a and mu_e must have the same length");
  require_square(sigma_a, d, "Sigma_a");
  require_square(sigma_e, d, "Sigma_e");
  require_square(r_a, d, "R_a");
  require_square(r_e, d, "R_e");
  require_square(r_ae, d, "R_ae");
  if (timesteps < 1) model_error("T must be >= 1");
  if (batch < 1) model_error("B must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) model_error("alpha must lie in [0,1]");
  if (std::abs(alpha * timesteps - std::round(alpha * timesteps)) > 1e-9) {
    std::ostringstream msg;
    msg << "alpha*T must be an integer (alpha=" << alpha << ", T=" << timesteps << ")";
    model_error(msg.str());
  }
  require_symmetric(sigma_a, "Sigma_a");
  require_symmetric(sigma_e, "Sigma_e");
  require_symmetric(r_a, "R_a");
  require_symmetric(r_e, "R_e");
  require_psd(block_r(), "[[R_a, R_ae], [R_ae^T, R_e]]");
  require_psd(sigma_a - r_a, "Sigma_a - R_a");
  require_psd(sigma_e - r_e, "Sigma_e - R_e");
}

Vector analytic_mean(const GradientModel& m) { return (1.0 - m.alpha) * m.mu_a + m.alpha * m.mu_e; }

Matrix analytic_cov_tsm(const GradientModel& m) {
  const double a = m.alpha;
  const double T = m.timesteps;
  const Matrix inner = (1.0 - a) * m.sigma_a + a * m.sigma_e + (1.0 - a) * ((1.0 - a) * T - 1.0) * m.r_a +
                       a * (a * T - 1.0) * m.r_e + (1.0 - a) * (a * T) * (m.r_ae + m.r_ae.transpose());
  return inner / (m.batch * T);
}

Matrix analytic_cov_bm(const GradientModel& m) {
  const double a = m.alpha;
  const double T = m.timesteps;
  const Vector dmu = m.mu_e - m.mu_a;
  const Matrix within = (1.0 - a) * (m.sigma_a + (T - 1.0) * m.r_a) + a * (m.sigma_e + (T - 1.0) * m.r_e);
  return within / (m.batch * T) + (a * (1.0 - a) / m.batch) * dmu * dmu.transpose();
}

CovDifference cov_difference(const GradientModel& m) {
  const double scale = m.alpha * (1.0 - m.alpha) / m.batch;
  const Vector dmu = m.mu_e - m.mu_a;
  const Matrix r_sigma = m.r_a + m.r_e - m.r_ae - m.r_ae.transpose();
  CovDifference out;
  out.diff = scale * (dmu * dmu.transpose() + r_sigma);
  out.trace_lhs = (analytic_cov_bm(m) - analytic_cov_tsm(m)).trace();
  out.trace_rhs = scale * (dmu.squaredNorm() + r_sigma.trace());
  out.min_eigenvalue = min_eigenvalue(out.diff);
  return out;
}

Matrix psd_factor(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (m + m.transpose()));
  const Vector root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * root.asDiagonal();
}

FrameSampler::FrameSampler(const GradientModel& model) : model_(model) {
  model.validate();
  latent_factor_ = psd_factor(model.block_r());
  noise_a_ = psd_factor(model.sigma_a - model.r_a);
  noise_e_ = psd_factor(model.sigma_e - model.r_e);
}

Vector mc_replicate(const GradientModel& model, const FrameSampler& sampler, Estimator estimator,
                    std::uint64_t seed, std::int64_t replication) {
  Engine rng(derive_seed(seed, streams::kReplication, static_cast<std::uint64_t>(replication)));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const int d = model.dim();
  const int T = model.timesteps;
  const int n_a = model.n_static();
  Matrix a, e;
  Vector g = Vector::Zero(d);
  for (int i = 0; i < model.batch; ++i) {
    sampler.draw(rng, a, e);
    if (estimator == Estimator::TSM) {
      g += a.leftCols(n_a).rowwise().sum() + e.rightCols(T - n_a).rowwise().sum();
    } else {
      const bool event = uniform(rng) < model.alpha;
      g += (event ? e : a).rowwise().sum();
    }
  }
  return g / (static_cast<double>(T) * model.batch);
}

McEstimate mc_estimate(const GradientModel& model, Estimator estimator, std::int64_t replications,
                       std::uint64_t seed) {
  if (replications < 1) throw Error(ErrorCategory::Domain, "replications must be >= 1");
  const FrameSampler sampler(model);
  const int d = model.dim();
  // Moments are accumulated about the analytic mean, a fixed shift that keeps
  // the sums well conditioned; the covariance itself is purely empirical.
  const Vector shift = analytic_mean(model);
  Vector s1 = Vector::Zero(d);
  Matrix s2 = Matrix::Zero(d, d);
  Matrix s4 = Matrix::Zero(d, d);
  for (std::int64_t r = 0; r < replications; ++r) {
    const Vector y = mc_replicate(model, sampler, estimator, seed, r) - shift;
    s1 += y;
    for (int j = 0; j < d; ++j) {
      for (int i = 0; i < d; ++i) {
        const double p = y(i) * y(j);
        s2(i, j) += p;
        s4(i, j) += p * p;
      }
    }
  }
  const double n = static_cast<double>(replications);
  McEstimate out;
  out.replications = replications;
  const Vector ybar = s1 / n;
  out.mean = shift + ybar;
  out.cov = replications > 1 ? Matrix((s2 - n * ybar * ybar.transpose()) / (n - 1.0)) : Matrix::Zero(d, d);
  const Matrix m2 = s2 / n;
  const Matrix var_prod = (s4 / n - m2.cwiseProduct(m2)).cwiseMax(0.0);
  out.cov_stderr = (var_prod / n).cwiseSqrt();
  out.mean_stderr = (out.cov.diagonal().cwiseMax(0.0) / n).cwiseSqrt();
  return out;
}

GradientModel random_model(int dim, int timesteps, int batch, double alpha, std::uint64_t seed) {
  Engine rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> scale_dist(0.1, 2.0);
  auto gaussian = [&](int rows, int cols) {
    Matrix m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
  };
  const int d = dim;
  GradientModel m;
  m.timesteps = timesteps;
  m.batch = batch;
  m.alpha = alpha;
  m.mu_a = gaussian(d, 1);
  m.mu_e = gaussian(d, 1) * scale_dist(rng);
  // Occasionally rank-deficient so that the boundary of the PSD cone is exercised.
  const int rank = std::uniform_int_distribution<int>(1, 2 * d)(rng);
  const Matrix a = gaussian(2 * d, rank);
  const Matrix block = scale_dist(rng) * a * a.transpose() / static_cast<double>(2 * d);
  m.r_a = block.topLeftCorner(d, d);
  m.r_ae = block.topRightCorner(d, d);
  m.r_e = block.bottomRightCorner(d, d);
  const Matrix na = gaussian(d, d), ne = gaussian(d, d);
  m.sigma_a = m.r_a + scale_dist(rng) * na * na.transpose() / static_cast<double>(d);
  m.sigma_e = m.r_e + scale_dist(rng) * ne * ne.transpose() / static_cast<double>(d);
  // Exact symmetry, so validate() sees clean inputs.
  m.r_a = 0.5 * (m.r_a + m.r_a.transpose()).eval();
  m.r_e = 0.5 * (m.r_e + m.r_e.transpose()).eval();
  m.sigma_a = 0.5 * (m.sigma_a + m.sigma_a.transpose()).eval();
  m.sigma_e = 0.5 * (m.sigma_e + m.sigma_e.transpose()).eval();
  m.validate();
  return m;
}

}  // namespace tmkt::var
