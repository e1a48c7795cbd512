#include "tmkt/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "tmkt/errors.hpp"
#include "tmkt/rng.hpp"

namespace tmkt::obj {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Column-centered copy (J X).
Matrix centered(const Matrix& X) { return X.rowwise() - X.colwise().mean(); }

bool degenerate(const Matrix& Xc, const Matrix& X) {
  return Xc.squaredNorm() <= 1e-20 * std::max(1.0, X.squaredNorm());
}

void check_pair(const Matrix& X, const Matrix& Y) {
  if (X.rows() != Y.rows()) {
    throw Error(ErrorCategory::Domain, "CKA inputs must share the row count (matched pairs)");
  }
  if (X.rows() < 2) throw Error(ErrorCategory::Domain, "CKA needs at least two rows");
}

}  // namespace

double cross_entropy(const Eigen::Ref<const Vector>& logits, int label, Vector* grad) {
  if (label < 0 || label >= logits.size()) {
    throw Error(ErrorCategory::Domain, "label " + std::to_string(label) + " out of class range");
  }
  const double m = logits.maxCoeff();
  const Vector e = (logits.array() - m).exp().matrix();
  const double z = e.sum();
  if (grad) {
    *grad = e / z;
    (*grad)(label) -= 1.0;
  }
  return std::log(z) + m - logits(label);
}

TetResult tet_loss(const Matrix& logits, int label) {
  const auto T = logits.rows();
  if (T == 0) throw Error(ErrorCategory::Domain, "TET loss needs at least one time step");
  TetResult out;
  out.grad.resize(T, logits.cols());
  out.per_step.resize(static_cast<std::size_t>(T));
  Vector g;
  for (Eigen::Index t = 0; t < T; ++t) {
    const double ce = cross_entropy(logits.row(t).transpose(), label, &g);
    out.per_step[static_cast<std::size_t>(t)] = ce;
    out.value += ce;
    out.grad.row(t) = g.transpose() / static_cast<double>(T);
  }
  out.value /= static_cast<double>(T);
  return out;
}

double hsic(const Matrix& K, const Matrix& L) {
  const auto n = K.rows();
  if (n < 2 || K.cols() != n || L.rows() != n || L.cols() != n) {
    throw Error(ErrorCategory::Domain, "HSIC needs two n x n Gram matrices with n >= 2");
  }
  // tr(K J L J) = sum_ij (JKJ)_ij L_ij, with JKJ the double-centered Gram matrix.
  const Vector row_mean = K.rowwise().mean();
  const Vector col_mean = K.colwise().mean().transpose();
  const double all_mean = K.mean();
  Matrix Kc = K;
  Kc.colwise() -= row_mean;
  Kc.rowwise() -= col_mean.transpose();
  Kc.array() += all_mean;
  const double nm1 = static_cast<double>(n - 1);
  return Kc.cwiseProduct(L).sum() / (nm1 * nm1);
}

double linear_cka(const Matrix& X, const Matrix& Y) { return linear_cka_with_grad(X, Y).value; }

CkaGrad linear_cka_with_grad(const Matrix& X, const Matrix& Y) {
  check_pair(X, Y);
  const Matrix Xc = centered(X);
  const Matrix Yc = centered(Y);
  if (degenerate(Xc, X) || degenerate(Yc, Y)) {
    throw DegenerateInput("CKA: zero-variance feature matrix (HSIC(K,K) = 0)");
  }
  // With centered Gram matrices Kc = Xc Xc^T and Lc = Yc Yc^T:
  //   CKA = <Kc, Lc> / (|Kc| |Lc|); the (n-1)^2 factors cancel.
  const Matrix Kc = Xc * Xc.transpose();
  const Matrix Lc = Yc * Yc.transpose();
  const double kl = Kc.cwiseProduct(Lc).sum();
  const double kk = Kc.norm();
  const double ll = Lc.norm();
  CkaGrad out;
  out.value = kl / (kk * ll);
  // d<Kc,Lc>/dXc = 2 Lc Xc, d|Kc|/dXc = 2 Kc Xc / |Kc|; then project back with J.
  const Matrix dXc = (2.0 / (kk * ll)) * (Lc * Xc) - (2.0 * out.value / (kk * kk)) * (Kc * Xc);
  const Matrix dYc = (2.0 / (kk * ll)) * (Kc * Yc) - (2.0 * out.value / (ll * ll)) * (Lc * Yc);
  out.dX = centered(dXc);
  out.dY = centered(dYc);
  return out;
}

DaResult da_loss(const std::vector<Matrix>& mixed, const std::vector<Matrix>& event) {
  if (mixed.empty() || mixed.size() != event.size()) {
    throw Error(ErrorCategory::Domain, "DA loss needs the same positive number of steps on both streams");
  }
  const std::size_t T = mixed.size();
  DaResult out;
  out.per_step.assign(T, 0.0);
  out.skipped.assign(T, 0);
  out.d_mixed.resize(T);
  out.d_event.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (mixed[t].rows() == 0) throw Error(ErrorCategory::Data, "pairing error: no matched pairs in batch");
    try {
      const CkaGrad g = linear_cka_with_grad(mixed[t], event[t]);
      out.per_step[t] = 1.0 - g.value;
      out.d_mixed[t] = -g.dX / static_cast<double>(T);
      out.d_event[t] = -g.dY / static_cast<double>(T);
    } catch (const DegenerateInput&) {
      out.skipped[t] = 1;
      ++out.skipped_steps;
      out.d_mixed[t] = Matrix::Zero(mixed[t].rows(), mixed[t].cols());
      out.d_event[t] = Matrix::Zero(event[t].rows(), event[t].cols());
    }
    out.value += out.per_step[t];
  }
  out.value /= static_cast<double>(T);
  return out;
}

std::vector<int> pair_same_class(std::span<const int> mixed_labels, std::span<const int> event_labels,
                                 std::uint64_t seed) {
  std::map<int, std::vector<int>> by_class;
  for (std::size_t j = 0; j < event_labels.size(); ++j) by_class[event_labels[j]].push_back(static_cast<int>(j));
  Engine rng(seed);
  std::vector<int> pairs(mixed_labels.size());
  for (std::size_t i = 0; i < mixed_labels.size(); ++i) {
    const auto it = by_class.find(mixed_labels[i]);
    if (it == by_class.end()) {
      throw Error(ErrorCategory::Data,
                  "pairing error: no event sample of class " + std::to_string(mixed_labels[i]) + " in batch");
    }
    std::uniform_int_distribution<std::size_t> pick(0, it->second.size() - 1);
    pairs[i] = it->second[pick(rng)];
  }
  return pairs;
}

double AlignmentGate::gate(int t) const { return sigmoid(theta.at(static_cast<std::size_t>(t))); }

double AlignmentGate::mean_gate() const {
  if (theta.empty()) return 0.0;
  double s = 0.0;
  for (double th : theta) s += sigmoid(th);
  return s / static_cast<double>(theta.size());
}

RdaResult rda_loss(std::span<const double> da_steps, std::span<const double> cls_e_steps,
                   const AlignmentGate& gate, std::span<const std::uint8_t> skip) {
  const std::size_t T = da_steps.size();
  if (T == 0 || cls_e_steps.size() != T || gate.theta.size() != T || (!skip.empty() && skip.size() != T)) {
    throw Error(ErrorCategory::Domain, "RDA loss: step counts of da, cls_e and gate must agree");
  }
  RdaResult out;
  out.d_da.assign(T, 0.0);
  out.d_cls.assign(T, 0.0);
  out.d_theta.assign(T, 0.0);
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double g = sigmoid(gate.theta[t]);
    const bool skipped = !skip.empty() && skip[t];
    const double da = skipped ? 0.0 : da_steps[t];
    out.value += g * da + (1.0 - g) * cls_e_steps[t];
    out.d_da[t] = skipped ? 0.0 : g * inv_t;
    out.d_cls[t] = (1.0 - g) * inv_t;
    out.d_theta[t] = skipped ? 0.0 : g * (1.0 - g) * (da - cls_e_steps[t]) * inv_t;
  }
  out.value *= inv_t;
  return out;
}

MagResult mag_loss(const Vector& probs, std::span<const std::uint8_t> labels) {
  const auto T = probs.size();
  if (T == 0 || labels.size() != static_cast<std::size_t>(T)) {
    throw Error(ErrorCategory::Domain, "MAG loss: probabilities and labels must have the same positive length");
  }
  MagResult out;
  out.grad = Vector::Zero(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double raw = probs(t);
    const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    const double y = labels[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
    out.value -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    if (raw == p) out.grad(t) = (p - y) / (p * (1.0 - p)) / static_cast<double>(T);
  }
  out.value /= static_cast<double>(T);
  return out;
}

MrpResult mrp_loss_target(const Vector& probs, double static_fraction) {
  const auto T = probs.size();
  if (T == 0) throw Error(ErrorCategory::Domain, "MRP loss needs at least one time step");
  MrpResult out;
  out.estimate = probs.mean();
  out.target = static_fraction;
  const double diff = out.estimate - out.target;
  out.value = diff * diff;
  out.grad = Vector::Constant(T, 2.0 * diff / static_cast<double>(T));
  return out;
}

MrpResult mrp_loss(const Vector& probs, int t_star) {
  const auto T = probs.size();
  if (t_star < 1 || t_star > T + 1) throw Error(ErrorCategory::Domain, "t_star must lie in [1, T+1]");
  return mrp_loss_target(probs, static_cast<double>(t_star - 1) / static_cast<double>(T));
}

double LossBreakdown::recompute_total() const { return cls_m + lambda * rda + mag + mrp; }

LossBreakdown total_loss(const LossComponents& c, double lambda) {
  const std::pair<const char*, double> parts[] = {{"cls_m", c.cls_m}, {"rda", c.rda}, {"da", c.da},
                                                  {"cls_e", c.cls_e}, {"mag", c.mag}, {"mrp", c.mrp}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "non-finite loss component '" << name << "' = " << value << " (cls_m=" << c.cls_m
          << ", rda=" << c.rda << ", da=" << c.da << ", cls_e=" << c.cls_e << ", mag=" << c.mag
          << ", mrp=" << c.mrp << ")";
      throw Error(ErrorCategory::Numeric, msg.str());
    }
  }
  if (!(lambda >= 0.0)) throw Error(ErrorCategory::Config, "lambda must be >= 0");
  LossBreakdown out;
  out.cls_m = c.cls_m;
  out.rda = c.rda;
  out.da = c.da;
  out.cls_e = c.cls_e;
  out.mag = c.mag;
  out.mrp = c.mrp;
  out.lambda = lambda;
  out.total = out.recompute_total();
  return out;
}

}  // namespace tmkt::obj
