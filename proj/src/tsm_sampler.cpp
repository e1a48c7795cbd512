#include "tmkt/tsm_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tmkt/errors.hpp"

namespace tmkt::tsm {

namespace {

void require_timesteps(int timesteps) {
  if (timesteps < 1) {
    throw Error(ErrorCategory::Domain, "timesteps must be >= 1, got " + std::to_string(timesteps));
  }
}

// 1 - (1-p)^n without cancellation for small p.
double one_minus_q_pow(double p, int n) {
  if (p >= 1.0) return 1.0;
  return -std::expm1(static_cast<double>(n) * std::log1p(-p));
}

// Floor with a small guard so that e.g. 10 * 0.3 counts as 3.
int floor_count(double x) { return static_cast<int>(std::floor(x + 1e-9)); }

void check_pairing(const FrameSeq& static_seq, const FrameSeq& event_seq) {
  if (!(static_seq.shape == event_seq.shape)) {
    throw Error(ErrorCategory::Data, "pairing error: static shape " + static_seq.shape.to_string() +
                                         " != event shape " + event_seq.shape.to_string());
  }
  if (static_seq.label != event_seq.label) {
    throw Error(ErrorCategory::Data, "pairing error: static label " +
                                         std::to_string(static_seq.label) + " != event label " +
                                         std::to_string(event_seq.label));
  }
}

}  // namespace

MixMode parse_mix_mode(std::string_view text) {
  if (text == "unconditional") return MixMode::Unconditional;
  if (text == "conditional") return MixMode::Conditional;
  throw Error(ErrorCategory::Config, "unknown mix mode '" + std::string(text) + "'");
}

Schedule parse_schedule(std::string_view text) {
  if (text == "probabilistic") return Schedule::ProbabilisticTSM;
  if (text == "fixed") return Schedule::FixedRatio;
  if (text == "dynamic-linear") return Schedule::DynamicLinear;
  if (text == "dynamic-nonlinear") return Schedule::DynamicNonLinear;
  throw Error(ErrorCategory::Config, "unknown schedule '" + std::string(text) + "'");
}

Layout parse_layout(std::string_view text) {
  if (text == "r2d") return Layout::RtoD;
  if (text == "d2r") return Layout::DtoR;
  if (text == "mid") return Layout::MidDVS;
  if (text == "rand") return Layout::RandDVS;
  throw Error(ErrorCategory::Config, "unknown layout '" + std::string(text) + "'");
}

std::string_view to_string(MixMode mode) {
  return mode == MixMode::Unconditional ? "unconditional" : "conditional";
}

std::string_view to_string(Schedule schedule) {
  switch (schedule) {
    case Schedule::ProbabilisticTSM: return "probabilistic";
    case Schedule::FixedRatio: return "fixed";
    case Schedule::DynamicLinear: return "dynamic-linear";
    case Schedule::DynamicNonLinear: return "dynamic-nonlinear";
  }
  return "?";
}

std::string_view to_string(Layout layout) {
  switch (layout) {
    case Layout::RtoD: return "r2d";
    case Layout::DtoR: return "d2r";
    case Layout::MidDVS: return "mid";
    case Layout::RandDVS: return "rand";
  }
  return "?";
}

MixSpec make_mix_spec(int timesteps, double ratio, MixMode mode, Schedule schedule, Layout layout) {
  MixSpec spec;
  spec.timesteps = timesteps;
  spec.ratio = ratio;
  spec.mode = mode;
  spec.schedule = schedule;
  spec.layout = layout;
  spec.p = solve_p(timesteps, ratio, mode);
  return spec;
}

double expected_replaced(int timesteps, double p, MixMode mode) {
  require_timesteps(timesteps);
  if (!(p > 0.0) || p > 1.0) {
    std::ostringstream msg;
    msg << "replacement probability must lie in (0,1], got " << p;
    throw Error(ErrorCategory::Domain, msg.str());
  }
  const int T = timesteps;
  if (mode == MixMode::Unconditional) {
    // Frame t is replaced iff t* <= t, i.e. one of the first t triggers fired.
    double sum = 0.0;
    for (int t = 1; t <= T; ++t) sum += one_minus_q_pow(p, t);
    return sum;
  }
  const double norm = one_minus_q_pow(p, T);
  const double q = 1.0 - p;
  double sum = 0.0;
  double q_pow = 1.0;
  for (int t = 1; t <= T; ++t) {
    sum += static_cast<double>(T + 1 - t) * q_pow * p;
    q_pow *= q;
  }
  return sum / norm;
}

double conditional_lower_bound(int timesteps) {
  require_timesteps(timesteps);
  return static_cast<double>(timesteps + 1) / (2.0 * timesteps);
}

double solve_p(int timesteps, double ratio, MixMode mode) {
  require_timesteps(timesteps);
  if (!std::isfinite(ratio) || ratio <= 0.0 || ratio > 1.0) {
    std::ostringstream msg;
    msg << "mixup ratio must lie in (0,1], got " << ratio;
    throw Error(ErrorCategory::Domain, msg.str());
  }
  if (ratio == 1.0) return 1.0;
  const double target = timesteps * ratio;
  if (mode == MixMode::Conditional) {
    const double bound = conditional_lower_bound(timesteps);
    if (ratio < bound - 1e-12) {
      std::ostringstream msg;
      msg << "mixup ratio " << ratio << " is infeasible in conditional mode for T=" << timesteps
          << ": the feasible lower bound is (T+1)/(2T) = " << bound;
      throw InfeasibleRatio(msg.str(), bound);
    }
  }
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < kSolveMaxIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double gap = expected_replaced(timesteps, mid, mode) - target;
    if (std::abs(gap) <= kSolveTolerance) return mid;
    (gap < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) > 0.0 ? 0.5 * (lo + hi) : hi;
}

std::vector<double> t_star_pmf(int timesteps, double p, MixMode mode) {
  require_timesteps(timesteps);
  if (!(p >= 0.0) || p > 1.0) {
    throw Error(ErrorCategory::Domain, "replacement probability must lie in [0,1]");
  }
  const int T = timesteps;
  std::vector<double> pmf(static_cast<std::size_t>(T) + 1, 0.0);
  if (mode == MixMode::Conditional && p == 0.0) {
    // p -> 0 limit of the truncated geometric law is uniform on {1..T}.
    std::fill(pmf.begin(), pmf.end() - 1, 1.0 / T);
    return pmf;
  }
  const double q = 1.0 - p;
  double q_pow = 1.0;
  for (int t = 1; t <= T; ++t) {
    pmf[static_cast<std::size_t>(t - 1)] = q_pow * p;
    q_pow *= q;
  }
  if (mode == MixMode::Unconditional) {
    pmf[static_cast<std::size_t>(T)] = q_pow;
  } else {
    const double norm = one_minus_q_pow(p, T);
    for (int t = 0; t < T; ++t) pmf[static_cast<std::size_t>(t)] /= norm;
  }
  return pmf;
}

int sample_t_star(const MixSpec& spec, std::uint64_t seed) {
  Engine rng(seed);
  return draw_t_star(spec, rng);
}

std::vector<std::int64_t> t_star_histogram(const MixSpec& spec, std::int64_t draws,
                                           std::uint64_t seed) {
  if (draws < 0) throw Error(ErrorCategory::Domain, "draws must be non-negative");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(spec.timesteps) + 1, 0);
  Engine rng(seed);
  for (std::int64_t i = 0; i < draws; ++i) {
    ++counts[static_cast<std::size_t>(draw_t_star(spec, rng) - 1)];
  }
  return counts;
}

MixedSample mix_sequence(const FrameSeq& static_seq, const FrameSeq& event_seq, int t_star) {
  const int T = static_seq.timesteps();
  if (t_star < 1 || t_star > T + 1) {
    throw Error(ErrorCategory::Domain, "t_star must lie in [1, T+1], got " + std::to_string(t_star));
  }
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(T), 0);
  for (int t = t_star - 1; t < T; ++t) mask[static_cast<std::size_t>(t)] = 1;
  return mix_with_mask(static_seq, event_seq, mask);
}

MixedSample mix_with_mask(const FrameSeq& static_seq, const FrameSeq& event_seq,
                          std::span<const std::uint8_t> event_mask) {
  check_pairing(static_seq, event_seq);
  const int T = static_seq.timesteps();
  if (event_mask.size() != static_cast<std::size_t>(T)) {
    throw Error(ErrorCategory::Domain, "event mask length must equal T");
  }
  MixedSample out;
  out.frames = FrameSeq::zeros(static_seq.shape, Modality::Static, static_seq.label);
  out.modality_labels.resize(static_cast<std::size_t>(T));
  int static_count = 0;
  for (int t = 0; t < T; ++t) {
    const bool from_event = event_mask[static_cast<std::size_t>(t)] != 0;
    const FrameSeq& src = from_event ? event_seq : static_seq;
    const auto in = src.frame(t);
    std::copy(in.begin(), in.end(), out.frames.frame(t).begin());
    out.frames.modality[static_cast<std::size_t>(t)] = src.modality[static_cast<std::size_t>(t)];
    out.modality_labels[static_cast<std::size_t>(t)] = from_event ? 0 : 1;
    static_count += from_event ? 0 : 1;
  }
  // For a static prefix followed by an event tail this is the first event step.
  out.t_star = static_count + 1;
  out.static_ratio_target = static_cast<double>(static_count) / T;
  return out;
}

double scheduled_ratio(Schedule schedule, double ratio, const EpochProgress& progress) {
  const auto& pr = progress;
  if (pr.max_epochs < 1 || pr.epoch < 0 || pr.epoch > pr.max_epochs || pr.batches_per_epoch < 1 ||
      pr.batch_index < 0 || pr.batch_index >= pr.batches_per_epoch) {
    std::ostringstream msg;
    msg << "epoch/batch indices out of range: batch " << pr.batch_index << "/"
        << pr.batches_per_epoch << ", epoch " << pr.epoch << "/" << pr.max_epochs;
    throw Error(ErrorCategory::Domain, msg.str());
  }
  double r = ratio;
  switch (schedule) {
    case Schedule::FixedRatio:
    case Schedule::ProbabilisticTSM:
      r = ratio;
      break;
    case Schedule::DynamicLinear:
      r = static_cast<double>(pr.epoch) / pr.max_epochs;
      break;
    case Schedule::DynamicNonLinear: {
      const double b_l = pr.batches_per_epoch;
      const double base = (pr.batch_index + pr.epoch * b_l) / (pr.max_epochs * b_l);
      r = base * base * base;
      break;
    }
  }
  return std::clamp(r, 0.0, 1.0);
}

int SwitchPlan::event_steps() const {
  return static_cast<int>(std::count(event_mask.begin(), event_mask.end(), std::uint8_t{1}));
}

SwitchPlan plan_from_event_count(Layout layout, int timesteps, int n_event, std::uint64_t seed) {
  require_timesteps(timesteps);
  const int T = timesteps;
  if (n_event < 0 || n_event > T) {
    throw Error(ErrorCategory::Domain, "event step count out of range: " + std::to_string(n_event));
  }
  SwitchPlan plan;
  plan.event_mask.assign(static_cast<std::size_t>(T), 0);
  auto mark = [&](int begin, int end) {
    for (int t = begin; t < end; ++t) plan.event_mask[static_cast<std::size_t>(t)] = 1;
  };
  switch (layout) {
    case Layout::RtoD:
      mark(T - n_event, T);
      break;
    case Layout::DtoR:
      mark(0, n_event);
      break;
    case Layout::MidDVS: {
      const int start = (T - n_event) / 2;
      mark(start, start + n_event);
      break;
    }
    case Layout::RandDVS: {
      std::vector<int> steps(static_cast<std::size_t>(T));
      std::iota(steps.begin(), steps.end(), 0);
      Engine rng(seed);
      std::shuffle(steps.begin(), steps.end(), rng);
      for (int k = 0; k < n_event; ++k) plan.event_mask[static_cast<std::size_t>(steps[static_cast<std::size_t>(k)])] = 1;
      break;
    }
  }
  plan.t_star = T + 1 - n_event;
  return plan;
}

SwitchPlan schedule_t_star(const MixSpec& spec, const EpochProgress& progress, std::uint64_t seed) {
  const int T = spec.timesteps;
  int n_event = 0;
  if (spec.schedule == Schedule::ProbabilisticTSM) {
    scheduled_ratio(spec.schedule, spec.ratio, progress);  // validates indices
    const int t_star = sample_t_star(spec, derive_seed(seed, 0));
    n_event = T + 1 - t_star;
  } else {
    const double r = scheduled_ratio(spec.schedule, spec.ratio, progress);
    const double count = T * r;
    // RandDVS rounds half up; contiguous layouts take the floor.
    n_event = spec.layout == Layout::RandDVS ? static_cast<int>(std::floor(count + 0.5))
                                             : floor_count(count);
    n_event = std::clamp(n_event, 0, T);
  }
  return plan_from_event_count(spec.layout, T, n_event, derive_seed(seed, 1));
}

MixedSample apply_plan(const FrameSeq& static_seq, const FrameSeq& event_seq, const SwitchPlan& plan) {
  return mix_with_mask(static_seq, event_seq, plan.event_mask);
}

}  // namespace tmkt::tsm
