#pragma once

// Time-step mixup: replacement-probability solving, switch-point sampling,
// sequence mixing, and the fixed/dynamic/layout ablation schedules.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "tmkt/frame_seq.hpp"
#include "tmkt/rng.hpp"

namespace tmkt::tsm {

/// How the expected number of replaced frames is computed from p.
///  Unconditional: the literal sequential trigger process; t* = T+1 when no
///                 trigger fires, so E[replaced] = sum_t Pr(t* <= t).
///  Conditional:   the truncated geometric pmf restricted to t* <= T.
enum class MixMode { Unconditional, Conditional };
enum class Schedule { ProbabilisticTSM, FixedRatio, DynamicLinear, DynamicNonLinear };
enum class Layout { RtoD, DtoR, MidDVS, RandDVS };

MixMode parse_mix_mode(std::string_view text);
Schedule parse_schedule(std::string_view text);
Layout parse_layout(std::string_view text);
std::string_view to_string(MixMode mode);
std::string_view to_string(Schedule schedule);
std::string_view to_string(Layout layout);

struct MixSpec {
  int timesteps = 10;
  double ratio = 0.4;  // target fraction of replaced (event) frames
  double p = 1.0;      // per-step replacement probability, solved from ratio
  MixMode mode = MixMode::Unconditional;
  Schedule schedule = Schedule::ProbabilisticTSM;
  Layout layout = Layout::RtoD;
};

/// Builds a spec and solves p for (timesteps, ratio, mode).
MixSpec make_mix_spec(int timesteps, double ratio, MixMode mode,
                      Schedule schedule = Schedule::ProbabilisticTSM,
                      Layout layout = Layout::RtoD);

double expected_replaced(int timesteps, double p, MixMode mode);

/// Smallest ratio reachable in Conditional mode: (T+1)/(2T).
double conditional_lower_bound(int timesteps);

inline constexpr int kSolveMaxIterations = 200;
inline constexpr double kSolveTolerance = 1e-10;

/// Bisection on (0,1] for expected_replaced(T, p, mode) == T * ratio.
/// Throws InfeasibleRatio in Conditional mode below conditional_lower_bound.
double solve_p(int timesteps, double ratio, MixMode mode);

/// Law of t* over {1..T+1}; element k holds Pr(t* = k+1). Conditional mode
/// assigns zero mass to T+1.
std::vector<double> t_star_pmf(int timesteps, double p, MixMode mode);

template <class Urbg>
int draw_t_star(const MixSpec& spec, Urbg& rng) {
  const int T = spec.timesteps;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  if (spec.mode == MixMode::Unconditional) {
    for (int t = 1; t <= T; ++t) {
      if (uniform(rng) < spec.p) return t;
    }
    return T + 1;
  }
  // Inverse CDF of the truncated geometric law.
  const std::vector<double> pmf = t_star_pmf(T, spec.p, spec.mode);
  const double u = uniform(rng);
  double cdf = 0.0;
  for (int t = 1; t <= T; ++t) {
    cdf += pmf[static_cast<std::size_t>(t - 1)];
    if (u < cdf) return t;
  }
  return T;
}

int sample_t_star(const MixSpec& spec, std::uint64_t seed);

/// counts[k] = number of draws with t* = k+1, k in [0, T].
std::vector<std::int64_t> t_star_histogram(const MixSpec& spec, std::int64_t draws,
                                           std::uint64_t seed);

struct MixedSample {
  FrameSeq frames;
  // First event step for tail layouts; for other layouts T+1 minus the
  // number of event steps, so (t_star-1)/T is still the static fraction.
  int t_star = 0;
  std::vector<std::uint8_t> modality_labels;  // 1 = static frame, 0 = event frame
  double static_ratio_target = 0.0;
};

MixedSample mix_sequence(const FrameSeq& static_seq, const FrameSeq& event_seq, int t_star);

/// Mixing with an arbitrary per-step mask (1 = take the event frame).
MixedSample mix_with_mask(const FrameSeq& static_seq, const FrameSeq& event_seq,
                          std::span<const std::uint8_t> event_mask);

struct EpochProgress {
  int batch_index = 0;
  int batches_per_epoch = 1;
  int epoch = 0;  // zero-based current epoch, may equal max_epochs
  int max_epochs = 1;
};

/// Effective replaced fraction for the deterministic schedules:
/// FixedRatio -> ratio, DynamicLinear -> e_c/e_m,
/// DynamicNonLinear -> ((b_i + e_c*b_l)/(e_m*b_l))^3, clamped to [0,1].
double scheduled_ratio(Schedule schedule, double ratio, const EpochProgress& progress);

struct SwitchPlan {
  int t_star = 1;
  std::vector<std::uint8_t> event_mask;  // 1 = event frame at this step

  int event_steps() const;
};

/// Places n_event event steps according to the layout. RandDVS draws positions from seed.
SwitchPlan plan_from_event_count(Layout layout, int timesteps, int n_event, std::uint64_t seed);

SwitchPlan schedule_t_star(const MixSpec& spec, const EpochProgress& progress, std::uint64_t seed);

MixedSample apply_plan(const FrameSeq& static_seq, const FrameSeq& event_seq, const SwitchPlan& plan);

}  // namespace tmkt::tsm
