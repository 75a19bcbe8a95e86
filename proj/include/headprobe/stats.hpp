#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "headprobe/metrics.hpp"

namespace headprobe {

/// Predictor coding for the 2x2 regression.
enum class Coding {
  kSum,        // plausible = -0.5, implausible = +0.5; main effects are mean differences
  kTreatment,  // plausible = 0, implausible = 1; main effects are simple effects at "plausible"
};

const char* to_string(Coding c);

struct Observation {
  bool dependent_plausible = true;
  bool distractor_plausible = true;
  double surprisal_bits = 0.0;
};

struct Coefficient {
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  double p = 1.0;
};

/// surprisal ~ dependent * distractor
struct RegressionFit {
  Coefficient intercept;
  Coefficient dependent;
  Coefficient distractor;
  Coefficient interaction;
  std::size_t n_observations = 0;
  std::size_t residual_df = 0;
  Coding coding = Coding::kSum;

  std::array<const Coefficient*, 4> terms() const { return {&intercept, &dependent, &distractor, &interaction}; }
  static constexpr std::array<const char*, 4> kTermNames = {"intercept", "dependent_plausibility",
                                                            "distractor_plausibility", "interaction"};
};

/// Ordinary least squares with two-tailed Student-t p values on n - 4
/// degrees of freedom. Throws StatisticsError with fewer than 5
/// observations or an empty cell.
RegressionFit fit_two_by_two(const std::vector<Observation>& observations, Coding coding = Coding::kSum);

std::vector<Observation> to_observations(const std::vector<SurprisalRecord>& records);

/// Two-tailed p for a t statistic; t = +-inf gives 0.
double two_tailed_p(double t, double df);

struct ConditionStats {
  Condition condition;
  double mean = 0.0;
  double se = 0.0;  // sample sd / sqrt(n); 0 when n == 1
  std::size_t n = 0;
};

/// Per-condition mean and standard error in canonical order. Throws
/// StatisticsError if a condition has no records.
std::array<ConditionStats, 4> condition_summary(const std::vector<SurprisalRecord>& records);

}  // namespace headprobe
