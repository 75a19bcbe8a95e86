#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "headprobe/metrics.hpp"
#include "headprobe/stats.hpp"
#include "headprobe/stimuli.hpp"

namespace headprobe {

/// Reference set of plausibility-detecting heads (19 pairs).
const std::vector<HeadIndex>& published_plausibility_heads();

// ---------------------------------------------------------------------------
// Baseline

struct BaselineReport {
  std::vector<SurprisalRecord> records;
  std::array<ConditionStats, 4> summary;
  RegressionFit fit;
  SensitivityPair sensitivity;
  std::vector<HumanConditionSummary> human;  // reference only, may be empty
  HeadMask mask;
};

/// Verb surprisal for every aligned sentence, per-condition summary, the 2x2
/// regression and both sensitivities, under `mask`.
BaselineReport run_baseline(const ModelBundle& model, const std::vector<AlignedSet>& sets,
                            const std::vector<HumanConditionSummary>& human = {},
                            const HeadMask& mask = {}, unsigned workers = 0,
                            Coding coding = Coding::kSum);

/// Mean surprisal across all records (all conditions pooled).
double mean_surprisal(const std::vector<SurprisalRecord>& records);

// ---------------------------------------------------------------------------
// Screening

struct ScreenResult {
  std::vector<HeadIndex> selected_heads;  // ranked
  double cutoff = 0.70;
  AccuracyTable accuracy_table;
  AttentionDifferenceTable attention_difference;
};

/// Orders heads by mean of dependent and distractor accuracy, descending;
/// ties broken layer-major then head-major.
std::vector<HeadIndex> rank_by_accuracy(const AccuracyTable& table, std::vector<HeadIndex> heads);

/// Keeps heads whose dependent AND distractor accuracies are >= cutoff.
/// Throws DomainError unless cutoff > 0.5.
ScreenResult screen_heads(const VerbAttentionProfile& profile, double cutoff = 0.70);
ScreenResult screen_heads(const ModelBundle& model, const std::vector<AlignedSet>& sets,
                          double cutoff = 0.70, unsigned workers = 0);

// ---------------------------------------------------------------------------
// Ablation

/// `count` pairwise-distinct masks of `size` heads each, drawn uniformly from
/// all heads of `config`. Deterministic in `seed`. Throws DomainError if
/// fewer than `count` distinct masks exist.
std::vector<HeadMask> sample_random_masks(const ModelConfig& config, std::size_t size, std::size_t count,
                                          std::uint64_t seed);

struct AblationReport {
  std::vector<HeadIndex> targeted_heads;
  std::vector<SurprisalRecord> targeted_records;
  std::array<ConditionStats, 4> targeted_summary;
  RegressionFit targeted_fit;
  SensitivityPair targeted_sensitivity;

  std::vector<HeadMask> random_masks;
  /// Per-sentence surprisal averaged over replicates.
  std::vector<SurprisalRecord> random_records;
  std::array<ConditionStats, 4> random_summary;
  RegressionFit random_fit;
  std::vector<RegressionFit> replicate_fits;

  std::size_t n_random = 0;
  std::uint64_t seed = 0;
};

/// Throws DomainError if `heads` is empty, holds duplicates, or is larger
/// than the model's head count, or if n_random < 1.
AblationReport ablate_set(const ModelBundle& model, const std::vector<AlignedSet>& sets,
                          const std::vector<HeadIndex>& heads, std::size_t n_random, std::uint64_t seed,
                          unsigned workers = 0, Coding coding = Coding::kSum);

// ---------------------------------------------------------------------------
// Gradual pruning

struct PruneStep {
  std::optional<HeadIndex> pruned_head;  // empty for step 0
  HeadMask mask;                         // cumulative
  SensitivityPair sensitivity;
  std::array<double, 4> condition_means{};
  RegressionFit fit;
};

struct PruneCurve {
  std::vector<PruneStep> steps;  // steps[k].mask has k heads
};

/// Throws DomainError on duplicate or out-of-range heads.
PruneCurve gradual_prune(const ModelBundle& model, const std::vector<AlignedSet>& sets,
                         const std::vector<HeadIndex>& order, unsigned workers = 0,
                         Coding coding = Coding::kSum);

/// Deterministic shuffle of `heads`.
std::vector<HeadIndex> shuffled(std::vector<HeadIndex> heads, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Perplexity sweep

/// Baseline plus every single-head removal.
PerplexityReport perplexity_sweep(const ModelBundle& model,
                                  const std::vector<std::vector<TokenId>>& sequences,
                                  unsigned workers = 0);

}  // namespace headprobe
