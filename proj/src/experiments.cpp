#include "headprobe/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "headprobe/error.hpp"
#include "headprobe/parallel.hpp"

namespace headprobe {
namespace {

// Unbiased integer in [0, n) from the raw engine output; std distributions
// are implementation-defined and would make seeds non-portable.
std::uint64_t uniform_below(std::mt19937_64& engine, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = engine();
    if (r >= threshold) return r % n;
  }
}

std::vector<HeadIndex> all_heads(const ModelConfig& config) {
  std::vector<HeadIndex> heads;
  for (int l = 0; l < config.n_layers; ++l) {
    for (int h = 0; h < config.n_heads; ++h) heads.push_back({l, h});
  }
  return heads;
}

std::vector<SurprisalRecord> records_from(const std::vector<AlignedSet>& sets, std::span<const double> bits) {
  std::vector<SurprisalRecord> records(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    records[i] = {sets[i / 4].set_id, Condition::from_index(static_cast<int>(i % 4)), bits[i]};
  }
  return records;
}

// Verb surprisal of every sentence under each mask: result[m][sentence].
std::vector<std::vector<double>> surprisals_under_masks(const ModelBundle& model,
                                                        const std::vector<AlignedSet>& sets,
                                                        const std::vector<HeadMask>& masks, unsigned workers) {
  const std::size_t per_mask = sets.size() * 4;
  std::vector<std::vector<double>> out(masks.size(), std::vector<double>(per_mask));
  parallel_for(masks.size() * per_mask, workers, [&](std::size_t i) {
    const std::size_t m = i / per_mask;
    const std::size_t s = i % per_mask;
    const Condition c = Condition::from_index(static_cast<int>(s % 4));
    out[m][s] = verb_surprisal(model, sets[s / 4].at(c), masks[m]);
  });
  return out;
}

void require_sets(const std::vector<AlignedSet>& sets, const char* op) {
  if (sets.empty()) throw DomainError(std::string(op) + ": no aligned stimulus sets");
}

}  // namespace

const std::vector<HeadIndex>& published_plausibility_heads() {
  static const std::vector<HeadIndex> heads = {
      {0, 1}, {0, 5}, {0, 10}, {1, 5},  {1, 6},  {1, 11}, {3, 0}, {4, 3},  {4, 4}, {4, 10},
      {5, 10}, {5, 11}, {6, 6}, {7, 1}, {7, 9}, {8, 3},  {8, 10}, {9, 4}, {10, 7}};
  return heads;
}

double mean_surprisal(const std::vector<SurprisalRecord>& records) {
  if (records.empty()) throw DomainError("mean_surprisal: no records");
  double sum = 0.0;
  for (const auto& r : records) sum += r.verb_surprisal_bits;
  return sum / static_cast<double>(records.size());
}

BaselineReport run_baseline(const ModelBundle& model, const std::vector<AlignedSet>& sets,
                            const std::vector<HumanConditionSummary>& human, const HeadMask& mask,
                            unsigned workers, Coding coding) {
  require_sets(sets, "run_baseline");
  BaselineReport r;
  r.mask = mask;
  r.human = human;
  r.records = verb_surprisals(model, sets, mask, workers);
  r.summary = condition_summary(r.records);
  r.fit = fit_two_by_two(to_observations(r.records), coding);
  r.sensitivity = plausibility_sensitivity(r.records);
  return r;
}

std::vector<HeadIndex> rank_by_accuracy(const AccuracyTable& table, std::vector<HeadIndex> heads) {
  auto score = [&](HeadIndex h) { return (table.dependent_acc.at(h) + table.distractor_acc.at(h)) / 2.0; };
  std::stable_sort(heads.begin(), heads.end(), [&](HeadIndex a, HeadIndex b) {
    const double sa = score(a), sb = score(b);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return heads;
}

ScreenResult screen_heads(const VerbAttentionProfile& profile, double cutoff) {
  if (!(cutoff > 0.5)) throw DomainError("screen_heads: cutoff must exceed 0.5");
  ScreenResult r;
  r.cutoff = cutoff;
  r.accuracy_table = accuracy_table(profile);
  r.attention_difference = attention_difference_table(profile);
  std::vector<HeadIndex> pass;
  for (int l = 0; l < profile.n_layers; ++l) {
    for (int h = 0; h < profile.n_heads; ++h) {
      if (r.accuracy_table.dependent_acc.at(l, h) >= cutoff && r.accuracy_table.distractor_acc.at(l, h) >= cutoff) {
        pass.push_back({l, h});
      }
    }
  }
  r.selected_heads = rank_by_accuracy(r.accuracy_table, std::move(pass));
  return r;
}

ScreenResult screen_heads(const ModelBundle& model, const std::vector<AlignedSet>& sets, double cutoff,
                          unsigned workers) {
  require_sets(sets, "screen_heads");
  if (!(cutoff > 0.5)) throw DomainError("screen_heads: cutoff must exceed 0.5");
  return screen_heads(collect_verb_attention(model, sets, {}, workers), cutoff);
}

std::vector<HeadMask> sample_random_masks(const ModelConfig& config, std::size_t size, std::size_t count,
                                          std::uint64_t seed) {
  const auto universe = static_cast<std::size_t>(config.head_count());
  if (size == 0 || size > universe) {
    throw DomainError("random mask size " + std::to_string(size) + " outside [1, " + std::to_string(universe) + "]");
  }
  // C(n, k) = C(n, n - k), increasing in k up to n / 2.
  const std::size_t k = std::min(size, universe - size);
  double combinations = 1.0;
  for (std::size_t i = 0; i < k && combinations < static_cast<double>(count); ++i) {
    combinations = combinations * static_cast<double>(universe - i) / static_cast<double>(i + 1);
  }
  if (std::floor(combinations + 0.5) < static_cast<double>(count)) {
    throw DomainError("only " + std::to_string(static_cast<long long>(combinations)) + " distinct masks of size " +
                      std::to_string(size) + " exist, " + std::to_string(count) + " requested");
  }

  std::mt19937_64 engine(seed);
  std::vector<HeadIndex> pool = all_heads(config);
  std::set<std::vector<HeadIndex>> seen;
  std::vector<HeadMask> masks;
  while (masks.size() < count) {
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t j = i + uniform_below(engine, universe - i);
      std::swap(pool[i], pool[j]);
    }
    std::vector<HeadIndex> pick(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(size));
    std::sort(pick.begin(), pick.end());
    if (seen.insert(pick).second) masks.emplace_back(std::move(pick));
  }
  return masks;
}

AblationReport ablate_set(const ModelBundle& model, const std::vector<AlignedSet>& sets,
                          const std::vector<HeadIndex>& heads, std::size_t n_random, std::uint64_t seed,
                          unsigned workers, Coding coding) {
  require_sets(sets, "ablate_set");
  if (heads.empty()) throw DomainError("ablate_set: targeted head set is empty");
  if (heads.size() > static_cast<std::size_t>(model.config.head_count())) {
    throw DomainError("ablate_set: " + std::to_string(heads.size()) + " heads exceed the model's " +
                      std::to_string(model.config.head_count()));
  }
  if (n_random < 1) throw DomainError("ablate_set: n_random must be at least 1");
  const HeadMask targeted(heads);
  targeted.check_bounds(model.config);

  AblationReport r;
  r.targeted_heads = heads;
  r.n_random = n_random;
  r.seed = seed;
  r.random_masks = sample_random_masks(model.config, heads.size(), n_random, seed);

  std::vector<HeadMask> masks = {targeted};
  masks.insert(masks.end(), r.random_masks.begin(), r.random_masks.end());
  const auto bits = surprisals_under_masks(model, sets, masks, workers);

  r.targeted_records = records_from(sets, bits[0]);
  r.targeted_summary = condition_summary(r.targeted_records);
  r.targeted_fit = fit_two_by_two(to_observations(r.targeted_records), coding);
  r.targeted_sensitivity = plausibility_sensitivity(r.targeted_records);

  std::vector<double> averaged(bits[0].size(), 0.0);
  for (std::size_t m = 1; m < bits.size(); ++m) {
    for (std::size_t s = 0; s < averaged.size(); ++s) averaged[s] += bits[m][s];
    r.replicate_fits.push_back(fit_two_by_two(to_observations(records_from(sets, bits[m])), coding));
  }
  for (double& v : averaged) v /= static_cast<double>(n_random);
  r.random_records = records_from(sets, averaged);
  r.random_summary = condition_summary(r.random_records);
  r.random_fit = fit_two_by_two(to_observations(r.random_records), coding);
  return r;
}

PruneCurve gradual_prune(const ModelBundle& model, const std::vector<AlignedSet>& sets,
                         const std::vector<HeadIndex>& order, unsigned workers, Coding coding) {
  require_sets(sets, "gradual_prune");
  HeadMask(order).check_bounds(model.config);  // duplicates and bounds

  std::vector<HeadMask> masks;
  for (std::size_t k = 0; k <= order.size(); ++k) {
    masks.emplace_back(std::vector<HeadIndex>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k)));
  }
  const auto bits = surprisals_under_masks(model, sets, masks, workers);

  PruneCurve curve;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    const auto records = records_from(sets, bits[k]);
    PruneStep step;
    if (k > 0) step.pruned_head = order[k - 1];
    step.mask = masks[k];
    step.sensitivity = plausibility_sensitivity(records);
    const auto summary = condition_summary(records);
    for (int c = 0; c < 4; ++c) step.condition_means[c] = summary[c].mean;
    step.fit = fit_two_by_two(to_observations(records), coding);
    curve.steps.push_back(std::move(step));
  }
  return curve;
}

std::vector<HeadIndex> shuffled(std::vector<HeadIndex> heads, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  for (std::size_t i = heads.size(); i > 1; --i) {
    std::swap(heads[i - 1], heads[uniform_below(engine, i)]);
  }
  return heads;
}

PerplexityReport perplexity_sweep(const ModelBundle& model, const std::vector<std::vector<TokenId>>& sequences,
                                  unsigned workers) {
  if (sequences.empty()) throw DomainError("perplexity_sweep: empty corpus");
  const std::vector<HeadIndex> heads = all_heads(model.config);
  std::vector<double> values(heads.size() + 1);
  parallel_for(values.size(), workers, [&](std::size_t i) {
    const HeadMask mask = i == 0 ? HeadMask{} : HeadMask({heads[i - 1]});
    values[i] = corpus_mean_surprisal(model, sequences, mask, 1).mean_bits;
  });
  PerplexityReport r;
  r.baseline_bits = values[0];
  for (std::size_t i = 0; i < heads.size(); ++i) r.per_head_bits[heads[i]] = values[i + 1];
  return r;
}

}  // namespace headprobe
