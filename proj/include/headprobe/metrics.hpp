#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "headprobe/model.hpp"
#include "headprobe/stimuli.hpp"

namespace headprobe {

struct SurprisalRecord {
  std::string set_id;
  Condition condition;
  double verb_surprisal_bits = 0.0;
};

/// -log2 P(verb | preceding tokens) under the masked model.
/// Throws DomainError when the verb is the first token.
double verb_surprisal(const ModelBundle& model, const AlignedStimulus& aligned,
                      const HeadMask& mask = {});

/// Verb surprisal for every variant of every set, in set order then
/// canonical condition order.
std::vector<SurprisalRecord> verb_surprisals(const ModelBundle& model,
                                             const std::vector<AlignedSet>& sets,
                                             const HeadMask& mask = {}, unsigned workers = 0);

enum class NounType { kDependent, kDistractor };

const char* to_string(NounType t);

/// layers x heads grid of reals.
class HeadGrid {
 public:
  HeadGrid() = default;
  HeadGrid(int n_layers, int n_heads, double fill = 0.0)
      : n_layers_(n_layers), n_heads_(n_heads), values_(static_cast<std::size_t>(n_layers) * n_heads, fill) {}

  double& at(int layer, int head) { return values_[static_cast<std::size_t>(layer) * n_heads_ + head]; }
  double at(int layer, int head) const { return values_[static_cast<std::size_t>(layer) * n_heads_ + head]; }
  double at(HeadIndex h) const { return at(h.layer, h.head); }
  int n_layers() const { return n_layers_; }
  int n_heads() const { return n_heads_; }

  bool operator==(const HeadGrid&) const = default;

 private:
  int n_layers_ = 0;
  int n_heads_ = 0;
  std::vector<double> values_;
};

/// Attention the verb's query row pays to the two noun keys, per head, for
/// every variant of every aligned set. Gathered once and shared by the
/// accuracy and attention-difference tables.
struct VerbAttentionProfile {
  struct Entry {
    std::vector<float> to_dependent;  // n_layers * n_heads, layer-major
    std::vector<float> to_distractor;
  };
  int n_layers = 0;
  int n_heads = 0;
  std::vector<std::array<Entry, 4>> sets;  // [set][Condition::index()]

  float attention(std::size_t set, Condition c, NounType noun, int layer, int head) const;
};

VerbAttentionProfile collect_verb_attention(const ModelBundle& model,
                                            const std::vector<AlignedSet>& sets,
                                            const HeadMask& mask = {}, unsigned workers = 0);

/// The matched pairs (plausible member first) compared for a noun type: two
/// per set, differing only in that noun's plausibility.
std::array<std::pair<Condition, Condition>, 2> comparison_pairs(NounType noun);

struct AccuracyTable {
  HeadGrid dependent_acc;
  HeadGrid distractor_acc;
  int k_dependent = 0;
  int k_distractor = 0;

  const HeadGrid& of(NounType t) const { return t == NounType::kDependent ? dependent_acc : distractor_acc; }
};

struct AttentionDifferenceTable {
  HeadGrid dependent_diff;
  HeadGrid distractor_diff;

  const HeadGrid& of(NounType t) const { return t == NounType::kDependent ? dependent_diff : distractor_diff; }
};

/// Fraction of comparisons where the plausible noun strictly receives more
/// attention from the verb than the implausible one; ties count as losses.
/// Throws DomainError if the profile holds no sets.
HeadGrid head_accuracy(const VerbAttentionProfile& profile, NounType noun);
HeadGrid head_accuracy(const ModelBundle& model, const std::vector<AlignedSet>& sets, NounType noun,
                       unsigned workers = 0);
AccuracyTable accuracy_table(const VerbAttentionProfile& profile);

/// Sum over comparisons of Attn(plausible) - Attn(implausible).
HeadGrid attention_difference(const VerbAttentionProfile& profile, NounType noun);
HeadGrid attention_difference(const ModelBundle& model, const std::vector<AlignedSet>& sets,
                              NounType noun, unsigned workers = 0);
AttentionDifferenceTable attention_difference_table(const VerbAttentionProfile& profile);

struct SensitivityPair {
  double dependent_sensitivity_bits = 0.0;
  double distractor_sensitivity_bits = 0.0;
};

/// Per set: dependent = mean{(c),(d)} - mean{(a),(b)} and
/// distractor = mean{(b),(d)} - mean{(a),(c)}; then averaged over sets in
/// order of first appearance. Throws DomainError if a set lacks a condition
/// or repeats one, or if there are no records.
SensitivityPair plausibility_sensitivity(const std::vector<SurprisalRecord>& records);

enum class CorpusMode {
  kPerSentence,  // context resets at every sentence
  kStreaming,    // sentences joined by single spaces into one stream
};

/// Per-sentence token ids (kPerSentence) or one stream (kStreaming).
std::vector<std::vector<TokenId>> tokenize_corpus(const Tokenizer& tokenizer,
                                                  const std::vector<std::string>& sentences,
                                                  CorpusMode mode);

struct CorpusSurprisal {
  double mean_bits = 0.0;
  std::size_t token_count = 0;
  /// Classical perplexity, 2^mean_bits.
  double perplexity() const;
};

/// Mean surprisal in bits over every token that has a preceding context
/// within its sequence. Sequences longer than the model context are scored
/// with half-overlapping windows. Throws DomainError on an empty corpus or a
/// sequence shorter than 2 tokens.
CorpusSurprisal corpus_mean_surprisal(const ModelBundle& model,
                                      const std::vector<std::vector<TokenId>>& sequences,
                                      const HeadMask& mask = {}, unsigned workers = 0);

struct PerplexityReport {
  double baseline_bits = 0.0;
  std::map<HeadIndex, double> per_head_bits;
};

}  // namespace headprobe
