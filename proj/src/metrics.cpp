#include "headprobe/metrics.hpp"

#include <cmath>

#include "headprobe/error.hpp"
#include "headprobe/parallel.hpp"

namespace headprobe {

double verb_surprisal(const ModelBundle& model, const AlignedStimulus& aligned, const HeadMask& mask) {
  if (aligned.verb_tok < 1 || static_cast<std::size_t>(aligned.verb_tok) >= aligned.ids.size()) {
    throw DomainError("verb_surprisal: verb position " + std::to_string(aligned.verb_tok) +
                      " has no preceding context");
  }
  const std::span<const TokenId> prefix(aligned.ids.data(), static_cast<std::size_t>(aligned.verb_tok));
  return -next_token_log2prob(model, prefix, aligned.ids[aligned.verb_tok], mask);
}

std::vector<SurprisalRecord> verb_surprisals(const ModelBundle& model, const std::vector<AlignedSet>& sets,
                                             const HeadMask& mask, unsigned workers) {
  std::vector<SurprisalRecord> records(sets.size() * 4);
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const AlignedSet& set = sets[i / 4];
    const Condition c = Condition::from_index(static_cast<int>(i % 4));
    records[i] = {set.set_id, c, verb_surprisal(model, set.at(c), mask)};
  });
  return records;
}

const char* to_string(NounType t) { return t == NounType::kDependent ? "dependent" : "distractor"; }

float VerbAttentionProfile::attention(std::size_t set, Condition c, NounType noun, int layer, int head) const {
  const Entry& e = sets.at(set)[c.index()];
  const auto& v = noun == NounType::kDependent ? e.to_dependent : e.to_distractor;
  return v[static_cast<std::size_t>(layer) * n_heads + head];
}

VerbAttentionProfile collect_verb_attention(const ModelBundle& model, const std::vector<AlignedSet>& sets,
                                            const HeadMask& mask, unsigned workers) {
  VerbAttentionProfile profile;
  profile.n_layers = model.config.n_layers;
  profile.n_heads = model.config.n_heads;
  profile.sets.resize(sets.size());
  parallel_for(sets.size() * 4, workers, [&](std::size_t i) {
    const Condition c = Condition::from_index(static_cast<int>(i % 4));
    const AlignedStimulus& a = sets[i / 4].at(c);
    // Positions after the verb cannot influence its row.
    const std::span<const TokenId> ids(a.ids.data(), static_cast<std::size_t>(a.verb_tok) + 1);
    const ForwardResult fr = forward(model, ids, mask);
    auto& entry = profile.sets[i / 4][c.index()];
    for (int l = 0; l < profile.n_layers; ++l) {
      for (int h = 0; h < profile.n_heads; ++h) {
        entry.to_dependent.push_back(fr.attention.at(l, h, a.verb_tok, a.dependent_tok));
        entry.to_distractor.push_back(fr.attention.at(l, h, a.verb_tok, a.distractor_tok));
      }
    }
  });
  return profile;
}

std::array<std::pair<Condition, Condition>, 2> comparison_pairs(NounType noun) {
  const Condition plpl{true, true}, plimpl{true, false}, implpl{false, true}, implimpl{false, false};
  if (noun == NounType::kDependent) return {{{plpl, implpl}, {plimpl, implimpl}}};
  return {{{plpl, plimpl}, {implpl, implimpl}}};
}

HeadGrid head_accuracy(const VerbAttentionProfile& profile, NounType noun) {
  if (profile.sets.empty()) throw DomainError("head_accuracy: no aligned sets");
  HeadGrid wins(profile.n_layers, profile.n_heads);
  const auto pairs = comparison_pairs(noun);
  for (std::size_t s = 0; s < profile.sets.size(); ++s) {
    for (const auto& [pl, impl] : pairs) {
      for (int l = 0; l < profile.n_layers; ++l) {
        for (int h = 0; h < profile.n_heads; ++h) {
          if (profile.attention(s, pl, noun, l, h) > profile.attention(s, impl, noun, l, h)) {
            wins.at(l, h) += 1.0;
          }
        }
      }
    }
  }
  const double k = static_cast<double>(profile.sets.size() * pairs.size());
  for (int l = 0; l < profile.n_layers; ++l) {
    for (int h = 0; h < profile.n_heads; ++h) wins.at(l, h) /= k;
  }
  return wins;
}

HeadGrid head_accuracy(const ModelBundle& model, const std::vector<AlignedSet>& sets, NounType noun,
                       unsigned workers) {
  return head_accuracy(collect_verb_attention(model, sets, {}, workers), noun);
}

AccuracyTable accuracy_table(const VerbAttentionProfile& profile) {
  AccuracyTable t;
  t.dependent_acc = head_accuracy(profile, NounType::kDependent);
  t.distractor_acc = head_accuracy(profile, NounType::kDistractor);
  t.k_dependent = static_cast<int>(profile.sets.size() * 2);
  t.k_distractor = t.k_dependent;
  return t;
}

HeadGrid attention_difference(const VerbAttentionProfile& profile, NounType noun) {
  if (profile.sets.empty()) throw DomainError("attention_difference: no aligned sets");
  HeadGrid diff(profile.n_layers, profile.n_heads);
  for (std::size_t s = 0; s < profile.sets.size(); ++s) {
    for (const auto& [pl, impl] : comparison_pairs(noun)) {
      for (int l = 0; l < profile.n_layers; ++l) {
        for (int h = 0; h < profile.n_heads; ++h) {
          diff.at(l, h) += static_cast<double>(profile.attention(s, pl, noun, l, h)) -
                           static_cast<double>(profile.attention(s, impl, noun, l, h));
        }
      }
    }
  }
  return diff;
}

HeadGrid attention_difference(const ModelBundle& model, const std::vector<AlignedSet>& sets,
                              NounType noun, unsigned workers) {
  return attention_difference(collect_verb_attention(model, sets, {}, workers), noun);
}

AttentionDifferenceTable attention_difference_table(const VerbAttentionProfile& profile) {
  return {attention_difference(profile, NounType::kDependent),
          attention_difference(profile, NounType::kDistractor)};
}

SensitivityPair plausibility_sensitivity(const std::vector<SurprisalRecord>& records) {
  if (records.empty()) throw DomainError("plausibility_sensitivity: no records");
  std::vector<std::string> order;
  std::map<std::string, std::array<std::optional<double>, 4>> by_set;
  for (const SurprisalRecord& r : records) {
    auto [it, inserted] = by_set.try_emplace(r.set_id);
    if (inserted) order.push_back(r.set_id);
    auto& slot = it->second[r.condition.index()];
    if (slot) {
      throw DomainError("plausibility_sensitivity: set " + r.set_id + " repeats condition " +
                        r.condition.label());
    }
    slot = r.verb_surprisal_bits;
  }
  SensitivityPair out;
  for (const std::string& id : order) {
    const auto& s = by_set[id];
    for (int c = 0; c < 4; ++c) {
      if (!s[c]) {
        throw DomainError("plausibility_sensitivity: set " + id + " lacks condition " +
                          Condition::from_index(c).label());
      }
    }
    const double a = *s[0], b = *s[1], c = *s[2], d = *s[3];
    out.dependent_sensitivity_bits += (c + d) / 2.0 - (a + b) / 2.0;
    out.distractor_sensitivity_bits += (b + d) / 2.0 - (a + c) / 2.0;
  }
  const auto n = static_cast<double>(order.size());
  out.dependent_sensitivity_bits /= n;
  out.distractor_sensitivity_bits /= n;
  return out;
}

std::vector<std::vector<TokenId>> tokenize_corpus(const Tokenizer& tokenizer,
                                                  const std::vector<std::string>& sentences,
                                                  CorpusMode mode) {
  std::vector<std::vector<TokenId>> out;
  if (mode == CorpusMode::kPerSentence) {
    for (const std::string& s : sentences) out.push_back(tokenizer.encode(s));
    return out;
  }
  std::string stream;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i > 0) stream.push_back(' ');
    stream += sentences[i];
  }
  out.push_back(tokenizer.encode(stream));
  return out;
}

double CorpusSurprisal::perplexity() const { return std::exp2(mean_bits); }

namespace {

// Sum of surprisals (bits) of tokens 1..n-1 of one sequence.
double sequence_surprisal_sum(const ModelBundle& model, std::span<const TokenId> ids, const HeadMask& mask) {
  const std::size_t window = static_cast<std::size_t>(model.config.max_positions);
  double sum = 0.0;
  if (ids.size() <= window) {
    for (double lp : token_log2probs(model, ids, mask)) sum -= lp;
    return sum;
  }
  const std::size_t stride = std::max<std::size_t>(1, window / 2);
  std::size_t start = 0;
  std::size_t scored_to = 1;  // next token index needing a score
  while (scored_to < ids.size()) {
    const std::size_t end = std::min(start + window, ids.size());
    const auto lps = token_log2probs(model, ids.subspan(start, end - start), mask);
    for (std::size_t t = scored_to; t < end; ++t) sum -= lps[t - start - 1];
    scored_to = end;
    start = end - stride;
  }
  return sum;
}

}  // namespace

CorpusSurprisal corpus_mean_surprisal(const ModelBundle& model,
                                      const std::vector<std::vector<TokenId>>& sequences,
                                      const HeadMask& mask, unsigned workers) {
  if (sequences.empty()) throw DomainError("corpus_mean_surprisal: empty corpus");
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].size() < 2) {
      throw DomainError("corpus_mean_surprisal: sequence " + std::to_string(i) +
                        " has fewer than 2 tokens");
    }
  }
  std::vector<double> sums(sequences.size());
  parallel_for(sequences.size(), workers,
               [&](std::size_t i) { sums[i] = sequence_surprisal_sum(model, sequences[i], mask); });
  CorpusSurprisal out;
  double total = 0.0;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    total += sums[i];
    out.token_count += sequences[i].size() - 1;
  }
  out.mean_bits = total / static_cast<double>(out.token_count);
  return out;
}

}  // namespace headprobe
