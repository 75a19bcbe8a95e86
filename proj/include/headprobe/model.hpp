#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "headprobe/tokenizer.hpp"

namespace headprobe {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<float, 1, Eigen::Dynamic>;

struct ModelConfig {
  int n_layers = 12;
  int n_heads = 12;
  int d_model = 768;
  int d_head = 64;
  int vocab_size = 50257;
  int max_positions = 1024;
  float layernorm_epsilon = 1e-5f;

  static ModelConfig gpt2_small() { return {}; }

  int head_count() const { return n_layers * n_heads; }
  int d_mlp() const { return 4 * d_model; }

  /// Throws ConfigError unless d_model == n_heads * d_head and all sizes are positive.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// A (layer, head) location, both 0-based. Written "layer.head" as text.
struct HeadIndex {
  int layer = 0;
  int head = 0;

  auto operator<=>(const HeadIndex&) const = default;

  std::string str() const;
  /// Parses "l.h"; throws ConfigError on malformed text.
  static HeadIndex parse(std::string_view text);
};

/// Set of heads whose post-softmax attention is zeroed during a forward pass.
class HeadMask {
 public:
  HeadMask() = default;
  /// Throws DomainError on duplicate or negative indices.
  explicit HeadMask(std::vector<HeadIndex> heads);

  bool contains(HeadIndex h) const;
  bool contains(int layer, int head) const { return contains(HeadIndex{layer, head}); }
  bool empty() const { return heads_.empty(); }
  std::size_t size() const { return heads_.size(); }
  /// Sorted layer-major.
  const std::vector<HeadIndex>& heads() const { return heads_; }

  /// Throws DomainError if any index lies outside `config`.
  void check_bounds(const ModelConfig& config) const;

  bool operator==(const HeadMask&) const = default;

 private:
  std::vector<HeadIndex> heads_;
};

/// Captured attention probabilities laid out [layer][head][query][key].
class AttentionTensor {
 public:
  AttentionTensor() = default;
  AttentionTensor(int n_layers, int n_heads, int seq_len);

  float at(int layer, int head, int query, int key) const {
    return values_[index(layer, head, query, key)];
  }
  float& at(int layer, int head, int query, int key) {
    return values_[index(layer, head, query, key)];
  }
  /// seq_len x seq_len slab for one head.
  std::span<const float> slab(int layer, int head) const;
  std::span<float> slab(int layer, int head);

  int n_layers() const { return n_layers_; }
  int n_heads() const { return n_heads_; }
  int seq_len() const { return seq_len_; }

 private:
  std::size_t index(int l, int h, int q, int k) const {
    return ((static_cast<std::size_t>(l) * n_heads_ + h) * seq_len_ + q) * seq_len_ + k;
  }

  int n_layers_ = 0;
  int n_heads_ = 0;
  int seq_len_ = 0;
  std::vector<float> values_;
};

struct LayerWeights {
  RowVector ln1_weight, ln1_bias;
  RowMatrix attn_weight;  // [d_model, 3*d_model], columns q | k | v
  RowVector attn_bias;
  RowMatrix attn_proj_weight;  // [d_model, d_model]
  RowVector attn_proj_bias;
  RowVector ln2_weight, ln2_bias;
  RowMatrix mlp_fc_weight;  // [d_model, 4*d_model]
  RowVector mlp_fc_bias;
  RowMatrix mlp_proj_weight;  // [4*d_model, d_model]
  RowVector mlp_proj_bias;
};

/// GPT2 weights. Projections are stored [in, out] so activations multiply
/// from the left. The output head is tied to the token embedding.
struct ModelBundle {
  ModelConfig config;
  RowMatrix token_embedding;     // [vocab_size, d_model]
  RowMatrix position_embedding;  // [max_positions, d_model]
  std::vector<LayerWeights> layers;
  RowVector final_ln_weight, final_ln_bias;

  /// Throws LoadError on a shape mismatch and IntegrityError on NaN/Inf.
  void validate() const;
};

struct ForwardResult {
  RowMatrix logits;  // [seq_len, vocab_size]
  AttentionTensor attention;
};

/// Reads a weights container. Tensor names follow the GPT2 checkpoint
/// convention (wte.weight, h.{l}.attn.c_attn.weight, ...), see docs/formats.md.
/// Extra tensors are ignored.
ModelBundle load_model(const std::filesystem::path& weights_file, const ModelConfig& config);

/// As above, taking the configuration from the container's metadata when it
/// carries one and GPT2-small otherwise.
ModelBundle load_model(const std::filesystem::path& weights_file);

/// Reads only the configuration (metadata or GPT2-small default).
ModelConfig read_model_config(const std::filesystem::path& weights_file);

void save_model(const std::filesystem::path& weights_file, const ModelBundle& model);

/// Full forward pass. Throws DomainError on empty or overlong input, ids out
/// of range, or mask indices outside the model.
ForwardResult forward(const ModelBundle& model, std::span<const TokenId> ids,
                      const HeadMask& mask = {});

/// log2 P(target | prefix) from the last prefix position, via max-shifted
/// log-sum-exp.
double next_token_log2prob(const ModelBundle& model, std::span<const TokenId> prefix,
                           TokenId target, const HeadMask& mask = {});

/// log2 P(ids[t] | ids[0..t)) for t = 1 .. ids.size()-1.
std::vector<double> token_log2probs(const ModelBundle& model, std::span<const TokenId> ids,
                                    const HeadMask& mask = {});

/// log2-softmax of one logit row at `target`.
double log2_softmax_at(std::span<const float> logits, TokenId target);

}  // namespace headprobe
