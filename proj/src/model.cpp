#include "headprobe/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "headprobe/error.hpp"
#include "headprobe/tensor_file.hpp"

namespace headprobe {

void ModelConfig::validate() const {
  if (n_layers <= 0 || n_heads <= 0 || d_model <= 0 || d_head <= 0 || vocab_size <= 0 ||
      max_positions <= 0 || !(layernorm_epsilon > 0.0f)) {
    throw ConfigError("model config: all sizes and epsilon must be positive");
  }
  if (d_model != n_heads * d_head) {
    throw ConfigError("model config: d_model (" + std::to_string(d_model) +
                      ") != n_heads * d_head (" + std::to_string(n_heads * d_head) + ")");
  }
}

std::string HeadIndex::str() const { return std::to_string(layer) + "." + std::to_string(head); }

HeadIndex HeadIndex::parse(std::string_view text) {
  const auto dot = text.find('.');
  HeadIndex h;
  auto parse_int = [&](std::string_view part, int& out) {
    if (part.empty()) return false;
    const auto* end = part.data() + part.size();
    auto [ptr, ec] = std::from_chars(part.data(), end, out);
    return ec == std::errc{} && ptr == end && out >= 0;
  };
  if (dot == std::string_view::npos || !parse_int(text.substr(0, dot), h.layer) ||
      !parse_int(text.substr(dot + 1), h.head)) {
    throw ConfigError("malformed head \"" + std::string(text) + "\", expected layer.head");
  }
  return h;
}

HeadMask::HeadMask(std::vector<HeadIndex> heads) : heads_(std::move(heads)) {
  std::sort(heads_.begin(), heads_.end());
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    if (heads_[i].layer < 0 || heads_[i].head < 0) {
      throw DomainError("head mask: negative index " + heads_[i].str());
    }
    if (i > 0 && heads_[i] == heads_[i - 1]) {
      throw DomainError("head mask: duplicate head " + heads_[i].str());
    }
  }
}

bool HeadMask::contains(HeadIndex h) const {
  return std::binary_search(heads_.begin(), heads_.end(), h);
}

void HeadMask::check_bounds(const ModelConfig& config) const {
  for (const HeadIndex& h : heads_) {
    if (h.layer >= config.n_layers || h.head >= config.n_heads) {
      throw DomainError("head " + h.str() + " outside a model with " +
                        std::to_string(config.n_layers) + " layers x " +
                        std::to_string(config.n_heads) + " heads");
    }
  }
}

AttentionTensor::AttentionTensor(int n_layers, int n_heads, int seq_len)
    : n_layers_(n_layers),
      n_heads_(n_heads),
      seq_len_(seq_len),
      values_(static_cast<std::size_t>(n_layers) * n_heads * seq_len * seq_len, 0.0f) {}

std::span<const float> AttentionTensor::slab(int layer, int head) const {
  const std::size_t n = static_cast<std::size_t>(seq_len_) * seq_len_;
  return {values_.data() + index(layer, head, 0, 0), n};
}

std::span<float> AttentionTensor::slab(int layer, int head) {
  const std::size_t n = static_cast<std::size_t>(seq_len_) * seq_len_;
  return {values_.data() + index(layer, head, 0, 0), n};
}

namespace {

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
  return out + "]";
}

void check_finite(const float* data, std::size_t n, const std::string& name) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(data[i])) {
      throw IntegrityError("tensor " + name + " contains a non-finite value at element " +
                           std::to_string(i));
    }
  }
}

void check_shape(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                 std::vector<std::size_t> expected) {
  std::vector<std::size_t> got;
  if (expected.size() == 1) {
    got = {static_cast<std::size_t>(cols)};
    if (rows != 1) got.insert(got.begin(), static_cast<std::size_t>(rows));
  } else {
    got = {static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)};
  }
  if (got != expected) {
    throw LoadError("tensor " + name + " has shape " + shape_str(got) + ", expected " +
                    shape_str(expected));
  }
}

// Visits every parameter with its canonical name and expected shape.
template <typename Bundle, typename Fn>
void for_each_parameter(Bundle& m, Fn&& fn) {
  const auto& c = m.config;
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto v = static_cast<std::size_t>(c.vocab_size);
  const auto p = static_cast<std::size_t>(c.max_positions);
  fn("wte.weight", m.token_embedding, std::vector<std::size_t>{v, d});
  fn("wpe.weight", m.position_embedding, std::vector<std::size_t>{p, d});
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& L = m.layers[l];
    const std::string pre = "h." + std::to_string(l) + ".";
    fn(pre + "ln_1.weight", L.ln1_weight, std::vector<std::size_t>{d});
    fn(pre + "ln_1.bias", L.ln1_bias, std::vector<std::size_t>{d});
    fn(pre + "attn.c_attn.weight", L.attn_weight, std::vector<std::size_t>{d, 3 * d});
    fn(pre + "attn.c_attn.bias", L.attn_bias, std::vector<std::size_t>{3 * d});
    fn(pre + "attn.c_proj.weight", L.attn_proj_weight, std::vector<std::size_t>{d, d});
    fn(pre + "attn.c_proj.bias", L.attn_proj_bias, std::vector<std::size_t>{d});
    fn(pre + "ln_2.weight", L.ln2_weight, std::vector<std::size_t>{d});
    fn(pre + "ln_2.bias", L.ln2_bias, std::vector<std::size_t>{d});
    fn(pre + "mlp.c_fc.weight", L.mlp_fc_weight, std::vector<std::size_t>{d, 4 * d});
    fn(pre + "mlp.c_fc.bias", L.mlp_fc_bias, std::vector<std::size_t>{4 * d});
    fn(pre + "mlp.c_proj.weight", L.mlp_proj_weight, std::vector<std::size_t>{4 * d, d});
    fn(pre + "mlp.c_proj.bias", L.mlp_proj_bias, std::vector<std::size_t>{d});
  }
  fn("ln_f.weight", m.final_ln_weight, std::vector<std::size_t>{d});
  fn("ln_f.bias", m.final_ln_bias, std::vector<std::size_t>{d});
}

void layer_norm(const RowMatrix& x, const RowVector& weight, const RowVector& bias, float eps,
                RowMatrix& out) {
  out.resize(x.rows(), x.cols());
  const float inv_n = 1.0f / static_cast<float>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const float mean = x.row(r).sum() * inv_n;
    const float var = (x.row(r).array() - mean).square().sum() * inv_n;
    const float inv_std = 1.0f / std::sqrt(var + eps);
    out.row(r) = ((x.row(r).array() - mean) * inv_std * weight.array() + bias.array()).matrix();
  }
}

float gelu(float x) {
  constexpr float kSqrt2OverPi = 0.7978845608028654f;
  return 0.5f * x * (1.0f + std::tanh(kSqrt2OverPi * (x + 0.044715f * x * x * x)));
}

void check_inputs(const ModelBundle& model, std::span<const TokenId> ids, const HeadMask& mask) {
  if (ids.empty()) throw DomainError("forward: empty input");
  if (ids.size() > static_cast<std::size_t>(model.config.max_positions)) {
    throw DomainError("forward: " + std::to_string(ids.size()) + " tokens exceed max_positions " +
                      std::to_string(model.config.max_positions));
  }
  for (TokenId id : ids) {
    if (id < 0 || id >= model.config.vocab_size) {
      throw DomainError("forward: token id " + std::to_string(id) + " out of range");
    }
  }
  mask.check_bounds(model.config);
}

// Runs embeddings and all blocks; returns final-layernormed hidden states.
RowMatrix run_blocks(const ModelBundle& model, std::span<const TokenId> ids, const HeadMask& mask,
                     AttentionTensor* capture) {
  const ModelConfig& c = model.config;
  const auto T = static_cast<Eigen::Index>(ids.size());
  const Eigen::Index d = c.d_model;
  const Eigen::Index dh = c.d_head;
  const float scale = 1.0f / std::sqrt(static_cast<float>(c.d_head));

  RowMatrix x(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    x.row(t) = model.token_embedding.row(ids[t]) + model.position_embedding.row(t);
  }

  RowMatrix normed, qkv, merged(T, d), scores(T, T), hidden;
  for (int l = 0; l < c.n_layers; ++l) {
    const LayerWeights& L = model.layers[l];

    layer_norm(x, L.ln1_weight, L.ln1_bias, c.layernorm_epsilon, normed);
    qkv.noalias() = normed * L.attn_weight;
    qkv.rowwise() += L.attn_bias;

    for (int h = 0; h < c.n_heads; ++h) {
      const auto q = qkv.block(0, h * dh, T, dh);
      const auto k = qkv.block(0, d + h * dh, T, dh);
      const auto v = qkv.block(0, 2 * d + h * dh, T, dh);
      if (mask.contains(l, h)) {
        scores.setZero();
      } else {
        scores.noalias() = q * k.transpose();
        for (Eigen::Index i = 0; i < T; ++i) {
          float* row = scores.row(i).data();
          float mx = -std::numeric_limits<float>::infinity();
          for (Eigen::Index j = 0; j <= i; ++j) {
            row[j] *= scale;
            mx = std::max(mx, row[j]);
          }
          float sum = 0.0f;
          for (Eigen::Index j = 0; j <= i; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
          }
          const float inv = 1.0f / sum;
          for (Eigen::Index j = 0; j <= i; ++j) row[j] *= inv;
          for (Eigen::Index j = i + 1; j < T; ++j) row[j] = 0.0f;
        }
      }
      if (capture != nullptr) {
        std::copy_n(scores.data(), T * T, capture->slab(l, h).data());
      }
      merged.block(0, h * dh, T, dh).noalias() = scores * v;
    }
    x.noalias() += merged * L.attn_proj_weight;
    x.rowwise() += L.attn_proj_bias;

    layer_norm(x, L.ln2_weight, L.ln2_bias, c.layernorm_epsilon, normed);
    hidden.noalias() = normed * L.mlp_fc_weight;
    hidden.rowwise() += L.mlp_fc_bias;
    hidden = hidden.unaryExpr(&gelu);
    x.noalias() += hidden * L.mlp_proj_weight;
    x.rowwise() += L.mlp_proj_bias;
  }

  layer_norm(x, model.final_ln_weight, model.final_ln_bias, c.layernorm_epsilon, normed);
  return normed;
}

bool is_projection(const std::string& name) {
  return name.find(".attn.c_") != std::string::npos || name.find(".mlp.c_") != std::string::npos;
}

ModelConfig config_from_metadata(const std::map<std::string, std::string>& meta) {
  ModelConfig c = ModelConfig::gpt2_small();
  if (meta.count("n_layer") == 0) return c;
  try {
    c.n_layers = std::stoi(meta.at("n_layer"));
    c.n_heads = std::stoi(meta.at("n_head"));
    c.d_model = std::stoi(meta.at("n_embd"));
    c.vocab_size = std::stoi(meta.at("vocab_size"));
    c.max_positions = std::stoi(meta.at("n_positions"));
    if (meta.count("layer_norm_epsilon")) c.layernorm_epsilon = std::stof(meta.at("layer_norm_epsilon"));
  } catch (const std::exception& e) {
    throw LoadError(std::string("weights metadata: malformed model configuration: ") + e.what());
  }
  if (c.n_heads <= 0 || c.d_model % c.n_heads != 0) {
    throw LoadError("weights metadata: n_embd is not divisible by n_head");
  }
  c.d_head = c.d_model / c.n_heads;
  return c;
}

}  // namespace

void ModelBundle::validate() const {
  config.validate();
  if (layers.size() != static_cast<std::size_t>(config.n_layers)) {
    throw LoadError("model has " + std::to_string(layers.size()) + " layers, expected " +
                    std::to_string(config.n_layers));
  }
  for_each_parameter(*this, [](const std::string& name, const auto& t, std::vector<std::size_t> shape) {
    check_shape(name, t.rows(), t.cols(), std::move(shape));
    check_finite(t.data(), static_cast<std::size_t>(t.size()), name);
  });
}

ModelConfig read_model_config(const std::filesystem::path& weights_file) {
  TensorFileReader reader(weights_file);
  return config_from_metadata(reader.metadata());
}

ModelBundle load_model(const std::filesystem::path& weights_file) {
  TensorFileReader reader(weights_file);
  return load_model(weights_file, config_from_metadata(reader.metadata()));
}

ModelBundle load_model(const std::filesystem::path& weights_file, const ModelConfig& config) {
  config.validate();
  TensorFileReader reader(weights_file);
  const std::string prefix =
      !reader.contains("wte.weight") && reader.contains("transformer.wte.weight") ? "transformer."
                                                                                  : "";
  // Projections are stored [in, out] unless the container says otherwise.
  bool out_in = false;
  if (auto it = reader.metadata().find("projection_layout"); it != reader.metadata().end()) {
    if (it->second == "out_in") {
      out_in = true;
    } else if (it->second != "in_out") {
      throw LoadError("weights metadata: unknown projection_layout \"" + it->second + "\"");
    }
  }
  ModelBundle m;
  m.config = config;
  m.layers.resize(config.n_layers);
  for_each_parameter(m, [&](const std::string& name, auto& t, std::vector<std::size_t> shape) {
    const std::string full = prefix + name;
    const bool transposed = out_in && shape.size() == 2 && is_projection(name);
    if (transposed) std::swap(shape[0], shape[1]);
    const TensorEntry& e = reader.entry(full);
    if (e.shape != shape) {
      throw LoadError("tensor " + full + " has shape " + shape_str(e.shape) + ", expected " +
                      shape_str(shape));
    }
    std::vector<float> values = reader.read_f32(full);
    check_finite(values.data(), values.size(), full);
    const auto rows = shape.size() == 1 ? 1 : static_cast<Eigen::Index>(shape[0]);
    const auto cols = static_cast<Eigen::Index>(shape.back());
    t.resize(rows, cols);
    std::copy(values.begin(), values.end(), t.data());
    if (transposed) t.transposeInPlace();
  });
  return m;
}

void save_model(const std::filesystem::path& weights_file, const ModelBundle& model) {
  model.validate();
  std::vector<NamedTensor> tensors;
  for_each_parameter(model, [&](const std::string& name, const auto& t, std::vector<std::size_t> shape) {
    tensors.push_back(NamedTensor{name, std::move(shape), t.data()});
  });
  const ModelConfig& c = model.config;
  char eps[32];
  std::snprintf(eps, sizeof eps, "%.9g", static_cast<double>(c.layernorm_epsilon));
  write_tensor_file(weights_file, tensors,
                    {{"format", "headprobe-gpt2"},
                     {"projection_layout", "in_out"},
                     {"n_layer", std::to_string(c.n_layers)},
                     {"n_head", std::to_string(c.n_heads)},
                     {"n_embd", std::to_string(c.d_model)},
                     {"vocab_size", std::to_string(c.vocab_size)},
                     {"n_positions", std::to_string(c.max_positions)},
                     {"layer_norm_epsilon", eps}});
}

ForwardResult forward(const ModelBundle& model, std::span<const TokenId> ids, const HeadMask& mask) {
  check_inputs(model, ids, mask);
  ForwardResult result;
  result.attention =
      AttentionTensor(model.config.n_layers, model.config.n_heads, static_cast<int>(ids.size()));
  const RowMatrix hidden = run_blocks(model, ids, mask, &result.attention);
  result.logits.noalias() = hidden * model.token_embedding.transpose();
  return result;
}

double log2_softmax_at(std::span<const float> logits, TokenId target) {
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw DomainError("target id " + std::to_string(target) + " out of range");
  }
  const float mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (float v : logits) sum += std::exp(static_cast<double>(v - mx));
  const double log_prob = static_cast<double>(logits[target] - mx) - std::log(sum);
  return log_prob / std::log(2.0);
}

double next_token_log2prob(const ModelBundle& model, std::span<const TokenId> prefix,
                           TokenId target, const HeadMask& mask) {
  check_inputs(model, prefix, mask);
  if (target < 0 || target >= model.config.vocab_size) {
    throw DomainError("target id " + std::to_string(target) + " out of range");
  }
  const RowMatrix hidden = run_blocks(model, prefix, mask, nullptr);
  const RowVector last = hidden.row(hidden.rows() - 1);
  const RowVector logits = last * model.token_embedding.transpose();
  return log2_softmax_at({logits.data(), static_cast<std::size_t>(logits.size())}, target);
}

std::vector<double> token_log2probs(const ModelBundle& model, std::span<const TokenId> ids,
                                    const HeadMask& mask) {
  check_inputs(model, ids, mask);
  const RowMatrix hidden = run_blocks(model, ids, mask, nullptr);
  std::vector<double> out;
  out.reserve(ids.size() - 1);
  RowVector logits;
  for (std::size_t t = 1; t < ids.size(); ++t) {
    logits.noalias() = hidden.row(static_cast<Eigen::Index>(t - 1)) * model.token_embedding.transpose();
    out.push_back(log2_softmax_at({logits.data(), static_cast<std::size_t>(logits.size())}, ids[t]));
  }
  return out;
}

}  // namespace headprobe
