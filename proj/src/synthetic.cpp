#include "headprobe/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace headprobe {
namespace {

class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // 53-bit uniforms in (0, 1].
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename M>
  void fill(M& m, Eigen::Index rows, Eigen::Index cols, double mean, double std) {
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<float>(mean + std * next());
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace

ModelBundle make_random_model(const ModelConfig& config, std::uint64_t seed, const RandomInit& init) {
  config.validate();
  Gaussian g(seed);
  const Eigen::Index d = config.d_model;
  ModelBundle m;
  m.config = config;
  g.fill(m.token_embedding, config.vocab_size, d, 0.0, init.embedding_std);
  g.fill(m.position_embedding, config.max_positions, d, 0.0, init.embedding_std);
  m.layers.resize(config.n_layers);
  for (auto& L : m.layers) {
    g.fill(L.ln1_weight, 1, d, 1.0, init.ln_scale_std);
    g.fill(L.ln1_bias, 1, d, 0.0, init.ln_bias_std);
    g.fill(L.attn_weight, d, 3 * d, 0.0, init.weight_std);
    g.fill(L.attn_bias, 1, 3 * d, 0.0, init.bias_std);
    g.fill(L.attn_proj_weight, d, d, 0.0, init.weight_std);
    g.fill(L.attn_proj_bias, 1, d, 0.0, init.bias_std);
    g.fill(L.ln2_weight, 1, d, 1.0, init.ln_scale_std);
    g.fill(L.ln2_bias, 1, d, 0.0, init.ln_bias_std);
    g.fill(L.mlp_fc_weight, d, 4 * d, 0.0, init.weight_std);
    g.fill(L.mlp_fc_bias, 1, 4 * d, 0.0, init.bias_std);
    g.fill(L.mlp_proj_weight, 4 * d, d, 0.0, init.weight_std);
    g.fill(L.mlp_proj_bias, 1, d, 0.0, init.bias_std);
  }
  g.fill(m.final_ln_weight, 1, d, 1.0, init.ln_scale_std);
  g.fill(m.final_ln_bias, 1, d, 0.0, init.ln_bias_std);
  return m;
}

ModelBundle make_uniform_model(const ModelConfig& config, std::uint64_t seed) {
  ModelBundle m = make_random_model(config, seed);
  for (auto& L : m.layers) {
    L.ln1_weight.setZero();
    L.ln1_bias.setZero();
    L.attn_weight.setZero();
    L.attn_bias.setZero();
    L.attn_proj_weight.setZero();
    L.attn_proj_bias.setZero();
    L.ln2_weight.setZero();
    L.ln2_bias.setZero();
    L.mlp_fc_weight.setZero();
    L.mlp_fc_bias.setZero();
    L.mlp_proj_weight.setZero();
    L.mlp_proj_bias.setZero();
  }
  m.final_ln_weight.setZero();
  m.final_ln_bias.setZero();
  return m;
}

}  // namespace headprobe
