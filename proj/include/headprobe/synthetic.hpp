#pragma once

#include <cstdint>

#include "headprobe/model.hpp"

namespace headprobe {

// Standard deviations for random initialisation. Layernorm scales are drawn
// around 1.
struct RandomInit {
  float embedding_std = 0.1f;
  float weight_std = 0.05f;
  float bias_std = 0.02f;
  float ln_scale_std = 0.1f;
  float ln_bias_std = 0.05f;
};

/// Gaussian weights from a seeded mt19937_64 with an explicit Box-Muller
/// transform; the result does not depend on the standard library's
/// distribution implementations.
ModelBundle make_random_model(const ModelConfig& config, std::uint64_t seed,
                              const RandomInit& init = {});

/// Every projection, bias and layernorm parameter zero; embeddings random.
/// Attention is uniform over the causal window and every next-token
/// distribution is uniform over the vocabulary.
ModelBundle make_uniform_model(const ModelConfig& config, std::uint64_t seed = 0);

}  // namespace headprobe
