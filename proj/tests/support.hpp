#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "headprobe/model.hpp"
#include "headprobe/stimuli.hpp"
#include "headprobe/synthetic.hpp"
#include "headprobe/tokenizer.hpp"

namespace headprobe::testing {

inline std::filesystem::path source_dir() { return HEADPROBE_SOURCE_DIR; }
inline std::filesystem::path fixture(const std::string& name) { return source_dir() / "tests" / "fixtures" / name; }
inline std::filesystem::path vocab_path() { return source_dir() / "assets" / "gpt2" / "vocab.json"; }
inline std::filesystem::path merges_path() { return source_dir() / "assets" / "gpt2" / "merges.txt"; }
inline std::filesystem::path demo_stimuli_path() { return source_dir() / "data" / "stimuli_demo.json"; }

inline const Tokenizer& gpt2_tokenizer() {
  static const Tokenizer tok = Tokenizer::load(vocab_path(), merges_path());
  return tok;
}

inline nlohmann::json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  return nlohmann::json::parse(in);
}

inline std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Seed of the weights the model oracle fixture was produced from.
inline constexpr std::uint64_t kOracleSeed = 20231015;

inline const ModelBundle& oracle_model() {
  static const ModelBundle m = make_random_model(ModelConfig::gpt2_small(), kOracleSeed);
  return m;
}

// 12 x 12 heads on a narrow residual stream; the full vocabulary so real
// tokenizer ids are valid.
inline ModelConfig small_config(int n_layers = 12, int n_heads = 12, int d_head = 4) {
  ModelConfig c;
  c.n_layers = n_layers;
  c.n_heads = n_heads;
  c.d_head = d_head;
  c.d_model = n_heads * d_head;
  c.max_positions = 128;
  return c;
}

inline const ModelBundle& small_model() {
  static const ModelBundle m = make_random_model(small_config(), 7);
  return m;
}

inline const AlignmentResult& demo_alignment() {
  static const AlignmentResult a = align_and_filter(load_stimuli(demo_stimuli_path()), gpt2_tokenizer());
  return a;
}

// Head (0,0) attends by a plausibility feature written into the noun
// embeddings; every other head stays uniform.
inline ModelBundle planted_model() {
  ModelBundle m = make_uniform_model(small_config(2, 2, 4), 0);
  m.position_embedding.setZero();
  for (Eigen::Index r = 0; r < m.token_embedding.rows(); ++r) {
    m.token_embedding.row(r).setZero();
    m.token_embedding(r, 0) = 1.0f;
    m.token_embedding(r, 1) = -1.0f;
  }
  std::set<TokenId> plausible, implausible;
  for (const AlignedSet& set : demo_alignment().aligned) {
    for (const Condition c : Condition::all()) {
      const AlignedStimulus& a = set.at(c);
      (c.dependent_plausible ? plausible : implausible).insert(a.ids[a.dependent_tok]);
      (c.distractor_plausible ? plausible : implausible).insert(a.ids[a.distractor_tok]);
    }
  }
  for (TokenId id : plausible) {
    if (implausible.count(id)) throw std::logic_error("planted_model: token in both roles");
  }
  auto mark = [&](TokenId id, float s) {
    m.token_embedding(id, 2) = s;
    m.token_embedding(id, 3) = -s;
  };
  for (TokenId id : plausible) mark(id, 1.0f);
  for (TokenId id : implausible) mark(id, -1.0f);

  LayerWeights& L = m.layers[0];
  L.ln1_weight.setOnes();
  L.attn_bias[0] = 10.0f;                     // q of head 0 is constant
  L.attn_weight(2, m.config.d_model) = 1.0f;  // k[0] of head 0 reads the feature
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("headprobe-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, const std::string& content) const {
    std::ofstream out(path_ / name, std::ios::binary);
    out << content;
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace headprobe::testing
