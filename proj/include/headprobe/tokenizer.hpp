#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace headprobe {

using TokenId = std::int32_t;

inline constexpr std::size_t kGpt2VocabSize = 50257;

/// Byte-level BPE tables for the GPT2 vocabulary.
///
/// Immutable after construction; every member function is const and safe to
/// call from any number of threads.
class Tokenizer {
 public:
  struct Merge {
    TokenId left;
    TokenId right;
    TokenId merged;
  };

  /// Reads `vocab.json` (token string -> id) and `merges.txt` (one "a b" pair
  /// per line, ordered by rank, optional "#version" header).
  ///
  /// Throws ParseError naming the file and line on malformed input and
  /// ConfigError when the vocabulary is not a bijection over 50,257 ids or a
  /// merge references unknown tokens.
  static Tokenizer load(const std::filesystem::path& vocab_file,
                        const std::filesystem::path& merges_file);

  /// Encodes arbitrary bytes. Invalid UTF-8 is tolerated: each stray byte is
  /// its own pre-token character, so decode(encode(s)) == s for every s.
  std::vector<TokenId> encode(std::string_view text) const;

  /// Throws DomainError for ids outside [0, vocab_size()).
  std::string decode(std::span<const TokenId> ids) const;

  /// Raw bytes a single token decodes to.
  std::string token_bytes(TokenId id) const;

  /// Id of `word` (prefixed with a space when `leading_space`) if it encodes
  /// to exactly one token. Throws DomainError on an empty word.
  std::optional<TokenId> single_token_id(std::string_view word,
                                         bool leading_space) const;

  /// Splits text into pre-tokens following GPT2's pre-tokenization pattern
  ///   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
  std::vector<std::string_view> pretokenize(std::string_view text) const;

  std::size_t vocab_size() const { return id_to_token_.size(); }
  std::size_t merge_count() const { return merges_.size(); }
  const std::string& token_string(TokenId id) const;
  std::optional<TokenId> find_token(std::string_view token) const;

 private:
  Tokenizer() = default;

  void encode_pretoken(std::string_view piece, std::vector<TokenId>& out) const;

  static std::uint64_t pair_key(TokenId a, TokenId b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  }

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<Merge> merges_;
  // (left, right) -> rank in merges_
  std::unordered_map<std::uint64_t, std::int32_t> merge_rank_;
  // byte -> id of its single-character token
  std::array<TokenId, 256> byte_token_{};
  // id -> decoded bytes
  std::vector<std::string> id_to_bytes_;
};

/// The 256-entry byte -> code point table used by byte-level BPE: printable
/// Latin-1 bytes map to themselves, the rest to U+0100 onwards.
const std::array<char32_t, 256>& byte_to_codepoint();

}  // namespace headprobe
