#include "headprobe/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "headprobe/error.hpp"

namespace headprobe {
namespace {

struct CodepointRange {
  char32_t first;
  char32_t last;
};

#include "unicode_ranges.inc"

template <std::size_t N>
bool in_ranges(const CodepointRange (&table)[N], char32_t cp) {
  auto it = std::upper_bound(std::begin(table), std::end(table), cp,
                             [](char32_t v, const CodepointRange& r) { return v < r.first; });
  if (it == std::begin(table)) return false;
  --it;
  return cp <= it->last;
}

// Sentinel for a byte that is not part of a valid UTF-8 sequence.
constexpr char32_t kInvalidByte = 0x110000;

enum class CharClass { kLetter, kNumber, kSpace, kOther };

CharClass classify(char32_t cp) {
  if (cp >= kInvalidByte) return CharClass::kOther;
  if (in_ranges(kLetterRanges, cp)) return CharClass::kLetter;
  if (in_ranges(kNumberRanges, cp)) return CharClass::kNumber;
  if (in_ranges(kSpaceRanges, cp)) return CharClass::kSpace;
  return CharClass::kOther;
}

struct Unit {
  char32_t cp;
  std::size_t offset;
  std::size_t length;
  CharClass cls;
};

// Decodes one UTF-8 sequence starting at `i`; invalid or overlong sequences
// and surrogates yield a single kInvalidByte unit.
Unit decode_utf8(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto invalid = [&] { return Unit{kInvalidByte + b0, i, 1, CharClass::kOther}; };
  std::size_t len = 0;
  char32_t cp = 0;
  char32_t min = 0;
  if (b0 < 0x80) {
    return Unit{b0, i, 1, classify(b0)};
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2, cp = b0 & 0x1F, min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3, cp = b0 & 0x0F, min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4, cp = b0 & 0x07, min = 0x10000;
  } else {
    return invalid();
  }
  if (i + len > s.size()) return invalid();
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return invalid();
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return invalid();
  return Unit{cp, i, len, classify(cp)};
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

}  // namespace

const std::array<char32_t, 256>& byte_to_codepoint() {
  static const std::array<char32_t, 256> table = [] {
    std::array<char32_t, 256> t{};
    std::array<bool, 256> printable{};
    for (int b = '!'; b <= '~'; ++b) printable[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) printable[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) printable[b] = true;
    char32_t next = 256;
    for (int b = 0; b < 256; ++b) t[b] = printable[b] ? static_cast<char32_t>(b) : next++;
    return t;
  }();
  return table;
}

Tokenizer Tokenizer::load(const std::filesystem::path& vocab_file,
                          const std::filesystem::path& merges_file) {
  Tokenizer tok;

  const std::string vocab_text = read_file(vocab_file);
  nlohmann::json vocab;
  try {
    vocab = nlohmann::json::parse(vocab_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(vocab_file.string() + ":" +
                     std::to_string(line_of_offset(vocab_text, e.byte == 0 ? 0 : e.byte - 1)) +
                     ": " + e.what());
  }
  if (!vocab.is_object()) {
    throw ParseError(vocab_file.string() + ":1: expected a JSON object of token -> id");
  }
  if (vocab.size() != kGpt2VocabSize) {
    throw ConfigError(vocab_file.string() + ": vocabulary has " + std::to_string(vocab.size()) +
                      " entries, expected " + std::to_string(kGpt2VocabSize));
  }

  tok.id_to_token_.assign(kGpt2VocabSize, {});
  std::vector<bool> seen(kGpt2VocabSize, false);
  tok.token_to_id_.reserve(kGpt2VocabSize);
  for (const auto& [token, value] : vocab.items()) {
    if (!value.is_number_integer()) {
      throw ParseError(vocab_file.string() + ": id of token \"" + token + "\" is not an integer");
    }
    const auto id = value.get<std::int64_t>();
    if (id < 0 || id >= static_cast<std::int64_t>(kGpt2VocabSize)) {
      throw ConfigError(vocab_file.string() + ": id " + std::to_string(id) + " of token \"" +
                        token + "\" is out of range");
    }
    if (seen[id]) {
      throw ConfigError(vocab_file.string() + ": duplicate id " + std::to_string(id));
    }
    seen[id] = true;
    tok.id_to_token_[id] = token;
    tok.token_to_id_.emplace(token, static_cast<TokenId>(id));
  }

  // Every vocab entry must be spelled in the byte-level alphabet.
  std::unordered_map<char32_t, unsigned char> inverse;
  const auto& forward = byte_to_codepoint();
  for (int b = 0; b < 256; ++b) inverse.emplace(forward[b], static_cast<unsigned char>(b));
  tok.id_to_bytes_.resize(kGpt2VocabSize);
  for (std::size_t id = 0; id < kGpt2VocabSize; ++id) {
    const std::string& s = tok.id_to_token_[id];
    std::string bytes;
    for (std::size_t i = 0; i < s.size();) {
      const Unit u = decode_utf8(s, i);
      auto it = inverse.find(u.cp);
      if (it == inverse.end()) {
        throw ConfigError(vocab_file.string() + ": token id " + std::to_string(id) +
                          " contains a character outside the byte alphabet");
      }
      bytes.push_back(static_cast<char>(it->second));
      i += u.length;
    }
    tok.id_to_bytes_[id] = std::move(bytes);
  }
  for (int b = 0; b < 256; ++b) {
    std::string single;
    append_utf8(single, forward[b]);
    auto it = tok.token_to_id_.find(single);
    if (it == tok.token_to_id_.end()) {
      throw ConfigError(vocab_file.string() + ": missing single-byte token for byte " +
                        std::to_string(b));
    }
    tok.byte_token_[b] = it->second;
  }

  std::ifstream merges(merges_file);
  if (!merges) throw ConfigError("cannot open " + merges_file.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(merges, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("#version", 0) == 0) continue;
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 == line.size() ||
        line.find(' ', space + 1) != std::string::npos) {
      throw ParseError(merges_file.string() + ":" + std::to_string(line_no) +
                       ": expected \"tokenA tokenB\"");
    }
    const std::string left = line.substr(0, space);
    const std::string right = line.substr(space + 1);
    const auto l = tok.find_token(left);
    const auto r = tok.find_token(right);
    const auto m = tok.find_token(left + right);
    if (!l || !r || !m) {
      throw ConfigError(merges_file.string() + ":" + std::to_string(line_no) + ": merge \"" +
                        line + "\" references tokens missing from the vocabulary");
    }
    const auto rank = static_cast<std::int32_t>(tok.merges_.size());
    // A repeated pair keeps its first (lowest) rank.
    tok.merge_rank_.emplace(pair_key(*l, *r), rank);
    tok.merges_.push_back(Merge{*l, *r, *m});
  }
  return tok;
}

const std::string& Tokenizer::token_string(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw DomainError("token id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[id];
}

std::optional<TokenId> Tokenizer::find_token(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string_view> Tokenizer::pretokenize(std::string_view text) const {
  std::vector<Unit> units;
  units.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    units.push_back(decode_utf8(text, i));
    i += units.back().length;
  }

  std::vector<std::string_view> pieces;
  const std::size_t n = units.size();
  auto emit = [&](std::size_t from, std::size_t to) {
    const std::size_t begin = units[from].offset;
    const std::size_t end = to < n ? units[to].offset : text.size();
    pieces.push_back(text.substr(begin, end - begin));
  };
  auto run_end = [&](std::size_t from, CharClass cls) {
    while (from < n && units[from].cls == cls) ++from;
    return from;
  };
  auto is_cp = [&](std::size_t k, char32_t cp) { return k < n && units[k].cp == cp; };

  std::size_t i = 0;
  while (i < n) {
    // 's|'t|'re|'ve|'m|'ll|'d
    if (units[i].cp == U'\'') {
      std::size_t len = 0;
      if (is_cp(i + 1, U's') || is_cp(i + 1, U't') || is_cp(i + 1, U'm') || is_cp(i + 1, U'd')) {
        len = 2;
      } else if ((is_cp(i + 1, U'r') && is_cp(i + 2, U'e')) ||
                 (is_cp(i + 1, U'v') && is_cp(i + 2, U'e')) ||
                 (is_cp(i + 1, U'l') && is_cp(i + 2, U'l'))) {
        len = 3;
      }
      if (len > 0) {
        emit(i, i + len);
        i += len;
        continue;
      }
    }

    //  ?\p{L}+ |  ?\p{N}+ |  ?[^\s\p{L}\p{N}]+
    const bool space_prefix =
        units[i].cp == U' ' && i + 1 < n && units[i + 1].cls != CharClass::kSpace;
    const std::size_t body = space_prefix ? i + 1 : i;
    if (units[body].cls != CharClass::kSpace) {
      const std::size_t end = run_end(body, units[body].cls);
      emit(i, end);
      i = end;
      continue;
    }

    // \s+(?!\S) | \s+
    const std::size_t end = run_end(i, CharClass::kSpace);
    if (end < n && end - i > 1) {
      emit(i, end - 1);
      i = end - 1;
    } else {
      emit(i, end);
      i = end;
    }
  }
  return pieces;
}

void Tokenizer::encode_pretoken(std::string_view piece, std::vector<TokenId>& out) const {
  std::vector<TokenId> word;
  word.reserve(piece.size());
  for (char c : piece) word.push_back(byte_token_[static_cast<unsigned char>(c)]);

  while (word.size() > 1) {
    std::int32_t best_rank = std::numeric_limits<std::int32_t>::max();
    std::size_t best_at = 0;
    for (std::size_t k = 0; k + 1 < word.size(); ++k) {
      auto it = merge_rank_.find(pair_key(word[k], word[k + 1]));
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_at = k;
      }
    }
    if (best_rank == std::numeric_limits<std::int32_t>::max()) break;

    const Merge& m = merges_[best_rank];
    std::vector<TokenId> next;
    next.reserve(word.size());
    next.insert(next.end(), word.begin(), word.begin() + static_cast<std::ptrdiff_t>(best_at));
    for (std::size_t k = best_at; k < word.size();) {
      if (k + 1 < word.size() && word[k] == m.left && word[k + 1] == m.right) {
        next.push_back(m.merged);
        k += 2;
      } else {
        next.push_back(word[k]);
        ++k;
      }
    }
    word.swap(next);
  }
  out.insert(out.end(), word.begin(), word.end());
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (std::string_view piece : pretokenize(text)) encode_pretoken(piece, ids);
  return ids;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += token_bytes(id);
  return out;
}

std::string Tokenizer::token_bytes(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_bytes_.size()) {
    throw DomainError("token id " + std::to_string(id) + " out of range [0, " +
                      std::to_string(id_to_bytes_.size()) + ")");
  }
  return id_to_bytes_[id];
}

std::optional<TokenId> Tokenizer::single_token_id(std::string_view word, bool leading_space) const {
  if (word.empty()) throw DomainError("single_token_id: word must be non-empty");
  std::string text;
  if (leading_space) text.push_back(' ');
  text.append(word);
  const auto ids = encode(text);
  if (ids.size() != 1) return std::nullopt;
  return ids.front();
}

}  // namespace headprobe
