#ifndef COVO_VOCABULARY_HPP_
#define COVO_VOCABULARY_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace covo {

using TokenId = std::int32_t;

// A list of vocabulary indices, optionally carrying the text it was
// tokenized from.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::optional<std::string> text;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
  std::span<const TokenId> view() const noexcept { return ids; }

  friend bool operator==(const TokenSequence& a, const TokenSequence& b) {
    return a.ids == b.ids;
  }
};

TokenSequence concat(const TokenSequence& a, const TokenSequence& b);

// Character-level vocabulary over a closed alphabet plus the special tokens
// <pad> and <eos>. Every alphabet character is its own token; the newline
// character doubles as the line separator.
class Vocabulary {
 public:
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kEosToken = "<eos>";

  // Lowercase letters, digits, space, newline and a little punctuation.
  static const std::string& default_alphabet();

  // Tokens are ordered <pad>, <eos>, then the alphabet in declaration order.
  // The alphabet must contain '\n' and have no repeated characters.
  static Vocabulary from_alphabet(std::string_view alphabet);

  // A vocabulary of n opaque tokens, used for hand-built test models. The
  // special ids may alias each other when n is small.
  static Vocabulary synthetic(std::size_t n);

  // Reads the token-per-line file written by save().
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<TokenId> find(std::string_view token) const;

  TokenId pad() const noexcept { return pad_; }
  TokenId eos() const noexcept { return eos_; }
  TokenId newline() const noexcept { return newline_; }
  bool is_special(TokenId id) const noexcept { return id == pad_ || id == eos_; }

  // Throws UnknownSymbolError naming the first character outside the alphabet.
  TokenSequence tokenize(std::string_view text) const;
  bool representable(std::string_view text) const noexcept;
  // Specials render as the empty string.
  std::string detokenize(std::span<const TokenId> ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.pad_ == b.pad_ && a.eos_ == b.eos_ &&
           a.newline_ == b.newline_;
  }

 private:
  Vocabulary(std::vector<std::string> tokens, TokenId pad, TokenId eos, TokenId newline);

  std::vector<std::string> tokens_;
  std::array<TokenId, 256> char_to_id_{};
  TokenId pad_ = 0;
  TokenId eos_ = 0;
  TokenId newline_ = 0;
};

}  // namespace covo

#endif  // COVO_VOCABULARY_HPP_
