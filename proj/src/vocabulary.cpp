#include "covo/vocabulary.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "covo/error.hpp"

namespace covo {
namespace {

std::string describe_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  if (u >= 0x20 && u < 0x7f) return std::string("'") + c + "'";
  std::ostringstream os;
  os << "byte 0x" << std::hex << static_cast<int>(u);
  return os.str();
}

// Vocabulary files hold one token per line, so the newline and backslash
// tokens are escaped.
std::string escape(const std::string& token) {
  std::string out;
  for (char c : token) {
    if (c == '\n') {
      out += "\\n";
    } else if (c == '\\') {
      out += "\\\\";
    } else {
      out += c;
    }
  }
  return out;
}

std::string unescape(const std::string& line) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && i + 1 < line.size()) {
      ++i;
      out += line[i] == 'n' ? '\n' : line[i];
    } else {
      out += line[i];
    }
  }
  return out;
}

}  // namespace

TokenSequence concat(const TokenSequence& a, const TokenSequence& b) {
  TokenSequence out;
  out.ids.reserve(a.size() + b.size());
  out.ids.insert(out.ids.end(), a.ids.begin(), a.ids.end());
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  if (a.text && b.text) out.text = *a.text + *b.text;
  return out;
}

const std::string& Vocabulary::default_alphabet() {
  static const std::string alphabet =
      "\n abcdefghijklmnopqrstuvwxyz0123456789.,;:!?'-+*=#()/";
  return alphabet;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, TokenId pad, TokenId eos,
                       TokenId newline)
    : tokens_(std::move(tokens)), pad_(pad), eos_(eos), newline_(newline) {
  const auto n = static_cast<TokenId>(tokens_.size());
  if (n < 2) throw ConfigError("vocabulary needs at least 2 tokens");
  if (pad_ < 0 || pad_ >= n || eos_ < 0 || eos_ >= n || newline_ < 0 || newline_ >= n) {
    throw ConfigError("vocabulary special id out of range");
  }
  std::set<std::string> seen;
  char_to_id_.fill(-1);
  for (TokenId id = 0; id < n; ++id) {
    const std::string& t = tokens_[static_cast<std::size_t>(id)];
    if (!seen.insert(t).second) throw ConfigError("duplicate vocabulary token: " + escape(t));
    if (t.size() == 1 && id != pad_ && id != eos_) {
      char_to_id_[static_cast<unsigned char>(t[0])] = id;
    }
  }
}

Vocabulary Vocabulary::from_alphabet(std::string_view alphabet) {
  std::vector<std::string> tokens{std::string(kPadToken), std::string(kEosToken)};
  TokenId newline = -1;
  for (char c : alphabet) {
    if (c == '\n') newline = static_cast<TokenId>(tokens.size());
    tokens.emplace_back(1, c);
  }
  if (newline < 0) throw ConfigError("alphabet must contain the newline character");
  return Vocabulary(std::move(tokens), 0, 1, newline);
}

Vocabulary Vocabulary::synthetic(std::size_t n) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < n; ++i) tokens.push_back("<t" + std::to_string(i) + ">");
  const auto last = static_cast<TokenId>(n) - 1;
  return Vocabulary(std::move(tokens), 0, n > 1 ? 1 : 0, last);
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i] == token) return static_cast<TokenId>(i);
  }
  return std::nullopt;
}

TokenSequence Vocabulary::tokenize(std::string_view text) const {
  TokenSequence out;
  out.ids.reserve(text.size());
  for (char c : text) {
    const TokenId id = char_to_id_[static_cast<unsigned char>(c)];
    if (id < 0) throw UnknownSymbolError("unknown symbol " + describe_char(c), c);
    out.ids.push_back(id);
  }
  out.text = std::string(text);
  return out;
}

bool Vocabulary::representable(std::string_view text) const noexcept {
  for (char c : text) {
    if (char_to_id_[static_cast<unsigned char>(c)] < 0) return false;
  }
  return true;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (is_special(id)) continue;
    out += token(id);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary " + path.string());
  out << "#pad " << pad_ << " eos " << eos_ << " newline " << newline_ << "\n";
  for (const auto& t : tokens_) out << escape(t) << "\n";
  if (!out) throw Error("failed writing vocabulary " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing vocabulary file " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw FormatError("empty vocabulary file " + path.string());
  std::istringstream hs(header);
  std::string k1, k2, k3;
  TokenId pad = -1, eos = -1, newline = -1;
  if (!(hs >> k1 >> pad >> k2 >> eos >> k3 >> newline) || k1 != "#pad" || k2 != "eos" ||
      k3 != "newline") {
    throw FormatError("bad vocabulary header in " + path.string());
  }
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(unescape(line));
  return Vocabulary(std::move(tokens), pad, eos, newline);
}

}  // namespace covo
