#ifndef COVO_CORPUS_HPP_
#define COVO_CORPUS_HPP_

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "covo/vocabulary.hpp"

namespace covo {

struct CorpusDocument {
  std::string id;
  std::string title;
  std::string text;
  TokenSequence tokens;
};

// Filters applied after normalization. Zero disables an upper bound.
struct IngestRules {
  std::size_t min_lines = 1;
  std::size_t max_lines = 0;
  std::size_t min_line_tokens = 0;
  std::size_t max_line_tokens = 0;
  // When set, records carrying a "language" field must match it.
  std::string language;
};

struct IngestReport {
  std::size_t records = 0;
  std::size_t kept = 0;
  std::size_t malformed = 0;
  std::size_t unrepresentable = 0;
  std::size_t filtered = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> warnings;
};

struct IngestResult {
  std::vector<CorpusDocument> documents;
  IngestReport report;
};

// Lowercase, collapse runs of blanks inside each line, trim, drop empty
// lines. Punctuation is kept.
std::string normalize_text(std::string_view text);

// Reads line-delimited JSON records with fields id, title and text.
IngestResult ingest_corpus(const std::filesystem::path& path, const IngestRules& rules,
                           const Vocabulary& vocab);
IngestResult ingest_records(std::istream& in, const IngestRules& rules, const Vocabulary& vocab);

struct LcsMatch {
  std::size_t length = 0;
  std::size_t document = 0;  // index into the index's documents
  std::size_t offset = 0;    // token offset of the match inside that document
};

// Suffix automaton over the documents joined by separator symbols that no
// query token can match.
class CorpusIndex {
 public:
  struct State {
    std::size_t len = 0;
    std::int64_t link = -1;
    std::size_t first_end = 0;  // end position of the first occurrence
    std::map<std::int64_t, std::size_t> next;
  };

  static CorpusIndex build(std::span<const CorpusDocument> docs, std::size_t vocab_size);

  static CorpusIndex load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool accepts(std::span<const TokenId> s) const;
  LcsMatch lcs_query(const TokenSequence& candidate) const;

  std::size_t state_count() const noexcept { return states_.size(); }
  // Length of the joined sequence, separators included.
  std::size_t joined_length() const noexcept { return joined_length_; }
  std::size_t token_count() const noexcept;
  std::size_t document_count() const noexcept { return doc_ids_.size(); }
  const std::string& document_id(std::size_t i) const { return doc_ids_.at(i); }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  const std::vector<State>& states() const noexcept { return states_; }

  friend bool operator==(const CorpusIndex& a, const CorpusIndex& b);

 private:
  void extend(std::int64_t symbol);

  std::size_t vocab_size_ = 0;
  std::vector<std::string> doc_ids_;
  std::vector<std::size_t> doc_starts_;
  std::vector<std::size_t> doc_lengths_;
  std::vector<State> states_;
  std::size_t last_ = 0;
  std::size_t joined_length_ = 0;
};

struct TlcsRow {
  std::size_t candidate = 0;
  LcsMatch match;
};

struct TlcsReport {
  double mean = 0.0;
  std::size_t max = 0;
  std::size_t argmax = 0;  // candidate holding the global max
  std::vector<TlcsRow> rows;
};

TlcsReport tlcs_report(const CorpusIndex& index, std::span<const TokenSequence> candidates);

}  // namespace covo

#endif  // COVO_CORPUS_HPP_
