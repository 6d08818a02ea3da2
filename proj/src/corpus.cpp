#include "covo/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "covo/error.hpp"

namespace covo {

namespace {

constexpr std::string_view kIndexHeader = "covo-lcs-index 1";

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  lines.push_back(cur);
  return lines;
}

std::string passes(const std::string& text, const IngestRules& rules) {
  const auto lines = split_lines(text);
  if (lines.size() < rules.min_lines) return "too few lines";
  if (rules.max_lines > 0 && lines.size() > rules.max_lines) return "too many lines";
  for (const auto& l : lines) {
    if (l.size() < rules.min_line_tokens) return "line too short";
    if (rules.max_line_tokens > 0 && l.size() > rules.max_line_tokens) return "line too long";
  }
  return "";
}

}  // namespace

std::string normalize_text(std::string_view text) {
  std::string out;
  std::string line;
  bool pending_space = false;
  auto flush = [&]() {
    if (!line.empty()) {
      if (!out.empty()) out += '\n';
      out += line;
    }
    line.clear();
    pending_space = false;
  };
  for (char c : text) {
    if (c == '\n') {
      flush();
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !line.empty();
    } else {
      if (pending_space) line += ' ';
      pending_space = false;
      line += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  flush();
  return out;
}

IngestResult ingest_records(std::istream& in, const IngestRules& rules, const Vocabulary& vocab) {
  IngestResult res;
  std::set<std::string> seen_text, seen_id;
  std::string line;
  std::size_t lineno = 0;
  auto warn = [&](const std::string& what) {
    res.report.warnings.push_back("line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (normalize_text(line).empty()) continue;
    ++res.report.records;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      ++res.report.malformed;
      warn("not a JSON record, skipped");
      continue;
    }
    if (!rec.is_object() || !rec.contains("id") || !rec.contains("text") || !rec["id"].is_string() ||
        !rec["text"].is_string() || (rec.contains("title") && !rec["title"].is_string())) {
      ++res.report.malformed;
      warn("record needs string fields id and text, skipped");
      continue;
    }
    CorpusDocument doc;
    doc.id = rec["id"].get<std::string>();
    doc.title = rec.contains("title") ? normalize_text(rec["title"].get<std::string>()) : "";
    doc.text = normalize_text(rec["text"].get<std::string>());
    if (doc.text.empty()) {
      ++res.report.malformed;
      warn("record " + doc.id + " has empty text, skipped");
      continue;
    }
    if (!rules.language.empty() && rec.contains("language") && rec["language"] != rules.language) {
      ++res.report.filtered;
      continue;
    }
    if (!vocab.representable(doc.text)) {
      ++res.report.unrepresentable;
      warn("record " + doc.id + " has symbols outside the vocabulary, skipped");
      continue;
    }
    if (!passes(doc.text, rules).empty()) {
      ++res.report.filtered;
      continue;
    }
    if (!seen_text.insert(doc.text).second) {
      ++res.report.duplicates;
      continue;
    }
    if (!seen_id.insert(doc.id).second) {
      ++res.report.malformed;
      warn("duplicate id " + doc.id + ", skipped");
      continue;
    }
    doc.tokens = vocab.tokenize(doc.text);
    res.documents.push_back(std::move(doc));
  }
  res.report.kept = res.documents.size();
  return res;
}

IngestResult ingest_corpus(const std::filesystem::path& path, const IngestRules& rules,
                           const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read corpus file " + path.string());
  return ingest_records(in, rules, vocab);
}

void CorpusIndex::extend(std::int64_t c) {
  const std::size_t cur = states_.size();
  states_.push_back(State{states_[last_].len + 1, -1, states_[last_].len, {}});
  std::int64_t p = static_cast<std::int64_t>(last_);
  while (p != -1 && !states_[p].next.count(c)) {
    states_[p].next[c] = cur;
    p = states_[p].link;
  }
  if (p == -1) {
    states_[cur].link = 0;
  } else {
    const std::size_t q = states_[p].next[c];
    if (states_[p].len + 1 == states_[q].len) {
      states_[cur].link = static_cast<std::int64_t>(q);
    } else {
      const std::size_t clone = states_.size();
      State copy = states_[q];
      copy.len = states_[p].len + 1;
      states_.push_back(std::move(copy));
      while (p != -1) {
        auto it = states_[p].next.find(c);
        if (it == states_[p].next.end() || it->second != q) break;
        it->second = clone;
        p = states_[p].link;
      }
      states_[q].link = static_cast<std::int64_t>(clone);
      states_[cur].link = static_cast<std::int64_t>(clone);
    }
  }
  last_ = cur;
}

CorpusIndex CorpusIndex::build(std::span<const CorpusDocument> docs, std::size_t vocab_size) {
  if (docs.empty()) throw DomainError("cannot index an empty corpus");
  CorpusIndex idx;
  idx.vocab_size_ = vocab_size;
  idx.states_.push_back(State{});
  std::size_t pos = 0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (d > 0) {
      idx.extend(static_cast<std::int64_t>(vocab_size + d - 1));
      ++pos;
    }
    idx.doc_ids_.push_back(docs[d].id);
    idx.doc_starts_.push_back(pos);
    idx.doc_lengths_.push_back(docs[d].tokens.size());
    for (TokenId t : docs[d].tokens.ids) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
        throw DomainError("document " + docs[d].id + " has a token outside the vocabulary");
      }
      idx.extend(t);
      ++pos;
    }
  }
  idx.joined_length_ = pos;
  return idx;
}

std::size_t CorpusIndex::token_count() const noexcept {
  std::size_t n = 0;
  for (auto l : doc_lengths_) n += l;
  return n;
}

bool CorpusIndex::accepts(std::span<const TokenId> s) const {
  std::size_t st = 0;
  for (TokenId t : s) {
    const auto it = states_[st].next.find(t);
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size_ || it == states_[st].next.end()) return false;
    st = it->second;
  }
  return true;
}

LcsMatch CorpusIndex::lcs_query(const TokenSequence& candidate) const {
  LcsMatch best;
  std::size_t st = 0, len = 0, best_end = 0;
  for (TokenId t : candidate.ids) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size_) {
      st = 0;
      len = 0;
      continue;
    }
    while (st != 0 && !states_[st].next.count(t)) {
      st = static_cast<std::size_t>(states_[st].link);
      len = states_[st].len;
    }
    const auto it = states_[st].next.find(t);
    if (it != states_[st].next.end()) {
      st = it->second;
      ++len;
    } else {
      st = 0;
      len = 0;
    }
    if (len > best.length) {
      best.length = len;
      best_end = states_[st].first_end;
    }
  }
  if (best.length > 0) {
    const std::size_t start = best_end + 1 - best.length;
    const auto it = std::upper_bound(doc_starts_.begin(), doc_starts_.end(), start);
    best.document = static_cast<std::size_t>(it - doc_starts_.begin()) - 1;
    best.offset = start - doc_starts_[best.document];
  }
  return best;
}

void CorpusIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write index file " + path.string());
  out << kIndexHeader << "\n";
  out << "vocab_size " << vocab_size_ << "\n";
  out << "documents " << doc_ids_.size() << "\n";
  for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
    out << doc_starts_[d] << " " << doc_lengths_[d] << " " << nlohmann::json(doc_ids_[d]).dump() << "\n";
  }
  out << "joined_length " << joined_length_ << "\n";
  out << "states " << states_.size() << " last " << last_ << "\n";
  for (const auto& s : states_) {
    out << s.len << " " << s.link << " " << s.first_end << " " << s.next.size();
    for (const auto& [c, to] : s.next) out << " " << c << ":" << to;
    out << "\n";
  }
  if (!out) throw Error("failed writing index file " + path.string());
}

CorpusIndex CorpusIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read index file " + path.string());
  auto fail = [&](const std::string& what) {
    return FormatError("index file " + path.string() + ": " + what);
  };
  std::string line;
  if (!std::getline(in, line) || line != kIndexHeader) throw fail("missing version header");
  CorpusIndex idx;
  std::string key;
  std::size_t ndocs = 0, nstates = 0;
  if (!(in >> key >> idx.vocab_size_) || key != "vocab_size") throw fail("bad vocab_size line");
  if (!(in >> key >> ndocs) || key != "documents") throw fail("bad documents line");
  for (std::size_t d = 0; d < ndocs; ++d) {
    std::size_t start = 0, len = 0;
    if (!(in >> start >> len) || !std::getline(in, line)) throw fail("truncated document table");
    try {
      idx.doc_ids_.push_back(nlohmann::json::parse(line).get<std::string>());
    } catch (const nlohmann::json::exception&) {
      throw fail("bad document id");
    }
    idx.doc_starts_.push_back(start);
    idx.doc_lengths_.push_back(len);
  }
  if (!(in >> key >> idx.joined_length_) || key != "joined_length") throw fail("bad joined_length line");
  std::string last_key;
  if (!(in >> key >> nstates >> last_key >> idx.last_) || key != "states" || last_key != "last") {
    throw fail("bad states line");
  }
  idx.states_.resize(nstates);
  for (auto& s : idx.states_) {
    std::size_t ntrans = 0;
    if (!(in >> s.len >> s.link >> s.first_end >> ntrans)) throw fail("truncated state table");
    for (std::size_t k = 0; k < ntrans; ++k) {
      std::string edge;
      if (!(in >> edge)) throw fail("truncated transition list");
      const auto colon = edge.find(':');
      if (colon == std::string::npos) throw fail("bad transition " + edge);
      const std::size_t to = std::stoull(edge.substr(colon + 1));
      if (to >= nstates) throw fail("transition target out of range");
      s.next[std::stoll(edge.substr(0, colon))] = to;
    }
  }
  return idx;
}

bool operator==(const CorpusIndex& a, const CorpusIndex& b) {
  if (a.vocab_size_ != b.vocab_size_ || a.doc_ids_ != b.doc_ids_ || a.doc_starts_ != b.doc_starts_ ||
      a.doc_lengths_ != b.doc_lengths_ || a.last_ != b.last_ || a.joined_length_ != b.joined_length_ ||
      a.states_.size() != b.states_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.states_.size(); ++i) {
    const auto &x = a.states_[i], &y = b.states_[i];
    if (x.len != y.len || x.link != y.link || x.first_end != y.first_end || x.next != y.next) return false;
  }
  return true;
}

TlcsReport tlcs_report(const CorpusIndex& index, std::span<const TokenSequence> candidates) {
  if (candidates.empty()) throw DomainError("T-LCS report needs at least one candidate");
  TlcsReport r;
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const LcsMatch m = index.lcs_query(candidates[i]);
    r.rows.push_back({i, m});
    sum += static_cast<double>(m.length);
    if (m.length > r.max) {
      r.max = m.length;
      r.argmax = i;
    }
  }
  r.mean = sum / static_cast<double>(candidates.size());
  return r;
}

}  // namespace covo
