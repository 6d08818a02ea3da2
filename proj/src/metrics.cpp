#include "covo/metrics.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "covo/error.hpp"
#include "covo/random.hpp"

namespace covo {

namespace {

using Ngram = std::vector<TokenId>;

void collect(const TokenSequence& s, std::size_t n, std::set<Ngram>& out, std::size_t& total) {
  if (s.size() < n) return;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    out.emplace(s.ids.begin() + static_cast<std::ptrdiff_t>(i),
                s.ids.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++total;
  }
}

double mean_over_included(const std::vector<EadOrder>& orders) {
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& o : orders) {
    if (o.total == 0) continue;
    sum += o.value;
    ++used;
  }
  if (used == 0) throw DomainError("EAD is undefined for empty outputs");
  return sum / static_cast<double>(used);
}

}  // namespace

double expected_distinct(std::size_t vocab_size, std::size_t order, std::size_t count) {
  if (vocab_size < 2) throw DomainError("EAD needs a vocabulary of at least 2 tokens");
  if (count == 0) return 0.0;
  if (count == 1) return 1.0;
  const double log_v = static_cast<double>(order) * std::log(static_cast<double>(vocab_size));
  const double inv = std::exp(-log_v);
  const double c = static_cast<double>(count);
  // For astronomically large V every draw is distinct.
  if (inv == 0.0) return c;
  return -std::expm1(c * std::log1p(-inv)) / inv;
}

std::vector<EadOrder> ead_orders(std::span<const TokenSequence> outputs, std::size_t vocab_size,
                                 std::size_t max_order) {
  std::vector<EadOrder> orders;
  for (std::size_t n = 1; n <= max_order; ++n) {
    std::set<Ngram> seen;
    EadOrder o;
    o.order = n;
    for (const auto& s : outputs) collect(s, n, seen, o.total);
    o.distinct = seen.size();
    o.expected = expected_distinct(vocab_size, n, o.total);
    o.value = o.total == 0 ? 0.0 : static_cast<double>(o.distinct) / o.expected;
    orders.push_back(o);
  }
  return orders;
}

double ead(std::span<const TokenSequence> outputs, std::size_t vocab_size, std::size_t max_order) {
  if (outputs.empty()) throw DomainError("EAD needs at least one output");
  return mean_over_included(ead_orders(outputs, vocab_size, max_order));
}

double against_pretrained_ead(const TokenSequence& candidate, const TokenSequence& reference,
                              std::size_t vocab_size, std::size_t max_order) {
  std::vector<EadOrder> orders;
  for (std::size_t n = 1; n <= max_order; ++n) {
    std::set<Ngram> cand, ref;
    EadOrder o;
    o.order = n;
    std::size_t ref_total = 0;
    collect(candidate, n, cand, o.total);
    collect(reference, n, ref, ref_total);
    for (const auto& g : cand) o.distinct += ref.count(g) ? 0 : 1;
    o.expected = expected_distinct(vocab_size, n, o.total);
    o.value = o.total == 0 ? 0.0 : static_cast<double>(o.distinct) / o.expected;
    orders.push_back(o);
  }
  return mean_over_included(orders);
}

HashedNgramEmbedder::HashedNgramEmbedder(std::size_t dimension, std::size_t max_order)
    : dimension_(dimension), max_order_(max_order) {
  if (dimension < 16) throw ConfigError("hashed embedder dimension must be at least 16");
  if (max_order == 0) throw ConfigError("hashed embedder needs max_order >= 1");
}

Eigen::VectorXd HashedNgramEmbedder::operator()(const TokenSequence& tokens) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension_));
  for (std::size_t n = 1; n <= max_order_; ++n) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::uint64_t h = 0x9e3779b97f4a7c15ULL * n;
      for (std::size_t k = 0; k < n; ++k) {
        h = (h ^ static_cast<std::uint64_t>(tokens.ids[i + k] + 1)) * 0x100000001b3ULL;
      }
      v[static_cast<Eigen::Index>(splitmix64(h) % dimension_)] += 1.0;
    }
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

PrecomputedEmbedder::PrecomputedEmbedder(const std::filesystem::path& path,
                                         std::shared_ptr<const Vocabulary> vocab)
    : vocab_(std::move(vocab)) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read embedding file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  Eigen::Index dim = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not a JSON object");
    }
    if (!rec.contains("text") || !rec.contains("embedding") || !rec["embedding"].is_array()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": needs fields text and embedding");
    }
    const auto& arr = rec["embedding"];
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    if (dim >= 0 && v.size() != dim) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": embedding dimension changes");
    }
    dim = v.size();
    table_[rec["text"].get<std::string>()] = std::move(v);
  }
}

Eigen::VectorXd PrecomputedEmbedder::operator()(const TokenSequence& tokens) const {
  const std::string text = vocab_->detokenize(tokens.view());
  const auto it = table_.find(text);
  if (it == table_.end()) throw DomainError("no precomputed embedding for output \"" + text + "\"");
  return it->second;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DomainError("embedding dimensions differ");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

double pairwise_cosine_diversity(std::span<const Eigen::VectorXd> embeddings) {
  if (embeddings.size() < 2) throw DomainError("cosine diversity needs at least two outputs");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
      sum += cosine_similarity(embeddings[i], embeddings[j]);
      ++pairs;
    }
  }
  return 1.0 - sum / static_cast<double>(pairs);
}

double pairwise_cosine_diversity(std::span<const TokenSequence> outputs, const Embedder& embed) {
  std::vector<Eigen::VectorXd> e;
  e.reserve(outputs.size());
  for (const auto& o : outputs) e.push_back(embed(o));
  return pairwise_cosine_diversity(e);
}

DiversityPair cross_input_diversity(std::span<const TokenSequence> outputs, std::size_t vocab_size,
                                    const Embedder& embed) {
  if (outputs.size() < 2) throw DomainError("cross-input diversity needs at least two outputs");
  return {ead(outputs, vocab_size), pairwise_cosine_diversity(outputs, embed)};
}

}  // namespace covo
