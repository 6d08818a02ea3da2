#ifndef COVO_METRICS_HPP_
#define COVO_METRICS_HPP_

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "covo/vocabulary.hpp"

namespace covo {

inline constexpr std::size_t kEadMaxOrder = 5;

// Expected number of distinct n-grams among `count` uniform draws from a
// space of vocab_size^n items: V (1 - (1 - 1/V)^count), in log space.
double expected_distinct(std::size_t vocab_size, std::size_t order, std::size_t count);

struct EadOrder {
  std::size_t order = 0;
  std::size_t distinct = 0;
  std::size_t total = 0;  // C_n
  double expected = 0.0;
  double value = 0.0;  // distinct / expected; 0 when total == 0
};

// Per-order statistics for orders 1..max_order, pooling n-grams across the
// outputs (n-grams never span two outputs).
std::vector<EadOrder> ead_orders(std::span<const TokenSequence> outputs, std::size_t vocab_size,
                                 std::size_t max_order = kEadMaxOrder);

// Mean of EAD_n over the orders with C_n > 0.
double ead(std::span<const TokenSequence> outputs, std::size_t vocab_size,
           std::size_t max_order = kEadMaxOrder);

// EAD of `candidate` counting only its n-grams absent from `reference`.
// The expectation uses the candidate's own C_n.
double against_pretrained_ead(const TokenSequence& candidate, const TokenSequence& reference,
                              std::size_t vocab_size, std::size_t max_order = kEadMaxOrder);

using Embedder = std::function<Eigen::VectorXd(const TokenSequence&)>;

// Bucket counts of hashed 1..max_order-grams, L2-normalized.
class HashedNgramEmbedder {
 public:
  explicit HashedNgramEmbedder(std::size_t dimension = std::size_t{1} << 16,
                               std::size_t max_order = 3);

  Eigen::VectorXd operator()(const TokenSequence& tokens) const;
  std::size_t dimension() const noexcept { return dimension_; }

 private:
  std::size_t dimension_;
  std::size_t max_order_;
};

// Embeddings computed elsewhere, looked up by the detokenized text. The file
// holds one JSON object per line: {"text": ..., "embedding": [...]}.
class PrecomputedEmbedder {
 public:
  PrecomputedEmbedder(const std::filesystem::path& path, std::shared_ptr<const Vocabulary> vocab);

  Eigen::VectorXd operator()(const TokenSequence& tokens) const;
  std::size_t size() const noexcept { return table_.size(); }

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  std::map<std::string, Eigen::VectorXd> table_;
};

// Cosine similarity; two zero vectors count as identical, a single zero
// vector as orthogonal.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// 1 - mean cosine over all unordered pairs.
double pairwise_cosine_diversity(std::span<const Eigen::VectorXd> embeddings);
double pairwise_cosine_diversity(std::span<const TokenSequence> outputs, const Embedder& embed);

struct DiversityPair {
  double ead = 0.0;
  double cosine = 0.0;
};

// EAD and cosine diversity over the pooled outputs of one run.
DiversityPair cross_input_diversity(std::span<const TokenSequence> outputs, std::size_t vocab_size,
                                    const Embedder& embed);

}  // namespace covo

#endif  // COVO_METRICS_HPP_
