#ifndef COVO_EVALUATION_HPP_
#define COVO_EVALUATION_HPP_

#include <optional>
#include <string>
#include <vector>

#include "covo/corpus.hpp"
#include "covo/metrics.hpp"
#include "covo/trainer.hpp"

namespace covo {

struct EvalConfig {
  std::vector<std::uint64_t> seeds{1, 42, 121};
  SamplerConfig sampler{1.0, 50, 256, false};
  Split split = Split::test;
  std::size_t max_prompts = 0;  // 0 evaluates the whole pool
  std::size_t embed_dimension = std::size_t{1} << 16;
};

struct EvalRow {
  std::string prompt_id;
  std::uint64_t seed = 0;
  std::string output;
  std::string reference_output;
  double extrinsic = 0.0;
  bool well_formed = false;
  bool overflow = false;
  double s_v = 0.0;
  double s_o = 0.0;
  double against_ead = 0.0;
  double against_cosine = 0.0;
  std::optional<LcsMatch> lcs;
};

struct SeedSummary {
  std::uint64_t seed = 0;
  double cross_ead = 0.0;
  double cross_cosine = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<SeedSummary> per_seed;
  MeanCi cross_ead;
  MeanCi cross_cosine;
  MeanCi against_ead;
  MeanCi against_cosine;
  MeanCi extrinsic;
  double well_formed = 0.0;
  std::size_t overflow_count = 0;
  double mean_s_v = 0.0;
  double mean_s_o = 0.0;
  std::optional<TlcsReport> tlcs;
};

// Generates one output per prompt per seed from `policy` and compares it
// with the greedy output of `ref` for the same prompt. Also scores quality, diversity, CoVO components
// and, when an index is given, T-LCS against the corpus.
EvalReport evaluate(const Policy& policy, const Policy& ref, const TaskSpec& spec, const EvalConfig& cfg,
                    const CorpusIndex* index = nullptr);

// Summary table, one metric per line, and the machine-readable rows.
std::string summary_text(const EvalReport& r);
std::string summary_json(const EvalReport& r);
std::string row_json(const EvalRow& row);

}  // namespace covo

#endif  // COVO_EVALUATION_HPP_
