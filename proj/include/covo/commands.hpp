#ifndef COVO_COMMANDS_HPP_
#define COVO_COMMANDS_HPP_

#include <filesystem>
#include <memory>

#include "covo/run_config.hpp"

namespace covo {

// Each command writes its outputs under cfg.out, together with config.txt
// holding the effective configuration.
//
//   make-corpus  corpus.jsonl
//   ingest       corpus.idx, ingest_report.json
//   pretrain     checkpoint/, pretrain_log.jsonl
//   train        checkpoint/, metrics.jsonl
//   generate     generations.jsonl
//   score        scores.jsonl
//   eval         eval_rows.jsonl, eval_summary.txt, eval_summary.json
void run_make_corpus(const RunConfig& cfg);
void run_ingest(const RunConfig& cfg);
void run_pretrain(const RunConfig& cfg);
// Throws NumericError after saving the last good checkpoint when training
// aborts on a non-finite metric.
void run_train(const RunConfig& cfg);
void run_generate(const RunConfig& cfg);
void run_score(const RunConfig& cfg);
void run_eval(const RunConfig& cfg);

std::shared_ptr<const Vocabulary> make_vocabulary(const RunConfig& cfg);

}  // namespace covo

#endif  // COVO_COMMANDS_HPP_
