#ifndef COVO_TASKS_HPP_
#define COVO_TASKS_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "covo/covo_score.hpp"
#include "covo/vocabulary.hpp"

namespace covo {

enum class TaskFamily { poetry, arithmetic };
enum class Split { train, test };

TaskFamily parse_family(std::string_view name);
std::string_view family_name(TaskFamily f);

struct StyleDef {
  std::string name;
  std::size_t lines = 1;
  std::size_t min_line_tokens = 1;
  std::size_t max_line_tokens = 1;
  Split pool = Split::train;
};

struct ToneDef {
  std::string name;
  std::vector<std::string> words;
  Split pool = Split::train;
};

// Everything that defines a task family: prompt and reverse templates, the
// prompt span scored in the value direction, and the family's content.
struct TaskSpec {
  TaskFamily family = TaskFamily::poetry;
  std::string prompt_template;   // contains {desc}
  std::string reverse_template;  // contains {out}
  std::string value_prefix;
  std::string value_suffix;

  // poetry
  std::vector<StyleDef> styles;
  std::vector<ToneDef> tones;
  std::vector<std::string> filler;

  // arithmetic
  int operand_max = 9;
  std::string operators = "+-*";
  std::string delimiter = "####";

  static TaskSpec poetry_default();
  static TaskSpec arithmetic_default();
  // Plain text, one `key value` per line; see README for the keys.
  static TaskSpec load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  void validate() const;

  std::string prompt_for(std::string_view desc) const;
  CovoConfig covo_config() const;
};

// Formal constraints for one style/tone pair.
struct StyleSpec {
  std::string style;
  std::string tone;
  std::size_t line_count = 1;
  std::size_t min_line_tokens = 1;
  std::size_t max_line_tokens = 1;
  std::vector<std::string> lexicon;
  TokenId newline = 0;

  void validate() const;
};

struct ArithmeticInstance {
  int a = 0;
  int b = 0;
  char op = '+';
  std::string prompt;
  std::string answer;

  static ArithmeticInstance make(int a, int b, char op, const TaskSpec& spec);
  std::string description() const;
  int value() const;
};

struct TaskInstance {
  std::string id;
  std::string description;
  std::string prompt;
  std::optional<StyleSpec> style;
  std::optional<ArithmeticInstance> arithmetic;
};

// Every pair of the split: train uses train styles x train tones, test uses
// the remaining pairs. Arithmetic has a single pool of all operand pairs.
std::vector<TaskInstance> task_pool(const TaskSpec& spec, Split split, const Vocabulary& vocab);

// `count` instances drawn uniformly with replacement from the split's pool.
std::vector<TaskInstance> generate_task_instances(const TaskSpec& spec, Split split, std::size_t count,
                                                  std::uint64_t seed, const Vocabulary& vocab);

// Fraction of {line count, every line within bounds, lexicon word present}
// satisfied by the output (cut at eos).
double constraint_reward(const TokenSequence& output, const StyleSpec& spec, const Vocabulary& vocab);

// 1 if the text after the last delimiter parses to the true value.
double arithmetic_reward(const TokenSequence& output, const ArithmeticInstance& inst,
                         const Vocabulary& vocab, std::string_view delimiter = "####");

double extrinsic_reward(const TokenSequence& output, const TaskInstance& inst, const TaskSpec& spec,
                        const Vocabulary& vocab);

// The output decodes without special tokens before eos and has a line break.
bool well_formed(const TokenSequence& output, const Vocabulary& vocab);

struct CorpusRecord {
  std::string id;
  std::string title;  // the task description
  std::string text;   // a reference output
};

// Reference outputs for every pair of both splits. Poetry records satisfy
// their constraints; arithmetic answers are deliberately noisy.
std::vector<CorpusRecord> make_corpus(const TaskSpec& spec, std::size_t per_item, std::uint64_t seed);
void write_corpus(const std::vector<CorpusRecord>& records, const std::filesystem::path& path);

// Forward ("prompt + text + eos") and reverse ("reverse(text) + title +
// eos") training sequences for one record.
std::vector<TokenSequence> pretraining_sequences(const TaskSpec& spec, std::string_view title,
                                                 std::string_view text, const Vocabulary& vocab);

}  // namespace covo

#endif  // COVO_TASKS_HPP_
