#include "covo/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "covo/error.hpp"
#include "covo/random.hpp"

namespace covo {

namespace {

constexpr std::string_view kDescSlot = "{desc}";

std::string replace_slot(std::string_view tmpl, std::string_view slot, std::string_view value) {
  const auto at = tmpl.find(slot);
  if (at == std::string_view::npos) throw ConfigError("template \"" + std::string(tmpl) + "\" lacks " + std::string(slot));
  std::string out(tmpl.substr(0, at));
  out += value;
  out += tmpl.substr(at + slot.size());
  return out;
}

std::string escape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '\n') {
      out += "\\n";
    } else if (c == '\t') {
      out += "\\t";
    } else if (c == '\\') {
      out += "\\\\";
    } else if (c == ' ' && (i == 0 || i + 1 == s.size())) {
      out += "\\s";
    } else {
      out += c;
    }
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    const char n = s[++i];
    if (n == 'n') out += '\n';
    else if (n == 't') out += '\t';
    else if (n == 's') out += ' ';
    else out += n;
  }
  return out;
}

std::vector<std::string> words_of(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ConfigError("unknown pool \"" + s + "\" (expected train or test)");
}

std::string_view split_name(Split s) { return s == Split::train ? "train" : "test"; }

// Body of a generation: everything before the first eos, padding dropped.
std::string output_text(const TokenSequence& output, const Vocabulary& vocab) {
  std::vector<TokenId> body;
  for (TokenId t : output.ids) {
    if (t == vocab.eos()) break;
    if (t != vocab.pad()) body.push_back(t);
  }
  return vocab.detokenize(body);
}

std::vector<std::string> output_lines(const std::string& text) {
  std::vector<std::string> lines;
  if (text.empty()) return lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  // A single trailing line break does not open a new line.
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

bool is_word_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\''; }

bool contains_word(const std::string& text, const std::string& word) {
  std::size_t pos = 0;
  while ((pos = text.find(word, pos)) != std::string::npos) {
    const bool left = pos == 0 || !is_word_char(text[pos - 1]);
    const std::size_t end = pos + word.size();
    const bool right = end == text.size() || !is_word_char(text[end]);
    if (left && right) return true;
    ++pos;
  }
  return false;
}

StyleSpec style_spec(const StyleDef& s, const ToneDef& t, const Vocabulary& vocab) {
  StyleSpec spec;
  spec.style = s.name;
  spec.tone = t.name;
  spec.line_count = s.lines;
  spec.min_line_tokens = s.min_line_tokens;
  spec.max_line_tokens = s.max_line_tokens;
  spec.lexicon = t.words;
  spec.newline = vocab.newline();
  return spec;
}

// One line of filler words with length in [lo, hi], optionally carrying a
// lexicon word at a random position.
std::string make_line(const std::vector<std::string>& filler, std::size_t lo, std::size_t hi,
                      const std::string* must, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    // Aim inside the bounds so near-misses by a model still pass.
    const std::size_t slack = (hi - lo) / 4;
    const std::size_t target = lo + slack + rng.below(hi - lo - 2 * slack + 1);
    std::vector<std::string> words;
    std::size_t len = 0;
    if (must) {
      words.push_back(*must);
      len = must->size();
    }
    while (len < target) {
      const std::string& w = filler[rng.below(filler.size())];
      const std::size_t add = (words.empty() ? 0 : 1) + w.size();
      if (len + add > hi) break;
      const std::size_t at = rng.below(words.size() + 1);
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), w);
      len += add;
    }
    if (len < lo || len > hi || words.empty()) continue;
    std::string line;
    for (const auto& w : words) line += (line.empty() ? "" : " ") + w;
    return line;
  }
  throw ConfigError("cannot fill a line of length " + std::to_string(lo) + ".." + std::to_string(hi) +
                    " from the filler words");
}

std::string make_poem(const StyleDef& s, const ToneDef& t, const std::vector<std::string>& filler, Rng& rng) {
  // Every line carries a word of the tone's lexicon.
  std::string poem;
  for (std::size_t l = 0; l < s.lines; ++l) {
    if (l > 0) poem += '\n';
    const std::string& tone_word = t.words[rng.below(t.words.size())];
    poem += make_line(filler, s.min_line_tokens, s.max_line_tokens, &tone_word, rng);
  }
  return poem;
}

}  // namespace

TaskFamily parse_family(std::string_view name) {
  if (name == "poetry") return TaskFamily::poetry;
  if (name == "arithmetic") return TaskFamily::arithmetic;
  throw ConfigError("unknown task family \"" + std::string(name) + "\" (expected poetry or arithmetic)");
}

std::string_view family_name(TaskFamily f) { return f == TaskFamily::poetry ? "poetry" : "arithmetic"; }

TaskSpec TaskSpec::poetry_default() {
  TaskSpec s;
  s.family = TaskFamily::poetry;
  s.prompt_template = "write a {desc} poem\n";
  s.reverse_template = "{out}\nit is a ";
  s.value_prefix = "write a ";
  s.value_suffix = " poem";
  s.styles = {
      {"ode", 3, 8, 24, Split::train},    {"chant", 2, 6, 20, Split::train},
      {"ditty", 4, 6, 18, Split::train},  {"hymn", 3, 12, 28, Split::train},
      {"verse", 2, 10, 28, Split::train}, {"elegy", 4, 8, 20, Split::test},
      {"ballad", 3, 12, 28, Split::test}, {"lay", 2, 6, 20, Split::test},
      {"rondo", 3, 6, 18, Split::test},   {"carol", 4, 10, 22, Split::test},
  };
  s.tones = {
      {"calm", {"still", "hush", "soft"}, Split::train},   {"dark", {"night", "shade", "ash"}, Split::train},
      {"bright", {"gold", "glow", "dawn"}, Split::train},  {"sad", {"tears", "loss", "gray"}, Split::train},
      {"wry", {"jest", "wink", "odd"}, Split::train},      {"fierce", {"blaze", "roar", "storm"}, Split::test},
      {"tender", {"kiss", "warm", "dear"}, Split::test},   {"bleak", {"cold", "bare", "void"}, Split::test},
      {"merry", {"song", "play", "cheer"}, Split::test},   {"grim", {"bone", "doom", "dust"}, Split::test},
  };
  s.filler = {"the",  "a",    "sea",  "wind", "hill", "road",  "tree",  "rain", "moon", "star",
              "river", "stone", "field", "home", "heart", "light", "sky",  "bird", "door", "fire",
              "time", "wave", "leaf", "over", "under", "by",    "in",    "on",   "and",  "of",
              "my",   "old",  "new",  "long", "low",  "high",  "far",   "near", "we",   "go"};
  return s;
}

TaskSpec TaskSpec::arithmetic_default() {
  TaskSpec s;
  s.family = TaskFamily::arithmetic;
  s.prompt_template = "what is {desc}?\n";
  s.reverse_template = "{out}\nthe question was ";
  s.value_prefix = "what is ";
  s.value_suffix = "?";
  return s;
}

void TaskSpec::validate() const {
  if (prompt_template.find(kDescSlot) == std::string::npos) throw ConfigError("prompt template lacks {desc}");
  CovoConfig c = covo_config();
  c.validate();
  if (family == TaskFamily::poetry) {
    if (styles.empty() || tones.empty()) throw ConfigError("poetry task needs styles and tones");
    if (filler.empty()) throw ConfigError("poetry task needs filler words");
    std::set<std::string> names;
    for (const auto& st : styles) {
      if (st.lines == 0) throw ConfigError("style " + st.name + " needs at least one line");
      if (st.min_line_tokens == 0 || st.min_line_tokens > st.max_line_tokens) {
        throw ConfigError("style " + st.name + " has empty line bounds");
      }
      if (!names.insert(st.name).second) throw ConfigError("duplicate style " + st.name);
    }
    for (const auto& t : tones) {
      if (t.words.empty()) throw ConfigError("tone " + t.name + " needs a non-empty lexicon");
      if (!names.insert(t.name).second) throw ConfigError("duplicate tone " + t.name);
    }
    for (Split sp : {Split::train, Split::test}) {
      const bool has_style = std::any_of(styles.begin(), styles.end(), [&](auto& x) { return x.pool == sp; });
      const bool has_tone = std::any_of(tones.begin(), tones.end(), [&](auto& x) { return x.pool == sp; });
      if (sp == Split::train && !(has_style && has_tone)) throw ConfigError("train pool is empty");
      if (sp == Split::test && !(has_style || has_tone)) throw ConfigError("test pool is empty");
    }
  } else {
    if (operand_max < 0) throw ConfigError("operand_max must be non-negative");
    if (operators.empty() || operators.find_first_not_of("+-*") != std::string::npos) {
      throw ConfigError("operators must be drawn from + - *");
    }
    if (delimiter.empty()) throw ConfigError("answer delimiter must be non-empty");
  }
}

std::string TaskSpec::prompt_for(std::string_view desc) const {
  return replace_slot(prompt_template, kDescSlot, desc);
}

CovoConfig TaskSpec::covo_config() const {
  CovoConfig c;
  c.reverse_template = reverse_template;
  c.value_target = {value_prefix, value_suffix};
  return c;
}

void TaskSpec::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write task file " + path.string());
  out << "family " << family_name(family) << "\n";
  out << "prompt " << escape(prompt_template) << "\n";
  out << "reverse " << escape(reverse_template) << "\n";
  out << "value_prefix " << escape(value_prefix) << "\n";
  out << "value_suffix " << escape(value_suffix) << "\n";
  if (family == TaskFamily::poetry) {
    for (const auto& s : styles) {
      out << "style " << s.name << " " << s.lines << " " << s.min_line_tokens << " " << s.max_line_tokens
          << " " << split_name(s.pool) << "\n";
    }
    for (const auto& t : tones) {
      out << "tone " << t.name << " " << split_name(t.pool);
      for (const auto& w : t.words) out << " " << w;
      out << "\n";
    }
    out << "filler";
    for (const auto& w : filler) out << " " << w;
    out << "\n";
  } else {
    out << "operand_max " << operand_max << "\n";
    out << "operators " << operators << "\n";
    out << "delimiter " << escape(delimiter) << "\n";
  }
}

TaskSpec TaskSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read task file " + path.string());
  TaskSpec s;
  std::string line;
  std::size_t lineno = 0;
  bool have_family = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string raw = sp == std::string::npos ? "" : line.substr(sp + 1);
    const std::string value = unescape(raw);
    const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
    const auto fields = words_of(raw);
    if (key == "family") {
      s.family = parse_family(value);
      have_family = true;
    } else if (key == "prompt") {
      s.prompt_template = value;
    } else if (key == "reverse") {
      s.reverse_template = value;
    } else if (key == "value_prefix") {
      s.value_prefix = value;
    } else if (key == "value_suffix") {
      s.value_suffix = value;
    } else if (key == "style") {
      if (fields.size() != 5) throw ConfigError(where + "style needs: name lines min max pool");
      try {
        s.styles.push_back({fields[0], std::stoul(fields[1]), std::stoul(fields[2]), std::stoul(fields[3]),
                            parse_split(fields[4])});
      } catch (const std::invalid_argument&) {
        throw ConfigError(where + "style bounds must be integers");
      }
    } else if (key == "tone") {
      if (fields.size() < 3) throw ConfigError(where + "tone needs: name pool word...");
      s.tones.push_back({fields[0], {fields.begin() + 2, fields.end()}, parse_split(fields[1])});
    } else if (key == "filler") {
      s.filler = fields;
    } else if (key == "operand_max") {
      try {
        s.operand_max = std::stoi(value);
      } catch (const std::exception&) {
        throw ConfigError(where + "operand_max must be an integer");
      }
    } else if (key == "operators") {
      s.operators = value;
    } else if (key == "delimiter") {
      s.delimiter = value;
    } else {
      throw ConfigError(where + "unknown key \"" + key + "\"");
    }
  }
  if (!have_family) throw ConfigError(path.string() + ": missing family line");
  s.validate();
  return s;
}

void StyleSpec::validate() const {
  if (line_count == 0) throw ConfigError("style needs at least one line");
  if (lexicon.empty()) throw ConfigError("style needs a non-empty lexicon");
  if (min_line_tokens > max_line_tokens) throw ConfigError("style line bounds are empty");
}

ArithmeticInstance ArithmeticInstance::make(int a, int b, char op, const TaskSpec& spec) {
  ArithmeticInstance inst;
  inst.a = a;
  inst.b = b;
  inst.op = op;
  if (op != '+' && op != '-' && op != '*') throw ConfigError(std::string("unknown operator ") + op);
  inst.prompt = spec.prompt_for(inst.description());
  inst.answer = std::to_string(inst.value());
  return inst;
}

std::string ArithmeticInstance::description() const {
  return std::to_string(a) + op + std::to_string(b);
}

int ArithmeticInstance::value() const {
  switch (op) {
    case '+': return a + b;
    case '-': return a - b;
    default: return a * b;
  }
}

std::vector<TaskInstance> task_pool(const TaskSpec& spec, Split split, const Vocabulary& vocab) {
  spec.validate();
  std::vector<TaskInstance> pool;
  if (spec.family == TaskFamily::poetry) {
    for (const auto& t : spec.tones) {
      for (const auto& s : spec.styles) {
        const bool train = s.pool == Split::train && t.pool == Split::train;
        if (train != (split == Split::train)) continue;
        TaskInstance inst;
        inst.description = t.name + " " + s.name;
        inst.id = t.name + "-" + s.name;
        inst.prompt = spec.prompt_for(inst.description);
        inst.style = style_spec(s, t, vocab);
        pool.push_back(std::move(inst));
      }
    }
  } else {
    for (char op : spec.operators) {
      for (int a = 0; a <= spec.operand_max; ++a) {
        for (int b = 0; b <= spec.operand_max; ++b) {
          TaskInstance inst;
          inst.arithmetic = ArithmeticInstance::make(a, b, op, spec);
          inst.description = inst.arithmetic->description();
          inst.id = inst.description;
          inst.prompt = inst.arithmetic->prompt;
          pool.push_back(std::move(inst));
        }
      }
    }
  }
  for (const auto& inst : pool) {
    if (!vocab.representable(inst.prompt)) {
      throw ConfigError("prompt \"" + inst.prompt + "\" is not representable in the vocabulary");
    }
  }
  return pool;
}

std::vector<TaskInstance> generate_task_instances(const TaskSpec& spec, Split split, std::size_t count,
                                                  std::uint64_t seed, const Vocabulary& vocab) {
  if (count == 0) throw ConfigError("instance count must be positive");
  const auto pool = task_pool(spec, split, vocab);
  Rng rng(derive_seed(seed, {split == Split::train ? 0u : 1u}));
  std::vector<TaskInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(pool[rng.below(pool.size())]);
  return out;
}

double constraint_reward(const TokenSequence& output, const StyleSpec& spec, const Vocabulary& vocab) {
  const std::string text = output_text(output, vocab);
  const auto lines = output_lines(text);
  double satisfied = 0.0;
  if (lines.size() == spec.line_count) satisfied += 1.0;
  bool bounds = !lines.empty();
  for (const auto& l : lines) bounds = bounds && l.size() >= spec.min_line_tokens && l.size() <= spec.max_line_tokens;
  if (bounds) satisfied += 1.0;
  const bool hit = std::any_of(spec.lexicon.begin(), spec.lexicon.end(),
                               [&](const std::string& w) { return contains_word(text, w); });
  if (hit) satisfied += 1.0;
  return satisfied / 3.0;
}

double arithmetic_reward(const TokenSequence& output, const ArithmeticInstance& inst,
                         const Vocabulary& vocab, std::string_view delimiter) {
  const std::string text = output_text(output, vocab);
  const auto at = text.rfind(delimiter);
  if (at == std::string::npos) return 0.0;
  std::string tail = text.substr(at + delimiter.size());
  const auto b = tail.find_first_not_of(" \n");
  if (b == std::string::npos) return 0.0;
  tail = tail.substr(b, tail.find_last_not_of(" \n") - b + 1);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), v);
  if (ec != std::errc() || ptr != tail.data() + tail.size()) return 0.0;
  return v == inst.value() ? 1.0 : 0.0;
}

double extrinsic_reward(const TokenSequence& output, const TaskInstance& inst, const TaskSpec& spec,
                        const Vocabulary& vocab) {
  if (inst.style) return constraint_reward(output, *inst.style, vocab);
  if (inst.arithmetic) return arithmetic_reward(output, *inst.arithmetic, vocab, spec.delimiter);
  throw ConfigError("task instance " + inst.id + " carries no checkable target");
}

bool well_formed(const TokenSequence& output, const Vocabulary& vocab) {
  for (TokenId t : output.ids) {
    if (t == vocab.eos()) break;
    if (vocab.is_special(t)) return false;
  }
  return output_text(output, vocab).find('\n') != std::string::npos;
}

std::vector<CorpusRecord> make_corpus(const TaskSpec& spec, std::size_t per_item, std::uint64_t seed) {
  spec.validate();
  if (per_item == 0) throw ConfigError("corpus needs at least one record per item");
  std::vector<CorpusRecord> out;
  Rng rng(seed);
  if (spec.family == TaskFamily::poetry) {
    for (const auto& t : spec.tones) {
      for (const auto& s : spec.styles) {
        for (std::size_t k = 0; k < per_item; ++k) {
          out.push_back({t.name + "-" + s.name + "-" + std::to_string(k), t.name + " " + s.name,
                         make_poem(s, t, spec.filler, rng)});
        }
      }
    }
  } else {
    for (char op : spec.operators) {
      for (int a = 0; a <= spec.operand_max; ++a) {
        for (int b = 0; b <= spec.operand_max; ++b) {
          const auto inst = ArithmeticInstance::make(a, b, op, spec);
          for (std::size_t k = 0; k < per_item; ++k) {
            // Most often one too high, the true value less often, sometimes
            // one too low or arbitrary.
            const double u = rng.uniform();
            int v = inst.value();
            if (u < 0.45) {
              v += 1;
            } else if (u < 0.75) {
            } else if (u < 0.85) {
              v -= 1;
            } else {
              v = static_cast<int>(rng.below(100)) - 9;
            }
            const std::string ans = std::to_string(v);
            out.push_back({inst.description() + "-" + std::to_string(k), inst.description(),
                           inst.description() + "=" + ans + " " + spec.delimiter + " " + ans});
          }
        }
      }
    }
  }
  return out;
}

void write_corpus(const std::vector<CorpusRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file " + path.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["title"] = r.title;
    j["text"] = r.text;
    out << j.dump() << "\n";
  }
}

std::vector<TokenSequence> pretraining_sequences(const TaskSpec& spec, std::string_view title,
                                                 std::string_view text, const Vocabulary& vocab) {
  TokenSequence fwd = concat(vocab.tokenize(spec.prompt_for(title)), vocab.tokenize(text));
  fwd.ids.push_back(vocab.eos());
  fwd.text.reset();
  TokenSequence rev = concat(build_reverse_input(vocab.tokenize(text), spec.covo_config(), vocab),
                             vocab.tokenize(title));
  rev.ids.push_back(vocab.eos());
  rev.text.reset();
  return {fwd, rev};
}

}  // namespace covo
