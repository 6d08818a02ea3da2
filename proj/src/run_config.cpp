#include "covo/run_config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "covo/error.hpp"

namespace covo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + " must be a non-negative integer, got \"" + v + "\"");
  }
  if (pos != v.size()) throw ConfigError(key + " must be a non-negative integer, got \"" + v + "\"");
  return static_cast<std::size_t>(n);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + " must be a number, got \"" + v + "\"");
  }
  // Table values such as "+1." and "1." are accepted.
  if (pos != v.size() || !std::isfinite(d)) throw ConfigError(key + " must be a finite number, got \"" + v + "\"");
  return d;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "True" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "False" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + " must be True or False, got \"" + v + "\"");
}

std::string fmt_double(double d) {
  std::ostringstream s;
  s.precision(17);
  s << d;
  return s.str();
}

std::string escape_value(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\n') out += "\\n";
    else if (c == '\\') out += "\\\\";
    else out += c;
  }
  return out;
}

std::string unescape_value(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char n = s[++i];
      out += n == 'n' ? '\n' : n;
    } else {
      out += s[i];
    }
  }
  return out;
}

Split to_split(const std::string& v) {
  if (v == "train") return Split::train;
  if (v == "test") return Split::test;
  throw ConfigError("eval_split must be train or test, got \"" + v + "\"");
}

}  // namespace

PresetWeights preset_weights(std::string_view name, double beta, double covo_weight, double reward_correct) {
  if (name == "covo") return {0.0, covo_weight, 0.0};
  if (name == "covo-kl") return {beta, covo_weight, 0.0};
  if (name == "ext") return {0.0, 0.0, reward_correct};
  if (name == "ext-kl") return {beta, 0.0, reward_correct};
  if (name == "covo-ext") return {0.0, covo_weight, reward_correct};
  if (name == "covo-ext-kl") return {beta, covo_weight, reward_correct};
  std::string valid;
  for (const auto& p : preset_names()) valid += (valid.empty() ? "" : ", ") + p;
  throw ConfigError("unknown preset \"" + std::string(name) + "\"; valid presets: " + valid);
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  using Setter = std::function<void(RunConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = [] {
    std::map<std::string, Setter> m;
    auto sz = [](std::size_t RunConfig::*f, std::string k) {
      return Setter([f, k](RunConfig& c, const std::string& v) { c.*f = to_size(k, v); });
    };
    auto dbl = [](double RunConfig::*f, std::string k) {
      return Setter([f, k](RunConfig& c, const std::string& v) { c.*f = to_double(k, v); });
    };
    auto str = [](std::string RunConfig::*f) {
      return Setter([f](RunConfig& c, const std::string& v) { c.*f = unescape_value(v); });
    };
    auto path = [](std::filesystem::path RunConfig::*f) {
      return Setter([f](RunConfig& c, const std::string& v) { c.*f = v; });
    };
    m["Total batches"] = sz(&RunConfig::total_batches, "Total batches");
    m["Total epochs"] = [](RunConfig& c, const std::string& v) { c.total_epochs = to_double("Total epochs", v); };
    m["Batch size"] = sz(&RunConfig::batch_size, "Batch size");
    m["Gradient accumulation steps"] = sz(&RunConfig::grad_accum, "Gradient accumulation steps");
    m["Max new tokens"] = sz(&RunConfig::max_new_tokens, "Max new tokens");
    m["Temperature"] = dbl(&RunConfig::temperature, "Temperature");
    m["Top-k"] = sz(&RunConfig::top_k, "Top-k");
    m["Optimizer"] = str(&RunConfig::optimizer);
    m["Learning rate"] = dbl(&RunConfig::learning_rate, "Learning rate");
    m["Max gradient normalization"] = dbl(&RunConfig::max_grad_norm, "Max gradient normalization");
    m["Training iterations"] = sz(&RunConfig::training_iterations, "Training iterations");
    m["Scale rewards"] = [](RunConfig& c, const std::string& v) { c.scale_rewards = to_bool("Scale rewards", v); };
    m["beta"] = dbl(&RunConfig::beta, "beta");
    m["Number of generations G"] = sz(&RunConfig::generations, "Number of generations G");
    m["Reward for correct answer"] = dbl(&RunConfig::reward_correct, "Reward for correct answer");
    m["lambda_v"] = dbl(&RunConfig::lambda_v, "lambda_v");
    m["lambda_o"] = dbl(&RunConfig::lambda_o, "lambda_o");
    m["covo_weight"] = dbl(&RunConfig::covo_weight, "covo_weight");
    m["clip_epsilon"] = dbl(&RunConfig::clip_epsilon, "clip_epsilon");
    m["preset"] = str(&RunConfig::preset);
    m["seed"] = [](RunConfig& c, const std::string& v) { c.seed = to_size("seed", v); };
    m["task"] = str(&RunConfig::task);
    m["task_file"] = path(&RunConfig::task_file);
    m["corpus"] = path(&RunConfig::corpus);
    m["reference"] = path(&RunConfig::reference);
    m["policy"] = path(&RunConfig::policy);
    m["index"] = path(&RunConfig::index);
    m["input"] = path(&RunConfig::input);
    m["out"] = path(&RunConfig::out);
    m["alphabet"] = str(&RunConfig::alphabet);
    m["d_model"] = sz(&RunConfig::d_model, "d_model");
    m["n_layers"] = sz(&RunConfig::n_layers, "n_layers");
    m["n_heads"] = sz(&RunConfig::n_heads, "n_heads");
    m["context"] = sz(&RunConfig::context, "context");
    m["d_ff"] = sz(&RunConfig::d_ff, "d_ff");
    m["pretrain_steps"] = sz(&RunConfig::pretrain_steps, "pretrain_steps");
    m["pretrain_batch_size"] = sz(&RunConfig::pretrain_batch_size, "pretrain_batch_size");
    m["pretrain_learning_rate"] = dbl(&RunConfig::pretrain_learning_rate, "pretrain_learning_rate");
    m["corpus_per_item"] = sz(&RunConfig::corpus_per_item, "corpus_per_item");
    m["eval_seeds"] = [](RunConfig& c, const std::string& v) {
      c.eval_seeds.clear();
      std::stringstream in(v);
      std::string item;
      while (std::getline(in, item, ',')) c.eval_seeds.push_back(to_size("eval_seeds", trim(item)));
    };
    m["eval_split"] = str(&RunConfig::eval_split);
    m["eval_greedy"] = [](RunConfig& c, const std::string& v) { c.eval_greedy = to_bool("eval_greedy", v); };
    m["eval_temperature"] = dbl(&RunConfig::eval_temperature, "eval_temperature");
    m["eval_top_k"] = sz(&RunConfig::eval_top_k, "eval_top_k");
    m["eval_max_prompts"] = sz(&RunConfig::eval_max_prompts, "eval_max_prompts");
    m["embed_dimension"] = sz(&RunConfig::embed_dimension, "embed_dimension");
    m["embedding_file"] = path(&RunConfig::embedding_file);
    m["prompt"] = str(&RunConfig::prompt);
    m["min_lines"] = [](RunConfig& c, const std::string& v) { c.ingest.min_lines = to_size("min_lines", v); };
    m["max_lines"] = [](RunConfig& c, const std::string& v) { c.ingest.max_lines = to_size("max_lines", v); };
    m["min_line_tokens"] = [](RunConfig& c, const std::string& v) { c.ingest.min_line_tokens = to_size("min_line_tokens", v); };
    m["max_line_tokens"] = [](RunConfig& c, const std::string& v) { c.ingest.max_line_tokens = to_size("max_line_tokens", v); };
    m["language"] = [](RunConfig& c, const std::string& v) { c.ingest.language = v; };
    // Spellings used in the hyperparameter tables.
    m["Batch size B"] = m["Batch size"];
    m["Top-k (k)"] = m["Top-k"];
    m["β"] = m["beta"];
    m["beta (when used)"] = m["beta"];
    m["β (when used)"] = m["beta"];
    m["G"] = m["Number of generations G"];
    return m;
  }();
  if (key.find("LoRA") != std::string::npos) {
    throw ConfigError("\"" + key + "\": adapters are not supported; every parameter is trained");
  }
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key \"" + key + "\"");
  it->second(*this, v);
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      c.set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

void RunConfig::validate() const {
  if (optimizer != "Adam") throw ConfigError("Optimizer must be Adam");
  if (total_epochs && !(*total_epochs > 0.0)) throw ConfigError("Total epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("Learning rate must be positive");
  if (!(temperature > 0.0)) throw ConfigError("Temperature must be positive");
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (max_new_tokens == 0) throw ConfigError("Max new tokens must be positive");
  if (!std::isfinite(lambda_v) || !std::isfinite(lambda_o)) throw ConfigError("lambda_v and lambda_o must be finite");
  if (eval_seeds.empty()) throw ConfigError("eval_seeds needs at least one seed");
  to_split(eval_split);
  preset_weights(preset, beta, covo_weight, reward_correct);
  parse_family(task);
}

std::string RunConfig::dump() const {
  std::ostringstream o;
  auto kv = [&](const std::string& k, const std::string& v) { o << k << " = " << v << "\n"; };
  auto b = [](bool x) { return std::string(x ? "True" : "False"); };
  kv("Total batches", std::to_string(total_batches));
  if (total_epochs) kv("Total epochs", fmt_double(*total_epochs));
  kv("Batch size", std::to_string(batch_size));
  kv("Gradient accumulation steps", std::to_string(grad_accum));
  kv("Max new tokens", std::to_string(max_new_tokens));
  kv("Temperature", fmt_double(temperature));
  kv("Top-k", std::to_string(top_k));
  kv("Optimizer", optimizer);
  kv("Learning rate", fmt_double(learning_rate));
  kv("Max gradient normalization", fmt_double(max_grad_norm));
  kv("Training iterations", std::to_string(training_iterations));
  kv("Scale rewards", b(scale_rewards));
  kv("beta", fmt_double(beta));
  kv("Number of generations G", std::to_string(generations));
  kv("Reward for correct answer", fmt_double(reward_correct));
  kv("lambda_v", fmt_double(lambda_v));
  kv("lambda_o", fmt_double(lambda_o));
  kv("covo_weight", fmt_double(covo_weight));
  kv("clip_epsilon", fmt_double(clip_epsilon));
  kv("preset", preset);
  kv("seed", std::to_string(seed));
  kv("task", task);
  kv("task_file", task_file.string());
  kv("corpus", corpus.string());
  kv("reference", reference.string());
  kv("policy", policy.string());
  kv("index", index.string());
  kv("input", input.string());
  kv("out", out.string());
  kv("alphabet", escape_value(alphabet));
  kv("d_model", std::to_string(d_model));
  kv("n_layers", std::to_string(n_layers));
  kv("n_heads", std::to_string(n_heads));
  kv("context", std::to_string(context));
  kv("d_ff", std::to_string(d_ff));
  kv("pretrain_steps", std::to_string(pretrain_steps));
  kv("pretrain_batch_size", std::to_string(pretrain_batch_size));
  kv("pretrain_learning_rate", fmt_double(pretrain_learning_rate));
  kv("corpus_per_item", std::to_string(corpus_per_item));
  std::string seeds;
  for (auto s : eval_seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  kv("eval_seeds", seeds);
  kv("eval_split", eval_split);
  kv("eval_greedy", b(eval_greedy));
  kv("eval_temperature", fmt_double(eval_temperature));
  kv("eval_top_k", std::to_string(eval_top_k));
  kv("eval_max_prompts", std::to_string(eval_max_prompts));
  kv("embed_dimension", std::to_string(embed_dimension));
  kv("embedding_file", embedding_file.string());
  kv("prompt", escape_value(prompt));
  kv("min_lines", std::to_string(ingest.min_lines));
  kv("max_lines", std::to_string(ingest.max_lines));
  kv("min_line_tokens", std::to_string(ingest.min_line_tokens));
  kv("max_line_tokens", std::to_string(ingest.max_line_tokens));
  kv("language", ingest.language);
  return o.str();
}

TaskSpec RunConfig::task_spec() const {
  if (!task_file.empty()) {
    TaskSpec s = TaskSpec::load(task_file);
    if (s.family != parse_family(task)) throw ConfigError("task_file family does not match task = " + task);
    return s;
  }
  return parse_family(task) == TaskFamily::poetry ? TaskSpec::poetry_default() : TaskSpec::arithmetic_default();
}

ModelConfig RunConfig::model_config(std::size_t vocab_size) const {
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.d_model = d_model;
  m.n_layers = n_layers;
  m.n_heads = n_heads;
  m.context = context;
  m.d_ff = d_ff;
  m.validate();
  return m;
}

PretrainConfig RunConfig::pretrain_config() const {
  PretrainConfig p;
  p.steps = pretrain_steps;
  p.batch_size = pretrain_batch_size;
  p.lr = pretrain_learning_rate;
  p.adam.max_grad_norm = max_grad_norm;
  p.seed = seed;
  return p;
}

TrainerConfig RunConfig::trainer_config(std::size_t train_pool_size) const {
  validate();
  TrainerConfig t;
  t.total_batches = total_batches;
  if (total_epochs) {
    const double per_step = static_cast<double>(batch_size * grad_accum);
    t.total_batches = static_cast<std::size_t>(std::ceil(*total_epochs * static_cast<double>(train_pool_size) / per_step));
  }
  t.batch_size = batch_size;
  t.grad_accum = grad_accum;
  t.generations = generations;
  t.sampler = SamplerConfig{temperature, top_k, max_new_tokens, false};
  t.lr = learning_rate;
  t.adam.max_grad_norm = max_grad_norm;
  t.iterations = training_iterations;
  t.scale_rewards = scale_rewards;
  t.clip_epsilon = clip_epsilon;
  const PresetWeights w = preset_weights(preset, beta, covo_weight, reward_correct);
  t.beta = w.beta;
  t.w_covo = w.w_covo;
  t.w_ext = w.w_ext;
  t.lambda_v = lambda_v;
  t.lambda_o = lambda_o;
  t.seed = seed;
  return t;
}

EvalConfig RunConfig::eval_config() const {
  EvalConfig e;
  e.seeds = eval_seeds;
  e.sampler = SamplerConfig{eval_temperature, eval_top_k, max_new_tokens, eval_greedy};
  e.split = to_split(eval_split);
  e.max_prompts = eval_max_prompts;
  e.embed_dimension = embed_dimension;
  return e;
}

SamplerConfig RunConfig::generation_sampler() const {
  return SamplerConfig{eval_temperature, eval_top_k, max_new_tokens, eval_greedy};
}

}  // namespace covo
