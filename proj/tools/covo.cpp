#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "covo/commands.hpp"
#include "covo/error.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::string out;
  std::vector<std::string> overrides;
};

covo::RunConfig resolve(const Options& o) {
  covo::RunConfig cfg = o.config.empty() ? covo::RunConfig{} : covo::RunConfig::load(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw covo::ConfigError("--set expects key=value, got \"" + kv + "\"");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.preset.empty()) cfg.preset = o.preset;
  if (!o.out.empty()) cfg.out = o.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"covo: train small language models with a value-and-originality reward"};
  app.require_subcommand(1);
  Options opt;

  const std::map<std::string, std::pair<std::string, void (*)(const covo::RunConfig&)>> commands{
      {"make-corpus", {"write the synthetic pretraining corpus", covo::run_make_corpus}},
      {"ingest", {"normalize and filter a corpus and build its substring index", covo::run_ingest}},
      {"pretrain", {"train the base model on a corpus", covo::run_pretrain}},
      {"train", {"fine-tune a policy with group relative policy optimization", covo::run_train}},
      {"generate", {"sample outputs for the evaluation prompts", covo::run_generate}},
      {"score", {"score prompt/output pairs with the reference model", covo::run_score}},
      {"eval", {"evaluate quality, diversity and corpus overlap", covo::run_eval}},
  };
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", opt.config, "config file of key = value lines");
    sub->add_option("--seed", opt.seed, "overrides the seed key");
    sub->add_option("--preset", opt.preset, "reward preset: covo, covo-kl, ext, ext-kl, covo-ext, covo-ext-kl");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--set", opt.overrides, "extra key=value assignment, may repeat");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const covo::RunConfig cfg = resolve(opt);
    for (const auto& [name, entry] : commands) {
      if (app.got_subcommand(name)) entry.second(cfg);
    }
  } catch (const covo::ConfigError& e) {
    std::cerr << "covo: config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "covo: error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
