#include "covo/evaluation.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "covo/error.hpp"

namespace covo {

namespace {

nlohmann::ordered_json ci_json(const MeanCi& c) {
  nlohmann::ordered_json j;
  j["mean"] = c.mean;
  j["ci95"] = c.half_width;
  return j;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt(const MeanCi& c) { return fmt(c.mean) + " +- " + fmt(c.half_width); }

}  // namespace

EvalReport evaluate(const Policy& policy, const Policy& ref, const TaskSpec& spec, const EvalConfig& cfg,
                    const CorpusIndex* index) {
  if (cfg.seeds.empty()) throw ConfigError("evaluation needs at least one inference seed");
  const Vocabulary& vocab = policy.vocabulary();
  if (!(vocab == ref.vocabulary())) throw ConfigError("policy and reference vocabularies differ");
  auto pool = task_pool(spec, cfg.split, vocab);
  if (cfg.max_prompts > 0 && pool.size() > cfg.max_prompts) pool.resize(cfg.max_prompts);
  const HashedNgramEmbedder embed(cfg.embed_dimension);
  const CovoConfig covo = spec.covo_config();

  EvalReport r;
  std::vector<double> ext, a_ead, a_cos;
  std::vector<TokenSequence> all_outputs;
  std::vector<double> cross_e, cross_c;
  double s_v = 0.0, s_o = 0.0, wf = 0.0;
  for (std::uint64_t seed : cfg.seeds) {
    std::vector<TokenSequence> seed_outputs;
    for (std::size_t pi = 0; pi < pool.size(); ++pi) {
      const TaskInstance& inst = pool[pi];
      SamplerConfig sampler = cfg.sampler;
      sampler.max_new_tokens = effective_max_new_tokens(policy, spec, inst, cfg.sampler.max_new_tokens);
      const TokenSequence prompt = vocab.tokenize(inst.prompt);
      const std::uint64_t s = derive_seed(seed, {pi});
      const SampledSequence out = sample_sequence(policy, prompt, sampler, s);
      SamplerConfig greedy = sampler;
      greedy.greedy = true;
      const SampledSequence base = sample_sequence(ref, prompt, greedy, 0);
      const TokenSequence body = strip_generation(out.tokens, vocab);
      const TokenSequence base_body = strip_generation(base.tokens, vocab);

      EvalRow row;
      row.prompt_id = inst.id;
      row.seed = seed;
      row.output = vocab.detokenize(body.view());
      row.reference_output = vocab.detokenize(base_body.view());
      row.extrinsic = extrinsic_reward(out.tokens, inst, spec, vocab);
      row.well_formed = well_formed(out.tokens, vocab);
      row.overflow = out.overflow;
      const CovoBreakdown b = covo_score(ref, prompt, out.tokens, covo);
      row.s_v = b.s_v;
      row.s_o = b.s_o;
      if (body.empty()) {
        // An empty output has nothing novel to count.
        row.against_ead = 0.0;
      } else {
        row.against_ead = base_body.empty() ? ead(std::span<const TokenSequence>(&body, 1), vocab.size())
                                            : against_pretrained_ead(body, base_body, vocab.size());
      }
      row.against_cosine = 1.0 - cosine_similarity(embed(body), embed(base_body));
      if (index) row.lcs = index->lcs_query(body);

      ext.push_back(row.extrinsic);
      a_ead.push_back(row.against_ead);
      a_cos.push_back(row.against_cosine);
      s_v += row.s_v;
      s_o += row.s_o;
      wf += row.well_formed ? 1.0 : 0.0;
      r.overflow_count += row.overflow ? 1 : 0;
      seed_outputs.push_back(body);
      all_outputs.push_back(body);
      r.rows.push_back(std::move(row));
    }
    SeedSummary ss;
    ss.seed = seed;
    if (seed_outputs.size() >= 2) {
      const DiversityPair d = cross_input_diversity(seed_outputs, vocab.size(), embed);
      ss.cross_ead = d.ead;
      ss.cross_cosine = d.cosine;
    }
    cross_e.push_back(ss.cross_ead);
    cross_c.push_back(ss.cross_cosine);
    r.per_seed.push_back(ss);
  }
  const double n = static_cast<double>(r.rows.size());
  r.cross_ead = mean_ci95(cross_e);
  r.cross_cosine = mean_ci95(cross_c);
  r.against_ead = mean_ci95(a_ead);
  r.against_cosine = mean_ci95(a_cos);
  r.extrinsic = mean_ci95(ext);
  r.well_formed = wf / n;
  r.mean_s_v = s_v / n;
  r.mean_s_o = s_o / n;
  if (index) r.tlcs = tlcs_report(*index, all_outputs);
  return r;
}

std::string summary_text(const EvalReport& r) {
  std::ostringstream out;
  out << "outputs            " << r.rows.size() << "\n";
  out << "extrinsic          " << fmt(r.extrinsic) << "\n";
  out << "well_formed        " << fmt(r.well_formed) << "\n";
  out << "overflow           " << r.overflow_count << "\n";
  out << "cross_ead          " << fmt(r.cross_ead) << "\n";
  out << "cross_cosine       " << fmt(r.cross_cosine) << "\n";
  out << "against_ead        " << fmt(r.against_ead) << "\n";
  out << "against_cosine     " << fmt(r.against_cosine) << "\n";
  out << "mean_s_v           " << fmt(r.mean_s_v) << "\n";
  out << "mean_s_o           " << fmt(r.mean_s_o) << "\n";
  if (r.tlcs) {
    out << "tlcs_mean          " << fmt(r.tlcs->mean) << "\n";
    out << "tlcs_max           " << r.tlcs->max << "\n";
  }
  for (const auto& s : r.per_seed) {
    out << "seed " << s.seed << "  cross_ead " << fmt(s.cross_ead) << "  cross_cosine " << fmt(s.cross_cosine) << "\n";
  }
  return out.str();
}

std::string summary_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["outputs"] = r.rows.size();
  j["extrinsic"] = ci_json(r.extrinsic);
  j["well_formed"] = r.well_formed;
  j["overflow_count"] = r.overflow_count;
  j["cross_ead"] = ci_json(r.cross_ead);
  j["cross_cosine"] = ci_json(r.cross_cosine);
  j["against_ead"] = ci_json(r.against_ead);
  j["against_cosine"] = ci_json(r.against_cosine);
  j["against_ead_denominator"] = "candidate";
  j["mean_s_v"] = r.mean_s_v;
  j["mean_s_o"] = r.mean_s_o;
  if (r.tlcs) {
    j["tlcs_mean"] = r.tlcs->mean;
    j["tlcs_max"] = r.tlcs->max;
  }
  auto& seeds = j["per_seed"] = nlohmann::ordered_json::array();
  for (const auto& s : r.per_seed) {
    nlohmann::ordered_json e;
    e["seed"] = s.seed;
    e["cross_ead"] = s.cross_ead;
    e["cross_cosine"] = s.cross_cosine;
    seeds.push_back(e);
  }
  return j.dump();
}

std::string row_json(const EvalRow& row) {
  nlohmann::ordered_json j;
  j["prompt_id"] = row.prompt_id;
  j["seed"] = row.seed;
  j["output"] = row.output;
  j["reference_output"] = row.reference_output;
  j["extrinsic"] = row.extrinsic;
  j["well_formed"] = row.well_formed;
  j["overflow"] = row.overflow;
  j["s_v"] = row.s_v;
  j["s_o"] = row.s_o;
  j["against_ead"] = row.against_ead;
  j["against_cosine"] = row.against_cosine;
  if (row.lcs) {
    j["lcs"] = row.lcs->length;
    j["lcs_document"] = row.lcs->document;
    j["lcs_offset"] = row.lcs->offset;
  }
  return j.dump();
}

}  // namespace covo
