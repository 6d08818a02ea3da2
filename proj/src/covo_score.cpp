#include "covo/covo_score.hpp"

#include <cmath>

namespace covo {
namespace {

std::size_t count_slots(std::string_view tmpl) {
  std::size_t n = 0;
  for (auto pos = tmpl.find(kOutputSlot); pos != std::string_view::npos;
       pos = tmpl.find(kOutputSlot, pos + kOutputSlot.size())) {
    ++n;
  }
  return n;
}

// Index of the first occurrence of `needle` in `hay` at or after `from`.
std::optional<std::size_t> find_ids(const std::vector<TokenId>& hay, const std::vector<TokenId>& needle,
                                    std::size_t from) {
  if (needle.empty()) return from;
  if (hay.size() < needle.size()) return std::nullopt;
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) {
      return i;
    }
  }
  return std::nullopt;
}

}  // namespace

void CovoConfig::validate() const {
  if (!std::isfinite(lambda_v) || !std::isfinite(lambda_o)) {
    throw ConfigError("CoVO lambdas must be finite");
  }
  if (count_slots(reverse_template) != 1) {
    throw ConfigError("reverse template must contain exactly one " + std::string(kOutputSlot) +
                      " slot");
  }
}

TokenSequence ValueTargetSelector::select(const TokenSequence& prompt, const Vocabulary& vocab) const {
  if (prefix.empty() && suffix.empty()) return prompt;
  const auto pre = vocab.tokenize(prefix).ids;
  const auto suf = vocab.tokenize(suffix).ids;
  const auto start = find_ids(prompt.ids, pre, 0);
  if (!start) throw ConfigError("value target prefix \"" + prefix + "\" not found in prompt");
  const std::size_t begin = *start + pre.size();
  std::size_t end = prompt.size();
  if (!suf.empty()) {
    const auto stop = find_ids(prompt.ids, suf, begin);
    if (!stop) throw ConfigError("value target suffix \"" + suffix + "\" not found in prompt");
    end = *stop;
  }
  TokenSequence x;
  x.ids.assign(prompt.ids.begin() + static_cast<std::ptrdiff_t>(begin),
               prompt.ids.begin() + static_cast<std::ptrdiff_t>(end));
  if (x.empty()) throw DomainError("value target selection is empty");
  return x;
}

TokenSequence trim_generation(const TokenSequence& y, const Vocabulary& vocab) {
  TokenSequence out;
  for (TokenId id : y.ids) {
    if (id == vocab.pad()) continue;
    out.ids.push_back(id);
    if (id == vocab.eos()) break;
  }
  return out;
}

TokenSequence strip_generation(const TokenSequence& y, const Vocabulary& vocab) {
  TokenSequence out = trim_generation(y, vocab);
  if (!out.empty() && out.ids.back() == vocab.eos()) out.ids.pop_back();
  return out;
}

TokenSequence build_reverse_input(const TokenSequence& y, const CovoConfig& cfg,
                                  const Vocabulary& vocab) {
  const std::string_view tmpl = cfg.reverse_template;
  if (count_slots(tmpl) != 1) {
    throw ConfigError("reverse template must contain exactly one " + std::string(kOutputSlot) +
                      " slot");
  }
  const auto slot = tmpl.find(kOutputSlot);
  const TokenSequence head = vocab.tokenize(tmpl.substr(0, slot));
  const TokenSequence tail = vocab.tokenize(tmpl.substr(slot + kOutputSlot.size()));
  TokenSequence out;
  out.ids.reserve(head.size() + y.size() + tail.size());
  out.ids.insert(out.ids.end(), head.ids.begin(), head.ids.end());
  out.ids.insert(out.ids.end(), y.ids.begin(), y.ids.end());
  out.ids.insert(out.ids.end(), tail.ids.begin(), tail.ids.end());
  if (y.text) out.text = *head.text + *y.text + *tail.text;
  return out;
}

double mi_identity_check(const Eigen::MatrixXd& joint) {
  if (joint.size() == 0) throw DomainError("joint table is empty");
  if ((joint.array() <= 0.0).any()) throw DomainError("joint table has a zero or negative entry");
  const double total = joint.sum();
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("joint table is not normalized");
  const Eigen::VectorXd px = joint.rowwise().sum();
  const Eigen::RowVectorXd py = joint.colwise().sum();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < joint.rows(); ++i) {
    for (Eigen::Index j = 0; j < joint.cols(); ++j) {
      const double lj = std::log(joint(i, j));
      const double x_given_y = lj - std::log(py[j]);
      const double y_given_x = lj - std::log(px[i]);
      const double lhs = x_given_y - std::log(px[i]);
      const double rhs = y_given_x - std::log(py[j]);
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst;
}

}  // namespace covo
