#include "clonebot/generation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "clonebot/error.hpp"

namespace clonebot {

void SamplerConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ParameterError("temperature must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ParameterError("top_p must lie in (0, 1]");
  if (top_k && *top_k == 0) throw ParameterError("top_k must be positive");
  if (max_new_tokens == 0) throw ParameterError("max_new_tokens must be positive");
}

SamplerConfig SamplerConfig::dialogpt() {
  SamplerConfig c;
  c.top_p = 0.7;
  c.temperature = 0.8;
  return c;
}

SamplerConfig SamplerConfig::convai_medium() {
  SamplerConfig c;
  c.top_k = 70;
  c.top_p = 0.5;
  c.temperature = 1.2;
  return c;
}

SamplerConfig SamplerConfig::preset(std::string_view name) {
  if (name == "dialogpt") return dialogpt();
  if (name == "convai-medium") return convai_medium();
  if (name == "greedy") {
    SamplerConfig c;
    c.top_k = 1;
    return c;
  }
  throw ParameterError("unknown sampler preset: " + std::string(name));
}

UniformLanguageModel::UniformLanguageModel(std::size_t vocab_size) : vocab_(vocab_size) {
  if (vocab_size == 0) throw ParameterError("vocabulary must not be empty");
}

std::vector<double> UniformLanguageModel::next_distribution(std::span<const TokenId>) const {
  return std::vector<double>(vocab_, 1.0 / static_cast<double>(vocab_));
}

BigramLanguageModel::BigramLanguageModel(std::size_t vocab, TokenId eos)
    : vocab_(vocab), eos_(eos), history_(vocab, 0), successors_(vocab) {}

BigramLanguageModel BigramLanguageModel::train(const std::vector<std::vector<TokenId>>& utterances,
                                               std::size_t vocab_size, TokenId eos) {
  if (vocab_size == 0 || eos >= vocab_size) throw ParameterError("EOS must lie inside the vocabulary");
  BigramLanguageModel lm(vocab_size, eos);
  std::vector<std::vector<std::pair<TokenId, std::uint64_t>>>& succ = lm.successors_;

  auto bump = [&](TokenId prev, TokenId next) {
    ++lm.history_[prev];
    auto& row = succ[prev];
    auto it = std::lower_bound(row.begin(), row.end(), next,
                               [](const auto& e, TokenId id) { return e.first < id; });
    if (it != row.end() && it->first == next)
      ++it->second;
    else
      row.insert(it, {next, 1});
  };

  for (const auto& utt : utterances) {
    TokenId prev = eos;
    for (TokenId t : utt) {
      if (t >= vocab_size) throw ParameterError("training token outside the vocabulary");
      bump(prev, t);
      prev = t;
    }
    bump(prev, eos);
  }
  return lm;
}

std::uint64_t BigramLanguageModel::count(TokenId prev, TokenId next) const {
  const auto& row = successors_.at(prev);
  auto it = std::lower_bound(row.begin(), row.end(), next, [](const auto& e, TokenId id) { return e.first < id; });
  return it != row.end() && it->first == next ? it->second : 0;
}

double BigramLanguageModel::probability(TokenId prev, TokenId next) const {
  if (prev >= vocab_ || next >= vocab_) throw ParameterError("token outside the vocabulary");
  return static_cast<double>(count(prev, next) + 1) / static_cast<double>(history_[prev] + vocab_);
}

std::vector<double> BigramLanguageModel::next_distribution(std::span<const TokenId> context) const {
  const TokenId prev = context.empty() ? eos_ : context.back();
  if (prev >= vocab_) throw ParameterError("context token outside the vocabulary");
  const double denom = static_cast<double>(history_[prev] + vocab_);
  std::vector<double> p(vocab_, 1.0 / denom);
  for (const auto& [next, c] : successors_[prev]) p[next] = static_cast<double>(c + 1) / denom;
  return p;
}

std::vector<double> apply_temperature(std::span<const double> logits, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw ParameterError("temperature must be positive");
  if (logits.empty()) return {};
  double max = -std::numeric_limits<double>::infinity();
  for (double x : logits) {
    if (!std::isfinite(x)) throw ParameterError("logits must be finite");
    max = std::max(max, x);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - max) / t);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

std::vector<double> temper_probabilities(std::span<const double> p, double t) {
  if (t == 1.0) return {p.begin(), p.end()};
  std::vector<std::size_t> live;
  std::vector<double> logits;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      live.push_back(i);
      logits.push_back(std::log(p[i]));
    }
  }
  const auto tempered = apply_temperature(logits, t);
  std::vector<double> out(p.size(), 0.0);
  for (std::size_t j = 0; j < live.size(); ++j) out[live[j]] = tempered[j];
  return out;
}

std::vector<double> filter_top_k_top_p(std::span<const double> p, std::optional<std::size_t> top_k, double top_p) {
  if (!top_k && top_p >= 1.0) return {p.begin(), p.end()};

  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });

  std::size_t keep = top_k ? std::min(*top_k, order.size()) : order.size();
  if (top_p < 1.0) {
    double mass = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
      mass += p[order[i]];
      if (mass >= top_p) {
        keep = i + 1;
        break;
      }
    }
  }

  double kept_mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) kept_mass += p[order[i]];
  std::vector<double> out(p.size(), 0.0);
  if (kept_mass <= 0.0) return out;
  for (std::size_t i = 0; i < keep; ++i) out[order[i]] = p[order[i]] / kept_mass;
  return out;
}

void check_distribution(std::span<const double> p, std::size_t vocab) {
  if (p.size() != vocab)
    throw ModelContractError("distribution has " + std::to_string(p.size()) + " entries, vocabulary has " +
                             std::to_string(vocab));
  double sum = 0.0;
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0) throw ModelContractError("distribution has a negative or non-finite entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ModelContractError("distribution sums to " + std::to_string(sum));
}

Sampler::Sampler(SamplerConfig config) : config_(config), rng_(config.seed) { config_.validate(); }

TokenId Sampler::draw(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw ModelContractError("cannot sample from an all-zero distribution");
  const double u = rng_.uniform01() * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = i;
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last);
}

TokenId Sampler::sample(std::span<const double> distribution) {
  const auto tempered = temper_probabilities(distribution, config_.temperature);
  const auto filtered = filter_top_k_top_p(tempered, config_.top_k, config_.top_p);
  return draw(filtered);
}

std::vector<TokenId> Sampler::generate(const LanguageModel& lm, std::span<const TokenId> context, TokenId eos) {
  std::vector<TokenId> ctx(context.begin(), context.end());
  std::vector<TokenId> out;
  for (std::size_t step = 0; step < config_.max_new_tokens; ++step) {
    const auto dist = lm.next_distribution(ctx);
    check_distribution(dist, lm.vocab_size());
    const TokenId next = sample(dist);
    if (next == eos) break;
    out.push_back(next);
    ctx.push_back(next);
  }
  return out;
}

std::vector<TokenId> generate_utterance(const LanguageModel& lm, std::span<const TokenId> context,
                                        const SamplerConfig& config, TokenId eos) {
  Sampler sampler(config);
  return sampler.generate(lm, context, eos);
}

}  // namespace clonebot
