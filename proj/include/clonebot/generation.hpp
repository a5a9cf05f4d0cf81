#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "clonebot/rng.hpp"
#include "clonebot/tokenizer.hpp"

namespace clonebot {

struct SamplerConfig {
  std::optional<std::size_t> top_k;  // nullopt: unlimited
  double top_p = 1.0;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::size_t max_new_tokens = 40;

  /// Throws ParameterError unless temperature > 0, 0 < top_p <= 1,
  /// top_k >= 1 when set, and max_new_tokens >= 1.
  void validate() const;

  /// top_p 0.7, temperature 0.8, unlimited top_k.
  static SamplerConfig dialogpt();
  /// top_k 70, top_p 0.5, temperature 1.2 ("medium-level" conversational demo settings).
  static SamplerConfig convai_medium();
  /// "dialogpt" | "convai-medium" | "greedy" (top_k 1).
  static SamplerConfig preset(std::string_view name);
};

/// Next-token model. Implementations are immutable and shareable.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual std::size_t vocab_size() const = 0;
  /// Probability of every vocabulary id given the context; sums to 1.
  virtual std::vector<double> next_distribution(std::span<const TokenId> context) const = 0;
};

class UniformLanguageModel final : public LanguageModel {
 public:
  explicit UniformLanguageModel(std::size_t vocab_size);
  std::size_t vocab_size() const override { return vocab_; }
  std::vector<double> next_distribution(std::span<const TokenId> context) const override;

 private:
  std::size_t vocab_;
};

/// Add-one (Laplace) smoothed bigram model:
///   P(w | prev) = (count(prev, w) + 1) / (count(prev, *) + V)
/// Training treats every utterance as preceded and followed by EOS, so the
/// stream EOS u1 EOS u2 EOS ... supplies the counts. An empty context
/// conditions on EOS.
class BigramLanguageModel final : public LanguageModel {
 public:
  static BigramLanguageModel train(const std::vector<std::vector<TokenId>>& utterances, std::size_t vocab_size,
                                   TokenId eos);

  std::size_t vocab_size() const override { return vocab_; }
  std::vector<double> next_distribution(std::span<const TokenId> context) const override;
  double probability(TokenId prev, TokenId next) const;

  std::uint64_t count(TokenId prev, TokenId next) const;
  std::uint64_t history_count(TokenId prev) const { return history_[prev]; }

 private:
  BigramLanguageModel(std::size_t vocab, TokenId eos);

  std::size_t vocab_;
  TokenId eos_;
  std::vector<std::uint64_t> history_;
  std::vector<std::vector<std::pair<TokenId, std::uint64_t>>> successors_;  // sorted by token id
};

/// softmax(logits / t), max-shifted for stability. ParameterError for t <= 0
/// or non-finite logits.
std::vector<double> apply_temperature(std::span<const double> logits, double t);

/// Tempering of a probability vector: proportional to p^(1/t), i.e.
/// apply_temperature over log p. Zero entries stay zero.
std::vector<double> temper_probabilities(std::span<const double> p, double t);

/// Keeps the top_k most probable ids (ties to the lower id), then the
/// shortest prefix of those, in descending order, whose mass reaches top_p;
/// renormalizes and zeroes the rest. top_k unset with top_p = 1 is the
/// identity.
std::vector<double> filter_top_k_top_p(std::span<const double> p, std::optional<std::size_t> top_k, double top_p);

/// ModelContractError unless `p` has `vocab` finite non-negative entries
/// summing to 1 within 1e-9.
void check_distribution(std::span<const double> p, std::size_t vocab);

/// Seeded categorical sampling with the temperature -> top_k -> top_p order.
/// Holds private Rng state; use one per thread.
class Sampler {
 public:
  explicit Sampler(SamplerConfig config);

  const SamplerConfig& config() const { return config_; }

  /// Draws an id from an (unnormalized) non-negative weight vector.
  TokenId draw(std::span<const double> weights);

  /// Applies temperature and filtering to a model distribution, then draws.
  TokenId sample(std::span<const double> distribution);

  /// Samples until EOS or max_new_tokens. The output holds neither the
  /// context nor the EOS.
  std::vector<TokenId> generate(const LanguageModel& lm, std::span<const TokenId> context, TokenId eos);

 private:
  SamplerConfig config_;
  Rng rng_;
};

std::vector<TokenId> generate_utterance(const LanguageModel& lm, std::span<const TokenId> context,
                                        const SamplerConfig& config, TokenId eos);

}  // namespace clonebot
