#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "clonebot/error.hpp"
#include "clonebot/generation.hpp"
#include "clonebot/tokenizer.hpp"

using namespace clonebot;

namespace {

std::vector<double> softmax(const std::vector<double>& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> e;
  double s = 0;
  for (double v : x) s += e.emplace_back(std::exp(v - mx));
  for (double& v : e) v /= s;
  return e;
}

std::vector<double> random_distribution(std::mt19937_64& gen, std::size_t n) {
  std::gamma_distribution<double> g(0.5);
  std::vector<double> p(n);
  double s = 0;
  for (auto& x : p) s += x = g(gen) + 1e-12;
  for (auto& x : p) x /= s;
  return p;
}

/// Nucleus kept set by exhaustive search: the smallest subset reaching mass
/// top_p; among subsets of that size, the one with the largest mass.
std::vector<bool> nucleus_by_enumeration(const std::vector<double>& p, double top_p) {
  const std::size_t n = p.size();
  std::size_t best_size = n + 1;
  double best_mass = -1;
  std::uint32_t best = 0;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    double mass = 0;
    std::size_t size = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) {
        mass += p[i];
        ++size;
      }
    if (mass < top_p) continue;
    if (size < best_size || (size == best_size && mass > best_mass)) {
      best_size = size;
      best_mass = mass;
      best = mask;
    }
  }
  std::vector<bool> kept(n);
  for (std::size_t i = 0; i < n; ++i) kept[i] = best >> i & 1;
  return kept;
}

class FixedModel final : public LanguageModel {
 public:
  explicit FixedModel(std::vector<double> p) : p_(std::move(p)) {}
  std::size_t vocab_size() const override { return p_.size(); }
  std::vector<double> next_distribution(std::span<const TokenId>) const override { return p_; }

 private:
  std::vector<double> p_;
};

}  // namespace

TEST(Temperature, UnitTemperatureIsSoftmax) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd(0, 3);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> logits(20);
    for (auto& x : logits) x = nd(gen);
    const auto got = apply_temperature(logits, 1.0);
    const auto want = softmax(logits);
    for (std::size_t j = 0; j < got.size(); ++j) EXPECT_NEAR(got[j], want[j], 1e-12);
    EXPECT_NEAR(std::accumulate(got.begin(), got.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Temperature, Examples) {
  for (double t : {0.1, 1.0, 7.0}) {
    const auto p = apply_temperature(std::vector<double>{0, 0}, t);
    EXPECT_DOUBLE_EQ(p[0], 0.5);
    EXPECT_DOUBLE_EQ(p[1], 0.5);
  }
  const auto p = apply_temperature(std::vector<double>{1, 2, 3}, 0.5);
  EXPECT_NEAR(p[0], 0.015876239976466765, 1e-15);
  EXPECT_NEAR(p[1], 0.11731042782619838, 1e-15);
  EXPECT_NEAR(p[2], 0.8668133321973349, 1e-15);
  EXPECT_THROW(apply_temperature(std::vector<double>{1, 2}, 0.0), ParameterError);
  EXPECT_THROW(apply_temperature(std::vector<double>{1, 2}, -1.0), ParameterError);
  EXPECT_THROW(apply_temperature(std::vector<double>{1, INFINITY}, 1.0), ParameterError);
}

TEST(Temperature, ArgmaxInvariant) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> t(0.05, 5.0);
  for (int i = 0; i < 500; ++i) {
    const auto p = random_distribution(gen, 12);
    const auto q = temper_probabilities(p, t(gen));
    EXPECT_EQ(std::max_element(p.begin(), p.end()) - p.begin(), std::max_element(q.begin(), q.end()) - q.begin());
  }
  const std::vector<double> z{0.5, 0.0, 0.5};
  EXPECT_EQ(temper_probabilities(z, 0.3)[1], 0.0);
}

TEST(Filter, NucleusExample) {
  const std::vector<double> p{0.5, 0.3, 0.15, 0.05};
  const auto q = filter_top_k_top_p(p, std::nullopt, 0.7);
  EXPECT_NEAR(q[0], 0.625, 1e-12);
  EXPECT_NEAR(q[1], 0.375, 1e-12);
  EXPECT_EQ(q[2], 0.0);
  EXPECT_EQ(q[3], 0.0);
}

TEST(Filter, TopOneIsArgmaxAndIdentity) {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_distribution(gen, 9);
    const auto one = filter_top_k_top_p(p, 1, 1.0);
    const auto arg = std::max_element(p.begin(), p.end()) - p.begin();
    for (std::size_t j = 0; j < p.size(); ++j) EXPECT_EQ(one[j], j == std::size_t(arg) ? 1.0 : 0.0);
    const auto id = filter_top_k_top_p(p, std::nullopt, 1.0);
    for (std::size_t j = 0; j < p.size(); ++j) EXPECT_NEAR(id[j], p[j], 1e-12);
  }
}

TEST(Filter, TiesGoToLowerId) {
  const std::vector<double> p{0.25, 0.25, 0.25, 0.25};
  EXPECT_EQ(filter_top_k_top_p(p, 2, 1.0), (std::vector<double>{0.5, 0.5, 0, 0}));
  EXPECT_EQ(filter_top_k_top_p(p, std::nullopt, 0.5), (std::vector<double>{0.5, 0.5, 0, 0}));
}

TEST(Filter, NucleusMatchesEnumeration) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> tp(0.01, 1.0);
  std::uniform_int_distribution<std::size_t> sz(2, 10);
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_distribution(gen, sz(gen));
    const double top_p = tp(gen);
    const auto q = filter_top_k_top_p(p, std::nullopt, top_p);
    const auto kept = nucleus_by_enumeration(p, top_p);
    double s = 0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      EXPECT_EQ(q[j] > 0, kept[j]) << "case " << i << " id " << j;
      s += q[j];
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Filter, MonotoneInTopP) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int i = 0; i < 500; ++i) {
    const auto p = random_distribution(gen, 15);
    double x = u(gen), y = u(gen);
    if (x > y) std::swap(x, y);
    const auto a = filter_top_k_top_p(p, 8, x), b = filter_top_k_top_p(p, 8, y);
    for (std::size_t j = 0; j < p.size(); ++j)
      if (a[j] > 0) EXPECT_GT(b[j], 0);
  }
}

TEST(SamplerConfig, PresetsAndValidation) {
  const auto d = SamplerConfig::preset("dialogpt");
  EXPECT_FALSE(d.top_k);
  EXPECT_EQ(d.top_p, 0.7);
  EXPECT_EQ(d.temperature, 0.8);
  const auto c = SamplerConfig::preset("convai-medium");
  EXPECT_EQ(*c.top_k, 70u);
  EXPECT_EQ(c.top_p, 0.5);
  EXPECT_EQ(c.temperature, 1.2);
  EXPECT_EQ(*SamplerConfig::preset("greedy").top_k, 1u);
  EXPECT_THROW(SamplerConfig::preset("beam"), ParameterError);
  SamplerConfig bad;
  bad.top_p = 0.0;
  EXPECT_THROW(bad.validate(), ParameterError);
  bad.top_p = 1.5;
  EXPECT_THROW(bad.validate(), ParameterError);
  bad = {};
  bad.temperature = 0;
  EXPECT_THROW(bad.validate(), ParameterError);
  bad = {};
  bad.top_k = 0;
  EXPECT_THROW(bad.validate(), ParameterError);
}

TEST(Sampler, FrequenciesWithinThreeStandardErrors) {
  const std::vector<double> p{0.35, 0.25, 0.2, 0.1, 0.06, 0.04};
  SamplerConfig cfg;
  cfg.top_k = 5;
  cfg.top_p = 0.9;
  cfg.temperature = 0.8;
  cfg.seed = 12345;
  // Independent expected distribution: p^(1/t), renormalize, top 5, then
  // the shortest prefix reaching 0.9.
  std::vector<double> w(p.size());
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += w[i] = std::pow(p[i], 1.0 / 0.8);
  for (auto& x : w) x /= s;
  std::vector<double> expect(p.size(), 0.0);
  double cum = 0, kept = 0;
  for (std::size_t i = 0; i < 5 && cum < 0.9; ++i) {
    cum += w[i];
    expect[i] = w[i];
    kept += w[i];
  }
  for (auto& x : expect) x /= kept;

  Sampler sampler(cfg);
  const int n = 100000;
  std::vector<int> counts(p.size());
  for (int i = 0; i < n; ++i) ++counts[sampler.sample(p)];
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double f = double(counts[i]) / n;
    const double se = std::sqrt(expect[i] * (1 - expect[i]) / n);
    if (expect[i] == 0)
      EXPECT_EQ(counts[i], 0);
    else
      EXPECT_LE(std::abs(f - expect[i]), 3 * se) << i;
  }
}

TEST(Sampler, SeededAndDeterministic) {
  SamplerConfig cfg;
  cfg.seed = 99;
  Sampler a(cfg), b(cfg);
  const std::vector<double> p{0.3, 0.3, 0.4};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.sample(p), b.sample(p));
  EXPECT_THROW(a.draw(std::vector<double>{0, 0}), ModelContractError);
}

TEST(Generate, EosOnlyModelYieldsEmpty) {
  FixedModel lm({0.0, 1.0, 0.0});
  EXPECT_TRUE(generate_utterance(lm, {}, SamplerConfig{}, 1).empty());
}

TEST(Generate, InvalidModelDistribution) {
  FixedModel lm({0.5, 0.6});
  EXPECT_THROW(generate_utterance(lm, {}, SamplerConfig{}, 1), ModelContractError);
  FixedModel neg({1.5, -0.5});
  EXPECT_THROW(generate_utterance(neg, {}, SamplerConfig{}, 1), ModelContractError);
}

TEST(Generate, FixedSeedReproducible) {
  FixedModel lm({0.1, 0.1, 0.4, 0.4});
  SamplerConfig cfg = SamplerConfig::dialogpt();
  cfg.seed = 5;
  cfg.max_new_tokens = 30;
  const std::vector<TokenId> ctx{2};
  EXPECT_EQ(generate_utterance(lm, ctx, cfg, 1), generate_utterance(lm, ctx, cfg, 1));
  EXPECT_LE(generate_utterance(lm, ctx, cfg, 1).size(), 30u);
}

TEST(Bigram, HandComputedTable) {
  // One utterance "a b a b a b" -> stream <eos> a b a b a b <eos>.
  const auto tok = WordTokenizer::from_tokens({"a", "b"}, {});
  const auto lm = BigramLanguageModel::train({tok.encode("a b a b a b")}, tok.vocab_size(), tok.eos_id());
  const TokenId a = 2, b = 3, eos = 1;
  EXPECT_EQ(lm.count(a, b), 3u);
  EXPECT_EQ(lm.count(b, a), 2u);
  EXPECT_EQ(lm.count(b, eos), 1u);
  EXPECT_EQ(lm.count(eos, a), 1u);
  EXPECT_EQ(lm.history_count(b), 3u);
  EXPECT_DOUBLE_EQ(lm.probability(a, b), 4.0 / 7.0);
  EXPECT_DOUBLE_EQ(lm.probability(b, a), 3.0 / 7.0);
  EXPECT_DOUBLE_EQ(lm.probability(b, eos), 2.0 / 7.0);
  EXPECT_DOUBLE_EQ(lm.probability(eos, a), 2.0 / 5.0);

  // Greedy from "a": b, then a (3/7 beats eos 2/7), alternating to the cap.
  SamplerConfig cfg = SamplerConfig::preset("greedy");
  cfg.max_new_tokens = 6;
  const std::vector<TokenId> ctx{a};
  const auto out = generate_utterance(lm, ctx, cfg, eos);
  EXPECT_EQ(tok.decode(out), "b a b a b a");
}
