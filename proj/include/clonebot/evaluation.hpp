#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "clonebot/corpus.hpp"
#include "clonebot/generation.hpp"
#include "clonebot/retrieval.hpp"

namespace clonebot {

inline constexpr std::size_t kBleuMaxOrder = 4;

struct BleuReport {
  double score = 0.0;
  std::array<double, kBleuMaxOrder> precisions{};  // matches/totals, 0 when totals is 0
  std::array<std::size_t, kBleuMaxOrder> matches{};
  std::array<std::size_t, kBleuMaxOrder> totals{};
  /// Highest n with a non-zero candidate n-gram total; the geometric mean
  /// runs over orders 1..effective_order.
  std::size_t effective_order = 0;
  double brevity_penalty = 0.0;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

/// Corpus BLEU with one reference per candidate, n = 1..4, uniform weights
/// and no smoothing: clipped matches and totals are summed over the corpus
/// before taking logs. BP = exp(1 - r/c) when c < r, else 1. Any zero
/// precision (within the effective order) gives score 0. Orders for which
/// the whole corpus has no candidate n-gram are left out of the mean.
/// Throws EvalError for an empty corpus or mismatched lengths.
BleuReport bleu_corpus(const std::vector<std::vector<std::string>>& candidates,
                       const std::vector<std::vector<std::string>>& references);

/// Whitespace tokenization used for BLEU.
std::vector<std::string> bleu_tokens(std::string_view text);

struct PerplexityReport {
  double ppl = 0.0;
  std::size_t token_count = 0;
  double mean_nll = 0.0;
  std::string log_base = "natural";
};

/// exp(-(1/N) sum ln p(w_i | preceding tokens of the same sequence)), where
/// every sequence is scored followed by EOS and N counts those EOS tokens.
/// Throws MetricError on a zero probability or an empty test set.
PerplexityReport perplexity(const LanguageModel& lm, const std::vector<std::vector<TokenId>>& test, TokenId eos);

struct ParallelRow {
  std::string query;
  std::string hypothesis;  // empty when the engine had no answer
  std::string gold;
  SpeakerId target_speaker;
  std::optional<double> distance;
  UtteranceId gold_id = 0;
};

struct RetrievalEvalResult {
  BleuReport bleu;
  std::vector<ParallelRow> rows;
  std::size_t no_answer = 0;
  std::vector<std::string> skipped;  // one note per target without test pairs
};

/// For every test utterance by a target that has a predecessor in its
/// conversation (the predecessor may sit in train), queries the engine with
/// the preceding context and scores the top response against the gold one.
///
/// Throws EvalError when the engine indexes any test utterance, or when no
/// target yields a single test pair.
RetrievalEvalResult run_retrieval_eval(const CorpusSplit& split, const SpeakerIndexSet& engine,
                                       const std::set<SpeakerId>& targets, std::size_t k = 1);

/// Header "query\thypothesis\tgold\ttarget_speaker\tdistance", then one row
/// per pair. Backslash, tab, CR and LF inside fields are written as \\, \t,
/// \r and \n; a missing distance is an empty field.
void write_parallel_tsv(const std::vector<ParallelRow>& rows, std::ostream& out);

nlohmann::ordered_json to_json(const BleuReport& r);
nlohmann::ordered_json to_json(const PerplexityReport& r);

}  // namespace clonebot
