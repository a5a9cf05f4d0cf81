#include "clonebot/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include "clonebot/error.hpp"
#include "clonebot/text.hpp"

namespace clonebot {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

std::vector<std::string> bleu_tokens(std::string_view text) { return split_whitespace(text); }

BleuReport bleu_corpus(const std::vector<std::vector<std::string>>& candidates,
                       const std::vector<std::vector<std::string>>& references) {
  if (candidates.empty()) throw EvalError("BLEU needs at least one candidate");
  if (candidates.size() != references.size()) throw EvalError("candidate and reference counts differ");

  BleuReport r;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& cand = candidates[s];
    const auto& ref = references[s];
    r.candidate_length += cand.size();
    r.reference_length += ref.size();
    for (std::size_t n = 1; n <= kBleuMaxOrder; ++n) {
      const auto cand_counts = count_ngrams(cand, n);
      const auto ref_counts = count_ngrams(ref, n);
      for (const auto& [gram, c] : cand_counts) {
        r.totals[n - 1] += c;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) r.matches[n - 1] += std::min(c, it->second);
      }
    }
  }

  for (std::size_t n = 0; n < kBleuMaxOrder; ++n) {
    if (r.totals[n] == 0) continue;
    r.precisions[n] = static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]);
    r.effective_order = n + 1;
  }

  const double c = static_cast<double>(r.candidate_length);
  const double ref_len = static_cast<double>(r.reference_length);
  if (r.candidate_length == 0) {
    r.brevity_penalty = 0.0;
    return r;
  }
  r.brevity_penalty = c < ref_len ? std::exp(1.0 - ref_len / c) : 1.0;

  double log_sum = 0.0;
  for (std::size_t n = 0; n < r.effective_order; ++n) {
    if (r.matches[n] == 0) return r;  // score stays 0
    log_sum += std::log(r.precisions[n]);
  }
  r.score = r.brevity_penalty * std::exp(log_sum / static_cast<double>(r.effective_order));
  return r;
}

PerplexityReport perplexity(const LanguageModel& lm, const std::vector<std::vector<TokenId>>& test, TokenId eos) {
  double nll = 0.0;
  std::size_t n = 0;
  std::vector<TokenId> ctx;
  for (const auto& seq : test) {
    ctx.clear();
    for (std::size_t i = 0; i <= seq.size(); ++i) {
      const TokenId tok = i < seq.size() ? seq[i] : eos;
      const auto dist = lm.next_distribution(ctx);
      check_distribution(dist, lm.vocab_size());
      if (tok >= dist.size()) throw MetricError("test token outside the model vocabulary");
      const double p = dist[tok];
      if (!(p > 0.0)) throw MetricError("zero probability for token " + std::to_string(tok) + "; model is unsmoothed");
      nll -= std::log(p);
      ++n;
      ctx.push_back(tok);
    }
  }
  if (n == 0) throw MetricError("perplexity of an empty test set");
  PerplexityReport r;
  r.token_count = n;
  r.mean_nll = nll / static_cast<double>(n);
  r.ppl = std::exp(r.mean_nll);
  return r;
}

RetrievalEvalResult run_retrieval_eval(const CorpusSplit& split, const SpeakerIndexSet& engine,
                                       const std::set<SpeakerId>& targets, std::size_t k) {
  std::set<UtteranceId> test_ids;
  for (const auto& conv : split.test.conversations)
    for (const auto& u : conv.utterances) test_ids.insert(u.id);
  for (UtteranceId id : engine.indexed_utterance_ids())
    if (test_ids.contains(id)) throw EvalError("engine indexes test utterance " + std::to_string(id));

  // Full conversations, so the first test turn can see its train predecessor.
  std::map<std::string, std::vector<Utterance>> full;
  for (const Corpus* part : {&split.train, &split.test})
    for (const auto& conv : part->conversations) {
      auto& dst = full[conv.conversation_id];
      dst.insert(dst.end(), conv.utterances.begin(), conv.utterances.end());
    }
  for (auto& [_, utts] : full)
    std::sort(utts.begin(), utts.end(), [](const Utterance& a, const Utterance& b) { return a.id < b.id; });

  RetrievalEvalResult result;
  std::map<SpeakerId, std::size_t> per_target;
  for (const auto& conv : split.test.conversations) {
    const auto& utts = full.at(conv.conversation_id);
    for (std::size_t i = 1; i < utts.size(); ++i) {
      const Utterance& gold = utts[i];
      if (!test_ids.contains(gold.id) || !targets.contains(gold.speaker_id) || !engine.has_target(gold.speaker_id))
        continue;
      ParallelRow row;
      row.query = context_text(std::span<const Utterance>(utts).first(i), engine.context_turns());
      row.gold = gold.text;
      row.gold_id = gold.id;
      row.target_speaker = gold.speaker_id;
      const RetrievalResult rr = retrieve_response(row.query, gold.speaker_id, k, engine);
      if (rr.answered) {
        row.hypothesis = rr.response_text;
        row.distance = rr.distance;
      } else {
        ++result.no_answer;
      }
      ++per_target[gold.speaker_id];
      result.rows.push_back(std::move(row));
    }
  }

  for (const auto& t : targets) {
    if (per_target.contains(t)) continue;
    result.skipped.push_back(engine.has_target(t) ? "target " + t + " has no test pairs"
                                                   : "target " + t + " has no index in the engine");
  }
  if (result.rows.empty()) throw EvalError("no target speaker has any test pair; nothing to score");

  std::vector<std::vector<std::string>> hyps, golds;
  for (const auto& row : result.rows) {
    hyps.push_back(bleu_tokens(row.hypothesis));
    golds.push_back(bleu_tokens(row.gold));
  }
  result.bleu = bleu_corpus(hyps, golds);
  return result;
}

namespace {

void write_escaped(std::ostream& out, std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '\\': out << "\\\\"; break;
      case '\t': out << "\\t"; break;
      case '\n': out << "\\n"; break;
      case '\r': out << "\\r"; break;
      default: out << c;
    }
  }
}

}  // namespace

void write_parallel_tsv(const std::vector<ParallelRow>& rows, std::ostream& out) {
  out << "query\thypothesis\tgold\ttarget_speaker\tdistance\n";
  for (const auto& r : rows) {
    write_escaped(out, r.query);
    out << '\t';
    write_escaped(out, r.hypothesis);
    out << '\t';
    write_escaped(out, r.gold);
    out << '\t';
    write_escaped(out, r.target_speaker);
    out << '\t';
    if (r.distance) out << nlohmann::json(*r.distance).dump();
    out << '\n';
  }
}

nlohmann::ordered_json to_json(const BleuReport& r) {
  nlohmann::ordered_json j;
  j["score"] = r.score;
  j["precisions"] = r.precisions;
  j["matches"] = r.matches;
  j["totals"] = r.totals;
  j["effective_order"] = r.effective_order;
  j["brevity_penalty"] = r.brevity_penalty;
  j["candidate_length"] = r.candidate_length;
  j["reference_length"] = r.reference_length;
  return j;
}

nlohmann::ordered_json to_json(const PerplexityReport& r) {
  nlohmann::ordered_json j;
  j["ppl"] = r.ppl;
  j["token_count"] = r.token_count;
  j["mean_nll"] = r.mean_nll;
  j["log_base"] = r.log_base;
  return j;
}

}  // namespace clonebot
