#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "clonebot/corpus.hpp"
#include "clonebot/tokenizer.hpp"

namespace clonebot {

enum class FormatVariant {
  Plain,                // s_n EOS ... s_1 EOS
  LeadingSpeaker,       // responder-id-tokens s_n EOS ... s_1 EOS
  PerUtteranceSpeaker,  // id_n s_n EOS ... id_1 s_1 EOS
  SpeakerTokenTypes,    // <spk_n> s_n EOS ... with a parallel token-type layer
};

std::string_view format_name(FormatVariant v);
FormatVariant parse_format_name(std::string_view name);

struct FormatSpec {
  FormatVariant variant = FormatVariant::Plain;
  std::size_t max_turns = 5;
  std::size_t max_tokens = 1024;
  /// Lets Plain accept an empty history (yielding an empty example).
  bool allow_empty = false;

  void validate() const;
};

struct EncodedExample {
  std::vector<TokenId> token_ids;
  /// Same length as token_ids for SpeakerTokenTypes, empty otherwise.
  std::vector<TokenId> token_type_ids;
  /// Start offset of each included utterance segment (speaker marker included).
  std::vector<std::size_t> turn_boundaries;
  SpeakerId responder;
  FormatVariant variant = FormatVariant::Plain;
};

/// Encodes the most recent `spec.max_turns` utterances of `history`
/// (ordered oldest to newest) for a model that will answer as `responder`.
///
/// Over budget, whole oldest utterances are dropped first; if the newest one
/// alone still does not fit, its text tokens are cut from the front, then its
/// speaker marker, then the leading responder prefix. Every included
/// utterance keeps its EOS.
EncodedExample build_context(std::span<const Utterance> history, const SpeakerId& responder,
                             const FormatSpec& spec, const Tokenizer& tok);

struct TrainingExample {
  EncodedExample input;
  std::vector<TokenId> target_ids;  // predicted utterance + EOS
};

/// One example per utterance that has at least one predecessor in its
/// conversation. Expects a collapsed corpus.
std::vector<TrainingExample> build_training_set(const Corpus& corpus, const FormatSpec& spec,
                                                const Tokenizer& tok);

/// {"token_ids":[...], "token_type_ids":[...], "target_ids":[...],
///  "responder": str, "format": str} per line.
void write_training_jsonl(const std::vector<TrainingExample>& examples, std::ostream& out);

}  // namespace clonebot
