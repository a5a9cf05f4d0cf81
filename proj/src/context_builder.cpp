#include "clonebot/context_builder.hpp"

#include <algorithm>
#include <deque>
#include <ostream>

#include <json.hpp>

#include "clonebot/error.hpp"

namespace clonebot {

std::string_view format_name(FormatVariant v) {
  switch (v) {
    case FormatVariant::Plain: return "plain";
    case FormatVariant::LeadingSpeaker: return "leading_speaker";
    case FormatVariant::PerUtteranceSpeaker: return "per_utterance_speaker";
    case FormatVariant::SpeakerTokenTypes: return "speaker_token_types";
  }
  return "unknown";
}

FormatVariant parse_format_name(std::string_view name) {
  for (auto v : {FormatVariant::Plain, FormatVariant::LeadingSpeaker, FormatVariant::PerUtteranceSpeaker,
                 FormatVariant::SpeakerTokenTypes})
    if (format_name(v) == name) return v;
  throw ParameterError("unknown context format: " + std::string(name));
}

void FormatSpec::validate() const {
  if (max_turns == 0) throw ParameterError("max_turns must be positive");
  if (max_tokens < 2) throw ParameterError("max_tokens must be at least 2");
}

namespace {

struct Segment {
  std::vector<TokenId> marker;
  std::vector<TokenId> content;
  TokenId type = 0;

  std::size_t size() const { return marker.size() + content.size() + 1; }
};

// Removes up to `n` tokens from the front of `v`; returns how many went.
std::size_t trim_front(std::vector<TokenId>& v, std::size_t n) {
  const std::size_t k = std::min(n, v.size());
  v.erase(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k));
  return k;
}

}  // namespace

EncodedExample build_context(std::span<const Utterance> history, const SpeakerId& responder,
                             const FormatSpec& spec, const Tokenizer& tok) {
  spec.validate();

  EncodedExample out;
  out.responder = responder;
  out.variant = spec.variant;

  if (history.empty()) {
    if (spec.variant == FormatVariant::Plain && spec.allow_empty) return out;
    throw EmptyContextError("context history is empty");
  }

  const bool typed = spec.variant == FormatVariant::SpeakerTokenTypes;
  if (typed && !tok.speaker_token(responder)) throw UnknownSpeakerError("unregistered responder: " + responder);

  const std::size_t first = history.size() > spec.max_turns ? history.size() - spec.max_turns : 0;
  std::deque<Segment> segments;
  for (std::size_t i = first; i < history.size(); ++i) {
    const Utterance& u = history[i];
    Segment seg;
    seg.content = tok.encode(u.text);
    switch (spec.variant) {
      case FormatVariant::Plain:
      case FormatVariant::LeadingSpeaker:
        break;
      case FormatVariant::PerUtteranceSpeaker:
        seg.marker = tok.encode(u.speaker_id);
        break;
      case FormatVariant::SpeakerTokenTypes: {
        auto spk = tok.speaker_token(u.speaker_id);
        if (!spk) throw UnknownSpeakerError("unregistered speaker: " + u.speaker_id);
        seg.marker = {*spk};
        seg.type = *spk;
        break;
      }
    }
    segments.push_back(std::move(seg));
  }

  std::vector<TokenId> prefix;
  if (spec.variant == FormatVariant::LeadingSpeaker) prefix = tok.encode(responder);

  std::size_t total = prefix.size();
  for (const auto& s : segments) total += s.size();

  while (total > spec.max_tokens && segments.size() > 1) {
    total -= segments.front().size();
    segments.pop_front();
  }
  if (total > spec.max_tokens) {
    Segment& oldest = segments.front();
    std::size_t excess = total - spec.max_tokens;
    excess -= trim_front(oldest.content, excess);
    excess -= trim_front(oldest.marker, excess);
    excess -= trim_front(prefix, excess);
    total = spec.max_tokens + excess;  // excess is zero: max_tokens >= 2 > lone EOS
  }

  out.token_ids.reserve(total);
  out.token_ids.insert(out.token_ids.end(), prefix.begin(), prefix.end());
  for (const auto& s : segments) {
    out.turn_boundaries.push_back(out.token_ids.size());
    out.token_ids.insert(out.token_ids.end(), s.marker.begin(), s.marker.end());
    out.token_ids.insert(out.token_ids.end(), s.content.begin(), s.content.end());
    out.token_ids.push_back(tok.eos_id());
    if (typed) out.token_type_ids.insert(out.token_type_ids.end(), s.size(), s.type);
  }
  return out;
}

std::vector<TrainingExample> build_training_set(const Corpus& corpus, const FormatSpec& spec,
                                                const Tokenizer& tok) {
  std::vector<TrainingExample> out;
  for (const auto& conv : corpus.conversations) {
    const std::span<const Utterance> utts(conv.utterances);
    for (std::size_t i = 1; i < utts.size(); ++i) {
      TrainingExample ex;
      ex.input = build_context(utts.first(i), utts[i].speaker_id, spec, tok);
      ex.target_ids = tok.encode(utts[i].text);
      ex.target_ids.push_back(tok.eos_id());
      out.push_back(std::move(ex));
    }
  }
  return out;
}

void write_training_jsonl(const std::vector<TrainingExample>& examples, std::ostream& out) {
  for (const auto& ex : examples) {
    nlohmann::ordered_json obj;
    obj["token_ids"] = ex.input.token_ids;
    obj["token_type_ids"] = ex.input.token_type_ids;
    obj["target_ids"] = ex.target_ids;
    obj["responder"] = ex.input.responder;
    obj["format"] = format_name(ex.input.variant);
    out << obj.dump() << '\n';
  }
}

}  // namespace clonebot
