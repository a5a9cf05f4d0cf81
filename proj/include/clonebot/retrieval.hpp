#pragma once

#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "clonebot/corpus.hpp"
#include "clonebot/embedding.hpp"
#include "clonebot/vector_index.hpp"

namespace clonebot {

/// (context -> response) where the response was said by the target speaker
/// right after the context in the same conversation.
struct ResponsePair {
  UtteranceId context_id = 0;   // utterance immediately preceding the response
  UtteranceId response_id = 0;  // also the record id in the speaker's index
  SpeakerId target_speaker;

  friend bool operator==(const ResponsePair&, const ResponsePair&) = default;
};

struct PairRecord {
  ResponsePair pair;
  std::vector<UtteranceId> context_ids;  // oldest first, ends with pair.context_id
  std::string context_text;
  std::string response_text;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

/// Newline-joined texts of the last `context_turns` utterances of `preceding`.
std::string context_text(std::span<const Utterance> preceding, std::size_t context_turns);

/// One pair per utterance by `target` that has a predecessor in its
/// conversation. The context is whatever precedes, whoever said it.
/// Throws UnknownSpeakerError when `target` never speaks in `corpus`.
std::vector<PairRecord> build_pairs(const Corpus& corpus, const SpeakerId& target, std::size_t context_turns = 1);

/// A sealed index over one target's contexts and the pair table keyed by
/// record id (= response utterance id).
struct SpeakerIndex {
  std::unique_ptr<VectorIndex> index;
  std::map<std::uint64_t, PairRecord> pairs;
};

/// Per-target indexes sharing one embedder and metric. Immutable once built;
/// lookups are safe from any number of threads.
class SpeakerIndexSet {
 public:
  SpeakerIndexSet(std::shared_ptr<const Embedder> embedder, Metric metric, IndexKind kind, std::size_t context_turns);

  void add_target(const SpeakerId& target, SpeakerIndex index);

  const Embedder& embedder() const { return *embedder_; }
  std::shared_ptr<const Embedder> embedder_ptr() const { return embedder_; }
  Metric metric() const { return metric_; }
  IndexKind kind() const { return kind_; }
  std::size_t context_turns() const { return context_turns_; }

  std::vector<SpeakerId> targets() const;
  bool has_target(const SpeakerId& target) const { return indexes_.contains(target); }
  /// Throws UnknownSpeakerError.
  const SpeakerIndex& at(const SpeakerId& target) const;

  /// Every utterance id that contributed a context or response to any index.
  std::set<UtteranceId> indexed_utterance_ids() const;

 private:
  std::shared_ptr<const Embedder> embedder_;
  Metric metric_;
  IndexKind kind_;
  std::size_t context_turns_;
  std::map<SpeakerId, SpeakerIndex> indexes_;
};

struct EngineOptions {
  Metric metric = Metric::CosineViaDot;
  IndexKind kind = IndexKind::Flat;
  std::size_t context_turns = 1;
  HnswParams hnsw;
};

/// Builds and seals one index per target. Targets without any pair get an
/// empty sealed index. Throws UnknownSpeakerError for targets absent from
/// the corpus.
SpeakerIndexSet build_speaker_indexes(const Corpus& corpus, const std::set<SpeakerId>& targets,
                                      std::shared_ptr<const Embedder> embedder, const EngineOptions& options = {});

struct RetrievalCandidate {
  std::uint64_t record_id = 0;
  std::string response_text;
  std::string context_text;
  double distance = 0.0;
};

struct RetrievalResult {
  /// False when the target's index is empty ("no data for speaker").
  bool answered = false;
  SpeakerId target_speaker;
  std::string response_text;
  std::string matched_context_text;
  double distance = 0.0;
  std::uint64_t response_id = 0;
  std::vector<RetrievalCandidate> candidates;  // ascending distance, ties by record id
};

/// Embeds `query_text` and answers with the stored response of the nearest
/// context in the target's index. Only the target's own past responses can
/// come back. Throws UnknownSpeakerError for a target without an index.
RetrievalResult retrieve_response(std::string_view query_text, const SpeakerId& target, std::size_t k,
                                  const SpeakerIndexSet& set);

}  // namespace clonebot
