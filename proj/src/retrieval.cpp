#include "clonebot/retrieval.hpp"

#include "clonebot/error.hpp"

namespace clonebot {

std::string context_text(std::span<const Utterance> preceding, std::size_t context_turns) {
  const std::size_t first = preceding.size() > context_turns ? preceding.size() - context_turns : 0;
  std::string out;
  for (std::size_t i = first; i < preceding.size(); ++i) {
    if (i != first) out.push_back('\n');
    out.append(preceding[i].text);
  }
  return out;
}

std::vector<PairRecord> build_pairs(const Corpus& corpus, const SpeakerId& target, std::size_t context_turns) {
  if (context_turns == 0) throw ParameterError("context_turns must be positive");
  if (!corpus.speakers.contains(target)) throw UnknownSpeakerError("speaker not in corpus: " + target);

  std::vector<PairRecord> out;
  for (const auto& conv : corpus.conversations) {
    const std::span<const Utterance> utts(conv.utterances);
    for (std::size_t i = 1; i < utts.size(); ++i) {
      if (utts[i].speaker_id != target) continue;
      PairRecord rec;
      rec.pair = ResponsePair{utts[i - 1].id, utts[i].id, target};
      const std::size_t first = i > context_turns ? i - context_turns : 0;
      for (std::size_t j = first; j < i; ++j) rec.context_ids.push_back(utts[j].id);
      rec.context_text = context_text(utts.first(i), context_turns);
      rec.response_text = utts[i].text;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

SpeakerIndexSet::SpeakerIndexSet(std::shared_ptr<const Embedder> embedder, Metric metric, IndexKind kind,
                                 std::size_t context_turns)
    : embedder_(std::move(embedder)), metric_(metric), kind_(kind), context_turns_(context_turns) {
  if (!embedder_) throw ParameterError("engine needs an embedder");
  if (context_turns_ == 0) throw ParameterError("context_turns must be positive");
}

void SpeakerIndexSet::add_target(const SpeakerId& target, SpeakerIndex index) {
  if (!index.index || !index.index->sealed()) throw StateError("speaker index must be sealed");
  if (index.index->dim() != embedder_->dim()) throw DimensionError("speaker index dim differs from embedder dim");
  if (index.index->size() != index.pairs.size()) throw StateError("index and pair table sizes differ");
  for (auto id : index.index->record_ids()) {
    auto it = index.pairs.find(id);
    if (it == index.pairs.end()) throw StateError("index record without a pair entry");
    if (it->second.pair.target_speaker != target) throw StateError("pair belongs to another speaker");
  }
  indexes_.insert_or_assign(target, std::move(index));
}

std::vector<SpeakerId> SpeakerIndexSet::targets() const {
  std::vector<SpeakerId> out;
  for (const auto& [t, _] : indexes_) out.push_back(t);
  return out;
}

const SpeakerIndex& SpeakerIndexSet::at(const SpeakerId& target) const {
  auto it = indexes_.find(target);
  if (it == indexes_.end()) throw UnknownSpeakerError("no index for speaker: " + target);
  return it->second;
}

std::set<UtteranceId> SpeakerIndexSet::indexed_utterance_ids() const {
  std::set<UtteranceId> out;
  for (const auto& [_, si] : indexes_) {
    for (const auto& [__, rec] : si.pairs) {
      out.insert(rec.pair.response_id);
      out.insert(rec.context_ids.begin(), rec.context_ids.end());
    }
  }
  return out;
}

SpeakerIndexSet build_speaker_indexes(const Corpus& corpus, const std::set<SpeakerId>& targets,
                                      std::shared_ptr<const Embedder> embedder, const EngineOptions& options) {
  SpeakerIndexSet set(embedder, options.metric, options.kind, options.context_turns);
  for (const auto& target : targets) {
    SpeakerIndex si;
    si.index = make_index(options.kind, embedder->dim(), options.metric, options.hnsw);
    for (auto& rec : build_pairs(corpus, target, options.context_turns)) {
      const auto id = rec.pair.response_id;
      si.index->add(id, embedder->embed(rec.context_text));
      si.pairs.emplace(id, std::move(rec));
    }
    si.index->seal();
    set.add_target(target, std::move(si));
  }
  return set;
}

RetrievalResult retrieve_response(std::string_view query_text, const SpeakerId& target, std::size_t k,
                                  const SpeakerIndexSet& set) {
  if (k == 0) throw ParameterError("k must be positive");
  const SpeakerIndex& si = set.at(target);

  RetrievalResult result;
  result.target_speaker = target;
  if (si.index->size() == 0) return result;

  const EmbeddingVector q = set.embedder().embed(query_text);
  for (const auto& hit : si.index->search(q.values, k)) {
    const PairRecord& rec = si.pairs.at(hit.record_id);
    result.candidates.push_back({hit.record_id, rec.response_text, rec.context_text, hit.distance});
  }
  if (result.candidates.empty()) return result;

  const auto& best = result.candidates.front();
  result.answered = true;
  result.response_text = best.response_text;
  result.matched_context_text = best.context_text;
  result.distance = best.distance;
  result.response_id = best.record_id;
  return result;
}

}  // namespace clonebot
