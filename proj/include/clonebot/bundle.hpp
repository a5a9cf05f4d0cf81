#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "clonebot/corpus.hpp"
#include "clonebot/embedding.hpp"
#include "clonebot/retrieval.hpp"

namespace clonebot {

/// Output of `clonebot ingest`: the collapsed corpus plus the parameters
/// that reproduce its split.
///
///   corpus.jsonl  collapsed corpus (re-parsing assigns the same ids)
///   train.jsonl   / test.jsonl, for inspection
///   bundle.json   {"test_fraction", "joiner", "collapsed", counts...}
struct CorpusBundle {
  Corpus corpus;
  CorpusSplit split;
  double test_fraction = 0.2;
  std::string joiner = " ";
  bool collapsed = true;
  std::size_t malformed_lines = 0;
};

CorpusBundle make_corpus_bundle(const ParseReport& parsed, double test_fraction, std::string joiner, bool collapse);
void save_corpus_bundle(const CorpusBundle& bundle, const std::filesystem::path& dir);
CorpusBundle load_corpus_bundle(const std::filesystem::path& dir);

/// Engine bundle directory:
///   manifest.json  {"format":"clonebot-engine","version":1,"embedder","metric",
///                   "index_kind","dim","context_turns","targets":[{"speaker_id",
///                   "index_file","pairs"}]}
///   index_NNN.cbix one per target, in manifest order
///   pairs.jsonl    {"target_speaker","record_id","context_id","response_id",
///                   "context_ids","context_text","response_text"} per line
void save_engine(const SpeakerIndexSet& set, const std::filesystem::path& dir);

/// Loads an engine and checks that `embedder` has the fingerprint it was
/// built with (FingerprintMismatchError otherwise). Without an embedder,
/// one is reconstructed from the manifest fingerprint.
SpeakerIndexSet load_engine(const std::filesystem::path& dir, std::shared_ptr<const Embedder> embedder = nullptr,
                            std::size_t ef_search = 64);

/// Reads just the manifest's embedder fingerprint.
std::string engine_fingerprint(const std::filesystem::path& dir);

/// Rebuilds a library embedder from its fingerprint ("hashing-v1/dim=N").
/// Throws FingerprintMismatchError for unknown fingerprints.
std::shared_ptr<const Embedder> embedder_from_fingerprint(const std::string& fingerprint);

}  // namespace clonebot
