#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace clonebot {

using UtteranceId = std::uint64_t;
using SpeakerId = std::string;

/// One chat message.
struct Utterance {
  UtteranceId id = 0;
  std::string conversation_id;
  SpeakerId speaker_id;
  std::int64_t timestamp = 0;  // ms since epoch
  std::string text;            // NFC, outer whitespace trimmed, never blank

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Conversation {
  std::string conversation_id;
  std::vector<Utterance> utterances;

  friend bool operator==(const Conversation&, const Conversation&) = default;
};

/// An immutable-after-construction set of conversations. `speakers` is kept
/// equal to the union of utterance speaker ids by every factory below.
struct Corpus {
  std::vector<Conversation> conversations;
  std::set<SpeakerId> speakers;

  std::size_t utterance_count() const;
  bool empty() const { return utterance_count() == 0; }

  /// Rebuilds `speakers` from the utterances.
  void refresh_speakers();

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Result of ingestion. `corpus` is valid; rejected rows are only counted.
struct ParseReport {
  Corpus corpus;
  std::size_t total_lines = 0;  // non-blank records seen
  std::size_t malformed_lines = 0;
  std::vector<std::size_t> malformed_line_numbers;  // 1-based
};

/// Writes "N of M lines malformed" plus the first offending line numbers.
void write_malformed_report(const ParseReport& report, std::ostream& out);

/// One JSON object per line with keys conversation_id, speaker_id,
/// timestamp (optional integer ms), text.
///
/// Conversations keep the order of their first appearance; utterances within
/// a conversation are stably ordered by timestamp, and ids are then assigned
/// densely in corpus iteration order (equal to file order for files that are
/// already grouped by conversation and time-ordered). A missing timestamp
/// takes the previous row's value in the same conversation, or 0 when it is
/// the conversation's first row.
///
/// Throws IngestionError on stream failure and CorpusRejectedError when more
/// than half of the records are malformed.
ParseReport parse_jsonl(std::istream& in);

/// Header names of the four CSV columns.
struct CsvColumns {
  std::string conversation_id = "conversation_id";
  std::string speaker_id = "speaker_id";
  std::string timestamp = "timestamp";
  std::string text = "text";
};

/// RFC 4180 CSV with a header row. Same contract as parse_jsonl; a mapped
/// column missing from the header is a SchemaError.
ParseReport parse_csv(std::istream& in, const CsvColumns& columns = {});

/// Inverse of parse_jsonl for a well-formed corpus.
void write_jsonl(const Corpus& corpus, std::ostream& out);

/// Merges maximal runs of same-speaker utterances. The merged utterance keeps
/// the first utterance's id and timestamp; texts are joined with `joiner`.
Conversation collapse_consecutive(const Conversation& conversation, std::string_view joiner = " ");
Corpus collapse_corpus(const Corpus& corpus, std::string_view joiner = " ");

struct CorpusSplit {
  Corpus train;
  Corpus test;
  /// Earliest test timestamp; the latest train timestamp when test is empty.
  std::int64_t boundary_timestamp = 0;
  /// |test| / |corpus| after speaker-coverage repair.
  double realized_fraction = 0.0;
  std::size_t moved_for_coverage = 0;
};

/// Per conversation, the trailing floor(test_fraction * n) utterances go to
/// test. Then, while some test utterance's speaker never occurs in train,
/// that conversation's split point moves forward past it so the utterance
/// (and every earlier test utterance of that conversation) returns to train.
///
/// Throws SplitError for an empty corpus, a fraction outside (0,1), or when
/// train would end up empty.
CorpusSplit chronological_split(const Corpus& corpus, double test_fraction);

}  // namespace clonebot
