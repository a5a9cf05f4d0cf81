#include "clonebot/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "clonebot/error.hpp"
#include "clonebot/text.hpp"
#include "corpus_internal.hpp"

namespace clonebot {

std::size_t Corpus::utterance_count() const {
  std::size_t n = 0;
  for (const auto& c : conversations) n += c.utterances.size();
  return n;
}

void Corpus::refresh_speakers() {
  speakers.clear();
  for (const auto& c : conversations)
    for (const auto& u : c.utterances) speakers.insert(u.speaker_id);
}

void write_malformed_report(const ParseReport& report, std::ostream& out) {
  out << report.malformed_lines << " of " << report.total_lines << " lines malformed";
  if (!report.malformed_line_numbers.empty()) {
    out << " (lines";
    const std::size_t shown = std::min<std::size_t>(report.malformed_line_numbers.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) out << ' ' << report.malformed_line_numbers[i];
    if (shown < report.malformed_line_numbers.size()) out << " ...";
    out << ')';
  }
  out << '\n';
}

namespace detail {

std::optional<RawRow> make_row(std::string conversation_id, std::string speaker_id,
                               std::optional<std::int64_t> timestamp, std::string_view text) {
  if (conversation_id.empty() || speaker_id.empty()) return std::nullopt;
  std::string normalized = normalize_text(text);
  if (normalized.empty()) return std::nullopt;
  return RawRow{std::move(conversation_id), std::move(speaker_id), timestamp, std::move(normalized)};
}

ParseReport assemble(std::vector<RawRow> rows, std::size_t total, std::vector<std::size_t> malformed) {
  if (malformed.size() * 2 > total) {
    throw CorpusRejectedError(std::to_string(malformed.size()) + " of " + std::to_string(total) +
                              " records malformed");
  }

  ParseReport report;
  report.total_lines = total;
  report.malformed_lines = malformed.size();
  report.malformed_line_numbers = std::move(malformed);

  Corpus& corpus = report.corpus;
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::optional<std::int64_t>> last_timestamp;
  for (auto& row : rows) {
    auto [it, inserted] = slot.try_emplace(row.conversation_id, corpus.conversations.size());
    if (inserted) {
      corpus.conversations.push_back(Conversation{row.conversation_id, {}});
      last_timestamp.emplace_back();
    }
    auto& prev = last_timestamp[it->second];
    const std::int64_t ts = row.timestamp.value_or(prev.value_or(0));
    prev = ts;
    corpus.conversations[it->second].utterances.push_back(
        Utterance{0, std::move(row.conversation_id), std::move(row.speaker_id), ts, std::move(row.text)});
  }

  UtteranceId next_id = 0;
  for (auto& conv : corpus.conversations) {
    std::stable_sort(conv.utterances.begin(), conv.utterances.end(),
                     [](const Utterance& a, const Utterance& b) { return a.timestamp < b.timestamp; });
    for (auto& u : conv.utterances) u.id = next_id++;
  }
  corpus.refresh_speakers();
  return report;
}

}  // namespace detail

ParseReport parse_jsonl(std::istream& in) {
  using nlohmann::json;
  std::vector<detail::RawRow> rows;
  std::vector<std::size_t> malformed;
  std::size_t total = 0;
  std::size_t line_no = 0;
  std::string line;

  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    ++total;

    std::optional<detail::RawRow> row;
    try {
      const json obj = json::parse(line);
      if (obj.is_object() && obj.contains("conversation_id") && obj.contains("speaker_id") &&
          obj.contains("text") && obj["conversation_id"].is_string() && obj["speaker_id"].is_string() &&
          obj["text"].is_string()) {
        std::optional<std::int64_t> ts;
        bool ts_ok = true;
        if (auto it = obj.find("timestamp"); it != obj.end() && !it->is_null()) {
          if (it->is_number_integer())
            ts = it->get<std::int64_t>();
          else
            ts_ok = false;
        }
        if (ts_ok)
          row = detail::make_row(obj["conversation_id"].get<std::string>(), obj["speaker_id"].get<std::string>(),
                                 ts, obj["text"].get_ref<const std::string&>());
      }
    } catch (const json::exception&) {
    }

    if (row)
      rows.push_back(std::move(*row));
    else
      malformed.push_back(line_no);
  }
  if (in.bad()) throw IngestionError("read error after line " + std::to_string(line_no));

  return detail::assemble(std::move(rows), total, std::move(malformed));
}

void write_jsonl(const Corpus& corpus, std::ostream& out) {
  for (const auto& conv : corpus.conversations) {
    for (const auto& u : conv.utterances) {
      nlohmann::ordered_json obj;
      obj["conversation_id"] = u.conversation_id;
      obj["speaker_id"] = u.speaker_id;
      obj["timestamp"] = u.timestamp;
      obj["text"] = u.text;
      out << obj.dump() << '\n';
    }
  }
}

Conversation collapse_consecutive(const Conversation& conversation, std::string_view joiner) {
  Conversation out{conversation.conversation_id, {}};
  for (const auto& u : conversation.utterances) {
    if (!out.utterances.empty() && out.utterances.back().speaker_id == u.speaker_id) {
      auto& merged = out.utterances.back();
      merged.text.append(joiner);
      merged.text.append(u.text);
    } else {
      out.utterances.push_back(u);
    }
  }
  return out;
}

Corpus collapse_corpus(const Corpus& corpus, std::string_view joiner) {
  Corpus out;
  out.conversations.reserve(corpus.conversations.size());
  for (const auto& conv : corpus.conversations) out.conversations.push_back(collapse_consecutive(conv, joiner));
  out.speakers = corpus.speakers;
  return out;
}

CorpusSplit chronological_split(const Corpus& corpus, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw SplitError("test fraction must lie in (0, 1)");
  const std::size_t total = corpus.utterance_count();
  if (total == 0) throw SplitError("cannot split an empty corpus");

  const auto& convs = corpus.conversations;
  // boundary[c] = index of the first test utterance in conversation c.
  std::vector<std::size_t> boundary(convs.size());
  std::map<SpeakerId, std::size_t> train_speakers;
  for (std::size_t c = 0; c < convs.size(); ++c) {
    const std::size_t n = convs[c].utterances.size();
    const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n) + 1e-9));
    boundary[c] = n - std::min(n, n_test);
    for (std::size_t j = 0; j < boundary[c]; ++j) ++train_speakers[convs[c].utterances[j].speaker_id];
  }

  std::size_t moved = 0;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t c = 0; c < convs.size(); ++c) {
      const auto& utts = convs[c].utterances;
      for (std::size_t j = boundary[c]; j < utts.size(); ++j) {
        if (train_speakers.contains(utts[j].speaker_id)) continue;
        for (std::size_t m = boundary[c]; m <= j; ++m) ++train_speakers[utts[m].speaker_id];
        moved += j + 1 - boundary[c];
        boundary[c] = j + 1;
        changed = true;
      }
    }
  }

  CorpusSplit split;
  std::size_t test_count = 0;
  std::optional<std::int64_t> min_test, max_train;
  for (std::size_t c = 0; c < convs.size(); ++c) {
    const auto& utts = convs[c].utterances;
    const auto cut = utts.begin() + static_cast<std::ptrdiff_t>(boundary[c]);
    if (cut != utts.begin()) {
      split.train.conversations.push_back(Conversation{convs[c].conversation_id, {utts.begin(), cut}});
      max_train = std::max(max_train.value_or(INT64_MIN), (cut - 1)->timestamp);
    }
    if (cut != utts.end()) {
      split.test.conversations.push_back(Conversation{convs[c].conversation_id, {cut, utts.end()}});
      test_count += static_cast<std::size_t>(utts.end() - cut);
      min_test = std::min(min_test.value_or(INT64_MAX), cut->timestamp);
    }
  }
  if (split.train.empty()) throw SplitError("test fraction leaves the training set empty");

  split.train.refresh_speakers();
  split.test.refresh_speakers();
  split.boundary_timestamp = min_test ? *min_test : *max_train;
  split.realized_fraction = static_cast<double>(test_count) / static_cast<double>(total);
  split.moved_for_coverage = moved;
  return split;
}

}  // namespace clonebot
