#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "clonebot/bundle.hpp"
#include "clonebot/corpus.hpp"
#include "clonebot/error.hpp"
#include "clonebot/text.hpp"
#include "support/test_support.hpp"

using namespace clonebot;
using clonebot::fixtures::make_corpus;
using clonebot::fixtures::Turn;

namespace {

ParseReport parse(const std::string& s) {
  std::istringstream in(s);
  return parse_jsonl(in);
}

std::string line(const std::string& conv, const std::string& spk, long ts, const std::string& text) {
  return R"({"conversation_id":")" + conv + R"(","speaker_id":")" + spk + R"(","timestamp":)" + std::to_string(ts) +
         R"(,"text":")" + text + "\"}\n";
}

std::vector<std::pair<std::string, std::string>> turns(const Conversation& c) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& u : c.utterances) out.emplace_back(u.speaker_id, u.text);
  return out;
}

std::size_t non_ws_chars(const std::string& s) {
  std::size_t n = 0;
  for (const auto& w : split_whitespace(s)) n += w.size();
  return n;
}

}  // namespace

TEST(ParseJsonl, ThreeLinesTwoSpeakers) {
  const auto r = parse(line("c", "A", 1, "hi") + line("c", "B", 2, "hello") + line("c", "A", 3, "bye"));
  ASSERT_EQ(r.corpus.conversations.size(), 1u);
  EXPECT_EQ(r.corpus.utterance_count(), 3u);
  EXPECT_EQ(r.corpus.speakers, (std::set<SpeakerId>{"A", "B"}));
  EXPECT_EQ(r.malformed_lines, 0u);
  const auto& u = r.corpus.conversations[0].utterances;
  EXPECT_EQ(u[0].id, 0u);
  EXPECT_EQ(u[1].id, 1u);
  EXPECT_EQ(u[2].id, 2u);
  EXPECT_EQ(u[1].text, "hello");
  EXPECT_EQ(u[1].timestamp, 2);
}

TEST(ParseJsonl, EmptyStream) {
  const auto r = parse("");
  EXPECT_TRUE(r.corpus.conversations.empty());
  EXPECT_EQ(r.total_lines, 0u);
}

TEST(ParseJsonl, EmptyTextIsMalformed) {
  const auto r = parse(line("c", "A", 1, "a") + line("c", "B", 2, "   ") + line("c", "A", 3, "b") + line("c", "B", 4, "c"));
  EXPECT_EQ(r.corpus.utterance_count(), 3u);
  EXPECT_EQ(r.malformed_lines, 1u);
  EXPECT_EQ(r.malformed_line_numbers, std::vector<std::size_t>{2});
  std::ostringstream report;
  write_malformed_report(r, report);
  EXPECT_NE(report.str().find("1 of 4"), std::string::npos);
}

TEST(ParseJsonl, VariousMalformedShapes) {
  const std::string good = line("c", "A", 1, "ok") + line("c", "B", 2, "fine") + line("c", "A", 3, "sure");
  const auto r = parse(good + "not json\n" + R"({"conversation_id":"c","speaker_id":"A","timestamp":1.5,"text":"x"})" +
                       "\n" + R"({"conversation_id":"c","timestamp":4,"text":"x"})" + "\n");
  EXPECT_EQ(r.corpus.utterance_count(), 3u);
  EXPECT_EQ(r.malformed_lines, 3u);
}

TEST(ParseJsonl, MajorityMalformedRejected) {
  EXPECT_THROW(parse(line("c", "A", 1, "a") + "x\n" + "y\n"), CorpusRejectedError);
  EXPECT_NO_THROW(parse(line("c", "A", 1, "a") + "x\n"));  // exactly half is tolerated
}

TEST(ParseJsonl, MissingTimestampInheritsPrevious) {
  const auto r = parse(line("c", "A", 50, "a") + R"({"conversation_id":"c","speaker_id":"B","text":"b"})" + "\n" +
                       R"({"conversation_id":"d","speaker_id":"B","text":"c"})" + "\n");
  EXPECT_EQ(r.corpus.conversations[0].utterances[1].timestamp, 50);
  EXPECT_EQ(r.corpus.conversations[1].utterances[0].timestamp, 0);
}

TEST(ParseJsonl, NormalizesToNfcAndTrims) {
  // "e" + combining acute -> precomposed U+00E9.
  const auto r = parse(line("c", "A", 1, "  cafe\\u0301 \\t"));
  EXPECT_EQ(r.corpus.conversations[0].utterances[0].text, "caf\xC3\xA9");
}

TEST(ParseJsonl, GroupsConversationsAndOrdersByTime) {
  const auto r = parse(line("x", "A", 5, "x1") + line("y", "B", 1, "y1") + line("x", "B", 3, "x0") + line("y", "A", 2, "y2"));
  ASSERT_EQ(r.corpus.conversations.size(), 2u);
  EXPECT_EQ(r.corpus.conversations[0].conversation_id, "x");
  EXPECT_EQ(r.corpus.conversations[0].utterances[0].text, "x0");
  EXPECT_EQ(r.corpus.conversations[0].utterances[1].text, "x1");
  UtteranceId expect = 0;
  for (const auto& c : r.corpus.conversations)
    for (const auto& u : c.utterances) EXPECT_EQ(u.id, expect++);
}

TEST(ParseJsonl, IoFailure) {
  std::istringstream in;
  in.setstate(std::ios::badbit);
  EXPECT_THROW(parse_jsonl(in), IngestionError);
}

TEST(Collapse, MergesRun) {
  const auto c = make_corpus({{{"A", "Hey"}, {"A", "How's it going?"}}});
  const auto out = collapse_consecutive(c.conversations[0]);
  ASSERT_EQ(out.utterances.size(), 1u);
  EXPECT_EQ(out.utterances[0].text, "Hey How's it going?");
  EXPECT_EQ(out.utterances[0].id, c.conversations[0].utterances[0].id);
  EXPECT_EQ(out.utterances[0].timestamp, c.conversations[0].utterances[0].timestamp);
}

TEST(Collapse, NoAdjacentRepeatsUnchanged) {
  const auto c = make_corpus({{{"A", "x"}, {"B", "y"}, {"A", "z"}}});
  EXPECT_EQ(collapse_consecutive(c.conversations[0]), c.conversations[0]);
}

TEST(Collapse, RunOfThree) {
  const auto c = make_corpus({{{"A", "a"}, {"A", "b"}, {"A", "c"}, {"B", "d"}}});
  const auto out = collapse_consecutive(c.conversations[0]);
  using P = std::pair<std::string, std::string>;
  EXPECT_EQ(turns(out), (std::vector<P>{{"A", "a b c"}, {"B", "d"}}));
}

TEST(Collapse, CustomJoiner) {
  const auto c = make_corpus({{{"A", "Hey"}, {"A", "there"}}});
  EXPECT_EQ(collapse_consecutive(c.conversations[0], "\n").utterances[0].text, "Hey\nthere");
}

TEST(Collapse, IdempotentAndContentPreservingOnRandomCorpora) {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 200; ++i) {
    const Corpus c = fixtures::random_corpus(gen, 4, 12, 3, /*collapsed=*/false);
    const Corpus once = collapse_corpus(c);
    EXPECT_EQ(collapse_corpus(once), once);
    for (std::size_t k = 0; k < c.conversations.size(); ++k) {
      std::size_t before = 0, after = 0;
      for (const auto& u : c.conversations[k].utterances) before += non_ws_chars(u.text);
      for (const auto& u : once.conversations[k].utterances) after += non_ws_chars(u.text);
      EXPECT_EQ(before, after);
      const auto& us = once.conversations[k].utterances;
      for (std::size_t j = 1; j < us.size(); ++j) EXPECT_NE(us[j].speaker_id, us[j - 1].speaker_id);
    }
  }
}

TEST(Split, TenUtterancesFractionPointTwo) {
  std::vector<Turn> t;
  for (int i = 0; i < 10; ++i) t.push_back({i % 2 ? "B" : "A", "m" + std::to_string(i)});
  const auto s = chronological_split(make_corpus({t}), 0.2);
  EXPECT_EQ(s.train.utterance_count(), 8u);
  ASSERT_EQ(s.test.utterance_count(), 2u);
  EXPECT_EQ(s.test.conversations[0].utterances[0].text, "m8");
  EXPECT_EQ(s.test.conversations[0].utterances[1].text, "m9");
  EXPECT_DOUBLE_EQ(s.realized_fraction, 0.2);
  EXPECT_EQ(s.boundary_timestamp, 9000);
  EXPECT_EQ(s.moved_for_coverage, 0u);
}

TEST(Split, CoverageRepairMovesLateSpeakerToTrain) {
  // A B A B A B A B C C: the split point starts at index 8; C is uncovered
  // there, so index 8 moves to train, after which index 9 is covered.
  std::vector<Turn> t;
  for (int i = 0; i < 8; ++i) t.push_back({i % 2 ? "B" : "A", "m" + std::to_string(i)});
  t.push_back({"C", "m8"});
  t.push_back({"C", "m9"});
  const auto s = chronological_split(make_corpus({t}), 0.2);
  ASSERT_EQ(s.test.utterance_count(), 1u);
  EXPECT_EQ(s.test.conversations[0].utterances[0].text, "m9");
  EXPECT_EQ(s.train.utterance_count(), 9u);
  EXPECT_EQ(s.moved_for_coverage, 1u);
  EXPECT_DOUBLE_EQ(s.realized_fraction, 0.1);
  EXPECT_TRUE(s.train.speakers.contains("C"));
}

TEST(Split, TinyCorpusWithLargeFraction) {
  // floor(0.99 * 2) = 1 -> a 1/1 split; train is never emptied.
  const auto s = chronological_split(make_corpus({{{"A", "x"}, {"A", "y"}}}), 0.99);
  EXPECT_EQ(s.train.utterance_count(), 1u);
  EXPECT_EQ(s.test.utterance_count(), 1u);
}

TEST(Split, Errors) {
  EXPECT_THROW(chronological_split(Corpus{}, 0.2), SplitError);
  const auto c = fixtures::ab_fixture();
  EXPECT_THROW(chronological_split(c, 0.0), SplitError);
  EXPECT_THROW(chronological_split(c, 1.0), SplitError);
  EXPECT_THROW(chronological_split(c, -0.5), SplitError);
}

TEST(Split, InvariantsOnRandomCorpora) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> frac(0.05, 0.95);
  for (int i = 0; i < 200; ++i) {
    const Corpus c = fixtures::random_corpus(gen, 5, 15, 5);
    CorpusSplit s;
    try {
      s = chronological_split(c, frac(gen));
    } catch (const SplitError&) {
      continue;
    }
    EXPECT_EQ(s.train.utterance_count() + s.test.utterance_count(), c.utterance_count());
    for (const auto& sp : s.test.speakers) EXPECT_TRUE(s.train.speakers.contains(sp)) << sp;
    std::map<std::string, std::int64_t> last_train;
    for (const auto& conv : s.train.conversations) last_train[conv.conversation_id] = conv.utterances.back().timestamp;
    for (const auto& conv : s.test.conversations)
      for (const auto& u : conv.utterances)
        if (last_train.contains(conv.conversation_id)) EXPECT_GE(u.timestamp, last_train[conv.conversation_id]);
  }
}

TEST(Jsonl, RoundTripIdentity) {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 50; ++i) {
    const Corpus c = fixtures::random_corpus(gen, 4, 10, 3);
    std::ostringstream out;
    write_jsonl(c, out);
    std::istringstream in(out.str());
    const auto back = parse_jsonl(in);
    EXPECT_EQ(back.corpus, c);
    std::ostringstream again;
    write_jsonl(back.corpus, again);
    EXPECT_EQ(again.str(), out.str());
  }
}

TEST(Csv, TwoRowsDefaultColumns) {
  std::istringstream in("conversation_id,speaker_id,timestamp,text\nc,A,1,hi\nc,B,2,hello\n");
  EXPECT_EQ(parse_csv(in).corpus.utterance_count(), 2u);
}

TEST(Csv, MissingSpeakerColumn) {
  std::istringstream in("conversation_id,timestamp,text\nc,1,hi\n");
  EXPECT_THROW(parse_csv(in), SchemaError);
}

TEST(Csv, QuotedFieldsMatchReferenceReader) {
  // Expected texts come from Python's csv module on the same file.
  std::istringstream in(fixtures::read_text(fixtures::source_dir() / "tests/data/quoted.csv"));
  const auto r = parse_csv(in);
  ASSERT_EQ(r.corpus.conversations.size(), 2u);
  const auto& c1 = r.corpus.conversations[0].utterances;
  ASSERT_EQ(c1.size(), 3u);
  EXPECT_EQ(c1[0].text, "Hello, world");
  EXPECT_EQ(c1[1].text, "line one\nline two, with \"quotes\"");
  EXPECT_EQ(c1[2].text, "plain text");
  EXPECT_EQ(r.corpus.conversations[1].utterances[0].text, "trailing, comma,");
  EXPECT_EQ(r.corpus.conversations[1].utterances[0].speaker_id, "C");
  EXPECT_EQ(c1[1].timestamp, 200);
}

TEST(Csv, CustomColumnNames) {
  std::istringstream in("msg,who,when,chat\nhi,A,1,x\n");
  CsvColumns cols{"chat", "who", "when", "msg"};
  const auto r = parse_csv(in, cols);
  EXPECT_EQ(r.corpus.conversations[0].conversation_id, "x");
  EXPECT_EQ(r.corpus.conversations[0].utterances[0].text, "hi");
}

TEST(Bundle, SaveLoadReproducesSplit) {
  fixtures::TempDir dir;
  std::istringstream in(fixtures::read_text(fixtures::source_dir() / "data/synthetic_200.jsonl"));
  const auto parsed = parse_jsonl(in);
  const auto b = make_corpus_bundle(parsed, 0.2, " ", true);
  save_corpus_bundle(b, dir.path());
  const auto back = load_corpus_bundle(dir.path());
  EXPECT_EQ(back.corpus, b.corpus);
  EXPECT_EQ(back.split.train, b.split.train);
  EXPECT_EQ(back.split.test, b.split.test);
}
