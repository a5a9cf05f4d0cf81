#include "clonebot/bundle.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "clonebot/binary_io.hpp"
#include "clonebot/error.hpp"

namespace clonebot {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

json read_json_file(const fs::path& path) {
  try {
    return json::parse(io::read_file(path.string()));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) { io::write_file(path.string(), text); }

template <typename T>
T field(const json& obj, const char* key, const fs::path& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(where.string() + ": missing or invalid \"" + key + "\"");
  }
}

}  // namespace

CorpusBundle make_corpus_bundle(const ParseReport& parsed, double test_fraction, std::string joiner, bool collapse) {
  CorpusBundle b;
  b.corpus = collapse ? collapse_corpus(parsed.corpus, joiner) : parsed.corpus;
  // Re-number so the saved corpus.jsonl reproduces these exact ids.
  UtteranceId next = 0;
  for (auto& conv : b.corpus.conversations)
    for (auto& u : conv.utterances) u.id = next++;
  b.split = chronological_split(b.corpus, test_fraction);
  b.test_fraction = test_fraction;
  b.joiner = std::move(joiner);
  b.collapsed = collapse;
  b.malformed_lines = parsed.malformed_lines;
  return b;
}

void save_corpus_bundle(const CorpusBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  auto dump = [](const Corpus& c) {
    std::ostringstream ss;
    write_jsonl(c, ss);
    return ss.str();
  };
  write_text_file(dir / "corpus.jsonl", dump(bundle.corpus));
  write_text_file(dir / "train.jsonl", dump(bundle.split.train));
  write_text_file(dir / "test.jsonl", dump(bundle.split.test));

  ordered_json meta;
  meta["format"] = "clonebot-corpus";
  meta["version"] = 1;
  meta["test_fraction"] = bundle.test_fraction;
  meta["joiner"] = bundle.joiner;
  meta["collapsed"] = bundle.collapsed;
  meta["conversations"] = bundle.corpus.conversations.size();
  meta["utterances"] = bundle.corpus.utterance_count();
  meta["speakers"] = bundle.corpus.speakers;
  meta["train_utterances"] = bundle.split.train.utterance_count();
  meta["test_utterances"] = bundle.split.test.utterance_count();
  meta["realized_test_fraction"] = bundle.split.realized_fraction;
  meta["moved_for_coverage"] = bundle.split.moved_for_coverage;
  meta["boundary_timestamp"] = bundle.split.boundary_timestamp;
  meta["malformed_lines"] = bundle.malformed_lines;
  write_text_file(dir / "bundle.json", meta.dump(2) + "\n");
}

CorpusBundle load_corpus_bundle(const fs::path& dir) {
  const fs::path meta_path = dir / "bundle.json";
  const json meta = read_json_file(meta_path);
  if (meta.value("format", "") != "clonebot-corpus") throw FormatError(meta_path.string() + ": not a corpus bundle");

  std::ifstream in(dir / "corpus.jsonl", std::ios::binary);
  if (!in) throw IngestionError("cannot open " + (dir / "corpus.jsonl").string());
  ParseReport parsed = parse_jsonl(in);
  if (parsed.malformed_lines != 0) throw FormatError("corpus bundle contains malformed lines");

  CorpusBundle b;
  b.corpus = std::move(parsed.corpus);
  b.test_fraction = field<double>(meta, "test_fraction", meta_path);
  b.joiner = field<std::string>(meta, "joiner", meta_path);
  b.collapsed = field<bool>(meta, "collapsed", meta_path);
  b.malformed_lines = field<std::size_t>(meta, "malformed_lines", meta_path);
  b.split = chronological_split(b.corpus, b.test_fraction);
  if (meta.contains("test_utterances") && meta["test_utterances"] != b.split.test.utterance_count())
    throw FormatError(meta_path.string() + ": recomputed split disagrees with recorded test_utterances");
  return b;
}

std::shared_ptr<const Embedder> embedder_from_fingerprint(const std::string& fingerprint) {
  constexpr std::string_view prefix = "hashing-v1/dim=";
  if (fingerprint.starts_with(prefix)) {
    try {
      std::size_t used = 0;
      const std::string digits = fingerprint.substr(prefix.size());
      const unsigned long dim = std::stoul(digits, &used);
      if (used == digits.size() && dim > 0) return std::make_shared<HashingEmbedder>(dim);
    } catch (const std::exception&) {
    }
  }
  throw FingerprintMismatchError("no embedder matches fingerprint '" + fingerprint + "'");
}

void save_engine(const SpeakerIndexSet& set, const fs::path& dir) {
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["format"] = "clonebot-engine";
  manifest["version"] = 1;
  manifest["embedder"] = set.embedder().fingerprint();
  manifest["metric"] = metric_name(set.metric());
  manifest["index_kind"] = index_kind_name(set.kind());
  manifest["dim"] = set.embedder().dim();
  manifest["context_turns"] = set.context_turns();
  manifest["targets"] = ordered_json::array();

  std::string pairs;
  std::size_t n = 0;
  for (const auto& target : set.targets()) {
    const SpeakerIndex& si = set.at(target);
    char name[32];
    std::snprintf(name, sizeof name, "index_%03zu.cbix", n++);
    si.index->save((dir / name).string());
    manifest["targets"].push_back({{"speaker_id", target}, {"index_file", name}, {"pairs", si.pairs.size()}});
    for (const auto& [record_id, rec] : si.pairs) {
      ordered_json row;
      row["target_speaker"] = rec.pair.target_speaker;
      row["record_id"] = record_id;
      row["context_id"] = rec.pair.context_id;
      row["response_id"] = rec.pair.response_id;
      row["context_ids"] = rec.context_ids;
      row["context_text"] = rec.context_text;
      row["response_text"] = rec.response_text;
      pairs += row.dump();
      pairs += '\n';
    }
  }
  write_text_file(dir / "pairs.jsonl", pairs);
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string engine_fingerprint(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  return field<std::string>(read_json_file(path), "embedder", path);
}

SpeakerIndexSet load_engine(const fs::path& dir, std::shared_ptr<const Embedder> embedder, std::size_t ef_search) {
  const fs::path manifest_path = dir / "manifest.json";
  const json manifest = read_json_file(manifest_path);
  if (manifest.value("format", "") != "clonebot-engine" || manifest.value("version", 0) != 1)
    throw FormatError(manifest_path.string() + ": not a version-1 engine bundle");

  const auto fingerprint = field<std::string>(manifest, "embedder", manifest_path);
  if (!embedder) embedder = embedder_from_fingerprint(fingerprint);
  if (embedder->fingerprint() != fingerprint)
    throw FingerprintMismatchError("engine was built with embedder '" + fingerprint + "' but '" +
                                   embedder->fingerprint() + "' was supplied");
  if (field<std::size_t>(manifest, "dim", manifest_path) != embedder->dim())
    throw FormatError("manifest dim disagrees with its embedder");

  Metric metric;
  IndexKind kind;
  try {
    metric = parse_metric(field<std::string>(manifest, "metric", manifest_path));
    kind = parse_index_kind(field<std::string>(manifest, "index_kind", manifest_path));
  } catch (const ParameterError& e) {
    throw FormatError(e.what());
  }
  SpeakerIndexSet set(embedder, metric, kind, field<std::size_t>(manifest, "context_turns", manifest_path));

  std::map<SpeakerId, std::map<std::uint64_t, PairRecord>> tables;
  {
    std::istringstream in(io::read_file((dir / "pairs.jsonl").string()));
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      if (line.empty()) continue;
      try {
        const json row = json::parse(line);
        PairRecord rec;
        rec.pair.target_speaker = row.at("target_speaker").get<std::string>();
        rec.pair.context_id = row.at("context_id").get<UtteranceId>();
        rec.pair.response_id = row.at("response_id").get<UtteranceId>();
        rec.context_ids = row.at("context_ids").get<std::vector<UtteranceId>>();
        rec.context_text = row.at("context_text").get<std::string>();
        rec.response_text = row.at("response_text").get<std::string>();
        const auto record_id = row.at("record_id").get<std::uint64_t>();
        if (!tables[rec.pair.target_speaker].emplace(record_id, std::move(rec)).second)
          throw FormatError("duplicate record id");
      } catch (const json::exception& e) {
        throw FormatError("pairs.jsonl line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  for (const auto& t : manifest.at("targets")) {
    const auto target = field<std::string>(t, "speaker_id", manifest_path);
    const auto file = field<std::string>(t, "index_file", manifest_path);
    if (file.find('/') != std::string::npos || file.find("..") != std::string::npos)
      throw FormatError("index file name escapes the bundle: " + file);
    SpeakerIndex si;
    si.index = VectorIndex::load((dir / file).string(), ef_search);
    if (si.index->metric() != metric || si.index->kind() != kind)
      throw FormatError(file + " disagrees with the manifest metric or kind");
    si.pairs = std::move(tables[target]);
    tables.erase(target);
    try {
      set.add_target(target, std::move(si));
    } catch (const StateError& e) {
      throw FormatError(file + ": " + e.what());
    } catch (const DimensionError& e) {
      throw FormatError(file + ": " + e.what());
    }
  }
  if (!tables.empty()) throw FormatError("pairs.jsonl has pairs for a speaker missing from the manifest");
  return set;
}

}  // namespace clonebot
