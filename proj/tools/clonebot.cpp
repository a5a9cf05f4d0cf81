// clonebot: ingest chat corpora, build per-speaker retrieval engines,
// evaluate them, and chat with them from a terminal or over HTTP.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "clonebot/bundle.hpp"
#include "clonebot/context_builder.hpp"
#include "clonebot/error.hpp"
#include "clonebot/evaluation.hpp"
#include "clonebot/generation.hpp"
#include "clonebot/http_server.hpp"
#include "clonebot/service.hpp"
#include "clonebot/text.hpp"

namespace fs = std::filesystem;
using namespace clonebot;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct SamplerFlags {
  std::string preset;
  std::size_t top_k = 0;  // 0: unlimited
  double top_p = 1.0;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::size_t max_new_tokens = 40;

  void attach(CLI::App* app) {
    app->add_option("--preset", preset, "Sampler preset: dialogpt | convai-medium | greedy (overrides the flags below)");
    app->add_option("--top-k", top_k, "Keep the k most probable tokens (0 = unlimited)");
    app->add_option("--top-p", top_p, "Nucleus mass in (0, 1]");
    app->add_option("--temperature", temperature, "Softmax temperature (> 0)");
    app->add_option("--seed", seed, "Sampler seed");
    app->add_option("--max-new-tokens", max_new_tokens, "Generation length cap");
  }

  SamplerConfig config() const {
    SamplerConfig c;
    if (!preset.empty()) {
      c = SamplerConfig::preset(preset);
    } else {
      if (top_k) c.top_k = top_k;
      c.top_p = top_p;
      c.temperature = temperature;
    }
    c.seed = seed;
    c.max_new_tokens = max_new_tokens;
    c.validate();
    return c;
  }
};

std::set<SpeakerId> parse_targets(const std::vector<std::string>& given, const Corpus& corpus) {
  if (given.empty()) return corpus.speakers;
  return {given.begin(), given.end()};
}

std::shared_ptr<const Embedder> resolve_embedder(const fs::path& engine_dir, std::size_t dim) {
  const std::string fp = engine_fingerprint(engine_dir);
  if (dim == 0) return embedder_from_fingerprint(fp);
  return std::make_shared<HashingEmbedder>(dim);
}

std::shared_ptr<const GenerationBackend> make_generation(const fs::path& corpus_dir, const SamplerConfig& cfg) {
  const CorpusBundle bundle = load_corpus_bundle(corpus_dir);
  auto tok = std::make_shared<WordTokenizer>(WordTokenizer::build(bundle.split.train));
  std::vector<std::vector<TokenId>> seqs;
  for (const auto& conv : bundle.split.train.conversations)
    for (const auto& u : conv.utterances) seqs.push_back(tok->encode(u.text));
  auto lm = std::make_shared<BigramLanguageModel>(BigramLanguageModel::train(seqs, tok->vocab_size(), tok->eos_id()));
  auto gen = std::make_shared<GenerationBackend>();
  gen->tokenizer = tok;
  gen->model = lm;
  gen->sampler = cfg;
  return gen;
}

const char* env_or(const char* name, const char* fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clonebot: speaker-cloning dialogue engine"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse, collapse and split a chat corpus into a corpus bundle");
  std::string in_path, in_format, out_dir, joiner = " ";
  double test_fraction = 0.2;
  bool no_collapse = false;
  CsvColumns csv_cols;
  ingest->add_option("--input", in_path, "JSONL or CSV chat export")->required()->check(CLI::ExistingFile);
  ingest->add_option("--format", in_format, "jsonl | csv (default: by extension)");
  ingest->add_option("--out", out_dir, "Corpus bundle directory")->required();
  ingest->add_option("--test-fraction", test_fraction, "Trailing fraction of each conversation held out");
  ingest->add_option("--joiner", joiner, "Separator when collapsing consecutive messages");
  ingest->add_flag("--no-collapse", no_collapse, "Keep consecutive same-speaker messages separate");
  ingest->add_option("--csv-conversation-column", csv_cols.conversation_id, "CSV header of the conversation id");
  ingest->add_option("--csv-speaker-column", csv_cols.speaker_id, "CSV header of the speaker id");
  ingest->add_option("--csv-timestamp-column", csv_cols.timestamp, "CSV header of the timestamp (ms)");
  ingest->add_option("--csv-text-column", csv_cols.text, "CSV header of the message text");

  // build-engine
  auto* build = app.add_subcommand("build-engine", "Build per-speaker retrieval indexes from a corpus bundle");
  std::string corpus_dir, engine_dir, metric = "cosine", index_kind = "flat";
  std::vector<std::string> targets;
  std::size_t dim = HashingEmbedder::kDefaultDim, context_turns = 1;
  HnswParams hnsw;
  build->add_option("--corpus", corpus_dir, "Corpus bundle directory")->required()->check(CLI::ExistingDirectory);
  build->add_option("--out", engine_dir, "Engine bundle directory")->required();
  build->add_option("--targets", targets, "Speakers to clone (default: all)")->delimiter(',');
  build->add_option("--metric", metric, "cosine | l2");
  build->add_option("--index", index_kind, "flat | hnsw");
  build->add_option("--dim", dim, "Embedding dimension");
  build->add_option("--context-turns", context_turns, "Utterances per retrieval key");
  build->add_option("--m", hnsw.m, "HNSW links per node");
  build->add_option("--ef-construction", hnsw.ef_construction, "HNSW build beam width");
  build->add_option("--ef-search", hnsw.ef_search, "HNSW query beam width");
  build->add_option("--seed", hnsw.seed, "HNSW level seed");

  // eval
  auto* eval = app.add_subcommand("eval", "Score an engine on the corpus bundle's test split");
  std::size_t eval_dim = 0, k = 1;
  std::string tsv_path, report_path;
  std::vector<std::string> eval_targets;
  bool with_ppl = false;
  eval->add_option("--corpus", corpus_dir, "Corpus bundle directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--engine", engine_dir, "Engine bundle directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--dim", eval_dim, "Embedder dimension (default: the engine's)");
  eval->add_option("--k", k, "Neighbors retrieved per query");
  eval->add_option("--targets", eval_targets, "Speakers to score (default: all engine targets)")->delimiter(',');
  eval->add_option("--tsv", tsv_path, "Write the parallel dataset here");
  eval->add_option("--report", report_path, "Write the JSON report here (default: stdout)");
  eval->add_flag("--perplexity", with_ppl, "Also report reference bigram LM perplexity on the test split");
  eval->add_option("--ef-search", hnsw.ef_search, "HNSW query beam width");

  // chat
  auto* chat = app.add_subcommand("chat", "Talk to a cloned speaker in the terminal");
  std::string target, mode = "retrieval", speaker = "user";
  std::vector<std::string> message;
  std::size_t chat_dim = 0, history_limit = 10;
  SamplerFlags sampler_flags;
  chat->add_option("--engine", engine_dir, "Engine bundle directory")->required()->check(CLI::ExistingDirectory);
  chat->add_option("--target", target, "Speaker to clone")->required();
  chat->add_option("--speaker", speaker, "Your speaker id in the conversation");
  chat->add_option("--k", k, "Candidates retrieved per reply");
  chat->add_option("--dim", chat_dim, "Embedder dimension (default: the engine's)");
  chat->add_option("--history", history_limit, "Rolling history length");
  chat->add_option("--mode", mode, "retrieval | sampler");
  chat->add_option("--corpus", corpus_dir, "Corpus bundle (sampler mode trains its LM on it)");
  chat->add_option("message", message, "One-shot message; omit for an interactive session");
  sampler_flags.attach(chat);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP chat service");
  std::string addr = env_or("CLONEBOT_ADDR", "127.0.0.1:8080");
  std::string serve_engine = env_or("CLONEBOT_ENGINE", "");
  std::string config_path;
  std::size_t serve_k = 5;
  std::int64_t ttl = 3600;
  // Precedence: explicit flag, then --config file, then environment, then default.
  auto* serve_addr_opt = serve->add_option("--addr", addr, "host:port to listen on (env CLONEBOT_ADDR)");
  auto* serve_engine_opt = serve->add_option("--engine", serve_engine, "Engine bundle directory (env CLONEBOT_ENGINE)");
  serve->add_option("--config", config_path, "JSON config file (keys: engine, corpus, addr, history_limit, k, session_ttl_seconds, mode)")
      ->check(CLI::ExistingFile);
  auto* serve_k_opt = serve->add_option("--k", serve_k, "Candidates returned per reply");
  auto* serve_history_opt = serve->add_option("--history", history_limit, "Rolling history length per session");
  auto* serve_ttl_opt = serve->add_option("--session-ttl", ttl, "Idle seconds before a session is evicted");
  auto* serve_mode_opt = serve->add_option("--mode", mode, "retrieval | sampler");
  auto* serve_corpus_opt = serve->add_option("--corpus", corpus_dir, "Corpus bundle (sampler mode trains its LM on it)");
  sampler_flags.attach(serve);

  // export-training
  auto* exp = app.add_subcommand("export-training", "Write speaker-conditioned training examples as JSONL");
  std::string format = "plain", out_file, vocab_file;
  std::size_t max_turns = 5, max_tokens = 1024;
  exp->add_option("--corpus", corpus_dir, "Corpus bundle directory")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--format", format, "plain | leading_speaker | per_utterance_speaker | speaker_token_types");
  exp->add_option("--max-turns", max_turns, "Context utterances per example");
  exp->add_option("--max-tokens", max_tokens, "Token budget per example");
  exp->add_option("--out", out_file, "Training JSONL output")->required();
  exp->add_option("--vocab", vocab_file, "Vocabulary output (one token per line)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*ingest) {
      std::ifstream in(in_path, std::ios::binary);
      if (!in) throw IngestionError("cannot open " + in_path);
      const bool csv = in_format == "csv" || (in_format.empty() && fs::path(in_path).extension() == ".csv");
      if (!in_format.empty() && in_format != "csv" && in_format != "jsonl") throw ParameterError("unknown --format");
      const ParseReport parsed = csv ? parse_csv(in, csv_cols) : parse_jsonl(in);
      write_malformed_report(parsed, std::cerr);
      const CorpusBundle bundle = make_corpus_bundle(parsed, test_fraction, joiner, !no_collapse);
      save_corpus_bundle(bundle, out_dir);
      std::cout << "conversations=" << bundle.corpus.conversations.size()
                << " utterances=" << bundle.corpus.utterance_count() << " speakers=" << bundle.corpus.speakers.size()
                << " train=" << bundle.split.train.utterance_count() << " test=" << bundle.split.test.utterance_count()
                << "\n";
      return 0;
    }

    if (*build) {
      const CorpusBundle bundle = load_corpus_bundle(corpus_dir);
      EngineOptions opts;
      opts.metric = parse_metric(metric);
      opts.kind = parse_index_kind(index_kind);
      opts.context_turns = context_turns;
      opts.hnsw = hnsw;
      const auto set = build_speaker_indexes(bundle.split.train, parse_targets(targets, bundle.split.train),
                                             std::make_shared<HashingEmbedder>(dim), opts);
      save_engine(set, engine_dir);
      for (const auto& t : set.targets()) std::cout << t << '\t' << set.at(t).pairs.size() << " pairs\n";
      return 0;
    }

    if (*eval) {
      const CorpusBundle bundle = load_corpus_bundle(corpus_dir);
      const auto engine = load_engine(engine_dir, resolve_embedder(engine_dir, eval_dim), hnsw.ef_search);
      const auto tv = engine.targets();
      const std::set<SpeakerId> tset = eval_targets.empty() ? std::set<SpeakerId>(tv.begin(), tv.end())
                                                            : std::set<SpeakerId>(eval_targets.begin(), eval_targets.end());
      const auto result = run_retrieval_eval(bundle.split, engine, tset, k);
      for (const auto& note : result.skipped) std::cerr << "skipped: " << note << '\n';

      nlohmann::ordered_json report;
      report["bleu"] = to_json(result.bleu);
      report["pairs"] = result.rows.size();
      report["no_answer"] = result.no_answer;
      report["skipped"] = result.skipped;
      if (with_ppl) {
        WordTokenizer tok = WordTokenizer::build(bundle.split.train);
        std::vector<std::vector<TokenId>> train_seqs, test_seqs;
        for (const auto& conv : bundle.split.train.conversations)
          for (const auto& u : conv.utterances) train_seqs.push_back(tok.encode(u.text));
        for (const auto& conv : bundle.split.test.conversations)
          for (const auto& u : conv.utterances) test_seqs.push_back(tok.encode(u.text));
        const auto lm = BigramLanguageModel::train(train_seqs, tok.vocab_size(), tok.eos_id());
        report["perplexity"] = to_json(perplexity(lm, test_seqs, tok.eos_id()));
      }

      if (!tsv_path.empty()) {
        std::ofstream tsv(tsv_path, std::ios::binary);
        write_parallel_tsv(result.rows, tsv);
        if (!tsv) throw IngestionError("cannot write " + tsv_path);
      }
      const std::string text = report.dump(2) + "\n";
      if (report_path.empty()) {
        std::cout << text;
      } else {
        std::ofstream out(report_path, std::ios::binary);
        out << text;
        if (!out) throw IngestionError("cannot write " + report_path);
      }
      return 0;
    }

    if (*chat) {
      auto engine = std::make_shared<const SpeakerIndexSet>(load_engine(engine_dir, resolve_embedder(engine_dir, chat_dim)));
      ServiceConfig cfg;
      cfg.k = k;
      cfg.history_limit = history_limit;
      std::shared_ptr<const GenerationBackend> gen;
      if (mode == "sampler") {
        if (corpus_dir.empty()) throw ParameterError("sampler mode needs --corpus");
        cfg.mode = ResponseMode::Sampler;
        gen = make_generation(corpus_dir, sampler_flags.config());
      } else if (mode != "retrieval") {
        throw ParameterError("unknown --mode " + mode);
      }
      ChatService service(engine, cfg, gen);
      nlohmann::json create;
      create["target_speaker"] = target;
      auto created = service.create_session(create.dump());
      if (created.status != 201) throw UnknownSpeakerError(created.body.value("message", "cannot create session"));
      const std::string sid = created.body["session_id"];

      auto say = [&](const std::string& text) {
        nlohmann::json msg;
        msg["speaker_id"] = speaker;
        msg["text"] = text;
        const auto r = service.post_message(sid, msg.dump());
        if (r.status != 200) throw ParameterError(r.body.value("message", "request failed"));
        if (r.body["response_text"].is_null())
          std::cout << "(no answer: " << r.body.value("reason", "unknown") << ")\n";
        else
          std::cout << r.body["response_text"].get<std::string>() << "\n";
      };

      if (!message.empty()) {
        say(join(message, " "));
        return 0;
      }
      for (std::string line; std::cout << "> " << std::flush, std::getline(std::cin, line);) {
        if (is_blank(line)) continue;
        say(line);
      }
      return 0;
    }

    if (*serve) {
      ServiceConfig cfg;
      if (!config_path.empty()) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(std::ifstream(config_path));
          if (j.contains("engine") && !serve_engine_opt->count()) serve_engine = j["engine"].get<std::string>();
          if (j.contains("corpus") && !serve_corpus_opt->count()) corpus_dir = j["corpus"].get<std::string>();
          if (j.contains("addr") && !serve_addr_opt->count()) addr = j["addr"].get<std::string>();
        } catch (const nlohmann::json::exception& e) {
          throw FormatError(config_path + ": " + e.what());
        }
        apply_service_config(j, cfg);
      }
      if (serve_k_opt->count()) cfg.k = serve_k;
      if (serve_history_opt->count()) cfg.history_limit = history_limit;
      if (serve_ttl_opt->count()) cfg.session_ttl = std::chrono::seconds(ttl);
      if (serve_mode_opt->count()) {
        if (mode == "sampler") cfg.mode = ResponseMode::Sampler;
        else if (mode == "retrieval") cfg.mode = ResponseMode::Retrieval;
        else throw ParameterError("unknown --mode " + mode);
      }
      if (serve_engine.empty()) throw ParameterError("no engine: pass --engine, set CLONEBOT_ENGINE or use --config");
      auto engine = std::make_shared<const SpeakerIndexSet>(load_engine(serve_engine, nullptr, hnsw.ef_search));
      std::shared_ptr<const GenerationBackend> gen;
      if (cfg.mode == ResponseMode::Sampler) {
        if (corpus_dir.empty()) throw ParameterError("sampler mode needs --corpus");
        gen = make_generation(corpus_dir, sampler_flags.config());
      }
      ChatService service(engine, cfg, gen);
      HttpServer server(service);
      const auto [host, port] = parse_address(addr);
      const int bound = server.bind(host, port);
      if (bound < 0) throw ParameterError("cannot bind " + addr);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << host << ":" << bound << "\n";
      server.listen_after_bind();
      g_server = nullptr;
      return 0;
    }

    if (*exp) {
      const CorpusBundle bundle = load_corpus_bundle(corpus_dir);
      const WordTokenizer tok = WordTokenizer::build(bundle.split.train);
      FormatSpec spec;
      spec.variant = parse_format_name(format);
      spec.max_turns = max_turns;
      spec.max_tokens = max_tokens;
      const auto examples = build_training_set(bundle.split.train, spec, tok);
      std::ofstream out(out_file, std::ios::binary);
      write_training_jsonl(examples, out);
      if (!out) throw IngestionError("cannot write " + out_file);
      if (!vocab_file.empty()) {
        std::ofstream v(vocab_file, std::ios::binary);
        tok.save_vocabulary(v);
        if (!v) throw IngestionError("cannot write " + vocab_file);
      }
      std::cout << examples.size() << " examples\n";
      return 0;
    }
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
