#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "clonebot/context_builder.hpp"
#include "clonebot/generation.hpp"
#include "clonebot/retrieval.hpp"

namespace clonebot {

enum class ResponseMode { Retrieval, Sampler };

/// Reference-LM generation used by the "sampler" response mode.
struct GenerationBackend {
  std::shared_ptr<const Tokenizer> tokenizer;
  std::shared_ptr<const LanguageModel> model;
  FormatSpec format;
  SamplerConfig sampler;
};

struct ServiceConfig {
  std::size_t history_limit = 10;
  std::size_t k = 5;
  std::chrono::seconds session_ttl{3600};
  ResponseMode mode = ResponseMode::Retrieval;
};

struct ServiceResponse {
  int status = 200;
  nlohmann::ordered_json body;
};

struct HistoryEntry {
  SpeakerId speaker_id;
  std::string text;
  std::int64_t timestamp_ms = 0;
};

/// Transport-independent chat service: sessions with rolling history in
/// front of a shared, read-only engine.
///
/// All methods are thread-safe. Requests for one session are serialized on
/// that session's lock, so its history order equals request arrival order;
/// different sessions never share state.
class ChatService {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  ChatService(std::shared_ptr<const SpeakerIndexSet> engine, ServiceConfig config,
              std::shared_ptr<const GenerationBackend> generation = nullptr, Clock clock = {});

  /// POST /v1/sessions {"target_speaker": str} -> 201 {"session_id", "target_speaker"}
  ServiceResponse create_session(std::string_view body);
  /// POST /v1/sessions/{id}/messages {"speaker_id": str, "text": str}
  ServiceResponse post_message(const std::string& session_id, std::string_view body);
  /// DELETE /v1/sessions/{id} -> 204
  ServiceResponse delete_session(const std::string& session_id);
  /// GET /v1/speakers -> {"speakers": [...]}
  ServiceResponse speakers() const;
  /// GET /v1/health -> {"status": "ok", ...}
  ServiceResponse health() const;

  std::size_t session_count() const;
  /// Snapshot of a session's history; nullopt for unknown ids.
  std::optional<std::vector<HistoryEntry>> history(const std::string& session_id) const;
  void evict_expired();

 private:
  struct Session {
    std::mutex mu;
    std::string id;
    SpeakerId target;
    std::deque<HistoryEntry> history;
    std::chrono::steady_clock::time_point created_at;
    std::chrono::steady_clock::time_point last_used;
    std::unique_ptr<Sampler> sampler;
  };

  std::shared_ptr<Session> find(const std::string& id);
  std::string new_session_id();
  void push_history(Session& s, HistoryEntry e) const;
  nlohmann::ordered_json reply_retrieval(Session& s);
  nlohmann::ordered_json reply_sampler(Session& s);

  std::shared_ptr<const SpeakerIndexSet> engine_;
  ServiceConfig config_;
  std::shared_ptr<const GenerationBackend> generation_;
  Clock clock_;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t id_state_;
  std::uint64_t sessions_created_ = 0;
};

/// Loads JSON config keys onto `config` (history_limit, k, session_ttl_seconds,
/// mode). Unknown keys are ignored.
void apply_service_config(const nlohmann::json& json, ServiceConfig& config);

}  // namespace clonebot
