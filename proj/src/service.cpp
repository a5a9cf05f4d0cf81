#include "clonebot/service.hpp"

#include <random>

#include "clonebot/error.hpp"
#include "clonebot/rng.hpp"
#include "clonebot/text.hpp"

namespace clonebot {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ServiceResponse error_response(int status, std::string_view reason, std::string_view message) {
  ordered_json body;
  body["error"] = reason;
  body["message"] = message;
  return {status, std::move(body)};
}

std::optional<json> parse_object(std::string_view body) {
  try {
    json j = json::parse(body);
    if (j.is_object()) return j;
  } catch (const json::exception&) {
  }
  return std::nullopt;
}

std::int64_t wall_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

ChatService::ChatService(std::shared_ptr<const SpeakerIndexSet> engine, ServiceConfig config,
                         std::shared_ptr<const GenerationBackend> generation, Clock clock)
    : engine_(std::move(engine)),
      config_(config),
      generation_(std::move(generation)),
      clock_(clock ? std::move(clock) : Clock([] { return std::chrono::steady_clock::now(); })),
      id_state_((static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}()) {
  if (!engine_) throw ParameterError("chat service needs an engine");
  if (config_.history_limit == 0) throw ParameterError("history limit must be positive");
  if (config_.k == 0) throw ParameterError("k must be positive");
  if (config_.mode == ResponseMode::Sampler && !generation_)
    throw ParameterError("sampler mode needs a generation backend");
}

std::string ChatService::new_session_id() {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id;
  for (int part = 0; part < 2; ++part) {
    id_state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t x = splitmix64_mix(id_state_);
    for (int i = 0; i < 16; ++i, x >>= 4) id.push_back(kHex[x & 0xF]);
  }
  return id;
}

void ChatService::evict_expired() {
  const auto now = clock_();
  std::lock_guard lock(mu_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    std::unique_lock session_lock(it->second->mu, std::try_to_lock);
    // A session busy with a request is in use by definition.
    if (session_lock.owns_lock() && now - it->second->last_used > config_.session_ttl)
      it = sessions_.erase(it);
    else
      ++it;
  }
}

std::shared_ptr<ChatService::Session> ChatService::find(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

ServiceResponse ChatService::create_session(std::string_view body) {
  evict_expired();
  auto req = parse_object(body);
  if (!req) return error_response(400, "bad-request", "body must be a JSON object");
  auto it = req->find("target_speaker");
  if (it == req->end() || !it->is_string())
    return error_response(400, "bad-request", "\"target_speaker\" must be a string");
  const SpeakerId target = it->get<std::string>();
  if (!engine_->has_target(target))
    return error_response(422, "unknown-speaker", "no engine index for speaker '" + target + "'");

  auto session = std::make_shared<Session>();
  session->target = target;
  session->created_at = session->last_used = clock_();
  {
    std::lock_guard lock(mu_);
    do {
      session->id = new_session_id();
    } while (sessions_.contains(session->id));
    if (generation_) {
      SamplerConfig cfg = generation_->sampler;
      cfg.seed += sessions_created_;
      session->sampler = std::make_unique<Sampler>(cfg);
    }
    ++sessions_created_;
    sessions_.emplace(session->id, session);
  }

  ordered_json out;
  out["session_id"] = session->id;
  out["target_speaker"] = target;
  out["history_limit"] = config_.history_limit;
  return {201, std::move(out)};
}

void ChatService::push_history(Session& s, HistoryEntry e) const {
  s.history.push_back(std::move(e));
  while (s.history.size() > config_.history_limit) s.history.pop_front();
}

ordered_json ChatService::reply_retrieval(Session& s) {
  std::vector<Utterance> tail;
  for (const auto& h : s.history) tail.push_back(Utterance{0, s.id, h.speaker_id, h.timestamp_ms, h.text});
  const std::string query = context_text(tail, engine_->context_turns());
  const RetrievalResult rr = retrieve_response(query, s.target, config_.k, *engine_);

  ordered_json out;
  out["target_speaker"] = s.target;
  if (!rr.answered) {
    out["response_text"] = nullptr;
    out["reason"] = "no-data-for-speaker";
    return out;
  }
  out["response_text"] = rr.response_text;
  out["matched_context"] = rr.matched_context_text;
  out["distance"] = rr.distance;
  out["candidates"] = ordered_json::array();
  for (const auto& c : rr.candidates)
    out["candidates"].push_back({{"response_text", c.response_text}, {"distance", c.distance}});
  push_history(s, {s.target, rr.response_text, wall_clock_ms()});
  return out;
}

ordered_json ChatService::reply_sampler(Session& s) {
  std::vector<Utterance> hist;
  for (const auto& h : s.history) hist.push_back(Utterance{0, s.id, h.speaker_id, h.timestamp_ms, h.text});
  const auto& gen = *generation_;
  const EncodedExample ctx = build_context(hist, s.target, gen.format, *gen.tokenizer);
  const auto ids = s.sampler->generate(*gen.model, ctx.token_ids, gen.tokenizer->eos_id());

  ordered_json out;
  out["target_speaker"] = s.target;
  if (ids.empty()) {
    out["response_text"] = nullptr;
    out["reason"] = "empty-generation";
    return out;
  }
  const std::string text = gen.tokenizer->decode(ids);
  out["response_text"] = text;
  out["matched_context"] = nullptr;
  out["distance"] = nullptr;
  out["candidates"] = ordered_json::array();
  push_history(s, {s.target, text, wall_clock_ms()});
  return out;
}

ServiceResponse ChatService::post_message(const std::string& session_id, std::string_view body) {
  evict_expired();
  auto session = find(session_id);
  if (!session) return error_response(404, "unknown-session", "no session '" + session_id + "'");

  auto req = parse_object(body);
  if (!req) return error_response(400, "bad-request", "body must be a JSON object");
  auto speaker = req->find("speaker_id");
  auto text = req->find("text");
  if (speaker == req->end() || !speaker->is_string() || text == req->end() || !text->is_string())
    return error_response(400, "bad-request", "\"speaker_id\" and \"text\" must be strings");
  std::string normalized = normalize_text(text->get_ref<const std::string&>());
  if (normalized.empty()) return error_response(400, "bad-request", "\"text\" is blank");

  std::lock_guard lock(session->mu);
  {
    // Deleted or evicted while this request waited for the session lock.
    std::lock_guard map_lock(mu_);
    if (!sessions_.contains(session_id)) return error_response(404, "unknown-session", "session was closed");
  }
  session->last_used = clock_();
  push_history(*session, {speaker->get<std::string>(), std::move(normalized), wall_clock_ms()});
  ordered_json out = config_.mode == ResponseMode::Sampler ? reply_sampler(*session) : reply_retrieval(*session);
  out["session_id"] = session_id;
  return {200, std::move(out)};
}

ServiceResponse ChatService::delete_session(const std::string& session_id) {
  std::lock_guard lock(mu_);
  if (sessions_.erase(session_id) == 0) return error_response(404, "unknown-session", "no session '" + session_id + "'");
  return {204, nullptr};
}

ServiceResponse ChatService::speakers() const {
  ordered_json out;
  out["speakers"] = engine_->targets();
  return {200, std::move(out)};
}

ServiceResponse ChatService::health() const {
  ordered_json out;
  out["status"] = "ok";
  out["embedder"] = engine_->embedder().fingerprint();
  out["metric"] = metric_name(engine_->metric());
  out["index_kind"] = index_kind_name(engine_->kind());
  out["mode"] = config_.mode == ResponseMode::Sampler ? "sampler" : "retrieval";
  return {200, std::move(out)};
}

std::size_t ChatService::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

std::optional<std::vector<HistoryEntry>> ChatService::history(const std::string& session_id) const {
  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return std::nullopt;
    s = it->second;
  }
  std::lock_guard lock(s->mu);
  return std::vector<HistoryEntry>(s->history.begin(), s->history.end());
}

void apply_service_config(const json& j, ServiceConfig& config) {
  try {
    if (j.contains("history_limit")) config.history_limit = j.at("history_limit").get<std::size_t>();
    if (j.contains("k")) config.k = j.at("k").get<std::size_t>();
    if (j.contains("session_ttl_seconds"))
      config.session_ttl = std::chrono::seconds(j.at("session_ttl_seconds").get<std::int64_t>());
    if (j.contains("mode")) {
      const auto mode = j.at("mode").get<std::string>();
      if (mode == "retrieval")
        config.mode = ResponseMode::Retrieval;
      else if (mode == "sampler")
        config.mode = ResponseMode::Sampler;
      else
        throw ParameterError("unknown mode: " + mode);
    }
  } catch (const json::exception& e) {
    throw ParameterError(std::string("invalid service config: ") + e.what());
  }
}

}  // namespace clonebot
