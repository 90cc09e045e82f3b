#pragma once

// Transport-independent chat service: session registry, per-role tokens,
// write-ahead logging, channel message handling and HTTP-shaped handlers.
// Not thread-safe on its own; service.hpp drives it from one event loop.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oumwoz/argument_base.hpp"
#include "oumwoz/clock.hpp"
#include "oumwoz/config.hpp"
#include "oumwoz/error.hpp"
#include "oumwoz/io.hpp"
#include "oumwoz/responder.hpp"
#include "oumwoz/retrieval.hpp"
#include "oumwoz/session.hpp"

namespace oumwoz {

enum class Role { participant, wizard };

constexpr std::string_view to_string(Role r) { return r == Role::participant ? "participant" : "wizard"; }

inline Role parse_role(std::string_view s) {
  if (s == "participant") return Role::participant;
  if (s == "wizard") return Role::wizard;
  throw Error(ErrorCode::ValidationError, "unknown role '" + std::string(s) + "'");
}

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::Unauthorized: return 401;
    case ErrorCode::UnknownSession: return 404;
    case ErrorCode::WrongPhase:
    case ErrorCode::AlternationViolation:
    case ErrorCode::TooEarly: return 409;
    case ErrorCode::IoError: return 500;
    default: return 400;
  }
}

/// One live channel connection as seen by the core.
class ChannelSink {
 public:
  virtual ~ChannelSink() = default;
  virtual void send(const std::string& frame) = 0;
  /// Another connection took over this (session, role); close after flushing.
  virtual void supersede() = 0;
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Append-only JSONL file; every append is flushed to disk before returning.
class WriteAheadLog {
 public:
  WriteAheadLog() = default;
  explicit WriteAheadLog(const std::filesystem::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorCode::IoError, "cannot open " + path.string() + ": " + std::strerror(errno));
  }
  WriteAheadLog(const WriteAheadLog&) = delete;
  WriteAheadLog& operator=(const WriteAheadLog&) = delete;
  WriteAheadLog(WriteAheadLog&& o) noexcept : path_(std::move(o.path_)), fd_(std::exchange(o.fd_, -1)) {}
  WriteAheadLog& operator=(WriteAheadLog&& o) noexcept {
    if (this != &o) {
      close();
      path_ = std::move(o.path_);
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~WriteAheadLog() { close(); }

  void append(const nlohmann::json& event) {
    std::string line = event.dump() + "\n";
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      auto n = ::write(fd_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::IoError, "write to " + path_.string() + " failed: " + std::strerror(errno));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw Error(ErrorCode::IoError, "fsync " + path_.string() + ": " + std::strerror(errno));
  }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

struct TopicResources {
  ArgumentBase base;
  RetrievalIndex index;
  std::set<std::string> gold_ids;
  std::set<std::string> important_terms;
};

class ServiceCore {
 public:
  ServiceCore(ServiceConfig config, Clock& clock) : cfg_(std::move(config)), clock_(clock) {
    load_resources();
    std::filesystem::create_directories(sessions_dir());
    recover();
  }

  const ServiceConfig& config() const { return cfg_; }
  std::size_t session_count() const { return sessions_.size(); }

  const DialogueSession* find(const std::string& id) const {
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : &it->second->s;
  }

  // ---- HTTP handlers ----

  HttpResponse create(const std::string& body) {
    return guarded([&] {
      auto j = parse_body(body);
      auto topic = j.at("topic").get<std::string>();
      auto mode = parse_mode(j.at("mode").get<std::string>());
      if (mode != Mode::control_bot && !topics_.count(topic))
        throw Error(ErrorCode::ValidationError, "no argument base configured for topic '" + topic + "'");
      DurationBounds bounds = cfg_.bounds.at(mode);
      if (j.contains("duration_bounds") && !j["duration_bounds"].is_null()) {
        const auto& b = j["duration_bounds"];
        bounds = {std::chrono::seconds(b.at("min_seconds").get<long long>()),
                  std::chrono::seconds(b.at("max_seconds").get<long long>())};
      }
      std::string id;
      do id = random_hex_id(); while (sessions_.count(id));
      nlohmann::json ev = event("create");
      ev["session_id"] = id;
      ev["topic"] = topic;
      ev["mode"] = to_string(mode);
      ev["duration_bounds"] = {{"min_seconds", bounds.min.count()}, {"max_seconds", bounds.max.count()}};
      ev["wizard_token"] = random_hex_id(16);
      ev["participant_token"] = random_hex_id(16);
      auto live = std::make_unique<LiveSession>();
      apply_event(*live, ev);
      live->wal = WriteAheadLog(wal_path(id));
      live->wal.append(ev);
      auto& ls = *sessions_.emplace(id, std::move(live)).first->second;
      nlohmann::ordered_json out;
      out["session_id"] = id;
      out["wizard_token"] = ls.wizard_token;
      out["participant_token"] = ls.participant_token;
      return HttpResponse{201, out.dump()};
    });
  }

  HttpResponse submit_pre(const std::string& id, const std::string& body) {
    return guarded([&] {
      auto j = parse_body(body);
      auto& ls = get(id);
      authorize(ls, Role::participant, j.value("token", std::string{}));
      auto ev = event("pre");
      ev["stance"] = j.contains("participant_stance") ? j["participant_stance"] : j.at("stance");
      ev["response"] = j.at("response");
      commit(ls, ev);
      broadcast_phase(ls);
      return phase_response(ls);
    });
  }

  HttpResponse submit_post(const std::string& id, const std::string& body) {
    return guarded([&] {
      auto j = parse_body(body);
      auto& ls = get(id);
      authorize(ls, Role::participant, j.value("token", std::string{}));
      auto ev = event("post");
      ev["response"] = j.at("response");
      ev["experience"] = j.at("experience");
      commit(ls, ev);
      finalize(ls);
      broadcast_phase(ls);
      return phase_response(ls);
    });
  }

  /// Either role's token may close; force needs allow_force_close.
  HttpResponse close(const std::string& id, const std::string& body) {
    return guarded([&] {
      auto j = parse_body(body);
      auto& ls = get(id);
      auto token = j.value("token", std::string{});
      if (token != ls.wizard_token) authorize(ls, Role::participant, token);
      do_close(ls, j.value("force", false));
      return phase_response(ls);
    });
  }

  HttpResponse export_session(const std::string& id) {
    return guarded([&] { return HttpResponse{200, export_session_string(get(id).s)}; });
  }

  /// JSONL of closed and post_done sessions, oldest first.
  HttpResponse export_corpus() {
    std::vector<const DialogueSession*> done;
    for (const auto& [id, ls] : sessions_)
      if (ls->s.phase == Phase::closed || ls->s.phase == Phase::post_done) done.push_back(&ls->s);
    std::sort(done.begin(), done.end(), [](const auto* a, const auto* b) {
      return std::tie(a->created_at, a->session_id) < std::tie(b->created_at, b->session_id);
    });
    std::string out;
    for (const auto* s : done) out += export_session_string(*s) + "\n";
    return {200, out, "application/x-ndjson"};
  }

  // ---- channel ----

  /// Throws UnknownSession or Unauthorized; the caller rejects the upgrade.
  void check_channel(const std::string& id, Role role, const std::string& token) {
    authorize(get(id), role, token);
  }

  void connect(const std::string& id, Role role, const std::string& token, std::shared_ptr<ChannelSink> sink) {
    auto& ls = get(id);
    authorize(ls, role, token);
    auto& slot = role == Role::wizard ? ls.wizard : ls.participant;
    if (slot.sink) {
      push(slot, "notice", {{"reason", "superseded"}}, ls.s.session_id);
      slot.sink->supersede();
    }
    slot = Connection{std::move(sink), 0};
    push(slot, "phase", phase_payload(ls), ls.s.session_id);
    if (role == Role::wizard && ls.last_suggestions) push(slot, "suggestions", *ls.last_suggestions, ls.s.session_id);
  }

  void disconnect(const std::string& id, Role role, const ChannelSink* sink) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return;
    auto& slot = role == Role::wizard ? it->second->wizard : it->second->participant;
    if (slot.sink.get() == sink) slot = Connection{};
  }

  /// Handles one client frame; all replies go out through the sinks.
  void on_frame(const std::string& id, Role role, const std::string& text) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return;
    auto& ls = *it->second;
    auto& self = role == Role::wizard ? ls.wizard : ls.participant;
    nlohmann::json seq = nullptr;
    std::string type;
    try {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::MalformedInput, std::string("frame is not JSON: ") + e.what());
      }
      if (!j.is_object()) throw Error(ErrorCode::MalformedInput, "frame must be a JSON object");
      if (j.contains("seq")) seq = j["seq"];
      type = j.value("type", std::string{});
      const nlohmann::json& payload = j.contains("payload") && j["payload"].is_object() ? j["payload"] : j;
      handle_frame(ls, role, type, payload, seq);
    } catch (const Error& e) {
      send_error(self, ls.s.session_id, seq, e);
    } catch (const nlohmann::json::exception& e) {
      send_error(self, ls.s.session_id, seq, Error(ErrorCode::MalformedInput, e.what()));
    }
  }

 private:
  struct Connection {
    std::shared_ptr<ChannelSink> sink;
    std::uint64_t push_seq = 0;
  };

  struct LiveSession {
    DialogueSession s;
    std::string wizard_token;
    std::string participant_token;
    std::optional<Stance> filter;
    std::optional<std::string> last_search;
    std::optional<nlohmann::json> last_suggestions;
    Connection wizard;
    Connection participant;
    WriteAheadLog wal;
  };

  ServiceConfig cfg_;
  Clock& clock_;
  std::map<std::string, std::unique_ptr<TopicResources>> topics_;
  std::map<std::string, ResponderResources> responders_;
  GateFile gate_;
  std::vector<std::string> hedges_ = default_hedges();
  std::vector<std::string> templates_ = default_question_templates();
  std::vector<std::string> chitchat_ = default_chitchat();
  std::map<std::string, std::unique_ptr<LiveSession>> sessions_;

  std::filesystem::path sessions_dir() const { return cfg_.data_dir / "sessions"; }
  std::filesystem::path wal_path(const std::string& id) const { return sessions_dir() / (id + ".wal.jsonl"); }
  std::filesystem::path export_path(const std::string& id) const { return sessions_dir() / (id + ".json"); }

  void load_resources() {
    TokenPipelineConfig pipeline;
    if (cfg_.stopwords) pipeline.stopwords = load_stopwords(*cfg_.stopwords);
    if (cfg_.gate) gate_ = gate_from_json(read_file(*cfg_.gate));
    if (cfg_.hedges) hedges_ = read_lines(*cfg_.hedges);
    if (cfg_.question_templates) templates_ = read_lines(*cfg_.question_templates);
    if (cfg_.chitchat) chitchat_ = read_lines(*cfg_.chitchat);
    for (const auto& [topic, paths] : cfg_.topics) {
      auto res = std::make_unique<TopicResources>();
      res->base = load_base(paths.base);
      if (res->base.topic_id != topic)
        throw Error(ErrorCode::InvalidArgument,
                    "base " + paths.base.string() + " is for topic '" + res->base.topic_id + "', configured as '" + topic + "'");
      if (paths.index) {
        res->index = RetrievalIndex::load(*paths.index);
        res->index.check_alignment(res->base);
      } else {
        res->index = RetrievalIndex::build(res->base, pipeline);
      }
      if (paths.terms) {
        auto lines = read_lines(*paths.terms);
        res->important_terms = {lines.begin(), lines.end()};
      }
      if (paths.gold) {
        auto logs = load_corpus(*paths.gold);
        std::erase_if(logs, [&](const DialogueSession& s) { return s.topic != topic; });
        res->gold_ids = compile_gold_ids(logs);
      }
      ResponderResources rr;
      rr.index = &res->index;
      rr.base = &res->base;
      rr.gate = gate_.model;
      rr.free_model = gate_.free_model;
      rr.hedges = hedges_;
      rr.question_templates = templates_;
      rr.gold_ids = res->gold_ids;
      rr.important_terms = res->important_terms;
      responders_.emplace(topic, std::move(rr));
      topics_.emplace(topic, std::move(res));
    }
  }

  // ---- persistence ----

  nlohmann::json event(const char* kind) {
    return {{"event", kind}, {"at", format_iso8601(clock_.now())}};
  }

  /// Replays one logged event; also used to validate live mutations.
  void apply_event(LiveSession& ls, const nlohmann::json& ev) {
    ManualClock at(parse_iso8601(ev.at("at").get<std::string>()));
    auto kind = ev.at("event").get<std::string>();
    auto& s = ls.s;
    if (kind == "create") {
      const auto& b = ev.at("duration_bounds");
      s = create_session(ev.at("topic").get<std::string>(), parse_mode(ev.at("mode").get<std::string>()),
                         DurationBounds{std::chrono::seconds(b.at("min_seconds").get<long long>()),
                                        std::chrono::seconds(b.at("max_seconds").get<long long>())},
                         at, ev.at("session_id").get<std::string>());
      ls.wizard_token = ev.at("wizard_token").get<std::string>();
      ls.participant_token = ev.at("participant_token").get<std::string>();
    } else if (kind == "pre") {
      oumwoz::submit_pre(s, ev.at("stance").get<std::string>(), questionnaire_from_json(ev.at("response")));
    } else if (kind == "turn") {
      if (ev.contains("action")) {
        auto a = action_from_json(ev["action"]);
        record_action(s, a, at);
      }
      auto speaker = ev.at("speaker").get<std::string>();
      auto text = ev.at("text").get<std::string>();
      if (speaker == "participant") {
        post_participant_turn(s, text, at);
      } else {
        std::optional<Provenance> prov;
        if (ev.contains("provenance") && !ev["provenance"].is_null()) prov = provenance_from_json(ev["provenance"]);
        post_agent_turn(s, text, prov, at);
      }
    } else if (kind == "action") {
      auto a = action_from_json(ev.at("action"));
      if (a.kind == ActionKind::stance_filter) ls.filter = a.filter;
      record_action(s, std::move(a), at);
    } else if (kind == "close") {
      close_session(s, at, ev.at("force").get<bool>());
    } else if (kind == "post") {
      oumwoz::submit_post(s, questionnaire_from_json(ev.at("response")), experience_from_json(ev.at("experience")));
    } else {
      throw Error(ErrorCode::MalformedInput, "unknown log event '" + kind + "'");
    }
  }

  /// Validate on a copy, append to the log, then publish. Nothing is
  /// acknowledged before the log write returns.
  void commit(LiveSession& ls, const nlohmann::json& ev) {
    DialogueSession before = ls.s;
    auto filter_before = ls.filter;
    try {
      apply_event(ls, ev);
    } catch (...) {
      ls.s = std::move(before);
      ls.filter = filter_before;
      throw;
    }
    try {
      ls.wal.append(ev);
    } catch (...) {
      ls.s = std::move(before);
      ls.filter = filter_before;
      throw;
    }
  }

  /// Compacted export next to the log; after post_done the log is dropped.
  void finalize(LiveSession& ls) {
    write_file_atomic(export_path(ls.s.session_id), export_session_string(ls.s) + "\n");
    if (ls.s.phase == Phase::post_done) {
      ls.wal.close();
      std::error_code ec;
      std::filesystem::remove(wal_path(ls.s.session_id), ec);
    }
  }

  void recover() {
    std::vector<std::filesystem::path> wals, exports;
    for (const auto& e : std::filesystem::directory_iterator(sessions_dir())) {
      auto name = e.path().filename().string();
      if (name.ends_with(".wal.jsonl")) {
        wals.push_back(e.path());
      } else if (name.ends_with(".json")) {
        exports.push_back(e.path());
      }
    }
    std::sort(wals.begin(), wals.end());
    std::sort(exports.begin(), exports.end());
    for (const auto& p : wals) replay(p);
    for (const auto& p : exports) {
      auto s = import_session(nlohmann::json::parse(read_file(p)));
      if (sessions_.count(s.session_id)) continue;
      auto ls = std::make_unique<LiveSession>();
      ls->s = std::move(s);
      sessions_.emplace(ls->s.session_id, std::move(ls));
    }
  }

  void replay(const std::filesystem::path& path) {
    auto content = read_file(path);
    auto ls = std::make_unique<LiveSession>();
    std::size_t pos = 0, good_end = 0;
    while (pos < content.size()) {
      auto nl = content.find('\n', pos);
      if (nl == std::string::npos) break;  // unterminated tail: never acknowledged
      auto line = std::string_view(content).substr(pos, nl - pos);
      nlohmann::json ev;
      try {
        ev = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::IoError, path.string() + ": corrupt log line: " + e.what());
      }
      apply_event(*ls, ev);
      pos = good_end = nl + 1;
    }
    if (good_end == 0) {
      std::filesystem::remove(path);
      return;
    }
    if (good_end < content.size()) std::filesystem::resize_file(path, good_end);
    for (const auto& a : ls->s.actions)
      if (a.kind == ActionKind::stance_filter) ls->filter = a.filter;
    if (ls->s.phase != Phase::post_done) ls->wal = WriteAheadLog(path);
    auto id = ls->s.session_id;
    sessions_.emplace(id, std::move(ls));
  }

  // ---- helpers ----

  template <class F>
  HttpResponse guarded(F&& f) {
    try {
      return f();
    } catch (const Error& e) {
      return error_response(e);
    } catch (const nlohmann::json::exception& e) {
      return error_response(Error(ErrorCode::MalformedInput, e.what()));
    }
  }

  static HttpResponse error_response(const Error& e) {
    nlohmann::ordered_json j;
    j["error"] = to_string(e.code());
    j["detail"] = e.detail();
    if (const auto* te = dynamic_cast<const TooEarlyError*>(&e)) j["remaining_seconds"] = te->remaining_seconds();
    return {http_status(e.code()), j.dump()};
  }

  static nlohmann::json parse_body(const std::string& body) {
    try {
      auto j = nlohmann::json::parse(body.empty() ? std::string("{}") : body);
      if (!j.is_object()) throw Error(ErrorCode::MalformedInput, "request body must be a JSON object");
      return j;
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MalformedInput, std::string("request body is not JSON: ") + e.what());
    }
  }

  LiveSession& get(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
    return *it->second;
  }

  static void authorize(const LiveSession& ls, Role role, const std::string& token) {
    const auto& expected = role == Role::wizard ? ls.wizard_token : ls.participant_token;
    if (expected.empty() || token != expected)
      throw Error(ErrorCode::Unauthorized, "bad token for role " + std::string(to_string(role)));
  }

  nlohmann::ordered_json phase_payload(const LiveSession& ls) {
    auto now = clock_.now();
    nlohmann::ordered_json p;
    p["value"] = to_string(ls.s.phase);
    long long max_left = ls.s.bounds.max.count();
    if (ls.s.started_at) {
      auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(now - *ls.s.started_at).count();
      max_left = std::max<long long>(0, max_left - elapsed);
    }
    bool live = ls.s.phase == Phase::pre_done || ls.s.phase == Phase::chatting;
    p["remaining_seconds"] = live ? remaining_seconds(ls.s, now) : 0;
    p["max_remaining_seconds"] = live ? max_left : 0;
    return p;
  }

  HttpResponse phase_response(const LiveSession& ls) {
    nlohmann::ordered_json j;
    j["session_id"] = ls.s.session_id;
    j["phase"] = to_string(ls.s.phase);
    return {200, j.dump()};
  }

  static void push(Connection& c, const char* type, const nlohmann::json& payload, const std::string& session_id) {
    if (!c.sink) return;
    nlohmann::ordered_json f;
    f["type"] = type;
    f["session_id"] = session_id;
    f["seq"] = nullptr;
    f["push_seq"] = ++c.push_seq;
    f["payload"] = payload;
    c.sink->send(f.dump());
  }

  static void reply(Connection& c, const char* type, const nlohmann::json& seq, const nlohmann::json& payload,
                    const std::string& session_id) {
    if (!c.sink) return;
    nlohmann::ordered_json f;
    f["type"] = type;
    f["session_id"] = session_id;
    f["seq"] = seq;
    f["payload"] = payload;
    c.sink->send(f.dump());
  }

  static void send_error(Connection& c, const std::string& session_id, const nlohmann::json& seq, const Error& e) {
    nlohmann::ordered_json p;
    p["code"] = to_string(e.code());
    p["status"] = http_status(e.code());
    p["detail"] = e.detail();
    if (const auto* te = dynamic_cast<const TooEarlyError*>(&e)) p["remaining_seconds"] = te->remaining_seconds();
    reply(c, "error", seq, p, session_id);
  }

  void broadcast_phase(LiveSession& ls) {
    auto p = phase_payload(ls);
    push(ls.wizard, "phase", p, ls.s.session_id);
    push(ls.participant, "phase", p, ls.s.session_id);
  }

  void do_close(LiveSession& ls, bool force) {
    if (force && !cfg_.allow_force_close) throw Error(ErrorCode::Unauthorized, "forced close is disabled");
    auto ev = event("close");
    ev["force"] = force;
    commit(ls, ev);
    finalize(ls);
    broadcast_phase(ls);
  }

  const TopicResources& topic_of(const LiveSession& ls) const {
    auto it = topics_.find(ls.s.topic);
    if (it == topics_.end()) throw Error(ErrorCode::InvalidArgument, "no argument base for topic '" + ls.s.topic + "'");
    return *it->second;
  }

  nlohmann::ordered_json suggestion_items(const TopicResources& t, const std::vector<ScoredArgument>& results) const {
    auto items = nlohmann::ordered_json::array();
    int rank = 0;
    for (const auto& r : results) {
      nlohmann::ordered_json item;
      item["argument_id"] = r.argument_id;
      const auto* rec = t.base.find(r.argument_id);
      item["text"] = rec ? rec->text : std::string{};
      item["stance"] = to_string(r.stance);
      item["final_score"] = r.final_score;
      item["rank"] = ++rank;
      items.push_back(std::move(item));
    }
    return items;
  }

  /// Recomputes the wizard's list from the last search or, failing that,
  /// the last participant utterances, under the current stance filter.
  void refresh_suggestions(LiveSession& ls) {
    const auto& t = topic_of(ls);
    std::vector<ScoredArgument> results;
    nlohmann::ordered_json payload;
    if (ls.last_search) {
      results = keyword_search(t.index, *ls.last_search, ls.filter);
      payload["source"] = "search";
      payload["query"] = *ls.last_search;
    } else {
      auto q = query_from_history(ls.s.turns);
      if (q.last_utterance.empty()) return;
      q.stance_filter = ls.filter;
      results = tfidf_suggest(t.index, q);
      payload["source"] = "tfidf";
      payload["query"] = effective_query_text(q);
    }
    payload["filter"] = ls.filter ? std::string(to_string(*ls.filter)) : std::string("off");
    payload["items"] = suggestion_items(t, results);
    ls.last_suggestions = payload;
    push(ls.wizard, "suggestions", payload, ls.s.session_id);
  }

  static nlohmann::ordered_json utterance_payload(const Turn& t) {
    nlohmann::ordered_json p;
    p["speaker"] = to_string(t.speaker);
    p["index"] = t.index;
    p["text"] = t.text;
    p["timestamp"] = format_iso8601(t.timestamp);
    return p;
  }

  void handle_frame(LiveSession& ls, Role role, const std::string& type, const nlohmann::json& payload,
                    const nlohmann::json& seq) {
    auto& self = role == Role::wizard ? ls.wizard : ls.participant;
    const auto& sid = ls.s.session_id;
    auto ack = [&](nlohmann::ordered_json extra = nlohmann::ordered_json::object()) {
      extra["of"] = type;
      reply(self, "ack", seq, extra, sid);
    };
    auto wizard_only = [&] {
      if (role != Role::wizard || ls.s.mode != Mode::wizard)
        throw Error(ErrorCode::Unauthorized, "'" + type + "' is a wizard command");
    };

    if (type == "ping") {
      ack();
    } else if (type == "utterance" && role == Role::participant) {
      auto ev = event("turn");
      ev["speaker"] = "participant";
      ev["text"] = payload.at("text").get<std::string>();
      commit(ls, ev);
      const auto& turn = ls.s.turns.back();
      ack({{"turn_index", turn.index}});
      if (turn.index == 0) broadcast_phase(ls);
      if (ls.s.mode == Mode::wizard) {
        push(ls.wizard, "utterance", utterance_payload(turn), sid);
        ls.last_search.reset();
        refresh_suggestions(ls);
      } else {
        bot_reply(ls);
      }
    } else if (type == "utterance") {
      wizard_only();
      auto ev = event("turn");
      ev["speaker"] = "agent";
      auto text = payload.at("text").get<std::string>();
      ev["text"] = text;
      Provenance prov;
      prov.mode = "wizard";
      WizardAction action = WizardAction::free_compose();
      if (payload.contains("provenance") && payload["provenance"].is_object() &&
          payload["provenance"].contains("argument_id") && !payload["provenance"]["argument_id"].is_null()) {
        const auto& pj = payload["provenance"];
        auto arg_id = pj.at("argument_id").get<std::string>();
        const auto* rec = topic_of(ls).base.find(arg_id);
        if (!rec) throw Error(ErrorCode::ValidationError, "unknown argument_id '" + arg_id + "'");
        prov.argument_id = arg_id;
        prov.stance = rec->topic_stance;
        if (pj.contains("rank") && !pj["rank"].is_null()) prov.selection_rank = pj["rank"].get<int>();
        if (pj.contains("selection_rank") && !pj["selection_rank"].is_null())
          prov.selection_rank = pj["selection_rank"].get<int>();
        prov.edited = pj.contains("edited") && !pj["edited"].is_null() ? pj["edited"].get<bool>() : text != rec->text;
        action = WizardAction::edit_commit(arg_id);
      }
      ev["provenance"] = provenance_to_json(prov);
      // Verbatim sends of a selected argument are covered by the select action.
      if (action.kind == ActionKind::free_compose || prov.edited.value_or(false)) ev["action"] = action_to_json(action);
      commit(ls, ev);
      const auto& turn = ls.s.turns.back();
      ack({{"turn_index", turn.index}});
      if (turn.index == 0) broadcast_phase(ls);
      push(ls.participant, "utterance", utterance_payload(turn), sid);
    } else if (type == "search") {
      wizard_only();
      auto terms = payload.at("terms").get<std::string>();
      auto ev = event("action");
      ev["action"] = action_to_json(WizardAction::search(terms));
      commit(ls, ev);
      ack();
      ls.last_search = terms;
      refresh_suggestions(ls);
    } else if (type == "filter") {
      wizard_only();
      auto value = payload.at("stance").get<std::string>();
      std::optional<Stance> filter;
      if (value != "off") {
        filter = parse_stance(value);
        if (!filter) throw Error(ErrorCode::ValidationError, "filter must be pro, con or off");
      }
      auto ev = event("action");
      ev["action"] = action_to_json(WizardAction::stance_filter(filter));
      commit(ls, ev);
      ack();
      refresh_suggestions(ls);
    } else if (type == "select") {
      wizard_only();
      auto arg_id = payload.at("argument_id").get<std::string>();
      if (!topic_of(ls).base.find(arg_id)) throw Error(ErrorCode::ValidationError, "unknown argument_id '" + arg_id + "'");
      auto ev = event("action");
      ev["action"] = action_to_json(WizardAction::select(arg_id, payload.at("rank").get<int>()));
      commit(ls, ev);
      ack();
    } else if (type == "close") {
      do_close(ls, payload.value("force", false));
      ack();
    } else {
      throw Error(ErrorCode::MalformedInput, "unknown message type '" + type + "'");
    }
  }

  void bot_reply(LiveSession& ls) {
    AgentReply r;
    if (ls.s.mode == Mode::control_bot) {
      r = control_respond(ls.s.turns, chitchat_);
    } else {
      auto it = responders_.find(ls.s.topic);
      if (it == responders_.end()) throw Error(ErrorCode::InvalidArgument, "no responder for topic '" + ls.s.topic + "'");
      r = respond(ls.s.turns, it->second, fnv1a64(ls.s.session_id));
    }
    auto ev = event("turn");
    ev["speaker"] = "agent";
    ev["text"] = r.text;
    ev["provenance"] = provenance_to_json(r.provenance);
    commit(ls, ev);
    push(ls.participant, "utterance", utterance_payload(ls.s.turns.back()), ls.s.session_id);
  }
};

}  // namespace oumwoz
