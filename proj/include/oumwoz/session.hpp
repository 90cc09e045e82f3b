#pragma once

// Dialogue lifecycle: created -> pre_done -> chatting -> closed -> post_done,
// with strictly alternating turns and a wizard action log.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "oumwoz/argument_base.hpp"
#include "oumwoz/clock.hpp"
#include "oumwoz/error.hpp"
#include "oumwoz/io.hpp"
#include "oumwoz/oum.hpp"
#include "oumwoz/text.hpp"

namespace oumwoz {

inline constexpr int kSessionSchemaVersion = 1;

enum class Mode { wizard, argu_bot, control_bot };

constexpr std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::wizard: return "wizard";
    case Mode::argu_bot: return "argu_bot";
    case Mode::control_bot: return "control_bot";
  }
  return "";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "wizard") return Mode::wizard;
  if (s == "argu_bot") return Mode::argu_bot;
  if (s == "control_bot" || s == "control") return Mode::control_bot;
  throw Error(ErrorCode::ValidationError, "unknown mode '" + std::string(s) + "'");
}

constexpr bool is_bot(Mode m) { return m != Mode::wizard; }

enum class Phase { created, pre_done, chatting, closed, post_done };

constexpr std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::created: return "created";
    case Phase::pre_done: return "pre_done";
    case Phase::chatting: return "chatting";
    case Phase::closed: return "closed";
    case Phase::post_done: return "post_done";
  }
  return "";
}

inline Phase parse_phase(std::string_view s) {
  for (auto p : {Phase::created, Phase::pre_done, Phase::chatting, Phase::closed, Phase::post_done})
    if (to_string(p) == s) return p;
  throw Error(ErrorCode::MalformedInput, "unknown phase '" + std::string(s) + "'");
}

enum class Speaker { participant, agent };

constexpr std::string_view to_string(Speaker s) { return s == Speaker::participant ? "participant" : "agent"; }

/// Known topics have a fixed binary participant stance; any other topic id is
/// a custom topic with a free-form stance label.
inline std::vector<std::string> allowed_stances(std::string_view topic) {
  if (topic == "veganism") return {"vegan", "non_vegan"};
  if (topic == "brexit") return {"leave", "remain"};
  if (topic == "vaccination") return {"vaccinated", "unvaccinated"};
  return {};
}

struct DurationBounds {
  std::chrono::seconds min{900};
  std::chrono::seconds max{1200};

  bool operator==(const DurationBounds&) const = default;
};

inline DurationBounds default_bounds(Mode mode) {
  using std::chrono::seconds;
  return mode == Mode::wizard ? DurationBounds{seconds(900), seconds(1200)}
                              : DurationBounds{seconds(600), seconds(900)};
}

/// Where an agent turn came from. mode is one of "wizard",
/// "argument_grounded", "free" or "control".
struct Provenance {
  std::string mode;
  std::optional<std::string> argument_id;
  std::optional<int> selection_rank;
  std::optional<bool> edited;
  std::optional<Stance> stance;
  std::optional<double> pgen;
  std::optional<double> mixture_score;
  std::optional<double> rerank_score;

  bool operator==(const Provenance&) const = default;
};

struct Turn {
  int index = 0;
  Speaker speaker = Speaker::participant;
  std::string text;
  Timestamp timestamp{};
  std::optional<Provenance> provenance;

  bool operator==(const Turn&) const = default;
};

enum class ActionKind { search, stance_filter, select, edit_commit, free_compose };

constexpr std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::search: return "search";
    case ActionKind::stance_filter: return "stance_filter";
    case ActionKind::select: return "select";
    case ActionKind::edit_commit: return "edit_commit";
    case ActionKind::free_compose: return "free_compose";
  }
  return "";
}

struct WizardAction {
  Timestamp timestamp{};
  ActionKind kind = ActionKind::free_compose;
  std::string terms;                 // search
  std::optional<Stance> filter;      // stance_filter; empty means "off"
  std::string argument_id;           // select, edit_commit
  int rank = 0;                      // select

  bool operator==(const WizardAction&) const = default;

  static WizardAction search(std::string terms) {
    WizardAction a;
    a.kind = ActionKind::search;
    a.terms = std::move(terms);
    return a;
  }
  static WizardAction stance_filter(std::optional<Stance> s) {
    WizardAction a;
    a.kind = ActionKind::stance_filter;
    a.filter = s;
    return a;
  }
  static WizardAction select(std::string id, int rank) {
    WizardAction a;
    a.kind = ActionKind::select;
    a.argument_id = std::move(id);
    a.rank = rank;
    return a;
  }
  static WizardAction edit_commit(std::string id) {
    WizardAction a;
    a.kind = ActionKind::edit_commit;
    a.argument_id = std::move(id);
    return a;
  }
  static WizardAction free_compose() { return {}; }
};

struct DialogueSession {
  std::string session_id;
  std::string topic;
  Mode mode = Mode::wizard;
  std::string participant_stance;
  std::optional<QuestionnaireResponse> pre;
  std::optional<QuestionnaireResponse> post;
  std::optional<ExperienceRatings> experience;
  std::vector<Turn> turns;
  std::vector<WizardAction> actions;
  Phase phase = Phase::created;
  Timestamp created_at{};
  std::optional<Timestamp> started_at;
  std::optional<Timestamp> closed_at;
  DurationBounds bounds;
  bool forced_close = false;

  bool operator==(const DialogueSession&) const = default;

  const Turn* last_turn(Speaker who) const {
    for (auto it = turns.rbegin(); it != turns.rend(); ++it)
      if (it->speaker == who) return &*it;
    return nullptr;
  }
};

inline std::string random_hex_id(std::size_t bytes = 12) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  std::string out;
  static constexpr char digits[] = "0123456789abcdef";
  for (std::size_t i = 0; i < bytes; ++i) {
    auto v = rng();
    out += digits[v & 0xF];
    out += digits[(v >> 4) & 0xF];
  }
  return out;
}

inline DialogueSession create_session(std::string topic, Mode mode, std::optional<DurationBounds> bounds,
                                      Clock& clock, std::string session_id = {}) {
  if (topic.empty()) throw Error(ErrorCode::ValidationError, "topic must not be empty");
  DialogueSession s;
  s.session_id = session_id.empty() ? random_hex_id() : std::move(session_id);
  s.topic = std::move(topic);
  s.mode = mode;
  s.bounds = bounds.value_or(default_bounds(mode));
  if (s.bounds.min.count() < 0 || s.bounds.max < s.bounds.min)
    throw Error(ErrorCode::ValidationError, "duration bounds must satisfy 0 <= min <= max");
  s.created_at = clock.now();
  return s;
}

namespace detail {

inline void require_phase(const DialogueSession& s, std::initializer_list<Phase> allowed, std::string_view op) {
  for (auto p : allowed)
    if (s.phase == p) return;
  throw Error(ErrorCode::WrongPhase,
              std::string(op) + " not allowed in phase " + std::string(to_string(s.phase)));
}

inline void append_turn(DialogueSession& s, Speaker who, std::string_view text, std::optional<Provenance> prov,
                        Clock& clock) {
  require_phase(s, {Phase::pre_done, Phase::chatting}, "turn");
  if (trim_copy(text).empty()) throw Error(ErrorCode::ValidationError, "empty utterance");
  if (!s.turns.empty() && s.turns.back().speaker == who)
    throw Error(ErrorCode::AlternationViolation,
                "two consecutive " + std::string(to_string(who)) + " turns are not allowed");
  auto now = clock.now();
  if (s.phase == Phase::pre_done) {
    s.phase = Phase::chatting;
    s.started_at = now;
  }
  s.turns.push_back({static_cast<int>(s.turns.size()), who, std::string(text), now, std::move(prov)});
}

}  // namespace detail

inline void submit_pre(DialogueSession& s, std::string stance, const QuestionnaireResponse& response) {
  detail::require_phase(s, {Phase::created}, "submit_pre");
  auto allowed = allowed_stances(s.topic);
  if (stance.empty()) throw Error(ErrorCode::ValidationError, "participant stance is required");
  if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), stance) == allowed.end())
    throw Error(ErrorCode::ValidationError, "stance '" + stance + "' is not valid for topic " + s.topic);
  s.participant_stance = std::move(stance);
  s.pre = response;
  s.phase = Phase::pre_done;
}

inline void post_participant_turn(DialogueSession& s, std::string_view text, Clock& clock) {
  detail::append_turn(s, Speaker::participant, text, std::nullopt, clock);
}

inline void post_agent_turn(DialogueSession& s, std::string_view text, std::optional<Provenance> provenance,
                            Clock& clock) {
  if (provenance) {
    if (provenance->edited && !provenance->argument_id)
      throw Error(ErrorCode::ValidationError, "provenance.edited requires argument_id");
    if (provenance->selection_rank && *provenance->selection_rank < 1)
      throw Error(ErrorCode::ValidationError, "selection_rank must be >= 1");
  }
  detail::append_turn(s, Speaker::agent, text, std::move(provenance), clock);
}

inline void record_action(DialogueSession& s, WizardAction action, Clock& clock) {
  detail::require_phase(s, {Phase::pre_done, Phase::chatting}, "wizard action");
  if (action.kind == ActionKind::select && action.rank < 1)
    throw Error(ErrorCode::ValidationError, "select rank must be >= 1");
  if ((action.kind == ActionKind::select || action.kind == ActionKind::edit_commit) && action.argument_id.empty())
    throw Error(ErrorCode::ValidationError, "action requires an argument_id");
  action.timestamp = clock.now();
  s.actions.push_back(std::move(action));
}

inline long long remaining_seconds(const DialogueSession& s, Timestamp now) {
  if (!s.started_at) return s.bounds.min.count();
  auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(now - *s.started_at);
  auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(s.bounds.min) - elapsed;
  if (remaining.count() <= 0) return 0;
  return (remaining.count() + 999) / 1000;
}

/// Refuses to close before the minimum duration unless forced.
inline void close_session(DialogueSession& s, Clock& clock, bool force = false) {
  detail::require_phase(s, {Phase::chatting}, "close_session");
  auto now = clock.now();
  if (!force) {
    auto remaining = remaining_seconds(s, now);
    if (remaining > 0) throw TooEarlyError(remaining);
  }
  s.phase = Phase::closed;
  s.closed_at = now;
  s.forced_close = force;
}

inline void submit_post(DialogueSession& s, const QuestionnaireResponse& response,
                        const ExperienceRatings& experience) {
  detail::require_phase(s, {Phase::closed}, "submit_post");
  experience.validate(is_bot(s.mode));
  s.post = response;
  s.experience = experience;
  s.phase = Phase::post_done;
}

// ---- log record serialization ----

inline nlohmann::ordered_json questionnaire_to_json(const QuestionnaireResponse& q) {
  nlohmann::ordered_json j;
  j["good_reasons"] = q.good_reasons.value();
  j["intellect"] = {q.intellect[0].value(), q.intellect[1].value(), q.intellect[2].value()};
  j["morality"] = {q.morality[0].value(), q.morality[1].value(), q.morality[2].value()};
  return j;
}

inline QuestionnaireResponse questionnaire_from_json(const nlohmann::json& j) {
  try {
    auto intellect = j.at("intellect").get<std::vector<int>>();
    auto morality = j.at("morality").get<std::vector<int>>();
    if (intellect.size() != 3 || morality.size() != 3)
      throw Error(ErrorCode::ValidationError, "intellect and morality need exactly three ratings each");
    return QuestionnaireResponse::from_values(j.at("good_reasons").get<int>(),
                                              {intellect[0], intellect[1], intellect[2]},
                                              {morality[0], morality[1], morality[2]});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ValidationError, std::string("questionnaire: ") + e.what());
  }
}

inline nlohmann::ordered_json experience_to_json(const ExperienceRatings& e) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : e.ratings) j[k] = v.value();
  return j;
}

inline ExperienceRatings experience_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ValidationError, "experience must be an object");
  ExperienceRatings e;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number_integer()) throw Error(ErrorCode::ValidationError, "experience '" + k + "' must be an integer");
    e.ratings.emplace(k, LikertRating(v.get<int>()));
  }
  return e;
}

inline nlohmann::ordered_json provenance_to_json(const Provenance& p) {
  nlohmann::ordered_json j;
  j["mode"] = p.mode;
  j["argument_id"] = p.argument_id ? nlohmann::ordered_json(*p.argument_id) : nlohmann::ordered_json(nullptr);
  j["selection_rank"] = p.selection_rank ? nlohmann::ordered_json(*p.selection_rank) : nlohmann::ordered_json(nullptr);
  j["edited"] = p.edited ? nlohmann::ordered_json(*p.edited) : nlohmann::ordered_json(nullptr);
  j["stance"] = p.stance ? nlohmann::ordered_json(std::string(to_string(*p.stance))) : nlohmann::ordered_json(nullptr);
  j["pgen"] = p.pgen ? nlohmann::ordered_json(*p.pgen) : nlohmann::ordered_json(nullptr);
  j["mixture_score"] = p.mixture_score ? nlohmann::ordered_json(*p.mixture_score) : nlohmann::ordered_json(nullptr);
  j["rerank_score"] = p.rerank_score ? nlohmann::ordered_json(*p.rerank_score) : nlohmann::ordered_json(nullptr);
  return j;
}

namespace detail {
template <class T>
std::optional<T> opt_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}
}  // namespace detail

inline Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  p.mode = j.value("mode", std::string{});
  p.argument_id = detail::opt_field<std::string>(j, "argument_id");
  p.selection_rank = detail::opt_field<int>(j, "selection_rank");
  p.edited = detail::opt_field<bool>(j, "edited");
  if (auto s = detail::opt_field<std::string>(j, "stance")) {
    p.stance = parse_stance(*s);
    if (!p.stance) throw Error(ErrorCode::MalformedInput, "provenance stance '" + *s + "'");
  }
  p.pgen = detail::opt_field<double>(j, "pgen");
  p.mixture_score = detail::opt_field<double>(j, "mixture_score");
  p.rerank_score = detail::opt_field<double>(j, "rerank_score");
  return p;
}

inline nlohmann::ordered_json action_to_json(const WizardAction& a) {
  nlohmann::ordered_json payload = nlohmann::ordered_json::object();
  switch (a.kind) {
    case ActionKind::search: payload["terms"] = a.terms; break;
    case ActionKind::stance_filter:
      payload["stance"] = a.filter ? std::string(to_string(*a.filter)) : std::string("off");
      break;
    case ActionKind::select:
      payload["argument_id"] = a.argument_id;
      payload["rank"] = a.rank;
      break;
    case ActionKind::edit_commit: payload["argument_id"] = a.argument_id; break;
    case ActionKind::free_compose: break;
  }
  return {{"timestamp", format_iso8601(a.timestamp)}, {"kind", to_string(a.kind)}, {"payload", payload}};
}

inline WizardAction action_from_json(const nlohmann::json& j) {
  WizardAction a;
  a.timestamp = parse_iso8601(j.at("timestamp").get<std::string>());
  auto kind = j.at("kind").get<std::string>();
  const auto& p = j.at("payload");
  if (kind == "search") {
    a.kind = ActionKind::search;
    a.terms = p.at("terms").get<std::string>();
  } else if (kind == "stance_filter") {
    a.kind = ActionKind::stance_filter;
    auto s = p.at("stance").get<std::string>();
    if (s != "off") {
      a.filter = parse_stance(s);
      if (!a.filter) throw Error(ErrorCode::MalformedInput, "stance_filter value '" + s + "'");
    }
  } else if (kind == "select") {
    a.kind = ActionKind::select;
    a.argument_id = p.at("argument_id").get<std::string>();
    a.rank = p.at("rank").get<int>();
  } else if (kind == "edit_commit") {
    a.kind = ActionKind::edit_commit;
    a.argument_id = p.at("argument_id").get<std::string>();
  } else if (kind == "free_compose") {
    a.kind = ActionKind::free_compose;
  } else {
    throw Error(ErrorCode::MalformedInput, "unknown action kind '" + kind + "'");
  }
  return a;
}

inline nlohmann::ordered_json export_session(const DialogueSession& s) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSessionSchemaVersion;
  j["session_id"] = s.session_id;
  j["topic"] = s.topic;
  j["mode"] = to_string(s.mode);
  j["participant_stance"] = s.participant_stance;
  j["phase"] = to_string(s.phase);
  j["pre"] = s.pre ? questionnaire_to_json(*s.pre) : nlohmann::ordered_json(nullptr);
  j["post"] = s.post ? questionnaire_to_json(*s.post) : nlohmann::ordered_json(nullptr);
  j["experience"] = s.experience ? experience_to_json(*s.experience) : nlohmann::ordered_json(nullptr);
  auto& turns = j["turns"] = nlohmann::ordered_json::array();
  for (const auto& t : s.turns) {
    nlohmann::ordered_json tj;
    tj["index"] = t.index;
    tj["speaker"] = to_string(t.speaker);
    tj["text"] = t.text;
    tj["timestamp_iso8601"] = format_iso8601(t.timestamp);
    tj["provenance"] = t.provenance ? provenance_to_json(*t.provenance) : nlohmann::ordered_json(nullptr);
    turns.push_back(std::move(tj));
  }
  auto& actions = j["actions"] = nlohmann::ordered_json::array();
  for (const auto& a : s.actions) actions.push_back(action_to_json(a));
  j["created_at"] = format_iso8601(s.created_at);
  j["started_at"] = s.started_at ? nlohmann::ordered_json(format_iso8601(*s.started_at)) : nlohmann::ordered_json(nullptr);
  j["closed_at"] = s.closed_at ? nlohmann::ordered_json(format_iso8601(*s.closed_at)) : nlohmann::ordered_json(nullptr);
  j["duration_bounds"] = {{"min_seconds", s.bounds.min.count()}, {"max_seconds", s.bounds.max.count()}};
  j["forced_close"] = s.forced_close;
  return j;
}

inline DialogueSession import_session(const nlohmann::json& j) {
  try {
    if (!j.contains("schema_version") || j["schema_version"] != kSessionSchemaVersion)
      throw Error(ErrorCode::SchemaVersionMismatch,
                  "session log schema_version " + (j.contains("schema_version") ? j["schema_version"].dump() : "none") +
                      ", expected " + std::to_string(kSessionSchemaVersion));
    DialogueSession s;
    s.session_id = j.at("session_id").get<std::string>();
    s.topic = j.at("topic").get<std::string>();
    s.mode = parse_mode(j.at("mode").get<std::string>());
    s.participant_stance = j.value("participant_stance", std::string{});
    if (j.contains("pre") && !j["pre"].is_null()) s.pre = questionnaire_from_json(j["pre"]);
    if (j.contains("post") && !j["post"].is_null()) s.post = questionnaire_from_json(j["post"]);
    if (j.contains("experience") && !j["experience"].is_null()) s.experience = experience_from_json(j["experience"]);
    for (const auto& tj : j.at("turns")) {
      Turn t;
      t.index = tj.at("index").get<int>();
      auto speaker = tj.at("speaker").get<std::string>();
      if (speaker == "participant") {
        t.speaker = Speaker::participant;
      } else if (speaker == "agent") {
        t.speaker = Speaker::agent;
      } else {
        throw Error(ErrorCode::MalformedInput, "unknown speaker '" + speaker + "'");
      }
      t.text = tj.at("text").get<std::string>();
      t.timestamp = parse_iso8601(tj.at("timestamp_iso8601").get<std::string>());
      if (tj.contains("provenance") && !tj["provenance"].is_null()) t.provenance = provenance_from_json(tj["provenance"]);
      s.turns.push_back(std::move(t));
    }
    for (const auto& aj : j.at("actions")) s.actions.push_back(action_from_json(aj));
    if (j.contains("phase")) {
      s.phase = parse_phase(j["phase"].get<std::string>());
    } else {
      s.phase = s.post ? Phase::post_done : Phase::closed;
    }
    if (j.contains("created_at")) s.created_at = parse_iso8601(j["created_at"].get<std::string>());
    if (auto v = detail::opt_field<std::string>(j, "started_at")) s.started_at = parse_iso8601(*v);
    if (auto v = detail::opt_field<std::string>(j, "closed_at")) s.closed_at = parse_iso8601(*v);
    if (j.contains("duration_bounds")) {
      s.bounds.min = std::chrono::seconds(j["duration_bounds"].at("min_seconds").get<long long>());
      s.bounds.max = std::chrono::seconds(j["duration_bounds"].at("max_seconds").get<long long>());
    } else {
      s.bounds = default_bounds(s.mode);
    }
    s.forced_close = j.value("forced_close", false);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("session log: ") + e.what());
  }
}

inline std::string export_session_string(const DialogueSession& s) { return export_session(s).dump(); }

/// JSONL corpus: one exported session per line.
inline std::vector<DialogueSession> load_corpus(const std::filesystem::path& path) {
  std::vector<DialogueSession> out;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_copy(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MalformedInput, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(import_session(j));
  }
  return out;
}

inline void write_corpus(const std::filesystem::path& path, const std::vector<DialogueSession>& sessions) {
  std::string out;
  for (const auto& s : sessions) {
    out += export_session_string(s);
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace oumwoz
