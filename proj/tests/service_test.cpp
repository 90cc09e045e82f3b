#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "net_client.hpp"
#include "oumwoz/service.hpp"
#include "support.hpp"

using namespace oumwoz;
using namespace std::chrono_literals;
using nlohmann::json;
namespace ot = oumwoz::testing;

namespace {

const Timestamp kStart = parse_iso8601("2022-05-01T10:00:00.000Z");

struct RecordingSink : ChannelSink {
  std::vector<json> frames;
  bool superseded = false;
  void send(const std::string& f) override { frames.push_back(json::parse(f)); }
  void supersede() override { superseded = true; }

  std::vector<json> of_type(const std::string& t) const {
    std::vector<json> out;
    for (const auto& f : frames)
      if (f["type"] == t) out.push_back(f);
    return out;
  }
  void clear() { frames.clear(); }
};

ServiceConfig config_for(const ot::fs::path& data_dir, bool force = false) {
  ServiceConfig c;
  c.data_dir = data_dir;
  c.topics["veganism"] = TopicPaths{ot::fs::path(OUMWOZ_DATA_DIR) / "samples/veganism.base.json", {}, {}, {}};
  c.allow_force_close = force;
  return c;
}

json questionnaire(int g) {
  return {{"good_reasons", g}, {"intellect", {4, 4, 4}}, {"morality", {4, 4, 4}}};
}

json experience(bool bot) {
  json e = json::object();
  for (auto m : kExperienceMetrics) e[std::string(m)] = 4;
  if (bot)
    for (auto m : kBotOnlyExperienceMetrics) e[std::string(m)] = 4;
  return e;
}

std::string frame(const std::string& type, int seq, json payload) {
  return json{{"type", type}, {"seq", seq}, {"payload", std::move(payload)}}.dump();
}

struct Harness {
  ot::TempDir dir;
  ManualClock clock{kStart};
  std::unique_ptr<ServiceCore> core;
  std::string id, wizard_token, participant_token;
  std::shared_ptr<RecordingSink> wizard = std::make_shared<RecordingSink>();
  std::shared_ptr<RecordingSink> participant = std::make_shared<RecordingSink>();

  explicit Harness(const std::string& mode = "wizard", bool force = false) {
    core = std::make_unique<ServiceCore>(config_for(dir.path(), force), clock);
    auto r = core->create(json{{"topic", "veganism"}, {"mode", mode}}.dump());
    EXPECT_EQ(r.status, 201) << r.body;
    auto j = json::parse(r.body);
    id = j["session_id"];
    wizard_token = j["wizard_token"];
    participant_token = j["participant_token"];
  }

  void pre() {
    auto r = core->submit_pre(id, json{{"token", participant_token}, {"stance", "vegan"}, {"response", questionnaire(3)}}.dump());
    ASSERT_EQ(r.status, 200) << r.body;
  }

  void connect_both() {
    core->connect(id, Role::wizard, wizard_token, wizard);
    core->connect(id, Role::participant, participant_token, participant);
    wizard->clear();
    participant->clear();
  }

  void say(const std::string& text, int seq = 1) {
    core->on_frame(id, Role::participant, frame("utterance", seq, {{"text", text}}));
  }
};

}  // namespace

TEST(ServiceCore, CreateAndErrors) {
  Harness h;
  EXPECT_EQ(h.core->session_count(), 1u);
  EXPECT_EQ(h.core->create(R"({"topic":"brexit","mode":"wizard"})").status, 400);
  EXPECT_EQ(h.core->create(R"({"topic":"brexit","mode":"control_bot"})").status, 201);
  EXPECT_EQ(h.core->create("not json").status, 400);
  EXPECT_EQ(h.core->submit_pre("nope", "{}").status, 404);
  auto bad = h.core->submit_pre(h.id, json{{"token", "x"}, {"stance", "vegan"}, {"response", questionnaire(3)}}.dump());
  EXPECT_EQ(bad.status, 401);
  EXPECT_EQ(json::parse(bad.body)["error"], "Unauthorized");
  h.pre();
  auto again = h.core->submit_pre(h.id, json{{"token", h.participant_token}, {"stance", "vegan"}, {"response", questionnaire(3)}}.dump());
  EXPECT_EQ(again.status, 409);
  EXPECT_THROW(h.core->check_channel(h.id, Role::wizard, h.participant_token), Error);
  EXPECT_NO_THROW(h.core->check_channel(h.id, Role::wizard, h.wizard_token));
}

TEST(ServiceCore, ParticipantUtterancePushesOneSuggestionList) {
  Harness h;
  h.pre();
  h.connect_both();
  h.say("Animals suffer on factory farms and eating meat is cruel");
  auto acks = h.participant->of_type("ack");
  ASSERT_EQ(acks.size(), 1u);
  EXPECT_EQ(acks[0]["seq"], 1);
  EXPECT_EQ(acks[0]["payload"]["turn_index"], 0);
  auto sugg = h.wizard->of_type("suggestions");
  ASSERT_EQ(sugg.size(), 1u);
  EXPECT_TRUE(sugg[0]["seq"].is_null());
  EXPECT_GE(sugg[0]["push_seq"].get<int>(), 1);
  const auto& items = sugg[0]["payload"]["items"];
  ASSERT_FALSE(items.empty());
  EXPECT_LE(items.size(), 10u);
  for (std::size_t i = 0; i < items.size(); ++i) EXPECT_EQ(items[i]["rank"], i + 1);
  EXPECT_EQ(h.wizard->of_type("utterance").size(), 1u);
}

TEST(ServiceCore, FilterAndSearch) {
  Harness h;
  h.pre();
  h.connect_both();
  h.say("Is a vegan diet healthy and good for the environment?");
  h.wizard->clear();
  h.core->on_frame(h.id, Role::wizard, frame("filter", 5, {{"stance", "con"}}));
  ASSERT_EQ(h.wizard->of_type("ack").size(), 1u);
  auto sugg = h.wizard->of_type("suggestions");
  ASSERT_EQ(sugg.size(), 1u);
  EXPECT_EQ(sugg[0]["payload"]["filter"], "con");
  for (const auto& it : sugg[0]["payload"]["items"]) EXPECT_EQ(it["stance"], "con");

  h.wizard->clear();
  h.core->on_frame(h.id, Role::wizard, frame("filter", 6, {{"stance", "sideways"}}));
  auto err = h.wizard->of_type("error");
  ASSERT_EQ(err.size(), 1u);
  EXPECT_EQ(err[0]["seq"], 6);
  EXPECT_EQ(err[0]["payload"]["status"], 400);

  h.wizard->clear();
  h.core->on_frame(h.id, Role::wizard, frame("search", 7, {{"terms", "protein"}}));
  sugg = h.wizard->of_type("suggestions");
  ASSERT_EQ(sugg.size(), 1u);
  EXPECT_EQ(sugg[0]["payload"]["source"], "search");

  // participants cannot issue wizard commands
  h.participant->clear();
  h.core->on_frame(h.id, Role::participant, frame("search", 8, {{"terms", "x"}}));
  EXPECT_EQ(h.participant->of_type("error").at(0)["payload"]["status"], 401);
}

TEST(ServiceCore, WizardReplyWithProvenanceAndAlternation) {
  Harness h;
  h.pre();
  h.connect_both();
  h.say("Why should I stop eating meat?");
  auto items = h.wizard->of_type("suggestions").at(0)["payload"]["items"];
  std::string arg_id = items[0]["argument_id"];
  h.core->on_frame(h.id, Role::wizard, frame("select", 2, {{"argument_id", arg_id}, {"rank", 1}}));
  h.core->on_frame(h.id, Role::wizard,
                   frame("utterance", 3, {{"text", items[0]["text"]}, {"provenance", {{"argument_id", arg_id}, {"rank", 1}}}}));
  auto got = h.participant->of_type("utterance");
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0]["payload"]["index"], 1);
  const auto* s = h.core->find(h.id);
  ASSERT_TRUE(s);
  ASSERT_TRUE(s->turns[1].provenance);
  EXPECT_EQ(s->turns[1].provenance->argument_id, arg_id);
  EXPECT_EQ(s->turns[1].provenance->edited, false);

  // a second agent turn in a row is refused with 409
  h.wizard->clear();
  h.core->on_frame(h.id, Role::wizard, frame("utterance", 4, {{"text", "and another"}}));
  auto err = h.wizard->of_type("error");
  ASSERT_EQ(err.size(), 1u);
  EXPECT_EQ(err[0]["payload"]["code"], "AlternationViolation");
  EXPECT_EQ(err[0]["payload"]["status"], 409);
  EXPECT_EQ(h.core->find(h.id)->turns.size(), 2u);
}

TEST(ServiceCore, ArguBotReplies) {
  Harness h("argu_bot");
  h.pre();
  h.connect_both();
  h.say("I think vegan food is too expensive for most people");
  auto utt = h.participant->of_type("utterance");
  ASSERT_EQ(utt.size(), 1u);
  EXPECT_EQ(utt[0]["payload"]["speaker"], "agent");
  const auto* s = h.core->find(h.id);
  ASSERT_EQ(s->turns.size(), 2u);
  ASSERT_TRUE(s->turns[1].provenance);
}

TEST(ServiceCore, CloseTimingAndForceFlag) {
  Harness h;
  h.pre();
  h.connect_both();
  h.say("hello there");
  h.clock.set(kStart + 5min);
  auto r = h.core->close(h.id, json{{"token", h.wizard_token}}.dump());
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(json::parse(r.body)["remaining_seconds"], 600);
  EXPECT_EQ(h.core->close(h.id, json{{"token", h.wizard_token}, {"force", true}}.dump()).status, 401);
  h.clock.set(kStart + 15min);
  r = h.core->close(h.id, json{{"token", h.participant_token}}.dump());
  EXPECT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(json::parse(r.body)["phase"], "closed");
  EXPECT_EQ(h.participant->of_type("phase").back()["payload"]["value"], "closed");

  Harness f("wizard", true);
  f.pre();
  f.say("hi");
  EXPECT_EQ(f.core->close(f.id, json{{"token", f.wizard_token}, {"force", true}}.dump()).status, 200);
  EXPECT_TRUE(f.core->find(f.id)->forced_close);
}

TEST(ServiceCore, ExportMatchesSessionModule) {
  Harness h;
  h.pre();
  h.connect_both();
  h.say("hello");
  h.core->on_frame(h.id, Role::wizard, frame("utterance", 1, {{"text", "Hi, what do you think about veganism?"}}));
  h.clock.set(kStart + 16min);
  ASSERT_EQ(h.core->close(h.id, json{{"token", h.wizard_token}}.dump()).status, 200);
  auto r = h.core->export_session(h.id);
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body, export_session_string(*h.core->find(h.id)));
  EXPECT_TRUE(json::parse(r.body)["post"].is_null());
  auto post = h.core->submit_post(h.id, json{{"token", h.participant_token}, {"response", questionnaire(5)}, {"experience", experience(false)}}.dump());
  EXPECT_EQ(post.status, 200) << post.body;
  EXPECT_EQ(h.core->export_session("missing").status, 404);

  h.core->create(R"({"topic":"veganism","mode":"wizard"})");
  auto corpus = h.core->export_corpus();
  EXPECT_EQ(std::count(corpus.body.begin(), corpus.body.end(), '\n'), 1);
  EXPECT_EQ(corpus.content_type, "application/x-ndjson");
}

TEST(ServiceCore, SupersedeNotice) {
  Harness h;
  h.pre();
  h.core->connect(h.id, Role::wizard, h.wizard_token, h.wizard);
  auto second = std::make_shared<RecordingSink>();
  h.core->connect(h.id, Role::wizard, h.wizard_token, second);
  EXPECT_TRUE(h.wizard->superseded);
  EXPECT_EQ(h.wizard->of_type("notice").at(0)["payload"]["reason"], "superseded");
  EXPECT_EQ(second->of_type("phase").size(), 1u);
  h.core->disconnect(h.id, Role::wizard, h.wizard.get());  // stale disconnect is ignored
  h.say("hello");
  EXPECT_EQ(second->of_type("utterance").size(), 1u);
}

TEST(ServiceCore, MalformedFrames) {
  Harness h;
  h.pre();
  h.connect_both();
  h.core->on_frame(h.id, Role::participant, "{not json");
  h.core->on_frame(h.id, Role::participant, R"({"type":"dance","seq":3})");
  auto errs = h.participant->of_type("error");
  ASSERT_EQ(errs.size(), 2u);
  EXPECT_EQ(errs[0]["payload"]["code"], "MalformedInput");
  EXPECT_EQ(errs[1]["seq"], 3);
  EXPECT_EQ(h.core->find(h.id)->phase, Phase::pre_done);
}

TEST(ServiceCore, RestartRecoversAcknowledgedState) {
  Harness h;
  h.pre();
  h.connect_both();
  h.say("first message", 1);
  h.core->on_frame(h.id, Role::wizard, frame("search", 2, {{"terms", "health"}}));
  h.core->on_frame(h.id, Role::wizard, frame("filter", 3, {{"stance", "pro"}}));
  h.core->on_frame(h.id, Role::wizard, frame("utterance", 4, {{"text", "reply"}}));
  auto before = export_session_string(*h.core->find(h.id));
  h.core.reset();

  // an interrupted write leaves a partial tail that was never acknowledged
  auto wal = h.dir / ("sessions/" + h.id + ".wal.jsonl");
  ASSERT_TRUE(ot::fs::exists(wal));
  {
    std::ofstream out(wal, std::ios::app);
    out << R"({"event":"turn","at":"2022-05-01T10:00:0)";
  }
  ServiceCore again(config_for(h.dir.path()), h.clock);
  ASSERT_TRUE(again.find(h.id));
  EXPECT_EQ(export_session_string(*again.find(h.id)), before);
  const auto& acts = again.find(h.id)->actions;
  auto last_filter = std::find_if(acts.rbegin(), acts.rend(), [](const auto& a) { return a.kind == ActionKind::stance_filter; });
  ASSERT_NE(last_filter, acts.rend());
  EXPECT_EQ(last_filter->filter, Stance::pro);

  // the restored session keeps accepting turns
  auto sink = std::make_shared<RecordingSink>();
  again.connect(h.id, Role::participant, h.participant_token, sink);
  again.on_frame(h.id, Role::participant, frame("utterance", 5, {{"text", "second message"}}));
  EXPECT_EQ(sink->of_type("ack").size(), 1u);
  EXPECT_EQ(again.find(h.id)->turns.size(), 3u);
}

TEST(ServiceCore, RestartAfterPostLoadsExport) {
  Harness h("control_bot");
  h.pre();
  h.say("hi");
  ASSERT_EQ(h.core->close(h.id, json{{"token", h.wizard_token}}.dump()).status, 409);
  h.clock.set(kStart + 11min);
  ASSERT_EQ(h.core->close(h.id, json{{"token", h.wizard_token}}.dump()).status, 200);
  ASSERT_EQ(h.core->submit_post(h.id, json{{"token", h.participant_token}, {"response", questionnaire(4)}, {"experience", experience(true)}}.dump()).status, 200);
  EXPECT_FALSE(ot::fs::exists(h.dir / ("sessions/" + h.id + ".wal.jsonl")));
  auto before = export_session_string(*h.core->find(h.id));
  h.core.reset();
  ServiceCore again(config_for(h.dir.path()), h.clock);
  EXPECT_EQ(export_session_string(*again.find(h.id)), before);
}

TEST(ServiceNet, ParseTarget) {
  auto t = net::parse_target("/sessions/ab%20c/chat?role=wizard&token=t%2B1&flag");
  ASSERT_EQ(t.segments.size(), 3u);
  EXPECT_EQ(t.segments[1], "ab c");
  EXPECT_EQ(t.query["role"], "wizard");
  EXPECT_EQ(t.query["token"], "t+1");
  EXPECT_EQ(t.query.count("flag"), 1u);
}

using ot::WsClient;
using ot::http_request;
namespace http = ot::http;
namespace websocket = ot::websocket;
namespace beast = ot::beast;

TEST(ServiceNet, HttpAndWebSocketRoundTrip) {
  ot::TempDir dir;
  SystemClock clock;
  ServiceCore core(config_for(dir.path()), clock);
  Server server(core, "127.0.0.1", 0);
  auto port = server.port();
  std::thread th([&] { server.run(); });

  auto [status, body] = http_request(port, http::verb::post, "/sessions", R"({"topic":"veganism","mode":"wizard"})");
  ASSERT_EQ(status, 201) << body;
  auto created = json::parse(body);
  std::string id = created["session_id"];
  auto pre = http_request(port, http::verb::post, "/sessions/" + id + "/pre",
                          json{{"token", created["participant_token"]}, {"stance", "vegan"}, {"response", questionnaire(3)}}.dump());
  EXPECT_EQ(pre.first, 200) << pre.second;
  EXPECT_EQ(http_request(port, http::verb::get, "/nowhere").first, 404);
  EXPECT_EQ(http_request(port, http::verb::get, "/sessions/zzz/export").first, 404);

  {
    WsClient wizard(port, "/sessions/" + id + "/chat?role=wizard&token=" + created["wizard_token"].get<std::string>());
    WsClient part(port, "/sessions/" + id + "/chat?role=participant&token=" + created["participant_token"].get<std::string>());
    EXPECT_EQ(wizard.read()["type"], "phase");
    EXPECT_EQ(part.read()["type"], "phase");
    part.send(frame("utterance", 1, {{"text", "Eating meat harms the planet"}}));
    auto ack = part.read_until("ack");
    EXPECT_EQ(ack["seq"], 1);
    auto sugg = wizard.read_until("suggestions");
    EXPECT_FALSE(sugg["payload"]["items"].empty());
    wizard.send(frame("utterance", 1, {{"text", "Why do you think so?"}}));
    EXPECT_EQ(wizard.read_until("ack")["payload"]["turn_index"], 1);
    EXPECT_EQ(part.read_until("utterance")["payload"]["text"], "Why do you think so?");
    wizard.ws.close(websocket::close_code::normal);
    part.ws.close(websocket::close_code::normal);
  }

  // bad token is refused before the upgrade
  EXPECT_THROW(WsClient(port, "/sessions/" + id + "/chat?role=wizard&token=nope"), beast::system_error);

  auto exp = http_request(port, http::verb::get, "/sessions/" + id + "/export");
  EXPECT_EQ(exp.first, 200);
  EXPECT_EQ(json::parse(exp.second)["turns"].size(), 2u);

  server.stop();
  th.join();
}
