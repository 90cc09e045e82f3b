// oumwoz command-line entry point. Exit codes: 0 ok, 1 usage, 2 data error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oumwoz/analytics.hpp"
#include "oumwoz/argument_base.hpp"
#include "oumwoz/config.hpp"
#include "oumwoz/responder.hpp"
#include "oumwoz/retrieval.hpp"
#include "oumwoz/service.hpp"
#include "oumwoz/session.hpp"

namespace fs = std::filesystem;
using namespace oumwoz;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_output(const std::optional<fs::path>& out, const std::string& content) {
  if (out) {
    write_file_atomic(*out, content);
  } else {
    std::cout << content << std::flush;
  }
}

TokenPipelineConfig pipeline_from(const std::optional<fs::path>& stopwords, bool no_stem, bool no_lowercase) {
  TokenPipelineConfig cfg;
  if (stopwords) cfg.stopwords = load_stopwords(*stopwords);
  cfg.stem = !no_stem;
  cfg.lowercase = !no_lowercase;
  return cfg;
}

fs::path default_data_dir() {
  if (const char* env = std::getenv("OUMWOZ_DATA"); env && *env) return env;
#ifdef OUMWOZ_DATA_DIR
  return OUMWOZ_DATA_DIR;
#else
  return "data";
#endif
}

// ---- ingest ----

struct IngestArgs {
  fs::path input;
  std::string format = "indented";
  std::string topic;
  std::vector<fs::path> augment;
  std::string created_at = "1970-01-01T00:00:00.000Z";
  fs::path out;
};

int run_ingest(const IngestArgs& a) {
  TreeFormat fmt;
  if (a.format == "json_tree" || a.format == "json") {
    fmt = TreeFormat::json_tree;
  } else if (a.format == "indented" || a.format == "indented_text") {
    fmt = TreeFormat::indented_text;
  } else {
    throw UsageError("--format must be json_tree or indented");
  }
  auto root = parse_tree(read_file(a.input), fmt);
  auto base = make_base(root, a.topic, parse_iso8601(a.created_at));
  for (const auto& path : a.augment) base = merge_augmented(base, parse_augment_lines(read_file(path), path.stem().string()));
  save_base(base, a.out);
  std::size_t pro = 0;
  for (const auto& r : base.records) pro += r.topic_stance == Stance::pro ? 1 : 0;
  std::cerr << "ingested " << base.records.size() << " arguments (" << pro << " pro, " << base.records.size() - pro
            << " con) for topic " << base.topic_id << "\n";
  return 0;
}

// ---- index ----

struct IndexArgs {
  fs::path base;
  fs::path out;
  std::optional<fs::path> stopwords;
  bool no_stem = false;
  bool no_lowercase = false;
};

int run_index(const IndexArgs& a) {
  auto base = load_base(a.base);
  auto index = RetrievalIndex::build(base, pipeline_from(a.stopwords, a.no_stem, a.no_lowercase));
  index.save(a.out);
  std::cerr << "indexed " << index.doc_count() << " documents, " << index.vocabulary_size() << " terms\n";
  return 0;
}

// ---- serve ----

struct ServeArgs {
  fs::path config = "oumwoz.conf";
  std::optional<std::string> bind;
};

int run_serve(const ServeArgs& a) {
  auto cfg = load_config(resolve_config_path(a.config));
  if (a.bind) {
    auto colon = a.bind->rfind(':');
    if (colon == std::string::npos) throw UsageError("--bind must be host:port");
    cfg.bind_address = a.bind->substr(0, colon);
    cfg.port = static_cast<std::uint16_t>(std::stoi(a.bind->substr(colon + 1)));
  }
  SystemClock clock;
  ServiceCore core(cfg, clock);
  Server server(core, cfg.bind_address, cfg.port);
  std::cout << "listening on " << cfg.bind_address << ":" << server.port() << std::endl;
  std::cerr << "recovered " << core.session_count() << " sessions from " << cfg.data_dir.string() << "\n";
  server.run();
  return 0;
}

// ---- chat ----

struct ChatArgs {
  std::optional<fs::path> base;
  std::optional<fs::path> index;
  std::string mode = "argu_bot";
  std::optional<fs::path> gate;
  std::optional<fs::path> terms;
  std::optional<fs::path> gold;
  std::optional<fs::path> hedges;
  std::optional<fs::path> templates;
  std::optional<fs::path> chitchat;
  std::string topic;
  std::uint64_t seed = 0;
  std::optional<fs::path> script;
  std::optional<fs::path> out;
};

QuestionnaireResponse parse_questionnaire(const std::string& text) {
  int good = 4;
  std::array<int, 3> intellect{4, 4, 4}, morality{4, 4, 4};
  std::istringstream in(text);
  std::string field;
  auto triple = [](const std::string& v) {
    std::array<int, 3> out{};
    std::istringstream vs(v);
    std::string part;
    for (std::size_t i = 0; i < 3; ++i) {
      if (!std::getline(vs, part, ',')) throw Error(ErrorCode::MalformedInput, "expected three comma-separated ratings in '" + v + "'");
      out[i] = std::stoi(part);
    }
    return out;
  };
  while (in >> field) {
    auto eq = field.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::MalformedInput, "expected key=value, got '" + field + "'");
    auto key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "good_reasons") {
      good = std::stoi(value);
    } else if (key == "intellect") {
      intellect = triple(value);
    } else if (key == "morality") {
      morality = triple(value);
    } else {
      throw Error(ErrorCode::MalformedInput, "unknown questionnaire field '" + key + "'");
    }
  }
  return QuestionnaireResponse::from_values(good, intellect, morality);
}

ExperienceRatings parse_experience(const std::string& text) {
  ExperienceRatings e;
  std::istringstream in(text);
  std::string field;
  while (in >> field) {
    auto eq = field.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::MalformedInput, "expected metric=value, got '" + field + "'");
    e.ratings[field.substr(0, eq)] = LikertRating(std::stoi(field.substr(eq + 1)));
  }
  return e;
}

int run_chat(const ChatArgs& a) {
  Mode mode = parse_mode(a.mode);
  if (mode == Mode::wizard) throw UsageError("--mode must be argu_bot or control");
  std::optional<ArgumentBase> base;
  std::optional<RetrievalIndex> index;
  if (a.base) {
    base = load_base(*a.base);
    if (a.index) {
      index = RetrievalIndex::load(*a.index);
      index->check_alignment(*base);
    } else {
      index = RetrievalIndex::build(*base);
    }
  }
  if (mode == Mode::argu_bot && !base) throw UsageError("--base is required for argu_bot");
  std::string topic = base ? base->topic_id : (a.topic.empty() ? std::string("custom") : a.topic);

  ResponderResources res;
  if (index) res.index = &*index;
  if (base) res.base = &*base;
  if (a.gate) {
    auto g = gate_from_json(read_file(*a.gate));
    res.gate = g.model;
    res.free_model = g.free_model;
  }
  if (a.terms) {
    auto lines = read_lines(*a.terms);
    res.important_terms = {lines.begin(), lines.end()};
  }
  if (a.gold) {
    auto logs = load_corpus(*a.gold);
    res.gold_ids = compile_gold_ids(logs);
  }
  if (a.hedges) res.hedges = read_lines(*a.hedges);
  if (a.templates) res.question_templates = read_lines(*a.templates);
  auto chitchat = a.chitchat ? read_lines(*a.chitchat) : default_chitchat();

  // Scripted runs use a stepping clock so the log is reproducible.
  SystemClock system_clock;
  SteppingClock stepping_clock(parse_iso8601("2022-01-01T00:00:00.000Z"));
  Clock& clock = a.script ? static_cast<Clock&>(stepping_clock) : static_cast<Clock&>(system_clock);

  std::string id = a.script ? "chat-" + std::to_string(a.seed) : random_hex_id();
  auto session = create_session(topic, mode, std::nullopt, clock, id);

  std::vector<std::string> lines;
  std::unique_ptr<std::istream> script_stream;
  std::istream* in = &std::cin;
  if (a.script) {
    script_stream = std::make_unique<std::istringstream>(read_file(*a.script));
    in = script_stream.get();
  }

  auto stances = allowed_stances(topic);
  std::string stance = stances.empty() ? std::string("unspecified") : stances.front();
  QuestionnaireResponse pre;
  std::optional<QuestionnaireResponse> post;
  std::optional<ExperienceRatings> experience;
  bool pre_submitted = false;
  auto ensure_pre = [&] {
    if (!pre_submitted) {
      submit_pre(session, stance, pre);
      pre_submitted = true;
    }
  };

  std::string line;
  int line_no = 0;
  while (std::getline(*in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto text = trim_copy(line);
    if (text.empty() || (a.script && text[0] == '#')) continue;
    if (!a.script && text == "/quit") break;
    if (text[0] == '@') {
      auto sp = text.find(' ');
      auto directive = text.substr(1, sp == std::string::npos ? std::string::npos : sp - 1);
      auto rest = sp == std::string::npos ? std::string{} : trim_copy(text.substr(sp + 1));
      try {
        if (directive == "stance") {
          if (pre_submitted) throw Error(ErrorCode::WrongPhase, "@stance after the dialogue started");
          stance = rest;
        } else if (directive == "pre") {
          if (pre_submitted) throw Error(ErrorCode::WrongPhase, "@pre after the dialogue started");
          pre = parse_questionnaire(rest);
        } else if (directive == "post") {
          post = parse_questionnaire(rest);
        } else if (directive == "experience") {
          experience = parse_experience(rest);
        } else {
          throw Error(ErrorCode::MalformedInput, "unknown directive '@" + directive + "'");
        }
      } catch (const Error& e) {
        throw Error(e.code(), "script line " + std::to_string(line_no) + ": " + e.detail());
      }
      continue;
    }
    ensure_pre();
    post_participant_turn(session, text, clock);
    std::cout << "P: " << text << "\n";
    AgentReply reply = mode == Mode::control_bot ? control_respond(session.turns, chitchat)
                                                 : respond(session.turns, res, a.seed);
    post_agent_turn(session, reply.text, reply.provenance, clock);
    std::cout << "M: " << reply.text << "\n" << std::flush;
  }
  ensure_pre();
  if (session.phase == Phase::chatting) {
    close_session(session, clock, remaining_seconds(session, clock.now()) > 0);
    if (post || experience) {
      if (!post || !experience) throw Error(ErrorCode::ValidationError, "@post and @experience must be given together");
      submit_post(session, *post, *experience);
    }
  }
  fs::path out = a.out ? *a.out : fs::path(session.session_id + ".jsonl");
  write_file_atomic(out, export_session_string(session) + "\n");
  std::cerr << "wrote session log " << out.string() << "\n";
  return 0;
}

// ---- train-gate ----

struct TrainArgs {
  fs::path corpus;
  fs::path out;
  double lr = 0.5;
  int epochs = 500;
  double l2 = 0.0;
  std::optional<fs::path> base;
};

int run_train_gate(const TrainArgs& a) {
  if (a.epochs < 0) throw UsageError("--epochs must be non-negative");
  auto logs = load_corpus(a.corpus);
  std::optional<ArgumentBase> base;
  std::optional<RetrievalIndex> index;
  if (a.base) {
    base = load_base(*a.base);
    index = RetrievalIndex::build(*base);
    std::erase_if(logs, [&](const DialogueSession& s) { return s.topic != base->topic_id; });
  }
  auto examples = extract_gate_examples(logs, index ? &*index : nullptr, base ? &*base : nullptr);
  auto result = train_gate(examples, a.lr, a.epochs, a.l2);
  GateFile g;
  g.model = result.model;
  g.free_model = free_model_from_logs(logs);
  g.training_meta = {{"examples", examples.size()}, {"lr", a.lr},           {"epochs", a.epochs},
                     {"l2", a.l2},                  {"final_loss", result.final_loss}, {"accuracy", result.accuracy},
                     {"degenerate", result.degenerate}};
  write_file_atomic(a.out, gate_to_json(g));
  std::cout << "examples=" << examples.size() << " final_loss=" << fixed(result.final_loss, 6)
            << " accuracy=" << fixed(result.accuracy, 4) << (result.degenerate ? " (single-class labels)" : "") << "\n";
  return 0;
}

// ---- terms ----

struct TermsArgs {
  fs::path corpus;
  fs::path out;
  std::optional<fs::path> stopwords;
};

int run_terms(const TermsArgs& a) {
  auto logs = load_corpus(a.corpus);
  auto terms = compile_important_terms(logs, pipeline_from(a.stopwords, false, false));
  std::string out;
  for (const auto& t : terms) out += t + "\n";
  write_file_atomic(a.out, out);
  std::cerr << "wrote " << terms.size() << " terms\n";
  return 0;
}

// ---- analyze ----

struct AnalyzeArgs {
  fs::path corpus;
  std::string report = "actions";
  std::string format = "csv";
  std::string target = "features";
  std::string mode = "wizard";
  std::optional<fs::path> lexicons;
  std::vector<fs::path> bases;
  std::optional<fs::path> out;
};

int run_analyze(const AnalyzeArgs& a) {
  if (a.format != "csv" && a.format != "md") throw UsageError("--format must be csv or md");
  auto corpus = load_corpus(a.corpus);
  std::vector<ArgumentBase> bases;
  for (const auto& p : a.bases) bases.push_back(load_base(p));
  Table table;
  if (a.report == "actions") {
    table = action_table(wizard_action_stats(corpus, bases));
  } else if (a.report == "oum") {
    table = oum_table(oum_report(corpus));
  } else if (a.report == "experience") {
    table = experience_table(experience_report(corpus));
  } else if (a.report == "histogram") {
    table = experience_histogram(experience_report(corpus));
  } else if (a.report == "correlations") {
    CorrelationTarget target;
    if (a.target == "features") {
      target = CorrelationTarget::features;
    } else if (a.target == "experience") {
      target = CorrelationTarget::experience;
    } else {
      throw UsageError("--target must be features or experience");
    }
    std::vector<MarkerLexicon> lexicons;
    if (target == CorrelationTarget::features) {
      fs::path dir = a.lexicons ? *a.lexicons : default_data_dir() / "lexicons";
      if (fs::is_directory(dir)) lexicons = load_lexicon_dir(dir);
    }
    table = correlation_table(correlation_report(corpus, target, lexicons, parse_mode(a.mode), bases));
  } else if (a.report == "stats") {
    table = dataset_stats_table(corpus, bases);
  } else {
    throw UsageError("--report must be actions, oum, experience, histogram, correlations or stats");
  }
  if (a.format == "md") {
    write_output(a.out, table.to_markdown());
  } else {
    write_output(a.out, table.to_csv());
    for (const auto& n : table.notes) std::cerr << "note: " << n << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oumwoz: Wizard-of-Oz argumentation platform"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Parse an argument tree into an argument base");
  c_ingest->add_option("input", ingest.input, "Tree file")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--format", ingest.format, "json_tree or indented")->capture_default_str();
  c_ingest->add_option("--topic", ingest.topic, "Topic id")->required();
  c_ingest->add_option("--augment", ingest.augment, "Flat 'Pro:/Con:' argument files")->check(CLI::ExistingFile);
  c_ingest->add_option("--created-at", ingest.created_at, "ISO-8601 creation time stored in the base")->capture_default_str();
  c_ingest->add_option("--out", ingest.out, "Output base file")->required();

  IndexArgs index;
  auto* c_index = app.add_subcommand("index", "Build a retrieval index");
  c_index->add_option("--base", index.base)->required()->check(CLI::ExistingFile);
  c_index->add_option("--out", index.out)->required();
  c_index->add_option("--stopwords", index.stopwords)->check(CLI::ExistingFile);
  c_index->add_flag("--no-stem", index.no_stem);
  c_index->add_flag("--no-lowercase", index.no_lowercase);

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Run the chat service");
  c_serve->add_option("--config", serve.config, "Config file (OUMWOZ_CONFIG overrides)")->capture_default_str();
  c_serve->add_option("--bind", serve.bind, "host:port, overrides the config");

  ChatArgs chat;
  auto* c_chat = app.add_subcommand("chat", "Terminal bot session");
  c_chat->add_option("--base", chat.base)->check(CLI::ExistingFile);
  c_chat->add_option("--index", chat.index)->check(CLI::ExistingFile);
  c_chat->add_option("--mode", chat.mode, "argu_bot or control")->capture_default_str();
  c_chat->add_option("--gate", chat.gate)->check(CLI::ExistingFile);
  c_chat->add_option("--terms", chat.terms)->check(CLI::ExistingFile);
  c_chat->add_option("--gold", chat.gold, "Wizard logs for the gold-argument boost")->check(CLI::ExistingFile);
  c_chat->add_option("--hedges", chat.hedges)->check(CLI::ExistingFile);
  c_chat->add_option("--templates", chat.templates)->check(CLI::ExistingFile);
  c_chat->add_option("--chitchat", chat.chitchat)->check(CLI::ExistingFile);
  c_chat->add_option("--topic", chat.topic, "Topic for control sessions without a base");
  c_chat->add_option("--seed", chat.seed)->capture_default_str();
  c_chat->add_option("--script", chat.script, "Participant utterances, one per line")->check(CLI::ExistingFile);
  c_chat->add_option("--out", chat.out, "Session log output");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train-gate", "Fit the generation gate from wizard logs");
  c_train->add_option("--corpus", train.corpus)->required()->check(CLI::ExistingFile);
  c_train->add_option("--out", train.out)->required();
  c_train->add_option("--lr", train.lr)->capture_default_str();
  c_train->add_option("--epochs", train.epochs)->capture_default_str();
  c_train->add_option("--l2", train.l2)->capture_default_str();
  c_train->add_option("--base", train.base, "Argument base for retrieval features")->check(CLI::ExistingFile);

  TermsArgs terms;
  auto* c_terms = app.add_subcommand("terms", "Compile wizard search terms");
  c_terms->add_option("--corpus", terms.corpus)->required()->check(CLI::ExistingFile);
  c_terms->add_option("--out", terms.out)->required();
  c_terms->add_option("--stopwords", terms.stopwords)->check(CLI::ExistingFile);

  AnalyzeArgs analyze;
  auto* c_analyze = app.add_subcommand("analyze", "Evaluation tables from session logs");
  c_analyze->add_option("--corpus", analyze.corpus)->required()->check(CLI::ExistingFile);
  c_analyze->add_option("--report", analyze.report, "actions|oum|experience|histogram|correlations|stats")
      ->capture_default_str();
  c_analyze->add_option("--format", analyze.format, "csv or md")->capture_default_str();
  c_analyze->add_option("--target", analyze.target, "correlations against features or experience")->capture_default_str();
  c_analyze->add_option("--mode", analyze.mode, "mode for correlations")->capture_default_str();
  c_analyze->add_option("--lexicons", analyze.lexicons, "Marker lexicon directory")->check(CLI::ExistingDirectory);
  c_analyze->add_option("--base", analyze.bases, "Argument bases for stance lookup")->check(CLI::ExistingFile);
  c_analyze->add_option("--out", analyze.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*c_ingest) return run_ingest(ingest);
    if (*c_index) return run_index(index);
    if (*c_serve) return run_serve(serve);
    if (*c_chat) return run_chat(chat);
    if (*c_train) return run_train_gate(train);
    if (*c_terms) return run_terms(terms);
    if (*c_analyze) return run_analyze(analyze);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
