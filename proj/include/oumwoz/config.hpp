#pragma once

// Service configuration: a plain "key = value" file, '#' starts a comment.
//
//   bind = 127.0.0.1:8080
//   data_dir = state
//   topic.veganism.base = bases/veganism.json
//   topic.veganism.index = bases/veganism.index.json   (optional)
//   topic.veganism.terms = bases/veganism.terms.txt    (optional)
//   topic.veganism.gold = logs/wizard.jsonl            (optional)
//   gate = models/gate.json                            (optional)
//   hedges = data/hedges.txt
//   question_templates = data/question_templates.txt
//   chitchat = data/chitchat.txt
//   lexicons = data/lexicons
//   stopwords = data/stopwords.txt
//   duration.wizard = 900,1200
//   duration.argu_bot = 600,900
//   duration.control_bot = 600,900
//   allow_force_close = false
//
// Relative paths resolve against the directory holding the config file.
// OUMWOZ_CONFIG overrides the path given on the command line.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "oumwoz/error.hpp"
#include "oumwoz/io.hpp"
#include "oumwoz/session.hpp"
#include "oumwoz/text.hpp"

namespace oumwoz {

struct TopicPaths {
  std::filesystem::path base;
  std::optional<std::filesystem::path> index;
  std::optional<std::filesystem::path> terms;
  std::optional<std::filesystem::path> gold;
};

struct ServiceConfig {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 8080;
  std::filesystem::path data_dir = "oumwoz-data";
  std::map<std::string, TopicPaths> topics;
  std::optional<std::filesystem::path> gate;
  std::optional<std::filesystem::path> hedges;
  std::optional<std::filesystem::path> question_templates;
  std::optional<std::filesystem::path> chitchat;
  std::optional<std::filesystem::path> lexicons;
  std::optional<std::filesystem::path> stopwords;
  std::map<Mode, DurationBounds> bounds = {{Mode::wizard, default_bounds(Mode::wizard)},
                                           {Mode::argu_bot, default_bounds(Mode::argu_bot)},
                                           {Mode::control_bot, default_bounds(Mode::control_bot)}};
  bool allow_force_close = false;
};

inline std::filesystem::path resolve_config_path(const std::filesystem::path& cli_path) {
  if (const char* env = std::getenv("OUMWOZ_CONFIG"); env && *env) return env;
  return cli_path;
}

inline ServiceConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
  ServiceConfig cfg;
  auto path_of = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    auto hash = raw.find('#');
    std::string line = trim_copy(raw.substr(0, hash));
    if (line.empty()) continue;
    auto eq = line.find('=');
    auto fail = [&](const std::string& msg) {
      throw Error(ErrorCode::MalformedInput, "config line " + std::to_string(line_no) + ": " + msg);
    };
    if (eq == std::string::npos) fail("expected key = value");
    std::string key = trim_copy(line.substr(0, eq));
    std::string value = trim_copy(line.substr(eq + 1));
    if (key == "bind") {
      auto colon = value.rfind(':');
      if (colon == std::string::npos) fail("bind must be host:port");
      cfg.bind_address = value.substr(0, colon);
      try {
        int port = std::stoi(value.substr(colon + 1));
        if (port < 0 || port > 65535) fail("port out of range");
        cfg.port = static_cast<std::uint16_t>(port);
      } catch (const std::logic_error&) {
        fail("bad port");
      }
    } else if (key == "data_dir") {
      cfg.data_dir = path_of(value);
    } else if (key == "gate") {
      cfg.gate = path_of(value);
    } else if (key == "hedges") {
      cfg.hedges = path_of(value);
    } else if (key == "question_templates") {
      cfg.question_templates = path_of(value);
    } else if (key == "chitchat") {
      cfg.chitchat = path_of(value);
    } else if (key == "lexicons") {
      cfg.lexicons = path_of(value);
    } else if (key == "stopwords") {
      cfg.stopwords = path_of(value);
    } else if (key == "allow_force_close") {
      if (value != "true" && value != "false") fail("allow_force_close must be true or false");
      cfg.allow_force_close = value == "true";
    } else if (key.rfind("duration.", 0) == 0) {
      Mode mode;
      try {
        mode = parse_mode(key.substr(9));
      } catch (const Error&) {
        fail("unknown mode in " + key);
      }
      auto comma = value.find(',');
      if (comma == std::string::npos) fail("duration must be min,max seconds");
      try {
        DurationBounds b{std::chrono::seconds(std::stoll(value.substr(0, comma))),
                         std::chrono::seconds(std::stoll(value.substr(comma + 1)))};
        if (b.min.count() < 0 || b.max < b.min) fail("duration must satisfy 0 <= min <= max");
        cfg.bounds[mode] = b;
      } catch (const std::logic_error&) {
        fail("bad duration");
      }
    } else if (key.rfind("topic.", 0) == 0) {
      auto dot = key.find('.', 6);
      if (dot == std::string::npos) fail("expected topic.<id>.<field>");
      std::string topic = key.substr(6, dot - 6);
      std::string field = key.substr(dot + 1);
      auto& t = cfg.topics[topic];
      if (field == "base") {
        t.base = path_of(value);
      } else if (field == "index") {
        t.index = path_of(value);
      } else if (field == "terms") {
        t.terms = path_of(value);
      } else if (field == "gold") {
        t.gold = path_of(value);
      } else {
        fail("unknown topic field '" + field + "'");
      }
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  for (const auto& [topic, t] : cfg.topics)
    if (t.base.empty()) throw Error(ErrorCode::MalformedInput, "config: topic." + topic + ".base is required");
  return cfg;
}

inline ServiceConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.parent_path());
}

}  // namespace oumwoz
