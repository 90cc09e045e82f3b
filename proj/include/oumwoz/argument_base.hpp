#pragma once

// Argument trees, topic-relative stance propagation and the persisted
// per-topic argument base.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "oumwoz/error.hpp"
#include "oumwoz/io.hpp"

namespace oumwoz {

enum class Stance { pro, con };

constexpr std::string_view to_string(Stance s) { return s == Stance::pro ? "pro" : "con"; }

constexpr Stance flip(Stance s) { return s == Stance::pro ? Stance::con : Stance::pro; }

inline std::optional<Stance> parse_stance(std::string_view s) {
  if (s == "pro") return Stance::pro;
  if (s == "con") return Stance::con;
  return std::nullopt;
}

struct ArgumentTreeNode {
  std::string id;
  std::string text;
  std::optional<Stance> local_stance;  // relative to the parent; empty on the root
  std::vector<ArgumentTreeNode> children;

  bool operator==(const ArgumentTreeNode&) const = default;
};

enum class TreeFormat { json_tree, indented_text };

enum class RecordSource { tree, augmented };

constexpr std::string_view to_string(RecordSource s) { return s == RecordSource::tree ? "tree" : "augmented"; }

struct ArgumentRecord {
  std::string id;
  std::string topic_id;
  std::string text;
  Stance topic_stance = Stance::pro;
  int depth = 1;
  RecordSource source = RecordSource::tree;
  std::vector<std::string> path;  // ancestor ids, path[0] is the topic root

  bool operator==(const ArgumentRecord&) const = default;
};

struct ArgumentBase {
  std::string topic_id;
  std::string topic_text;
  std::vector<ArgumentRecord> records;
  Timestamp created_at{};

  bool operator==(const ArgumentBase&) const = default;

  const ArgumentRecord* find(std::string_view id) const {
    auto it = std::find_if(records.begin(), records.end(), [&](const ArgumentRecord& r) { return r.id == id; });
    return it == records.end() ? nullptr : &*it;
  }
};

struct AugmentedArgument {
  std::string text;
  Stance topic_stance = Stance::pro;
  std::string source_tag;
  std::optional<std::string> id;
};

inline constexpr int kArgumentBaseSchemaVersion = 1;
inline constexpr std::string_view kRootId = "0";

namespace detail {

inline std::string trim(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    auto a = static_cast<unsigned char>(s[i]);
    auto b = static_cast<unsigned char>(prefix[i]);
    if (std::tolower(a) != std::tolower(b)) return false;
  }
  return true;
}

// Fills in dotted path ids and checks uniqueness.
inline void assign_ids(ArgumentTreeNode& node, const std::string& auto_id, std::unordered_set<std::string>& seen) {
  if (node.id.empty()) node.id = auto_id;
  if (!seen.insert(node.id).second) throw Error(ErrorCode::MalformedInput, "duplicate node id '" + node.id + "'");
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    std::string child_id = (auto_id == kRootId ? "" : auto_id + ".") + std::to_string(i + 1);
    assign_ids(node.children[i], child_id, seen);
  }
}

inline ArgumentTreeNode node_from_json(const nlohmann::json& j, bool is_root, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedInput, where + ": expected object");
  ArgumentTreeNode node;
  if (auto it = j.find("id"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::MalformedInput, where + ": id must be a string");
    node.id = it->get<std::string>();
  }
  auto text = j.find("text");
  if (text == j.end() || !text->is_string() || trim(text->get<std::string>()).empty())
    throw Error(ErrorCode::MalformedInput, where + ": missing or empty text");
  node.text = trim(text->get<std::string>());
  auto stance = j.find("stance");
  if (is_root) {
    if (stance != j.end() && !stance->is_null())
      throw Error(ErrorCode::MalformedInput, where + ": root must not carry a stance");
  } else {
    if (stance == j.end() || !stance->is_string())
      throw Error(ErrorCode::MalformedInput, where + ": missing stance");
    node.local_stance = parse_stance(stance->get<std::string>());
    if (!node.local_stance)
      throw Error(ErrorCode::MalformedInput, where + ": stance must be \"pro\" or \"con\"");
  }
  if (auto kids = j.find("children"); kids != j.end() && !kids->is_null()) {
    if (!kids->is_array()) throw Error(ErrorCode::MalformedInput, where + ": children must be an array");
    for (std::size_t i = 0; i < kids->size(); ++i)
      node.children.push_back(node_from_json((*kids)[i], false, where + ".children[" + std::to_string(i) + "]"));
  }
  return node;
}

inline ArgumentTreeNode parse_indented(std::string_view input) {
  std::vector<ArgumentTreeNode*> stack;
  ArgumentTreeNode root;
  bool have_root = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= input.size()) {
    auto end = input.find('\n', pos);
    if (end == std::string_view::npos) end = input.size();
    std::string_view line = input.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      if (end == input.size()) break;
      continue;
    }
    std::size_t depth = 0;
    while (depth < line.size() && line[depth] == '\t') ++depth;
    std::string body = trim(line.substr(depth));
    auto where = "line " + std::to_string(line_no);
    if (!have_root) {
      if (depth != 0) throw Error(ErrorCode::MalformedInput, where + ": first line must be the unindented topic");
      root.text = body;
      have_root = true;
      stack = {&root};
      if (end == input.size()) break;
      continue;
    }
    if (depth == 0) throw Error(ErrorCode::MalformedInput, where + ": second top-level line; only one topic allowed");
    if (depth > stack.size())
      throw Error(ErrorCode::MalformedInput, where + ": indentation jumps more than one level");
    ArgumentTreeNode node;
    if (starts_with_ci(body, "pro:")) {
      node.local_stance = Stance::pro;
    } else if (starts_with_ci(body, "con:")) {
      node.local_stance = Stance::con;
    } else {
      throw Error(ErrorCode::MalformedInput, where + ": expected \"Pro:\" or \"Con:\" prefix");
    }
    node.text = trim(std::string_view(body).substr(4));
    if (node.text.empty()) throw Error(ErrorCode::MalformedInput, where + ": empty argument text");
    stack.resize(depth);
    auto& parent = *stack.back();
    parent.children.push_back(std::move(node));
    stack.push_back(&parent.children.back());
    if (end == input.size()) break;
  }
  if (!have_root) throw Error(ErrorCode::MalformedInput, "line 1: empty input, expected a topic line");
  return root;
}

inline void serialize_indented(const ArgumentTreeNode& node, int depth, std::string& out) {
  if (depth == 0) {
    out += node.text;
  } else {
    out.append(static_cast<std::size_t>(depth), '\t');
    out += node.local_stance == Stance::con ? "Con: " : "Pro: ";
    out += node.text;
  }
  out += '\n';
  for (const auto& child : node.children) serialize_indented(child, depth + 1, out);
}

inline nlohmann::ordered_json node_to_json(const ArgumentTreeNode& node) {
  nlohmann::ordered_json j;
  j["id"] = node.id;
  j["text"] = node.text;
  if (node.local_stance) j["stance"] = std::string(to_string(*node.local_stance));
  j["children"] = nlohmann::ordered_json::array();
  for (const auto& c : node.children) j["children"].push_back(node_to_json(c));
  return j;
}

}  // namespace detail

/// Parses a tree in either supported format. Missing ids become dotted path
/// indices ("1", "1.2", ...); the root gets "0".
inline ArgumentTreeNode parse_tree(std::string_view input, TreeFormat format) {
  ArgumentTreeNode root;
  if (format == TreeFormat::json_tree) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(input);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MalformedInput, "byte " + std::to_string(e.byte) + ": " + e.what());
    }
    root = detail::node_from_json(j, true, "$");
  } else {
    root = detail::parse_indented(input);
  }
  std::unordered_set<std::string> seen;
  detail::assign_ids(root, std::string(kRootId), seen);
  return root;
}

inline std::string serialize_tree(const ArgumentTreeNode& root, TreeFormat format) {
  if (format == TreeFormat::json_tree) return detail::node_to_json(root).dump(2) + "\n";
  std::string out;
  detail::serialize_indented(root, 0, out);
  return out;
}

/// One record per non-root node. Root children keep their own stance; deeper
/// nodes keep the parent's topic stance on a pro edge and flip it on a con edge.
inline std::vector<ArgumentRecord> propagate_stances(const ArgumentTreeNode& root,
                                                     const std::string& topic_id = {}) {
  const std::string topic = topic_id.empty() ? root.id : topic_id;
  std::vector<ArgumentRecord> out;
  struct Frame {
    const ArgumentTreeNode* node;
    Stance stance;
    int depth;
    std::vector<std::string> path;
  };
  // Explicit stack keeps deep Kialo chains off the call stack; children are
  // pushed in reverse so output follows pre-order.
  std::vector<Frame> stack;
  for (auto it = root.children.rbegin(); it != root.children.rend(); ++it) {
    if (!it->local_stance) throw Error(ErrorCode::MalformedInput, "node '" + it->id + "' has no stance");
    stack.push_back({&*it, *it->local_stance, 1, {topic}});
  }
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    const auto& n = *f.node;
    out.push_back({n.id, topic, n.text, f.stance, f.depth, RecordSource::tree, f.path});
    auto child_path = f.path;
    child_path.push_back(n.id);
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
      if (!it->local_stance) throw Error(ErrorCode::MalformedInput, "node '" + it->id + "' has no stance");
      Stance s = *it->local_stance == Stance::pro ? f.stance : flip(f.stance);
      stack.push_back({&*it, s, f.depth + 1, child_path});
    }
  }
  return out;
}

inline ArgumentBase make_base(const ArgumentTreeNode& root, const std::string& topic_id, Timestamp created_at) {
  ArgumentBase base;
  base.topic_id = topic_id.empty() ? root.id : topic_id;
  base.topic_text = root.text;
  base.created_at = created_at;
  base.records = propagate_stances(root, base.topic_id);
  return base;
}

/// Appends extra arguments as depth-1 augmented records. Generated ids are
/// "<source_tag>-<n>" (or "aug-<n>"), skipping any id already in use.
inline ArgumentBase merge_augmented(const ArgumentBase& base, const std::vector<AugmentedArgument>& extra) {
  ArgumentBase out = base;
  std::set<std::string> used;
  for (const auto& r : base.records) used.insert(r.id);
  for (const auto& e : extra) {
    if (e.id && used.count(*e.id)) throw Error(ErrorCode::DuplicateId, "id '" + *e.id + "' already in base");
    if (e.id) used.insert(*e.id);
  }
  std::size_t counter = 0;
  for (const auto& e : extra) {
    if (detail::trim(e.text).empty()) throw Error(ErrorCode::MalformedInput, "augmented argument with empty text");
    std::string id;
    if (e.id) {
      id = *e.id;
    } else {
      const std::string prefix = e.source_tag.empty() ? "aug" : e.source_tag;
      do {
        id = prefix + "-" + std::to_string(++counter);
      } while (used.count(id));
      used.insert(id);
    }
    out.records.push_back({id, base.topic_id, detail::trim(e.text), e.topic_stance, 1, RecordSource::augmented,
                           {base.topic_id}});
  }
  return out;
}

/// Augmentation file: one "Pro: text" or "Con: text" per line.
inline std::vector<AugmentedArgument> parse_augment_lines(std::string_view input, const std::string& source_tag) {
  std::vector<AugmentedArgument> out;
  std::istringstream in{std::string(input)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = detail::trim(line);
    if (body.empty() || body[0] == '#') continue;
    AugmentedArgument a;
    a.source_tag = source_tag;
    if (detail::starts_with_ci(body, "pro:")) {
      a.topic_stance = Stance::pro;
    } else if (detail::starts_with_ci(body, "con:")) {
      a.topic_stance = Stance::con;
    } else {
      throw Error(ErrorCode::MalformedInput, "line " + std::to_string(line_no) + ": expected \"Pro:\" or \"Con:\"");
    }
    a.text = detail::trim(std::string_view(body).substr(4));
    if (a.text.empty()) throw Error(ErrorCode::MalformedInput, "line " + std::to_string(line_no) + ": empty text");
    out.push_back(std::move(a));
  }
  return out;
}

inline std::string base_to_json(const ArgumentBase& base) {
  nlohmann::ordered_json j;
  j["schema_version"] = kArgumentBaseSchemaVersion;
  j["topic_id"] = base.topic_id;
  j["topic_text"] = base.topic_text;
  j["created_at"] = format_iso8601(base.created_at);
  auto& recs = j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : base.records) {
    recs.push_back({{"id", r.id},
                    {"text", r.text},
                    {"topic_stance", to_string(r.topic_stance)},
                    {"depth", r.depth},
                    {"source", to_string(r.source)},
                    {"path", r.path}});
  }
  return j.dump(2) + "\n";
}

inline ArgumentBase base_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::IoError, std::string("argument base is truncated or not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_number_integer())
    throw Error(ErrorCode::SchemaVersionMismatch, "missing schema_version (expected " +
                                                      std::to_string(kArgumentBaseSchemaVersion) + ")");
  int version = j["schema_version"].get<int>();
  if (version != kArgumentBaseSchemaVersion)
    throw Error(ErrorCode::SchemaVersionMismatch, "file has schema_version " + std::to_string(version) +
                                                      ", this build reads " +
                                                      std::to_string(kArgumentBaseSchemaVersion));
  ArgumentBase base;
  try {
    base.topic_id = j.at("topic_id").get<std::string>();
    base.topic_text = j.at("topic_text").get<std::string>();
    if (j.contains("created_at")) base.created_at = parse_iso8601(j["created_at"].get<std::string>());
    std::set<std::string> ids;
    for (const auto& r : j.at("records")) {
      ArgumentRecord rec;
      rec.id = r.at("id").get<std::string>();
      rec.topic_id = base.topic_id;
      rec.text = r.at("text").get<std::string>();
      auto stance = parse_stance(r.at("topic_stance").get<std::string>());
      if (!stance) throw Error(ErrorCode::MalformedInput, "record '" + rec.id + "': bad topic_stance");
      rec.topic_stance = *stance;
      rec.depth = r.at("depth").get<int>();
      auto src = r.at("source").get<std::string>();
      if (src == "tree") {
        rec.source = RecordSource::tree;
      } else if (src == "augmented") {
        rec.source = RecordSource::augmented;
      } else {
        throw Error(ErrorCode::MalformedInput, "record '" + rec.id + "': bad source '" + src + "'");
      }
      rec.path = r.at("path").get<std::vector<std::string>>();
      if (rec.depth < 1) throw Error(ErrorCode::MalformedInput, "record '" + rec.id + "': depth < 1");
      if (rec.path.empty() || rec.path[0] != base.topic_id)
        throw Error(ErrorCode::MalformedInput, "record '" + rec.id + "': path must start at the topic");
      if (!ids.insert(rec.id).second) throw Error(ErrorCode::DuplicateId, "record id '" + rec.id + "'");
      base.records.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("argument base: ") + e.what());
  }
  return base;
}

inline void save_base(const ArgumentBase& base, const std::filesystem::path& path) {
  write_file_atomic(path, base_to_json(base));
}

inline ArgumentBase load_base(const std::filesystem::path& path) { return base_from_json(read_file(path)); }

}  // namespace oumwoz
