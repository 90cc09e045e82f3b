#pragma once

// Batch evaluation over session-log corpora: wizard action statistics, OUM
// and chat-experience tables, dialogue features and Spearman correlation
// reports. Every report is a Table renderable as CSV or Markdown.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oumwoz/argument_base.hpp"
#include "oumwoz/error.hpp"
#include "oumwoz/io.hpp"
#include "oumwoz/oum.hpp"
#include "oumwoz/session.hpp"
#include "oumwoz/stats.hpp"
#include "oumwoz/text.hpp"

namespace oumwoz {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> notes;

  std::string to_csv() const {
    std::string out;
    auto emit = [&](const std::vector<std::string>& row) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        const auto& f = row[i];
        if (f.find_first_of(",\"\r\n") != std::string::npos) {
          out += '"';
          for (char c : f) {
            if (c == '"') out += '"';
            out += c;
          }
          out += '"';
        } else {
          out += f;
        }
      }
      out += '\n';
    };
    emit(header);
    for (const auto& r : rows) emit(r);
    return out;
  }

  std::string to_markdown() const {
    std::string out;
    auto emit = [&](const std::vector<std::string>& row) {
      out += '|';
      for (const auto& f : row) {
        out += ' ';
        for (char c : f) {
          if (c == '|') out += '\\';
          out += c == '\n' ? ' ' : c;
        }
        out += " |";
      }
      out += '\n';
    };
    emit(header);
    out += '|';
    for (std::size_t i = 0; i < header.size(); ++i) out += "---|";
    out += '\n';
    for (const auto& r : rows) emit(r);
    for (const auto& n : notes) out += "\n_" + n + "_\n";
    return out;
  }
};

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);  // no "-0.00"
  return s;
}

inline std::string p_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

inline constexpr std::array<Mode, 3> kModeOrder = {Mode::wizard, Mode::argu_bot, Mode::control_bot};

// ---- wizard actions ----

struct ActionStats {
  std::size_t dialogues = 0;
  std::size_t agent_turns = 0;
  std::size_t argument_turns = 0;
  std::size_t edited = 0;
  std::size_t top10 = 0;
  std::size_t pro = 0;
  std::size_t con = 0;
  std::size_t stance_known = 0;
  std::size_t dialogues_with_search = 0;
  std::size_t dialogues_with_filter = 0;

  static double pct(std::size_t num, std::size_t den) { return den ? 100.0 * static_cast<double>(num) / static_cast<double>(den) : 0.0; }
  double edit_pct() const { return pct(edited, argument_turns); }
  double search_pct() const { return pct(dialogues_with_search, dialogues); }
  double filter_pct() const { return pct(dialogues_with_filter, dialogues); }
  double top10_pct() const { return pct(top10, argument_turns); }
  double pro_pct() const { return pct(pro, stance_known); }
  double con_pct() const { return pct(con, stance_known); }
  double arg_use_pct() const { return pct(argument_turns, agent_turns); }
};

inline std::optional<Stance> argument_stance(const Provenance& p, std::span<const ArgumentBase> bases,
                                             const std::string& topic) {
  if (p.stance) return p.stance;
  if (!p.argument_id) return std::nullopt;
  for (const auto& b : bases) {
    if (b.topic_id != topic) continue;
    if (const auto* r = b.find(*p.argument_id)) return r->topic_stance;
  }
  return std::nullopt;
}

/// Denominators: edit, top-10, pro and con over agent turns that used an
/// argument; search and filter over wizard dialogues where the action
/// occurred at least once; argument use over all agent turns.
inline ActionStats wizard_action_stats(std::span<const DialogueSession> corpus,
                                       std::span<const ArgumentBase> bases = {}) {
  ActionStats st;
  for (const auto& s : corpus) {
    if (s.mode != Mode::wizard) continue;
    ++st.dialogues;
    bool searched = false, filtered = false;
    for (const auto& a : s.actions) {
      searched = searched || a.kind == ActionKind::search;
      filtered = filtered || (a.kind == ActionKind::stance_filter && a.filter.has_value());
    }
    st.dialogues_with_search += searched ? 1 : 0;
    st.dialogues_with_filter += filtered ? 1 : 0;
    for (const auto& t : s.turns) {
      if (t.speaker != Speaker::agent) continue;
      ++st.agent_turns;
      if (!t.provenance || !t.provenance->argument_id) continue;
      ++st.argument_turns;
      if (t.provenance->edited.value_or(false)) ++st.edited;
      if (t.provenance->selection_rank && *t.provenance->selection_rank <= 10) ++st.top10;
      if (auto stance = argument_stance(*t.provenance, bases, s.topic)) {
        ++st.stance_known;
        (*stance == Stance::pro ? st.pro : st.con) += 1;
      }
    }
  }
  return st;
}

inline Table action_table(const ActionStats& st) {
  Table t;
  t.header = {"action", "percentage", "numerator", "denominator"};
  auto row = [&](std::string name, double pct, std::size_t num, std::size_t den) {
    t.rows.push_back({std::move(name), fixed(pct, 2), std::to_string(num), std::to_string(den)});
  };
  row("edit_selected_arg", st.edit_pct(), st.edited, st.argument_turns);
  row("use_search_terms", st.search_pct(), st.dialogues_with_search, st.dialogues);
  row("use_stance_filter", st.filter_pct(), st.dialogues_with_filter, st.dialogues);
  row("select_from_top10", st.top10_pct(), st.top10, st.argument_turns);
  row("use_pro_args", st.pro_pct(), st.pro, st.stance_known);
  row("use_con_args", st.con_pct(), st.con, st.stance_known);
  row("argument_use_rate", st.arg_use_pct(), st.argument_turns, st.agent_turns);
  if (st.dialogues == 0) t.notes.push_back("no wizard dialogues in corpus");
  if (st.stance_known < st.argument_turns)
    t.notes.push_back(std::to_string(st.argument_turns - st.stance_known) +
                      " argument turns without a known stance were left out of the pro/con shares");
  t.notes.push_back("search and filter percentages are per dialogue; the other shares are per agent turn");
  return t;
}

// ---- OUM table ----

/// Dialogues with both questionnaires; the rest are counted and skipped.
inline std::vector<const DialogueSession*> scored_dialogues(std::span<const DialogueSession> corpus,
                                                            std::optional<Mode> mode, std::size_t* excluded = nullptr) {
  std::vector<const DialogueSession*> out;
  std::size_t skipped = 0;
  for (const auto& s : corpus) {
    if (mode && s.mode != *mode) continue;
    if (s.pre && s.post) {
      out.push_back(&s);
    } else {
      ++skipped;
    }
  }
  if (excluded) *excluded = skipped;
  return out;
}

inline std::vector<OumScores> oum_scores_of(const std::vector<const DialogueSession*>& dialogues) {
  std::vector<OumScores> out;
  for (const auto* s : dialogues) out.push_back(compute_oum_scores(*s->pre, *s->post));
  return out;
}

struct OumRow {
  Mode mode;
  OumAggregate aggregate;
  std::vector<OumScores> scores;
  std::map<OumCategory, std::optional<stats::StatResult>> vs_control;
};

struct OumReport {
  std::vector<OumRow> rows;
  std::size_t excluded = 0;
  bool has_significance = false;
  std::vector<std::string> notes;
};

inline OumReport oum_report(std::span<const DialogueSession> corpus) {
  OumReport rep;
  for (auto mode : kModeOrder) {
    std::size_t excluded = 0;
    auto ds = scored_dialogues(corpus, mode, &excluded);
    rep.excluded += excluded;
    if (ds.empty()) continue;
    OumRow row{mode, {}, oum_scores_of(ds), {}};
    row.aggregate = aggregate(row.scores);
    rep.rows.push_back(std::move(row));
  }
  const OumRow* control = nullptr;
  for (const auto& r : rep.rows)
    if (r.mode == Mode::control_bot) control = &r;
  rep.has_significance = control && rep.rows.size() > 1;
  if (rep.has_significance) {
    for (auto& r : rep.rows) {
      if (r.mode == Mode::control_bot) continue;
      for (auto cat : kOumCategories) {
        std::vector<double> a, b;
        for (const auto& s : r.scores) a.push_back(score_of(s, cat));
        for (const auto& s : control->scores) b.push_back(score_of(s, cat));
        try {
          r.vs_control[cat] = stats::welch_t(a, b);
        } catch (const Error& e) {
          r.vs_control[cat] = std::nullopt;
          rep.notes.push_back(std::string(to_string(r.mode)) + "/" + std::string(to_string(cat)) +
                              ": no significance test (" + e.what() + ")");
        }
      }
    }
  }
  return rep;
}

inline Table oum_table(const OumReport& rep) {
  Table t;
  t.header = {"mode", "n"};
  for (auto cat : kOumCategories) {
    std::string c(to_string(cat));
    for (const char* col : {"_pct_zero", "_pct_plus", "_pct_minus", "_overall"}) t.header.push_back(c + col);
  }
  for (const auto& r : rep.rows) {
    std::vector<std::string> row = {std::string(to_string(r.mode)), std::to_string(r.scores.size())};
    for (auto cat : kOumCategories) {
      const auto& a = r.aggregate[cat];
      row.push_back(fixed(a.pct_zero, 1));
      row.push_back(fixed(a.pct_plus, 1) + " (" + (a.mean_plus ? fixed(*a.mean_plus, 2) : "-") + ")");
      row.push_back(fixed(a.pct_minus, 1) + " (" + (a.mean_minus ? fixed(*a.mean_minus, 2) : "-") + ")");
      std::string overall = fixed(a.overall, 2);
      if (rep.has_significance) {
        auto it = r.vs_control.find(cat);
        if (it != r.vs_control.end() && it->second && it->second->p_value < 0.05) overall += "*";
      }
      row.push_back(overall);
    }
    t.rows.push_back(std::move(row));
  }
  t.notes = rep.notes;
  t.notes.push_back(std::to_string(rep.excluded) + " dialogues without both questionnaires were excluded");
  if (rep.has_significance) t.notes.push_back("* marks p < 0.05 against control_bot (Welch t-test)");
  return t;
}

// ---- chat experience ----

inline std::vector<std::string> experience_metric_order() {
  std::vector<std::string> out;
  for (auto m : {"enjoyable", "engaging", "natural", "clear", "persuasive", "consistent", "knowledgeable",
                 "confusing", "frustrating", "too_complicated", "boring"})
    out.emplace_back(m);
  return out;
}

struct ExperienceReport {
  std::vector<Mode> modes;
  std::map<Mode, std::map<std::string, std::vector<double>>> ratings;
  std::map<Mode, std::size_t> dialogues;
  std::vector<std::pair<Mode, Mode>> pairs;
  std::map<std::pair<Mode, std::string>, stats::StatResult> significance;  // keyed by the pair's first mode
  std::vector<std::string> notes;
};

inline ExperienceReport experience_report(std::span<const DialogueSession> corpus,
                                          std::vector<std::pair<Mode, Mode>> pairs = {{Mode::argu_bot, Mode::control_bot}}) {
  ExperienceReport rep;
  for (auto mode : kModeOrder) {
    std::size_t n = 0;
    for (const auto& s : corpus) {
      if (s.mode != mode || !s.experience) continue;
      ++n;
      for (const auto& [k, v] : s.experience->ratings) rep.ratings[mode][k].push_back(v.value());
    }
    if (n) {
      rep.modes.push_back(mode);
      rep.dialogues[mode] = n;
    }
  }
  for (const auto& [a, b] : pairs) {
    if (!rep.dialogues.count(a) || !rep.dialogues.count(b)) continue;
    rep.pairs.emplace_back(a, b);
    for (const auto& metric : experience_metric_order()) {
      const auto& xa = rep.ratings[a][metric];
      const auto& xb = rep.ratings[b][metric];
      if (xa.size() < 2 || xb.size() < 2) continue;
      try {
        rep.significance[{a, metric}] = stats::welch_t(xa, xb);
      } catch (const Error& e) {
        rep.notes.push_back(std::string(to_string(a)) + " vs " + std::string(to_string(b)) + " " + metric + ": " + e.what());
      }
    }
  }
  return rep;
}

inline Table experience_table(const ExperienceReport& rep) {
  Table t;
  t.header = {"metric"};
  for (auto m : rep.modes) t.header.push_back(std::string(to_string(m)));
  for (const auto& metric : experience_metric_order()) {
    std::vector<std::string> row = {metric};
    bool any = false;
    for (auto m : rep.modes) {
      auto mit = rep.ratings.find(m);
      const std::vector<double>* v = nullptr;
      if (mit != rep.ratings.end())
        if (auto it = mit->second.find(metric); it != mit->second.end() && !it->second.empty()) v = &it->second;
      if (!v) {
        row.push_back("-");
        continue;
      }
      any = true;
      std::string cell = fixed(stats::mean(*v), 2);
      if (auto sig = rep.significance.find({m, metric}); sig != rep.significance.end()) cell += p_stars(sig->second.p_value);
      row.push_back(cell);
    }
    if (any) t.rows.push_back(std::move(row));
  }
  t.notes = rep.notes;
  for (const auto& [a, b] : rep.pairs)
    t.notes.push_back("stars on " + std::string(to_string(a)) + ": Welch t-test against " + std::string(to_string(b)) +
                      " (*** p<0.001, ** p<0.01, * p<0.05)");
  return t;
}

/// Counts per Likert value (1..7) for every mode and metric.
inline Table experience_histogram(const ExperienceReport& rep) {
  Table t;
  t.header = {"mode", "metric", "1", "2", "3", "4", "5", "6", "7", "total"};
  for (auto m : rep.modes) {
    for (const auto& metric : experience_metric_order()) {
      auto mit = rep.ratings.find(m);
      if (mit == rep.ratings.end()) continue;
      auto it = mit->second.find(metric);
      if (it == mit->second.end() || it->second.empty()) continue;
      std::array<int, 7> counts{};
      for (double v : it->second) ++counts[static_cast<std::size_t>(v) - 1];
      std::vector<std::string> row = {std::string(to_string(m)), metric};
      for (int c : counts) row.push_back(std::to_string(c));
      row.push_back(std::to_string(it->second.size()));
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

// ---- dialogue features ----

/// A named list of phrases; each phrase matches as a contiguous token run.
struct MarkerLexicon {
  std::string name;
  std::vector<std::vector<std::string>> phrases;

  static MarkerLexicon from_lines(std::string name, std::span<const std::string> lines) {
    MarkerLexicon lex{std::move(name), {}};
    for (const auto& l : lines) {
      auto toks = tokenize(l);
      if (!toks.empty()) lex.phrases.push_back(std::move(toks));
    }
    return lex;
  }

  static MarkerLexicon load(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    return from_lines(path.stem().string(), lines);
  }

  std::size_t count_hits(std::span<const std::string> tokens) const {
    std::size_t hits = 0;
    for (const auto& p : phrases) {
      if (p.size() > tokens.size()) continue;
      for (std::size_t i = 0; i + p.size() <= tokens.size(); ++i)
        if (std::equal(p.begin(), p.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) ++hits;
    }
    return hits;
  }
};

/// Every *.txt file in a directory, sorted by name.
inline std::vector<MarkerLexicon> load_lexicon_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (const auto& e : std::filesystem::directory_iterator(dir, ec))
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  if (ec) throw Error(ErrorCode::IoError, "cannot list lexicon directory " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());
  std::vector<MarkerLexicon> out;
  for (const auto& f : files) out.push_back(MarkerLexicon::load(f));
  return out;
}

struct DialogueFeatures {
  int length = 0;
  double wizard_turn_prop = 0.0;
  double participant_turn_prop = 0.0;
  double question_prop = 0.0;
  double arg_use_prop = 0.0;
  double edited_prop = 0.0;
  double pro_con_ratio = 0.0;
  bool pro_con_clamped = false;  // no con-argument turns; denominator clamped to 1
  std::map<std::string, double> marker_freq;
};

inline DialogueFeatures extract_features(const DialogueSession& d, std::span<const MarkerLexicon> lexicons,
                                         std::span<const ArgumentBase> bases = {}) {
  DialogueFeatures f;
  f.length = static_cast<int>(d.turns.size());
  std::size_t agent = 0, participant = 0, sentences = 0, questions = 0, args = 0, edited = 0, pro = 0, con = 0;
  std::map<std::string, std::size_t> hits;
  for (const auto& lex : lexicons) hits[lex.name] = 0;
  for (const auto& t : d.turns) {
    if (t.speaker == Speaker::participant) {
      ++participant;
      continue;
    }
    ++agent;
    for (const auto& sentence : split_sentences(t.text)) {
      ++sentences;
      questions += is_question(sentence) ? 1 : 0;
      auto toks = tokenize(sentence);
      for (const auto& lex : lexicons) hits[lex.name] += lex.count_hits(toks);
    }
    if (t.provenance && t.provenance->argument_id) {
      ++args;
      edited += t.provenance->edited.value_or(false) ? 1 : 0;
      if (auto s = argument_stance(*t.provenance, bases, d.topic)) (*s == Stance::pro ? pro : con) += 1;
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  f.wizard_turn_prop = ratio(agent, d.turns.size());
  f.participant_turn_prop = ratio(participant, d.turns.size());
  f.question_prop = ratio(questions, sentences);
  f.arg_use_prop = ratio(args, agent);
  f.edited_prop = ratio(edited, args);
  f.pro_con_clamped = con == 0;
  f.pro_con_ratio = static_cast<double>(pro) / static_cast<double>(std::max<std::size_t>(1, con));
  for (const auto& [name, n] : hits) f.marker_freq[name] = ratio(n, sentences);
  return f;
}

enum class CorrelationTarget { features, experience };

struct Correlation {
  std::string name;
  std::optional<double> rho;
  std::string note;
};

namespace detail {

inline Correlation correlate(std::string name, std::span<const double> x, std::span<const double> y) {
  Correlation c{std::move(name), std::nullopt, {}};
  if (x.size() < 3) {
    c.note = "fewer than three dialogues";
    return c;
  }
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); })) {
    c.note = "ConstantFeature";
    return c;
  }
  try {
    c.rho = stats::spearman(x, y);
  } catch (const Error& e) {
    c.note = e.code() == ErrorCode::ConstantInput ? "ConstantScore" : e.what();
  }
  return c;
}

}  // namespace detail

/// Spearman rho between per-dialogue good-reasons OUM scores and each
/// dialogue feature or experience rating, over dialogues of one mode.
inline std::vector<Correlation> correlation_report(std::span<const DialogueSession> corpus, CorrelationTarget which,
                                                   std::span<const MarkerLexicon> lexicons = {},
                                                   Mode mode = Mode::wizard, std::span<const ArgumentBase> bases = {}) {
  auto ds = scored_dialogues(corpus, mode);
  std::vector<double> scores;
  for (const auto* d : ds) scores.push_back(compute_oum_scores(*d->pre, *d->post).good_reasons);
  std::vector<std::pair<std::string, std::vector<double>>> columns;
  if (which == CorrelationTarget::features) {
    std::vector<DialogueFeatures> feats;
    for (const auto* d : ds) feats.push_back(extract_features(*d, lexicons, bases));
    auto col = [&](std::string name, auto get) {
      std::vector<double> v;
      for (const auto& f : feats) v.push_back(get(f));
      columns.emplace_back(std::move(name), std::move(v));
    };
    col("length", [](const DialogueFeatures& f) { return static_cast<double>(f.length); });
    col("wizard_turns", [](const DialogueFeatures& f) { return f.wizard_turn_prop; });
    col("participant_turns", [](const DialogueFeatures& f) { return f.participant_turn_prop; });
    col("wizard_questions", [](const DialogueFeatures& f) { return f.question_prop; });
    col("args_from_argument_base", [](const DialogueFeatures& f) { return f.arg_use_prop; });
    col("edited_args", [](const DialogueFeatures& f) { return f.edited_prop; });
    col("pro_con_ratio", [](const DialogueFeatures& f) { return f.pro_con_ratio; });
    for (const auto& lex : lexicons)
      col(lex.name, [&](const DialogueFeatures& f) { return f.marker_freq.at(lex.name); });
  }
  std::vector<Correlation> out;
  if (which == CorrelationTarget::features) {
    for (const auto& [name, v] : columns) out.push_back(detail::correlate(name, v, scores));
  } else {
    for (auto m : kExperienceMetrics) {
      std::vector<double> v, s;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!ds[i]->experience) continue;
        if (auto r = ds[i]->experience->get(m)) {
          v.push_back(*r);
          s.push_back(scores[i]);
        }
      }
      // Dialogues without a rating for this metric drop out of it only.
      out.push_back(detail::correlate(std::string(m), v, s));
    }
  }
  return out;
}

inline Table correlation_table(const std::vector<Correlation>& rows) {
  Table t;
  t.header = {"name", "rho", "note"};
  for (const auto& c : rows) t.rows.push_back({c.name, c.rho ? fixed(*c.rho, 3) : "", c.note});
  return t;
}

// ---- dataset statistics ----

inline Table dataset_stats_table(std::span<const DialogueSession> corpus, std::span<const ArgumentBase> bases = {}) {
  std::map<std::string, std::vector<double>> turns;
  for (const auto& s : corpus) turns[s.topic].push_back(static_cast<double>(s.turns.size()));
  Table t;
  t.header = {"topic", "dialogues", "avg_turns", "sd_turns", "argument_base_size"};
  for (const auto& [topic, v] : turns) {
    std::string base_size = "-";
    for (const auto& b : bases)
      if (b.topic_id == topic) base_size = std::to_string(b.records.size());
    t.rows.push_back({topic, std::to_string(v.size()), fixed(stats::mean(v), 1),
                      v.size() > 1 ? fixed(std::sqrt(stats::sample_variance(v)), 1) : "-", base_size});
  }
  return t;
}

}  // namespace oumwoz
