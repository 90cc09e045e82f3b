#pragma once

// Term index over an argument base and the three retrieval paths: TF-IDF
// cosine suggestions for wizards, boosted BM25 for the bot, and conjunctive
// keyword search.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "oumwoz/argument_base.hpp"
#include "oumwoz/error.hpp"
#include "oumwoz/io.hpp"
#include "oumwoz/session.hpp"
#include "oumwoz/text.hpp"

namespace oumwoz {

inline constexpr int kIndexSchemaVersion = 1;
inline constexpr std::size_t kDefaultSuggestionLimit = 50;
inline constexpr std::size_t kShortUtteranceWords = 5;

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// final_score = base_score + boost_gold + boost_term + boost_overlap.
struct ScoredArgument {
  std::string argument_id;
  Stance stance = Stance::pro;
  double base_score = 0.0;
  int boost_gold = 0;
  int boost_term = 0;
  int boost_overlap = 0;
  double final_score = 0.0;
};

struct SuggestionQuery {
  std::string last_utterance;
  std::optional<std::string> previous_utterance;
  std::optional<Stance> stance_filter;
  std::vector<std::string> keyword_terms;
  std::size_t limit = kDefaultSuggestionLimit;
};

class RetrievalIndex {
 public:
  using TermCounts = std::map<std::string, int>;

  static RetrievalIndex build(const ArgumentBase& base, TokenPipelineConfig config = {}) {
    if (base.records.empty()) throw Error(ErrorCode::EmptyBase, "argument base '" + base.topic_id + "' has no records");
    RetrievalIndex idx;
    idx.config_ = std::move(config);
    for (const auto& r : base.records) {
      TermCounts counts;
      for (auto& t : preprocess(r.text, idx.config_)) ++counts[t];
      idx.add_document(r.id, r.topic_stance, std::move(counts));
    }
    idx.finalize();
    return idx;
  }

  std::size_t doc_count() const { return ids_.size(); }
  double avg_doc_length() const { return avg_doc_length_; }
  const TokenPipelineConfig& config() const { return config_; }
  std::string pipeline_fingerprint() const { return config_.fingerprint(); }

  int document_frequency(const std::string& term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
  }

  int term_frequency(std::size_t doc, const std::string& term) const {
    auto it = tf_[doc].find(term);
    return it == tf_[doc].end() ? 0 : it->second;
  }

  const TermCounts& terms(std::size_t doc) const { return tf_[doc]; }
  std::size_t vocabulary_size() const { return df_.size(); }
  int doc_length(std::size_t doc) const { return lengths_[doc]; }
  const std::string& doc_id(std::size_t doc) const { return ids_[doc]; }
  Stance stance(std::size_t doc) const { return stances_[doc]; }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<std::size_t>& postings(const std::string& term) const {
    static const std::vector<std::size_t> empty;
    auto it = postings_.find(term);
    return it == postings_.end() ? empty : it->second;
  }

  /// ln((N+1)/(df+1)); zero for terms present in every document.
  double smoothed_idf(const std::string& term) const {
    return std::log((static_cast<double>(doc_count()) + 1.0) / (document_frequency(term) + 1.0));
  }

  double bm25_idf(const std::string& term) const {
    const double n = static_cast<double>(doc_count());
    const double df = document_frequency(term);
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
  }

  double tfidf_norm(std::size_t doc) const { return norms_[doc]; }

  /// Throws unless the index documents line up one-to-one with the base.
  void check_alignment(const ArgumentBase& base) const {
    if (base.records.size() != ids_.size())
      throw Error(ErrorCode::InvalidArgument, "index has " + std::to_string(ids_.size()) + " documents, base has " +
                                                  std::to_string(base.records.size()) + " records");
    for (std::size_t i = 0; i < ids_.size(); ++i)
      if (base.records[i].id != ids_[i])
        throw Error(ErrorCode::InvalidArgument, "index document " + std::to_string(i) + " is '" + ids_[i] +
                                                    "' but base record is '" + base.records[i].id + "'");
  }

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["schema_version"] = kIndexSchemaVersion;
    j["pipeline_fingerprint"] = pipeline_fingerprint();
    j["pipeline"] = {{"lowercase", config_.lowercase},
                     {"stem", config_.stem},
                     {"stopwords", std::vector<std::string>(config_.stopwords.begin(), config_.stopwords.end())}};
    j["doc_count"] = doc_count();
    j["avg_doc_length"] = avg_doc_length_;
    nlohmann::ordered_json df = nlohmann::ordered_json::object();
    for (const auto& [t, n] : df_) df[t] = n;
    j["document_frequency"] = std::move(df);
    auto& docs = j["documents"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      nlohmann::ordered_json tf = nlohmann::ordered_json::object();
      for (const auto& [t, n] : tf_[i]) tf[t] = n;
      docs.push_back({{"id", ids_[i]},
                      {"stance", to_string(stances_[i])},
                      {"length", lengths_[i]},
                      {"term_frequency", std::move(tf)}});
    }
    return j.dump() + "\n";
  }

  static RetrievalIndex from_json(std::string_view text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::IoError, std::string("index file is truncated or not JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("schema_version") || j["schema_version"] != kIndexSchemaVersion)
      throw Error(ErrorCode::SchemaVersionMismatch,
                  "index schema_version " + (j.is_object() && j.contains("schema_version") ? j["schema_version"].dump()
                                                                                          : std::string("none")) +
                      ", expected " + std::to_string(kIndexSchemaVersion));
    RetrievalIndex idx;
    try {
      const auto& p = j.at("pipeline");
      idx.config_.lowercase = p.at("lowercase").get<bool>();
      idx.config_.stem = p.at("stem").get<bool>();
      auto sw = p.at("stopwords").get<std::vector<std::string>>();
      idx.config_.stopwords = {sw.begin(), sw.end()};
      if (idx.pipeline_fingerprint() != j.at("pipeline_fingerprint").get<std::string>())
        throw Error(ErrorCode::MalformedInput, "index pipeline_fingerprint does not match its pipeline");
      for (const auto& d : j.at("documents")) {
        auto stance = parse_stance(d.at("stance").get<std::string>());
        if (!stance) throw Error(ErrorCode::MalformedInput, "bad stance in index document");
        idx.add_document(d.at("id").get<std::string>(), *stance, d.at("term_frequency").get<TermCounts>());
      }
      idx.finalize();
      if (idx.df_ != j.at("document_frequency").get<std::map<std::string, int>>() ||
          idx.doc_count() != j.at("doc_count").get<std::size_t>())
        throw Error(ErrorCode::MalformedInput, "index statistics are inconsistent with its documents");
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedInput, std::string("index: ") + e.what());
    }
    return idx;
  }

  void save(const std::filesystem::path& path) const { write_file_atomic(path, to_json()); }
  static RetrievalIndex load(const std::filesystem::path& path) { return from_json(read_file(path)); }

 private:
  void add_document(std::string id, Stance stance, TermCounts counts) {
    if (by_id_.count(id)) throw Error(ErrorCode::DuplicateId, "document id '" + id + "'");
    int len = 0;
    for (const auto& [t, n] : counts) {
      if (n <= 0) throw Error(ErrorCode::MalformedInput, "non-positive term frequency for '" + t + "'");
      len += n;
    }
    by_id_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    stances_.push_back(stance);
    lengths_.push_back(len);
    tf_.push_back(std::move(counts));
  }

  void finalize() {
    if (ids_.empty()) throw Error(ErrorCode::EmptyBase, "index has no documents");
    df_.clear();
    postings_.clear();
    double total = 0;
    for (std::size_t d = 0; d < ids_.size(); ++d) {
      total += lengths_[d];
      for (const auto& [t, n] : tf_[d]) {
        ++df_[t];
        postings_[t].push_back(d);
      }
    }
    avg_doc_length_ = total / static_cast<double>(ids_.size());
    norms_.assign(ids_.size(), 0.0);
    for (std::size_t d = 0; d < ids_.size(); ++d) {
      double sq = 0;
      for (const auto& [t, n] : tf_[d]) {
        double w = (1.0 + std::log(static_cast<double>(n))) * smoothed_idf(t);
        sq += w * w;
      }
      norms_[d] = std::sqrt(sq);
    }
  }

  TokenPipelineConfig config_;
  std::vector<std::string> ids_;
  std::vector<Stance> stances_;
  std::vector<int> lengths_;
  std::vector<TermCounts> tf_;
  std::map<std::string, int> df_;
  std::unordered_map<std::string, std::vector<std::size_t>> postings_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::vector<double> norms_;
  double avg_doc_length_ = 0.0;
};

namespace detail {

inline void rank_and_truncate(std::vector<ScoredArgument>& results, std::size_t limit) {
  std::sort(results.begin(), results.end(), [](const ScoredArgument& a, const ScoredArgument& b) {
    if (a.final_score != b.final_score) return a.final_score > b.final_score;
    return a.argument_id < b.argument_id;
  });
  if (results.size() > limit) results.resize(limit);
}

}  // namespace detail

/// The last utterance, preceded by the previous one when it is shorter than
/// five words.
inline std::string effective_query_text(const SuggestionQuery& q) {
  if (q.previous_utterance && word_count(q.last_utterance) < kShortUtteranceWords)
    return *q.previous_utterance + " " + q.last_utterance;
  return q.last_utterance;
}

/// Cosine similarity between (1 + ln tf) * ln((N+1)/(df+1)) vectors. Query
/// terms outside the index vocabulary are dropped. Zero scores are omitted.
inline std::vector<ScoredArgument> tfidf_suggest(const RetrievalIndex& index, const SuggestionQuery& query) {
  if (query.limit < 1) throw Error(ErrorCode::InvalidArgument, "suggestion limit must be >= 1");
  std::map<std::string, int> qtf;
  for (auto& t : preprocess(effective_query_text(query), index.config()))
    if (index.document_frequency(t) > 0) ++qtf[t];
  double qnorm_sq = 0;
  std::unordered_map<std::size_t, double> dots;
  for (const auto& [term, n] : qtf) {
    const double idf = index.smoothed_idf(term);
    const double qw = (1.0 + std::log(static_cast<double>(n))) * idf;
    qnorm_sq += qw * qw;
    if (qw == 0.0) continue;
    for (std::size_t d : index.postings(term)) {
      const double dw = (1.0 + std::log(static_cast<double>(index.term_frequency(d, term)))) * idf;
      dots[d] += qw * dw;
    }
  }
  std::vector<ScoredArgument> out;
  if (qnorm_sq == 0.0) return out;
  const double qnorm = std::sqrt(qnorm_sq);
  for (const auto& [d, dot] : dots) {
    if (query.stance_filter && index.stance(d) != *query.stance_filter) continue;
    const double denom = qnorm * index.tfidf_norm(d);
    if (denom == 0.0) continue;
    const double score = dot / denom;
    if (score <= 0.0) continue;
    ScoredArgument s;
    s.argument_id = index.doc_id(d);
    s.stance = index.stance(d);
    s.base_score = s.final_score = score;
    out.push_back(std::move(s));
  }
  detail::rank_and_truncate(out, query.limit);
  return out;
}

/// Okapi BM25 over the distinct query terms.
inline double bm25_score(const RetrievalIndex& index, std::span<const std::string> query_terms, std::size_t doc,
                         const Bm25Params& params = {}) {
  std::set<std::string> unique(query_terms.begin(), query_terms.end());
  const double norm = 1.0 - params.b + params.b * index.doc_length(doc) / index.avg_doc_length();
  double score = 0.0;
  for (const auto& t : unique) {
    const int tf = index.term_frequency(doc, t);
    if (tf == 0) continue;
    score += index.bm25_idf(t) * (tf * (params.k1 + 1.0)) / (tf + params.k1 * norm);
  }
  return score;
}

inline double bm25_score(const RetrievalIndex& index, std::span<const std::string> query_terms,
                         std::string_view doc_id, const Bm25Params& params = {}) {
  auto d = index.find(doc_id);
  if (!d) throw Error(ErrorCode::InvalidArgument, "unknown document '" + std::string(doc_id) + "'");
  return bm25_score(index, query_terms, *d, params);
}

/// BM25 over the effective query plus three +1 boosts: argument used by
/// wizards in training logs, contains an important term (already
/// preprocessed), shares a term with the last utterance alone. Only
/// documents BM25 actually retrieves (base > 0) are returned.
inline std::vector<ScoredArgument> boosted_retrieve(const RetrievalIndex& index, const SuggestionQuery& query,
                                                    const std::set<std::string>& gold_ids,
                                                    const std::set<std::string>& important_terms,
                                                    const Bm25Params& params = {}) {
  if (query.limit < 1) throw Error(ErrorCode::InvalidArgument, "suggestion limit must be >= 1");
  auto qterms = preprocess(effective_query_text(query), index.config());
  auto last_terms_vec = preprocess(query.last_utterance, index.config());
  std::set<std::string> last_terms(last_terms_vec.begin(), last_terms_vec.end());
  std::set<std::size_t> candidates;
  for (const auto& t : qterms)
    for (std::size_t d : index.postings(t)) candidates.insert(d);
  std::vector<ScoredArgument> out;
  for (std::size_t d : candidates) {
    if (query.stance_filter && index.stance(d) != *query.stance_filter) continue;
    const double base = bm25_score(index, qterms, d, params);
    if (base <= 0.0) continue;
    ScoredArgument s;
    s.argument_id = index.doc_id(d);
    s.stance = index.stance(d);
    s.base_score = base;
    s.boost_gold = gold_ids.count(s.argument_id) ? 1 : 0;
    const auto& dterms = index.terms(d);
    s.boost_term = std::any_of(important_terms.begin(), important_terms.end(),
                               [&](const std::string& t) { return dterms.count(t) > 0; })
                       ? 1
                       : 0;
    s.boost_overlap = std::any_of(last_terms.begin(), last_terms.end(),
                                  [&](const std::string& t) { return dterms.count(t) > 0; })
                          ? 1
                          : 0;
    s.final_score = s.base_score + s.boost_gold + s.boost_term + s.boost_overlap;
    out.push_back(std::move(s));
  }
  detail::rank_and_truncate(out, query.limit);
  return out;
}

/// Documents containing every preprocessed search term, ranked by BM25.
inline std::vector<ScoredArgument> keyword_search(const RetrievalIndex& index, std::string_view terms,
                                                  std::optional<Stance> stance_filter = std::nullopt,
                                                  std::size_t limit = kDefaultSuggestionLimit,
                                                  const Bm25Params& params = {}) {
  auto qterms = preprocess(terms, index.config());
  std::vector<ScoredArgument> out;
  if (qterms.empty()) return out;
  std::set<std::string> unique(qterms.begin(), qterms.end());
  std::vector<std::size_t> hits;
  bool first = true;
  for (const auto& t : unique) {
    const auto& post = index.postings(t);  // ascending doc order
    if (first) {
      hits = post;
      first = false;
    } else {
      std::vector<std::size_t> next;
      std::set_intersection(hits.begin(), hits.end(), post.begin(), post.end(), std::back_inserter(next));
      hits = std::move(next);
    }
    if (hits.empty()) return out;
  }
  for (std::size_t d : hits) {
    if (stance_filter && index.stance(d) != *stance_filter) continue;
    ScoredArgument s;
    s.argument_id = index.doc_id(d);
    s.stance = index.stance(d);
    s.base_score = s.final_score = bm25_score(index, qterms, d, params);
    out.push_back(std::move(s));
  }
  detail::rank_and_truncate(out, limit);
  return out;
}

/// Union of preprocessed wizard search-bar entries across the logs.
inline std::set<std::string> compile_important_terms(std::span<const DialogueSession> logs,
                                                     const TokenPipelineConfig& config = {}) {
  std::set<std::string> out;
  for (const auto& s : logs)
    for (const auto& a : s.actions)
      if (a.kind == ActionKind::search)
        for (auto& t : preprocess(a.terms, config)) out.insert(std::move(t));
  return out;
}

/// Argument ids wizards used in agent turns of the training logs.
inline std::set<std::string> compile_gold_ids(std::span<const DialogueSession> logs) {
  std::set<std::string> out;
  for (const auto& s : logs)
    for (const auto& t : s.turns)
      if (t.provenance && t.provenance->argument_id) out.insert(*t.provenance->argument_id);
  return out;
}

}  // namespace oumwoz
