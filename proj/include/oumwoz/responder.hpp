#pragma once

// Retrieval-gated responder: a logistic generation gate over handcrafted
// features of the participant's last utterance, template candidates, a
// per-token mixture of free and argument-conditioned unigram models, and a
// BLEU-based re-ranker. Also the chitchat responder for the control condition.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "oumwoz/argument_base.hpp"
#include "oumwoz/bleu.hpp"
#include "oumwoz/error.hpp"
#include "oumwoz/io.hpp"
#include "oumwoz/retrieval.hpp"
#include "oumwoz/session.hpp"
#include "oumwoz/text.hpp"

namespace oumwoz {

inline constexpr std::size_t kFeatureDim = 5;
inline constexpr int kGateSchemaVersion = 1;

inline constexpr std::array<std::string_view, kFeatureDim> kFeatureNames = {
    "utterance_word_count", "ends_with_question", "top_retrieval_base_score", "overlap_ratio",
    "turn_index_normalized"};

using FeatureVector = std::array<double, kFeatureDim>;

struct GateModel {
  FeatureVector weights{};
  double bias = 0.0;

  bool operator==(const GateModel&) const = default;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double dot(const FeatureVector& a, const FeatureVector& b) {
  double s = 0;
  for (std::size_t i = 0; i < kFeatureDim; ++i) s += a[i] * b[i];
  return s;
}

/// Generation probability: sigma(W . h + b).
inline double pgen(const GateModel& model, const FeatureVector& h) { return sigmoid(dot(model.weights, h) + model.bias); }

// ---- features ----

/// Last participant utterance and the one before it, as a suggestion query.
inline SuggestionQuery query_from_history(std::span<const Turn> history, std::size_t limit = kDefaultSuggestionLimit) {
  SuggestionQuery q;
  q.limit = limit;
  int found = 0;
  for (auto it = history.rbegin(); it != history.rend() && found < 2; ++it) {
    if (it->speaker != Speaker::participant) continue;
    if (found == 0) {
      q.last_utterance = it->text;
    } else {
      q.previous_utterance = it->text;
    }
    ++found;
  }
  return q;
}

/// Components, each clamped to [0, 1]:
///   word count of the last participant utterance / 50,
///   whether it ends with '?',
///   min-max normalized base score of the top result (1 when all results tie, 0 when none),
///   share of the utterance's distinct terms found in the top argument,
///   number of turns so far / 20.
inline FeatureVector featurize(std::span<const Turn> history, std::span<const ScoredArgument> results,
                               std::string_view top_argument_text, const TokenPipelineConfig& config = {}) {
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  FeatureVector h{};
  auto q = query_from_history(history);
  const auto utterance = trim_copy(q.last_utterance);
  h[0] = clamp01(static_cast<double>(word_count(utterance)) / 50.0);
  h[1] = !utterance.empty() && utterance.back() == '?' ? 1.0 : 0.0;
  if (!results.empty()) {
    double lo = results.front().base_score, hi = lo;
    for (const auto& r : results) {
      lo = std::min(lo, r.base_score);
      hi = std::max(hi, r.base_score);
    }
    h[2] = hi > lo ? clamp01((results.front().base_score - lo) / (hi - lo)) : 1.0;
    auto uterms = preprocess(utterance, config);
    std::set<std::string> unique(uterms.begin(), uterms.end());
    auto aterms = preprocess(top_argument_text, config);
    std::set<std::string> arg(aterms.begin(), aterms.end());
    if (!unique.empty()) {
      std::size_t hit = 0;
      for (const auto& t : unique) hit += arg.count(t);
      h[3] = clamp01(static_cast<double>(hit) / static_cast<double>(unique.size()));
    }
  }
  h[4] = clamp01(static_cast<double>(history.size()) / 20.0);
  return h;
}

// ---- gate training ----

struct GateExample {
  FeatureVector features{};
  int label = 0;  // 0: the wizard used an argument, 1: free-form response
};

/// Mean cross-entropy plus (l2 / 2) * ||W||^2; the bias is not penalized.
inline double gate_loss(const GateModel& m, std::span<const GateExample> data, double l2) {
  double loss = 0;
  for (const auto& ex : data) {
    const double z = dot(m.weights, ex.features) + m.bias;
    // log(1 + e^z) - y z, evaluated stably
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    loss += softplus - ex.label * z;
  }
  loss /= static_cast<double>(data.size());
  double sq = 0;
  for (double w : m.weights) sq += w * w;
  return loss + 0.5 * l2 * sq;
}

struct GateGradient {
  FeatureVector weights{};
  double bias = 0.0;
};

inline GateGradient gate_gradient(const GateModel& m, std::span<const GateExample> data, double l2) {
  GateGradient g;
  for (const auto& ex : data) {
    const double err = pgen(m, ex.features) - ex.label;
    for (std::size_t i = 0; i < kFeatureDim; ++i) g.weights[i] += err * ex.features[i];
    g.bias += err;
  }
  const double n = static_cast<double>(data.size());
  for (std::size_t i = 0; i < kFeatureDim; ++i) g.weights[i] = g.weights[i] / n + l2 * m.weights[i];
  g.bias /= n;
  return g;
}

inline double gate_accuracy(const GateModel& m, std::span<const GateExample> data) {
  if (data.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& ex : data) ok += ((pgen(m, ex.features) >= 0.5 ? 1 : 0) == ex.label) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

struct GateTrainingResult {
  GateModel model;
  double final_loss = 0.0;
  double accuracy = 0.0;
  bool degenerate = false;  // all labels identical; model is a constant predictor
  std::vector<double> loss_history;
};

/// Full-batch gradient descent from a zero initialization.
inline GateTrainingResult train_gate(std::span<const GateExample> data, double lr, int epochs, double l2) {
  if (data.empty()) throw Error(ErrorCode::InvalidArgument, "no training examples");
  if (lr <= 0 || epochs < 0 || l2 < 0) throw Error(ErrorCode::InvalidArgument, "lr > 0, epochs >= 0, l2 >= 0 required");
  for (const auto& ex : data)
    if (ex.label != 0 && ex.label != 1) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
  GateTrainingResult out;
  std::size_t positives = 0;
  for (const auto& ex : data) positives += static_cast<std::size_t>(ex.label);
  if (positives == 0 || positives == data.size()) {
    out.degenerate = true;
    const double n = static_cast<double>(data.size());
    out.model.bias = std::log((static_cast<double>(positives) + 0.5) / (n - static_cast<double>(positives) + 0.5));
    out.final_loss = gate_loss(out.model, data, l2);
    out.accuracy = gate_accuracy(out.model, data);
    return out;
  }
  out.loss_history.reserve(static_cast<std::size_t>(epochs) + 1);
  out.loss_history.push_back(gate_loss(out.model, data, l2));
  for (int e = 0; e < epochs; ++e) {
    auto g = gate_gradient(out.model, data, l2);
    for (std::size_t i = 0; i < kFeatureDim; ++i) out.model.weights[i] -= lr * g.weights[i];
    out.model.bias -= lr * g.bias;
    out.loss_history.push_back(gate_loss(out.model, data, l2));
  }
  out.final_loss = out.loss_history.back();
  out.accuracy = gate_accuracy(out.model, data);
  return out;
}

// ---- unigram models ----

/// Add-one smoothed unigram distribution over the vocabulary plus UNK.
class UnigramModel {
 public:
  UnigramModel() = default;

  static UnigramModel from_texts(std::span<const std::string> texts) {
    UnigramModel m;
    for (const auto& t : texts) m.add(t);
    return m;
  }

  void add(std::string_view text) {
    for (auto& tok : tokenize(text)) {
      ++counts_[tok];
      ++total_;
    }
  }

  void add_count(const std::string& token, long count) {
    counts_[token] += count;
    total_ += count;
  }

  double prob(const std::string& token) const {
    const double denom = static_cast<double>(total_ + static_cast<long>(counts_.size()) + 1);
    auto it = counts_.find(token);
    return (it == counts_.end() ? 1.0 : static_cast<double>(it->second + 1)) / denom;
  }

  double unk_prob() const { return 1.0 / static_cast<double>(total_ + static_cast<long>(counts_.size()) + 1); }

  const std::map<std::string, long>& counts() const { return counts_; }
  long total() const { return total_; }

 private:
  std::map<std::string, long> counts_;
  long total_ = 0;
};

// ---- candidates ----

enum class CandidateMode { argument_grounded, free };

struct Candidate {
  std::string text;
  CandidateMode mode = CandidateMode::free;
  std::optional<std::string> argument_id;
  std::string template_id;

  bool operator==(const Candidate&) const = default;
};

struct RetrievedArgument {
  ScoredArgument scored;
  std::string text;
};

inline std::string join_hedge(std::string_view hedge, std::string_view argument) {
  std::string h = trim_copy(hedge);
  for (std::string_view ell : {"...", "\xE2\x80\xA6"}) {
    if (h.size() >= ell.size() && h.compare(h.size() - ell.size(), ell.size(), ell) == 0) {
      h.resize(h.size() - ell.size());
      h = trim_copy(h);
    }
  }
  if (h.empty()) return std::string(argument);
  std::string arg(argument);
  // Mid-sentence join: "say that Eating" -> "say that eating". Acronyms and "I" stay.
  char last = h.back();
  bool mid_sentence = last != '.' && last != '!' && last != '?' && last != ':';
  if (mid_sentence && arg.size() > 1 && std::isupper(static_cast<unsigned char>(arg[0])) &&
      std::islower(static_cast<unsigned char>(arg[1])))
    arg[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(arg[0])));
  return h + " " + arg;
}

/// Longest non-stopword token of at least three characters; first wins ties.
inline std::optional<std::string> salient_term(std::string_view utterance) {
  std::optional<std::string> best;
  for (auto& tok : tokenize(utterance)) {
    if (tok.size() < 3 || default_stopwords().count(tok)) continue;
    if (!best || tok.size() > best->size()) best = tok;
  }
  return best;
}

/// Up to k hedged copies of the retrieved argument, then up to k free
/// templates. A "{term}" placeholder takes the salient term; such templates
/// are skipped when there is none.
inline std::vector<Candidate> generate_candidates(const std::optional<RetrievedArgument>& retrieved,
                                                  std::span<const std::string> hedges,
                                                  std::span<const std::string> question_templates, std::size_t k,
                                                  const std::optional<std::string>& term = std::nullopt) {
  std::vector<Candidate> out;
  if (k == 0) return out;
  if (retrieved) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < hedges.size() && n < k; ++i, ++n)
      out.push_back({join_hedge(hedges[i], retrieved->text), CandidateMode::argument_grounded,
                     retrieved->scored.argument_id, "hedge:" + std::to_string(i)});
  }
  std::size_t n = 0;
  for (std::size_t i = 0; i < question_templates.size() && n < k; ++i) {
    std::string text = question_templates[i];
    auto pos = text.find("{term}");
    if (pos != std::string::npos) {
      if (!term) continue;
      while (pos != std::string::npos) {
        text.replace(pos, 6, *term);
        pos = text.find("{term}", pos + term->size());
      }
    }
    out.push_back({text, CandidateMode::free, std::nullopt, "template:" + std::to_string(i)});
    ++n;
  }
  return out;
}

/// Sum over candidate tokens of ln(pgen * P_free(y) + (1 - pgen) * P_arg(y)).
inline double mixture_score(const Candidate& candidate, double pgen_value, const UnigramModel& free_model,
                            const UnigramModel& arg_model) {
  double s = 0;
  for (const auto& tok : tokenize(candidate.text))
    s += std::log(pgen_value * free_model.prob(tok) + (1.0 - pgen_value) * arg_model.prob(tok));
  return s;
}

struct RankedCandidate {
  Candidate candidate;
  double rerank_score = 0.0;
  double argument_bleu = 0.0;
  double repetition_bleu = 0.0;
};

/// (BLEU against the argument - max BLEU against earlier bot turns) / 2,
/// sorted descending; ties keep input order.
inline std::vector<RankedCandidate> rerank(std::span<const Candidate> candidates, std::string_view argument_text,
                                           std::span<const std::string> previous_bot_utterances) {
  auto ref = tokenize(argument_text);
  std::vector<std::vector<std::string>> prev;
  for (const auto& p : previous_bot_utterances) prev.push_back(tokenize(p));
  std::vector<RankedCandidate> out;
  for (const auto& c : candidates) {
    auto toks = tokenize(c.text);
    RankedCandidate r{c, 0.0, sentence_bleu(toks, ref), max_sentence_bleu(toks, prev)};
    r.rerank_score = (r.argument_bleu - r.repetition_bleu) / 2.0;
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) { return a.rerank_score > b.rerank_score; });
  return out;
}

// ---- default phrase lists ----

inline std::vector<std::string> default_hedges() {
  return {"I see what you mean, but...",
          "It could be argued that",
          "That's a fair point. On the other hand,",
          "Some people would say that",
          "I understand, although",
          "Interesting. Others might argue that"};
}

inline std::vector<std::string> default_question_templates() {
  return {"What do you think about {term}?",
          "Why do you feel that way about {term}?",
          "Could you tell me more about your view?",
          "What made you think about it this way?",
          "How would you respond to people who disagree with you?",
          "I see what you mean. What matters most to you here?"};
}

inline std::vector<std::string> default_chitchat() {
  return {"Hi! How was your weekend?",
          "That sounds nice. Did you do anything fun recently?",
          "Do you have any plans for your next holiday?",
          "What is your favourite place to travel to?",
          "Nice! What do you usually do to relax?",
          "Have you tried any good food lately?",
          "Do you prefer the beach or the mountains?",
          "That's lovely. Anything else you're looking forward to?"};
}

// ---- composition ----

struct ResponderResources {
  const RetrievalIndex* index = nullptr;  // may be null: free-only responses
  const ArgumentBase* base = nullptr;
  GateModel gate;
  UnigramModel free_model;
  std::vector<std::string> hedges = default_hedges();
  std::vector<std::string> question_templates = default_question_templates();
  std::set<std::string> gold_ids;
  std::set<std::string> important_terms;
  std::size_t candidates_per_mode = 4;
  Bm25Params bm25;
};

struct AgentReply {
  std::string text;
  Provenance provenance;
  FeatureVector features{};
  std::vector<RankedCandidate> ranked;
};

namespace detail {

// Fisher-Yates driven by mt19937_64 directly; std::shuffle's output is
// implementation-defined.
template <class T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t turn) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (turn + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// boosted retrieval -> top argument -> features -> pgen -> candidates ->
/// mixture score -> rerank. Candidates enter the re-ranker in descending
/// mixture score, so the mixture decides rerank ties.
inline AgentReply respond(std::span<const Turn> history, const ResponderResources& res, std::uint64_t seed) {
  std::vector<ScoredArgument> results;
  std::optional<RetrievedArgument> top;
  auto query = query_from_history(history);
  if (res.index && !trim_copy(query.last_utterance).empty()) {
    results = boosted_retrieve(*res.index, query, res.gold_ids, res.important_terms, res.bm25);
    if (!results.empty()) {
      const ArgumentRecord* rec = res.base ? res.base->find(results.front().argument_id) : nullptr;
      if (!rec) throw Error(ErrorCode::InvalidArgument, "retrieved id '" + results.front().argument_id + "' not in base");
      top = RetrievedArgument{results.front(), rec->text};
    }
  }
  AgentReply reply;
  reply.features = featurize(history, results, top ? std::string_view(top->text) : std::string_view{},
                             res.index ? res.index->config() : TokenPipelineConfig{});
  const double p = pgen(res.gate, reply.features);

  auto hedges = res.hedges;
  auto templates = res.question_templates;
  const auto turn_seed = detail::mix_seed(seed, history.size());
  detail::seeded_shuffle(hedges, turn_seed);
  detail::seeded_shuffle(templates, turn_seed ^ 0x5bd1e995ULL);
  auto candidates = generate_candidates(top, hedges, templates, res.candidates_per_mode, salient_term(query.last_utterance));
  if (candidates.empty()) throw Error(ErrorCode::NoCandidates, "no retrieved argument and no templates");

  UnigramModel arg_model;
  if (top) arg_model.add(top->text);
  std::vector<std::pair<double, Candidate>> scored;
  for (auto& c : candidates) scored.emplace_back(mixture_score(c, p, res.free_model, arg_model), std::move(c));
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Candidate> ordered;
  std::map<std::string, double> mixture_by_template;
  for (auto& [s, c] : scored) {
    mixture_by_template[c.template_id] = s;
    ordered.push_back(std::move(c));
  }

  std::vector<std::string> previous;
  for (const auto& t : history)
    if (t.speaker == Speaker::agent) previous.push_back(t.text);
  reply.ranked = rerank(ordered, top ? std::string_view(top->text) : std::string_view{}, previous);

  std::size_t pick = 0;
  if (!previous.empty())
    while (pick + 1 < reply.ranked.size() && reply.ranked[pick].candidate.text == previous.back()) ++pick;
  const auto& chosen = reply.ranked[pick];
  reply.text = chosen.candidate.text;
  auto& prov = reply.provenance;
  prov.pgen = p;
  prov.mixture_score = mixture_by_template[chosen.candidate.template_id];
  prov.rerank_score = chosen.rerank_score;
  if (chosen.candidate.mode == CandidateMode::argument_grounded) {
    prov.mode = "argument_grounded";
    prov.argument_id = chosen.candidate.argument_id;
    prov.selection_rank = 1;
    prov.edited = reply.text != top->text;
    prov.stance = top->scored.stance;
  } else {
    prov.mode = "free";
  }
  return reply;
}

/// Cycles through the chitchat prompts by agent-turn count; never retrieves.
inline AgentReply control_respond(std::span<const Turn> history, std::span<const std::string> chitchat) {
  if (chitchat.empty()) throw Error(ErrorCode::NoCandidates, "empty chitchat template list");
  std::size_t agent_turns = 0;
  for (const auto& t : history) agent_turns += t.speaker == Speaker::agent ? 1 : 0;
  AgentReply reply;
  reply.text = chitchat[agent_turns % chitchat.size()];
  reply.provenance.mode = "control";
  return reply;
}

// ---- persistence ----

struct GateFile {
  GateModel model;
  UnigramModel free_model;
  nlohmann::json training_meta = nlohmann::json::object();
};

inline std::string gate_to_json(const GateFile& g) {
  nlohmann::ordered_json j;
  j["schema_version"] = kGateSchemaVersion;
  j["feature_names"] = std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end());
  j["weights"] = std::vector<double>(g.model.weights.begin(), g.model.weights.end());
  j["bias"] = g.model.bias;
  j["training_meta"] = g.training_meta;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (const auto& [t, c] : g.free_model.counts()) counts[t] = c;
  j["free_unigram_counts"] = std::move(counts);
  return j.dump(2) + "\n";
}

inline GateFile gate_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::IoError, std::string("gate model is truncated or not JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("schema_version", -1) != kGateSchemaVersion)
    throw Error(ErrorCode::SchemaVersionMismatch, "gate model schema_version " +
                                                      (j.is_object() && j.contains("schema_version")
                                                           ? j["schema_version"].dump()
                                                           : std::string("none")) +
                                                      ", expected " + std::to_string(kGateSchemaVersion));
  GateFile g;
  try {
    auto names = j.at("feature_names").get<std::vector<std::string>>();
    auto weights = j.at("weights").get<std::vector<double>>();
    if (names.size() != kFeatureDim || weights.size() != kFeatureDim)
      throw Error(ErrorCode::MalformedInput, "gate model must have " + std::to_string(kFeatureDim) + " features");
    for (std::size_t i = 0; i < kFeatureDim; ++i) {
      if (names[i] != kFeatureNames[i]) throw Error(ErrorCode::MalformedInput, "unexpected feature '" + names[i] + "'");
      if (!std::isfinite(weights[i])) throw Error(ErrorCode::MalformedInput, "non-finite gate weight");
      g.model.weights[i] = weights[i];
    }
    g.model.bias = j.at("bias").get<double>();
    if (!std::isfinite(g.model.bias)) throw Error(ErrorCode::MalformedInput, "non-finite gate bias");
    if (j.contains("training_meta")) g.training_meta = j["training_meta"];
    if (j.contains("free_unigram_counts"))
      for (const auto& [t, c] : j["free_unigram_counts"].items()) g.free_model.add_count(t, c.get<long>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("gate model: ") + e.what());
  }
  return g;
}

// ---- training data from logs ----

/// One example per agent turn of each wizard log: features of the dialogue
/// state before that turn, label 0 if the wizard used an argument, else 1.
/// Without an index the retrieval features are zero.
inline std::vector<GateExample> extract_gate_examples(std::span<const DialogueSession> logs,
                                                      const RetrievalIndex* index, const ArgumentBase* base) {
  std::vector<GateExample> out;
  for (const auto& s : logs) {
    if (s.mode != Mode::wizard) continue;
    for (std::size_t i = 0; i < s.turns.size(); ++i) {
      const auto& t = s.turns[i];
      if (t.speaker != Speaker::agent) continue;
      std::span<const Turn> history(s.turns.data(), i);
      std::vector<ScoredArgument> results;
      std::string top_text;
      auto q = query_from_history(history);
      if (index && !trim_copy(q.last_utterance).empty()) {
        results = boosted_retrieve(*index, q, {}, {});
        if (!results.empty() && base)
          if (const auto* rec = base->find(results.front().argument_id)) top_text = rec->text;
      }
      GateExample ex;
      ex.features = featurize(history, results, top_text, index ? index->config() : TokenPipelineConfig{});
      ex.label = (t.provenance && t.provenance->argument_id) ? 0 : 1;
      out.push_back(ex);
    }
  }
  return out;
}

/// Free-form wizard turns (no argument used) feed the free unigram model.
inline UnigramModel free_model_from_logs(std::span<const DialogueSession> logs) {
  UnigramModel m;
  for (const auto& s : logs) {
    if (s.mode != Mode::wizard) continue;
    for (const auto& t : s.turns)
      if (t.speaker == Speaker::agent && !(t.provenance && t.provenance->argument_id)) m.add(t.text);
  }
  return m;
}

}  // namespace oumwoz
