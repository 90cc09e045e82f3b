#pragma once

// Shared test helpers: random generators, temp dirs, process helpers and
// straight-from-the-definition oracles. No gtest dependency so the
// acceptance binary can use it too.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "oumwoz/argument_base.hpp"
#include "oumwoz/retrieval.hpp"

namespace oumwoz::testing {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& name) { return fs::path(OUMWOZ_FIXTURES) / name; }

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("oumwoz-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

struct CommandResult {
  int exit_code = -1;
  std::string out;
};

/// Runs a shell command, capturing stdout.
inline CommandResult run_command(const std::string& cmd) {
  CommandResult r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  int status = ::pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::string cli() { return OUMWOZ_CLI; }

// ---- argument trees ----

/// Random tree of up to max_nodes nodes (root included); each new node hangs
/// off a uniformly chosen existing node with a random local stance.
inline ArgumentTreeNode random_tree(std::mt19937_64& rng, int max_nodes) {
  int n = std::uniform_int_distribution<int>(1, max_nodes)(rng);
  struct Flat {
    int parent;
    Stance stance;
  };
  std::vector<Flat> flat = {{-1, Stance::pro}};
  for (int i = 1; i < n; ++i)
    flat.push_back({std::uniform_int_distribution<int>(0, i - 1)(rng),
                    std::bernoulli_distribution(0.5)(rng) ? Stance::pro : Stance::con});
  std::vector<ArgumentTreeNode> nodes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    nodes[i].id = i == 0 ? std::string("0") : "n" + std::to_string(i);
    nodes[i].text = "argument " + std::to_string(i);
    if (i > 0) nodes[i].local_stance = flat[i].stance;
  }
  // Children have larger indices than parents, so attach bottom-up.
  for (int i = n - 1; i > 0; --i) nodes[flat[i].parent].children.insert(nodes[flat[i].parent].children.begin(), std::move(nodes[i]));
  return nodes[0];
}

/// Independent stance oracle: flatten to a parent table, then count con
/// edges on each node's walk back to the root.
inline std::map<std::string, Stance> parity_oracle(const ArgumentTreeNode& root) {
  std::map<std::string, std::pair<std::string, Stance>> parent;  // id -> (parent id, local stance)
  std::vector<const ArgumentTreeNode*> todo = {&root};
  while (!todo.empty()) {
    const auto* n = todo.back();
    todo.pop_back();
    for (const auto& c : n->children) {
      parent[c.id] = {n->id, *c.local_stance};
      todo.push_back(&c);
    }
  }
  std::map<std::string, Stance> out;
  for (const auto& [id, _] : parent) {
    int cons = 0;
    std::string cur = id;
    while (cur != root.id) {
      const auto& [p, s] = parent.at(cur);
      cons += s == Stance::con ? 1 : 0;
      cur = p;
    }
    out[id] = cons % 2 == 0 ? Stance::pro : Stance::con;
  }
  return out;
}

inline std::size_t count_nodes(const ArgumentTreeNode& n) {
  std::size_t c = 1;
  for (const auto& ch : n.children) c += count_nodes(ch);
  return c;
}

// ---- retrieval oracles ----

/// Raw-token pipeline so oracles can split on spaces.
inline TokenPipelineConfig plain_pipeline() {
  TokenPipelineConfig c;
  c.stem = false;
  c.stopwords.clear();
  return c;
}

struct RandomCorpus {
  ArgumentBase base;
  std::vector<std::vector<std::string>> docs;  // tokens per record
  std::vector<std::string> vocab;
};

inline RandomCorpus random_corpus(std::mt19937_64& rng, int max_docs, int max_terms) {
  RandomCorpus c;
  int n_terms = std::uniform_int_distribution<int>(2, max_terms)(rng);
  for (int i = 0; i < n_terms; ++i) {
    std::string t = "t";
    for (int k = i; ; k /= 26) {
      t += static_cast<char>('a' + k % 26);
      if (k < 26) break;
    }
    c.vocab.push_back(t);
  }
  int n_docs = std::uniform_int_distribution<int>(1, max_docs)(rng);
  c.base.topic_id = "rand";
  c.base.topic_text = "random topic";
  for (int d = 0; d < n_docs; ++d) {
    int len = std::uniform_int_distribution<int>(1, 12)(rng);
    std::vector<std::string> toks;
    std::string text;
    for (int i = 0; i < len; ++i) {
      // Skewed draw so some terms repeat within a document.
      auto& t = c.vocab[std::min<std::size_t>(c.vocab.size() - 1,
                                              static_cast<std::size_t>(std::geometric_distribution<int>(0.25)(rng)))];
      toks.push_back(t);
      text += (i ? " " : "") + t;
    }
    ArgumentRecord r;
    r.id = "d" + std::to_string(d);
    r.topic_id = "rand";
    r.text = text;
    r.topic_stance = std::bernoulli_distribution(0.5)(rng) ? Stance::pro : Stance::con;
    r.depth = 1;
    r.path = {"rand"};
    c.base.records.push_back(r);
    c.docs.push_back(toks);
  }
  return c;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Cosine of (1 + ln tf) * ln((N+1)/(df+1)) vectors, computed densely over
/// the whole vocabulary.
inline std::map<std::string, double> naive_tfidf(const RandomCorpus& c, const std::vector<std::string>& query) {
  const double n = static_cast<double>(c.docs.size());
  std::map<std::string, double> df;
  for (const auto& d : c.docs) {
    std::set<std::string> u(d.begin(), d.end());
    for (const auto& t : u) df[t] += 1;
  }
  auto weights = [&](const std::vector<std::string>& toks) {
    std::map<std::string, double> tf;
    for (const auto& t : toks)
      if (df.count(t)) tf[t] += 1;
    std::map<std::string, double> w;
    for (const auto& [t, f] : tf) w[t] = (1 + std::log(f)) * std::log((n + 1) / (df[t] + 1));
    return w;
  };
  auto q = weights(query);
  double qn = 0;
  for (const auto& [t, w] : q) qn += w * w;
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < c.docs.size(); ++i) {
    auto d = weights(c.docs[i]);
    double dot = 0, dn = 0;
    for (const auto& [t, w] : d) {
      dn += w * w;
      if (q.count(t)) dot += w * q[t];
    }
    if (qn > 0 && dn > 0) out[c.base.records[i].id] = dot / (std::sqrt(qn) * std::sqrt(dn));
  }
  return out;
}

/// Okapi BM25 with idf = ln(1 + (N - df + 0.5)/(df + 0.5)) over distinct
/// query terms.
inline std::map<std::string, double> naive_bm25(const RandomCorpus& c, const std::vector<std::string>& query,
                                                double k1 = 1.2, double b = 0.75) {
  const double n = static_cast<double>(c.docs.size());
  double avg = 0;
  for (const auto& d : c.docs) avg += static_cast<double>(d.size());
  avg /= n;
  std::set<std::string> q(query.begin(), query.end());
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < c.docs.size(); ++i) {
    double s = 0;
    for (const auto& t : q) {
      double tf = static_cast<double>(std::count(c.docs[i].begin(), c.docs[i].end(), t));
      if (tf == 0) continue;
      double df = 0;
      for (const auto& d : c.docs) df += std::find(d.begin(), d.end(), t) != d.end() ? 1 : 0;
      double idf = std::log(1 + (n - df + 0.5) / (df + 0.5));
      s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * static_cast<double>(c.docs[i].size()) / avg));
    }
    out[c.base.records[i].id] = s;
  }
  return out;
}

// ---- BLEU oracle ----

/// Sentence BLEU with add-one smoothing on every n-gram precision and the
/// usual brevity penalty, by brute-force n-gram enumeration.
inline double naive_bleu(const std::vector<std::string>& cand, const std::vector<std::string>& ref, int max_n = 4) {
  if (cand.empty()) return 0.0;
  double log_sum = 0;
  for (int n = 1; n <= max_n; ++n) {
    std::vector<std::vector<std::string>> cg, rg;
    for (std::size_t i = 0; i + n <= cand.size(); ++i) cg.emplace_back(cand.begin() + i, cand.begin() + i + n);
    for (std::size_t i = 0; i + n <= ref.size(); ++i) rg.emplace_back(ref.begin() + i, ref.begin() + i + n);
    double matched = 0;
    std::vector<bool> used(rg.size(), false);
    for (const auto& g : cg) {
      for (std::size_t j = 0; j < rg.size(); ++j) {
        if (!used[j] && rg[j] == g) {
          used[j] = true;
          matched += 1;
          break;
        }
      }
    }
    log_sum += std::log((matched + 1) / (static_cast<double>(cg.size()) + 1));
  }
  double bp = cand.size() >= ref.size() ? 1.0 : std::exp(1.0 - static_cast<double>(ref.size()) / cand.size());
  return bp * std::exp(log_sum / max_n);
}

// ---- statistics oracles ----

inline std::vector<double> oracle_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i] ? 1 : 0;
      equal += w == v[i] ? 1 : 0;
    }
    r[i] = less + (equal + 1) / 2.0;  // mean of positions less+1 .. less+equal
  }
  return r;
}

inline double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto rx = oracle_ranks(x), ry = oracle_ranks(y);
  double n = static_cast<double>(x.size()), mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double oracle_welch_t(const std::vector<double>& a, const std::vector<double>& b) {
  auto m = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto var = [&](const std::vector<double>& v) {
    double mu = m(v), s = 0;
    for (double x : v) s += (x - mu) * (x - mu);
    return s / static_cast<double>(v.size() - 1);
  };
  return (m(a) - m(b)) / std::sqrt(var(a) / static_cast<double>(a.size()) + var(b) / static_cast<double>(b.size()));
}

}  // namespace oumwoz::testing
