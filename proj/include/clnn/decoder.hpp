#pragma once

// Logits -> segmentation: per-position top-K word candidates ("imagination"),
// rectification by probability and textual word match, cluster count from the
// number of distinct chosen labels, clustering of the chosen labels'
// embeddings, and emission of groups and contiguous words.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clnn/cluster.hpp"
#include "clnn/corpus.hpp"
#include "clnn/model.hpp"
#include "clnn/utf8.hpp"

namespace clnn {

struct Candidate {
  TokenId id = 0;
  double prob = 0.0;
};

/// Per position, K candidates in descending probability (ties: lower id first).
using Imagination = std::vector<std::vector<Candidate>>;

/// Softmax over `candidate_ids` only (all columns when empty), top K per row.
template <class T>
Imagination top_k_labels(const Mat<T>& logits, std::size_t k, const std::vector<TokenId>& candidate_ids = {}) {
  std::vector<TokenId> ids = candidate_ids;
  if (ids.empty()) {
    ids.resize(static_cast<std::size_t>(logits.cols()));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(i);
  }
  if (k == 0) throw ConfigError("K must be at least 1");
  if (k > ids.size())
    throw ConfigError("K = " + std::to_string(k) + " exceeds the " + std::to_string(ids.size()) + " candidate labels");
  Imagination im(static_cast<std::size_t>(logits.rows()));
  std::vector<std::size_t> order(ids.size());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (auto id : ids) {
      if (id >= static_cast<TokenId>(logits.cols())) throw ShapeError("candidate id outside the logit row");
      mx = std::max(mx, static_cast<double>(logits(r, id)));
    }
    double z = 0.0;
    for (auto id : ids) z += std::exp(static_cast<double>(logits(r, id)) - mx);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const auto la = logits(r, ids[a]), lb = logits(r, ids[b]);
                        return la != lb ? la > lb : ids[a] < ids[b];
                      });
    auto& row = im[static_cast<std::size_t>(r)];
    for (std::size_t j = 0; j < k; ++j) {
      const auto id = ids[order[j]];
      const double p = std::exp(static_cast<double>(logits(r, id)) - mx) / z;
      row.push_back({id, std::max(p, std::numeric_limits<double>::denorm_min())});
    }
  }
  return im;
}

struct ChosenLabels {
  std::vector<TokenId> ids;
  std::vector<double> scores;
  std::vector<bool> matched;  // chosen candidate literally covers the position

  std::size_t size() const { return ids.size(); }
};

/// True when `word` occurs in `raw` at some offset that covers position i.
inline bool covers_position(const std::vector<std::string>& word, const std::vector<std::string>& raw, std::size_t i) {
  const auto m = word.size();
  if (m == 0 || m > raw.size()) return false;
  for (std::size_t j = 0; j < m && j <= i; ++j) {
    const auto start = i - j;
    if (start + m > raw.size()) continue;
    if (std::equal(word.begin(), word.end(), raw.begin() + static_cast<std::ptrdiff_t>(start))) return true;
  }
  return false;
}

/// Picks one label per position by score = p * (1 + lambda * match). Ties go
/// to the higher probability, then the lower id. A candidate that matches no
/// text can still win.
inline ChosenLabels rectify(const Imagination& im, const std::vector<std::string>& raw, const Vocabulary& vocab,
                            double lambda = 1.0) {
  if (im.size() != raw.size()) throw ShapeError("imagination does not cover every position");
  ChosenLabels out;
  for (std::size_t i = 0; i < im.size(); ++i) {
    if (im[i].empty()) throw ShapeError("empty candidate list at position " + std::to_string(i));
    double best_score = -1.0;
    const Candidate* best = nullptr;
    bool best_match = false;
    for (const auto& c : im[i]) {
      const bool match = covers_position(utf8::chars(vocab.entry(c.id).surface), raw, i);
      const double score = c.prob * (1.0 + lambda * (match ? 1.0 : 0.0));
      const bool better = !best || score > best_score ||
                          (score == best_score && (c.prob > best->prob || (c.prob == best->prob && c.id < best->id)));
      if (better) best_score = score, best = &c, best_match = match;
    }
    out.ids.push_back(best->id);
    out.scores.push_back(best_score);
    out.matched.push_back(best_match);
  }
  return out;
}

/// Number of distinct chosen labels.
inline std::size_t estimate_cluster_count(const std::vector<TokenId>& labels) {
  if (labels.empty()) throw ShapeError("cannot estimate a cluster count for an empty sentence");
  return std::set<TokenId>(labels.begin(), labels.end()).size();
}

inline std::size_t estimate_cluster_count(const ChosenLabels& chosen) { return estimate_cluster_count(chosen.ids); }

enum class EmbeddingSource { output_projection, input_embedding };
enum class ClusterEngine { gmm, kmeans };

inline const char* engine_name(ClusterEngine e) { return e == ClusterEngine::gmm ? "gmm" : "kmeans"; }

inline ClusterEngine parse_engine(const std::string& s) {
  if (s == "gmm") return ClusterEngine::gmm;
  if (s == "kmeans") return ClusterEngine::kmeans;
  throw ConfigError("unknown clustering engine '" + s + "' (expected gmm or kmeans)");
}

/// One point per position: the chosen label's column of W_ds, or its row of
/// the input embedding table.
template <class T>
Points gather_points(const ChosenLabels& chosen, const CLNNModel<T>& m,
                     EmbeddingSource source = EmbeddingSource::output_projection) {
  const auto d = static_cast<Eigen::Index>(m.config.d);
  Points pts(static_cast<Eigen::Index>(chosen.size()), d);
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const auto id = chosen.ids[i];
    if (id >= m.vocab_size) throw ShapeError("label id outside the model vocabulary");
    const auto r = static_cast<Eigen::Index>(i);
    if (source == EmbeddingSource::output_projection)
      pts.row(r) = m.out_w.value.col(id).transpose().template cast<double>();
    else
      pts.row(r) = m.embedding.value.row(id).template cast<double>();
  }
  return pts;
}

struct Segmentation {
  std::vector<std::vector<std::size_t>> groups;  // ordered by first position
  std::vector<std::string> words;                // contiguous, left to right
  std::vector<std::size_t> jump_groups;          // groups split into several words
};

/// Groups are the clusters; words are maximal runs of adjacent positions that
/// share a cluster.
inline Segmentation clusters_to_segmentation(const std::vector<std::size_t>& labels, const std::vector<std::string>& raw) {
  if (labels.size() != raw.size()) throw ShapeError("cluster labels do not cover the sentence");
  Segmentation seg;
  std::vector<std::size_t> group_of_cluster;
  std::vector<std::size_t> runs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = labels[i];
    if (c >= group_of_cluster.size()) group_of_cluster.resize(c + 1, SIZE_MAX);
    if (group_of_cluster[c] == SIZE_MAX) {
      group_of_cluster[c] = seg.groups.size();
      seg.groups.emplace_back();
      runs.push_back(0);
    }
    const auto g = group_of_cluster[c];
    seg.groups[g].push_back(i);
    if (i == 0 || labels[i - 1] != c) {
      seg.words.push_back(raw[i]);
      ++runs[g];
    } else {
      seg.words.back() += raw[i];
    }
  }
  for (std::size_t g = 0; g < runs.size(); ++g)
    if (runs[g] > 1) seg.jump_groups.push_back(g);
  return seg;
}

struct DecodeConfig {
  std::size_t k_top = 8;
  double lambda = 1.0;
  ClusterEngine engine = ClusterEngine::gmm;
  std::uint64_t seed = 42;
  EmbeddingSource source = EmbeddingSource::output_projection;
  std::size_t max_len = 126;
  KMeansOptions kmeans;
  GmmOptions gmm;
};

/// Intermediate results for one encoder window of a sentence.
struct ChunkTrace {
  std::size_t offset = 0;
  Imagination imagination;
  ChosenLabels chosen;
  std::size_t estimated_k = 0;
  ClusterAssignment assignment;
};

struct DecodeResult {
  std::string raw;
  Segmentation segmentation;
  std::size_t k = 0;
  ClusterEngine engine = ClusterEngine::gmm;
  std::vector<ChunkTrace> chunks;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Full decode of one raw sentence (whitespace is ignored). Sentences longer
/// than max_len are decoded window by window. `stream` selects the sentence's
/// private random stream so decode order never changes results.
template <class T>
DecodeResult segment_sentence(const CLNNModel<T>& m, const Vocabulary& vocab, const std::string& raw_line,
                              const DecodeConfig& cfg, std::uint64_t stream = 0) {
  DecodeResult res;
  res.raw = utf8::strip_spaces(raw_line);
  res.engine = cfg.engine;
  const auto chars = utf8::chars(res.raw);
  if (chars.empty()) return res;
  const auto words = vocab.word_ids();
  const std::uint64_t seed = splitmix64(cfg.seed ^ splitmix64(stream));
  for (std::size_t lo = 0; lo < chars.size(); lo += cfg.max_len) {
    const auto hi = std::min(chars.size(), lo + cfg.max_len);
    std::vector<std::string> window(chars.begin() + static_cast<std::ptrdiff_t>(lo), chars.begin() + static_cast<std::ptrdiff_t>(hi));
    std::vector<TokenId> ids;
    for (const auto& c : window) ids.push_back(vocab.char_id(c));

    ChunkTrace ch;
    ch.offset = lo;
    ch.imagination = top_k_labels(sentence_logits(m, ids), cfg.k_top, words);
    ch.chosen = rectify(ch.imagination, window, vocab, cfg.lambda);
    ch.estimated_k = estimate_cluster_count(ch.chosen);
    const Points pts = gather_points(ch.chosen, m, cfg.source);
    const auto chunk_seed = splitmix64(seed + lo);
    ch.assignment = cfg.engine == ClusterEngine::gmm ? gmm_em(pts, ch.estimated_k, chunk_seed, cfg.gmm)
                                                     : kmeans(pts, ch.estimated_k, chunk_seed, cfg.kmeans);
    auto part = clusters_to_segmentation(ch.assignment.labels, window);
    const auto base = res.segmentation.groups.size();
    for (auto& g : part.groups) {
      for (auto& p : g) p += lo;
      res.segmentation.groups.push_back(std::move(g));
    }
    for (auto& w : part.words) res.segmentation.words.push_back(std::move(w));
    for (auto j : part.jump_groups) res.segmentation.jump_groups.push_back(base + j);
    res.k += ch.assignment.k;
    res.chunks.push_back(std::move(ch));
  }
  return res;
}

/// `{"raw", "words", "groups", "jump_groups", "k", "engine"}`.
inline nlohmann::json rich_json(const DecodeResult& r) {
  return {{"raw", r.raw},
          {"words", r.segmentation.words},
          {"groups", r.segmentation.groups},
          {"jump_groups", r.segmentation.jump_groups},
          {"k", r.k},
          {"engine", engine_name(r.engine)}};
}

inline std::string plain_line(const DecodeResult& r) {
  std::string s;
  for (std::size_t i = 0; i < r.segmentation.words.size(); ++i) {
    if (i) s += ' ';
    s += r.segmentation.words[i];
  }
  return s;
}

}  // namespace clnn
