#pragma once

// Bakeoff-style word scoring: exact span matches, recall / precision / F,
// and recall split by whether the gold word is in the training vocabulary.

#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clnn/corpus.hpp"
#include "clnn/utf8.hpp"

namespace clnn {

enum class EvalMode { full, no_oov };

struct EvalReport {
  EvalMode mode = EvalMode::full;
  double recall = 0.0;
  double precision = 0.0;
  double f_score = 0.0;
  double iv_recall = 1.0;
  double oov_recall = 1.0;
  std::size_t gold_words = 0;
  std::size_t pred_words = 0;
  std::size_t correct = 0;
  std::size_t gold_iv = 0;
  std::size_t gold_oov = 0;
  std::size_t correct_iv = 0;
  std::size_t correct_oov = 0;
  std::size_t sentences = 0;
  // Empty IV/OOV subsets report a recall of 1.0 and set these.
  bool iv_subset_empty = true;
  bool oov_subset_empty = true;
};

inline std::vector<Span> extract_spans(const Sentence& words) {
  std::vector<Span> spans;
  std::size_t pos = 0;
  for (const auto& w : words) {
    const auto n = utf8::length(w);
    spans.push_back({pos, pos + n});
    pos += n;
  }
  return spans;
}

inline double f_measure(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

namespace detail {
inline double ratio(std::size_t num, std::size_t den, double empty) {
  return den == 0 ? empty : static_cast<double>(num) / static_cast<double>(den);
}

inline std::string join(const Sentence& s) {
  std::string out;
  for (const auto& w : s) out += w;
  return out;
}
}  // namespace detail

/// Fills recall, precision, F and the IV/OOV recalls from the counts.
inline void compute_ratios(EvalReport& r) {
  r.recall = detail::ratio(r.correct, r.gold_words, 0.0);
  r.precision = detail::ratio(r.correct, r.pred_words, 0.0);
  r.f_score = f_measure(r.precision, r.recall);
  r.iv_subset_empty = r.gold_iv == 0;
  r.oov_subset_empty = r.gold_oov == 0;
  r.iv_recall = detail::ratio(r.correct_iv, r.gold_iv, 1.0);
  r.oov_recall = detail::ratio(r.correct_oov, r.gold_oov, 1.0);
}

/// Sentences must align one-to-one and carry identical text.
inline EvalReport score(const std::vector<Sentence>& pred, const std::vector<Sentence>& gold, const Vocabulary& train_vocab,
                        EvalMode mode = EvalMode::full) {
  if (pred.size() != gold.size())
    throw AlignmentError(std::min(pred.size(), gold.size()), 0,
                         "prediction has " + std::to_string(pred.size()) + " sentences, gold has " + std::to_string(gold.size()));
  EvalReport rep;
  rep.mode = mode;
  rep.sentences = gold.size();
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const auto pc = utf8::chars(detail::join(pred[s]));
    const auto gc = utf8::chars(detail::join(gold[s]));
    if (pc != gc) {
      std::size_t i = 0;
      while (i < pc.size() && i < gc.size() && pc[i] == gc[i]) ++i;
      const std::string seen = i < pc.size() ? pc[i] : std::string("<end>");
      const std::string want = i < gc.size() ? gc[i] : std::string("<end>");
      throw AlignmentError(s, i, "sentence " + std::to_string(s) + ": text differs at character " + std::to_string(i) +
                                     " (prediction '" + seen + "', gold '" + want + "')");
    }
    const auto ps = extract_spans(pred[s]);
    const auto gs = extract_spans(gold[s]);
    const std::set<Span> pset(ps.begin(), ps.end());
    const std::set<Span> gset(gs.begin(), gs.end());
    rep.pred_words += ps.size();
    rep.gold_words += gs.size();
    for (const auto& sp : ps) rep.correct += gset.count(sp);
    for (std::size_t w = 0; w < gs.size(); ++w) {
      const bool hit = pset.count(gs[w]) > 0;
      if (train_vocab.is_known_word(gold[s][w])) {
        ++rep.gold_iv;
        rep.correct_iv += hit;
      } else {
        ++rep.gold_oov;
        rep.correct_oov += hit;
      }
    }
  }
  compute_ratios(rep);
  return rep;
}

struct NoOovSelection {
  std::vector<Sentence> sentences;
  std::vector<std::size_t> kept;  // indices into the input
  std::optional<std::string> warning;
};

/// Keeps only sentences whose gold words are all in the training vocabulary.
inline NoOovSelection no_oov_filter(const std::vector<Sentence>& gold, const Vocabulary& train_vocab) {
  NoOovSelection sel;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    bool all_iv = true;
    for (const auto& w : gold[s]) all_iv = all_iv && train_vocab.is_known_word(w);
    if (all_iv) {
      sel.sentences.push_back(gold[s]);
      sel.kept.push_back(s);
    }
  }
  if (sel.sentences.empty() && !gold.empty())
    sel.warning = "no-OOV filter removed every sentence: each contains at least one OOV word";
  return sel;
}

inline EvalReport score_no_oov(const std::vector<Sentence>& pred, const std::vector<Sentence>& gold,
                               const Vocabulary& train_vocab, std::optional<std::string>* warning = nullptr) {
  if (pred.size() != gold.size())
    throw AlignmentError(std::min(pred.size(), gold.size()), 0, "prediction and gold differ in sentence count");
  auto sel = no_oov_filter(gold, train_vocab);
  if (warning) *warning = sel.warning;
  std::vector<Sentence> p;
  for (auto i : sel.kept) p.push_back(pred[i]);
  return score(p, sel.sentences, train_vocab, EvalMode::no_oov);
}

/// Percentage with two decimals, rounded half up.
inline std::string format_percent(double ratio) {
  const double scaled = std::floor(ratio * 10000.0 + 0.5 + 1e-7);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", scaled / 100.0);
  return buf;
}

enum class ReportFormat { text, json };

inline nlohmann::json report_json(const EvalReport& r) {
  return {{"mode", r.mode == EvalMode::full ? "full" : "no_oov"},
          {"recall", r.recall},
          {"precision", r.precision},
          {"f_score", r.f_score},
          {"iv_recall", r.iv_recall},
          {"oov_recall", r.oov_recall},
          {"gold_words", r.gold_words},
          {"pred_words", r.pred_words},
          {"correct", r.correct},
          {"gold_iv", r.gold_iv},
          {"gold_oov", r.gold_oov},
          {"correct_iv", r.correct_iv},
          {"correct_oov", r.correct_oov},
          {"sentences", r.sentences},
          {"iv_subset_empty", r.iv_subset_empty},
          {"oov_subset_empty", r.oov_subset_empty}};
}

inline std::string render_report(const EvalReport& r, ReportFormat fmt = ReportFormat::text) {
  if (fmt == ReportFormat::json) return report_json(r).dump(2) + "\n";
  std::string out;
  if (r.mode == EvalMode::full) {
    out += "=== full test set ===\n";
  } else {
    out += "=== no-OOV: sentences containing any OOV gold word are excluded ===\n";
  }
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %-10s %-10s %-10s %-10s\n", "Recall", "Precision", "F-score", "IV Recall",
                "OOV Recall");
  out += line;
  auto flag = [](bool empty) { return empty ? "*" : ""; };
  const std::string iv = format_percent(r.iv_recall) + flag(r.iv_subset_empty);
  const std::string oov = format_percent(r.oov_recall) + flag(r.oov_subset_empty);
  std::snprintf(line, sizeof line, "%-10s %-10s %-10s %-10s %-10s\n", format_percent(r.recall).c_str(),
                format_percent(r.precision).c_str(), format_percent(r.f_score).c_str(), iv.c_str(), oov.c_str());
  out += line;
  std::snprintf(line, sizeof line,
                "sentences %zu | gold %zu | predicted %zu | correct %zu | gold IV %zu (correct %zu) | gold OOV %zu (correct %zu)\n",
                r.sentences, r.gold_words, r.pred_words, r.correct, r.gold_iv, r.correct_iv, r.gold_oov, r.correct_oov);
  out += line;
  if (r.iv_subset_empty || r.oov_subset_empty) out += "* empty subset, reported as 100%\n";
  return out;
}

}  // namespace clnn
