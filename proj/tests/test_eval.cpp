#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "clnn/eval.hpp"
#include "test_support.hpp"

using namespace clnn;

namespace {

std::vector<Sentence> fixture(const char* name) { return load_bakeoff_corpus(test_support::data_path(name)); }

// Re-splits every word into single characters with probability p.
std::vector<Sentence> perturb(const std::vector<Sentence>& gold, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution flip(p);
  std::vector<Sentence> out;
  for (const auto& s : gold) {
    Sentence t;
    for (const auto& w : s) {
      if (flip(rng))
        for (const auto& c : utf8::chars(w)) t.push_back(c);
      else
        t.push_back(w);
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST(Spans, PrefixSums) {
  EXPECT_EQ(extract_spans({"她", "一边", "吃饭"}), (std::vector<Span>{{0, 1}, {1, 3}, {3, 5}}));
  EXPECT_EQ(extract_spans({"迈向"}), (std::vector<Span>{{0, 2}}));
  EXPECT_TRUE(extract_spans({}).empty());
}

TEST(Score, SelfScoreIsExactlyOne) {
  auto gold = fixture("pku_fixture_heldout_gold.utf8");
  auto vocab = build_vocabulary(fixture("pku_fixture_training.utf8"));
  auto r = score(gold, gold, vocab);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f_score, 1.0);
  EXPECT_EQ(r.iv_recall, 1.0);
  EXPECT_EQ(r.oov_recall, 1.0);
  EXPECT_GT(r.gold_oov, 0u);
  EXPECT_FALSE(r.oov_subset_empty);
}

TEST(Score, HandComputedTenWords) {
  // 10 gold words, 9 predicted, all 9 correct.
  EvalReport r;
  r.gold_words = 10, r.pred_words = 9, r.correct = 9;
  r.gold_iv = 10, r.correct_iv = 9;
  compute_ratios(r);
  EXPECT_DOUBLE_EQ(r.recall, 0.9);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_NEAR(r.f_score, 0.9473684210526316, 1e-12);
  EXPECT_EQ(format_percent(r.f_score), "94.74%");
  EXPECT_TRUE(r.oov_subset_empty);
}

TEST(Score, MergedPairCountsAgainstBoth) {
  Sentence gold{"她", "一边", "吃饭", "一边", "看报"};
  Sentence pred{"她", "一边", "吃", "饭", "一边看报"};
  auto vocab = build_vocabulary({gold});
  auto r = score({pred}, {gold}, vocab);
  EXPECT_EQ(r.gold_words, 5u);
  EXPECT_EQ(r.pred_words, 5u);
  EXPECT_EQ(r.correct, 2u);
  EXPECT_DOUBLE_EQ(r.recall, 0.4);
  EXPECT_DOUBLE_EQ(r.precision, 0.4);
}

TEST(Score, OovWordSplitCostsPrecisionAndOovRecall) {
  auto vocab = build_vocabulary({{"法", "国", "很", "大"}});
  auto r = score({{"法", "国", "很", "大"}}, {{"法国", "很", "大"}}, vocab);
  EXPECT_EQ(r.gold_oov, 1u);
  EXPECT_EQ(r.correct_oov, 0u);
  EXPECT_EQ(r.oov_recall, 0.0);
  EXPECT_EQ(r.iv_recall, 1.0);
  EXPECT_DOUBLE_EQ(r.precision, 0.5);
  EXPECT_LT(r.precision, 1.0);
}

TEST(Score, OovUsesTrainingVocabularyWordEntries) {
  // "法" appears only inside a word, so it is a character entry, not a word.
  auto vocab = build_vocabulary({{"法国"}});
  EXPECT_FALSE(vocab.is_known_word("法"));
  auto r = score({{"法"}}, {{"法"}}, vocab);
  EXPECT_EQ(r.gold_oov, 1u);
  EXPECT_EQ(r.gold_iv, 0u);
  EXPECT_TRUE(r.iv_subset_empty);
  EXPECT_EQ(r.iv_recall, 1.0);
}

TEST(Score, TextMismatchNamesSentenceAndCharacter) {
  auto vocab = build_vocabulary({{"好"}});
  try {
    score({{"好"}, {"天", "气"}}, {{"好"}, {"天", "空"}}, vocab);
    FAIL() << "expected AlignmentError";
  } catch (const AlignmentError& e) {
    EXPECT_EQ(e.sentence(), 1u);
    EXPECT_EQ(e.position(), 1u);
  }
  EXPECT_THROW(score({{"好"}}, {{"好"}, {"好"}}, vocab), AlignmentError);
}

TEST(Score, Invariants) {
  auto gold = fixture("pku_fixture_heldout_gold.utf8");
  auto vocab = build_vocabulary(fixture("pku_fixture_training.utf8"));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto pred = perturb(gold, 0.3, seed);
    auto r = score(pred, gold, vocab);
    EXPECT_EQ(r.correct_iv + r.correct_oov, r.correct);
    EXPECT_EQ(r.gold_iv + r.gold_oov, r.gold_words);
    EXPECT_LE(r.correct, std::min(r.gold_words, r.pred_words));
    EXPECT_NEAR(r.f_score, 2 * r.precision * r.recall / (r.precision + r.recall), 1e-15);

    // Swapping roles swaps precision and recall; F is unchanged.
    auto s = score(gold, pred, vocab);
    EXPECT_EQ(s.precision, r.recall);
    EXPECT_EQ(s.recall, r.precision);
    EXPECT_DOUBLE_EQ(s.f_score, r.f_score);

    // Sentence order does not matter.
    std::vector<std::size_t> order(gold.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), std::mt19937_64(seed));
    std::vector<Sentence> pg, pp;
    for (auto i : order) pg.push_back(gold[i]), pp.push_back(pred[i]);
    auto t = score(pp, pg, vocab);
    EXPECT_EQ(t.correct, r.correct);
    EXPECT_EQ(t.correct_oov, r.correct_oov);
    EXPECT_EQ(t.f_score, r.f_score);
  }
}

TEST(Score, NothingCorrectGivesZeroF) {
  auto vocab = build_vocabulary({{"天气"}});
  auto r = score({{"天", "气"}}, {{"天气"}}, vocab);
  EXPECT_EQ(r.correct, 0u);
  EXPECT_EQ(r.f_score, 0.0);
}

TEST(NoOov, DropsSentencesWithAnyOovWord) {
  auto vocab = build_vocabulary({{"法国", "很", "大"}});
  std::vector<Sentence> gold{{"法国", "很", "大"}, {"德国", "很", "大"}, {"很", "大"}};
  auto sel = no_oov_filter(gold, vocab);
  EXPECT_EQ(sel.kept, (std::vector<std::size_t>{0, 2}));
  EXPECT_FALSE(sel.warning);
  auto r = score_no_oov(gold, gold, vocab);
  EXPECT_EQ(r.mode, EvalMode::no_oov);
  EXPECT_EQ(r.sentences, 2u);
  EXPECT_EQ(r.gold_oov, 0u);
}

TEST(NoOov, EverySentenceOovWarns) {
  auto vocab = build_vocabulary({{"很"}});
  std::optional<std::string> warning;
  auto r = score_no_oov({{"天"}, {"地"}}, {{"天"}, {"地"}}, vocab, &warning);
  EXPECT_TRUE(warning.has_value());
  EXPECT_EQ(r.sentences, 0u);
  EXPECT_TRUE(no_oov_filter({{"天"}}, vocab).sentences.empty());
}

TEST(NoOov, HeldOutFixtureKeepsNothingAndTrainingKeepsAll) {
  auto train = fixture("pku_fixture_training.utf8");
  auto vocab = build_vocabulary(train);
  EXPECT_EQ(no_oov_filter(train, vocab).sentences.size(), train.size());
  EXPECT_TRUE(no_oov_filter(fixture("pku_fixture_heldout_gold.utf8"), vocab).sentences.empty());
}

TEST(Render, PercentagesRoundHalfUp) {
  EXPECT_EQ(format_percent(0.9910), "99.10%");
  EXPECT_EQ(format_percent(0.99), "99.00%");
  EXPECT_EQ(format_percent(0.12345), "12.35%");
  EXPECT_EQ(format_percent(0.00005), "0.01%");
  EXPECT_EQ(format_percent(1.0), "100.00%");
  EXPECT_EQ(format_percent(0.0), "0.00%");
}

TEST(Render, TextMirrorsTableColumns) {
  EvalReport r;
  r.recall = 0.9910, r.precision = 0.9900, r.f_score = f_measure(0.99, 0.991);
  r.iv_recall = 0.988, r.oov_recall = 0.942;
  r.iv_subset_empty = r.oov_subset_empty = false;
  auto text = render_report(r);
  EXPECT_NE(text.find("Recall     Precision  F-score    IV Recall  OOV Recall"), std::string::npos);
  EXPECT_NE(text.find("99.10%     99.00%     99.05%     98.80%     94.20%"), std::string::npos);
  r.mode = EvalMode::no_oov;
  EXPECT_NE(render_report(r).find("no-OOV"), std::string::npos);
}

TEST(Render, JsonHasEveryField) {
  auto vocab = build_vocabulary({{"法", "国"}});
  auto r = score({{"法", "国"}}, {{"法国"}}, vocab);
  auto j = nlohmann::json::parse(render_report(r, ReportFormat::json));
  for (const char* k : {"mode", "recall", "precision", "f_score", "iv_recall", "oov_recall", "gold_words", "pred_words",
                        "correct", "gold_iv", "gold_oov", "correct_iv", "correct_oov"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["pred_words"], 2);
  EXPECT_EQ(j["gold_oov"], 1);
}
