#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "clnn/decoder.hpp"
#include "clnn/train.hpp"

using namespace clnn;
using M = Mat<double>;

namespace {

std::vector<std::size_t> ids_to_clusters(const std::vector<TokenId>& ids) {
  std::vector<TokenId> seen;
  std::vector<std::size_t> out;
  for (auto id : ids) {
    auto it = std::find(seen.begin(), seen.end(), id);
    if (it == seen.end()) seen.push_back(id), it = seen.end() - 1;
    out.push_back(static_cast<std::size_t>(it - seen.begin()));
  }
  return out;
}

bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

}  // namespace

// ---- top-K -----------------------------------------------------------------

TEST(TopK, KOneIsArgmax) {
  M logits(3, 4);
  logits << 0, 3, 1, 2, 9, 0, 0, 0, -1, -2, -3, 5;
  auto im = top_k_labels(logits, 1);
  EXPECT_EQ(im[0][0].id, 1u);
  EXPECT_EQ(im[1][0].id, 0u);
  EXPECT_EQ(im[2][0].id, 3u);
}

TEST(TopK, UniformLogitsPickLowestIds) {
  auto im = top_k_labels(M(M::Zero(2, 6)), 3);
  for (const auto& row : im) {
    ASSERT_EQ(row.size(), 3u);
    EXPECT_EQ(row[0].id, 0u);
    EXPECT_EQ(row[1].id, 1u);
    EXPECT_EQ(row[2].id, 2u);
    EXPECT_NEAR(row[0].prob, 1.0 / 6.0, 1e-15);
  }
}

TEST(TopK, HandBuiltSoftmax) {
  M logits(1, 4);
  logits << 5, 1, 0, 0;
  auto im = top_k_labels(logits, 4);
  EXPECT_EQ(im[0][0].id, 0u);
  EXPECT_NEAR(im[0][0].prob, 0.9691880269670813, 1e-12);
  for (std::size_t j = 1; j < 4; ++j) EXPECT_LE(im[0][j].prob, im[0][j - 1].prob);
  EXPECT_EQ(im[0][2].id, 2u);  // tie between ids 2 and 3
}

TEST(TopK, SoftmaxOnlyOverCandidates) {
  M logits(1, 5);
  logits << 100, 1, 100, 1, 0;
  auto im = top_k_labels(logits, 2, {1, 3, 4});
  EXPECT_EQ(im[0][0].id, 1u);
  EXPECT_EQ(im[0][1].id, 3u);
  const double z = 2 * std::exp(1.0) + 1.0;
  EXPECT_NEAR(im[0][0].prob, std::exp(1.0) / z, 1e-12);
}

TEST(TopK, KLargerThanCandidatesIsAnError) {
  EXPECT_THROW(top_k_labels(M(M::Zero(1, 4)), 5), ConfigError);
  EXPECT_THROW(top_k_labels(M(M::Zero(1, 4)), 3, {0, 1}), ConfigError);
  EXPECT_THROW(top_k_labels(M(M::Zero(1, 4)), 0), ConfigError);
}

TEST(TopK, ProbabilitiesStayPositive) {
  M logits(1, 3);
  logits << 0, -5000, -6000;
  auto im = top_k_labels(logits, 3);
  for (const auto& c : im[0]) {
    EXPECT_GT(c.prob, 0.0);
    EXPECT_LE(c.prob, 1.0);
  }
}

// ---- rectify ---------------------------------------------------------------

TEST(Rectify, CoversPosition) {
  auto raw = utf8::chars("她一边吃饭");
  EXPECT_TRUE(covers_position(utf8::chars("一边"), raw, 1));
  EXPECT_TRUE(covers_position(utf8::chars("一边"), raw, 2));
  EXPECT_FALSE(covers_position(utf8::chars("一边"), raw, 3));
  EXPECT_FALSE(covers_position(utf8::chars("边吃饭了"), raw, 3));
  EXPECT_TRUE(covers_position(utf8::chars("她一边吃饭"), raw, 4));
}

TEST(Rectify, WordMatchWinsForFaGuo) {
  auto v = build_vocabulary({{"法国"}, {"国", "法"}, {"国家"}});
  const auto fg = *v.word_id("法国"), gj = *v.word_id("国家");
  // "国家" is more probable at position 1 but does not occur in the text.
  Imagination im{{{fg, 0.5}, {gj, 0.3}}, {{gj, 0.55}, {fg, 0.45}}};
  auto chosen = rectify(im, utf8::chars("法国"), v, 1.0);
  EXPECT_EQ(chosen.ids, (std::vector<TokenId>{fg, fg}));
  EXPECT_TRUE(chosen.matched[0]);
  EXPECT_TRUE(chosen.matched[1]);
  EXPECT_NEAR(chosen.scores[1], 0.9, 1e-12);
}

TEST(Rectify, UnmatchedImaginationStillGroups) {
  auto v = build_vocabulary({{"2008年"}, {"2", "0", "年"}});
  const auto y = *v.word_id("2008年");
  const auto two = *v.word_id("2"), zero = *v.word_id("0"), nian = *v.word_id("年");
  Imagination im;
  for (TokenId alt : {two, zero, zero, zero, nian}) im.push_back({{y, 0.7}, {alt, 0.2}});
  auto chosen = rectify(im, utf8::chars("2000年"), v, 1.0);
  EXPECT_EQ(chosen.ids, std::vector<TokenId>(5, y));
  for (bool m : chosen.matched) EXPECT_FALSE(m);
  EXPECT_EQ(estimate_cluster_count(chosen), 1u);
}

TEST(Rectify, KOneDegeneratesToArgmax) {
  auto v = build_vocabulary({{"法国"}, {"国", "法"}});
  M logits(2, static_cast<Eigen::Index>(v.size()));
  logits.setZero();
  logits(0, *v.word_id("国")) = 4;  // no match at position 0
  logits(1, *v.word_id("法国")) = 4;
  auto im = top_k_labels(logits, 1, v.word_ids());
  auto chosen = rectify(im, utf8::chars("法国"), v);
  EXPECT_EQ(chosen.ids[0], *v.word_id("国"));
  EXPECT_EQ(chosen.ids[1], *v.word_id("法国"));
}

TEST(Rectify, LambdaZeroIgnoresMatch) {
  auto v = build_vocabulary({{"法国"}, {"国家"}});
  const auto fg = *v.word_id("法国"), gj = *v.word_id("国家");
  Imagination im{{{gj, 0.6}, {fg, 0.4}}};
  EXPECT_EQ(rectify(im, utf8::chars("法"), v, 0.0).ids[0], gj);
}

TEST(Rectify, TiesPreferHigherProbabilityThenLowerId) {
  auto v = build_vocabulary({{"法国"}, {"国家"}, {"法"}});
  const auto fg = *v.word_id("法国"), gj = *v.word_id("国家"), fa = *v.word_id("法");
  // 0.25 * 2 (match) == 0.5 (no match): the higher probability wins.
  Imagination im{{{gj, 0.5}, {fg, 0.25}}, {{fg, 1.0}}};
  EXPECT_EQ(rectify(im, utf8::chars("法国"), v).ids[0], gj);
  // Equal probability and both matching: the lower id wins.
  Imagination tie{{{fg, 0.3}, {fa, 0.3}}, {{fg, 1.0}}};
  EXPECT_EQ(rectify(tie, utf8::chars("法国"), v).ids[0], std::min(fa, fg));
}

TEST(Rectify, LengthMismatchIsShapeError) {
  auto v = build_vocabulary({{"法国"}});
  EXPECT_THROW(rectify(Imagination(1, {{*v.word_id("法国"), 1.0}}), utf8::chars("法国"), v), ShapeError);
}

// ---- cluster count ---------------------------------------------------------

TEST(ClusterCount, DistinctLabels) {
  EXPECT_EQ(estimate_cluster_count(std::vector<TokenId>{7, 7, 9}), 2u);
  EXPECT_EQ(estimate_cluster_count(std::vector<TokenId>{3, 3, 3, 3}), 1u);
  EXPECT_THROW(estimate_cluster_count(std::vector<TokenId>{}), ShapeError);
}

TEST(ClusterCount, RepeatedWordCountsOnce) {
  Sentence s{"她", "一边", "吃饭", "一边", "看报"};
  auto v = build_vocabulary({s});
  EXPECT_EQ(estimate_cluster_count(encode_sentence(v, s).labels), 4u);
}

// ---- points ----------------------------------------------------------------

TEST(GatherPoints, FollowLabels) {
  auto v = build_vocabulary({{"她", "一边", "吃饭"}});
  CLNNConfig c;
  c.d = 8;
  c.layers = 1;
  auto m = init_model<float>(c, v);
  ChosenLabels chosen{{*v.word_id("一边"), *v.word_id("吃饭"), *v.word_id("一边")}, {1, 1, 1}, {true, true, true}};
  auto pts = gather_points(chosen, m);
  EXPECT_EQ(pts.rows(), 3);
  EXPECT_EQ(pts.cols(), 8);
  EXPECT_EQ(pts.row(0), pts.row(2));
  EXPECT_NE(pts.row(0), pts.row(1));
  EXPECT_TRUE(pts.row(1).isApprox(m.out_w.value.col(*v.word_id("吃饭")).transpose().cast<double>()));
  auto emb = gather_points(chosen, m, EmbeddingSource::input_embedding);
  EXPECT_TRUE(emb.row(1).isApprox(m.embedding.value.row(*v.word_id("吃饭")).cast<double>()));
  ChosenLabels one{{*v.word_id("她")}, {1}, {true}};
  EXPECT_EQ(gather_points(one, m).rows(), 1);
}

// ---- segmentation emission -------------------------------------------------

TEST(Emit, ContiguousRuns) {
  auto seg = clusters_to_segmentation({0, 1, 1}, utf8::chars("她吃饭"));
  EXPECT_EQ(seg.words, (std::vector<std::string>{"她", "吃饭"}));
  EXPECT_EQ(seg.groups, (std::vector<std::vector<std::size_t>>{{0}, {1, 2}}));
  EXPECT_TRUE(seg.jump_groups.empty());
}

TEST(Emit, JumpGroupIsRecordedOnce) {
  auto raw = utf8::chars("她一边吃饭一边看报");
  auto seg = clusters_to_segmentation({0, 1, 1, 2, 2, 1, 1, 3, 3}, raw);
  EXPECT_EQ(seg.words, (std::vector<std::string>{"她", "一边", "吃饭", "一边", "看报"}));
  ASSERT_EQ(seg.groups.size(), 4u);
  EXPECT_EQ(seg.groups[1], (std::vector<std::size_t>{1, 2, 5, 6}));
  EXPECT_EQ(seg.jump_groups, (std::vector<std::size_t>{1}));
}

TEST(Emit, AllSingletons) {
  auto seg = clusters_to_segmentation({2, 0, 1}, utf8::chars("天地人"));
  EXPECT_EQ(seg.words, (std::vector<std::string>{"天", "地", "人"}));
}

TEST(Emit, GroupsPartitionAndWordsConcatenate) {
  std::mt19937_64 rng(1);
  auto raw = utf8::chars("迈向充满希望的新世纪");
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> labels(raw.size());
    for (auto& l : labels) l = std::uniform_int_distribution<std::size_t>(0, 3)(rng);
    auto seg = clusters_to_segmentation(labels, raw);
    std::string joined;
    for (const auto& w : seg.words) joined += w;
    EXPECT_EQ(joined, "迈向充满希望的新世纪");
    std::vector<int> seen(raw.size(), 0);
    for (const auto& g : seg.groups)
      for (auto p : g) ++seen[p];
    for (int s : seen) EXPECT_EQ(s, 1);
  }
}

TEST(Emit, LengthMismatchIsShapeError) {
  EXPECT_THROW(clusters_to_segmentation({0, 0}, utf8::chars("天")), ShapeError);
}

TEST(Engine, ParseNames) {
  EXPECT_EQ(parse_engine("gmm"), ClusterEngine::gmm);
  EXPECT_EQ(parse_engine("kmeans"), ClusterEngine::kmeans);
  EXPECT_THROW(parse_engine("dbscan"), ConfigError);
  EXPECT_STREQ(engine_name(ClusterEngine::kmeans), "kmeans");
}

// ---- end-to-end decoding on a memorized model ------------------------------

class Decode : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = {{"迈向", "充满", "希望", "的", "新", "世纪"}, {"好", "好", "好"}, {"她", "一边", "吃饭", "一边", "看报"}};
    vocab_ = build_vocabulary(corpus_);
    std::vector<SentenceExample> ex;
    for (int r = 0; r < 8; ++r)
      for (const auto& s : corpus_) ex.push_back(encode_sentence(vocab_, s));
    CLNNConfig c;
    c.d = 32;
    c.layers = 2;
    c.epochs = 150;
    c.batch_size = 4;
    model_ = init_model<float>(c, vocab_);
    train(model_, ex);
  }

  static std::string joined(const Sentence& s) {
    std::string out;
    for (const auto& w : s) out += w;
    return out;
  }

  static inline std::vector<Sentence> corpus_;
  static inline Vocabulary vocab_;
  static inline CLNNModel<float> model_;
};

TEST_F(Decode, MemorizedSentenceReproducesGold) {
  for (auto engine : {ClusterEngine::gmm, ClusterEngine::kmeans}) {
    DecodeConfig cfg;
    cfg.engine = engine;
    auto r = segment_sentence(model_, vocab_, joined(corpus_[0]), cfg);
    EXPECT_EQ(r.segmentation.words, corpus_[0]) << engine_name(engine);
    EXPECT_EQ(r.k, 6u);
  }
}

TEST_F(Decode, JumpConnectionKeptInGroups) {
  DecodeConfig cfg;
  auto r = segment_sentence(model_, vocab_, joined(corpus_[2]), cfg);
  EXPECT_EQ(r.segmentation.words, corpus_[2]);
  EXPECT_EQ(r.k, 4u);
  ASSERT_EQ(r.segmentation.jump_groups.size(), 1u);
  EXPECT_EQ(r.segmentation.groups[r.segmentation.jump_groups[0]], (std::vector<std::size_t>{1, 2, 5, 6}));
}

TEST_F(Decode, RepeatedWordIsOneCluster) {
  auto r = segment_sentence(model_, vocab_, "好好好", DecodeConfig{});
  EXPECT_EQ(r.k, 1u);
  EXPECT_EQ(r.segmentation.groups.size(), 1u);
  // One cluster of adjacent positions reads as one linear run.
  EXPECT_EQ(r.segmentation.words, (std::vector<std::string>{"好好好"}));
}

TEST_F(Decode, SingleCharacterIsOneWord) {
  auto r = segment_sentence(model_, vocab_, "新", DecodeConfig{});
  EXPECT_EQ(r.segmentation.words, (std::vector<std::string>{"新"}));
  EXPECT_EQ(r.k, 1u);
}

TEST_F(Decode, EmptyAndWhitespaceLines) {
  auto r = segment_sentence(model_, vocab_, "  ", DecodeConfig{});
  EXPECT_TRUE(r.segmentation.words.empty());
  EXPECT_EQ(plain_line(r), "");
  auto spaced = segment_sentence(model_, vocab_, "迈向 充满希望的新世纪", DecodeConfig{});
  EXPECT_EQ(spaced.raw, "迈向充满希望的新世纪");
}

TEST_F(Decode, WordsAlwaysConcatenateToInput) {
  // Unseen characters, mixed text, and a sentence longer than the window.
  DecodeConfig cfg;
  cfg.max_len = 4;
  for (const std::string raw : {"迈向新的希望", "猫狗鸟鱼虫", "ab好12世纪", "她一边看报一边吃饭迈向新世纪"}) {
    auto r = segment_sentence(model_, vocab_, raw, cfg);
    std::string joined;
    for (const auto& w : r.segmentation.words) joined += w;
    EXPECT_EQ(joined, raw);
    std::size_t covered = 0;
    for (const auto& g : r.segmentation.groups) covered += g.size();
    EXPECT_EQ(covered, utf8::length(raw));
  }
}

TEST_F(Decode, IdenticalLabelsShareACluster) {
  DecodeConfig cfg;
  for (const std::string raw : {"她一边看报一边吃饭", "新世纪迈向希望", "好的好的"}) {
    for (auto engine : {ClusterEngine::gmm, ClusterEngine::kmeans}) {
      cfg.engine = engine;
      auto r = segment_sentence(model_, vocab_, raw, cfg);
      const auto& ch = r.chunks.at(0);
      EXPECT_EQ(ch.assignment.k, ch.estimated_k);
      EXPECT_TRUE(same_partition(ch.assignment.labels, ids_to_clusters(ch.chosen.ids))) << raw;
    }
  }
}

TEST_F(Decode, DeterministicPerSeedAndStream) {
  DecodeConfig cfg;
  cfg.engine = ClusterEngine::kmeans;
  cfg.seed = 7;
  const std::string raw = "她一边看报一边迈向新世纪";
  auto a = segment_sentence(model_, vocab_, raw, cfg, 3);
  auto b = segment_sentence(model_, vocab_, raw, cfg, 3);
  EXPECT_EQ(rich_json(a).dump(), rich_json(b).dump());
}

TEST_F(Decode, RichJsonShape) {
  auto r = segment_sentence(model_, vocab_, joined(corpus_[2]), DecodeConfig{});
  auto j = rich_json(r);
  for (const char* key : {"raw", "words", "groups", "jump_groups", "k", "engine"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["engine"], "gmm");
  EXPECT_EQ(j["raw"], joined(corpus_[2]));
  EXPECT_EQ(plain_line(r), "她 一边 吃饭 一边 看报");
}

TEST_F(Decode, KTooLargeForVocabularyIsAnError) {
  DecodeConfig cfg;
  cfg.k_top = vocab_.word_ids().size() + 1;
  EXPECT_THROW(segment_sentence(model_, vocab_, "新", cfg), ConfigError);
}
