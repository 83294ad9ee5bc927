#pragma once

// The CLNN encoder: embedding + positional encoding, L layers of
// {BI-LSTM -> 2u->d projection, self-attention, feed-forward}, each sublayer
// wrapped as dropout -> residual add -> layer norm, then a projection to one
// logit per vocabulary entry.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clnn/corpus.hpp"
#include "clnn/io.hpp"
#include "clnn/ops.hpp"
#include "clnn/tensor.hpp"

namespace clnn {

struct CLNNConfig {
  std::size_t d = 64;            // embedding dimension
  std::size_t layers = 2;        // L
  std::size_t expand = 4;        // feed-forward expand ratio N
  std::size_t lstm_hidden = 0;   // u; 0 means u = d
  double dropout = 0.1;
  double lr = 1e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 300;
  std::uint64_t seed = 42;
  std::size_t k_top = 8;         // imagination depth K
  std::size_t max_len = 126;

  std::size_t hidden() const { return lstm_hidden == 0 ? d : lstm_hidden; }

  void validate() const {
    if (d == 0 || d % 2 != 0) throw ConfigError("d must be even and positive, got " + std::to_string(d));
    if (layers < 1) throw ConfigError("layer count must be at least 1");
    if (expand < 1) throw ConfigError("expand ratio must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (k_top < 1) throw ConfigError("K must be at least 1");
    if (max_len < 1) throw ConfigError("max_len must be at least 1");
  }

  friend void to_json(nlohmann::json& j, const CLNNConfig& c) {
    j = {{"d", c.d},           {"layers", c.layers}, {"expand", c.expand},         {"lstm_hidden", c.hidden()},
         {"dropout", c.dropout}, {"lr", c.lr},       {"batch_size", c.batch_size}, {"epochs", c.epochs},
         {"seed", c.seed},     {"k_top", c.k_top},   {"max_len", c.max_len}};
  }
  friend void from_json(const nlohmann::json& j, CLNNConfig& c) {
    c.d = j.value("d", c.d);
    c.layers = j.value("layers", c.layers);
    c.expand = j.value("expand", c.expand);
    c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.k_top = j.value("k_top", c.k_top);
    c.max_len = j.value("max_len", c.max_len);
  }

  std::string hash() const { return io::hex64(io::fnv1a(nlohmann::json(*this).dump())); }
};

template <class T>
struct EncoderLayer {
  LstmParams<T> fwd, bwd;
  Param<T> proj_w, proj_b;  // 2u -> d
  LayerNormParams<T> ln1;
  AttentionParams<T> att;
  LayerNormParams<T> ln2;
  FeedForwardParams<T> ffn;
  LayerNormParams<T> ln3;

  std::vector<Param<T>*> params() {
    return {&fwd.wx, &fwd.wh, &fwd.b, &bwd.wx, &bwd.wh, &bwd.b, &proj_w, &proj_b, &ln1.gain, &ln1.shift,
            &att.wq, &att.wk, &att.wv, &att.bq, &att.bk, &att.bv, &ln2.gain, &ln2.shift,
            &ffn.w1, &ffn.b1, &ffn.w2, &ffn.b2, &ln3.gain, &ln3.shift};
  }
};

template <class T>
struct EncoderLayerCache {
  Mat<T> x, h, p, y1, y2;
  BiLstmCache<T> lstm;
  DropoutCache<T> drop1, drop2, drop3;
  LayerNormCache<T> ln1, ln2, ln3;
  AttentionCache<T> att;
  FeedForwardCache<T> ffn;
};

/// The cache must stay at a fixed address between forward and backward.
template <class T>
Mat<T> encoder_layer_forward(const EncoderLayer<T>& layer, const Mat<T>& x, const SeqLayout& l, double dropout,
                             std::mt19937_64& rng, bool training, EncoderLayerCache<T>& c) {
  c.x = x;
  c.h = bilstm_forward(c.x, l, layer.fwd, layer.bwd, c.lstm);
  c.p = linear_forward(c.h, layer.proj_w, layer.proj_b);
  Mat<T> a = c.x + dropout_forward(c.p, dropout, rng, training, c.drop1);
  c.y1 = layer_norm_forward(a, layer.ln1, c.ln1);
  a = c.y1 + dropout_forward(attention_forward(c.y1, l, layer.att, c.att), dropout, rng, training, c.drop2);
  c.y2 = layer_norm_forward(a, layer.ln2, c.ln2);
  a = c.y2 + dropout_forward(feed_forward_forward(c.y2, layer.ffn, c.ffn), dropout, rng, training, c.drop3);
  return layer_norm_forward(a, layer.ln3, c.ln3);
}

template <class T>
Mat<T> encoder_layer_backward(EncoderLayer<T>& layer, const Mat<T>& dy, const SeqLayout& l, EncoderLayerCache<T>& c) {
  Mat<T> da = layer_norm_backward(dy, layer.ln3, c.ln3);
  Mat<T> d_y2 = da + feed_forward_backward(dropout_backward(da, c.drop3), layer.ffn, c.ffn);
  da = layer_norm_backward(d_y2, layer.ln2, c.ln2);
  Mat<T> d_y1 = da + attention_backward(dropout_backward(da, c.drop2), layer.att, c.att);
  da = layer_norm_backward(d_y1, layer.ln1, c.ln1);
  Mat<T> dh = linear_backward(c.h, dropout_backward(da, c.drop1), layer.proj_w, layer.proj_b);
  return da + bilstm_backward(dh, l, layer.fwd, layer.bwd, c.lstm);
}

template <class T>
struct CLNNModel {
  CLNNConfig config;
  std::size_t vocab_size = 0;
  std::uint64_t vocab_hash = 0;
  Param<T> embedding;  // s x d, characters and words
  std::vector<EncoderLayer<T>> layers;
  Param<T> out_w;  // d x s
  Param<T> out_b;  // 1 x s

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> ps{&embedding};
    for (auto& l : layers)
      for (auto* p : l.params()) ps.push_back(p);
    ps.push_back(&out_w);
    ps.push_back(&out_b);
    return ps;
  }
  std::vector<const Param<T>*> params() const {
    auto ps = const_cast<CLNNModel*>(this)->params();
    return {ps.begin(), ps.end()};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto* p : params()) n += static_cast<std::size_t>(p->size());
    return n;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  template <class U>
  CLNNModel<U> cast() const {
    CLNNModel<U> m;
    m.config = config;
    m.vocab_size = vocab_size;
    m.vocab_hash = vocab_hash;
    m.layers.resize(layers.size());
    auto src = params();
    auto dst = m.params();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    return m;
  }
};

namespace detail {

template <class T>
void xavier(Param<T>& p, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(p.rows() + p.cols()));
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.value.data()[i] = static_cast<T>(u(rng));
}

template <class T>
void init_lstm(LstmParams<T>& p, const std::string& name, Eigen::Index in, Eigen::Index u, std::mt19937_64& rng) {
  p.wx = Param<T>(name + ".wx", in, 4 * u);
  p.wh = Param<T>(name + ".wh", u, 4 * u);
  p.b = Param<T>(name + ".b", 1, 4 * u);
  xavier(p.wx, rng);
  xavier(p.wh, rng);
  p.b.value.block(0, u, 1, u).setConstant(T(1));  // forget gate
}

template <class T>
void init_norm(LayerNormParams<T>& p, const std::string& name, Eigen::Index d) {
  p.gain = Param<T>(name + ".gain", 1, d);
  p.shift = Param<T>(name + ".shift", 1, d);
  p.gain.value.setOnes();
}

}  // namespace detail

/// Deterministic under config.seed.
template <class T>
CLNNModel<T> init_model(const CLNNConfig& config, const Vocabulary& vocab) {
  config.validate();
  CLNNModel<T> m;
  m.config = config;
  m.vocab_size = vocab.size();
  m.vocab_hash = vocab.hash();
  const auto d = static_cast<Eigen::Index>(config.d);
  const auto u = static_cast<Eigen::Index>(config.hidden());
  const auto s = static_cast<Eigen::Index>(vocab.size());
  const auto hid = d * static_cast<Eigen::Index>(config.expand);
  std::mt19937_64 rng(config.seed);

  m.embedding = Param<T>("embedding", s, d);
  std::uniform_real_distribution<double> emb(-0.1, 0.1);
  for (Eigen::Index i = 0; i < m.embedding.size(); ++i) m.embedding.value.data()[i] = static_cast<T>(emb(rng));

  m.layers.resize(config.layers);
  for (std::size_t li = 0; li < config.layers; ++li) {
    auto& L = m.layers[li];
    const std::string n = "layer" + std::to_string(li);
    detail::init_lstm(L.fwd, n + ".lstm_fwd", d, u, rng);
    detail::init_lstm(L.bwd, n + ".lstm_bwd", d, u, rng);
    L.proj_w = Param<T>(n + ".proj.w", 2 * u, d);
    L.proj_b = Param<T>(n + ".proj.b", 1, d);
    detail::xavier(L.proj_w, rng);
    detail::init_norm(L.ln1, n + ".ln1", d);
    L.att.wq = Param<T>(n + ".att.wq", d, d);
    L.att.wk = Param<T>(n + ".att.wk", d, d);
    L.att.wv = Param<T>(n + ".att.wv", d, d);
    L.att.bq = Param<T>(n + ".att.bq", 1, d);
    L.att.bk = Param<T>(n + ".att.bk", 1, d);
    L.att.bv = Param<T>(n + ".att.bv", 1, d);
    detail::xavier(L.att.wq, rng);
    detail::xavier(L.att.wk, rng);
    detail::xavier(L.att.wv, rng);
    detail::init_norm(L.ln2, n + ".ln2", d);
    L.ffn.w1 = Param<T>(n + ".ffn.w1", d, hid);
    L.ffn.b1 = Param<T>(n + ".ffn.b1", 1, hid);
    L.ffn.w2 = Param<T>(n + ".ffn.w2", hid, d);
    L.ffn.b2 = Param<T>(n + ".ffn.b2", 1, d);
    detail::xavier(L.ffn.w1, rng);
    detail::xavier(L.ffn.w2, rng);
    detail::init_norm(L.ln3, n + ".ln3", d);
  }
  m.out_w = Param<T>("output.w", d, s);
  m.out_b = Param<T>("output.b", 1, s);
  detail::xavier(m.out_w, rng);
  return m;
}

// ---------------------------------------------------------------------------
// Forward / backward over a stacked batch

template <class T>
struct ForwardState {
  SeqLayout layout;
  std::vector<TokenId> ids;
  std::vector<EncoderLayerCache<T>> caches;
  Mat<T> hidden;  // rows x d, final layer output
};

template <class T>
void encode(const CLNNModel<T>& m, const std::vector<TokenId>& ids, const SeqLayout& layout, bool training,
            std::mt19937_64& rng, ForwardState<T>& st) {
  require_shape(ids.size() == layout.rows(), "token ids vs layout");
  st.layout = layout;
  st.ids = ids;
  const auto d = static_cast<Eigen::Index>(m.config.d);
  const Mat<T> pe = positional_encoding<T>(std::max<std::size_t>(layout.width, 1), m.config.d);
  Mat<T> x(static_cast<Eigen::Index>(layout.rows()), d);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    for (std::size_t t = 0; t < layout.width; ++t) {
      const auto r = b * layout.width + t;
      if (ids[r] >= m.vocab_size) throw ShapeError("token id " + std::to_string(ids[r]) + " outside the vocabulary");
      x.row(static_cast<Eigen::Index>(r)) = m.embedding.value.row(ids[r]) + pe.row(static_cast<Eigen::Index>(t));
    }
  }
  st.caches.clear();
  st.caches.resize(m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i)
    x = encoder_layer_forward(m.layers[i], x, layout, m.config.dropout, rng, training, st.caches[i]);
  st.hidden = std::move(x);
}

/// Backpropagates d(loss)/d(hidden) to every parameter, including the
/// embedding rows of valid positions.
template <class T>
void backward(CLNNModel<T>& m, ForwardState<T>& st, const Mat<T>& dhidden) {
  Mat<T> g = dhidden;
  for (std::size_t i = m.layers.size(); i-- > 0;) g = encoder_layer_backward(m.layers[i], g, st.layout, st.caches[i]);
  for (std::size_t r = 0; r < st.layout.rows(); ++r)
    if (st.layout.mask[r]) m.embedding.grad.row(st.ids[r]) += g.row(static_cast<Eigen::Index>(r));
}

template <class T>
Mat<T> project_logits(const CLNNModel<T>& m, const Mat<T>& hidden) {
  return linear_forward(hidden, m.out_w, m.out_b);
}

/// Eval-mode logits for one sentence of character ids: n x s.
template <class T>
Mat<T> sentence_logits(const CLNNModel<T>& m, const std::vector<TokenId>& ids) {
  if (ids.empty()) throw ShapeError("cannot run the encoder on an empty sentence");
  std::mt19937_64 rng(0);
  ForwardState<T> st;
  encode(m, ids, SeqLayout::single(ids.size()), false, rng, st);
  Mat<T> logits = project_logits(m, st.hidden);
  require_finite(logits, "logits");
  return logits;
}

/// Eval- or train-mode logits for a whole batch: (B*T) x s, padded rows included.
template <class T>
Mat<T> forward(const CLNNModel<T>& m, const Batch& batch, bool training, std::mt19937_64& rng) {
  ForwardState<T> st;
  encode(m, batch.ids, SeqLayout::from_lengths(batch.lengths, batch.width), training, rng, st);
  return project_logits(m, st.hidden);
}

/// Masked mean cross-entropy of a batch; when `accumulate` is set, gradients
/// are added into the model's parameters. Logits are only formed for valid rows.
template <class T>
double batch_loss(CLNNModel<T>& m, const Batch& batch, bool training, std::mt19937_64& rng, bool accumulate) {
  ForwardState<T> st;
  encode(m, batch.ids, SeqLayout::from_lengths(batch.lengths, batch.width), training, rng, st);
  std::vector<Eigen::Index> rows;
  std::vector<TokenId> classes;
  for (std::size_t r = 0; r < batch.mask.size(); ++r) {
    if (batch.mask[r]) {
      rows.push_back(static_cast<Eigen::Index>(r));
      classes.push_back(batch.labels[r]);
    }
  }
  Mat<T> hv = st.hidden(rows, Eigen::all);
  Mat<T> logits = project_logits(m, hv);
  auto ce = softmax_cross_entropy(logits, classes, std::vector<std::uint8_t>(classes.size(), 1));
  if (!std::isfinite(ce.loss)) throw NumericError("loss became non-finite");
  if (accumulate) {
    Mat<T> dhv = linear_backward(hv, ce.grad, m.out_w, m.out_b);
    Mat<T> dh = Mat<T>::Zero(st.hidden.rows(), st.hidden.cols());
    dh(rows, Eigen::all) = dhv;
    backward(m, st, dh);
  }
  return ce.loss;
}

}  // namespace clnn
