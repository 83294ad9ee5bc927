#pragma once

// Differentiable operators of the encoder. Each operator has a forward that
// fills a cache and a backward that consumes it, returns the input gradient and
// accumulates parameter gradients into Param::grad.

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "clnn/tensor.hpp"

namespace clnn {

// ---------------------------------------------------------------------------
// Positional encoding

template <class T>
Mat<T> positional_encoding(std::size_t n, std::size_t d) {
  if (d == 0 || d % 2 != 0) throw ConfigError("positional encoding needs an even, positive dimension");
  if (n == 0) throw ConfigError("positional encoding needs n >= 1");
  Mat<T> pe(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
      pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(2 * i)) = static_cast<T>(std::sin(angle));
      pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(2 * i + 1)) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// Linear: out = x W + b

template <class T>
Mat<T> linear_forward(const Mat<T>& x, const Param<T>& w, const Param<T>& b) {
  require_shape(x.cols() == w.rows() && b.rows() == 1 && b.cols() == w.cols(), "linear " + w.name);
  Mat<T> out = x * w.value;
  out.rowwise() += b.value.row(0);
  return out;
}

template <class T>
Mat<T> linear_backward(const Mat<T>& x, const Mat<T>& dout, Param<T>& w, Param<T>& b) {
  require_shape(dout.rows() == x.rows() && dout.cols() == w.cols(), "linear backward " + w.name);
  w.grad.noalias() += x.transpose() * dout;
  b.grad.row(0) += dout.colwise().sum();
  return dout * w.value.transpose();
}

// ---------------------------------------------------------------------------
// LSTM

/// Gate blocks are laid out [input | forget | candidate | output].
template <class T>
struct LstmParams {
  Param<T> wx;  // d x 4u
  Param<T> wh;  // u x 4u
  Param<T> b;   // 1 x 4u

  Eigen::Index hidden() const { return wh.rows(); }
  Eigen::Index input() const { return wx.rows(); }
};

template <class T>
struct LstmStep {
  Mat<T> gates;   // activated i, f, g, o
  Mat<T> c;
  Mat<T> tanh_c;
  Mat<T> h;
};

namespace detail {
template <class T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}
}  // namespace detail

/// One step from pre-activations z = x Wx + b (rows are independent sequences).
template <class T>
LstmStep<T> lstm_step_forward(const Mat<T>& z_in, const Mat<T>& h_prev, const Mat<T>& c_prev, const LstmParams<T>& p) {
  const auto u = p.hidden();
  require_shape(z_in.cols() == 4 * u && h_prev.cols() == u && c_prev.cols() == u && h_prev.rows() == z_in.rows() &&
                    c_prev.rows() == z_in.rows(),
                "lstm step");
  LstmStep<T> s;
  s.gates = z_in;
  s.gates.noalias() += h_prev * p.wh.value;
  auto& g = s.gates;
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    for (Eigen::Index j = 0; j < u; ++j) {
      g(r, j) = detail::sigmoid(g(r, j));
      g(r, u + j) = detail::sigmoid(g(r, u + j));
      g(r, 2 * u + j) = std::tanh(g(r, 2 * u + j));
      g(r, 3 * u + j) = detail::sigmoid(g(r, 3 * u + j));
    }
  }
  s.c = g.middleCols(u, u).cwiseProduct(c_prev) + g.leftCols(u).cwiseProduct(g.middleCols(2 * u, u));
  s.tanh_c = s.c.array().tanh().matrix();
  s.h = g.rightCols(u).cwiseProduct(s.tanh_c);
  return s;
}

/// Returns dz (gradient w.r.t. pre-activations); writes dh_prev/dc_prev and
/// accumulates dWh. dWx and db are left to the caller, which owns x.
template <class T>
Mat<T> lstm_step_backward(const LstmStep<T>& s, const Mat<T>& h_prev, const Mat<T>& c_prev, const Mat<T>& dh,
                          const Mat<T>& dc_next, LstmParams<T>& p, Mat<T>& dh_prev, Mat<T>& dc_prev) {
  const auto u = p.hidden();
  const auto& g = s.gates;
  Mat<T> dz(g.rows(), 4 * u);
  dc_prev.resize(g.rows(), u);
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    for (Eigen::Index j = 0; j < u; ++j) {
      const T i = g(r, j), f = g(r, u + j), cand = g(r, 2 * u + j), o = g(r, 3 * u + j);
      const T tc = s.tanh_c(r, j);
      const T dcell = dc_next(r, j) + dh(r, j) * o * (T(1) - tc * tc);
      dz(r, j) = dcell * cand * i * (T(1) - i);
      dz(r, u + j) = dcell * c_prev(r, j) * f * (T(1) - f);
      dz(r, 2 * u + j) = dcell * i * (T(1) - cand * cand);
      dz(r, 3 * u + j) = dh(r, j) * tc * o * (T(1) - o);
      dc_prev(r, j) = dcell * f;
    }
  }
  p.wh.grad.noalias() += h_prev.transpose() * dz;
  dh_prev = dz * p.wh.value.transpose();
  return dz;
}

template <class T>
struct LstmCellResult {
  Mat<T> h;
  Mat<T> c;
  LstmStep<T> step;
};

/// Single cell application on row vectors (or a stack of independent rows).
template <class T>
LstmCellResult<T> lstm_cell(const Mat<T>& x, const Mat<T>& h_prev, const Mat<T>& c_prev, const LstmParams<T>& p) {
  require_shape(x.cols() == p.input(), "lstm cell input");
  Mat<T> z = x * p.wx.value;
  z.rowwise() += p.b.value.row(0);
  auto s = lstm_step_forward(z, h_prev, c_prev, p);
  return {s.h, s.c, s};
}

template <class T>
struct LstmCellGrads {
  Mat<T> dx, dh_prev, dc_prev;
};

template <class T>
LstmCellGrads<T> lstm_cell_backward(const Mat<T>& x, const Mat<T>& h_prev, const Mat<T>& c_prev,
                                    const LstmStep<T>& s, const Mat<T>& dh, const Mat<T>& dc, LstmParams<T>& p) {
  LstmCellGrads<T> g;
  Mat<T> dz = lstm_step_backward(s, h_prev, c_prev, dh, dc, p, g.dh_prev, g.dc_prev);
  p.wx.grad.noalias() += x.transpose() * dz;
  p.b.grad.row(0) += dz.colwise().sum();
  g.dx = dz * p.wx.value.transpose();
  return g;
}

// ---------------------------------------------------------------------------
// Bidirectional LSTM over a stacked batch. Masked steps carry the previous
// state through unchanged and emit zeros.

template <class T>
struct LstmDirCache {
  std::vector<LstmStep<T>> steps;  // indexed by time t
};

template <class T>
struct BiLstmCache {
  const Mat<T>* x = nullptr;
  LstmDirCache<T> fwd, bwd;
};

namespace detail {

template <class T>
Mat<T> gather_step(const Mat<T>& m, const SeqLayout& l, std::size_t t) {
  Mat<T> out(static_cast<Eigen::Index>(l.batch), m.cols());
  for (std::size_t b = 0; b < l.batch; ++b) out.row(static_cast<Eigen::Index>(b)) = m.row(static_cast<Eigen::Index>(b * l.width + t));
  return out;
}

template <class T>
void run_direction(const Mat<T>& z_all, const SeqLayout& l, const LstmParams<T>& p, bool reverse,
                   LstmDirCache<T>& cache, Mat<T>& out, Eigen::Index col0) {
  const auto u = p.hidden();
  const auto B = static_cast<Eigen::Index>(l.batch);
  Mat<T> h = Mat<T>::Zero(B, u), c = Mat<T>::Zero(B, u);
  cache.steps.assign(l.width, {});
  for (std::size_t k = 0; k < l.width; ++k) {
    const std::size_t t = reverse ? l.width - 1 - k : k;
    auto s = lstm_step_forward(gather_step(z_all, l, t), h, c, p);
    for (std::size_t b = 0; b < l.batch; ++b) {
      const auto r = static_cast<Eigen::Index>(b);
      const auto row = static_cast<Eigen::Index>(b * l.width + t);
      if (l.valid(b, t)) {
        out.block(row, col0, 1, u) = s.h.row(r);
      } else {
        s.c.row(r) = c.row(r);
        s.h.row(r) = h.row(r);
        out.block(row, col0, 1, u).setZero();
      }
    }
    h = s.h;
    c = s.c;
    cache.steps[t] = std::move(s);
  }
}

template <class T>
void back_direction(const Mat<T>& dout, const SeqLayout& l, LstmParams<T>& p, bool reverse,
                    const LstmDirCache<T>& cache, Mat<T>& dz_all, Eigen::Index col0) {
  const auto u = p.hidden();
  const auto B = static_cast<Eigen::Index>(l.batch);
  Mat<T> dh = Mat<T>::Zero(B, u), dc = Mat<T>::Zero(B, u);
  const Mat<T> zero = Mat<T>::Zero(B, u);
  for (std::size_t k = l.width; k-- > 0;) {
    const std::size_t t = reverse ? l.width - 1 - k : k;
    const bool first = (k == 0);
    const std::size_t tp = reverse ? t + 1 : t - 1;  // previous time in processing order
    const Mat<T>& h_prev = first ? zero : cache.steps[tp].h;
    const Mat<T>& c_prev = first ? zero : cache.steps[tp].c;
    Mat<T> dh_step = dh;
    for (std::size_t b = 0; b < l.batch; ++b)
      if (l.valid(b, t)) dh_step.row(static_cast<Eigen::Index>(b)) += dout.block(static_cast<Eigen::Index>(b * l.width + t), col0, 1, u);
    // Masked rows pass their state gradient straight through.
    Mat<T> dh_in = dh_step, dc_in = dc;
    for (std::size_t b = 0; b < l.batch; ++b)
      if (!l.valid(b, t)) dh_in.row(static_cast<Eigen::Index>(b)).setZero(), dc_in.row(static_cast<Eigen::Index>(b)).setZero();
    Mat<T> dh_prev, dc_prev;
    Mat<T> dz = lstm_step_backward(cache.steps[t], h_prev, c_prev, dh_in, dc_in, p, dh_prev, dc_prev);
    for (std::size_t b = 0; b < l.batch; ++b) {
      const auto r = static_cast<Eigen::Index>(b);
      if (!l.valid(b, t)) {
        dh_prev.row(r) = dh_step.row(r);
        dc_prev.row(r) = dc.row(r);
      }
      dz_all.row(static_cast<Eigen::Index>(b * l.width + t)) = dz.row(r);
    }
    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }
}

}  // namespace detail

template <class T>
Mat<T> bilstm_forward(const Mat<T>& x, const SeqLayout& l, const LstmParams<T>& fwd, const LstmParams<T>& bwd,
                      BiLstmCache<T>& cache) {
  require_shape(static_cast<std::size_t>(x.rows()) == l.rows() && x.cols() == fwd.input() && x.cols() == bwd.input() &&
                    fwd.hidden() == bwd.hidden(),
                "bilstm");
  if (l.width == 0) throw ShapeError("bilstm needs at least one time step");
  const auto u = fwd.hidden();
  Mat<T> out(x.rows(), 2 * u);
  cache.x = &x;
  Mat<T> zf = x * fwd.wx.value;
  zf.rowwise() += fwd.b.value.row(0);
  detail::run_direction(zf, l, fwd, false, cache.fwd, out, 0);
  Mat<T> zb = x * bwd.wx.value;
  zb.rowwise() += bwd.b.value.row(0);
  detail::run_direction(zb, l, bwd, true, cache.bwd, out, u);
  return out;
}

template <class T>
Mat<T> bilstm_backward(const Mat<T>& dout, const SeqLayout& l, LstmParams<T>& fwd, LstmParams<T>& bwd,
                       const BiLstmCache<T>& cache) {
  const auto u = fwd.hidden();
  const Mat<T>& x = *cache.x;
  Mat<T> dzf = Mat<T>::Zero(x.rows(), 4 * u), dzb = Mat<T>::Zero(x.rows(), 4 * u);
  detail::back_direction(dout, l, fwd, false, cache.fwd, dzf, 0);
  detail::back_direction(dout, l, bwd, true, cache.bwd, dzb, u);
  fwd.wx.grad.noalias() += x.transpose() * dzf;
  fwd.b.grad.row(0) += dzf.colwise().sum();
  bwd.wx.grad.noalias() += x.transpose() * dzb;
  bwd.b.grad.row(0) += dzb.colwise().sum();
  Mat<T> dx = dzf * fwd.wx.value.transpose();
  dx.noalias() += dzb * bwd.wx.value.transpose();
  return dx;
}

// ---------------------------------------------------------------------------
// Single-head self-attention, unscaled dot product:
//   alpha_ij = softmax_j(q_i . k_j) over valid j, out_i = sum_j alpha_ij v_j.

template <class T>
struct AttentionParams {
  Param<T> wq, wk, wv;  // d x d
  Param<T> bq, bk, bv;  // 1 x d
};

template <class T>
struct AttentionCache {
  const Mat<T>* x = nullptr;
  Mat<T> q, k, v;
  std::vector<std::vector<Eigen::Index>> valid;  // per sentence, valid row indices
  std::vector<Mat<T>> alpha;                     // per sentence, |valid| x |valid|
};

template <class T>
Mat<T> attention_forward(const Mat<T>& x, const SeqLayout& l, const AttentionParams<T>& p, AttentionCache<T>& cache) {
  require_shape(static_cast<std::size_t>(x.rows()) == l.rows() && x.cols() == p.wq.rows(), "self-attention");
  cache.x = &x;
  cache.q = linear_forward(x, p.wq, p.bq);
  cache.k = linear_forward(x, p.wk, p.bk);
  cache.v = linear_forward(x, p.wv, p.bv);
  cache.valid.assign(l.batch, {});
  cache.alpha.assign(l.batch, {});
  Mat<T> out = Mat<T>::Zero(x.rows(), p.wv.cols());
  for (std::size_t b = 0; b < l.batch; ++b) {
    auto& idx = cache.valid[b];
    for (std::size_t t = 0; t < l.width; ++t)
      if (l.valid(b, t)) idx.push_back(static_cast<Eigen::Index>(b * l.width + t));
    if (idx.empty()) throw ShapeError("self-attention row with zero valid positions");
    const auto n = static_cast<Eigen::Index>(idx.size());
    Mat<T> q = cache.q(idx, Eigen::all), k = cache.k(idx, Eigen::all),
           v = cache.v(idx, Eigen::all);
    Mat<T> a = q * k.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      const T mx = a.row(i).maxCoeff();
      a.row(i) = (a.row(i).array() - mx).exp().matrix();
      a.row(i) /= a.row(i).sum();
    }
    out(idx, Eigen::all) = a * v;
    cache.alpha[b] = std::move(a);
  }
  return out;
}

template <class T>
Mat<T> attention_backward(const Mat<T>& dout, AttentionParams<T>& p, const AttentionCache<T>& cache) {
  const Mat<T>& x = *cache.x;
  Mat<T> dq = Mat<T>::Zero(x.rows(), p.wq.cols()), dk = dq, dv = Mat<T>::Zero(x.rows(), p.wv.cols());
  for (std::size_t b = 0; b < cache.valid.size(); ++b) {
    const auto& idx = cache.valid[b];
    const auto& a = cache.alpha[b];
    Mat<T> q = cache.q(idx, Eigen::all), k = cache.k(idx, Eigen::all),
           v = cache.v(idx, Eigen::all), g = dout(idx, Eigen::all);
    Mat<T> da = g * v.transpose();
    dv(idx, Eigen::all) = a.transpose() * g;
    Mat<T> ds = a.cwiseProduct(da);
    Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = ds.rowwise().sum();
    ds -= a.cwiseProduct(rowdot.replicate(1, a.cols()));
    dq(idx, Eigen::all) = ds * k;
    dk(idx, Eigen::all) = ds.transpose() * q;
  }
  Mat<T> dx = linear_backward(x, dq, p.wq, p.bq);
  dx += linear_backward(x, dk, p.wk, p.bk);
  dx += linear_backward(x, dv, p.wv, p.bv);
  return dx;
}

// ---------------------------------------------------------------------------
// Feed-forward: out = relu(x W1 + b1) W2 + b2, hidden width N*d.

template <class T>
struct FeedForwardParams {
  Param<T> w1, b1, w2, b2;
};

template <class T>
struct FeedForwardCache {
  const Mat<T>* x = nullptr;
  Mat<T> pre;
  Mat<T> hidden;
};

template <class T>
Mat<T> feed_forward_forward(const Mat<T>& x, const FeedForwardParams<T>& p, FeedForwardCache<T>& cache) {
  cache.x = &x;
  cache.pre = linear_forward(x, p.w1, p.b1);
  cache.hidden = cache.pre.cwiseMax(T(0));
  return linear_forward(cache.hidden, p.w2, p.b2);
}

template <class T>
Mat<T> feed_forward_backward(const Mat<T>& dout, FeedForwardParams<T>& p, const FeedForwardCache<T>& cache) {
  Mat<T> dh = linear_backward(cache.hidden, dout, p.w2, p.b2);
  dh = (cache.pre.array() > T(0)).select(dh, T(0));
  return linear_backward(*cache.x, dh, p.w1, p.b1);
}

// ---------------------------------------------------------------------------
// Layer normalization over each row.

inline constexpr double kLayerNormEps = 1e-5;

template <class T>
struct LayerNormParams {
  Param<T> gain, shift;  // 1 x d
};

template <class T>
struct LayerNormCache {
  Mat<T> xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
};

template <class T>
Mat<T> layer_norm_forward(const Mat<T>& x, const LayerNormParams<T>& p, LayerNormCache<T>& cache) {
  require_shape(x.cols() >= 2 && p.gain.cols() == x.cols(), "layer norm");
  const auto n = static_cast<T>(x.cols());
  cache.xhat.resize(x.rows(), x.cols());
  cache.rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mu = x.row(r).sum() / n;
    const T var = (x.row(r).array() - mu).square().sum() / n;
    cache.rstd(r) = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    cache.xhat.row(r) = (x.row(r).array() - mu) * cache.rstd(r);
  }
  Mat<T> y = cache.xhat.array().rowwise() * p.gain.value.row(0).array();
  y.rowwise() += p.shift.value.row(0);
  return y;
}

template <class T>
Mat<T> layer_norm_backward(const Mat<T>& dy, LayerNormParams<T>& p, const LayerNormCache<T>& cache) {
  const auto n = static_cast<T>(dy.cols());
  p.gain.grad.row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
  p.shift.grad.row(0) += dy.colwise().sum();
  Mat<T> dxhat = dy.array().rowwise() * p.gain.value.row(0).array();
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const T mean_d = dxhat.row(r).sum() / n;
    const T mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / n;
    dx.row(r) = cache.rstd(r) * (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Inverted dropout. The cache holds the per-entry scale (0 or 1/(1-p)).

template <class T>
struct DropoutCache {
  Mat<T> scale;  // empty when dropout was the identity
};

template <class T>
Mat<T> dropout_forward(const Mat<T>& x, double rate, std::mt19937_64& rng, bool training, DropoutCache<T>& cache) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  cache.scale.resize(0, 0);
  if (!training || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  cache.scale.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) cache.scale.data()[i] = keep(rng) ? s : T(0);
  return x.cwiseProduct(cache.scale);
}

template <class T>
Mat<T> dropout_backward(const Mat<T>& dy, const DropoutCache<T>& cache) {
  if (cache.scale.size() == 0) return dy;
  return dy.cwiseProduct(cache.scale);
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy, averaged over rows with mask != 0.

template <class T>
struct LossResult {
  double loss = 0.0;
  Mat<T> grad;
  std::size_t count = 0;
};

template <class T, class Ids>
LossResult<T> softmax_cross_entropy(const Mat<T>& logits, const Ids& classes, const std::vector<std::uint8_t>& mask) {
  require_shape(static_cast<std::size_t>(logits.rows()) == classes.size() && mask.size() == classes.size(),
                "cross-entropy");
  LossResult<T> res;
  res.grad = Mat<T>::Zero(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    const auto cls = static_cast<Eigen::Index>(classes[static_cast<std::size_t>(r)]);
    if (cls < 0 || cls >= logits.cols())
      throw ShapeError("class id " + std::to_string(cls) + " out of range for " + std::to_string(logits.cols()) + " logits");
    const T mx = logits.row(r).maxCoeff();
    auto e = (logits.row(r).array() - mx).exp();
    const T sum = e.sum();
    res.loss += static_cast<double>(-(logits(r, cls) - mx) + std::log(sum));
    res.grad.row(r) = e / sum;
    res.grad(r, cls) -= T(1);
    ++res.count;
  }
  if (res.count == 0) throw ShapeError("cross-entropy over zero valid positions");
  res.loss /= static_cast<double>(res.count);
  res.grad /= static_cast<T>(res.count);
  return res;
}

}  // namespace clnn
