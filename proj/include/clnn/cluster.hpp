#pragma once

// K-Means (k-means++ seeding, Lloyd iterations, Hartigan single-point
// refinement, best of several restarts) and diagonal-covariance Gaussian
// mixture EM initialised from K-Means.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "clnn/error.hpp"
#include "clnn/tensor.hpp"

namespace clnn {

using Points = Mat<double>;  // one point per row

struct ClusterAssignment {
  std::vector<std::size_t> labels;  // per point, in [0, k)
  std::size_t k = 0;
  Points means;      // k x dim
  Points variances;  // k x dim (GMM only)
  std::vector<double> weights;  // GMM only, sums to 1
  double inertia = 0.0;
  // K-Means: inertia after every iteration of the winning restart.
  // GMM: log-likelihood at every E-step.
  std::vector<double> trace;
};

struct KMeansOptions {
  std::size_t restarts = 5;
  std::size_t max_iter = 100;
};

struct GmmOptions {
  std::size_t max_iter = 200;
  double tol = 1e-6;
  double var_floor = 1e-6;
};

inline std::size_t count_distinct_points(const Points& x) {
  std::vector<Eigen::Index> reps;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    bool seen = false;
    for (auto r : reps)
      if (x.row(r) == x.row(i)) {
        seen = true;
        break;
      }
    if (!seen) reps.push_back(i);
  }
  return reps.size();
}

/// Sum of squared distances to each cluster's mean.
inline double partition_inertia(const Points& x, const std::vector<std::size_t>& labels, std::size_t k) {
  Points sums = Points::Zero(static_cast<Eigen::Index>(k), x.cols());
  std::vector<double> counts(k, 0.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    sums.row(static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])) += x.row(i);
    counts[labels[static_cast<std::size_t>(i)]] += 1.0;
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto c = labels[static_cast<std::size_t>(i)];
    total += (x.row(i) - sums.row(static_cast<Eigen::Index>(c)) / counts[c]).squaredNorm();
  }
  return total;
}

namespace detail {

inline std::size_t clamp_k(const Points& x, std::size_t k) {
  if (x.rows() == 0) throw ShapeError("cannot cluster zero points");
  if (k == 0) throw ConfigError("cluster count must be at least 1");
  return std::min(k, count_distinct_points(x));
}

struct KMeansRun {
  std::vector<std::size_t> labels;
  Points centers;
  double inertia = 0.0;
  std::vector<double> trace;
};

inline double current_inertia(const Points& x, const std::vector<std::size_t>& labels, const Points& centers) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    s += (x.row(i) - centers.row(static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]))).squaredNorm();
  return s;
}

inline Points kmeans_pp_seed(const Points& x, std::size_t k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  Points centers(static_cast<Eigen::Index>(k), x.cols());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centers.row(0) = x.row(static_cast<Eigen::Index>(pick(rng)));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
      total += d2[i];
    }
    // k never exceeds the distinct-point count, so total > 0.
    double target = unit(rng) * total;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      chosen = i;
      target -= d2[i];
      if (target < 0.0) break;
    }
    centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(chosen));
  }
  return centers;
}

inline void recompute_centers(const Points& x, const std::vector<std::size_t>& labels, Points& centers,
                              std::vector<std::size_t>& sizes) {
  const auto k = static_cast<std::size_t>(centers.rows());
  Points sums = Points::Zero(centers.rows(), x.cols());
  sizes.assign(k, 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto c = labels[static_cast<std::size_t>(i)];
    sums.row(static_cast<Eigen::Index>(c)) += x.row(i);
    ++sizes[c];
  }
  for (std::size_t c = 0; c < k; ++c)
    if (sizes[c] > 0) centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(sizes[c]);
}

// Moves single points between clusters while that strictly lowers inertia.
inline bool hartigan_pass(const Points& x, std::vector<std::size_t>& labels, Points& centers, std::vector<std::size_t>& sizes) {
  bool moved = false;
  const auto k = static_cast<std::size_t>(centers.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto a = labels[static_cast<std::size_t>(i)];
    if (sizes[a] <= 1) continue;
    const double na = static_cast<double>(sizes[a]);
    const double cost_out = na / (na - 1.0) * (x.row(i) - centers.row(static_cast<Eigen::Index>(a))).squaredNorm();
    double best_delta = -1e-12;
    std::size_t best = a;
    for (std::size_t b = 0; b < k; ++b) {
      if (b == a) continue;
      const double nb = static_cast<double>(sizes[b]);
      const double delta = nb / (nb + 1.0) * (x.row(i) - centers.row(static_cast<Eigen::Index>(b))).squaredNorm() - cost_out;
      if (delta < best_delta) best_delta = delta, best = b;
    }
    if (best != a) {
      labels[static_cast<std::size_t>(i)] = best;
      recompute_centers(x, labels, centers, sizes);
      moved = true;
    }
  }
  return moved;
}

inline KMeansRun kmeans_once(const Points& x, std::size_t k, std::mt19937_64& rng, std::size_t max_iter) {
  const auto n = static_cast<std::size_t>(x.rows());
  KMeansRun run;
  run.centers = kmeans_pp_seed(x, k, rng);
  run.labels.assign(n, 0);
  std::vector<std::size_t> sizes;
  bool first = true;
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = first;
    first = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = (x.row(static_cast<Eigen::Index>(i)) - run.centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
        if (dd < bd) bd = dd, best = c;
      }
      if (run.labels[i] != best) changed = true;
      run.labels[i] = best;
    }
    recompute_centers(x, run.labels, run.centers, sizes);
    // Empty cluster: re-seed it with the point farthest from its own centre.
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[run.labels[i]] <= 1) continue;
        const double dd = (x.row(static_cast<Eigen::Index>(i)) - run.centers.row(static_cast<Eigen::Index>(run.labels[i]))).squaredNorm();
        if (dd > fd) fd = dd, far = i;
      }
      run.labels[far] = c;
      recompute_centers(x, run.labels, run.centers, sizes);
      changed = true;
    }
    run.trace.push_back(current_inertia(x, run.labels, run.centers));
    if (!changed) break;
  }
  recompute_centers(x, run.labels, run.centers, sizes);
  while (hartigan_pass(x, run.labels, run.centers, sizes)) run.trace.push_back(current_inertia(x, run.labels, run.centers));
  run.inertia = partition_inertia(x, run.labels, k);
  return run;
}

}  // namespace detail

/// Best-of-restarts K-Means. k is clamped to the number of distinct points.
inline ClusterAssignment kmeans(const Points& x, std::size_t k, std::uint64_t seed, const KMeansOptions& opt = {}) {
  k = detail::clamp_k(x, k);
  std::mt19937_64 rng(seed);
  detail::KMeansRun best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(opt.restarts, 1); ++r) {
    auto run = detail::kmeans_once(x, k, rng, std::max<std::size_t>(opt.max_iter, 1));
    if (run.inertia < best.inertia) best = std::move(run);
  }
  ClusterAssignment a;
  a.labels = std::move(best.labels);
  a.k = k;
  a.means = std::move(best.centers);
  a.inertia = best.inertia;
  a.trace = std::move(best.trace);
  return a;
}

namespace detail {

inline double log_sum_exp(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

// Drops unused clusters and renumbers by first appearance.
inline void compact(ClusterAssignment& a) {
  std::vector<std::size_t> remap(a.k, a.k);
  std::size_t next = 0;
  for (auto& l : a.labels) {
    if (remap[l] == a.k) remap[l] = next++;
    l = remap[l];
  }
  if (next == a.k && std::is_sorted(remap.begin(), remap.end())) return;
  Points means(static_cast<Eigen::Index>(next), a.means.cols());
  Points vars(a.variances.size() ? static_cast<Eigen::Index>(next) : 0, a.variances.cols());
  std::vector<double> w(a.weights.empty() ? 0 : next);
  for (std::size_t c = 0; c < a.k; ++c) {
    if (remap[c] == a.k) continue;
    const auto r = static_cast<Eigen::Index>(remap[c]);
    means.row(r) = a.means.row(static_cast<Eigen::Index>(c));
    if (vars.rows()) vars.row(r) = a.variances.row(static_cast<Eigen::Index>(c));
    if (!w.empty()) w[remap[c]] = a.weights[c];
  }
  if (!w.empty()) {
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= s;
  }
  a.k = next;
  a.means = std::move(means);
  a.variances = std::move(vars);
  a.weights = std::move(w);
}

}  // namespace detail

/// Diagonal-covariance EM. Initialised from one K-Means run; stops when the
/// log-likelihood gain drops below tol. Points go to their most responsible
/// component.
inline ClusterAssignment gmm_em(const Points& x, std::size_t k, std::uint64_t seed, const GmmOptions& opt = {}) {
  k = detail::clamp_k(x, k);
  const auto n = x.rows();
  const auto dim = x.cols();
  const auto K = static_cast<Eigen::Index>(k);
  auto init = kmeans(x, k, seed, {1, 100});

  Points mu = init.means;
  Points var(K, dim);
  Eigen::VectorXd w(K);
  {
    Points sq = Points::Zero(K, dim);
    std::vector<double> cnt(k, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(init.labels[static_cast<std::size_t>(i)]);
      sq.row(c) += (x.row(i) - mu.row(c)).cwiseAbs2();
      cnt[static_cast<std::size_t>(c)] += 1.0;
    }
    for (Eigen::Index c = 0; c < K; ++c) {
      var.row(c) = (sq.row(c) / cnt[static_cast<std::size_t>(c)]).cwiseMax(opt.var_floor);
      w(c) = cnt[static_cast<std::size_t>(c)] / static_cast<double>(n);
    }
  }

  ClusterAssignment a;
  Points resp(n, K);
  constexpr double kLog2Pi = 1.8378770664093454836;
  for (std::size_t it = 0;; ++it) {
    // E-step
    double ll = 0.0;
    Eigen::VectorXd lp(K);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < K; ++c) {
        const double quad = ((x.row(i) - mu.row(c)).cwiseAbs2().array() / var.row(c).array()).sum();
        const double logdet = (var.row(c).array().log() + kLog2Pi).sum();
        lp(c) = std::log(w(c)) - 0.5 * (logdet + quad);
      }
      const double lse = detail::log_sum_exp(lp);
      ll += lse;
      resp.row(i) = (lp.array() - lse).exp().matrix().transpose();
    }
    const bool converged = !a.trace.empty() && ll - a.trace.back() < opt.tol;
    a.trace.push_back(ll);
    if (converged || it >= opt.max_iter) break;
    // M-step
    for (Eigen::Index c = 0; c < K; ++c) {
      const double nc = resp.col(c).sum();
      w(c) = nc / static_cast<double>(n);
      if (nc < 1e-300) continue;
      mu.row(c) = (resp.col(c).transpose() * x) / nc;
      Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(dim);
      for (Eigen::Index i = 0; i < n; ++i) s += resp(i, c) * (x.row(i) - mu.row(c)).cwiseAbs2();
      var.row(c) = (s / nc).cwiseMax(opt.var_floor);
    }
  }

  a.k = k;
  a.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best;
    resp.row(i).maxCoeff(&best);
    a.labels[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  a.means = mu;
  a.variances = var;
  a.weights.assign(w.data(), w.data() + K);
  const double ws = std::accumulate(a.weights.begin(), a.weights.end(), 0.0);
  for (auto& v : a.weights) v /= ws;
  detail::compact(a);
  a.inertia = partition_inertia(x, a.labels, a.k);
  return a;
}

}  // namespace clnn
