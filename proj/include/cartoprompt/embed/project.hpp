#pragma once

// 2D projections of embedding vectors: exact PCA and a UMAP implementation
// (fuzzy simplicial set from a smooth kNN kernel, then SGD layout).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cartoprompt/errors.hpp"

namespace cartoprompt::embed {

using Point2 = std::array<double, 2>;

enum class Method { pca, umap };

struct ProjectionConfig {
  Method method = Method::pca;
  int n_neighbors = 15;
  double min_dist = 0.1;
  double spread = 1.0;
  int epochs = 0;  // 0: 500 for small inputs, 200 above 10000 points
  std::uint64_t seed = 42;
  int negative_sample_rate = 5;

  void validate() const {
    if (n_neighbors < 2) throw ConfigError("n_neighbors must be >= 2");
    if (!(min_dist >= 0.0 && min_dist < spread)) throw ConfigError("min_dist must be in [0, spread)");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (negative_sample_rate < 0) throw ConfigError("negative_sample_rate must be >= 0");
  }
};

inline std::string to_string(Method m) { return m == Method::pca ? "pca" : "umap"; }

inline Method method_from_string(const std::string& s) {
  if (s == "pca") return Method::pca;
  if (s == "umap") return Method::umap;
  throw ConfigError("unknown projection method: " + s);
}

namespace detail {

inline Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != d) throw PreconditionError("vectors differ in dimension");
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace detail

// Top two principal components of the mean-centered data. Each axis is oriented so its
// largest-magnitude loading is positive.
inline std::vector<Point2> pca_2d(const std::vector<std::vector<double>>& vectors) {
  if (vectors.size() < 3) throw PreconditionError("projection needs at least 3 vectors");
  Eigen::MatrixXd x = detail::to_matrix(vectors);
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("eigen decomposition failed");
  const Eigen::Index d = x.cols();
  std::vector<Point2> out(vectors.size(), Point2{0.0, 0.0});
  for (int axis = 0; axis < 2 && axis < d; ++axis) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - axis);  // eigenvalues ascend
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    const Eigen::VectorXd proj = x * v;
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)][axis] = proj(i);
  }
  return out;
}

// Fits 1 / (1 + a d^(2b)) to the target membership curve by Levenberg-Marquardt.
inline std::pair<double, double> fit_ab(double spread, double min_dist) {
  constexpr int kSamples = 300;
  std::vector<double> xs(kSamples), ys(kSamples);
  for (int i = 0; i < kSamples; ++i) {
    xs[i] = 3.0 * spread * i / (kSamples - 1);
    ys[i] = xs[i] < min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
  }
  double a = 1.0, b = 1.0, lambda = 1e-3;
  auto sse = [&](double ta, double tb) {
    double s = 0;
    for (int i = 1; i < kSamples; ++i) {
      const double r = 1.0 / (1.0 + ta * std::pow(xs[i], 2 * tb)) - ys[i];
      s += r * r;
    }
    return s;
  };
  double cost = sse(a, b);
  for (int it = 0; it < 200; ++it) {
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (int i = 1; i < kSamples; ++i) {  // x = 0 contributes nothing
      const double p = std::pow(xs[i], 2 * b);
      const double f = 1.0 / (1.0 + a * p);
      const Eigen::Vector2d g(-p * f * f, -a * p * 2.0 * std::log(xs[i]) * f * f);
      jtj += g * g.transpose();
      jtr += g * (f - ys[i]);
    }
    bool improved = false;
    for (int tries = 0; tries < 20 && !improved; ++tries) {
      Eigen::Matrix2d m = jtj;
      m.diagonal() *= 1.0 + lambda;
      const Eigen::Vector2d step = m.ldlt().solve(-jtr);
      const double na = a + step(0), nb = b + step(1);
      const double nc = (na > 0 && nb > 0) ? sse(na, nb) : INFINITY;
      if (nc < cost) {
        improved = true;
        const bool done = cost - nc < 1e-15 * std::max(1.0, cost);
        a = na;
        b = nb;
        cost = nc;
        lambda = std::max(lambda / 10.0, 1e-12);
        if (done) return {a, b};
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  return {a, b};
}

namespace detail {

struct Graph {
  std::vector<std::size_t> head, tail;
  std::vector<double> weight;
};

inline double sq_dist(const Eigen::MatrixXd& x, Eigen::Index i, Eigen::Index j) {
  return (x.row(i) - x.row(j)).squaredNorm();
}

// Symmetrised fuzzy simplicial set over exact k nearest neighbours.
inline Graph fuzzy_graph(const Eigen::MatrixXd& x, int k) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::vector<std::pair<double, std::size_t>>> knn(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d.emplace_back(std::sqrt(sq_dist(x, Eigen::Index(i), Eigen::Index(j))), j);
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    d.resize(static_cast<std::size_t>(k));
    knn[i] = std::move(d);
  }

  double mean_all = 0;
  for (const auto& row : knn)
    for (const auto& [dist, _] : row) mean_all += dist;
  mean_all /= static_cast<double>(n * static_cast<std::size_t>(k));

  const double target = std::log2(static_cast<double>(k));
  std::vector<std::vector<double>> w(n, std::vector<double>(static_cast<std::size_t>(k)));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = knn[i];
    double rho = 0.0;
    for (const auto& [dist, _] : row)
      if (dist > 0.0) {
        rho = dist;
        break;
      }
    double lo = 0.0, hi = INFINITY, sigma = 1.0;
    for (int it = 0; it < 64; ++it) {
      double s = 0.0;
      for (const auto& [dist, _] : row) {
        const double dd = dist - rho;
        s += dd > 0 ? std::exp(-dd / sigma) : 1.0;
      }
      if (std::abs(s - target) < 1e-5) break;
      if (s > target) {
        hi = sigma;
        sigma = (lo + hi) / 2.0;
      } else {
        lo = sigma;
        sigma = std::isinf(hi) ? sigma * 2.0 : (lo + hi) / 2.0;
      }
    }
    double mean_row = 0;
    for (const auto& [dist, _] : row) mean_row += dist;
    mean_row /= static_cast<double>(k);
    const double floor = 1e-3 * (rho > 0.0 ? mean_row : mean_all);
    sigma = std::max(sigma, floor);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double dd = row[j].first - rho;
      w[i][j] = dd > 0 ? std::exp(-dd / sigma) : 1.0;
    }
  }

  // P = W + W^T - W o W^T over the union of directed edges.
  std::vector<std::vector<std::pair<std::size_t, double>>> sym(n);
  auto directed = [&](std::size_t i, std::size_t j) {
    for (std::size_t t = 0; t < knn[i].size(); ++t)
      if (knn[i][t].second == j) return w[i][t];
    return 0.0;
  };
  Graph g;
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& [_, j] : knn[i]) {
      const double a = directed(i, j), b = directed(j, i);
      if (b > 0.0 && j < i) continue;  // mutual edge, emitted once from the smaller index
      const double p = a + b - a * b;
      if (p <= 0.0) continue;
      g.head.push_back(std::min(i, j));
      g.tail.push_back(std::max(i, j));
      g.weight.push_back(p);
    }
  return g;
}

inline double clip4(double v) { return std::clamp(v, -4.0, 4.0); }

}  // namespace detail

struct ProjectionResult {
  std::vector<Point2> points;
  std::vector<std::string> warnings;
};

inline std::vector<Point2> scale_to_box(std::vector<Point2> pts, double size) {
  for (int axis = 0; axis < 2; ++axis) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& p : pts) {
      lo = std::min(lo, p[axis]);
      hi = std::max(hi, p[axis]);
    }
    const double span = hi - lo;
    for (auto& p : pts) p[axis] = span > 0 ? (p[axis] - lo) / span * size : size / 2.0;
  }
  return pts;
}

inline std::vector<Point2> umap_2d(const std::vector<std::vector<double>>& vectors, const ProjectionConfig& cfg,
                                   std::vector<std::string>* warnings = nullptr) {
  if (vectors.size() < 3) throw PreconditionError("projection needs at least 3 vectors");
  cfg.validate();
  const std::size_t n = vectors.size();
  int k = cfg.n_neighbors;
  if (static_cast<std::size_t>(k) >= n) {
    k = static_cast<int>(n - 1);
    if (warnings) warnings->push_back("n_neighbors clamped to " + std::to_string(k));
  }
  const Eigen::MatrixXd x = detail::to_matrix(vectors);
  const detail::Graph g = detail::fuzzy_graph(x, k);
  const auto [a, b] = fit_ab(cfg.spread, cfg.min_dist);
  const int epochs = cfg.epochs > 0 ? cfg.epochs : (n > 10000 ? 200 : 500);

  std::vector<Point2> y = scale_to_box(pca_2d(vectors), 10.0);

  const double wmax = g.weight.empty() ? 1.0 : *std::max_element(g.weight.begin(), g.weight.end());
  std::vector<std::size_t> edges;
  std::vector<double> eps, next_sample, eps_neg, next_neg;
  for (std::size_t e = 0; e < g.weight.size(); ++e) {
    const double per = wmax / g.weight[e];
    if (per > epochs) continue;  // too weak to be sampled even once
    edges.push_back(e);
    eps.push_back(per);
    next_sample.push_back(per);
    const double neg = cfg.negative_sample_rate > 0 ? per / cfg.negative_sample_rate : INFINITY;
    eps_neg.push_back(neg);
    next_neg.push_back(neg);
  }

  std::mt19937_64 rng(cfg.seed);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double alpha = 1.0 - static_cast<double>(epoch) / epochs;
    const double now = epoch;
    for (std::size_t t = 0; t < edges.size(); ++t) {
      if (next_sample[t] > now) continue;
      const std::size_t i = g.head[edges[t]], j = g.tail[edges[t]];
      Point2& yi = y[i];
      Point2& yj = y[j];
      const double dx = yi[0] - yj[0], dy = yi[1] - yj[1];
      const double d2 = dx * dx + dy * dy;
      double coeff = 0.0;
      if (d2 > 0.0) coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
      const double gx = detail::clip4(coeff * dx), gy = detail::clip4(coeff * dy);
      yi[0] += gx * alpha;
      yi[1] += gy * alpha;
      yj[0] -= gx * alpha;
      yj[1] -= gy * alpha;
      next_sample[t] += eps[t];

      const auto n_neg = static_cast<long>((now - next_neg[t]) / eps_neg[t]);
      for (long s = 0; s < n_neg; ++s) {
        const auto m = static_cast<std::size_t>(rng() % n);
        if (m == i) continue;
        const Point2& ym = y[m];
        const double ex = yi[0] - ym[0], ey = yi[1] - ym[1];
        const double e2 = ex * ex + ey * ey;
        double rep = 0.0;
        if (e2 > 0.0) rep = 2.0 * b / ((0.001 + e2) * (a * std::pow(e2, b) + 1.0));
        yi[0] += (rep > 0.0 ? detail::clip4(rep * ex) : 4.0) * alpha;
        yi[1] += (rep > 0.0 ? detail::clip4(rep * ey) : 4.0) * alpha;
      }
      next_neg[t] += static_cast<double>(n_neg) * eps_neg[t];
    }
  }
  return y;
}

inline ProjectionResult project_2d(const std::vector<std::vector<double>>& vectors, const ProjectionConfig& cfg = {}) {
  cfg.validate();
  ProjectionResult r;
  r.points = cfg.method == Method::pca ? pca_2d(vectors) : umap_2d(vectors, cfg, &r.warnings);
  return r;
}

}  // namespace cartoprompt::embed
