#include "pulseclust/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "pulseclust/random.hpp"

namespace pulseclust {

namespace {

/// Squared Euclidean distances between rows of x and rows of c.
Eigen::MatrixXd pairwise_sq(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c) {
  Eigen::VectorXd xn = x.rowwise().squaredNorm();
  Eigen::VectorXd cn = c.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * (x * c.transpose());
  d.colwise() += xn;
  d.rowwise() += cn.transpose();
  return d.cwiseMax(0.0);
}

ClusterResult lloyd_once(const Eigen::MatrixXd& x, int c, RandomSource& rng,
                         std::vector<double>* inertia_trace) {
  const Eigen::Index n = x.rows();

  // k-means++ seeding
  Eigen::MatrixXd centers(c, x.cols());
  centers.row(0) = x.row(rng.uniform_int(0, n - 1));
  Eigen::VectorXd best_d2 =
      (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < c; ++j) {
    const double total = best_d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total, acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += best_d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_int(0, n - 1);
    }
    centers.row(j) = x.row(pick);
    best_d2 = best_d2.cwiseMin((x.rowwise() - centers.row(j)).rowwise().squaredNorm());
  }

  std::vector<int> assign(n, 0);
  if (inertia_trace) inertia_trace->clear();
  for (int iter = 0; iter < 300; ++iter) {
    Eigen::MatrixXd d2 = pairwise_sq(x, centers);
    double step_inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      step_inertia += d2.row(i).minCoeff(&arg);
      assign[i] = static_cast<int>(arg);
    }
    if (inertia_trace) inertia_trace->push_back(step_inertia);
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(c, x.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(c);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(assign[i]) += x.row(i);
      counts[assign[i]] += 1.0;
    }
    for (int j = 0; j < c; ++j) {
      if (counts[j] > 0.0) {
        next.row(j) /= counts[j];
      } else {
        // empty cluster: grab the sample farthest from its center
        Eigen::Index far = 0;
        d2.rowwise().minCoeff().maxCoeff(&far);
        next.row(j) = x.row(far);
      }
    }
    const double shift = (next - centers).rowwise().norm().maxCoeff();
    centers = next;
    if (shift < 1e-6) break;
  }

  Eigen::MatrixXd d2 = pairwise_sq(x, centers);
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    inertia += d2.row(i).minCoeff(&arg);
    assign[i] = static_cast<int>(arg);
  }
  return {std::move(assign), std::move(centers), inertia};
}

}  // namespace

ClusterResult kmeans(const Eigen::MatrixXd& features, int num_clusters, std::uint64_t seed,
                     int restarts, std::vector<double>* inertia_trace) {
  if (num_clusters < 1) throw std::invalid_argument("kmeans: need at least one cluster");
  if (features.rows() < num_clusters)
    throw std::invalid_argument("kmeans: fewer samples than clusters");
  if (restarts < 1) throw std::invalid_argument("kmeans: need at least one restart");

  ClusterResult best;
  std::vector<double> trace, best_trace;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    RandomSource rng(derive_seed(seed, {0x6b6d, static_cast<std::uint64_t>(r)}));
    ClusterResult cur = lloyd_once(features, num_clusters, rng, inertia_trace ? &trace : nullptr);
    if (cur.inertia < best.inertia) {
      best = std::move(cur);
      best_trace = trace;
    }
  }
  if (inertia_trace) *inertia_trace = std::move(best_trace);
  return best;
}

PseudoLabelSet mine_reliable(const Eigen::MatrixXd& features, const Eigen::MatrixXd& centers,
                             Eigen::Index k) {
  const Eigen::Index n = features.rows(), c = centers.rows();
  if (k < 1 || k > n) throw std::invalid_argument("mine_reliable: k must lie in [1, N]");

  Eigen::MatrixXd d2 = pairwise_sq(features, centers);
  // claims[i] = best (lowest-distance, then lowest-id) center claiming i
  std::vector<int> claim(n, -1);
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index j = 0; j < c; ++j) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        return d2(a, j) != d2(b, j) ? d2(a, j) < d2(b, j) : a < b;
                      });
    for (Eigen::Index t = 0; t < k; ++t) {
      const Eigen::Index i = order[t];
      if (claim[i] < 0 || d2(i, j) < d2(i, claim[i]))  // tie keeps the lower id
        claim[i] = static_cast<int>(j);
    }
  }

  PseudoLabelSet out;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (claim[i] >= 0) {
      out.indices.push_back(i);
      out.labels.push_back(claim[i]);
    }
  }
  return out;
}

namespace detail {

std::vector<int> hungarian_max(const Eigen::MatrixXd& weights) {
  // potentials formulation on the minimization problem of -weights
  const int n = static_cast<int>(weights.rows());
  Eigen::MatrixXd cost = -weights;
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = std::numeric_limits<double>::infinity();
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> match(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) match[p[j] - 1] = j - 1;
  return match;
}

Eigen::MatrixXd contingency_table(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("metrics: labelings must be non-empty and equal length");
  std::map<int, int> amap, bmap;
  for (int x : a) amap.emplace(x, static_cast<int>(amap.size()));
  for (int x : b) bmap.emplace(x, static_cast<int>(bmap.size()));
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(amap.size(), bmap.size());
  for (std::size_t i = 0; i < a.size(); ++i) table(amap[a[i]], bmap[b[i]]) += 1.0;
  return table;
}

}  // namespace detail

double clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  Eigen::MatrixXd table = detail::contingency_table(pred, truth);
  const Eigen::Index dim = std::max(table.rows(), table.cols());
  Eigen::MatrixXd square = Eigen::MatrixXd::Zero(dim, dim);
  square.topLeftCorner(table.rows(), table.cols()) = table;
  const auto match = detail::hungarian_max(square);
  double agreed = 0.0;
  for (Eigen::Index i = 0; i < dim; ++i)
    if (match[i] >= 0) agreed += square(i, match[i]);
  return agreed / static_cast<double>(pred.size());
}

double nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
  Eigen::MatrixXd t = detail::contingency_table(pred, truth);
  const double n = t.sum();
  Eigen::VectorXd a = t.rowwise().sum(), b = t.colwise().sum();
  double hp = 0.0, ht = 0.0, mi = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a[i] > 0) hp -= a[i] / n * std::log(a[i] / n);
  for (Eigen::Index j = 0; j < b.size(); ++j)
    if (b[j] > 0) ht -= b[j] / n * std::log(b[j] / n);
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.cols(); ++j)
      if (t(i, j) > 0) mi += t(i, j) / n * std::log(n * t(i, j) / (a[i] * b[j]));
  if (hp == 0.0 && ht == 0.0) return 1.0;  // both labelings trivial, hence identical
  if (hp == 0.0 || ht == 0.0) return 0.0;
  return mi / std::sqrt(hp * ht);
}

double ari(const std::vector<int>& pred, const std::vector<int>& truth) {
  Eigen::MatrixXd t = detail::contingency_table(pred, truth);
  auto comb2 = [](double x) { return x * (x - 1.0) / 2.0; };
  const double n = t.sum();
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.cols(); ++j) sum_ij += comb2(t(i, j));
  Eigen::VectorXd a = t.rowwise().sum(), b = t.colwise().sum();
  for (Eigen::Index i = 0; i < a.size(); ++i) sum_a += comb2(a[i]);
  for (Eigen::Index j = 0; j < b.size(); ++j) sum_b += comb2(b[j]);
  const double expected = sum_a * sum_b / comb2(n);
  const double maximum = 0.5 * (sum_a + sum_b);
  if (maximum == expected) return 1.0;  // both partitions trivial
  return (sum_ij - expected) / (maximum - expected);
}

double purity(const std::vector<int>& pred, const std::vector<int>& truth) {
  Eigen::MatrixXd t = detail::contingency_table(pred, truth);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) acc += t.row(i).maxCoeff();
  return acc / static_cast<double>(pred.size());
}

double silhouette(const Eigen::MatrixXd& features, const std::vector<int>& assignments) {
  const Eigen::Index n = features.rows();
  if (static_cast<Eigen::Index>(assignments.size()) != n)
    throw std::invalid_argument("silhouette: assignment count mismatch");
  std::map<int, int> ids;
  for (int x : assignments) ids.emplace(x, static_cast<int>(ids.size()));
  const int c = static_cast<int>(ids.size());
  if (c < 2) throw std::invalid_argument("silhouette: need at least two clusters");

  Eigen::VectorXd counts = Eigen::VectorXd::Zero(c);
  std::vector<int> dense(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dense[i] = ids[assignments[i]];
    counts[dense[i]] += 1.0;
  }
  // indicator for grouping distances by cluster
  Eigen::MatrixXd indicator = Eigen::MatrixXd::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i) indicator(i, dense[i]) = 1.0;

  double total = 0.0;
  const Eigen::Index block = 256;
  for (Eigen::Index start = 0; start < n; start += block) {
    const Eigen::Index rows = std::min(block, n - start);
    Eigen::MatrixXd d2 = pairwise_sq(features.middleRows(start, rows), features);
    Eigen::MatrixXd dist = d2.array().sqrt().matrix();
    Eigen::MatrixXd cluster_sums = dist * indicator;  // rows x c
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index i = start + r;
      const int own = dense[i];
      if (counts[own] <= 1.0) continue;  // singleton scores 0
      const double a = cluster_sums(r, own) / (counts[own] - 1.0);
      double b = std::numeric_limits<double>::infinity();
      for (int j = 0; j < c; ++j)
        if (j != own) b = std::min(b, cluster_sums(r, j) / counts[j]);
      const double denom = std::max(a, b);
      total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
  }
  return total / static_cast<double>(n);
}

double neighbor_purity(const Eigen::MatrixXd& features, const std::vector<int>& truth,
                       int num_neighbors) {
  const Eigen::Index n = features.rows();
  if (static_cast<Eigen::Index>(truth.size()) != n)
    throw std::invalid_argument("neighbor_purity: label count mismatch");
  if (num_neighbors < 1 || num_neighbors > n - 1)
    throw std::invalid_argument("neighbor_purity: need 1 <= k <= N-1");

  double total = 0.0;
  const Eigen::Index block = 256;
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index start = 0; start < n; start += block) {
    const Eigen::Index rows = std::min(block, n - start);
    Eigen::MatrixXd d2 = pairwise_sq(features.middleRows(start, rows), features);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index i = start + r;
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::nth_element(order.begin(), order.begin() + num_neighbors, order.end(),
                       [&](Eigen::Index a, Eigen::Index b) {
                         const double da = a == i ? std::numeric_limits<double>::infinity() : d2(r, a);
                         const double db = b == i ? std::numeric_limits<double>::infinity() : d2(r, b);
                         return da != db ? da < db : a < b;
                       });
      int same = 0;
      for (int t = 0; t < num_neighbors; ++t)
        if (truth[order[t]] == truth[i]) ++same;
      total += static_cast<double>(same) / num_neighbors;
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace pulseclust
