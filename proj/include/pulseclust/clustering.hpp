#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace pulseclust {

struct ClusterResult {
  std::vector<int> assignments;  // per-sample cluster id in [0, C)
  Eigen::MatrixXd centers;       // C x d
  double inertia = 0.0;
};

/// k-means++ initialization, Lloyd iterations until the largest center shift
/// falls below 1e-6 (or 300 iterations), best of `restarts` by inertia.
/// inertia_trace, when given, receives the per-iteration inertia of the
/// winning restart.
ClusterResult kmeans(const Eigen::MatrixXd& features, int num_clusters, std::uint64_t seed,
                     int restarts = 10, std::vector<double>* inertia_trace = nullptr);

/// Indices of reliable samples with their cluster-derived labels.
struct PseudoLabelSet {
  std::vector<Eigen::Index> indices;
  std::vector<int> labels;
  int source_stage = 0;
};

/// The k nearest samples to every center, labeled by the center id; a sample
/// claimed by several centers keeps only its nearest one (ties go to the
/// lower center id).
PseudoLabelSet mine_reliable(const Eigen::MatrixXd& features, const Eigen::MatrixXd& centers,
                             Eigen::Index k);

/// Best label-permutation agreement via optimal assignment on the
/// contingency matrix.
double clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

double nmi(const std::vector<int>& pred, const std::vector<int>& truth);
double ari(const std::vector<int>& pred, const std::vector<int>& truth);
double purity(const std::vector<int>& pred, const std::vector<int>& truth);

/// Mean silhouette coefficient; requires at least two clusters, singleton
/// clusters score 0.
double silhouette(const Eigen::MatrixXd& features, const std::vector<int>& assignments);

/// Average fraction of each sample's num_neighbors nearest neighbors that
/// share its true class.
double neighbor_purity(const Eigen::MatrixXd& features, const std::vector<int>& truth,
                       int num_neighbors);

namespace detail {
/// Maximum-weight perfect assignment on a square matrix (Hungarian method);
/// returns the chosen column per row.
std::vector<int> hungarian_max(const Eigen::MatrixXd& weights);
/// Contingency counts after compacting both labelings to dense ids.
Eigen::MatrixXd contingency_table(const std::vector<int>& a, const std::vector<int>& b);
}  // namespace detail

}  // namespace pulseclust
