#pragma once

#include "pulseclust/tensor_ops.hpp"

namespace pulseclust {

namespace detail {

template <typename S>
void check_normalized(const Tensor<S>& embeddings, const char* who) {
  const Eigen::Index n = embeddings.dim(0), d = embeddings.dim(1);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double norm = std::sqrt(
        static_cast<double>(embeddings.value().segment(r * d, d).square().sum()));
    if (std::abs(norm - 1.0) > 1e-3)
      throw std::invalid_argument(std::string(who) + ": embeddings must be L2-normalized (row " +
                                  std::to_string(r) + " has norm " + std::to_string(norm) + ")");
  }
}

/// exp(S - s_pos) row shift keeps the degenerate single-pair batch at an
/// exact zero and bounds the exponents.
template <typename S>
Tensor<S> shifted_log_denominator(const Tensor<S>& sims, const Tensor<S>& pos_col,
                                  const Tensor<S>& keep_mask) {
  const Eigen::Index n = sims.dim(0);
  Tensor<S> ones_row = Tensor<S>::filled({1, n}, S(1));
  Tensor<S> shifted = sub(sims, matmul(pos_col, ones_row));
  Tensor<S> masked = mul(exp(shifted), keep_mask);
  Tensor<S> row_sums = matmul(masked, transpose(ones_row, 0, 1));  // [n,1]
  return log(row_sums);
}

}  // namespace detail

/// NT-Xent over [2N, d] normalized embeddings arranged as adjacent
/// (view-a, view-b) pairs; every k != i appears in the denominator.
template <typename S>
Tensor<S> ntxent_loss(const Tensor<S>& embeddings, double temperature) {
  if (embeddings.ndim() != 2 || embeddings.dim(0) < 2 || embeddings.dim(0) % 2 != 0)
    throw ShapeError("ntxent_loss: need [2N,d] embeddings, got " + shape_str(embeddings.shape()));
  if (!(temperature > 0.0)) throw std::invalid_argument("ntxent_loss: temperature must be > 0");
  detail::check_normalized(embeddings, "ntxent_loss");
  const Eigen::Index n = embeddings.dim(0);

  Tensor<S> sims = scale(matmul(embeddings, transpose(embeddings, 0, 1)), S(1.0 / temperature));

  Tensor<S> pair_mask = Tensor<S>::zeros({n, n});
  Tensor<S> keep_mask = Tensor<S>::filled({n, n}, S(1));
  for (Eigen::Index i = 0; i < n; ++i) {
    pair_mask.value()[i * n + (i ^ 1)] = S(1);
    keep_mask.value()[i * n + i] = S(0);
  }
  Tensor<S> ones_col = Tensor<S>::filled({n, 1}, S(1));
  Tensor<S> pos_col = matmul(mul(sims, pair_mask), ones_col);  // s_{i,j(i)} per row

  return sum_all(detail::shifted_log_denominator(sims, pos_col, keep_mask));
}

/// Supervised contrastive loss over pseudo-labeled embeddings. Anchors with
/// no positive in the batch contribute nothing; their count is reported via
/// skipped_anchors.
template <typename S>
Tensor<S> supcon_loss(const Tensor<S>& embeddings, const std::vector<int>& labels,
                      double temperature, int* skipped_anchors = nullptr) {
  if (embeddings.ndim() != 2 || embeddings.dim(0) < 2)
    throw ShapeError("supcon_loss: need [M,d] embeddings with M >= 2, got " +
                     shape_str(embeddings.shape()));
  const Eigen::Index n = embeddings.dim(0);
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw std::invalid_argument("supcon_loss: label count does not match batch");
  if (!(temperature > 0.0)) throw std::invalid_argument("supcon_loss: temperature must be > 0");
  detail::check_normalized(embeddings, "supcon_loss");

  Tensor<S> sims = scale(matmul(embeddings, transpose(embeddings, 0, 1)), S(1.0 / temperature));

  Tensor<S> pos_weight = Tensor<S>::zeros({n, n});  // 1/|P(i)| on positives
  Tensor<S> keep_mask = Tensor<S>::filled({n, n}, S(1));
  Tensor<S> anchor_sel = Tensor<S>::zeros({n, 1});
  int skipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    keep_mask.value()[i * n + i] = S(0);
    Eigen::Index positives = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) ++positives;
    if (positives == 0) {
      ++skipped;
      continue;
    }
    anchor_sel.value()[i] = S(1);
    const S w = S(1) / static_cast<S>(positives);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) pos_weight.value()[i * n + j] = w;
  }
  if (skipped_anchors) *skipped_anchors = skipped;

  Tensor<S> ones_col = Tensor<S>::filled({n, 1}, S(1));
  Tensor<S> mean_pos = matmul(mul(sims, pos_weight), ones_col);  // (1/|P|) sum_p s_ip
  Tensor<S> log_den = detail::shifted_log_denominator(sims, mean_pos, keep_mask);
  return sum_all(mul(log_den, anchor_sel));
}

/// FlexMatch-style per-class dynamic confidence thresholds.
struct ThresholdState {
  double tau_max = 0.99;
  double tau_floor = 0.5;
  double lambda = 1.0;
  Eigen::ArrayXd sigma;  // per-class confident counts, accumulated per epoch
  Eigen::ArrayXd tau;    // per-class thresholds

  explicit ThresholdState(int num_classes, double tau_max_ = 0.99, double lambda_ = 1.0)
      : tau_max(tau_max_), lambda(lambda_) {
    sigma = Eigen::ArrayXd::Zero(num_classes);
    tau = Eigen::ArrayXd::Constant(num_classes, tau_floor);
  }

  void begin_epoch() { sigma.setZero(); }
};

/// Adds the batch's confident counts and recomputes the thresholds:
/// beta_c = sigma_c / max(max_c sigma_c, 1); tau_c = max(floor, beta_c*tau_max).
ThresholdState update_thresholds(ThresholdState state, const Eigen::MatrixXd& weak_probs);

template <typename S>
struct SemiLoss {
  Tensor<S> supervised;
  Tensor<S> unsupervised;
  Tensor<S> total;
  Eigen::Index confident_count = 0;
};

/// FixMatch-style semi-supervised objective. weak_probs are detached
/// probability rows for the weakly augmented unlabeled samples; the strong
/// branch is trained toward the confident argmax targets.
template <typename S>
SemiLoss<S> semi_supervised_loss(const Tensor<S>& labeled_logits,
                                 const std::vector<int>& pseudo_targets,
                                 const Eigen::MatrixXd& weak_probs, const Tensor<S>& strong_logits,
                                 const ThresholdState& state) {
  SemiLoss<S> out;
  out.supervised = cross_entropy_with_logits(labeled_logits, pseudo_targets);

  const Eigen::Index n_us = weak_probs.rows();
  if (strong_logits.dim(0) != n_us)
    throw ShapeError("semi_supervised_loss: weak/strong branch row mismatch");
  if (weak_probs.cols() != state.tau.size())
    throw std::invalid_argument("semi_supervised_loss: class count mismatch with thresholds");
  std::vector<int> targets(n_us, 0);
  std::vector<S> weights(n_us, S(0));
  for (Eigen::Index i = 0; i < n_us; ++i) {
    const double row_sum = weak_probs.row(i).sum();
    if (std::abs(row_sum - 1.0) > 1e-6)
      throw std::invalid_argument("semi_supervised_loss: weak probability row " +
                                  std::to_string(i) + " sums to " + std::to_string(row_sum));
    Eigen::Index arg = 0;
    const double mx = weak_probs.row(i).maxCoeff(&arg);
    targets[i] = static_cast<int>(arg);
    if (mx >= state.tau[arg]) {
      weights[i] = S(1);
      ++out.confident_count;
    }
  }
  if (n_us > 0)
    out.unsupervised = cross_entropy_with_logits(strong_logits, targets, weights, n_us);
  else
    out.unsupervised = Tensor<S>::scalar(S(0));

  out.total = add(out.supervised, scale(out.unsupervised, S(state.lambda)));
  return out;
}

}  // namespace pulseclust
