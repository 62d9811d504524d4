#include "pulseclust/losses.hpp"

namespace pulseclust {

ThresholdState update_thresholds(ThresholdState state, const Eigen::MatrixXd& weak_probs) {
  if (weak_probs.cols() != state.sigma.size())
    throw std::invalid_argument("update_thresholds: class count mismatch");
  for (Eigen::Index i = 0; i < weak_probs.rows(); ++i) {
    Eigen::Index arg = 0;
    const double mx = weak_probs.row(i).maxCoeff(&arg);
    if (mx >= state.tau_max) state.sigma[arg] += 1.0;
  }
  const double denom = std::max(state.sigma.maxCoeff(), 1.0);
  state.tau = (state.sigma / denom * state.tau_max).max(state.tau_floor);
  return state;
}

}  // namespace pulseclust
