#pragma once

#include <filesystem>
#include <fstream>

#include "pulseclust/nn_ops.hpp"

namespace pulseclust {

template <typename S>
using NamedTensors = std::vector<std::pair<std::string, Tensor<S>>>;

template <typename S>
std::vector<Tensor<S>> trainable(const NamedTensors<S>& named) {
  std::vector<Tensor<S>> out;
  for (const auto& [name, t] : named)
    if (t.requires_grad()) out.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

template <typename S>
struct Linear {
  Tensor<S> weight;  // [in, out]
  Tensor<S> bias;    // [out]

  Linear() = default;
  Linear(Eigen::Index in, Eigen::Index out, RandomSource& rng) {
    const S std = std::sqrt(S(1) / static_cast<S>(in));
    weight = Tensor<S>::randn({in, out}, std, rng, true);
    bias = Tensor<S>::zeros({out}, true);
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    if (x.ndim() == 2) return add(matmul(x, weight), bias);
    if (x.ndim() == 3) {
      const Eigen::Index b = x.dim(0), s = x.dim(1);
      auto flat = reshape(x, {b * s, x.dim(2)});
      return reshape(add(matmul(flat, weight), bias), {b, s, weight.dim(1)});
    }
    throw ShapeError("Linear: need 2-D or 3-D input, got " + shape_str(x.shape()));
  }

  void collect(const std::string& prefix, NamedTensors<S>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

template <typename S>
struct Conv1dLayer {
  Tensor<S> weight;  // [cout, cin, k]
  Tensor<S> bias;    // [cout]
  Eigen::Index stride = 1, padding = 0;

  Conv1dLayer() = default;
  Conv1dLayer(Eigen::Index cin, Eigen::Index cout, Eigen::Index k, Eigen::Index stride_,
              Eigen::Index padding_, RandomSource& rng)
      : stride(stride_), padding(padding_) {
    const S std = std::sqrt(S(2) / static_cast<S>(cin * k));
    weight = Tensor<S>::randn({cout, cin, k}, std, rng, true);
    bias = Tensor<S>::zeros({cout}, true);
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    return conv1d(x, weight, std::optional<Tensor<S>>(bias), stride, padding);
  }

  void collect(const std::string& prefix, NamedTensors<S>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

template <typename S>
struct BatchNorm1dLayer {
  Tensor<S> gamma, beta;
  Tensor<S> running_mean, running_var;  // buffers, not trained
  double momentum = 0.1, eps = 1e-5;

  BatchNorm1dLayer() = default;
  explicit BatchNorm1dLayer(Eigen::Index channels) {
    gamma = Tensor<S>::filled({channels}, S(1), true);
    beta = Tensor<S>::zeros({channels}, true);
    running_mean = Tensor<S>::zeros({channels});
    running_var = Tensor<S>::filled({channels}, S(1));
  }

  Tensor<S> operator()(const Tensor<S>& x, bool training) {
    return batchnorm1d(x, gamma, beta, running_mean.value(), running_var.value(), momentum, eps,
                       training);
  }

  void collect(const std::string& prefix, NamedTensors<S>& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
    out.emplace_back(prefix + ".running_mean", running_mean);
    out.emplace_back(prefix + ".running_var", running_var);
  }
};

template <typename S>
struct LayerNormLayer {
  Tensor<S> gamma, beta;
  double eps = 1e-5;

  LayerNormLayer() = default;
  explicit LayerNormLayer(Eigen::Index dim) {
    gamma = Tensor<S>::filled({dim}, S(1), true);
    beta = Tensor<S>::zeros({dim}, true);
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return layer_norm(x, gamma, beta, eps); }

  void collect(const std::string& prefix, NamedTensors<S>& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }
};

/// Post-norm transformer encoder layer: self-attention and feedforward
/// sublayers, each wrapped in a residual connection and layer norm.
template <typename S>
struct TransformerEncoderLayer {
  Linear<S> wq, wk, wv, wo, ff1, ff2;
  LayerNormLayer<S> norm1, norm2;
  int num_heads = 8;

  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(Eigen::Index dim, int heads, Eigen::Index ffn_dim, RandomSource& rng)
      : wq(dim, dim, rng),
        wk(dim, dim, rng),
        wv(dim, dim, rng),
        wo(dim, dim, rng),
        ff1(dim, ffn_dim, rng),
        ff2(ffn_dim, dim, rng),
        norm1(dim),
        norm2(dim),
        num_heads(heads) {}

  Tensor<S> operator()(const Tensor<S>& x) const {
    auto attn = wo(multihead_attention(wq(x), wk(x), wv(x), num_heads));
    auto h = norm1(add(x, attn));
    auto ff = ff2(relu(ff1(h)));
    return norm2(add(h, ff));
  }

  void collect(const std::string& prefix, NamedTensors<S>& out) const {
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
    ff1.collect(prefix + ".ff1", out);
    ff2.collect(prefix + ".ff2", out);
    norm1.collect(prefix + ".norm1", out);
    norm2.collect(prefix + ".norm2", out);
  }
};

/// Sinusoidal positional encoding replicated across the batch: [B,S,D].
template <typename S>
Tensor<S> positional_encoding(Eigen::Index batch, Eigen::Index seq, Eigen::Index dim) {
  typename Tensor<S>::Storage pe(seq * dim);
  for (Eigen::Index p = 0; p < seq; ++p)
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double angle = static_cast<double>(p) /
                           std::pow(10000.0, 2.0 * static_cast<double>(i / 2) / static_cast<double>(dim));
      pe[p * dim + i] = static_cast<S>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  typename Tensor<S>::Storage full(batch * seq * dim);
  for (Eigen::Index b = 0; b < batch; ++b) full.segment(b * seq * dim, seq * dim) = pe;
  return Tensor<S>::from_flat({batch, seq, dim}, std::move(full));
}

// ---------------------------------------------------------------------------
// optimizers
// ---------------------------------------------------------------------------

template <typename S>
void zero_grads(std::vector<Tensor<S>>& params) {
  for (auto& p : params) p.zero_grad();
}

/// Classic momentum SGD: v <- momentum*v + g; p <- p - lr*v.
template <typename S>
void sgd_step(std::vector<Tensor<S>>& params,
              std::vector<typename Tensor<S>::Storage>& velocity, double lr, double momentum) {
  if (velocity.size() != params.size()) {
    velocity.clear();
    for (auto& p : params) velocity.push_back(Tensor<S>::Storage::Zero(p.numel()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = S(momentum) * velocity[i] + params[i].grad();
    params[i].value() -= S(lr) * velocity[i];
  }
}

template <typename S>
struct AdamState {
  std::vector<typename Tensor<S>::Storage> m, v;
  long step_count = 0;
};

/// Bias-corrected Adam.
template <typename S>
void adam_step(std::vector<Tensor<S>>& params, AdamState<S>& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (auto& p : params) {
      state.m.push_back(Tensor<S>::Storage::Zero(p.numel()));
      state.v.push_back(Tensor<S>::Storage::Zero(p.numel()));
    }
    state.step_count = 0;
  }
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(beta1, state.step_count);
  const double bc2 = 1.0 - std::pow(beta2, state.step_count);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = params[i].grad();
    state.m[i] = S(beta1) * state.m[i] + S(1 - beta1) * g;
    state.v[i] = S(beta2) * state.v[i] + S(1 - beta2) * g.square();
    params[i].value() -=
        S(lr) * (state.m[i] / S(bc1)) / ((state.v[i] / S(bc2)).sqrt() + S(eps));
  }
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned binary of named float32 tensors with a free-form JSON meta
/// string. Layout: "PCKP" | u32 version | u64 meta_len | meta | u32 count |
/// { u32 name_len | name | u32 ndim | u64 dims[] | f32 data[] } ...
void save_checkpoint(const std::filesystem::path& path, const NamedTensors<float>& tensors,
                     const std::string& meta_json);

/// Loads into the given tensors (matched by name, shapes must agree) and
/// returns the meta string.
std::string load_checkpoint(const std::filesystem::path& path, NamedTensors<float>& tensors);

/// Reads only the meta string.
std::string read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace pulseclust
