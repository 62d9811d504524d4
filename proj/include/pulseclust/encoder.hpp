#pragma once

#include <array>

#include "pulseclust/nn.hpp"

namespace pulseclust {

/// Trans-CNN hyperparameters: four conv blocks feeding two transformer
/// encoder layers, a fully connected feature head and a linear projection
/// head. desk_scale() divides channel counts and the feedforward width for
/// laptop-sized runs.
struct EncoderConfig {
  Eigen::Index frame_len = 1024;
  int in_channels = 2;
  std::array<int, 4> conv_channels{32, 64, 128, 256};
  std::array<int, 4> kernel_sizes{5, 5, 5, 3};
  std::array<int, 4> pool_windows{2, 2, 2, 2};
  std::array<bool, 4> pool_avg{false, false, false, false};  // false: max pooling
  bool max_aggregation = false;  // sequence aggregation: mean (default) or max
  int num_transformer_layers = 2;
  int num_heads = 8;
  int ffn_dim = 128;
  int feature_dim = 128;
  int projection_dim = 12;

  int model_dim() const { return conv_channels[3]; }

  Eigen::Index seq_len() const {
    Eigen::Index len = frame_len;
    for (int i = 0; i < 4; ++i) len /= pool_windows[i];
    return len;
  }

  static EncoderConfig desk_scale(int scale, int projection_dim, Eigen::Index frame_len = 1024) {
    EncoderConfig c;
    c.frame_len = frame_len;
    for (auto& ch : c.conv_channels) ch = std::max(8, ch / scale);
    c.ffn_dim = std::max(8, c.ffn_dim / scale);
    c.projection_dim = projection_dim;
    c.validate();
    return c;
  }

  void validate() const {
    if (feature_dim % num_heads != 0)
      throw std::invalid_argument("EncoderConfig: feature_dim must be divisible by num_heads");
    if (model_dim() % num_heads != 0)
      throw std::invalid_argument("EncoderConfig: conv_channels[3] must be divisible by num_heads");
    if (seq_len() < 1) throw std::invalid_argument("EncoderConfig: pooling chain exhausts the frame");
    if (projection_dim < 1 || feature_dim < 1)
      throw std::invalid_argument("EncoderConfig: head dimensions must be positive");
  }
};

/// Conv stack -> positional encoding -> transformer encoders -> global
/// average pool -> 128-d features -> linear projection head. The projection
/// head is used in training only; inference consumes the features.
template <typename S>
class TransCnn {
 public:
  struct Output {
    Tensor<S> features;     // [B, feature_dim]
    Tensor<S> projections;  // [B, projection_dim]
  };

  TransCnn(const EncoderConfig& config, std::uint64_t init_seed) : cfg_(config) {
    cfg_.validate();
    RandomSource rng(derive_seed(init_seed, {0x1217}));
    int cin = cfg_.in_channels;
    for (int i = 0; i < 4; ++i) {
      const int cout = cfg_.conv_channels[i];
      const Eigen::Index k = cfg_.kernel_sizes[i];
      convs_.emplace_back(cin, cout, k, /*stride=*/1, /*padding=*/k / 2, rng);
      bns_.emplace_back(cout);
      cin = cout;
    }
    for (int i = 0; i < cfg_.num_transformer_layers; ++i)
      transformer_.emplace_back(cfg_.model_dim(), cfg_.num_heads, cfg_.ffn_dim, rng);
    fc_ = Linear<S>(cfg_.model_dim(), cfg_.feature_dim, rng);
    proj_ = Linear<S>(cfg_.feature_dim, cfg_.projection_dim, rng);
  }

  Output forward(const Tensor<S>& batch, bool training) {
    if (batch.ndim() != 3 || batch.dim(1) != cfg_.in_channels || batch.dim(2) != cfg_.frame_len)
      throw ShapeError("TransCnn: expected [B," + std::to_string(cfg_.in_channels) + "," +
                       std::to_string(cfg_.frame_len) + "], got " + shape_str(batch.shape()));
    Tensor<S> x = batch;
    for (int i = 0; i < 4; ++i) {
      Tensor<S> a = relu(bns_[i](convs_[i](x), training));
      x = cfg_.pool_avg[i] ? avgpool1d(a, cfg_.pool_windows[i])
                           : maxpool1d(a, cfg_.pool_windows[i]);
    }

    Tensor<S> t = transpose(x, 1, 2);  // [B, S, D]
    t = add(t, positional_encoding<S>(t.dim(0), t.dim(1), t.dim(2)));
    for (auto& layer : transformer_) t = layer(t);

    Tensor<S> pooled;  // [B, D]
    if (cfg_.max_aggregation) {
      Tensor<S> tc = transpose(t, 1, 2);  // [B, D, S]
      pooled = reshape(maxpool1d(tc, tc.dim(2)), {t.dim(0), t.dim(2)});
    } else {
      pooled = mean_axis(t, 1);
    }
    Tensor<S> features = fc_(pooled);
    Tensor<S> projections = proj_(features);
    return {features, projections};
  }

  NamedTensors<S> named_tensors() const {
    NamedTensors<S> out;
    for (int i = 0; i < 4; ++i) {
      convs_[i].collect("conv" + std::to_string(i + 1), out);
      bns_[i].collect("bn" + std::to_string(i + 1), out);
    }
    for (std::size_t i = 0; i < transformer_.size(); ++i)
      transformer_[i].collect("transformer" + std::to_string(i + 1), out);
    fc_.collect("fc", out);
    proj_.collect("proj", out);
    return out;
  }

  std::vector<Tensor<S>> parameters() const { return trainable(named_tensors()); }

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::vector<Conv1dLayer<S>> convs_;
  std::vector<BatchNorm1dLayer<S>> bns_;
  std::vector<TransformerEncoderLayer<S>> transformer_;
  Linear<S> fc_, proj_;
};

}  // namespace pulseclust
