#pragma once

#include "pulseclust/tensor_ops.hpp"

namespace pulseclust {

/// 1-D cross-correlation of [B,Cin,L] with kernels [Cout,Cin,K]; optional
/// per-output-channel bias. Output length is floor((L+2p-K)/stride)+1.
template <typename S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& kernel, std::optional<Tensor<S>> bias,
                 Eigen::Index stride, Eigen::Index padding) {
  if (x.ndim() != 3 || kernel.ndim() != 3) throw_shape_error("conv1d", x.shape(), kernel.shape());
  const Eigen::Index batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const Eigen::Index cout = kernel.dim(0), kcin = kernel.dim(1), k = kernel.dim(2);
  if (cin != kcin) throw_shape_error("conv1d", x.shape(), kernel.shape());
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv1d: bad stride/padding");
  if (k > len + 2 * padding)
    throw ShapeError("conv1d: kernel length " + std::to_string(k) + " exceeds padded input " +
                     std::to_string(len + 2 * padding));
  if (bias && (bias->ndim() != 1 || bias->dim(0) != cout))
    throw_shape_error("conv1d bias", kernel.shape(), bias->shape());
  const Eigen::Index lout = (len + 2 * padding - k) / stride + 1;

  auto build_col = [cin, len, k, stride, padding, lout](const typename Tensor<S>::Storage& src,
                                                        Eigen::Index b,
                                                        Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& col) {
    col.setZero(cin * k, lout);
    for (Eigen::Index c = 0; c < cin; ++c) {
      const S* xc = src.data() + (b * cin + c) * len;
      for (Eigen::Index t = 0; t < k; ++t) {
        for (Eigen::Index o = 0; o < lout; ++o) {
          const Eigen::Index src_i = o * stride + t - padding;
          if (src_i >= 0 && src_i < len) col(c * k + t, o) = xc[src_i];
        }
      }
    }
  };

  typename Tensor<S>::Storage out(batch * cout * lout);
  {
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> col;
    ConstMatMap<S> w(kernel.value().data(), cout, cin * k);
    for (Eigen::Index b = 0; b < batch; ++b) {
      build_col(x.value(), b, col);
      MatMap<S> ob(out.data() + b * cout * lout, cout, lout);
      ob.noalias() = w * col;
      if (bias) ob.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(
                    bias->value().data(), cout);
    }
  }

  auto xn = x.node(), kn = kernel.node();
  std::vector<std::shared_ptr<typename Tensor<S>::Node>> parents = {xn, kn};
  std::shared_ptr<typename Tensor<S>::Node> bn;
  if (bias) {
    bn = bias->node();
    parents.push_back(bn);
  }
  return Tensor<S>::make_op(
      {batch, cout, lout}, std::move(out), std::move(parents),
      [xn, kn, bn, build_col, batch, cin, len, cout, k, lout, stride, padding](auto& self) {
        ConstMatMap<S> w(kn->value.data(), cout, cin * k);
        Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> col, dcol;
        for (Eigen::Index b = 0; b < batch; ++b) {
          ConstMatMap<S> g(self.grad.data() + b * cout * lout, cout, lout);
          if (kn->requires_grad) {
            build_col(xn->value, b, col);
            MatMap<S>(kn->ensure_grad().data(), cout, cin * k).noalias() += g * col.transpose();
          }
          if (bn && bn->requires_grad)
            Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(bn->ensure_grad().data(), cout) +=
                g.rowwise().sum();
          if (xn->requires_grad) {
            dcol.noalias() = w.transpose() * g;  // [cin*k, lout]
            auto& xg = xn->ensure_grad();
            for (Eigen::Index c = 0; c < cin; ++c) {
              S* xgc = xg.data() + (b * cin + c) * len;
              for (Eigen::Index t = 0; t < k; ++t)
                for (Eigen::Index o = 0; o < lout; ++o) {
                  const Eigen::Index src_i = o * stride + t - padding;
                  if (src_i >= 0 && src_i < len) xgc[src_i] += dcol(c * k + t, o);
                }
            }
          }
        }
      });
}

template <typename S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& kernel, Eigen::Index stride,
                 Eigen::Index padding) {
  return conv1d(x, kernel, std::optional<Tensor<S>>{}, stride, padding);
}

/// Non-overlapping max pooling over the last dimension (stride = window).
template <typename S>
Tensor<S> maxpool1d(const Tensor<S>& x, Eigen::Index window) {
  if (x.ndim() != 3) throw ShapeError("maxpool1d: need [B,C,L], got " + shape_str(x.shape()));
  if (window < 1 || window > x.dim(2))
    throw std::invalid_argument("maxpool1d: window must lie in [1, L]");
  const Eigen::Index rows = x.dim(0) * x.dim(1), len = x.dim(2);
  const Eigen::Index lout = len / window;

  typename Tensor<S>::Storage out(rows * lout);
  std::vector<Eigen::Index> argmax(rows * lout);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const S* src = x.value().data() + r * len;
    for (Eigen::Index o = 0; o < lout; ++o) {
      Eigen::Index best = o * window;
      for (Eigen::Index t = 1; t < window; ++t)
        if (src[o * window + t] > src[best]) best = o * window + t;
      out[r * lout + o] = src[best];
      argmax[r * lout + o] = best;
    }
  }
  auto xn = x.node();
  return Tensor<S>::make_op({x.dim(0), x.dim(1), lout}, std::move(out), {xn},
                            [xn, argmax, rows, len, lout](auto& self) {
                              if (!xn->requires_grad) return;
                              auto& g = xn->ensure_grad();
                              for (Eigen::Index r = 0; r < rows; ++r)
                                for (Eigen::Index o = 0; o < lout; ++o)
                                  g[r * len + argmax[r * lout + o]] += self.grad[r * lout + o];
                            });
}

/// Non-overlapping average pooling over the last dimension.
template <typename S>
Tensor<S> avgpool1d(const Tensor<S>& x, Eigen::Index window) {
  if (x.ndim() != 3) throw ShapeError("avgpool1d: need [B,C,L], got " + shape_str(x.shape()));
  if (window < 1 || window > x.dim(2))
    throw std::invalid_argument("avgpool1d: window must lie in [1, L]");
  const Eigen::Index rows = x.dim(0) * x.dim(1), len = x.dim(2);
  const Eigen::Index lout = len / window;
  typename Tensor<S>::Storage out(rows * lout);
  const S inv = S(1) / static_cast<S>(window);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index o = 0; o < lout; ++o)
      out[r * lout + o] = x.value().segment(r * len + o * window, window).sum() * inv;
  auto xn = x.node();
  return Tensor<S>::make_op({x.dim(0), x.dim(1), lout}, std::move(out), {xn},
                            [xn, rows, len, lout, window, inv](auto& self) {
                              if (!xn->requires_grad) return;
                              auto& g = xn->ensure_grad();
                              for (Eigen::Index r = 0; r < rows; ++r)
                                for (Eigen::Index o = 0; o < lout; ++o)
                                  g.segment(r * len + o * window, window) +=
                                      Tensor<S>::Storage::Constant(window, inv * self.grad[r * lout + o]);
                            });
}

/// Per-channel batch normalization of [B,C] or [B,C,L]. Training mode uses
/// batch statistics and updates the running stats (momentum 0.1 by default);
/// eval mode normalizes with the running stats.
template <typename S>
Tensor<S> batchnorm1d(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                      typename Tensor<S>::Storage& running_mean,
                      typename Tensor<S>::Storage& running_var, double momentum, double eps,
                      bool training) {
  if (x.ndim() != 2 && x.ndim() != 3)
    throw ShapeError("batchnorm1d: need [B,C] or [B,C,L], got " + shape_str(x.shape()));
  const Eigen::Index batch = x.dim(0), ch = x.dim(1);
  const Eigen::Index len = x.ndim() == 3 ? x.dim(2) : 1;
  if (gamma.numel() != ch || beta.numel() != ch) throw_shape_error("batchnorm1d", x.shape(), gamma.shape());
  const Eigen::Index m = batch * len;

  Eigen::Array<S, Eigen::Dynamic, 1> mean(ch), var(ch);
  if (training) {
    for (Eigen::Index c = 0; c < ch; ++c) {
      S acc = 0, acc2 = 0;
      for (Eigen::Index b = 0; b < batch; ++b) {
        auto seg = x.value().segment((b * ch + c) * len, len);
        acc += seg.sum();
        acc2 += seg.square().sum();
      }
      mean[c] = acc / static_cast<S>(m);
      var[c] = acc2 / static_cast<S>(m) - mean[c] * mean[c];
    }
    running_mean = (S(1) - S(momentum)) * running_mean + S(momentum) * mean;
    running_var = (S(1) - S(momentum)) * running_var + S(momentum) * var;
  } else {
    mean = running_mean;
    var = running_var;
  }

  Eigen::Array<S, Eigen::Dynamic, 1> istd = (var + S(eps)).rsqrt();
  typename Tensor<S>::Storage xhat(x.numel()), out(x.numel());
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index c = 0; c < ch; ++c) {
      auto xi = x.value().segment((b * ch + c) * len, len);
      auto xh = xhat.segment((b * ch + c) * len, len);
      xh = (xi - mean[c]) * istd[c];
      out.segment((b * ch + c) * len, len) = xh * gamma.value()[c] + beta.value()[c];
    }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return Tensor<S>::make_op(
      x.shape(), std::move(out), {xn, gn, bn},
      [xn, gn, bn, xhat, istd, batch, ch, len, m, training](auto& self) {
        for (Eigen::Index c = 0; c < ch; ++c) {
          S sum_g = 0, sum_gx = 0;
          for (Eigen::Index b = 0; b < batch; ++b) {
            auto g = self.grad.segment((b * ch + c) * len, len);
            auto xh = xhat.segment((b * ch + c) * len, len);
            sum_g += g.sum();
            sum_gx += (g * xh).sum();
          }
          if (gn->requires_grad) gn->ensure_grad()[c] += sum_gx;
          if (bn->requires_grad) bn->ensure_grad()[c] += sum_g;
          if (xn->requires_grad) {
            const S gam = gn->value[c];
            auto& xg = xn->ensure_grad();
            for (Eigen::Index b = 0; b < batch; ++b) {
              auto g = self.grad.segment((b * ch + c) * len, len);
              auto xh = xhat.segment((b * ch + c) * len, len);
              if (training) {
                xg.segment((b * ch + c) * len, len) +=
                    gam * istd[c] *
                    (g - sum_g / static_cast<S>(m) - xh * (sum_gx / static_cast<S>(m)));
              } else {
                xg.segment((b * ch + c) * len, len) += gam * istd[c] * g;
              }
            }
          }
        }
      });
}

/// Layer normalization over the last dimension with per-feature affine.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     double eps = 1e-5) {
  const Eigen::Index d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) throw_shape_error("layer_norm", x.shape(), gamma.shape());
  const Eigen::Index rows = x.numel() / d;

  typename Tensor<S>::Storage xhat(x.numel()), out(x.numel());
  Eigen::Array<S, Eigen::Dynamic, 1> istd(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    auto xi = x.value().segment(r * d, d);
    const S mu = xi.mean();
    const S var = (xi - mu).square().mean();
    istd[r] = S(1) / std::sqrt(var + S(eps));
    auto xh = xhat.segment(r * d, d);
    xh = (xi - mu) * istd[r];
    out.segment(r * d, d) = xh * gamma.value() + beta.value();
  }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return Tensor<S>::make_op(x.shape(), std::move(out), {xn, gn, bn},
                            [xn, gn, bn, xhat, istd, rows, d](auto& self) {
                              for (Eigen::Index r = 0; r < rows; ++r) {
                                auto g = self.grad.segment(r * d, d);
                                auto xh = xhat.segment(r * d, d);
                                if (gn->requires_grad) gn->ensure_grad() += g * xh;
                                if (bn->requires_grad) bn->ensure_grad() += g;
                                if (xn->requires_grad) {
                                  Eigen::Array<S, Eigen::Dynamic, 1> gx = g * gn->value;
                                  const S mg = gx.mean();
                                  const S mgx = (gx * xh).mean();
                                  xn->ensure_grad().segment(r * d, d) +=
                                      istd[r] * (gx - mg - xh * mgx);
                                }
                              }
                            });
}

/// Scaled dot-product attention over already-projected q, k, v of shape
/// [B,S,D], split into num_heads heads. Returns the concatenated head
/// outputs [B,S,D]; output projection is the caller's.
template <typename S>
Tensor<S> multihead_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                              int num_heads) {
  if (q.ndim() != 3 || k.shape() != q.shape() || v.shape() != q.shape())
    throw_shape_error("multihead_attention", q.shape(), k.shape());
  const Eigen::Index batch = q.dim(0), seq = q.dim(1), d = q.dim(2);
  if (num_heads < 1 || d % num_heads != 0)
    throw ShapeError("multihead_attention: model dim " + std::to_string(d) +
                     " not divisible by " + std::to_string(num_heads) + " heads");
  const Eigen::Index dh = d / num_heads;

  auto to_heads = [&](const Tensor<S>& x) {
    // [B,S,D] -> [B*H, S, dh]
    auto r = reshape(x, {batch, seq, num_heads, dh});
    auto t = transpose(r, 1, 2);
    return reshape(t, {batch * num_heads, seq, dh});
  };
  Tensor<S> qh = to_heads(q), kh = to_heads(k), vh = to_heads(v);
  Tensor<S> scores = scale(matmul(qh, transpose(kh, 1, 2)), S(1) / std::sqrt(static_cast<S>(dh)));
  Tensor<S> attn = softmax(scores);
  Tensor<S> ctx = matmul(attn, vh);  // [B*H, S, dh]
  auto t = transpose(reshape(ctx, {batch, static_cast<Eigen::Index>(num_heads), seq, dh}), 1, 2);
  return reshape(t, {batch, seq, d});
}

}  // namespace pulseclust
