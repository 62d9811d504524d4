#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "pulseclust/tensor.hpp"

namespace pulseclust {

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

namespace detail {

template <typename S>
MatMap<S> as_matrix(typename Tensor<S>::Storage& s, Eigen::Index rows, Eigen::Index cols) {
  return MatMap<S>(s.data(), rows, cols);
}
template <typename S>
ConstMatMap<S> as_matrix(const typename Tensor<S>::Storage& s, Eigen::Index rows, Eigen::Index cols) {
  return ConstMatMap<S>(s.data(), rows, cols);
}

inline Eigen::Index leading(const Shape& s, std::size_t upto) {
  Eigen::Index n = 1;
  for (std::size_t i = 0; i < upto; ++i) n *= s[i];
  return n;
}
inline Eigen::Index trailing(const Shape& s, std::size_t from) {
  Eigen::Index n = 1;
  for (std::size_t i = from; i < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and broadcast arithmetic
// ---------------------------------------------------------------------------

/// add supports equal shapes, scalar b, or b matching a's last dimension.
template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  using T = Tensor<S>;
  auto an = a.node(), bn = b.node();
  if (a.shape() == b.shape()) {
    return T::make_op(a.shape(), a.value() + b.value(), {an, bn}, [an, bn](auto& self) {
      if (an->requires_grad) an->ensure_grad() += self.grad;
      if (bn->requires_grad) bn->ensure_grad() += self.grad;
    });
  }
  if (b.numel() == 1) {
    return T::make_op(a.shape(), a.value() + b.value()[0], {an, bn}, [an, bn](auto& self) {
      if (an->requires_grad) an->ensure_grad() += self.grad;
      if (bn->requires_grad) bn->ensure_grad()[0] += self.grad.sum();
    });
  }
  if (b.ndim() == 1 && a.shape().back() == b.dim(0)) {
    const Eigen::Index d = b.dim(0), rows = a.numel() / d;
    typename T::Storage out = a.value();
    auto m = detail::as_matrix<S>(out, rows, d);
    m.rowwise() += ConstMatMap<S>(b.value().data(), 1, d).row(0);
    return T::make_op(a.shape(), std::move(out), {an, bn}, [an, bn, rows, d](auto& self) {
      if (an->requires_grad) an->ensure_grad() += self.grad;
      if (bn->requires_grad) {
        auto g = detail::as_matrix<S>(self.grad, rows, d);
        MatMap<S>(bn->ensure_grad().data(), 1, d) += g.colwise().sum();
      }
    });
  }
  throw_shape_error("add", a.shape(), b.shape());
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  using T = Tensor<S>;
  auto an = a.node(), bn = b.node();
  if (a.shape() == b.shape()) {
    return T::make_op(a.shape(), a.value() - b.value(), {an, bn}, [an, bn](auto& self) {
      if (an->requires_grad) an->ensure_grad() += self.grad;
      if (bn->requires_grad) bn->ensure_grad() -= self.grad;
    });
  }
  if (b.numel() == 1) {
    return T::make_op(a.shape(), a.value() - b.value()[0], {an, bn}, [an, bn](auto& self) {
      if (an->requires_grad) an->ensure_grad() += self.grad;
      if (bn->requires_grad) bn->ensure_grad()[0] -= self.grad.sum();
    });
  }
  throw_shape_error("sub", a.shape(), b.shape());
}

/// Elementwise product; b may also be a scalar tensor.
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  using T = Tensor<S>;
  auto an = a.node(), bn = b.node();
  if (a.shape() == b.shape()) {
    return T::make_op(a.shape(), a.value() * b.value(), {an, bn}, [an, bn](auto& self) {
      if (an->requires_grad) an->ensure_grad() += self.grad * bn->value;
      if (bn->requires_grad) bn->ensure_grad() += self.grad * an->value;
    });
  }
  if (b.numel() == 1) {
    return T::make_op(a.shape(), a.value() * b.value()[0], {an, bn}, [an, bn](auto& self) {
      if (an->requires_grad) an->ensure_grad() += self.grad * bn->value[0];
      if (bn->requires_grad) bn->ensure_grad()[0] += (self.grad * an->value).sum();
    });
  }
  throw_shape_error("mul", a.shape(), b.shape());
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  using T = Tensor<S>;
  if (a.shape() != b.shape()) throw_shape_error("div", a.shape(), b.shape());
  auto an = a.node(), bn = b.node();
  return T::make_op(a.shape(), a.value() / b.value(), {an, bn}, [an, bn](auto& self) {
    if (an->requires_grad) an->ensure_grad() += self.grad / bn->value;
    if (bn->requires_grad)
      bn->ensure_grad() -= self.grad * an->value / (bn->value * bn->value);
  });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  auto an = a.node();
  return Tensor<S>::make_op(a.shape(), a.value() * c, {an}, [an, c](auto& self) {
    if (an->requires_grad) an->ensure_grad() += self.grad * c;
  });
}

template <typename S>
Tensor<S> neg(const Tensor<S>& a) {
  return scale(a, S(-1));
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  auto an = a.node();
  return Tensor<S>::make_op(a.shape(), a.value().max(S(0)), {an}, [an](auto& self) {
    if (an->requires_grad)
      an->ensure_grad() += self.grad * (an->value > S(0)).template cast<S>();
  });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& a) {
  auto an = a.node();
  typename Tensor<S>::Storage y = a.value().exp();
  return Tensor<S>::make_op(a.shape(), y, {an}, [an, y](auto& self) {
    if (an->requires_grad) an->ensure_grad() += self.grad * y;
  });
}

template <typename S>
Tensor<S> log(const Tensor<S>& a) {
  auto an = a.node();
  return Tensor<S>::make_op(a.shape(), a.value().log(), {an}, [an](auto& self) {
    if (an->requires_grad) an->ensure_grad() += self.grad / an->value;
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum_all(const Tensor<S>& a) {
  auto an = a.node();
  typename Tensor<S>::Storage v(1);
  v[0] = a.value().sum();
  return Tensor<S>::make_op({1}, std::move(v), {an}, [an](auto& self) {
    if (an->requires_grad) an->ensure_grad() += self.grad[0];
  });
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& a) {
  return scale(sum_all(a), S(1) / static_cast<S>(a.numel()));
}

/// Mean over one dimension; the dimension is removed from the shape.
template <typename S>
Tensor<S> mean_axis(const Tensor<S>& a, std::size_t dim) {
  if (dim >= a.ndim()) throw ShapeError("mean_axis: dim out of range for " + shape_str(a.shape()));
  const Eigen::Index outer = detail::leading(a.shape(), dim);
  const Eigen::Index n = a.dim(dim);
  const Eigen::Index inner = detail::trailing(a.shape(), dim + 1);
  Shape out_shape;
  for (std::size_t i = 0; i < a.ndim(); ++i)
    if (i != dim) out_shape.push_back(a.shape()[i]);
  if (out_shape.empty()) out_shape.push_back(1);

  typename Tensor<S>::Storage out = Tensor<S>::Storage::Zero(outer * inner);
  for (Eigen::Index o = 0; o < outer; ++o)
    for (Eigen::Index j = 0; j < n; ++j)
      out.segment(o * inner, inner) += a.value().segment((o * n + j) * inner, inner);
  out /= static_cast<S>(n);

  auto an = a.node();
  return Tensor<S>::make_op(std::move(out_shape), std::move(out), {an},
                            [an, outer, n, inner](auto& self) {
                              if (!an->requires_grad) return;
                              auto& g = an->ensure_grad();
                              const S inv = S(1) / static_cast<S>(n);
                              for (Eigen::Index o = 0; o < outer; ++o)
                                for (Eigen::Index j = 0; j < n; ++j)
                                  g.segment((o * n + j) * inner, inner) +=
                                      inv * self.grad.segment(o * inner, inner);
                            });
}

// ---------------------------------------------------------------------------
// shape manipulation
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) throw_shape_error("reshape", a.shape(), shape);
  auto an = a.node();
  return Tensor<S>::make_op(std::move(shape), a.value(), {an}, [an](auto& self) {
    if (an->requires_grad) an->ensure_grad() += self.grad;
  });
}

/// Swaps two dimensions (copying transpose).
template <typename S>
Tensor<S> transpose(const Tensor<S>& a, std::size_t d0, std::size_t d1) {
  if (d0 >= a.ndim() || d1 >= a.ndim())
    throw ShapeError("transpose: dims out of range for " + shape_str(a.shape()));
  if (d0 == d1) return reshape(a, a.shape());
  if (d0 > d1) std::swap(d0, d1);

  const Shape& in = a.shape();
  Shape out_shape = in;
  std::swap(out_shape[d0], out_shape[d1]);

  // decompose as [A, d0, B, d1, C]
  const Eigen::Index A = detail::leading(in, d0);
  const Eigen::Index D0 = in[d0];
  const Eigen::Index B = detail::leading(in, d1) / (A * D0);
  const Eigen::Index D1 = in[d1];
  const Eigen::Index C = detail::trailing(in, d1 + 1);

  auto permute = [A, D0, B, D1, C](const typename Tensor<S>::Storage& src,
                                   typename Tensor<S>::Storage& dst, bool forward) {
    for (Eigen::Index a_ = 0; a_ < A; ++a_)
      for (Eigen::Index i = 0; i < D0; ++i)
        for (Eigen::Index b_ = 0; b_ < B; ++b_)
          for (Eigen::Index j = 0; j < D1; ++j) {
            const Eigen::Index src_idx = (((a_ * D0 + i) * B + b_) * D1 + j) * C;
            const Eigen::Index dst_idx = (((a_ * D1 + j) * B + b_) * D0 + i) * C;
            if (forward)
              dst.segment(dst_idx, C) = src.segment(src_idx, C);
            else
              dst.segment(src_idx, C) += src.segment(dst_idx, C);
          }
  };

  typename Tensor<S>::Storage out(a.numel());
  permute(a.value(), out, true);
  auto an = a.node();
  return Tensor<S>::make_op(std::move(out_shape), std::move(out), {an}, [an, permute](auto& self) {
    if (!an->requires_grad) return;
    permute(self.grad, an->ensure_grad(), false);
  });
}

template <typename S>
Tensor<S> slice(const Tensor<S>& a, std::size_t dim, Eigen::Index start, Eigen::Index len) {
  if (dim >= a.ndim() || start < 0 || len < 0 || start + len > a.dim(dim))
    throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") invalid for dim " + std::to_string(dim) + " of " + shape_str(a.shape()));
  const Eigen::Index outer = detail::leading(a.shape(), dim);
  const Eigen::Index n = a.dim(dim);
  const Eigen::Index inner = detail::trailing(a.shape(), dim + 1);
  Shape out_shape = a.shape();
  out_shape[dim] = len;

  typename Tensor<S>::Storage out(outer * len * inner);
  for (Eigen::Index o = 0; o < outer; ++o)
    out.segment(o * len * inner, len * inner) =
        a.value().segment((o * n + start) * inner, len * inner);

  auto an = a.node();
  return Tensor<S>::make_op(std::move(out_shape), std::move(out), {an},
                            [an, outer, n, inner, start, len](auto& self) {
                              if (!an->requires_grad) return;
                              auto& g = an->ensure_grad();
                              for (Eigen::Index o = 0; o < outer; ++o)
                                g.segment((o * n + start) * inner, len * inner) +=
                                    self.grad.segment(o * len * inner, len * inner);
                            });
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, std::size_t dim) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (dim >= ref.size()) throw ShapeError("concat: dim out of range for " + shape_str(ref));
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != ref.size()) throw_shape_error("concat", ref, p.shape());
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (i != dim && p.shape()[i] != ref[i]) throw_shape_error("concat", ref, p.shape());
    total += p.dim(dim);
  }
  Shape out_shape = ref;
  out_shape[dim] = total;
  const Eigen::Index outer = detail::leading(ref, dim);
  const Eigen::Index inner = detail::trailing(ref, dim + 1);

  typename Tensor<S>::Storage out(outer * total * inner);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    const Eigen::Index n = p.dim(dim);
    for (Eigen::Index o = 0; o < outer; ++o)
      out.segment((o * total + off) * inner, n * inner) = p.value().segment(o * n * inner, n * inner);
    off += n;
  }

  std::vector<std::shared_ptr<typename Tensor<S>::Node>> nodes;
  std::vector<Eigen::Index> sizes;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    sizes.push_back(p.dim(dim));
  }
  return Tensor<S>::make_op(std::move(out_shape), std::move(out), nodes,
                            [nodes, sizes, outer, inner, total](auto& self) {
                              Eigen::Index off = 0;
                              for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                                const Eigen::Index n = sizes[pi];
                                if (nodes[pi]->requires_grad) {
                                  auto& g = nodes[pi]->ensure_grad();
                                  for (Eigen::Index o = 0; o < outer; ++o)
                                    g.segment(o * n * inner, n * inner) +=
                                        self.grad.segment((o * total + off) * inner, n * inner);
                                }
                                off += n;
                              }
                            });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

/// 2-D [M,K]x[K,N] or batched 3-D [B,M,K]x[B,K,N] matrix product.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  using T = Tensor<S>;
  const bool batched = a.ndim() == 3 && b.ndim() == 3;
  if (!batched && !(a.ndim() == 2 && b.ndim() == 2)) throw_shape_error("matmul", a.shape(), b.shape());

  const Eigen::Index batch = batched ? a.dim(0) : 1;
  const Eigen::Index m = a.dim(batched ? 1 : 0), k = a.dim(batched ? 2 : 1);
  const Eigen::Index k2 = b.dim(batched ? 1 : 0), n = b.dim(batched ? 2 : 1);
  if (k != k2 || (batched && b.dim(0) != batch)) throw_shape_error("matmul", a.shape(), b.shape());

  typename T::Storage out(batch * m * n);
  for (Eigen::Index bi = 0; bi < batch; ++bi) {
    ConstMatMap<S> am(a.value().data() + bi * m * k, m, k);
    ConstMatMap<S> bm(b.value().data() + bi * k * n, k, n);
    MatMap<S>(out.data() + bi * m * n, m, n).noalias() = am * bm;
  }
  Shape out_shape = batched ? Shape{batch, m, n} : Shape{m, n};
  auto an = a.node(), bn = b.node();
  return T::make_op(std::move(out_shape), std::move(out), {an, bn},
                    [an, bn, batch, m, k, n](auto& self) {
                      for (Eigen::Index bi = 0; bi < batch; ++bi) {
                        ConstMatMap<S> g(self.grad.data() + bi * m * n, m, n);
                        if (an->requires_grad) {
                          ConstMatMap<S> bm(bn->value.data() + bi * k * n, k, n);
                          MatMap<S>(an->ensure_grad().data() + bi * m * k, m, k).noalias() +=
                              g * bm.transpose();
                        }
                        if (bn->requires_grad) {
                          ConstMatMap<S> am(an->value.data() + bi * m * k, m, k);
                          MatMap<S>(bn->ensure_grad().data() + bi * k * n, k, n).noalias() +=
                              am.transpose() * g;
                        }
                      }
                    });
}

// ---------------------------------------------------------------------------
// softmax and normalization
// ---------------------------------------------------------------------------

/// Row-stable softmax over `axis` (default: last dimension).
template <typename S>
Tensor<S> softmax(const Tensor<S>& a, std::optional<std::size_t> axis = std::nullopt) {
  const std::size_t last = a.ndim() - 1;
  const std::size_t ax = axis.value_or(last);
  if (ax >= a.ndim()) throw ShapeError("softmax: axis out of range for " + shape_str(a.shape()));
  if (ax != last) {
    // shuffle the axis to the back, apply, shuffle back
    return transpose(softmax(transpose(a, ax, last)), ax, last);
  }
  const Eigen::Index d = a.shape().back();
  const Eigen::Index rows = a.numel() / d;
  typename Tensor<S>::Storage y(a.numel());
  for (Eigen::Index r = 0; r < rows; ++r) {
    auto xin = a.value().segment(r * d, d);
    auto yout = y.segment(r * d, d);
    const S mx = xin.maxCoeff();
    yout = (xin - mx).exp();
    yout /= yout.sum();
  }
  auto an = a.node();
  return Tensor<S>::make_op(a.shape(), y, {an}, [an, y, rows, d](auto& self) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto yr = y.segment(r * d, d);
      auto gr = self.grad.segment(r * d, d);
      const S dot = (gr * yr).sum();
      g.segment(r * d, d) += yr * (gr - dot);
    }
  });
}

/// Rows scaled to unit L2 norm: y = x / max(||x||, eps).
template <typename S>
Tensor<S> l2_normalize_rows(const Tensor<S>& a, S eps = S(1e-12)) {
  if (a.ndim() != 2) throw ShapeError("l2_normalize_rows: need 2-D input, got " + shape_str(a.shape()));
  const Eigen::Index rows = a.dim(0), d = a.dim(1);
  typename Tensor<S>::Storage y(a.numel());
  Eigen::Array<S, Eigen::Dynamic, 1> inv_norm(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    auto xr = a.value().segment(r * d, d);
    const S norm = std::max(std::sqrt(xr.square().sum()), eps);
    inv_norm[r] = S(1) / norm;
    y.segment(r * d, d) = xr * inv_norm[r];
  }
  auto an = a.node();
  return Tensor<S>::make_op(a.shape(), y, {an}, [an, y, inv_norm, rows, d](auto& self) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto yr = y.segment(r * d, d);
      auto gr = self.grad.segment(r * d, d);
      const S dot = (gr * yr).sum();
      g.segment(r * d, d) += (gr - yr * dot) * inv_norm[r];
    }
  });
}

/// Mean cross entropy between integer targets and softmax(logits); rows may
/// be weighted, and the sum is divided by `denom` (defaults to the row
/// count) so masked semi-supervised losses can normalize by the full batch.
template <typename S>
Tensor<S> cross_entropy_with_logits(const Tensor<S>& logits, const std::vector<int>& targets,
                                    const std::vector<S>& row_weights = {},
                                    std::optional<Eigen::Index> denom = std::nullopt) {
  if (logits.ndim() != 2) throw ShapeError("cross_entropy: need [N,C] logits, got " + shape_str(logits.shape()));
  const Eigen::Index n = logits.dim(0), c = logits.dim(1);
  if (static_cast<Eigen::Index>(targets.size()) != n)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(n) + " rows");
  if (!row_weights.empty() && static_cast<Eigen::Index>(row_weights.size()) != n)
    throw ShapeError("cross_entropy: weight count mismatch");
  for (int t : targets)
    if (t < 0 || t >= c) throw std::invalid_argument("cross_entropy: target out of range");

  const S dn = static_cast<S>(denom.value_or(n));
  typename Tensor<S>::Storage probs(logits.numel());
  S loss = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    auto xr = logits.value().segment(r * c, c);
    auto pr = probs.segment(r * c, c);
    const S mx = xr.maxCoeff();
    pr = (xr - mx).exp();
    const S z = pr.sum();
    pr /= z;
    const S w = row_weights.empty() ? S(1) : row_weights[r];
    loss += w * (std::log(z) + mx - xr[targets[r]]);
  }
  typename Tensor<S>::Storage v(1);
  v[0] = loss / dn;

  auto ln = logits.node();
  return Tensor<S>::make_op({1}, std::move(v), {ln},
                            [ln, probs, targets, row_weights, dn, n, c](auto& self) {
                              if (!ln->requires_grad) return;
                              auto& g = ln->ensure_grad();
                              const S go = self.grad[0] / dn;
                              for (Eigen::Index r = 0; r < n; ++r) {
                                const S w = row_weights.empty() ? S(1) : row_weights[r];
                                if (w == S(0)) continue;
                                auto gr = g.segment(r * c, c);
                                gr += (go * w) * probs.segment(r * c, c);
                                gr[targets[r]] -= go * w;
                              }
                            });
}

}  // namespace pulseclust
