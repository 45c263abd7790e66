#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s2bt/error.hpp"
#include "s2bt/grad/tensor.hpp"
#include "s2bt/random.hpp"

// Differentiable operations. Every function takes the tape it records onto;
// results require grad iff the tape has grad enabled and some input does.

namespace s2bt::grad {

namespace testing {
// Multiplies the sigmoid backward rule. Anything but 1 breaks the gradient;
// used to check that the gradient checker actually catches a wrong rule.
inline thread_local double sigmoid_backward_scale = 1.0;
}  // namespace testing

namespace detail {

template <std::floating_point T>
Tensor<T> make_result(Tape<T>& tape, Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  if (tape.grad_enabled())
    for (const Tensor<T>* in : inputs) needs = needs || in->requires_grad();
  if (needs) {
    n->requires_grad = true;
    n->backward = std::move(backward);
    tape.record(n);
  }
  return Tensor<T>(std::move(n));
}

template <std::floating_point T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
}

template <std::floating_point T, class F, class D>
Tensor<T> unary(Tape<T>& tape, const Tensor<T>& x, F f, D dfdx_from_xy) {
  std::vector<T> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  auto xp = x.ptr();
  return make_result<T>(tape, x.shape(), std::move(out), {&x}, [xp, dfdx_from_xy](Node<T>& self) {
    if (!xp->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      xp->grad[i] += self.grad[i] * dfdx_from_xy(xp->value[i], self.value[i]);
  });
}

}  // namespace detail

// a[m x k] * b[k x n] -> [m x n]; a rank-1 b[k] is treated as a column and
// gives [m].
template <std::floating_point T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2) || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.rank() == 2 ? b.dim(1) : 1;
  std::vector<T> out(m * n, T{0});
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  Shape shape = b.rank() == 2 ? Shape{m, n} : Shape{m};
  auto ap = a.ptr();
  auto bp = b.ptr();
  return detail::make_result<T>(tape, std::move(shape), std::move(out), {&a, &b},
                                [ap, bp, m, k, n](Node<T>& self) {
    const auto& g = self.grad;
    if (ap->requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T acc{0};
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bp->value[p * n + j];
          ap->grad[i * k + p] += acc;
        }
    if (bp->requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = ap->value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) bp->grad[p * n + j] += aip * g[i * n + j];
        }
  });
}

// w[m x k] * x[k] + b[m] as one node.
template <std::floating_point T>
Tensor<T> affine(Tape<T>& tape, const Tensor<T>& w, const Tensor<T>& x, const Tensor<T>& b) {
  if (w.rank() != 2 || x.rank() != 1 || b.rank() != 1 || w.dim(1) != x.dim(0) ||
      w.dim(0) != b.dim(0))
    throw DimensionError("affine: incompatible shapes " + shape_string(w.shape()) + ", " +
                         shape_string(x.shape()) + ", " + shape_string(b.shape()));
  const std::size_t m = w.dim(0), k = w.dim(1);
  std::vector<T> out(b.values().begin(), b.values().end());
  auto wv = w.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    T acc{0};
    const T* row = wv.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) acc += row[p] * xv[p];
    out[i] += acc;
  }
  auto wp = w.ptr();
  auto xp = x.ptr();
  auto bp = b.ptr();
  return detail::make_result<T>(tape, {m}, std::move(out), {&w, &x, &b},
                                [wp, xp, bp, m, k](Node<T>& self) {
    const auto& g = self.grad;
    if (wp->requires_grad)
      for (std::size_t i = 0; i < m; ++i) {
        T* row = wp->grad.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) row[p] += g[i] * xp->value[p];
      }
    if (xp->requires_grad)
      for (std::size_t i = 0; i < m; ++i) {
        const T* row = wp->value.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) xp->grad[p] += g[i] * row[p];
      }
    if (bp->requires_grad)
      for (std::size_t i = 0; i < m; ++i) bp->grad[i] += g[i];
  });
}

template <std::floating_point T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto ap = a.ptr();
  auto bp = b.ptr();
  return detail::make_result<T>(tape, a.shape(), std::move(out), {&a, &b}, [ap, bp](Node<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (ap->requires_grad) ap->grad[i] += self.grad[i];
      if (bp->requires_grad) bp->grad[i] += self.grad[i];
    }
  });
}

template <std::floating_point T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  auto ap = a.ptr();
  auto bp = b.ptr();
  return detail::make_result<T>(tape, a.shape(), std::move(out), {&a, &b}, [ap, bp](Node<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (ap->requires_grad) ap->grad[i] += self.grad[i];
      if (bp->requires_grad) bp->grad[i] -= self.grad[i];
    }
  });
}

template <std::floating_point T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto ap = a.ptr();
  auto bp = b.ptr();
  return detail::make_result<T>(tape, a.shape(), std::move(out), {&a, &b}, [ap, bp](Node<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (ap->requires_grad) ap->grad[i] += self.grad[i] * bp->value[i];
      if (bp->requires_grad) bp->grad[i] += self.grad[i] * ap->value[i];
    }
  });
}

template <std::floating_point T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T c) {
  return detail::unary(tape, x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <std::floating_point T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, x, [](T v) { return T{1} / (T{1} + std::exp(-v)); },
      [](T, T s) { return static_cast<T>(testing::sigmoid_backward_scale) * s * (T{1} - s); });
}

template <std::floating_point T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, x, [](T v) { return std::tanh(v); }, [](T, T t) { return T{1} - t * t; });
}

template <std::floating_point T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

// Concatenation along the last dimension.
template <std::floating_point T>
Tensor<T> concat(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat: no parts");
  const Shape& first = parts.front().shape();
  const Shape lead(first.begin(), first.end() - 1);
  const std::size_t rows = shape_size(lead);
  std::size_t width = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin()))
      throw DimensionError("concat: leading dimensions differ: " + shape_string(first) + " vs " +
                           shape_string(s));
    widths.push_back(s.back());
    width += s.back();
  }
  if (parts.size() == 1) return parts.front();
  std::vector<T> out(rows * width);
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    auto v = parts[pi].values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * widths[pi], widths[pi], out.data() + r * width + offset);
    offset += widths[pi];
  }
  Shape shape = lead;
  shape.push_back(width);
  std::vector<std::shared_ptr<Node<T>>> ptrs;
  for (const auto& p : parts) ptrs.push_back(p.ptr());
  auto backward = [ptrs, widths, rows, width](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < ptrs.size(); ++pi) {
      if (ptrs[pi]->requires_grad)
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[pi]; ++j)
            ptrs[pi]->grad[r * widths[pi] + j] += self.grad[r * width + off + j];
      off += widths[pi];
    }
  };
  // make_result only inspects requires_grad, so any grad-requiring part works
  // as the representative input.
  const Tensor<T>* rep = &parts.front();
  for (const auto& p : parts)
    if (p.requires_grad()) rep = &p;
  return detail::make_result<T>(tape, std::move(shape), std::move(out), {rep}, std::move(backward));
}

// x_i - log sum_j exp(x_j), max-shifted.
template <std::floating_point T>
Tensor<T> log_softmax(Tape<T>& tape, const Tensor<T>& x) {
  if (x.rank() != 1) throw DimensionError("log_softmax expects a vector, got " + shape_string(x.shape()));
  auto xv = x.values();
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : xv) {
    if (!std::isfinite(v)) throw NumericError("log_softmax: non-finite input");
    mx = std::max(mx, v);
  }
  T sum{0};
  for (T v : xv) sum += std::exp(v - mx);
  const T lse = mx + std::log(sum);
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] - lse;
  auto xp = x.ptr();
  return detail::make_result<T>(tape, x.shape(), std::move(out), {&x}, [xp](Node<T>& self) {
    if (!xp->requires_grad) return;
    T gsum{0};
    for (T g : self.grad) gsum += g;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      xp->grad[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
  });
}

// gain * (x - mean) / sqrt(var + eps) + bias, population variance.
template <std::floating_point T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps) {
  if (x.rank() != 1 || x.size() < 2)
    throw DimensionError("layer_norm needs a vector of length >= 2, got " + shape_string(x.shape()));
  detail::require_same_shape("layer_norm gain", x, gain);
  detail::require_same_shape("layer_norm bias", x, bias);
  if (!(eps > T{0})) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t n = x.size();
  auto xv = x.values();
  T mean{0};
  for (T v : xv) mean += v;
  mean /= static_cast<T>(n);
  T var{0};
  for (T v : xv) var += (v - mean) * (v - mean);
  var /= static_cast<T>(n);
  const T inv_std = T{1} / std::sqrt(var + eps);
  std::vector<T> xhat(n), out(n);
  for (std::size_t i = 0; i < n; ++i) {
    xhat[i] = (xv[i] - mean) * inv_std;
    out[i] = gain[i] * xhat[i] + bias[i];
  }
  auto xp = x.ptr();
  auto gp = gain.ptr();
  auto bp = bias.ptr();
  return detail::make_result<T>(
      tape, x.shape(), std::move(out), {&x, &gain, &bias},
      [xp, gp, bp, xhat = std::move(xhat), inv_std, n](Node<T>& self) {
        const auto& g = self.grad;
        if (gp->requires_grad)
          for (std::size_t i = 0; i < n; ++i) gp->grad[i] += g[i] * xhat[i];
        if (bp->requires_grad)
          for (std::size_t i = 0; i < n; ++i) bp->grad[i] += g[i];
        if (xp->requires_grad) {
          T mean_d{0}, mean_dx{0};
          for (std::size_t i = 0; i < n; ++i) {
            const T d = g[i] * gp->value[i];
            mean_d += d;
            mean_dx += d * xhat[i];
          }
          mean_d /= static_cast<T>(n);
          mean_dx /= static_cast<T>(n);
          for (std::size_t i = 0; i < n; ++i) {
            const T d = g[i] * gp->value[i];
            xp->grad[i] += inv_std * (d - mean_d - xhat[i] * mean_dx);
          }
        }
      });
}

// Inverted dropout: identity outside training or when p == 0.
template <std::floating_point T>
Tensor<T> dropout(Tape<T>& tape, const Tensor<T>& x, double p, bool training, SplitMix64* rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  if (rng == nullptr) throw ContractError("dropout in training mode needs a generator");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng->bernoulli(p) ? T{0} : keep_scale;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  auto xp = x.ptr();
  return detail::make_result<T>(tape, x.shape(), std::move(out), {&x},
                                [xp, mask = std::move(mask)](Node<T>& self) {
    if (!xp->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) xp->grad[i] += self.grad[i] * mask[i];
  });
}

template <std::floating_point T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  T s{0};
  for (T v : x.values()) s += v;
  auto xp = x.ptr();
  return detail::make_result<T>(tape, {1}, {s}, {&x}, [xp](Node<T>& self) {
    if (!xp->requires_grad) return;
    for (auto& g : xp->grad) g += self.grad[0];
  });
}

// Element-wise sum of equally shaped tensors.
template <std::floating_point T>
Tensor<T> add_n(Tape<T>& tape, const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ContractError("add_n: no operands");
  if (xs.size() == 1) return xs.front();
  std::vector<T> out(xs.front().size(), T{0});
  std::vector<std::shared_ptr<Node<T>>> ptrs;
  const Tensor<T>* rep = &xs.front();
  for (const auto& x : xs) {
    detail::require_same_shape("add_n", xs.front(), x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
    ptrs.push_back(x.ptr());
    if (x.requires_grad()) rep = &x;
  }
  return detail::make_result<T>(tape, xs.front().shape(), std::move(out), {rep}, [ptrs](Node<T>& self) {
    for (const auto& p : ptrs)
      if (p->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

// Scalar x[index].
template <std::floating_point T>
Tensor<T> pick(Tape<T>& tape, const Tensor<T>& x, std::size_t index) {
  if (index >= x.size())
    throw ContractError("pick: index " + std::to_string(index) + " out of range for " +
                        shape_string(x.shape()));
  auto xp = x.ptr();
  return detail::make_result<T>(tape, {1}, {x[index]}, {&x}, [xp, index](Node<T>& self) {
    if (xp->requires_grad) xp->grad[index] += self.grad[0];
  });
}

// Row `row` of a [rows x width] table.
template <std::floating_point T>
Tensor<T> lookup(Tape<T>& tape, const Tensor<T>& table, std::size_t row) {
  if (table.rank() != 2) throw DimensionError("lookup: table must be a matrix");
  if (row >= table.dim(0))
    throw ContractError("lookup: id " + std::to_string(row) + " out of range for table " +
                        shape_string(table.shape()));
  const std::size_t width = table.dim(1);
  auto tv = table.values();
  std::vector<T> out(tv.begin() + row * width, tv.begin() + (row + 1) * width);
  auto tp = table.ptr();
  return detail::make_result<T>(tape, {width}, std::move(out), {&table}, [tp, row, width](Node<T>& self) {
    if (!tp->requires_grad) return;
    for (std::size_t j = 0; j < width; ++j) tp->grad[row * width + j] += self.grad[j];
  });
}

// Sum of squared entries.
template <std::floating_point T>
Tensor<T> sum_squares(Tape<T>& tape, const Tensor<T>& x) {
  T s{0};
  for (T v : x.values()) s += v * v;
  auto xp = x.ptr();
  return detail::make_result<T>(tape, {1}, {s}, {&x}, [xp](Node<T>& self) {
    if (!xp->requires_grad) return;
    for (std::size_t i = 0; i < xp->grad.size(); ++i) xp->grad[i] += T{2} * self.grad[0] * xp->value[i];
  });
}

}  // namespace s2bt::grad
