#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "s2bt/error.hpp"
#include "s2bt/grad/ops.hpp"
#include "s2bt/grad/tensor.hpp"
#include "s2bt/random.hpp"

namespace s2bt::model {

using grad::Shape;
using grad::Tape;
using grad::Tensor;

// Dropout configuration of one forward pass.
struct Mode {
  bool training = false;
  SplitMix64* rng = nullptr;

  static Mode eval() { return {}; }
  static Mode train(SplitMix64& rng) { return {true, &rng}; }
};

enum class Init { kUniformFanIn, kZeros, kOnes };

// Ordered, named collection of every learned tensor of a model. Order is the
// creation order, which fixes initialization and file layout.
template <std::floating_point T>
class ParameterSet {
 public:
  Tensor<T> add(std::string name, Shape shape, Init init, SplitMix64& rng, std::size_t fan_in = 0) {
    for (const auto& [n, t] : items_)
      if (n == name) throw ContractError("duplicate parameter name " + name);
    const std::size_t size = grad::shape_size(shape);
    std::vector<T> values(size, T{0});
    switch (init) {
      case Init::kZeros:
        break;
      case Init::kOnes:
        std::fill(values.begin(), values.end(), T{1});
        break;
      case Init::kUniformFanIn: {
        if (fan_in == 0) fan_in = shape.back();
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
    }
    auto t = Tensor<T>::leaf(std::move(shape), std::move(values), true);
    items_.emplace_back(std::move(name), t);
    return t;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  Tensor<T> at(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return t;
    throw ContractError("no parameter named " + name);
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [n, t] : items_) {
      Tensor<T> h = t;
      h.zero_grad();
    }
  }

  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> out;
    out.reserve(items_.size());
    for (const auto& [n, t] : items_) out.emplace_back(t.values().begin(), t.values().end());
    return out;
  }

  void restore(const std::vector<std::vector<T>>& values) {
    if (values.size() != items_.size()) throw ContractError("snapshot has wrong tensor count");
    for (std::size_t i = 0; i < items_.size(); ++i) {
      Tensor<T> t = items_[i].second;
      if (values[i].size() != t.size())
        throw ContractError("snapshot size mismatch for " + items_[i].first);
      std::copy(values[i].begin(), values[i].end(), t.values().begin());
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

// z = sigmoid(W_z x + U_z h + b_z)
// r = sigmoid(W_r x + U_r h + b_r)
// c = tanh(W_h x + U_h (r * h) + b_h)
// h' = (1 - z) * h + z * c
template <std::floating_point T>
struct GruCell {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor<T> w_z, u_z, b_z;
  Tensor<T> w_r, u_r, b_r;
  Tensor<T> w_h, u_h, b_h;

  static GruCell create(ParameterSet<T>& params, const std::string& prefix, std::size_t input,
                        std::size_t hidden, SplitMix64& rng) {
    GruCell c;
    c.input_dim = input;
    c.hidden_dim = hidden;
    auto gate = [&](const char* g, Tensor<T>& w, Tensor<T>& u, Tensor<T>& b) {
      w = params.add(prefix + ".W_" + g, {hidden, input}, Init::kUniformFanIn, rng, input);
      u = params.add(prefix + ".U_" + g, {hidden, hidden}, Init::kUniformFanIn, rng, hidden);
      b = params.add(prefix + ".b_" + g, {hidden}, Init::kUniformFanIn, rng, input);
    };
    gate("z", c.w_z, c.u_z, c.b_z);
    gate("r", c.w_r, c.u_r, c.b_r);
    gate("h", c.w_h, c.u_h, c.b_h);
    return c;
  }

  Tensor<T> step(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& h) const {
    if (x.size() != input_dim || h.size() != hidden_dim)
      throw DimensionError("GRU step: expected input " + std::to_string(input_dim) + " and state " +
                           std::to_string(hidden_dim) + ", got " + grad::shape_string(x.shape()) +
                           " and " + grad::shape_string(h.shape()));
    using namespace grad;
    auto z = sigmoid(tape, add(tape, affine(tape, w_z, x, b_z), matmul(tape, u_z, h)));
    auto r = sigmoid(tape, add(tape, affine(tape, w_r, x, b_r), matmul(tape, u_r, h)));
    auto c = grad::tanh(tape, add(tape, affine(tape, w_h, x, b_h), matmul(tape, u_h, mul(tape, r, h))));
    return add(tape, h, mul(tape, z, sub(tape, c, h)));
  }
};

// Bidirectional GRU with learned initial states. Position i of the output is
// [forward_i, backward_i].
template <std::floating_point T>
struct BiGru {
  GruCell<T> fw, bw;
  Tensor<T> h0_fw, h0_bw;

  static BiGru create(ParameterSet<T>& params, const std::string& prefix, std::size_t input,
                      std::size_t hidden, SplitMix64& rng) {
    BiGru g;
    g.fw = GruCell<T>::create(params, prefix + ".fw", input, hidden, rng);
    g.bw = GruCell<T>::create(params, prefix + ".bw", input, hidden, rng);
    g.h0_fw = params.add(prefix + ".h0_fw", {hidden}, Init::kZeros, rng);
    g.h0_bw = params.add(prefix + ".h0_bw", {hidden}, Init::kZeros, rng);
    return g;
  }

  std::size_t output_dim() const { return fw.hidden_dim + bw.hidden_dim; }

  std::vector<Tensor<T>> run(Tape<T>& tape, const std::vector<Tensor<T>>& xs) const {
    const std::size_t n = xs.size();
    std::vector<Tensor<T>> f(n), b(n), out(n);
    Tensor<T> h = h0_fw;
    for (std::size_t i = 0; i < n; ++i) f[i] = h = fw.step(tape, xs[i], h);
    h = h0_bw;
    for (std::size_t i = n; i-- > 0;) b[i] = h = bw.step(tape, xs[i], h);
    for (std::size_t i = 0; i < n; ++i) out[i] = grad::concat(tape, {f[i], b[i]});
    return out;
  }
};

template <std::floating_point T>
struct LayerNorm {
  Tensor<T> gain, bias;
  T eps = T(1e-5);

  static LayerNorm create(ParameterSet<T>& params, const std::string& prefix, std::size_t width,
                          double eps, SplitMix64& rng) {
    LayerNorm n;
    n.gain = params.add(prefix + ".gain", {width}, Init::kOnes, rng);
    n.bias = params.add(prefix + ".bias", {width}, Init::kZeros, rng);
    n.eps = static_cast<T>(eps);
    return n;
  }

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x) const {
    return grad::layer_norm(tape, x, gain, bias, eps);
  }
};

// Two-layer position-wise net: W2 relu(W1 x + b1) + b2.
template <std::floating_point T>
struct FeedForward {
  Tensor<T> w1, b1, w2, b2;

  static FeedForward create(ParameterSet<T>& params, const std::string& prefix, std::size_t width,
                            std::size_t inner, SplitMix64& rng) {
    FeedForward f;
    f.w1 = params.add(prefix + ".W1", {inner, width}, Init::kUniformFanIn, rng, width);
    f.b1 = params.add(prefix + ".b1", {inner}, Init::kUniformFanIn, rng, width);
    f.w2 = params.add(prefix + ".W2", {width, inner}, Init::kUniformFanIn, rng, inner);
    f.b2 = params.add(prefix + ".b2", {width}, Init::kUniformFanIn, rng, inner);
    return f;
  }

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x) const {
    return grad::affine(tape, w2, grad::relu(tape, grad::affine(tape, w1, x, b1)), b2);
  }
};

// Recurrent layer wrapped as an Add&Norm / feed-forward / Add block:
//   s   = norm_in(x)
//   c   = recurrent(s)
//   a   = norm_out(dropout(c) + s)
//   out = a + ffnn(a)
// The recurrent part is driven by the owner (whole-sequence BiGru for the
// encoder, one GruCell step at a time for the decoders); this type holds the
// parameters and the output half of the computation.
template <std::floating_point T, class Recurrent>
struct ResidualBlock {
  Recurrent ctx;
  LayerNorm<T> norm_in, norm_out;
  FeedForward<T> ffnn;

  static ResidualBlock create(ParameterSet<T>& params, const std::string& prefix,
                              std::size_t width, std::size_t ffn_width, double eps,
                              Recurrent ctx, SplitMix64& rng) {
    ResidualBlock b;
    b.norm_in = LayerNorm<T>::create(params, prefix + ".norm_in", width, eps, rng);
    b.ctx = std::move(ctx);
    b.norm_out = LayerNorm<T>::create(params, prefix + ".norm_out", width, eps, rng);
    b.ffnn = FeedForward<T>::create(params, prefix + ".ffnn", width, ffn_width, rng);
    return b;
  }

  Tensor<T> output(Tape<T>& tape, const Tensor<T>& ctx_out, const Tensor<T>& normalized_in,
                   double dropout, const Mode& mode) const {
    if (ctx_out.size() != normalized_in.size())
      throw DimensionError("residual block: recurrent output width " +
                           std::to_string(ctx_out.size()) + " differs from block width " +
                           std::to_string(normalized_in.size()));
    auto dropped = grad::dropout(tape, ctx_out, dropout, mode.training, mode.rng);
    auto a = norm_out(tape, grad::add(tape, dropped, normalized_in));
    return grad::add(tape, a, ffnn(tape, a));
  }
};

}  // namespace s2bt::model
