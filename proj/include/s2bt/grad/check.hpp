#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "s2bt/grad/tensor.hpp"

namespace s2bt::grad {

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

// Compares reverse-mode gradients of `loss_fn` against central differences
// for every entry of every named tensor. loss_fn must rebuild the loss from
// the current tensor values on the tape it is handed.
template <std::floating_point T>
std::vector<TensorCheck> finite_difference_check(
    const std::vector<std::pair<std::string, Tensor<T>>>& tensors,
    const std::function<Tensor<T>(Tape<T>&)>& loss_fn, double h = 1e-5) {
  for (auto [name, t] : tensors) t.zero_grad();
  {
    Tape<T> tape;
    Tensor<T> loss = loss_fn(tape);
    tape.backward(loss);
  }
  std::vector<TensorCheck> report;
  for (auto [name, t] : tensors) {
    TensorCheck c;
    c.name = name;
    auto vals = t.values();
    const std::vector<T> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const T orig = vals[i];
      auto eval = [&](T v) {
        vals[i] = v;
        Tape<T> tape;
        tape.set_grad_enabled(false);
        return static_cast<double>(loss_fn(tape).item());
      };
      const double plus = eval(orig + static_cast<T>(h));
      const double minus = eval(orig - static_cast<T>(h));
      vals[i] = orig;
      const double numeric = (plus - minus) / (2.0 * h);
      const double err = relative_error(static_cast<double>(analytic[i]), numeric);
      if (i == 0 || err > c.max_rel_error) {
        c.max_rel_error = err;
        c.worst_index = i;
        c.analytic = static_cast<double>(analytic[i]);
        c.numeric = numeric;
      }
    }
    t.zero_grad();
    report.push_back(std::move(c));
  }
  return report;
}

}  // namespace s2bt::grad
