#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"

namespace sculpt::testing {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

using Builder = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;
using Input = std::pair<Shape, std::vector<double>>;

inline std::vector<double> random_values(std::int64_t n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

inline Input random_input(Shape shape, std::uint64_t seed, double scale = 1.0) {
  const auto n = ad::numel(shape);
  return {std::move(shape), random_values(n, seed, scale)};
}

// sum(c ⊙ y) with a fixed random c, so every output entry matters.
inline Tensor weighted_sum(Tape& tape, const Tensor& y, std::uint64_t seed = 99) {
  return ad::sum(ad::mul(y, tape.constant(y.shape(), random_values(y.numel(), seed))));
}

// Normwise relative error ‖fd − ad‖ / max(‖fd‖, ‖ad‖) between central
// differences and reverse-mode gradients of the scalar f over all inputs.
inline double fd_relative_error(const Builder& f, const std::vector<Input>& inputs, double eps = 1e-6) {
  std::vector<double> analytic;
  {
    Tape tape;
    std::vector<Tensor> xs;
    for (const auto& [s, v] : inputs) xs.push_back(tape.variable(s, v));
    const Tensor loss = f(tape, xs);
    for (const auto& g : tape.grad(loss, xs)) analytic.insert(analytic.end(), g.value().begin(), g.value().end());
  }
  auto eval = [&](std::size_t which, std::size_t k, double delta) {
    Tape tape;
    std::vector<Tensor> xs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      auto v = inputs[i].second;
      if (i == which) v[k] += delta;
      xs.push_back(tape.variable(inputs[i].first, std::move(v)));
    }
    return f(tape, xs).item();
  };
  std::vector<double> numeric;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (std::size_t k = 0; k < inputs[i].second.size(); ++k)
      numeric.push_back((eval(i, k, eps) - eval(i, k, -eps)) / (2.0 * eps));
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    diff += (numeric[k] - analytic[k]) * (numeric[k] - analytic[k]);
    na += analytic[k] * analytic[k];
    nn += numeric[k] * numeric[k];
  }
  const double denom = std::sqrt(std::max(na, nn));
  return denom > 0.0 ? std::sqrt(diff) / denom : std::sqrt(diff);
}

}  // namespace sculpt::testing
