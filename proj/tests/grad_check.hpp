#pragma once

// Central finite-difference gradient checks for the 64-bit engine.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "stm/ops.hpp"

namespace stm::testing {

using LossFn = std::function<nn::Tensor<double>(nn::Tape<double>&)>;

struct GradCheckResult {
  double worst_relative = 0.0;
  std::int64_t checked = 0;
  std::int64_t skipped_kinks = 0;  // coordinates whose +-step straddled a relu/pool switch
};

// Gradients below this are under the roundoff resolution of a 1e-5 central
// difference at 1e-4 relative tolerance, so the error is measured against it.
inline constexpr double kGradFloor = 1e-5;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
}

// Compares analytic gradients of `loss` against central differences for up to
// `per_tensor` randomly chosen coordinates of each tensor in `wrt`. A coordinate
// whose two evaluations take different relu/pool branches is not differentiable
// at that scale; it is skipped and another one drawn.
inline GradCheckResult check_gradients(const LossFn& loss, std::vector<nn::Tensor<double>> wrt,
                                       int per_tensor = 20, double step = 1e-5,
                                       std::uint64_t seed = 1) {
  for (auto& t : wrt) t.zero_grad();
  {
    nn::Tape<double> tape;
    auto l = loss(tape);
    tape.backward(l);
  }
  std::mt19937_64 rng(seed);
  GradCheckResult result;
  const auto evaluate = [&](double& v, double at, std::uint64_t& signature) {
    v = at;
    nn::Tape<double> tape(false);
    tape.track_branches(true);
    const double f = loss(tape).item();
    signature = tape.branch_signature();
    return f;
  };
  for (auto& t : wrt) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::int64_t> coords(static_cast<std::size_t>(t.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<std::int64_t>(i);
    std::shuffle(coords.begin(), coords.end(), rng);
    int done = 0;
    for (const auto i : coords) {
      if (done == per_tensor) break;
      auto& v = t.values()[static_cast<std::size_t>(i)];
      const double saved = v;
      std::uint64_t sig_plus = 0, sig_minus = 0, sig_base = 0;
      const double fp = evaluate(v, saved + step, sig_plus);
      const double fm = evaluate(v, saved - step, sig_minus);
      evaluate(v, saved, sig_base);
      v = saved;
      if (sig_plus != sig_base || sig_minus != sig_base) {
        ++result.skipped_kinks;
        continue;
      }
      const double numeric = (fp - fm) / (2 * step);
      result.worst_relative = std::max(result.worst_relative,
                                       relative_error(analytic[static_cast<std::size_t>(i)], numeric));
      ++result.checked;
      ++done;
    }
  }
  return result;
}

inline nn::Tensor<double> random_tensor(nn::Shape shape, std::uint64_t seed, bool requires_grad = true,
                                        double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(nn::numel(shape)));
  for (auto& x : v) x = u(rng);
  return nn::Tensor<double>(std::move(shape), std::move(v), requires_grad);
}

// Scalar projection sum_i r_i y_i with fixed random r, so every output
// element gets a distinct upstream gradient.
inline nn::Tensor<double> project(nn::Tape<double>& tape, const nn::Tensor<double>& y,
                                  std::uint64_t seed = 99) {
  const auto flat = nn::reshape(tape, y, {1, y.size()});
  const auto r = random_tensor({y.size(), 1}, seed, false);
  return nn::reshape(tape, nn::linear(tape, flat, r, nn::Tensor<double>()), {1});
}

}  // namespace stm::testing
