#pragma once

// Central finite differences against the tape's analytic gradient.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "am3/autodiff.hpp"
#include "am3/errors.hpp"
#include "am3/tensor.hpp"

namespace am3 {

/// Builds a scalar from `x` on the given tape.
using ScalarFunction = std::function<Var(Tape&, const Var& x)>;

inline double evaluate_scalar(const ScalarFunction& fn, const Tensor& x) {
  Tape tape(false);
  return fn(tape, tape.constant(x)).value().item();
}

/// Relative error |numeric - analytic| / (|analytic| + 1e-8) at one coordinate.
inline double gradient_relative_error(double numeric, double analytic) {
  return std::abs(numeric - analytic) / (std::abs(analytic) + 1e-8);
}

/// Maximum over coordinates of the relative error between the central
/// difference (fn(x + h e_i) - fn(x - h e_i)) / 2h and the backward pass.
inline double finite_difference_check(const ScalarFunction& fn, const Tensor& x, double step) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");
  Tensor analytic;
  {
    Tape tape;
    Var input = tape.variable(x);
    Var out = fn(tape, input);
    tape.backward(out);
    analytic = tape.gradient(input);
  }
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = evaluate_scalar(fn, probe);
    probe[i] = x[i] - step;
    const double down = evaluate_scalar(fn, probe);
    probe[i] = x[i];
    worst = std::max(worst, gradient_relative_error((up - down) / (2.0 * step), analytic[i]));
  }
  return worst;
}

/// Builds a scalar loss on the given tape, reading parameters through Tape::watch.
using LossFunction = std::function<Var(Tape&)>;

/// Same check for parameters: each coordinate of each parameter is nudged in
/// place (and restored) while the loss is re-evaluated on a fresh tape.
inline double parameter_finite_difference_check(const LossFunction& fn, std::span<Parameter* const> params,
                                                double step) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Var out = fn(tape);
    tape.backward(out);
    for (const Parameter* p : params) analytic.push_back(tape.gradient(*p));
  }
  auto eval = [&fn] {
    Tape tape(false);
    return fn(tape).value().item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& value = params[k]->value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + step;
      const double up = eval();
      value[i] = saved - step;
      const double down = eval();
      value[i] = saved;
      worst = std::max(worst, gradient_relative_error((up - down) / (2.0 * step), analytic[k][i]));
    }
  }
  return worst;
}

}  // namespace am3
