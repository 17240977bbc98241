#include "jobgen/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jobgen/common/error.hpp"

namespace jobgen::tensor {

namespace {

double relative_error(double analytic, double numeric) {
  if (std::isnan(analytic) || std::isnan(numeric)) return std::numeric_limits<double>::quiet_NaN();
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

double worse(double acc, double err) {
  if (std::isnan(acc) || std::isnan(err)) return std::numeric_limits<double>::quiet_NaN();
  return std::max(acc, err);
}

}  // namespace

double finite_difference_check(const std::function<double(const Tensor&)>& f, const Tensor& point,
                               const Tensor& analytic, double step) {
  if (analytic.numel() != point.numel()) throw ShapeError("finite_difference_check: gradient/point size mismatch");
  Tensor x = point;
  double max_err = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    max_err = worse(max_err, relative_error(analytic[i], (up - down) / (2.0 * step)));
  }
  return max_err;
}

double finite_difference_check(const std::function<Var(Tape&, Var)>& build, const Tensor& point, double step) {
  Tape tape;
  Var x = variable(tape, point);
  Var y = build(tape, x);
  tape.backward(y.id);
  Tensor analytic = tape.gradient(x.id);
  auto f = [&build](const Tensor& at) {
    Tape t;
    Var v = constant(t, at);
    return build(t, v).value().item();
  };
  return finite_difference_check(f, point, analytic, step);
}

double parameter_gradient_check(const std::function<Var(Tape&)>& build, std::span<Parameter* const> params,
                                double step) {
  Gradients grads;
  {
    Tape tape;
    Var loss = build(tape);
    grads = tape.backward(loss.id);
  }
  auto eval = [&build]() {
    Tape t;
    return build(t).value().item();
  };
  double max_err = 0.0;
  for (Parameter* p : params) {
    const Tensor* g = grads.find(*p);
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + step;
      const double up = eval();
      p->value[i] = orig - step;
      const double down = eval();
      p->value[i] = orig;
      const double analytic = g ? (*g)[i] : 0.0;
      max_err = worse(max_err, relative_error(analytic, (up - down) / (2.0 * step)));
    }
  }
  return max_err;
}

}  // namespace jobgen::tensor
