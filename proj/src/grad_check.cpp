#include "fewgraph/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace fewgraph {

namespace {

double checked_eval(const std::function<Tensor()>& f) {
  const Tensor out = f();
  const double v = out.item();
  if (!std::isfinite(v)) {
    throw std::runtime_error("grad_check: function is non-finite at a perturbed point");
  }
  return v;
}

}  // namespace

double grad_check(const std::function<Tensor()>& f, std::span<Tensor> leaves, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  // Analytic pass on a fresh tape.
  std::vector<Tensor> analytic;
  {
    Tape tape;
    auto scope = tape.activate();
    Tensor out = f();
    if (out.numel() != 1) {
      throw std::invalid_argument("grad_check: function output must be scalar-shaped");
    }
    Gradients grads = backward(tape, out);
    analytic.reserve(leaves.size());
    for (const Tensor& leaf : leaves) analytic.push_back(grads.get(leaf));
  }

  // Central differences, evaluated with no active tape.
  double worst = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double x = values[i];
      values[i] = x + step;
      const double fp = checked_eval(f);
      values[i] = x - step;
      const double fm = checked_eval(f);
      values[i] = x;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[l].data()[i];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                  double step) {
  Tensor leaf = point;
  leaf.set_requires_grad(true);
  std::vector<Tensor> leaves{leaf};
  return grad_check([&]() { return f(leaf); }, leaves, step);
}

}  // namespace fewgraph
