#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fewgraph/tensor.hpp"

namespace fewgraph {

/// Max over coordinates of |analytic - central difference| /
/// max(1, |analytic|, |central difference|). `f` must return a scalar-shaped
/// tensor and be finite in a `step`-neighborhood of the evaluation point.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                  double step);

/// Same check, perturbing every coordinate of every tensor in `leaves`.
/// `f` re-evaluates the computation from the current leaf values.
double grad_check(const std::function<Tensor()>& f, std::span<Tensor> leaves, double step);

struct GradCheckItem {
  std::string name;
  double max_rel_error = 0.0;
};

/// Finite-difference sweep over every autodiff primitive, the five attention
/// kinds, a GIN layer, and the end-to-end episode loss, each at 10 seeded
/// random points.
std::vector<GradCheckItem> run_gradient_suite(std::uint64_t seed);

}  // namespace fewgraph
