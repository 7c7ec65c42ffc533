#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fewgraph/rng.hpp"
#include "fewgraph/tensor.hpp"

namespace fewgraph {

/// Ordered registry of named trainable tensors. Registration order is the
/// optimizer-state order, so it must be deterministic per configuration.
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor& add(const std::string& name, Tensor t) {
    if (find(name) != nullptr) {
      throw std::invalid_argument("duplicate parameter name: " + name);
    }
    t.set_requires_grad(true);
    items.emplace_back(name, std::move(t));
    return items.back().second;
  }

  Tensor* find(const std::string& name) {
    for (auto& [n, t] : items) {
      if (n == name) return &t;
    }
    return nullptr;
  }

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : items) {
      if (n == name) return &t;
    }
    return nullptr;
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items) n += t.numel();
    return n;
  }
};

inline Tensor uniform_init(Shape shape, double bound, rng::Stream& stream) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = stream.uniform(-bound, bound);
  return t;
}

/// Affine map y = x W + b with W of shape {in, out}. Row-broadcasts the bias
/// for matrix inputs.
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  return y.rank() == 2 ? add_row(y, b) : add(y, b);
}

}  // namespace fewgraph
