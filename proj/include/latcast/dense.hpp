#pragma once

#include <Eigen/Core>

// Dense type aliases and small elementwise helpers shared by the pipeline and
// the forecaster. Eigen is the only math dependency of the project.

namespace latcast {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

// Elementwise logistic; relies on IEEE semantics (exp overflow -> inf -> 0).
template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 / (1.0 + (-x).exp());
}

template <typename Derived>
auto relu(const Eigen::ArrayBase<Derived>& x) {
  return x.max(0.0);
}

// Subgradient at 0 is 0, matching the backward pass contract.
template <typename Derived>
auto relu_grad(const Eigen::ArrayBase<Derived>& x) {
  return (x > 0.0).template cast<double>();
}

}  // namespace latcast
