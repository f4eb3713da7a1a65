#pragma once

#include <Eigen/Dense>

namespace bsjm {

struct GaussLegendreRule {
  Eigen::VectorXd nodes;    // on (-1, 1)
  Eigen::VectorXd weights;  // sum to 2
};

// Nodes and weights of the n-point Gauss-Legendre rule (Golub-Welsch).
// Results are cached per order.
const GaussLegendreRule& gauss_legendre(int n);

}  // namespace bsjm
