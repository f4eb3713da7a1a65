#include "bsjm/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "bsjm/errors.hpp"

namespace bsjm {

static GaussLegendreRule compute_rule(int n) {
  // Jacobi matrix of the Legendre three-term recurrence; eigenvalues are the
  // nodes definitionally, weights come from the first eigenvector components.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = static_cast<double>(k) /
                     std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussLegendreRule rule;
  rule.nodes = es.eigenvalues();
  rule.weights.resize(n);
  for (int k = 0; k < n; ++k) {
    const double v = es.eigenvectors()(0, k);
    rule.weights[k] = 2.0 * v * v;
  }
  return rule;
}

const GaussLegendreRule& gauss_legendre(int n) {
  if (n < 2) throw InvalidParameter("Gauss-Legendre order must be >= 2");
  static std::map<int, GaussLegendreRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_rule(n)).first;
  return it->second;
}

}  // namespace bsjm
