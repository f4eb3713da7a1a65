#pragma once

#include <Eigen/Dense>
#include <vector>

#include "bsjm/errors.hpp"

namespace bsjm {

enum class KnotStrategy { quantile, equal };

enum class BasisKind { value, derivative, integral };

struct BasisRow {
  Eigen::VectorXd values;  // length q
  double t = 0.0;
  BasisKind kind = BasisKind::value;
};

// Clamped cubic B-spline basis on [0, T]: q basis functions over q + 4 knots,
// the first and last four knots coinciding with the domain ends.  Interior
// knots are simple so the derivative exists everywhere.
class KnotVector {
 public:
  KnotVector(std::vector<double> knots, int q);

  int q() const { return q_; }
  double domain_start() const { return knots_.front(); }
  double domain_end() const { return knots_.back(); }
  const std::vector<double>& knots() const { return knots_; }

  // Row of the q cubic basis functions at t (Cox-de Boor).
  BasisRow eval_value(double t) const;

  // Row r with dot(beta, r) = psi'(t).  Built from the quadratic basis on the
  // same knot sequence; the order factor 3 is folded into the row so the dot
  // product is the exact derivative of the piecewise cubic.
  BasisRow eval_derivative(double t) const;

  // Row r with dot(beta, r) = integral of psi over [0, t], via the quartic
  // basis on the knot vector augmented by one knot on each side.
  BasisRow eval_integral(double t) const;

  Eigen::VectorXd greville_abscissae() const;

 private:
  void check_domain(double t) const;

  std::vector<double> knots_;          // q + 4 values
  std::vector<double> augmented_;      // q + 6 values, for the quartic basis
  int q_;
};

// Knot construction.  quantile places the q - 4 interior knots at the
// k/(q-3) quantiles of `times` (linear-interpolation empirical quantile);
// equal spaces them uniformly on (0, T).
KnotVector make_knots(const std::vector<double>& times, int q,
                      KnotStrategy strategy, double domain_end);

namespace detail {
// All n = knots.size() - degree - 1 basis functions of the given degree at t,
// with the left-limit convention at the right end of the domain.
Eigen::VectorXd all_basis(const std::vector<double>& knots, int degree,
                          double t);
}  // namespace detail

}  // namespace bsjm
