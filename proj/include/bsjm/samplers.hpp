#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "bsjm/errors.hpp"
#include "bsjm/rng.hpp"

namespace bsjm {

// Log-density with analytic gradient: returns (log f(x), d/dx log f(x)),
// up to an additive constant.
using LogDensityGrad = std::function<std::pair<double, double>(double)>;
using LogDensity = std::function<double(double)>;

struct ArsOptions {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  double concavity_tol = 1e-9;
  int max_rejections = 500;
};

// One exact draw from a log-concave target by adaptive rejection sampling
// with a tangent (derivative-based) envelope.  init_points must contain at
// least two abscissae; when a domain side is unbounded the corresponding
// extreme point must have a gradient pointing inward (mode bracketing).
double ars_sample(const LogDensityGrad& target,
                  const std::vector<double>& init_points, RandomStream& rng,
                  const ArsOptions& opts = {});

// Convenience wrapper that builds bracketing init points by stepping out
// from x0 in units of `step`.
double ars_sample_from(const LogDensityGrad& target, double x0, double step,
                       RandomStream& rng, const ArsOptions& opts = {});

// One stepping-out / shrinkage slice-sampling update leaving the target
// invariant.
double slice_sample(const LogDensity& target, double current, double width,
                    int max_steps, RandomStream& rng);

// Multivariate normal draw via the Cholesky factor of the covariance.
Eigen::VectorXd mvn_draw(const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& covariance, RandomStream& rng);

// Wishart draw via the Bartlett decomposition; E[draw] = dof * scale.
Eigen::MatrixXd wishart_draw(const Eigen::MatrixXd& scale, double dof,
                             RandomStream& rng);

// Gamma draw in the shape/rate parametrization (mean shape/rate).
double gamma_draw(double shape, double rate, RandomStream& rng);

}  // namespace bsjm
