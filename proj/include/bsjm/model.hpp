#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "bsjm/errors.hpp"
#include "bsjm/quadrature.hpp"
#include "bsjm/spline.hpp"

namespace bsjm {

// Which trajectory functionals enter the hazard regression.
enum class ModelKind { current, slope, history, full };

ModelKind parse_model_kind(const std::string& s);
std::string model_kind_name(ModelKind kind);

struct SubjectData {
  std::string id;
  Eigen::VectorXd obs_times;  // length m_i, months
  Eigen::MatrixXd y;          // m_i x L biomarker values
  Eigen::VectorXd x;          // length p, longitudinal-model covariates
  Eigen::VectorXd z;          // length p_z, hazard covariates
  double event_time = 0.0;    // s_i, months
  bool event = false;         // nu_i
};

struct LongitudinalParams {
  Eigen::MatrixXd sigma;              // L x L residual covariance
  Eigen::MatrixXd b0;                 // L x q population mean coefficients
  std::vector<Eigen::MatrixXd> v0;    // L matrices, q x q
  Eigen::MatrixXd alpha;              // L x p covariate effects
};

// Piecewise-constant baseline hazard.  cuts[0] = 0 and the last interval
// [cuts[J-1], infinity) is open-ended.
struct HazardSpec {
  std::vector<double> cuts;   // J interval start points, strictly increasing
  Eigen::VectorXd rates;      // J positive per-month rates

  int intervals() const { return static_cast<int>(cuts.size()); }
  double interval_end(int j) const {
    return j + 1 < intervals() ? cuts[static_cast<size_t>(j) + 1]
                               : std::numeric_limits<double>::infinity();
  }
  int interval_of(double t) const;
  void validate() const;
};

struct LinkParams {
  Eigen::VectorXd gamma;    // L
  Eigen::VectorXd gamma_s;  // L, zero unless kind is slope/full
  Eigen::VectorXd gamma_h;  // L, zero unless kind is history/full
  Eigen::VectorXd zeta;     // p_z
  ModelKind kind = ModelKind::current;

  static LinkParams zeros(int L, int p_z, ModelKind kind);
  bool slope_active() const { return kind == ModelKind::slope || kind == ModelKind::full; }
  bool history_active() const { return kind == ModelKind::history || kind == ModelKind::full; }
};

struct ModelConfig {
  ModelKind kind = ModelKind::current;
  int q = 6;
  KnotStrategy knot_strategy = KnotStrategy::quantile;
  int quad_order = 10;
};

// Link exponent gamma'psi(t) + gamma_s'psi'(t) + gamma_h'psi_int(t) for one
// subject; beta_i is L x q.
double link_exponent(double t, const Eigen::MatrixXd& beta_i,
                     const LinkParams& link, const KnotVector& basis);

// Full Gaussian log density of a subject's longitudinal observations,
// normalizing constants included.
double longitudinal_loglik(const SubjectData& subject,
                           const Eigen::MatrixXd& beta_i,
                           const Eigen::MatrixXd& sigma,
                           const KnotVector& basis);

double log_hazard(double t, const SubjectData& subject,
                  const Eigen::MatrixXd& beta_i, const LinkParams& link,
                  const HazardSpec& hazard, const KnotVector& basis);

// Cumulative hazard at `time` (defaults to the subject's event time).  Each
// hazard-interval integral is evaluated by Gauss-Legendre quadrature of the
// given order; exp(z'zeta) multiplies the sum exactly once, outside the
// integrand.
double cumulative_hazard_at(double time, const SubjectData& subject,
                            const Eigen::MatrixXd& beta_i,
                            const LinkParams& link, const HazardSpec& hazard,
                            const KnotVector& basis, int quad_order);

double cumulative_hazard(const SubjectData& subject,
                         const Eigen::MatrixXd& beta_i, const LinkParams& link,
                         const HazardSpec& hazard, const KnotVector& basis,
                         int quad_order);

// nu * log hazard(s_i) - cumulative hazard(s_i).
double survival_logdensity(const SubjectData& subject,
                           const Eigen::MatrixXd& beta_i,
                           const LinkParams& link, const HazardSpec& hazard,
                           const KnotVector& basis, int quad_order);

// Guard threshold for exponent arguments inside hazard integrands.
inline constexpr double kExponentGuard = 700.0;

}  // namespace bsjm
