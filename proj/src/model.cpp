#include "bsjm/model.hpp"

#include <algorithm>
#include <cmath>

namespace bsjm {

ModelKind parse_model_kind(const std::string& s) {
  if (s == "current") return ModelKind::current;
  if (s == "slope") return ModelKind::slope;
  if (s == "history") return ModelKind::history;
  if (s == "full") return ModelKind::full;
  throw InvalidParameter("unknown model kind: " + s);
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::current: return "current";
    case ModelKind::slope: return "slope";
    case ModelKind::history: return "history";
    case ModelKind::full: return "full";
  }
  return "?";
}

int HazardSpec::interval_of(double t) const {
  int j = intervals() - 1;
  while (j > 0 && t < cuts[static_cast<size_t>(j)]) --j;
  return j;
}

void HazardSpec::validate() const {
  if (cuts.empty() || cuts.front() != 0.0) {
    throw InvalidParameter("hazard jump points must start at 0");
  }
  if (!std::is_sorted(cuts.begin(), cuts.end()) ||
      std::adjacent_find(cuts.begin(), cuts.end()) != cuts.end()) {
    throw InvalidParameter("hazard jump points must be strictly increasing");
  }
  if (rates.size() != static_cast<Eigen::Index>(cuts.size()) || (rates.array() <= 0.0).any()) {
    throw InvalidParameter("hazard rates must be positive, one per interval");
  }
}

LinkParams LinkParams::zeros(int L, int p_z, ModelKind kind) {
  LinkParams lp;
  lp.gamma = Eigen::VectorXd::Zero(L);
  lp.gamma_s = Eigen::VectorXd::Zero(L);
  lp.gamma_h = Eigen::VectorXd::Zero(L);
  lp.zeta = Eigen::VectorXd::Zero(p_z);
  lp.kind = kind;
  return lp;
}

double link_exponent(double t, const Eigen::MatrixXd& beta_i,
                     const LinkParams& link, const KnotVector& basis) {
  double e = link.gamma.dot(beta_i * basis.eval_value(t).values);
  if (link.slope_active()) {
    e += link.gamma_s.dot(beta_i * basis.eval_derivative(t).values);
  }
  if (link.history_active()) {
    e += link.gamma_h.dot(beta_i * basis.eval_integral(t).values);
  }
  return e;
}

double longitudinal_loglik(const SubjectData& subject,
                           const Eigen::MatrixXd& beta_i,
                           const Eigen::MatrixXd& sigma,
                           const KnotVector& basis) {
  const Eigen::Index L = sigma.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw NonPosDefCovariance("longitudinal_loglik: residual covariance not positive definite");
  }
  double logdet = 0.0;
  for (Eigen::Index k = 0; k < L; ++k) logdet += 2.0 * std::log(llt.matrixL()(k, k));
  const double norm_const = -0.5 * (static_cast<double>(L) * std::log(2.0 * M_PI) + logdet);

  double ll = 0.0;
  for (Eigen::Index j = 0; j < subject.obs_times.size(); ++j) {
    const Eigen::VectorXd psi = beta_i * basis.eval_value(subject.obs_times[j]).values;
    const Eigen::VectorXd r = subject.y.row(j).transpose() - psi;
    ll += norm_const - 0.5 * r.dot(llt.solve(r));
  }
  return ll;
}

double log_hazard(double t, const SubjectData& subject,
                  const Eigen::MatrixXd& beta_i, const LinkParams& link,
                  const HazardSpec& hazard, const KnotVector& basis) {
  if (t < 0.0) throw OutOfDomain("log_hazard: negative time");
  const int j = hazard.interval_of(t);
  return std::log(hazard.rates[j]) + link_exponent(t, beta_i, link, basis) +
         subject.z.dot(link.zeta);
}

double cumulative_hazard_at(double time, const SubjectData& subject,
                            const Eigen::MatrixXd& beta_i,
                            const LinkParams& link, const HazardSpec& hazard,
                            const KnotVector& basis, int quad_order) {
  if (time < 0.0) throw OutOfDomain("cumulative_hazard: negative time");
  if (quad_order < 2) throw InvalidParameter("quadrature order must be >= 2");
  const GaussLegendreRule& rule = gauss_legendre(quad_order);
  const double zeta_term = subject.z.dot(link.zeta);
  if (std::abs(zeta_term) > kExponentGuard) {
    throw ExponentOverflow("cumulative_hazard: z'zeta exceeds the exponent guard");
  }
  // Each hazard-interval integral is itself split at interior spline knots:
  // the integrand is exp of a single polynomial piece per panel, so the rule
  // converges at full order instead of stalling on knot discontinuities.
  const std::vector<double>& knots = basis.knots();
  double acc = 0.0;
  for (int j = 0; j < hazard.intervals(); ++j) {
    const double a = hazard.cuts[static_cast<size_t>(j)];
    const double b = std::min(hazard.interval_end(j), time);
    if (b <= a) continue;
    double integral = 0.0;
    double lo = a;
    for (size_t s = 4; s + 4 <= knots.size(); ++s) {
      const double cut = s + 4 < knots.size() ? knots[s] : b;
      const double hi = std::min(cut, b);
      if (hi > lo) {
        const double half = 0.5 * (hi - lo);
        const double mid = 0.5 * (lo + hi);
        for (int k = 0; k < quad_order; ++k) {
          const double u = mid + half * rule.nodes[k];
          const double e = link_exponent(u, beta_i, link, basis);
          if (std::abs(e) > kExponentGuard) {
            throw ExponentOverflow("cumulative_hazard: integrand exponent exceeds the guard");
          }
          integral += half * rule.weights[k] * std::exp(e);
        }
        lo = hi;
      }
      if (lo >= b) break;
    }
    acc += hazard.rates[j] * integral;
  }
  return std::exp(zeta_term) * acc;
}

double cumulative_hazard(const SubjectData& subject,
                         const Eigen::MatrixXd& beta_i, const LinkParams& link,
                         const HazardSpec& hazard, const KnotVector& basis,
                         int quad_order) {
  return cumulative_hazard_at(subject.event_time, subject, beta_i, link,
                              hazard, basis, quad_order);
}

double survival_logdensity(const SubjectData& subject,
                           const Eigen::MatrixXd& beta_i,
                           const LinkParams& link, const HazardSpec& hazard,
                           const KnotVector& basis, int quad_order) {
  double ll = -cumulative_hazard(subject, beta_i, link, hazard, basis, quad_order);
  if (subject.event) {
    ll += log_hazard(subject.event_time, subject, beta_i, link, hazard, basis);
  }
  return ll;
}

}  // namespace bsjm
