#include "bsjm/samplers.hpp"

#include <algorithm>
#include <cmath>

namespace bsjm {

namespace {

struct HullPoint {
  double x;
  double h;   // log density
  double hp;  // gradient
};

// Tangent-envelope state for ARS.  Segment i covers [z[i], z[i+1]] and is
// bounded above by the tangent at points[i].
struct Envelope {
  std::vector<HullPoint> points;
  std::vector<double> z;  // size points.size() + 1, includes domain bounds
  double lower, upper;
  double tol;

  double tangent(int i, double x) const {
    return points[static_cast<size_t>(i)].h +
           points[static_cast<size_t>(i)].hp * (x - points[static_cast<size_t>(i)].x);
  }

  void check_concavity() const {
    for (size_t i = 0; i + 1 < points.size(); ++i) {
      if (points[i].hp < points[i + 1].hp - tol) {
        throw NotLogConcave("ARS: tangent slopes are not decreasing");
      }
    }
  }

  void rebuild_intersections() {
    const int K = static_cast<int>(points.size());
    z.assign(static_cast<size_t>(K) + 1, 0.0);
    z.front() = lower;
    z.back() = upper;
    for (int i = 0; i + 1 < K; ++i) {
      const HullPoint& a = points[static_cast<size_t>(i)];
      const HullPoint& b = points[static_cast<size_t>(i + 1)];
      double zi;
      if (std::abs(a.hp - b.hp) < 1e-13) {
        zi = 0.5 * (a.x + b.x);
      } else {
        zi = (b.h - a.h - b.x * b.hp + a.x * a.hp) / (a.hp - b.hp);
        zi = std::clamp(zi, a.x, b.x);
      }
      z[static_cast<size_t>(i) + 1] = zi;
    }
  }

  void insert(const HullPoint& p) {
    auto it = std::upper_bound(points.begin(), points.end(), p.x,
                               [](double x, const HullPoint& q) { return x < q.x; });
    points.insert(it, p);
    check_concavity();
    rebuild_intersections();
  }

  // log of the envelope mass over segment i.
  double log_mass(int i) const {
    const double a = z[static_cast<size_t>(i)];
    const double b = z[static_cast<size_t>(i) + 1];
    if (a >= b) return -std::numeric_limits<double>::infinity();
    const double s = points[static_cast<size_t>(i)].hp;
    if (std::isinf(a) && std::isinf(b)) {
      throw BadInitialization("ARS: doubly infinite envelope segment");
    }
    if (std::abs(s) < 1e-12) {
      if (std::isinf(a) || std::isinf(b)) {
        throw BadInitialization("ARS: flat tangent on an unbounded segment");
      }
      return tangent(i, 0.5 * (a + b)) + std::log(b - a);
    }
    if (s > 0.0) {
      if (std::isinf(b)) throw BadInitialization("ARS: rising tangent on unbounded upper segment");
      const double head = tangent(i, b) - std::log(s);
      return std::isinf(a) ? head : head + std::log1p(-std::exp(s * (a - b)));
    }
    if (std::isinf(a)) throw BadInitialization("ARS: falling tangent on unbounded lower segment");
    const double head = tangent(i, a) - std::log(-s);
    return std::isinf(b) ? head : head + std::log1p(-std::exp(s * (b - a)));
  }

  // Inverse-CDF draw from segment i of the piecewise-exponential envelope.
  double draw_in_segment(int i, double u) const {
    const double a = z[static_cast<size_t>(i)];
    const double b = z[static_cast<size_t>(i) + 1];
    const double s = points[static_cast<size_t>(i)].hp;
    if (std::isinf(a)) return b + std::log(u) / s;         // s > 0 here
    if (std::isinf(b)) return a + std::log(u) / s;         // s < 0 here
    const double d = s * (b - a);
    if (std::abs(d) < 1e-10) return a + u * (b - a);
    if (d > 0.0) return b + std::log(u + (1.0 - u) * std::exp(-d)) / s;
    return a + std::log((1.0 - u) + u * std::exp(d)) / s;
  }

  // Lower (chord) bound on the log density, valid between adjacent points.
  double squeeze(double x) const {
    for (size_t i = 0; i + 1 < points.size(); ++i) {
      if (points[i].x <= x && x <= points[i + 1].x) {
        const double w = (x - points[i].x) / (points[i + 1].x - points[i].x);
        return (1.0 - w) * points[i].h + w * points[i + 1].h;
      }
    }
    return -std::numeric_limits<double>::infinity();
  }

  double value(double x) const {
    for (size_t i = 0; i < points.size(); ++i) {
      if (x <= z[i + 1]) return tangent(static_cast<int>(i), x);
    }
    return tangent(static_cast<int>(points.size()) - 1, x);
  }
};

}  // namespace

double ars_sample(const LogDensityGrad& target,
                  const std::vector<double>& init_points, RandomStream& rng,
                  const ArsOptions& opts) {
  if (init_points.size() < 2) {
    throw BadInitialization("ARS needs at least two initial points");
  }
  Envelope env;
  env.lower = opts.lower;
  env.upper = opts.upper;
  env.tol = opts.concavity_tol;
  std::vector<double> xs = init_points;
  std::sort(xs.begin(), xs.end());
  for (double x : xs) {
    auto [h, hp] = target(x);
    if (!std::isfinite(h) || !std::isfinite(hp)) {
      throw BadInitialization("ARS: non-finite log density at an initial point");
    }
    env.points.push_back({x, h, hp});
  }
  env.check_concavity();
  if (std::isinf(opts.lower) && env.points.front().hp <= 0.0) {
    throw BadInitialization("ARS: lowest initial point does not bracket the mode");
  }
  if (std::isinf(opts.upper) && env.points.back().hp >= 0.0) {
    throw BadInitialization("ARS: highest initial point does not bracket the mode");
  }
  env.rebuild_intersections();

  for (int rejection = 0; rejection < opts.max_rejections; ++rejection) {
    // Pick a segment proportionally to its envelope mass.
    const int K = static_cast<int>(env.points.size());
    std::vector<double> lm(static_cast<size_t>(K));
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < K; ++i) {
      lm[static_cast<size_t>(i)] = env.log_mass(i);
      mx = std::max(mx, lm[static_cast<size_t>(i)]);
    }
    double total = 0.0;
    for (int i = 0; i < K; ++i) total += std::exp(lm[static_cast<size_t>(i)] - mx);
    double u = rng.uniform() * total;
    int seg = K - 1;
    for (int i = 0; i < K; ++i) {
      u -= std::exp(lm[static_cast<size_t>(i)] - mx);
      if (u <= 0.0) {
        seg = i;
        break;
      }
    }
    const double x = env.draw_in_segment(seg, rng.uniform());
    if (!std::isfinite(x) || x < opts.lower || x > opts.upper) continue;
    const double logw = std::log(rng.uniform());
    const double envx = env.value(x);
    if (logw <= env.squeeze(x) - envx) return x;
    auto [h, hp] = target(x);
    if (logw <= h - envx) return x;
    if (std::isfinite(h) && std::isfinite(hp)) env.insert({x, h, hp});
  }
  throw Error("ARS: rejection budget exhausted");
}

double ars_sample_from(const LogDensityGrad& target, double x0, double step,
                       RandomStream& rng, const ArsOptions& opts) {
  double lo = x0 - step;
  double hi = x0 + step;
  if (std::isinf(opts.lower)) {
    double s = step;
    for (int k = 0; target(lo).second <= 0.0; ++k) {
      if (k >= 60) throw BadInitialization("ARS: failed to bracket the mode from below");
      s *= 2.0;
      lo = x0 - s;
    }
  } else {
    lo = std::max(opts.lower + 1e-10 * (1.0 + std::abs(opts.lower)), lo);
  }
  if (std::isinf(opts.upper)) {
    double s = step;
    for (int k = 0; target(hi).second >= 0.0; ++k) {
      if (k >= 60) throw BadInitialization("ARS: failed to bracket the mode from above");
      s *= 2.0;
      hi = x0 + s;
    }
  } else {
    hi = std::min(opts.upper - 1e-10 * (1.0 + std::abs(opts.upper)), hi);
  }
  return ars_sample(target, {lo, x0, hi}, rng, opts);
}

double slice_sample(const LogDensity& target, double current, double width,
                    int max_steps, RandomStream& rng) {
  if (width <= 0.0) throw InvalidParameter("slice_sample: width must be positive");
  if (max_steps < 1) throw InvalidParameter("slice_sample: max_steps must be >= 1");
  const double h0 = target(current);
  if (!std::isfinite(h0)) {
    throw NonFiniteDensity("slice_sample: non-finite log density at the current point");
  }
  const double logy = h0 + std::log(rng.uniform());

  double left = current - width * rng.uniform();
  double right = left + width;
  int j = static_cast<int>(std::floor(max_steps * rng.uniform()));
  int k = max_steps - 1 - j;
  while (j-- > 0 && target(left) > logy) left -= width;
  while (k-- > 0 && target(right) > logy) right += width;

  for (int it = 0; it < 1000; ++it) {
    const double x = left + rng.uniform() * (right - left);
    if (target(x) > logy) return x;
    if (x < current) {
      left = x;
    } else {
      right = x;
    }
  }
  throw Error("slice_sample: shrinkage failed to terminate");
}

Eigen::VectorXd mvn_draw(const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& covariance, RandomStream& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw NonPosDefCovariance("mvn_draw: covariance is not positive definite");
  }
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + llt.matrixL() * z;
}

double gamma_draw(double shape, double rate, RandomStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw InvalidParameter("gamma_draw: shape and rate must be positive");
  }
  if (shape < 1.0) {
    const double boost = std::pow(rng.uniform(), 1.0 / shape);
    return gamma_draw(shape + 1.0, rate, rng) * boost;
  }
  // Marsaglia-Tsang squeeze method.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = rng.normal();
    const double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    const double v = t * t * t;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

Eigen::MatrixXd wishart_draw(const Eigen::MatrixXd& scale, double dof,
                             RandomStream& rng) {
  const Eigen::Index p = scale.rows();
  if (dof < static_cast<double>(p)) {
    throw InvalidDof("wishart_draw: dof must be at least the dimension");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) {
    throw NonPosDefCovariance("wishart_draw: scale is not positive definite");
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    A(i, i) = std::sqrt(2.0 * gamma_draw((dof - static_cast<double>(i)) / 2.0, 1.0, rng));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = rng.normal();
  }
  const Eigen::MatrixXd LA = llt.matrixL() * A;
  return LA * LA.transpose();
}

}  // namespace bsjm
