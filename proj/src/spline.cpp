#include "bsjm/spline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bsjm {

namespace detail {

// Find the span mu with knots[mu] <= t < knots[mu+1], mu in [degree, n-1].
// For t at (or past) the right domain end the last non-empty span is used,
// which gives the left-limit value there.
static int find_span(const std::vector<double>& knots, int degree, double t) {
  const int n = static_cast<int>(knots.size()) - degree - 1;
  if (t >= knots[static_cast<size_t>(n)]) {
    int mu = n - 1;
    while (mu > degree && knots[static_cast<size_t>(mu)] ==
                              knots[static_cast<size_t>(mu + 1)]) {
      --mu;
    }
    return mu;
  }
  int lo = degree, hi = n;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (t < knots[static_cast<size_t>(mid)]) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return lo;
}

Eigen::VectorXd all_basis(const std::vector<double>& knots, int degree,
                          double t) {
  const int n = static_cast<int>(knots.size()) - degree - 1;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  const int mu = find_span(knots, degree, t);

  // Triangular recursion for the degree + 1 nonzero functions on the span.
  std::vector<double> N(static_cast<size_t>(degree) + 1, 0.0);
  std::vector<double> left(static_cast<size_t>(degree) + 1, 0.0);
  std::vector<double> right(static_cast<size_t>(degree) + 1, 0.0);
  N[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[static_cast<size_t>(j)] = t - knots[static_cast<size_t>(mu + 1 - j)];
    right[static_cast<size_t>(j)] = knots[static_cast<size_t>(mu + j)] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[static_cast<size_t>(r + 1)] +
                           left[static_cast<size_t>(j - r)];
      const double tmp = denom == 0.0 ? 0.0 : N[static_cast<size_t>(r)] / denom;
      N[static_cast<size_t>(r)] = saved + right[static_cast<size_t>(r + 1)] * tmp;
      saved = left[static_cast<size_t>(j - r)] * tmp;
    }
    N[static_cast<size_t>(j)] = saved;
  }
  for (int r = 0; r <= degree; ++r) {
    const int idx = mu - degree + r;
    if (idx >= 0 && idx < n) out[idx] = N[static_cast<size_t>(r)];
  }
  return out;
}

}  // namespace detail

KnotVector::KnotVector(std::vector<double> knots, int q)
    : knots_(std::move(knots)), q_(q) {
  if (q_ < 5) throw InvalidOrder("basis dimension q must be at least 5");
  if (static_cast<int>(knots_.size()) != q_ + 4) {
    throw InvalidOrder("knot vector must have q + 4 entries");
  }
  if (!std::is_sorted(knots_.begin(), knots_.end())) {
    throw DuplicateInteriorKnot("knots must be non-decreasing");
  }
  const double t0 = knots_.front();
  const double tEnd = knots_.back();
  for (int k = 0; k < 4; ++k) {
    if (knots_[static_cast<size_t>(k)] != t0 ||
        knots_[knots_.size() - 1 - static_cast<size_t>(k)] != tEnd) {
      throw InvalidOrder("boundary knots must have multiplicity 4");
    }
  }
  for (size_t k = 4; k + 4 < knots_.size(); ++k) {
    if (knots_[k] == knots_[k + 1] || knots_[k] <= t0 || knots_[k] >= tEnd) {
      throw DuplicateInteriorKnot("interior knots must be simple and strictly inside the domain");
    }
  }
  // Augmenting knots for the quartic companion basis; the integral row is
  // invariant to their exact values.
  augmented_.reserve(knots_.size() + 2);
  augmented_.push_back(t0 - 1.0);
  augmented_.insert(augmented_.end(), knots_.begin(), knots_.end());
  augmented_.push_back(tEnd + 1.0);
}

void KnotVector::check_domain(double t) const {
  if (t < domain_start() || t > domain_end() || !std::isfinite(t)) {
    std::ostringstream msg;
    msg << "t = " << t << " outside spline domain [" << domain_start() << ", "
        << domain_end() << "]";
    throw OutOfDomain(msg.str());
  }
}

BasisRow KnotVector::eval_value(double t) const {
  check_domain(t);
  return BasisRow{detail::all_basis(knots_, 3, t), t, BasisKind::value};
}

BasisRow KnotVector::eval_derivative(double t) const {
  check_domain(t);
  const Eigen::VectorXd quad = detail::all_basis(knots_, 2, t);  // q + 1 funcs
  Eigen::VectorXd row = Eigen::VectorXd::Zero(q_);
  for (int j = 0; j < q_; ++j) {
    const double d1 = knots_[static_cast<size_t>(j + 3)] - knots_[static_cast<size_t>(j)];
    const double d2 = knots_[static_cast<size_t>(j + 4)] - knots_[static_cast<size_t>(j + 1)];
    double v = 0.0;
    if (d1 > 0.0) v += 3.0 * quad[j] / d1;
    if (d2 > 0.0) v -= 3.0 * quad[j + 1] / d2;
    row[j] = v;
  }
  return BasisRow{std::move(row), t, BasisKind::derivative};
}

BasisRow KnotVector::eval_integral(double t) const {
  check_domain(t);
  const Eigen::VectorXd quart = detail::all_basis(augmented_, 4, t);  // q + 1
  // Suffix sums of the quartic values: tail[j] = sum_{k >= j} quart[k].
  Eigen::VectorXd tail = Eigen::VectorXd::Zero(q_ + 2);
  for (int k = q_; k >= 0; --k) tail[k] = tail[k + 1] + quart[k];
  Eigen::VectorXd row(q_);
  for (int j = 0; j < q_; ++j) {
    row[j] = (knots_[static_cast<size_t>(j + 4)] - knots_[static_cast<size_t>(j)]) / 4.0 *
             tail[j + 1];
  }
  return BasisRow{std::move(row), t, BasisKind::integral};
}

Eigen::VectorXd KnotVector::greville_abscissae() const {
  Eigen::VectorXd g(q_);
  for (int k = 0; k < q_; ++k) {
    g[k] = (knots_[static_cast<size_t>(k + 1)] + knots_[static_cast<size_t>(k + 2)] +
            knots_[static_cast<size_t>(k + 3)]) / 3.0;
  }
  return g;
}

// Linear-interpolation empirical quantile of a sorted sample.
static double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = p * (static_cast<double>(sorted.size()) - 1.0);
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

KnotVector make_knots(const std::vector<double>& times, int q,
                      KnotStrategy strategy, double domain_end) {
  if (q < 5) throw InvalidOrder("basis dimension q must be at least 5");
  if (times.empty() && strategy == KnotStrategy::quantile) {
    throw InvalidParameter("make_knots: no observation times");
  }
  for (double t : times) {
    if (t < 0.0 || t > domain_end) {
      throw OutOfDomain("observation time outside [0, T]");
    }
  }
  std::vector<double> knots;
  knots.reserve(static_cast<size_t>(q) + 4);
  for (int k = 0; k < 4; ++k) knots.push_back(0.0);
  const int interior = q - 4;
  if (strategy == KnotStrategy::equal) {
    for (int k = 1; k <= interior; ++k) {
      knots.push_back(domain_end * static_cast<double>(k) /
                      static_cast<double>(interior + 1));
    }
  } else {
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    for (int k = 1; k <= interior; ++k) {
      const double p = static_cast<double>(k) / static_cast<double>(q - 3);
      const double u = quantile_sorted(sorted, p);
      if (u <= 0.0 || u >= domain_end || (!knots.empty() && u <= knots.back() &&
                                          knots.back() > 0.0)) {
        throw DuplicateInteriorKnot(
            "quantile knot placement produced a duplicate or boundary interior knot");
      }
      knots.push_back(u);
    }
  }
  for (int k = 0; k < 4; ++k) knots.push_back(domain_end);
  return KnotVector(std::move(knots), q);
}

}  // namespace bsjm
