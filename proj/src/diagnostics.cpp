#include "bsjm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace bsjm {

double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw EmptySamples("empirical_quantile: no values");
  std::sort(values.begin(), values.end());
  const double h = p * (static_cast<double>(values.size()) - 1.0);
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - std::floor(h)) * (values[hi] - values[lo]);
}

FitStats dic(const PosteriorSamples& samples,
             const std::vector<SubjectData>& subjects, const ModelSpec& spec) {
  if (samples.draws.empty()) throw EmptySamples("dic: no posterior draws");
  FitStats st;
  // Mean deviance via deltas around the first draw so a point-mass sample
  // set yields p_D = 0 exactly.
  const Eigen::VectorXd per_draw = samples.subject_loglik.rowwise().sum();
  st.mean_deviance =
      -2.0 * (per_draw[0] + (per_draw.array() - per_draw[0]).mean());
  const ChainState bar = mean_state(samples);
  st.deviance_at_mean = -2.0 * joint_loglik(subjects, bar, spec);
  st.p_d = st.mean_deviance - st.deviance_at_mean;
  st.dic = st.deviance_at_mean + 2.0 * st.p_d;
  return st;
}

FitStats lpml(const PosteriorSamples& samples) {
  if (samples.draws.empty() || samples.subject_loglik.rows() == 0) {
    throw EmptySamples("lpml: no posterior draws");
  }
  FitStats st;
  const Eigen::Index G = samples.subject_loglik.rows();
  const Eigen::Index N = samples.subject_loglik.cols();
  st.log_cpo.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    // log CPO_i = log G - logsumexp_g(-loglik_gi)
    const Eigen::ArrayXd neg = -samples.subject_loglik.col(i).array();
    const double mx = neg.maxCoeff();
    const double lse = mx + std::log((neg - mx).exp().sum());
    st.log_cpo[i] = std::log(static_cast<double>(G)) - lse;
  }
  st.lpml = st.log_cpo.sum();
  return st;
}

FitStats fit_stats(const PosteriorSamples& samples,
                   const std::vector<SubjectData>& subjects,
                   const ModelSpec& spec) {
  FitStats st = dic(samples, subjects, spec);
  const FitStats lp = lpml(samples);
  st.lpml = lp.lpml;
  st.log_cpo = lp.log_cpo;
  return st;
}

namespace {

// Kaplan-Meier survival at horizon h over (time, event) pairs; ties are
// handled with events preceding censorings.
double km_survival(const std::vector<std::pair<double, bool>>& obs, double h) {
  // Without censoring before the horizon the product telescopes to the
  // empirical survivor fraction; take that path so the ratio is exact.
  bool censored_early = false;
  size_t beyond = 0;
  for (const auto& o : obs) {
    if (o.first > h) ++beyond;
    else if (!o.second) censored_early = true;
  }
  if (!censored_early) {
    return static_cast<double>(beyond) / static_cast<double>(obs.size());
  }
  std::vector<std::pair<double, bool>> sorted = obs;
  std::sort(sorted.begin(), sorted.end());
  double surv = 1.0;
  const size_t n = sorted.size();
  size_t k = 0;
  while (k < n) {
    const double t = sorted[k].first;
    if (t > h) break;
    size_t d = 0, same = 0;
    while (k + same < n && sorted[k + same].first == t) {
      if (sorted[k + same].second) ++d;
      ++same;
    }
    const double at_risk = static_cast<double>(n - k);
    if (d > 0) surv *= 1.0 - static_cast<double>(d) / at_risk;
    k += same;
  }
  return surv;
}

}  // namespace

RocResult roc_curve(const Eigen::VectorXd& markers,
                    const Eigen::VectorXd& event_times,
                    const std::vector<bool>& events, double landmark,
                    double horizon) {
  if (markers.size() != event_times.size() ||
      static_cast<size_t>(markers.size()) != events.size()) {
    throw InvalidParameter("roc_curve: input length mismatch");
  }
  RocResult roc;
  roc.landmark = landmark;
  roc.horizon = horizon;

  std::vector<double> m;
  std::vector<std::pair<double, bool>> obs;  // residual time, event
  for (Eigen::Index i = 0; i < markers.size(); ++i) {
    if (event_times[i] <= landmark) continue;  // gone before the landmark
    m.push_back(markers[i]);
    obs.emplace_back(event_times[i] - landmark, events[static_cast<size_t>(i)]);
  }
  roc.n_at_risk = static_cast<int>(m.size());
  if (m.empty()) throw NoSubjectsAtRisk("roc_curve: nobody at risk at the landmark");

  const std::set<double> distinct(m.begin(), m.end());
  if (distinct.size() < 2) {
    roc.degenerate = true;
    roc.points = {{0.0, 0.0}, {1.0, 1.0}};
    roc.auc = 0.5;
    return roc;
  }

  const double s_all = km_survival(obs, horizon);
  const double n = static_cast<double>(m.size());
  // Walk thresholds from the highest marker down: the curve is traced from
  // (0,0) towards (1,1) in its natural order, so no re-sorting by computed
  // floating-point rates (which would let rounding jitter reorder ties).
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  for (auto it = distinct.rbegin(); it != distinct.rend(); ++it) {
    const double c = *it;
    std::vector<std::pair<double, bool>> sub;
    for (size_t i = 0; i < m.size(); ++i) {
      if (m[i] > c) sub.push_back(obs[i]);
    }
    double fpr = 0.0, tpr = 0.0;
    if (!sub.empty()) {
      const double s_c = km_survival(sub, horizon);
      const double p_c = static_cast<double>(sub.size()) / n;
      if (1.0 - s_all > 1e-12) tpr = p_c * (1.0 - s_c) / (1.0 - s_all);
      if (s_all > 1e-12) fpr = p_c * s_c / s_all;
    }
    pts.emplace_back(std::clamp(fpr, 0.0, 1.0), std::clamp(tpr, 0.0, 1.0));
  }
  pts.emplace_back(1.0, 1.0);
  // KM weighting can produce locally non-monotone raw points; take running
  // maxima of both coordinates along the traced curve.
  double run_f = 0.0, run_t = 0.0;
  for (auto& p : pts) {
    run_f = std::max(run_f, p.first);
    run_t = std::max(run_t, p.second);
    p.first = run_f;
    p.second = run_t;
  }
  roc.points = std::move(pts);
  double auc = 0.0;
  for (size_t k = 1; k < roc.points.size(); ++k) {
    auc += 0.5 * (roc.points[k].first - roc.points[k - 1].first) *
           (roc.points[k].second + roc.points[k - 1].second);
  }
  roc.auc = auc;
  return roc;
}

std::vector<SummaryRow> summarize(const PosteriorSamples& samples, double level) {
  if (samples.draws.empty()) throw EmptySamples("summarize: no draws");
  if (!(level > 0.0 && level < 1.0)) {
    throw InvalidParameter("summarize: level must be in (0, 1)");
  }
  const std::vector<std::string> names = parameter_names(samples.dims);
  const size_t G = samples.draws.size();
  Eigen::MatrixXd flat(static_cast<Eigen::Index>(G), samples.dims.flat_size());
  for (size_t g = 0; g < G; ++g) {
    flat.row(static_cast<Eigen::Index>(g)) =
        flatten_state(samples.draws[g], samples.dims).transpose();
  }
  const double alpha = 1.0 - level;
  std::vector<SummaryRow> rows;
  rows.reserve(names.size());
  for (size_t j = 0; j < names.size(); ++j) {
    std::vector<double> col(G);
    for (size_t g = 0; g < G; ++g) col[g] = flat(static_cast<Eigen::Index>(g),
                                                static_cast<Eigen::Index>(j));
    SummaryRow row;
    row.name = names[j];
    row.mean = flat.col(static_cast<Eigen::Index>(j)).mean();
    row.lower = empirical_quantile(col, alpha / 2.0);
    row.upper = empirical_quantile(col, 1.0 - alpha / 2.0);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace bsjm
