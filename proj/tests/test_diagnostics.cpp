#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bsjm/diagnostics.hpp"
#include "bsjm/model.hpp"
#include "bsjm/rng.hpp"

using namespace bsjm;

namespace {

KnotVector equal_basis(int q, double T) {
  std::vector<double> knots;
  for (int k = 0; k < 4; ++k) knots.push_back(0.0);
  for (int k = 1; k <= q - 4; ++k) knots.push_back(T * k / (q - 3));
  for (int k = 0; k < 4; ++k) knots.push_back(T);
  return KnotVector(knots, q);
}

// Normal-mean toy wrapped in the joint-model structure: one subject with n
// observations at t = 0, so the likelihood depends only on beta_11 (= the
// clamped basis value at 0).  Survival contributes ~0 (tiny rate, censored).
struct NormalMeanToy {
  std::vector<SubjectData> subjects;
  ModelSpec spec;
  double ybar = 0.0;
  int n = 0;

  explicit NormalMeanToy(int n_obs, RandomStream& rng)
      : spec{equal_basis(5, 10.0),
             {0.0},
             ModelConfig{ModelKind::current, 5, KnotStrategy::equal, 10}},
        n(n_obs) {
    SubjectData s;
    s.id = "toy";
    s.obs_times = Eigen::VectorXd::Zero(n_obs);
    s.y.resize(n_obs, 1);
    for (int j = 0; j < n_obs; ++j) s.y(j, 0) = 2.0 + rng.normal();
    s.x = Eigen::VectorXd();
    s.z = Eigen::VectorXd();
    s.event_time = 5.0;
    s.event = false;
    ybar = s.y.col(0).mean();
    subjects.push_back(std::move(s));
  }

  ChainState state_at(double theta) const {
    ChainState st;
    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(1, 5);
    beta(0, 0) = theta;
    st.beta = {beta};
    st.lp.sigma = Eigen::MatrixXd::Identity(1, 1);
    st.lp.b0 = Eigen::MatrixXd::Zero(1, 5);
    st.lp.v0 = {Eigen::MatrixXd::Identity(5, 5)};
    st.lp.alpha = Eigen::MatrixXd(1, 0);
    st.link = LinkParams::zeros(1, 0, ModelKind::current);
    st.lambda = Eigen::VectorXd::Constant(1, 1e-300);
    return st;
  }

  // Exact posterior draws of theta under a flat prior, packed as samples.
  PosteriorSamples exact_samples(int G, RandomStream& rng) const {
    PosteriorSamples out;
    out.dims = Dims{1, 1, 5, 0, 0, 1};
    out.subject_loglik.resize(G, 1);
    for (int g = 0; g < G; ++g) {
      const double theta = ybar + rng.normal() / std::sqrt(static_cast<double>(n));
      const ChainState st = state_at(theta);
      out.draws.push_back(st);
      out.subject_loglik(g, 0) = joint_loglik(subjects, st, spec);
    }
    return out;
  }
};

}  // namespace

TEST_CASE("dic: point-mass samples give p_D = 0 exactly") {
  RandomStream rng(3);
  NormalMeanToy toy(10, rng);
  const ChainState st = toy.state_at(1.3);
  PosteriorSamples samples;
  samples.dims = Dims{1, 1, 5, 0, 0, 1};
  const double ll = joint_loglik(toy.subjects, st, toy.spec);
  const int G = 50;
  samples.subject_loglik = Eigen::MatrixXd::Constant(G, 1, ll);
  for (int g = 0; g < G; ++g) samples.draws.push_back(st);

  const FitStats fs = dic(samples, toy.subjects, toy.spec);
  CHECK(fs.p_d == 0.0);
  CHECK(fs.dic == doctest::Approx(-2.0 * ll).epsilon(1e-12));
  CHECK(fs.mean_deviance == fs.deviance_at_mean);
}

TEST_CASE("dic: conjugate normal-mean toy has p_D near 1") {
  RandomStream rng(17);
  NormalMeanToy toy(30, rng);
  const PosteriorSamples samples = toy.exact_samples(10000, rng);
  const FitStats fs = dic(samples, toy.subjects, toy.spec);
  CHECK(fs.p_d == doctest::Approx(1.0).epsilon(0.1));
  CHECK(fs.dic == doctest::Approx(fs.deviance_at_mean + 2.0 * fs.p_d).epsilon(1e-12));
}

TEST_CASE("dic: draw-order invariance and empty rejection") {
  RandomStream rng(19);
  NormalMeanToy toy(12, rng);
  PosteriorSamples samples = toy.exact_samples(200, rng);
  const FitStats a = dic(samples, toy.subjects, toy.spec);
  std::reverse(samples.draws.begin(), samples.draws.end());
  samples.subject_loglik = samples.subject_loglik.colwise().reverse().eval();
  const FitStats b = dic(samples, toy.subjects, toy.spec);
  CHECK(a.dic == doctest::Approx(b.dic).epsilon(1e-12));

  PosteriorSamples empty;
  empty.dims = samples.dims;
  CHECK_THROWS_AS(dic(empty, toy.subjects, toy.spec), EmptySamples);
  CHECK_THROWS_AS(lpml(empty), EmptySamples);
}

TEST_CASE("lpml: single-draw and constant-draw identities") {
  PosteriorSamples samples;
  samples.dims = Dims{3, 1, 5, 0, 0, 1};
  samples.subject_loglik.resize(1, 3);
  samples.subject_loglik << -1.5, -2.25, -0.5;
  samples.draws.resize(1);
  FitStats fs = lpml(samples);
  CHECK(fs.log_cpo[0] == doctest::Approx(-1.5).epsilon(1e-14));
  CHECK(fs.log_cpo[1] == doctest::Approx(-2.25).epsilon(1e-14));
  CHECK(fs.lpml == doctest::Approx(-4.25).epsilon(1e-14));

  // constant sequence: CPO = the common value
  samples.subject_loglik = Eigen::MatrixXd::Constant(40, 3, -0.7);
  samples.draws.resize(40);
  fs = lpml(samples);
  for (int i = 0; i < 3; ++i) {
    CHECK(fs.log_cpo[i] == doctest::Approx(-0.7).epsilon(1e-12));
  }
}

TEST_CASE("lpml: harmonic-mean bounds and reorder invariance") {
  RandomStream rng(23);
  PosteriorSamples samples;
  samples.dims = Dims{2, 1, 5, 0, 0, 1};
  samples.subject_loglik.resize(500, 2);
  for (int g = 0; g < 500; ++g) {
    samples.subject_loglik(g, 0) = -2.0 + 0.3 * rng.normal();
    samples.subject_loglik(g, 1) = -5.0 + 0.8 * rng.normal();
  }
  samples.draws.resize(500);
  const FitStats fs = lpml(samples);
  for (int i = 0; i < 2; ++i) {
    CHECK(fs.log_cpo[i] <= samples.subject_loglik.col(i).maxCoeff());
    CHECK(fs.log_cpo[i] >= samples.subject_loglik.col(i).minCoeff());
  }
  PosteriorSamples shuffled = samples;
  shuffled.subject_loglik = samples.subject_loglik.colwise().reverse().eval();
  CHECK(lpml(shuffled).lpml == doctest::Approx(fs.lpml).epsilon(1e-12));
}

TEST_CASE("lpml: conjugate leave-one-out oracle") {
  // y_i ~ N(theta, 1), flat prior: f(y_i | y_-i) = N(mean_-i, 1 + 1/(n-1))
  RandomStream rng(29);
  const int n = 15, G = 20000;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = 1.0 + rng.normal();
  const double ybar = y.mean();

  PosteriorSamples samples;
  samples.dims = Dims{n, 1, 5, 0, 0, 1};
  samples.subject_loglik.resize(G, n);
  const double c = -0.5 * std::log(2.0 * 3.14159265358979323846);
  for (int g = 0; g < G; ++g) {
    const double theta = ybar + rng.normal() / std::sqrt(static_cast<double>(n));
    for (int i = 0; i < n; ++i) {
      samples.subject_loglik(g, i) = c - 0.5 * (y[i] - theta) * (y[i] - theta);
    }
  }
  samples.draws.resize(G);
  const FitStats fs = lpml(samples);
  for (int i = 0; i < n; ++i) {
    const double mloo = (ybar * n - y[i]) / (n - 1.0);
    const double vloo = 1.0 + 1.0 / (n - 1.0);
    const double expect = c - 0.5 * std::log(vloo) -
                          0.5 * (y[i] - mloo) * (y[i] - mloo) / vloo;
    CHECK(fs.log_cpo[i] == doctest::Approx(expect).epsilon(0.02));
  }
}

TEST_CASE("roc: perfect separation and degenerate marker") {
  Eigen::VectorXd markers(4), times(4);
  markers << 1, 2, 3, 4;
  times << 20, 22, 3, 4;  // high markers fail early
  const std::vector<bool> events{false, false, true, true};
  const RocResult roc = roc_curve(markers, times, events, 0.0, 10.0);
  CHECK(roc.auc == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(roc.degenerate);
  CHECK(roc.points.front() == std::pair<double, double>{0.0, 0.0});
  CHECK(roc.points.back() == std::pair<double, double>{1.0, 1.0});

  const RocResult flat =
      roc_curve(Eigen::VectorXd::Ones(4), times, events, 0.0, 10.0);
  CHECK(flat.degenerate);
  CHECK(flat.auc == 0.5);
}

TEST_CASE("roc: censoring-free reduction equals the classical empirical ROC") {
  RandomStream rng(31);
  const int n = 300;
  Eigen::VectorXd markers(n), times(n);
  std::vector<bool> events(static_cast<size_t>(n), true);
  for (int i = 0; i < n; ++i) {
    markers[i] = rng.normal();
    times[i] = 1.0 + 20.0 * rng.uniform() - 4.0 * markers[i];
    if (times[i] < 0.5) times[i] = 0.5;
  }
  const double landmark = 0.0, horizon = 9.0;
  const RocResult roc = roc_curve(markers, times, events, landmark, horizon);

  // classical ROC of the binary outcome "event by horizon"
  int cases = 0;
  for (int i = 0; i < n; ++i) cases += times[i] <= horizon ? 1 : 0;
  const int controls = n - cases;
  std::vector<double> thresholds(markers.data(), markers.data() + n);
  std::sort(thresholds.begin(), thresholds.end());
  double auc = 0.0;
  std::vector<std::pair<double, double>> expect{{0.0, 0.0}};
  for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
    int tp = 0, fp = 0;
    for (int i = 0; i < n; ++i) {
      if (markers[i] > *it) (times[i] <= horizon ? tp : fp)++;
    }
    expect.emplace_back(static_cast<double>(fp) / controls,
                        static_cast<double>(tp) / cases);
  }
  expect.emplace_back(1.0, 1.0);
  for (size_t k = 1; k < expect.size(); ++k) {
    auc += 0.5 * (expect[k].first - expect[k - 1].first) *
           (expect[k].second + expect[k - 1].second);
  }
  CHECK(roc.auc == doctest::Approx(auc).epsilon(1e-10));
  for (const auto& p : expect) {
    CHECK(std::find_if(roc.points.begin(), roc.points.end(),
                       [&](const std::pair<double, double>& q) {
                         return std::abs(q.first - p.first) < 1e-12 &&
                                std::abs(q.second - p.second) < 1e-12;
                       }) != roc.points.end());
  }
}

TEST_CASE("roc: independent marker near 0.5 at n = 2000") {
  RandomStream rng(37);
  const int n = 2000;
  Eigen::VectorXd markers(n), times(n);
  std::vector<bool> events(static_cast<size_t>(n), true);
  for (int i = 0; i < n; ++i) {
    markers[i] = rng.normal();
    times[i] = -10.0 * std::log(rng.uniform());
  }
  const RocResult roc = roc_curve(markers, times, events, 0.0, 8.0);
  CHECK(std::abs(roc.auc - 0.5) < 0.04);
}

TEST_CASE("roc: hand-worked censored eight-subject oracle") {
  // landmark 0, horizon 10; overall KM at 10 = 0.5 (events at 1,2,3,4,
  // censored at 5, the rest beyond the horizon)
  Eigen::VectorXd markers(8), times(8);
  markers << 8, 7, 6, 5, 4, 3, 2, 1;
  times << 2, 4, 5, 12, 15, 3, 20, 1;
  const std::vector<bool> events{true, true, false, true, false, true, true, true};
  const RocResult roc = roc_curve(markers, times, events, 0.0, 10.0);

  CHECK(roc.n_at_risk == 8);
  CHECK(roc.auc == doctest::Approx(0.5625).epsilon(1e-12));
  // frozen per-threshold values, worked by hand from the KM tables:
  // c = 5 -> (0.25, 0.5); c = 2 -> (0.75, 0.75); c = 6 -> (0, 0.5)
  auto has_point = [&](double fpr, double tpr) {
    return std::find_if(roc.points.begin(), roc.points.end(),
                        [&](const std::pair<double, double>& p) {
                          return std::abs(p.first - fpr) < 1e-12 &&
                                 std::abs(p.second - tpr) < 1e-12;
                        }) != roc.points.end();
  };
  CHECK(has_point(0.25, 0.5));
  CHECK(has_point(0.75, 0.75));
  CHECK(has_point(0.0, 0.5));
  CHECK(has_point(0.0, 0.25));
  CHECK(has_point(1.0, 0.75));
}

TEST_CASE("roc: invariance under increasing marker transforms, at-risk filter") {
  RandomStream rng(41);
  const int n = 100;
  Eigen::VectorXd markers(n), times(n);
  std::vector<bool> events(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    markers[i] = rng.normal();
    times[i] = -8.0 * std::log(rng.uniform()) * std::exp(-0.5 * markers[i]);
    events[static_cast<size_t>(i)] = rng.uniform() < 0.8;
  }
  const RocResult a = roc_curve(markers, times, events, 2.0, 6.0);
  Eigen::VectorXd warped(n);
  for (int i = 0; i < n; ++i) warped[i] = std::atan(3.0 * markers[i]);
  const RocResult b = roc_curve(warped, times, events, 2.0, 6.0);
  CHECK(a.auc == doctest::Approx(b.auc).epsilon(1e-12));

  // everyone gone by the landmark
  CHECK_THROWS_AS(roc_curve(markers, Eigen::VectorXd::Ones(n), events, 2.0, 6.0),
                  NoSubjectsAtRisk);
}

TEST_CASE("summarize: point mass, normal quantiles, direct-sort convention") {
  PosteriorSamples samples;
  samples.dims = Dims{0, 1, 5, 0, 0, 1};
  // build states holding a single varying scalar via lambda
  RandomStream rng(43);
  const int G = 100000;
  ChainState st;
  st.beta = {};
  st.lp.sigma = Eigen::MatrixXd::Identity(1, 1);
  st.lp.b0 = Eigen::MatrixXd::Zero(1, 5);
  st.lp.v0 = {Eigen::MatrixXd::Identity(5, 5)};
  st.lp.alpha = Eigen::MatrixXd(1, 0);
  st.link = LinkParams::zeros(1, 0, ModelKind::current);
  std::vector<double> raw;
  for (int g = 0; g < G; ++g) {
    const double x = rng.normal();
    raw.push_back(x);
    st.lambda = Eigen::VectorXd::Constant(1, x);
    samples.draws.push_back(st);
  }
  samples.subject_loglik.resize(G, 0);
  const std::vector<SummaryRow> rows = summarize(samples, 0.95);
  const auto it = std::find_if(rows.begin(), rows.end(),
                               [](const SummaryRow& r) { return r.name == "lambda.1"; });
  REQUIRE(it != rows.end());
  CHECK(std::abs(it->lower + 1.96) < 0.02);
  CHECK(std::abs(it->upper - 1.96) < 0.02);
  CHECK(std::abs(it->mean) < 0.02);

  // quantile convention equals the direct sorted computation
  CHECK(it->lower ==
        doctest::Approx(empirical_quantile(raw, 0.025)).epsilon(1e-12));
  CHECK(it->upper ==
        doctest::Approx(empirical_quantile(raw, 0.975)).epsilon(1e-12));

  // constant draws collapse the interval
  PosteriorSamples flat;
  flat.dims = samples.dims;
  st.lambda = Eigen::VectorXd::Constant(1, 3.25);
  for (int g = 0; g < 10; ++g) flat.draws.push_back(st);
  flat.subject_loglik.resize(10, 0);
  const std::vector<SummaryRow> frows = summarize(flat, 0.95);
  const auto fit = std::find_if(frows.begin(), frows.end(),
                                [](const SummaryRow& r) { return r.name == "lambda.1"; });
  REQUIRE(fit != frows.end());
  CHECK(fit->lower == 3.25);
  CHECK(fit->upper == 3.25);
  CHECK(fit->mean == 3.25);
}

TEST_CASE("empirical quantile: interpolation endpoints") {
  std::vector<double> v{4.0, 1.0, 3.0, 2.0};
  CHECK(empirical_quantile(v, 0.0) == 1.0);
  CHECK(empirical_quantile(v, 1.0) == 4.0);
  CHECK(empirical_quantile(v, 0.5) == doctest::Approx(2.5));
}
