#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bsjm/data.hpp"

using namespace bsjm;
namespace fs = std::filesystem;

namespace {

KnotVector equal_basis(int q, double T) {
  std::vector<double> knots;
  for (int k = 0; k < 4; ++k) knots.push_back(0.0);
  for (int k = 1; k <= q - 4; ++k) knots.push_back(T * k / (q - 3));
  for (int k = 0; k < 4; ++k) knots.push_back(T);
  return KnotVector(knots, q);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("bsjm_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  f << content;
}

double ks_pvalue(std::vector<double> sample,
                 const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  const double t = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * t * t);
  }
  return std::clamp(p, 0.0, 1.0);
}

SimulationTruth flat_truth(int q, double T, double lambda) {
  SimulationTruth truth{LinkParams::zeros(1, 0, ModelKind::current),
                        HazardSpec{{0.0}, Eigen::VectorXd::Constant(1, lambda)},
                        LongitudinalParams{},
                        equal_basis(q, T),
                        T,
                        10};
  truth.lp.sigma = 0.25 * Eigen::MatrixXd::Identity(1, 1);
  truth.lp.b0 = Eigen::MatrixXd::Zero(1, q);
  truth.lp.v0.assign(1, 0.25 * Eigen::MatrixXd::Identity(q, q));
  truth.lp.alpha.resize(1, 0);
  return truth;
}

}  // namespace

TEST_CASE("load_cohort: two-subject hand fixture") {
  TempDir dir;
  write_file(dir.file("s.csv"),
             "id,time,event,x_1,z_1\n"
             "a,10.5,1,1,0\n"
             "b,14,0,0,1\n");
  write_file(dir.file("m.csv"),
             "id,obs_time,marker_1,marker_2\n"
             "a,0,1.25,2\n"
             "a,6,1.5,2.5\n"
             "b,0,0.5,1\n"
             "b,4,0.75,1.25\n"
             "b,8,1,1.5\n");
  const Cohort c = load_cohort(dir.file("s.csv"), dir.file("m.csv"));
  CHECK(c.subjects.size() == 2);
  CHECK(c.L == 2);
  CHECK(c.p == 1);
  CHECK(c.p_z == 1);
  CHECK(c.T == 14.0);
  CHECK(c.subjects[0].id == "a");
  CHECK(c.subjects[0].obs_times.size() == 2);
  CHECK(c.subjects[1].obs_times.size() == 3);
  CHECK(c.subjects[0].event);
  CHECK_FALSE(c.subjects[1].event);
  CHECK(c.subjects[0].event_time == 10.5);
  CHECK(c.subjects[0].x[0] == 1.0);
  CHECK(c.subjects[1].z[0] == 1.0);
  CHECK(c.subjects[0].y(1, 1) == 2.5);
  CHECK(c.subjects[1].y(2, 0) == 1.0);
}

TEST_CASE("load_cohort: error cases name file, row, column") {
  TempDir dir;
  write_file(dir.file("s.csv"), "id,time,event\na,10,1\n");

  write_file(dir.file("unknown.csv"), "id,obs_time,marker_1\nzz,0,1\n");
  CHECK_THROWS_WITH_AS(load_cohort(dir.file("s.csv"), dir.file("unknown.csv")),
                       doctest::Contains("row 2"), UnknownSubject);

  write_file(dir.file("late.csv"),
             "id,obs_time,marker_1\na,0,1\na,11,2\n");
  CHECK_THROWS_WITH_AS(load_cohort(dir.file("s.csv"), dir.file("late.csv")),
                       doctest::Contains("obs_time"), TimeAfterEvent);

  write_file(dir.file("bad.csv"), "id,obs_time,marker_1\na,0,oops\n");
  CHECK_THROWS_WITH_AS(load_cohort(dir.file("s.csv"), dir.file("bad.csv")),
                       doctest::Contains("marker_1"), NonNumericField);

  write_file(dir.file("nomarker.csv"), "id,obs_time\na,0\n");
  CHECK_THROWS_AS(load_cohort(dir.file("s.csv"), dir.file("nomarker.csv")),
                  MissingColumn);

  // empty measurements: every subject needs at least one observation
  write_file(dir.file("empty.csv"), "id,obs_time,marker_1\n");
  CHECK_THROWS_AS(load_cohort(dir.file("s.csv"), dir.file("empty.csv")),
                  Error);

  write_file(dir.file("noid.csv"), "time,event\n10,1\n");
  CHECK_THROWS_AS(load_cohort(dir.file("noid.csv"), dir.file("empty.csv")),
                  MissingColumn);
}

TEST_CASE("cohort round trip through the writers") {
  const SimulationTruth truth = flat_truth(6, 20.0, 0.08);
  RandomStream rng(57);
  const SimulatedCohort sim =
      simulate_cohort(truth, 25, {0, 3, 6, 9, 12, 15, 18}, 20.0, rng);
  TempDir dir;
  write_cohort(sim.cohort, dir.file("s.csv"), dir.file("m.csv"));
  const Cohort back = load_cohort(dir.file("s.csv"), dir.file("m.csv"));
  REQUIRE(back.subjects.size() == sim.cohort.subjects.size());
  for (size_t i = 0; i < back.subjects.size(); ++i) {
    const SubjectData& a = sim.cohort.subjects[i];
    const SubjectData& b = back.subjects[i];
    CHECK(a.id == b.id);
    CHECK(a.event == b.event);
    CHECK(a.event_time == b.event_time);  // %.17g round-trips exactly
    CHECK(a.obs_times == b.obs_times);
    CHECK(a.y == b.y);
  }
}

TEST_CASE("simulate: determinism, schedule bounds, no post-event times") {
  const SimulationTruth truth = flat_truth(6, 20.0, 0.1);
  const std::vector<double> schedule{0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  RandomStream r1(91), r2(91);
  const SimulatedCohort a = simulate_cohort(truth, 40, schedule, 20.0, r1);
  const SimulatedCohort b = simulate_cohort(truth, 40, schedule, 20.0, r2);
  for (size_t i = 0; i < 40; ++i) {
    CHECK(a.cohort.subjects[i].event_time == b.cohort.subjects[i].event_time);
    CHECK(a.cohort.subjects[i].y == b.cohort.subjects[i].y);
    CHECK(a.beta[i] == b.beta[i]);
    CHECK(a.cohort.subjects[i].obs_times.size() <=
          static_cast<Eigen::Index>(schedule.size()));
    CHECK(a.cohort.subjects[i].obs_times.maxCoeff() <=
          a.cohort.subjects[i].event_time);
    CHECK(a.cohort.subjects[i].obs_times.size() >= 1);
  }
}

TEST_CASE("simulate: constant hazard event times pass KS against Exp") {
  // links zero, single interval: event times are Exp(lambda) truncated at T;
  // compare on the uncensored subset against the truncated cdf
  const double lambda = 0.15, T = 40.0;
  const SimulationTruth truth = flat_truth(6, T, lambda);
  RandomStream rng(97);
  const SimulatedCohort sim = simulate_cohort(truth, 5000, {0.0}, T, rng);
  std::vector<double> obs;
  int censored = 0;
  for (const auto& s : sim.cohort.subjects) {
    if (s.event) {
      obs.push_back(s.event_time);
    } else {
      ++censored;
    }
  }
  const double pT = 1.0 - std::exp(-lambda * T);
  auto cdf = [&](double t) { return (1.0 - std::exp(-lambda * t)) / pT; };
  CHECK(ks_pvalue(obs, cdf) > 0.01);
  // censoring fraction close to exp(-lambda T)
  const double frac = static_cast<double>(censored) / 5000.0;
  CHECK(std::abs(frac - std::exp(-lambda * T)) < 0.01);
}

TEST_CASE("simulate: tiny censor time censors everyone") {
  const SimulationTruth truth = flat_truth(6, 20.0, 0.1);
  RandomStream rng(101);
  const SimulatedCohort sim = simulate_cohort(truth, 30, {0.0}, 1e-6, rng);
  for (const auto& s : sim.cohort.subjects) {
    CHECK_FALSE(s.event);
    CHECK(s.event_time == doctest::Approx(1e-6));
  }
}

TEST_CASE("simulate: positive link raises event rates with the trajectory") {
  // gamma > 0: subjects with higher average trajectory level fail sooner;
  // rank correlation between mean(beta) and event indicator weighted time
  SimulationTruth truth = flat_truth(6, 20.0, 0.05);
  truth.link.gamma[0] = 2.5;
  RandomStream rng(103);
  const SimulatedCohort sim = simulate_cohort(truth, 2000, {0.0}, 20.0, rng);
  // split by trajectory level; higher level must show more events
  std::vector<std::pair<double, bool>> lv;
  for (size_t i = 0; i < sim.cohort.subjects.size(); ++i) {
    lv.emplace_back(sim.beta[i].row(0).mean(), sim.cohort.subjects[i].event);
  }
  std::sort(lv.begin(), lv.end());
  double lo_events = 0, hi_events = 0;
  for (size_t i = 0; i < lv.size(); ++i) {
    (i < lv.size() / 2 ? lo_events : hi_events) += lv[i].second ? 1.0 : 0.0;
  }
  CHECK(hi_events > lo_events + 3.0 * std::sqrt(hi_events + lo_events));
}

TEST_CASE("samples round trip is exact") {
  const SimulationTruth truth = flat_truth(6, 20.0, 0.1);
  RandomStream rng(107);
  const SimulatedCohort sim =
      simulate_cohort(truth, 8, {0, 4, 8, 12, 16, 20}, 20.0, rng);
  const ModelSpec spec{equal_basis(6, 20.0),
                       make_hazard_cuts(sim.cohort.subjects),
                       ModelConfig{ModelKind::slope, 6, KnotStrategy::equal, 10}};
  const Dims dims = infer_dims(sim.cohort.subjects, spec);
  McmcConfig mcmc;
  mcmc.iterations = 60;
  mcmc.burn_in = 10;
  mcmc.thin = 5;
  mcmc.seed = 3;
  const PosteriorSamples out =
      run_chain(sim.cohort.subjects, spec, PriorConfig::defaults(dims), mcmc);

  TempDir dir;
  write_samples(out, ModelKind::slope, dir.file("samples.csv"));
  const PosteriorSamples back = read_samples(dir.file("samples.csv"));
  CHECK(back.draws.size() == out.draws.size());
  CHECK(back.subject_loglik == out.subject_loglik);
  CHECK(back.meta.seed == out.meta.seed);
  CHECK(back.meta.iterations == out.meta.iterations);
  CHECK(back.meta.thin == out.meta.thin);
  for (size_t g = 0; g < out.draws.size(); ++g) {
    CHECK(flatten_state(back.draws[g], dims) == flatten_state(out.draws[g], dims));
    CHECK(back.draws[g].link.kind == ModelKind::slope);
  }
}

TEST_CASE("summary, fit stats, and roc files round trip") {
  TempDir dir;
  std::vector<SummaryRow> rows{{"gamma.1", 0.5, 0.1, 0.9},
                               {"lambda.1", 0.05, 0.01, 0.11}};
  write_summary(rows, {1.001, 1.02}, dir.file("summary.csv"));
  const std::vector<SummaryRow> rback = read_summary(dir.file("summary.csv"));
  REQUIRE(rback.size() == 2);
  CHECK(rback[0].name == "gamma.1");
  CHECK(rback[0].mean == 0.5);
  CHECK(rback[1].upper == 0.11);

  FitStats st;
  st.dic = 1590.25;
  st.p_d = 31.5;
  st.mean_deviance = 1527.25;
  st.deviance_at_mean = 1495.75;
  st.lpml = -812.375;
  st.log_cpo = Eigen::Vector3d(-2.5, -3.25, -1.125);
  write_fit_stats(st, dir.file("stats.csv"));
  const FitStats sback = read_fit_stats(dir.file("stats.csv"));
  CHECK(sback.dic == st.dic);
  CHECK(sback.p_d == st.p_d);
  CHECK(sback.lpml == st.lpml);
  CHECK(sback.log_cpo == st.log_cpo);

  RocResult roc;
  roc.landmark = 6.0;
  roc.horizon = 12.0;
  roc.auc = 0.625;
  roc.n_at_risk = 40;
  roc.degenerate = false;
  roc.points = {{0.0, 0.0}, {0.25, 0.75}, {1.0, 1.0}};
  write_roc(roc, dir.file("roc.csv"));
  const RocResult rocb = read_roc(dir.file("roc.csv"));
  CHECK(rocb.landmark == 6.0);
  CHECK(rocb.horizon == 12.0);
  CHECK(rocb.auc == 0.625);
  CHECK(rocb.n_at_risk == 40);
  CHECK(rocb.points == roc.points);
}

TEST_CASE("format_double: canonical and round-trip exact") {
  CHECK(format_double(0.0) == "0");
  CHECK(format_double(1.5) == "1.5");
  RandomStream rng(113);
  for (int i = 0; i < 200; ++i) {
    const double x = std::exp(10.0 * rng.normal()) * (rng.uniform() < 0.5 ? -1 : 1);
    CHECK(std::stod(format_double(x)) == x);
  }
}

TEST_CASE("golden file: fixed summary renders byte-identically") {
  TempDir dir;
  std::vector<SummaryRow> rows{{"gamma.1", 0.5, -0.25, 1.75}};
  write_summary(rows, {1.5}, dir.file("g.csv"));
  std::ifstream f(dir.file("g.csv"));
  std::string content((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
  CHECK(content == "parameter,mean,lower,upper,rhat\ngamma.1,0.5,-0.25,1.75,1.5\n");
}
