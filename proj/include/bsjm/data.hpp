#pragma once

#include <string>
#include <vector>

#include "bsjm/diagnostics.hpp"
#include "bsjm/gibbs.hpp"
#include "bsjm/model.hpp"
#include "bsjm/spline.hpp"

namespace bsjm {

struct Cohort {
  std::vector<SubjectData> subjects;
  int L = 0, p = 0, p_z = 0;
  double T = 0.0;  // follow-up horizon, months
  std::vector<std::string> marker_names;
  std::vector<std::string> x_names;
  std::vector<std::string> z_names;
};

// Generating truth for synthetic cohorts.
struct SimulationTruth {
  LinkParams link;
  HazardSpec hazard;
  LongitudinalParams lp;
  KnotVector basis;
  double censor_time = 0.0;
  int quad_order = 10;
};

// Subjects file columns: id,time,event,x_1..x_p,z_1..z_pz.
// Measurements file columns: id,obs_time,marker_1..marker_L.
Cohort load_cohort(const std::string& subjects_path,
                   const std::string& measurements_path);

struct SimulatedCohort {
  Cohort cohort;
  std::vector<Eigen::MatrixXd> beta;  // latent per-subject coefficients, L x q
};

// Forward simulation: latent trajectories from the hierarchical Gaussian
// model, event times by bisection inversion of the cumulative hazard against
// a unit exponential draw, censoring at censor_time.  X and Z covariate
// entries are i.i.d. Bernoulli(1/2).  Measurements after the event are
// dropped; a measurement at time 0 is always kept so every subject has at
// least one observation.
SimulatedCohort simulate_cohort(const SimulationTruth& truth, int n_subjects,
                                const std::vector<double>& obs_schedule,
                                double censor_time, RandomStream& rng,
                                double jitter = 0.0);

void write_cohort(const Cohort& cohort, const std::string& subjects_path,
                  const std::string& measurements_path);

// Persisted sample matrix: one row per saved draw, named parameter columns
// plus per-subject loglik.i columns, with a JSON metadata sidecar at
// path + ".meta.json".
void write_samples(const PosteriorSamples& samples, ModelKind kind,
                   const std::string& path);
PosteriorSamples read_samples(const std::string& path);

void write_summary(const std::vector<SummaryRow>& rows,
                   const std::vector<double>& rhats, const std::string& path);
std::vector<SummaryRow> read_summary(const std::string& path);

void write_fit_stats(const FitStats& stats, const std::string& path);
FitStats read_fit_stats(const std::string& path);

void write_roc(const RocResult& roc, const std::string& path);
RocResult read_roc(const std::string& path);

// Canonical float formatting used by every writer (round-trips exactly).
std::string format_double(double v);

}  // namespace bsjm
