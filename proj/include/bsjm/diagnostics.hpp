#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "bsjm/gibbs.hpp"

namespace bsjm {

struct FitStats {
  double dic = 0.0;
  double p_d = 0.0;
  double mean_deviance = 0.0;
  double deviance_at_mean = 0.0;
  double lpml = 0.0;
  Eigen::VectorXd log_cpo;  // per subject
};

struct RocResult {
  double landmark = 0.0;
  double horizon = 0.0;
  std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0) .. (1,1)
  double auc = 0.5;
  int n_at_risk = 0;
  bool degenerate = false;  // all marker values tied
};

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// DIC = D(theta_bar) + 2 p_D with D = -2 log f and theta_bar the
// coordinatewise posterior mean; smaller is better.
FitStats dic(const PosteriorSamples& samples,
             const std::vector<SubjectData>& subjects, const ModelSpec& spec);

// CPO_i as the harmonic mean of per-draw subject likelihoods, computed in log
// space; LPML = sum of log CPO_i.  Fills lpml/log_cpo only.
FitStats lpml(const PosteriorSamples& samples);

// Combined model-comparison statistics.
FitStats fit_stats(const PosteriorSamples& samples,
                   const std::vector<SubjectData>& subjects,
                   const ModelSpec& spec);

// Cumulative/dynamic time-dependent ROC with Kaplan-Meier case/control
// weighting.  Subjects with event or censoring at or before the landmark are
// excluded; cases are events within (landmark, landmark + horizon].
RocResult roc_curve(const Eigen::VectorXd& markers,
                    const Eigen::VectorXd& event_times,
                    const std::vector<bool>& events, double landmark,
                    double horizon);

// Posterior mean and equal-tailed credible interval per parameter.
std::vector<SummaryRow> summarize(const PosteriorSamples& samples, double level);

// Empirical quantile (linear interpolation) of an unsorted sample.
double empirical_quantile(std::vector<double> values, double p);

}  // namespace bsjm
