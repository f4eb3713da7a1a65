#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "bsjm/model.hpp"
#include "bsjm/rng.hpp"
#include "bsjm/samplers.hpp"
#include "bsjm/spline.hpp"

namespace bsjm {

struct Dims {
  int N = 0, L = 0, q = 0, p = 0, p_z = 0, J = 0;
  int flat_size() const;
};

// Full parameter state at one Gibbs iteration.
struct ChainState {
  std::vector<Eigen::MatrixXd> beta;  // N matrices, L x q
  LongitudinalParams lp;
  LinkParams link;
  Eigen::VectorXd lambda;  // J
};

struct PriorConfig {
  Eigen::VectorXd g0;                  // 3L
  Eigen::MatrixXd g1;                  // 3L x 3L
  Eigen::VectorXd zeta_mean;           // p_z
  Eigen::MatrixXd zeta_cov;            // p_z x p_z
  Eigen::VectorXd d0, d1;              // J, gamma(shape, rate) per interval
  Eigen::MatrixXd a0;                  // L x q, b0 prior means
  std::vector<Eigen::MatrixXd> a1;     // L matrices, q x q
  Eigen::MatrixXd c0;                  // L x p, alpha prior means
  std::vector<Eigen::MatrixXd> c1;     // L matrices, p x p
  double nu_sigma = 0.0;
  Eigen::MatrixXd s_sigma;             // L x L
  double nu_v0 = 0.0;
  Eigen::MatrixXd s_v0;                // q x q

  // Weakly informative proper defaults: N(0, 100 I) on regression blocks,
  // gamma(0.01, 0.01) on hazard rates, Wishart dof = dim + 1 with identity
  // scale on the covariance inverses.
  static PriorConfig defaults(const Dims& dims);
};

struct McmcConfig {
  int iterations = 20000;
  int burn_in = 2000;
  int thin = 10;
  std::uint64_t seed = 1;
  int chain_id = 0;
  double slice_width_beta = 0.5;
  double ars_step = 1.0;
  int slice_max_steps = 50;
};

struct SampleMeta {
  std::uint64_t seed = 0;
  int iterations = 0, burn_in = 0, thin = 0, chain_id = 0;
};

struct PosteriorSamples {
  std::vector<ChainState> draws;
  Eigen::MatrixXd subject_loglik;  // G x N, per-draw joint log-likelihood terms
  SampleMeta meta;
  Dims dims;
};

// Knot vector plus hazard jump points plus run options: everything about the
// model that is fixed across iterations.
struct ModelSpec {
  KnotVector basis;
  std::vector<double> cuts;
  ModelConfig config;
};

// Hazard jump points at event-time quantiles targeting the given number of
// events per interval; final interval open-ended.
std::vector<double> make_hazard_cuts(const std::vector<SubjectData>& subjects,
                                     double events_per_interval = 8.0);

Dims infer_dims(const std::vector<SubjectData>& subjects, const ModelSpec& spec);

// Sum over subjects of longitudinal + survival log densities; the quantity
// fed to DIC and CPO.
double joint_loglik(const std::vector<SubjectData>& subjects,
                    const ChainState& state, const ModelSpec& spec);

// Stable parameter naming for persisted samples and summaries (1-based
// indices): beta.i.l.k, gamma.l, gamma_s.l, gamma_h.l, zeta.p, lambda.j,
// b0.l.k, Sigma.r.c, V0.l.r.c, alpha.l.p.
std::vector<std::string> parameter_names(const Dims& dims);
Eigen::VectorXd flatten_state(const ChainState& state, const Dims& dims);
ChainState unflatten_state(const Eigen::VectorXd& flat, const Dims& dims,
                           ModelKind kind);
ChainState mean_state(const PosteriorSamples& samples);

// The Gibbs cycle with per-update entry points (exposed for conditional
// correctness tests).  Updates mutate the held state in place.
class GibbsSampler {
 public:
  GibbsSampler(const std::vector<SubjectData>& subjects, const ModelSpec& spec,
               const PriorConfig& priors, const McmcConfig& mcmc);

  const ChainState& state() const { return state_; }
  void set_state(const ChainState& s);
  const Dims& dims() const { return dims_; }
  RandomStream& rng() { return rng_; }

  void initialize();     // least-squares beta, prior-based remaining blocks
  void update_beta();    // coordinatewise slice sampling
  void update_v0();
  void update_sigma();
  void update_b0();
  void update_links();   // coordinatewise ARS over the gamma block and zeta
  void update_lambda();
  void update_alpha();
  void iterate();        // the full step 1..7 cycle

  double subject_loglik(int i) const;
  PosteriorSamples run();

 private:
  struct SubjectCache {
    Eigen::MatrixXd obsB;                     // m x q
    Eigen::VectorXd s_val, s_der, s_int;      // q, basis rows at s_i
    Eigen::ArrayXd node_w;                    // scaled quadrature weights
    Eigen::VectorXi node_j;                   // hazard interval per node
    Eigen::MatrixXd nodeB, nodeBd, nodeBi;    // nodes x q
    int offset = 0;                           // position in flattened node arrays
  };

  void refresh_precision();
  Eigen::ArrayXd node_eta(int i) const;       // link exponent at subject i's nodes
  Eigen::ArrayXd flat_eta() const;
  double link_exponent_at_event(int i) const;

  const std::vector<SubjectData>& subjects_;
  ModelSpec spec_;
  PriorConfig priors_;
  McmcConfig mcmc_;
  Dims dims_;
  RandomStream rng_;
  ChainState state_;

  std::vector<SubjectCache> cache_;
  int total_nodes_ = 0;
  Eigen::VectorXi flat_j_;        // interval per flattened node
  Eigen::ArrayXd flat_w_;         // scaled weight per flattened node
  Eigen::VectorXi flat_subject_;  // owning subject per flattened node
  Eigen::VectorXd events_per_interval_;  // n_j
  Eigen::MatrixXd g1_inv_;
  Eigen::MatrixXd zeta_prec_;

  // refreshed each iteration
  Eigen::MatrixXd sigma_inv_;
  std::vector<Eigen::MatrixXd> v0_inv_;
  double sigma_logdet_ = 0.0;
};

PosteriorSamples run_chain(const std::vector<SubjectData>& subjects,
                           const ModelSpec& spec, const PriorConfig& priors,
                           const McmcConfig& mcmc);

// Split-chain potential scale reduction over per-chain scalar series.
double rhat(const std::vector<Eigen::VectorXd>& chains);

}  // namespace bsjm
