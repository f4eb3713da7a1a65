#include "bsjm/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bsjm {

int Dims::flat_size() const {
  return N * L * q + 3 * L + p_z + J + L * q + L * L + L * q * q + L * p;
}

PriorConfig PriorConfig::defaults(const Dims& d) {
  PriorConfig pc;
  pc.g0 = Eigen::VectorXd::Zero(3 * d.L);
  pc.g1 = 100.0 * Eigen::MatrixXd::Identity(3 * d.L, 3 * d.L);
  pc.zeta_mean = Eigen::VectorXd::Zero(d.p_z);
  pc.zeta_cov = 100.0 * Eigen::MatrixXd::Identity(d.p_z, d.p_z);
  pc.d0 = Eigen::VectorXd::Constant(d.J, 0.01);
  pc.d1 = Eigen::VectorXd::Constant(d.J, 0.01);
  pc.a0 = Eigen::MatrixXd::Zero(d.L, d.q);
  pc.a1.assign(static_cast<size_t>(d.L), 100.0 * Eigen::MatrixXd::Identity(d.q, d.q));
  pc.c0 = Eigen::MatrixXd::Zero(d.L, d.p);
  pc.c1.assign(static_cast<size_t>(d.L), 100.0 * Eigen::MatrixXd::Identity(d.p, d.p));
  pc.nu_sigma = d.L + 1;
  pc.s_sigma = Eigen::MatrixXd::Identity(d.L, d.L);
  pc.nu_v0 = d.q + 1;
  pc.s_v0 = Eigen::MatrixXd::Identity(d.q, d.q);
  return pc;
}

std::vector<double> make_hazard_cuts(const std::vector<SubjectData>& subjects,
                                     double events_per_interval) {
  std::vector<double> ev;
  for (const auto& s : subjects) {
    if (s.event) ev.push_back(s.event_time);
  }
  std::sort(ev.begin(), ev.end());
  std::vector<double> cuts{0.0};
  if (ev.size() < 2) return cuts;
  const int J = std::max(1, static_cast<int>(std::lround(
                                 static_cast<double>(ev.size()) / events_per_interval)));
  for (int j = 1; j < J; ++j) {
    const double p = static_cast<double>(j) / static_cast<double>(J);
    const double h = p * (static_cast<double>(ev.size()) - 1.0);
    const size_t lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, ev.size() - 1);
    const double c = ev[lo] + (h - std::floor(h)) * (ev[hi] - ev[lo]);
    if (c > cuts.back()) cuts.push_back(c);
  }
  return cuts;
}

Dims infer_dims(const std::vector<SubjectData>& subjects, const ModelSpec& spec) {
  if (subjects.empty()) throw InvalidParameter("no subjects");
  Dims d;
  d.N = static_cast<int>(subjects.size());
  d.L = static_cast<int>(subjects.front().y.cols());
  d.q = spec.basis.q();
  d.p = static_cast<int>(subjects.front().x.size());
  d.p_z = static_cast<int>(subjects.front().z.size());
  d.J = static_cast<int>(spec.cuts.size());
  return d;
}

double joint_loglik(const std::vector<SubjectData>& subjects,
                    const ChainState& state, const ModelSpec& spec) {
  HazardSpec hazard{spec.cuts, state.lambda};
  double ll = 0.0;
  for (size_t i = 0; i < subjects.size(); ++i) {
    ll += longitudinal_loglik(subjects[i], state.beta[i], state.lp.sigma, spec.basis);
    ll += survival_logdensity(subjects[i], state.beta[i], state.link, hazard,
                              spec.basis, spec.config.quad_order);
  }
  return ll;
}

std::vector<std::string> parameter_names(const Dims& d) {
  std::vector<std::string> names;
  names.reserve(static_cast<size_t>(d.flat_size()));
  auto tag = [&](const std::string& base, std::initializer_list<int> idx) {
    std::ostringstream os;
    os << base;
    for (int v : idx) os << '.' << v;
    names.push_back(os.str());
  };
  for (int i = 1; i <= d.N; ++i)
    for (int l = 1; l <= d.L; ++l)
      for (int k = 1; k <= d.q; ++k) tag("beta", {i, l, k});
  for (int l = 1; l <= d.L; ++l) tag("gamma", {l});
  for (int l = 1; l <= d.L; ++l) tag("gamma_s", {l});
  for (int l = 1; l <= d.L; ++l) tag("gamma_h", {l});
  for (int m = 1; m <= d.p_z; ++m) tag("zeta", {m});
  for (int j = 1; j <= d.J; ++j) tag("lambda", {j});
  for (int l = 1; l <= d.L; ++l)
    for (int k = 1; k <= d.q; ++k) tag("b0", {l, k});
  for (int r = 1; r <= d.L; ++r)
    for (int c = 1; c <= d.L; ++c) tag("Sigma", {r, c});
  for (int l = 1; l <= d.L; ++l)
    for (int r = 1; r <= d.q; ++r)
      for (int c = 1; c <= d.q; ++c) tag("V0", {l, r, c});
  for (int l = 1; l <= d.L; ++l)
    for (int m = 1; m <= d.p; ++m) tag("alpha", {l, m});
  return names;
}

Eigen::VectorXd flatten_state(const ChainState& s, const Dims& d) {
  Eigen::VectorXd flat(d.flat_size());
  Eigen::Index at = 0;
  for (int i = 0; i < d.N; ++i)
    for (int l = 0; l < d.L; ++l)
      for (int k = 0; k < d.q; ++k) flat[at++] = s.beta[static_cast<size_t>(i)](l, k);
  for (int l = 0; l < d.L; ++l) flat[at++] = s.link.gamma[l];
  for (int l = 0; l < d.L; ++l) flat[at++] = s.link.gamma_s[l];
  for (int l = 0; l < d.L; ++l) flat[at++] = s.link.gamma_h[l];
  for (int m = 0; m < d.p_z; ++m) flat[at++] = s.link.zeta[m];
  for (int j = 0; j < d.J; ++j) flat[at++] = s.lambda[j];
  for (int l = 0; l < d.L; ++l)
    for (int k = 0; k < d.q; ++k) flat[at++] = s.lp.b0(l, k);
  for (int r = 0; r < d.L; ++r)
    for (int c = 0; c < d.L; ++c) flat[at++] = s.lp.sigma(r, c);
  for (int l = 0; l < d.L; ++l)
    for (int r = 0; r < d.q; ++r)
      for (int c = 0; c < d.q; ++c) flat[at++] = s.lp.v0[static_cast<size_t>(l)](r, c);
  for (int l = 0; l < d.L; ++l)
    for (int m = 0; m < d.p; ++m) flat[at++] = s.lp.alpha(l, m);
  return flat;
}

ChainState unflatten_state(const Eigen::VectorXd& flat, const Dims& d,
                           ModelKind kind) {
  if (flat.size() != d.flat_size()) {
    throw InvalidParameter("unflatten_state: size mismatch");
  }
  ChainState s;
  s.beta.assign(static_cast<size_t>(d.N), Eigen::MatrixXd(d.L, d.q));
  s.link = LinkParams::zeros(d.L, d.p_z, kind);
  s.lambda.resize(d.J);
  s.lp.b0.resize(d.L, d.q);
  s.lp.sigma.resize(d.L, d.L);
  s.lp.v0.assign(static_cast<size_t>(d.L), Eigen::MatrixXd(d.q, d.q));
  s.lp.alpha.resize(d.L, d.p);
  Eigen::Index at = 0;
  for (int i = 0; i < d.N; ++i)
    for (int l = 0; l < d.L; ++l)
      for (int k = 0; k < d.q; ++k) s.beta[static_cast<size_t>(i)](l, k) = flat[at++];
  for (int l = 0; l < d.L; ++l) s.link.gamma[l] = flat[at++];
  for (int l = 0; l < d.L; ++l) s.link.gamma_s[l] = flat[at++];
  for (int l = 0; l < d.L; ++l) s.link.gamma_h[l] = flat[at++];
  for (int m = 0; m < d.p_z; ++m) s.link.zeta[m] = flat[at++];
  for (int j = 0; j < d.J; ++j) s.lambda[j] = flat[at++];
  for (int l = 0; l < d.L; ++l)
    for (int k = 0; k < d.q; ++k) s.lp.b0(l, k) = flat[at++];
  for (int r = 0; r < d.L; ++r)
    for (int c = 0; c < d.L; ++c) s.lp.sigma(r, c) = flat[at++];
  for (int l = 0; l < d.L; ++l)
    for (int r = 0; r < d.q; ++r)
      for (int c = 0; c < d.q; ++c) s.lp.v0[static_cast<size_t>(l)](r, c) = flat[at++];
  for (int l = 0; l < d.L; ++l)
    for (int m = 0; m < d.p; ++m) s.lp.alpha(l, m) = flat[at++];
  return s;
}

ChainState mean_state(const PosteriorSamples& samples) {
  if (samples.draws.empty()) throw EmptySamples("mean_state: no draws");
  // Mean of deltas around the first draw: exact for point-mass sample sets.
  const Eigen::VectorXd base = flatten_state(samples.draws.front(), samples.dims);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(samples.dims.flat_size());
  for (const auto& s : samples.draws) acc += flatten_state(s, samples.dims) - base;
  acc /= static_cast<double>(samples.draws.size());
  return unflatten_state(base + acc, samples.dims, samples.draws.front().link.kind);
}

// ---------------------------------------------------------------------------

GibbsSampler::GibbsSampler(const std::vector<SubjectData>& subjects,
                           const ModelSpec& spec, const PriorConfig& priors,
                           const McmcConfig& mcmc)
    : subjects_(subjects),
      spec_(spec),
      priors_(priors),
      mcmc_(mcmc),
      dims_(infer_dims(subjects, spec)),
      rng_(mcmc.seed + 0x100000001ULL * static_cast<std::uint64_t>(mcmc.chain_id)) {
  const GaussLegendreRule& rule = gauss_legendre(spec_.config.quad_order);
  const int J = dims_.J;
  events_per_interval_ = Eigen::VectorXd::Zero(J);
  cache_.resize(subjects_.size());
  std::vector<double> fw;
  std::vector<int> fj, fs;
  for (size_t i = 0; i < subjects_.size(); ++i) {
    const SubjectData& s = subjects_[i];
    SubjectCache& c = cache_[i];
    const Eigen::Index m = s.obs_times.size();
    c.obsB.resize(m, dims_.q);
    for (Eigen::Index r = 0; r < m; ++r) {
      c.obsB.row(r) = spec_.basis.eval_value(s.obs_times[r]).values.transpose();
    }
    c.s_val = spec_.basis.eval_value(s.event_time).values;
    c.s_der = spec_.basis.eval_derivative(s.event_time).values;
    c.s_int = spec_.basis.eval_integral(s.event_time).values;

    HazardSpec skeleton{spec_.cuts, Eigen::VectorXd::Ones(J)};
    if (s.event) events_per_interval_[skeleton.interval_of(s.event_time)] += 1.0;

    // Node layout mirrors cumulative_hazard_at: per hazard interval, panels
    // split at interior spline knots so the rule sees smooth integrands.
    const std::vector<double>& knots = spec_.basis.knots();
    std::vector<double> nt, nw;
    std::vector<int> nj;
    for (int j = 0; j < J; ++j) {
      const double a = spec_.cuts[static_cast<size_t>(j)];
      const double b = std::min(skeleton.interval_end(j), s.event_time);
      if (b <= a) continue;
      double lo = a;
      for (size_t sp = 4; sp + 4 <= knots.size(); ++sp) {
        const double cut = sp + 4 < knots.size() ? knots[sp] : b;
        const double hi = std::min(cut, b);
        if (hi > lo) {
          const double half = 0.5 * (hi - lo), mid = 0.5 * (lo + hi);
          for (int k = 0; k < spec_.config.quad_order; ++k) {
            nt.push_back(mid + half * rule.nodes[k]);
            nw.push_back(half * rule.weights[k]);
            nj.push_back(j);
          }
          lo = hi;
        }
        if (lo >= b) break;
      }
    }
    const int n = static_cast<int>(nt.size());
    c.offset = total_nodes_;
    c.node_w = Eigen::Map<Eigen::ArrayXd>(nw.data(), n);
    c.node_j = Eigen::Map<Eigen::VectorXi>(nj.data(), n);
    c.nodeB.resize(n, dims_.q);
    c.nodeBd.resize(n, dims_.q);
    c.nodeBi.resize(n, dims_.q);
    for (int r = 0; r < n; ++r) {
      c.nodeB.row(r) = spec_.basis.eval_value(nt[static_cast<size_t>(r)]).values.transpose();
      c.nodeBd.row(r) = spec_.basis.eval_derivative(nt[static_cast<size_t>(r)]).values.transpose();
      c.nodeBi.row(r) = spec_.basis.eval_integral(nt[static_cast<size_t>(r)]).values.transpose();
      fw.push_back(nw[static_cast<size_t>(r)]);
      fj.push_back(nj[static_cast<size_t>(r)]);
      fs.push_back(static_cast<int>(i));
    }
    total_nodes_ += n;
  }
  flat_w_ = Eigen::Map<Eigen::ArrayXd>(fw.data(), total_nodes_);
  flat_j_ = Eigen::Map<Eigen::VectorXi>(fj.data(), total_nodes_);
  flat_subject_ = Eigen::Map<Eigen::VectorXi>(fs.data(), total_nodes_);

  g1_inv_ = priors_.g1.llt().solve(Eigen::MatrixXd::Identity(3 * dims_.L, 3 * dims_.L));
  zeta_prec_ = dims_.p_z > 0
                   ? priors_.zeta_cov.llt()
                         .solve(Eigen::MatrixXd::Identity(dims_.p_z, dims_.p_z))
                         .eval()
                   : Eigen::MatrixXd(0, 0);
  initialize();
}

void GibbsSampler::set_state(const ChainState& s) {
  state_ = s;
  refresh_precision();
}

void GibbsSampler::refresh_precision() {
  Eigen::LLT<Eigen::MatrixXd> llt(state_.lp.sigma);
  if (llt.info() != Eigen::Success) {
    throw NonPosDefCovariance("gibbs: residual covariance not positive definite");
  }
  sigma_inv_ = llt.solve(Eigen::MatrixXd::Identity(dims_.L, dims_.L));
  sigma_logdet_ = 0.0;
  for (int k = 0; k < dims_.L; ++k) sigma_logdet_ += 2.0 * std::log(llt.matrixL()(k, k));
  v0_inv_.resize(static_cast<size_t>(dims_.L));
  for (int l = 0; l < dims_.L; ++l) {
    Eigen::LLT<Eigen::MatrixXd> vllt(state_.lp.v0[static_cast<size_t>(l)]);
    if (vllt.info() != Eigen::Success) {
      throw NonPosDefCovariance("gibbs: V0 not positive definite");
    }
    v0_inv_[static_cast<size_t>(l)] =
        vllt.solve(Eigen::MatrixXd::Identity(dims_.q, dims_.q));
  }
}

void GibbsSampler::initialize() {
  const Dims& d = dims_;
  state_.beta.assign(static_cast<size_t>(d.N), Eigen::MatrixXd(d.L, d.q));
  for (int i = 0; i < d.N; ++i) {
    const Eigen::MatrixXd& B = cache_[static_cast<size_t>(i)].obsB;
    // Ridge-stabilized least-squares start for the subject trajectories.
    const Eigen::MatrixXd G =
        B.transpose() * B + 0.1 * Eigen::MatrixXd::Identity(d.q, d.q);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    for (int l = 0; l < d.L; ++l) {
      state_.beta[static_cast<size_t>(i)].row(l) =
          ldlt.solve(B.transpose() * subjects_[static_cast<size_t>(i)].y.col(l)).transpose();
    }
  }
  state_.lp.sigma = priors_.s_sigma;
  state_.lp.v0.assign(static_cast<size_t>(d.L), priors_.s_v0);
  state_.lp.b0.resize(d.L, d.q);
  state_.lp.alpha.resize(d.L, d.p);
  for (int l = 0; l < d.L; ++l) {
    state_.lp.b0.row(l) =
        mvn_draw(priors_.a0.row(l), priors_.a1[static_cast<size_t>(l)], rng_).transpose();
    if (d.p > 0) {
      state_.lp.alpha.row(l) =
          mvn_draw(priors_.c0.row(l), priors_.c1[static_cast<size_t>(l)], rng_).transpose();
    }
  }
  // Link block: prior-centered but with dispersion capped so the initial
  // hazard exponents stay in range.
  state_.link = LinkParams::zeros(d.L, d.p_z, spec_.config.kind);
  for (int l = 0; l < d.L; ++l) {
    const double sd = std::min(0.5, std::sqrt(priors_.g1(l, l)));
    state_.link.gamma[l] = priors_.g0[l] + sd * rng_.normal();
    if (state_.link.slope_active()) {
      const double sds = std::min(0.5, std::sqrt(priors_.g1(d.L + l, d.L + l)));
      state_.link.gamma_s[l] = priors_.g0[d.L + l] + sds * rng_.normal();
    }
    if (state_.link.history_active()) {
      const double sdh = std::min(0.5, std::sqrt(priors_.g1(2 * d.L + l, 2 * d.L + l)));
      state_.link.gamma_h[l] = priors_.g0[2 * d.L + l] + sdh * rng_.normal();
    }
  }
  for (int m = 0; m < d.p_z; ++m) {
    const double sd = std::min(0.5, std::sqrt(priors_.zeta_cov(m, m)));
    state_.link.zeta[m] = priors_.zeta_mean[m] + sd * rng_.normal();
  }
  // Crude event-rate starts for the baseline hazard.
  Eigen::VectorXd exposure = Eigen::VectorXd::Zero(d.J);
  for (int n = 0; n < total_nodes_; ++n) exposure[flat_j_[n]] += flat_w_[n];
  state_.lambda.resize(d.J);
  for (int j = 0; j < d.J; ++j) {
    const double ev = events_per_interval_[j] > 0.0 ? events_per_interval_[j] : 0.5;
    state_.lambda[j] = exposure[j] > 0.0 ? ev / exposure[j] : 0.01;
  }
  refresh_precision();
}

Eigen::ArrayXd GibbsSampler::node_eta(int i) const {
  const SubjectCache& c = cache_[static_cast<size_t>(i)];
  const Eigen::MatrixXd& beta = state_.beta[static_cast<size_t>(i)];
  Eigen::ArrayXd eta = Eigen::ArrayXd::Zero(c.node_w.size());
  for (int l = 0; l < dims_.L; ++l) {
    eta += state_.link.gamma[l] * (c.nodeB * beta.row(l).transpose()).array();
    if (state_.link.slope_active()) {
      eta += state_.link.gamma_s[l] * (c.nodeBd * beta.row(l).transpose()).array();
    }
    if (state_.link.history_active()) {
      eta += state_.link.gamma_h[l] * (c.nodeBi * beta.row(l).transpose()).array();
    }
  }
  return eta;
}

Eigen::ArrayXd GibbsSampler::flat_eta() const {
  Eigen::ArrayXd eta(total_nodes_);
  for (int i = 0; i < dims_.N; ++i) {
    const SubjectCache& c = cache_[static_cast<size_t>(i)];
    eta.segment(c.offset, c.node_w.size()) = node_eta(i);
  }
  return eta;
}

double GibbsSampler::link_exponent_at_event(int i) const {
  const SubjectCache& c = cache_[static_cast<size_t>(i)];
  const Eigen::MatrixXd& beta = state_.beta[static_cast<size_t>(i)];
  double e = state_.link.gamma.dot(beta * c.s_val);
  if (state_.link.slope_active()) e += state_.link.gamma_s.dot(beta * c.s_der);
  if (state_.link.history_active()) e += state_.link.gamma_h.dot(beta * c.s_int);
  return e;
}

void GibbsSampler::update_beta() {
  const Dims& d = dims_;
  for (int i = 0; i < d.N; ++i) {
    const SubjectData& subj = subjects_[static_cast<size_t>(i)];
    const SubjectCache& c = cache_[static_cast<size_t>(i)];
    Eigen::MatrixXd& beta = state_.beta[static_cast<size_t>(i)];
    const double zexp = std::exp(subj.z.dot(state_.link.zeta));
    const double nu = subj.event ? 1.0 : 0.0;

    // Residuals and hazard-node state, maintained incrementally over the sweep.
    Eigen::MatrixXd R = subj.y - c.obsB * beta.transpose();  // m x L
    Eigen::ArrayXd eta = node_eta(i);
    Eigen::ArrayXd lamw(c.node_w.size());
    for (Eigen::Index n = 0; n < lamw.size(); ++n) {
      lamw[n] = c.node_w[n] * state_.lambda[c.node_j[n]] * zexp;
    }
    Eigen::ArrayXd haz = lamw * eta.exp();

    for (int l = 0; l < d.L; ++l) {
      const double shift = d.p > 0 ? subj.x.dot(state_.lp.alpha.row(l)) : 0.0;
      Eigen::VectorXd rho = beta.row(l).transpose() - state_.lp.b0.row(l).transpose() -
                            Eigen::VectorXd::Constant(d.q, shift);
      Eigen::MatrixXd RSig = R * sigma_inv_;  // m x L, kept in sync with R
      for (int k = 0; k < d.q; ++k) {
        Eigen::ArrayXd coef = state_.link.gamma[l] * c.nodeB.col(k).array();
        if (state_.link.slope_active()) coef += state_.link.gamma_s[l] * c.nodeBd.col(k).array();
        if (state_.link.history_active()) coef += state_.link.gamma_h[l] * c.nodeBi.col(k).array();
        double cs = state_.link.gamma[l] * c.s_val[k];
        if (state_.link.slope_active()) cs += state_.link.gamma_s[l] * c.s_der[k];
        if (state_.link.history_active()) cs += state_.link.gamma_h[l] * c.s_int[k];

        const double quad = sigma_inv_(l, l) * c.obsB.col(k).squaredNorm() +
                            v0_inv_[static_cast<size_t>(l)](k, k);
        const double lin = c.obsB.col(k).dot(RSig.col(l)) -
                           v0_inv_[static_cast<size_t>(l)].row(k).dot(rho) + nu * cs;
        const double haz0 = haz.sum();
        auto target = [&](double delta) {
          const double v = lin * delta - 0.5 * quad * delta * delta -
                           ((coef * delta).exp() * haz).sum() + haz0;
          return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
        };
        const double delta = slice_sample(target, 0.0, mcmc_.slice_width_beta,
                                          mcmc_.slice_max_steps, rng_);
        if (delta != 0.0) {
          beta(l, k) += delta;
          rho[k] += delta;
          R.col(l) -= c.obsB.col(k) * delta;
          RSig -= delta * c.obsB.col(k) * sigma_inv_.row(l);
          haz *= (coef * delta).exp();
        }
      }
    }
  }
}

void GibbsSampler::update_v0() {
  const Dims& d = dims_;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d.q, d.q);
  const Eigen::MatrixXd s_inv = priors_.s_v0.llt().solve(eye);
  for (int l = 0; l < d.L; ++l) {
    Eigen::MatrixXd S = s_inv;
    for (int i = 0; i < d.N; ++i) {
      const double shift =
          d.p > 0 ? subjects_[static_cast<size_t>(i)].x.dot(state_.lp.alpha.row(l)) : 0.0;
      const Eigen::VectorXd r =
          state_.beta[static_cast<size_t>(i)].row(l).transpose() -
          state_.lp.b0.row(l).transpose() - Eigen::VectorXd::Constant(d.q, shift);
      S += r * r.transpose();
    }
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) throw NonPosDefScale("update_v0: scale not positive definite");
    const Eigen::MatrixXd scale = llt.solve(eye);
    const Eigen::MatrixXd prec = wishart_draw(scale, d.N + priors_.nu_v0, rng_);
    v0_inv_[static_cast<size_t>(l)] = prec;
    state_.lp.v0[static_cast<size_t>(l)] = prec.llt().solve(eye);
  }
}

void GibbsSampler::update_sigma() {
  const Dims& d = dims_;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d.L, d.L);
  Eigen::MatrixXd S = priors_.s_sigma.llt().solve(eye);
  double mtotal = 0.0;
  for (int i = 0; i < d.N; ++i) {
    const Eigen::MatrixXd R =
        subjects_[static_cast<size_t>(i)].y -
        cache_[static_cast<size_t>(i)].obsB * state_.beta[static_cast<size_t>(i)].transpose();
    S += R.transpose() * R;
    mtotal += static_cast<double>(R.rows());
  }
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw NonPosDefScale("update_sigma: scale not positive definite");
  const Eigen::MatrixXd prec = wishart_draw(llt.solve(eye), mtotal + priors_.nu_sigma, rng_);
  sigma_inv_ = prec;
  Eigen::LLT<Eigen::MatrixXd> pllt(prec);
  state_.lp.sigma = pllt.solve(eye);
  sigma_logdet_ = 0.0;
  for (int k = 0; k < d.L; ++k) sigma_logdet_ -= 2.0 * std::log(pllt.matrixL()(k, k));
}

void GibbsSampler::update_b0() {
  const Dims& d = dims_;
  for (int l = 0; l < d.L; ++l) {
    const Eigen::MatrixXd a1_inv = priors_.a1[static_cast<size_t>(l)].llt().solve(
        Eigen::MatrixXd::Identity(d.q, d.q));
    const Eigen::MatrixXd prec = d.N * v0_inv_[static_cast<size_t>(l)] + a1_inv;
    Eigen::VectorXd rhs = a1_inv * priors_.a0.row(l).transpose();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d.q);
    for (int i = 0; i < d.N; ++i) {
      const double shift =
          d.p > 0 ? subjects_[static_cast<size_t>(i)].x.dot(state_.lp.alpha.row(l)) : 0.0;
      acc += state_.beta[static_cast<size_t>(i)].row(l).transpose() -
             Eigen::VectorXd::Constant(d.q, shift);
    }
    rhs += v0_inv_[static_cast<size_t>(l)] * acc;
    const Eigen::MatrixXd cov = prec.llt().solve(Eigen::MatrixXd::Identity(d.q, d.q));
    state_.lp.b0.row(l) = mvn_draw(cov * rhs, cov, rng_).transpose();
  }
}

void GibbsSampler::update_alpha() {
  const Dims& d = dims_;
  if (d.p == 0) return;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(d.q);
  for (int l = 0; l < d.L; ++l) {
    const Eigen::MatrixXd c1_inv = priors_.c1[static_cast<size_t>(l)].llt().solve(
        Eigen::MatrixXd::Identity(d.p, d.p));
    const double w = ones.dot(v0_inv_[static_cast<size_t>(l)] * ones);
    Eigen::MatrixXd prec = c1_inv;
    Eigen::VectorXd rhs = c1_inv * priors_.c0.row(l).transpose();
    for (int i = 0; i < d.N; ++i) {
      const Eigen::VectorXd& x = subjects_[static_cast<size_t>(i)].x;
      prec += w * x * x.transpose();
      const Eigen::VectorXd r = state_.beta[static_cast<size_t>(i)].row(l).transpose() -
                                state_.lp.b0.row(l).transpose();
      rhs += x * ones.dot(v0_inv_[static_cast<size_t>(l)] * r);
    }
    const Eigen::MatrixXd cov = prec.llt().solve(Eigen::MatrixXd::Identity(d.p, d.p));
    state_.lp.alpha.row(l) = mvn_draw(cov * rhs, cov, rng_).transpose();
  }
}

void GibbsSampler::update_links() {
  const Dims& d = dims_;
  const int M = total_nodes_;
  // Trajectory functionals at every quadrature node, by marker.
  Eigen::MatrixXd val(M, d.L), der(M, d.L), intg(M, d.L);
  for (int i = 0; i < d.N; ++i) {
    const SubjectCache& c = cache_[static_cast<size_t>(i)];
    const Eigen::MatrixXd& beta = state_.beta[static_cast<size_t>(i)];
    for (int l = 0; l < d.L; ++l) {
      val.block(c.offset, l, c.node_w.size(), 1) = c.nodeB * beta.row(l).transpose();
      der.block(c.offset, l, c.node_w.size(), 1) = c.nodeBd * beta.row(l).transpose();
      intg.block(c.offset, l, c.node_w.size(), 1) = c.nodeBi * beta.row(l).transpose();
    }
  }
  Eigen::ArrayXd eta = (val * state_.link.gamma).array();
  if (state_.link.slope_active()) eta += (der * state_.link.gamma_s).array();
  if (state_.link.history_active()) eta += (intg * state_.link.gamma_h).array();

  Eigen::ArrayXd lamwz(M);
  for (int n = 0; n < M; ++n) {
    const int i = flat_subject_[n];
    lamwz[n] = flat_w_[n] * state_.lambda[flat_j_[n]] *
               std::exp(subjects_[static_cast<size_t>(i)].z.dot(state_.link.zeta));
  }

  // Event-term linear coefficients: trajectory functionals at s_i for events.
  Eigen::MatrixXd ev_val = Eigen::MatrixXd::Zero(3, d.L);  // rows: value/slope/history sums
  for (int i = 0; i < d.N; ++i) {
    if (!subjects_[static_cast<size_t>(i)].event) continue;
    const SubjectCache& c = cache_[static_cast<size_t>(i)];
    const Eigen::MatrixXd& beta = state_.beta[static_cast<size_t>(i)];
    ev_val.row(0) += (beta * c.s_val).transpose();
    ev_val.row(1) += (beta * c.s_der).transpose();
    ev_val.row(2) += (beta * c.s_int).transpose();
  }

  // Gamma-block coordinates in the order (gamma, gamma_s, gamma_h).
  Eigen::VectorXd v(3 * d.L);
  v << state_.link.gamma, state_.link.gamma_s, state_.link.gamma_h;
  struct Coord { int block; int l; };
  std::vector<Coord> coords;
  for (int l = 0; l < d.L; ++l) coords.push_back({0, l});
  if (state_.link.slope_active())
    for (int l = 0; l < d.L; ++l) coords.push_back({1, l});
  if (state_.link.history_active())
    for (int l = 0; l < d.L; ++l) coords.push_back({2, l});

  for (const Coord& co : coords) {
    const int m = co.block * d.L + co.l;
    const double x_cur = v[m];
    Eigen::ArrayXd coef = co.block == 0   ? val.col(co.l).array()
                          : co.block == 1 ? der.col(co.l).array()
                                          : intg.col(co.l).array();
    const Eigen::ArrayXd A = lamwz * (eta - coef * x_cur).exp();
    const double a = ev_val(co.block, co.l);
    auto target = [&](double x) -> std::pair<double, double> {
      Eigen::VectorXd w = v;
      w[m] = x;
      const Eigen::VectorXd gr = g1_inv_ * (w - priors_.g0);
      const Eigen::ArrayXd e = (coef * x).exp() * A;
      const double s0 = e.sum();
      const double s1 = (e * coef).sum();
      const double h = a * x - s0 - 0.5 * (w - priors_.g0).dot(gr);
      const double hp = a - s1 - gr[m];
      return {h, hp};
    };
    const double x_new = ars_sample_from(target, x_cur, mcmc_.ars_step, rng_);
    eta += coef * (x_new - x_cur);
    v[m] = x_new;
    if (co.block == 0) state_.link.gamma[co.l] = x_new;
    else if (co.block == 1) state_.link.gamma_s[co.l] = x_new;
    else state_.link.gamma_h[co.l] = x_new;
  }

  // Zeta coordinates: per-subject cumulative-hazard sums with z'zeta factored
  // out, each coordinate log-concave.
  if (d.p_z > 0) {
    const Eigen::ArrayXd hazn = flat_w_.array() * eta.exp();
    Eigen::VectorXd hsum = Eigen::VectorXd::Zero(d.N);
    for (int n = 0; n < M; ++n) {
      hsum[flat_subject_[n]] += state_.lambda[flat_j_[n]] * hazn[n];
    }
    for (int mz = 0; mz < d.p_z; ++mz) {
      const double x_cur = state_.link.zeta[mz];
      Eigen::VectorXd K(d.N), zc(d.N);
      double a = 0.0;
      for (int i = 0; i < d.N; ++i) {
        const SubjectData& s = subjects_[static_cast<size_t>(i)];
        zc[i] = s.z[mz];
        K[i] = hsum[i] * std::exp(s.z.dot(state_.link.zeta) - zc[i] * x_cur);
        if (s.event) a += zc[i];
      }
      auto target = [&](double x) -> std::pair<double, double> {
        Eigen::VectorXd w = state_.link.zeta;
        w[mz] = x;
        const Eigen::VectorXd gr = zeta_prec_ * (w - priors_.zeta_mean);
        double s0 = 0.0, s1 = 0.0;
        for (int i = 0; i < d.N; ++i) {
          const double e = K[i] * std::exp(zc[i] * x);
          s0 += e;
          s1 += zc[i] * e;
        }
        return {a * x - s0 - 0.5 * (w - priors_.zeta_mean).dot(gr), a - s1 - gr[mz]};
      };
      state_.link.zeta[mz] = ars_sample_from(target, x_cur, mcmc_.ars_step, rng_);
    }
  }
}

void GibbsSampler::update_lambda() {
  const Dims& d = dims_;
  const Eigen::ArrayXd eta = flat_eta();
  Eigen::VectorXd exposure = Eigen::VectorXd::Zero(d.J);
  for (int n = 0; n < total_nodes_; ++n) {
    const int i = flat_subject_[n];
    exposure[flat_j_[n]] +=
        flat_w_[n] * std::exp(eta[n] + subjects_[static_cast<size_t>(i)].z.dot(state_.link.zeta));
  }
  for (int j = 0; j < d.J; ++j) {
    state_.lambda[j] = gamma_draw(priors_.d0[j] + events_per_interval_[j],
                                  priors_.d1[j] + exposure[j], rng_);
  }
}

void GibbsSampler::iterate() {
  update_beta();
  update_v0();
  update_sigma();
  update_b0();
  update_links();
  update_lambda();
  update_alpha();
}

double GibbsSampler::subject_loglik(int i) const {
  const Dims& d = dims_;
  const SubjectData& subj = subjects_[static_cast<size_t>(i)];
  const SubjectCache& c = cache_[static_cast<size_t>(i)];
  const Eigen::MatrixXd& beta = state_.beta[static_cast<size_t>(i)];
  const Eigen::MatrixXd R = subj.y - c.obsB * beta.transpose();
  const double m = static_cast<double>(R.rows());
  double ll = -0.5 * m * (d.L * std::log(2.0 * M_PI) + sigma_logdet_);
  ll -= 0.5 * (R * sigma_inv_).cwiseProduct(R).sum();

  const double zeta_term = subj.z.dot(state_.link.zeta);
  const Eigen::ArrayXd eta = node_eta(i);
  Eigen::ArrayXd lamw(c.node_w.size());
  for (Eigen::Index n = 0; n < lamw.size(); ++n) {
    lamw[n] = c.node_w[n] * state_.lambda[c.node_j[n]];
  }
  ll -= std::exp(zeta_term) * (lamw * eta.exp()).sum();
  if (subj.event) {
    HazardSpec hz{spec_.cuts, state_.lambda};
    ll += std::log(state_.lambda[hz.interval_of(subj.event_time)]) +
          link_exponent_at_event(i) + zeta_term;
  }
  return ll;
}

PosteriorSamples GibbsSampler::run() {
  if (mcmc_.burn_in >= mcmc_.iterations || mcmc_.thin < 1 ||
      (mcmc_.iterations - mcmc_.burn_in) % mcmc_.thin != 0) {
    throw InvalidParameter(
        "mcmc config: need burn_in < iterations, thin >= 1, and (iterations - "
        "burn_in) divisible by thin");
  }
  const int G = (mcmc_.iterations - mcmc_.burn_in) / mcmc_.thin;
  PosteriorSamples out;
  out.meta = {mcmc_.seed, mcmc_.iterations, mcmc_.burn_in, mcmc_.thin, mcmc_.chain_id};
  out.dims = dims_;
  out.draws.reserve(static_cast<size_t>(G));
  out.subject_loglik.resize(G, dims_.N);
  int saved = 0;
  for (int it = 1; it <= mcmc_.iterations; ++it) {
    try {
      iterate();
    } catch (const Error& e) {
      std::ostringstream os;
      os << "chain " << mcmc_.chain_id << " failed at iteration " << it << ": " << e.what();
      if (dynamic_cast<const NumericalError*>(&e)) throw NumericalError(os.str());
      throw Error(os.str());
    }
    if (it > mcmc_.burn_in && (it - mcmc_.burn_in) % mcmc_.thin == 0) {
      if (!flatten_state(state_, dims_).allFinite()) {
        std::ostringstream os;
        os << "chain " << mcmc_.chain_id << ": non-finite state at iteration " << it;
        throw NumericalError(os.str());
      }
      out.draws.push_back(state_);
      for (int i = 0; i < dims_.N; ++i) out.subject_loglik(saved, i) = subject_loglik(i);
      ++saved;
    }
  }
  return out;
}

PosteriorSamples run_chain(const std::vector<SubjectData>& subjects,
                           const ModelSpec& spec, const PriorConfig& priors,
                           const McmcConfig& mcmc) {
  GibbsSampler sampler(subjects, spec, priors, mcmc);
  return sampler.run();
}

double rhat(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2) throw InsufficientChains("rhat needs at least two chains");
  const Eigen::Index n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw InsufficientChains("rhat: unequal chain lengths");
  }
  const Eigen::Index half = n / 2;
  if (half < 2) throw InsufficientChains("rhat: chains too short to split");
  std::vector<Eigen::VectorXd> seqs;
  for (const auto& c : chains) {
    seqs.push_back(c.head(half));
    seqs.push_back(c.segment(n - half, half));
  }
  const double m = static_cast<double>(seqs.size());
  const double len = static_cast<double>(half);
  Eigen::VectorXd means(seqs.size()), vars(seqs.size());
  for (size_t s = 0; s < seqs.size(); ++s) {
    means[static_cast<Eigen::Index>(s)] = seqs[s].mean();
    vars[static_cast<Eigen::Index>(s)] =
        (seqs[s].array() - means[static_cast<Eigen::Index>(s)]).square().sum() / (len - 1.0);
  }
  const double grand = means.mean();
  const double B = len / (m - 1.0) * (means.array() - grand).square().sum();
  const double W = vars.mean();
  if (W <= 0.0) return B <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(((len - 1.0) / len * W + B / len) / W);
}

}  // namespace bsjm
