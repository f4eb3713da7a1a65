// Command-line front end: simulate cohorts, fit the joint model, compare
// fits, and score time-dependent ROC from a fit directory.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "bsjm/data.hpp"
#include "bsjm/diagnostics.hpp"
#include "bsjm/gibbs.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::string cell;
  std::istringstream ss(s);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty()) out.push_back(std::stod(cell));
  }
  return out;
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct FitOptions {
  std::string long_path, surv_path, out_dir = ".";
  std::string kind = "current", knots = "quantile";
  int q = 6, quad_order = 10;
  int iters = 20000, burnin = 2000, thin = 10, chains = 2, jobs = 1;
  std::uint64_t seed = 1;
  double events_per_interval = 8.0, level = 0.95;
};

int cmd_fit(const FitOptions& opt) {
  if (opt.q < 5) {
    std::cerr << "fit: q = " << opt.q
              << " is below the minimum of 5; a clamped cubic basis needs at "
                 "least one interior knot (q - 4 >= 1)\n";
    return 1;
  }
  const bsjm::Cohort cohort = bsjm::load_cohort(opt.surv_path, opt.long_path);

  std::vector<double> all_times;
  for (const auto& s : cohort.subjects) {
    for (Eigen::Index r = 0; r < s.obs_times.size(); ++r) {
      all_times.push_back(s.obs_times[r]);
    }
  }
  bsjm::ModelSpec spec{
      bsjm::make_knots(all_times, opt.q,
                       opt.knots == "equal" ? bsjm::KnotStrategy::equal
                                            : bsjm::KnotStrategy::quantile,
                       cohort.T),
      bsjm::make_hazard_cuts(cohort.subjects, opt.events_per_interval),
      bsjm::ModelConfig{bsjm::parse_model_kind(opt.kind), opt.q,
                        opt.knots == "equal" ? bsjm::KnotStrategy::equal
                                             : bsjm::KnotStrategy::quantile,
                        opt.quad_order}};
  const bsjm::Dims dims = bsjm::infer_dims(cohort.subjects, spec);
  const bsjm::PriorConfig priors = bsjm::PriorConfig::defaults(dims);

  fs::create_directories(opt.out_dir);
  std::vector<bsjm::PosteriorSamples> chains(static_cast<size_t>(opt.chains));
  std::vector<std::exception_ptr> failures(static_cast<size_t>(opt.chains));
  std::mutex next_mutex;
  int next = 0;
  auto worker = [&] {
    for (;;) {
      int c;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next >= opt.chains) return;
        c = next++;
      }
      try {
        bsjm::McmcConfig mcmc;
        mcmc.iterations = opt.iters;
        mcmc.burn_in = opt.burnin;
        mcmc.thin = opt.thin;
        mcmc.seed = opt.seed;
        mcmc.chain_id = c;
        chains[static_cast<size_t>(c)] =
            bsjm::run_chain(cohort.subjects, spec, priors, mcmc);
      } catch (...) {
        failures[static_cast<size_t>(c)] = std::current_exception();
        return;
      }
    }
  };
  const int n_workers = std::clamp(opt.jobs, 1, opt.chains);
  std::vector<std::thread> pool;
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  for (int c = 0; c < opt.chains; ++c) {
    bsjm::write_samples(chains[static_cast<size_t>(c)], spec.config.kind,
                        opt.out_dir + "/samples_chain" + std::to_string(c + 1) + ".csv");
  }

  // Pool chains for the summary and fit statistics.
  bsjm::PosteriorSamples pooled = chains.front();
  for (int c = 1; c < opt.chains; ++c) {
    const auto& ch = chains[static_cast<size_t>(c)];
    const Eigen::Index g0 = pooled.subject_loglik.rows();
    pooled.subject_loglik.conservativeResize(g0 + ch.subject_loglik.rows(),
                                             Eigen::NoChange);
    pooled.subject_loglik.bottomRows(ch.subject_loglik.rows()) = ch.subject_loglik;
    pooled.draws.insert(pooled.draws.end(), ch.draws.begin(), ch.draws.end());
  }

  const std::vector<bsjm::SummaryRow> rows = bsjm::summarize(pooled, opt.level);
  std::vector<double> rhats(rows.size(), std::numeric_limits<double>::quiet_NaN());
  if (opt.chains >= 2) {
    const int P = dims.flat_size();
    const size_t G = chains.front().draws.size();
    std::vector<Eigen::MatrixXd> flat(static_cast<size_t>(opt.chains));
    for (int c = 0; c < opt.chains; ++c) {
      flat[static_cast<size_t>(c)].resize(static_cast<Eigen::Index>(G), P);
      for (size_t g = 0; g < G; ++g) {
        flat[static_cast<size_t>(c)].row(static_cast<Eigen::Index>(g)) =
            bsjm::flatten_state(chains[static_cast<size_t>(c)].draws[g], dims)
                .transpose();
      }
    }
    for (int k = 0; k < P; ++k) {
      std::vector<Eigen::VectorXd> series;
      for (int c = 0; c < opt.chains; ++c) {
        series.push_back(flat[static_cast<size_t>(c)].col(k));
      }
      rhats[static_cast<size_t>(k)] = bsjm::rhat(series);
    }
  }
  bsjm::write_summary(rows, rhats, opt.out_dir + "/summary.csv");

  const bsjm::FitStats stats = bsjm::fit_stats(pooled, cohort.subjects, spec);
  bsjm::write_fit_stats(stats, opt.out_dir + "/fitstats.csv");

  json meta;
  meta["kind"] = opt.kind;
  meta["q"] = opt.q;
  meta["knot_strategy"] = opt.knots;
  meta["quad_order"] = opt.quad_order;
  meta["iterations"] = opt.iters;
  meta["burn_in"] = opt.burnin;
  meta["thin"] = opt.thin;
  meta["chains"] = opt.chains;
  meta["seed"] = opt.seed;
  meta["events_per_interval"] = opt.events_per_interval;
  meta["level"] = opt.level;
  meta["knots"] = spec.basis.knots();
  meta["cuts"] = spec.cuts;
  meta["inputs"] = {{"long", fs::absolute(opt.long_path).string()},
                    {"surv", fs::absolute(opt.surv_path).string()}};
  std::ofstream mf(opt.out_dir + "/fit.meta.json");
  if (!mf) throw bsjm::IoError("cannot write " + opt.out_dir + "/fit.meta.json");
  mf << meta.dump(2) << '\n';

  std::cout << "fit: " << opt.chains << " chain(s), "
            << chains.front().draws.size() << " draws each\n";
  std::cout << "statistic,value\n";
  std::cout << "DIC," << bsjm::format_double(stats.dic) << '\n';
  std::cout << "p_D," << bsjm::format_double(stats.p_d) << '\n';
  std::cout << "LPML," << bsjm::format_double(stats.lpml) << '\n';
  return 0;
}

struct SimOptions {
  std::string out_prefix = "sim_";
  std::string kind = "current";
  int n = 150, q = 6;
  std::uint64_t seed = 1;
  double T = 24.0, censor = -1.0, jitter = 0.0;
  std::string gamma = "1.0", gamma_s = "", gamma_h = "", zeta = "";
  std::string b0 = "", schedule = "";
  double v0_sd = 0.5, sigma_sd = 0.5;
  std::string lambda = "0.05", cuts = "0";
};

int cmd_simulate(const SimOptions& opt) {
  const std::vector<double> gamma = parse_list(opt.gamma);
  const int L = static_cast<int>(gamma.size());
  std::vector<double> gamma_s = parse_list(opt.gamma_s);
  std::vector<double> gamma_h = parse_list(opt.gamma_h);
  const std::vector<double> zeta = parse_list(opt.zeta);
  if (gamma_s.empty()) gamma_s.assign(static_cast<size_t>(L), 0.0);
  if (gamma_h.empty()) gamma_h.assign(static_cast<size_t>(L), 0.0);
  if (static_cast<int>(gamma_s.size()) != L || static_cast<int>(gamma_h.size()) != L) {
    std::cerr << "simulate: gamma, gamma-s, gamma-h must have equal lengths\n";
    return 1;
  }

  bsjm::SimulationTruth truth{
      bsjm::LinkParams{to_vec(gamma), to_vec(gamma_s), to_vec(gamma_h),
                       to_vec(zeta), bsjm::parse_model_kind(opt.kind)},
      bsjm::HazardSpec{parse_list(opt.cuts), to_vec(parse_list(opt.lambda))},
      bsjm::LongitudinalParams{},
      bsjm::make_knots({}, opt.q, bsjm::KnotStrategy::equal, opt.T),
      opt.censor > 0 ? opt.censor : opt.T,
      10};
  truth.lp.sigma = opt.sigma_sd * opt.sigma_sd * Eigen::MatrixXd::Identity(L, L);
  truth.lp.b0.resize(L, opt.q);
  const std::vector<double> b0 = parse_list(opt.b0);
  if (!b0.empty() && static_cast<int>(b0.size()) != opt.q) {
    std::cerr << "simulate: b0 must list q = " << opt.q << " values\n";
    return 1;
  }
  for (int l = 0; l < L; ++l) {
    for (int k = 0; k < opt.q; ++k) {
      truth.lp.b0(l, k) = b0.empty()
                              ? 1.0 - 2.0 * k / std::max(opt.q - 1, 1)
                              : b0[static_cast<size_t>(k)];
    }
  }
  truth.lp.v0.assign(static_cast<size_t>(L),
                     opt.v0_sd * opt.v0_sd * Eigen::MatrixXd::Identity(opt.q, opt.q));
  truth.lp.alpha.resize(L, 0);

  std::vector<double> schedule = parse_list(opt.schedule);
  if (schedule.empty()) {
    for (double t = 0.0; t <= opt.T + 1e-9; t += 2.0) schedule.push_back(t);
  }

  bsjm::RandomStream rng(opt.seed);
  const bsjm::SimulatedCohort sim = bsjm::simulate_cohort(
      truth, opt.n, schedule, truth.censor_time, rng, opt.jitter);
  bsjm::write_cohort(sim.cohort, opt.out_prefix + "subjects.csv",
                     opt.out_prefix + "measurements.csv");

  json tj;
  tj["kind"] = opt.kind;
  tj["q"] = opt.q;
  tj["T"] = opt.T;
  tj["censor_time"] = truth.censor_time;
  tj["seed"] = opt.seed;
  tj["gamma"] = gamma;
  tj["gamma_s"] = gamma_s;
  tj["gamma_h"] = gamma_h;
  tj["zeta"] = zeta;
  tj["cuts"] = truth.hazard.cuts;
  tj["lambda"] = parse_list(opt.lambda);
  tj["sigma_sd"] = opt.sigma_sd;
  tj["v0_sd"] = opt.v0_sd;
  tj["b0"] = std::vector<double>(truth.lp.b0.row(0).begin(), truth.lp.b0.row(0).end());
  tj["schedule"] = schedule;
  std::ofstream tf(opt.out_prefix + "truth.json");
  if (!tf) throw bsjm::IoError("cannot write " + opt.out_prefix + "truth.json");
  tf << tj.dump(2) << '\n';

  int events = 0;
  for (const auto& s : sim.cohort.subjects) events += s.event ? 1 : 0;
  std::cout << "simulate: " << opt.n << " subjects, " << events << " events\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& fit_dirs) {
  struct Row {
    std::string model, kind;
    int q = 0;
    double dic = 0.0, lpml = 0.0;
  };
  std::vector<Row> rows;
  for (const auto& dir : fit_dirs) {
    std::ifstream mf(dir + "/fit.meta.json");
    if (!mf) throw bsjm::IoError("cannot open " + dir + "/fit.meta.json");
    const json meta = json::parse(mf);
    const bsjm::FitStats st = bsjm::read_fit_stats(dir + "/fitstats.csv");
    Row r;
    r.model = fs::path(dir).filename().string();
    if (r.model.empty()) r.model = dir;
    r.kind = meta["kind"].get<std::string>();
    r.q = meta["q"].get<int>();
    r.dic = st.dic;
    r.lpml = st.lpml;
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.dic < b.dic; });
  std::cout << "model,q,kind,DIC,LPML\n";
  for (const auto& r : rows) {
    std::cout << r.model << ',' << r.q << ',' << r.kind << ','
              << bsjm::format_double(r.dic) << ',' << bsjm::format_double(r.lpml)
              << '\n';
  }
  return 0;
}

struct RocOptions {
  std::string fit_dir;
  std::string landmarks = "6";
  double horizon = 12.0;
};

int cmd_roc(const RocOptions& opt) {
  std::ifstream mf(opt.fit_dir + "/fit.meta.json");
  if (!mf) throw bsjm::IoError("cannot open " + opt.fit_dir + "/fit.meta.json");
  const json meta = json::parse(mf);
  const int q = meta["q"].get<int>();
  const bsjm::KnotVector basis(meta["knots"].get<std::vector<double>>(), q);
  const bsjm::Cohort cohort =
      bsjm::load_cohort(meta["inputs"]["surv"].get<std::string>(),
                        meta["inputs"]["long"].get<std::string>());

  bsjm::PosteriorSamples pooled;
  const int chains = meta["chains"].get<int>();
  for (int c = 0; c < chains; ++c) {
    bsjm::PosteriorSamples ch = bsjm::read_samples(
        opt.fit_dir + "/samples_chain" + std::to_string(c + 1) + ".csv");
    if (c == 0) {
      pooled = std::move(ch);
    } else {
      const Eigen::Index g0 = pooled.subject_loglik.rows();
      pooled.subject_loglik.conservativeResize(g0 + ch.subject_loglik.rows(),
                                               Eigen::NoChange);
      pooled.subject_loglik.bottomRows(ch.subject_loglik.rows()) = ch.subject_loglik;
      pooled.draws.insert(pooled.draws.end(), ch.draws.begin(), ch.draws.end());
    }
  }
  const bsjm::ChainState bar = bsjm::mean_state(pooled);

  const int N = static_cast<int>(cohort.subjects.size());
  Eigen::VectorXd event_times(N);
  std::vector<bool> events(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    event_times[i] = cohort.subjects[static_cast<size_t>(i)].event_time;
    events[static_cast<size_t>(i)] = cohort.subjects[static_cast<size_t>(i)].event;
  }

  for (double landmark : parse_list(opt.landmarks)) {
    // Risk score: posterior-mean link exponent at the landmark, plus the
    // hazard-covariate term.
    Eigen::VectorXd markers(N);
    for (int i = 0; i < N; ++i) {
      const auto& s = cohort.subjects[static_cast<size_t>(i)];
      double eta = bsjm::link_exponent(std::min(landmark, cohort.T),
                                       bar.beta[static_cast<size_t>(i)],
                                       bar.link, basis);
      if (s.z.size() > 0) eta += s.z.dot(bar.link.zeta);
      markers[i] = eta;
    }
    const bsjm::RocResult roc =
        bsjm::roc_curve(markers, event_times, events, landmark, opt.horizon);
    std::ostringstream name;
    name << opt.fit_dir << "/roc_L" << landmark << "_H" << opt.horizon << ".csv";
    bsjm::write_roc(roc, name.str());
    std::cout << "landmark," << bsjm::format_double(landmark) << ",AUC,"
              << bsjm::format_double(roc.auc) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint longitudinal-survival model: simulate, fit, compare, roc"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key = value config file; flags take precedence");

  FitOptions fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit the joint model by MCMC");
  fit_cmd->add_option("--long", fit.long_path, "Measurements CSV")->required();
  fit_cmd->add_option("--surv", fit.surv_path, "Subjects CSV")->required();
  fit_cmd->add_option("--out", fit.out_dir, "Output directory");
  fit_cmd->add_option("--kind", fit.kind, "current|slope|history|full");
  fit_cmd->add_option("--q", fit.q, "Basis dimension (>= 5)");
  fit_cmd->add_option("--knots", fit.knots, "quantile|equal");
  fit_cmd->add_option("--quad-order", fit.quad_order, "Quadrature points per interval");
  fit_cmd->add_option("--iters", fit.iters, "MCMC iterations");
  fit_cmd->add_option("--burnin", fit.burnin, "Burn-in iterations");
  fit_cmd->add_option("--thin", fit.thin, "Thinning stride");
  fit_cmd->add_option("--chains", fit.chains, "Independent chains");
  fit_cmd->add_option("--jobs", fit.jobs, "Parallel chain workers");
  fit_cmd->add_option("--seed", fit.seed, "Master seed");
  fit_cmd->add_option("--events-per-interval", fit.events_per_interval,
                      "Target events per hazard interval");
  fit_cmd->add_option("--level", fit.level, "Credible-interval level");

  SimOptions sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Write a synthetic cohort");
  sim_cmd->add_option("--out-prefix", sim.out_prefix, "Output file prefix");
  sim_cmd->add_option("--n", sim.n, "Subjects");
  sim_cmd->add_option("--kind", sim.kind, "current|slope|history|full");
  sim_cmd->add_option("--q", sim.q, "Basis dimension");
  sim_cmd->add_option("--seed", sim.seed, "Seed");
  sim_cmd->add_option("--T", sim.T, "Follow-up horizon, months");
  sim_cmd->add_option("--censor", sim.censor, "Censoring time (default T)");
  sim_cmd->add_option("--gamma", sim.gamma, "Current-value links, comma list (length L)");
  sim_cmd->add_option("--gamma-s", sim.gamma_s, "Slope links");
  sim_cmd->add_option("--gamma-h", sim.gamma_h, "History links");
  sim_cmd->add_option("--zeta", sim.zeta, "Hazard covariate effects");
  sim_cmd->add_option("--b0", sim.b0, "Population coefficients, comma list of length q");
  sim_cmd->add_option("--v0-sd", sim.v0_sd, "Coefficient SD");
  sim_cmd->add_option("--sigma-sd", sim.sigma_sd, "Residual SD");
  sim_cmd->add_option("--lambda", sim.lambda, "Baseline rates, comma list");
  sim_cmd->add_option("--cuts", sim.cuts, "Hazard interval starts, comma list");
  sim_cmd->add_option("--schedule", sim.schedule, "Measurement times (default 0,2,..,T)");
  sim_cmd->add_option("--jitter", sim.jitter, "Uniform schedule jitter, months");

  std::vector<std::string> fit_dirs;
  CLI::App* cmp_cmd = app.add_subcommand("compare", "Rank fits by DIC");
  cmp_cmd->add_option("dirs", fit_dirs, "Fit output directories")->required();

  RocOptions roc;
  CLI::App* roc_cmd = app.add_subcommand("roc", "Time-dependent ROC from a fit");
  roc_cmd->add_option("--fit", roc.fit_dir, "Fit output directory")->required();
  roc_cmd->add_option("--landmark", roc.landmarks, "Landmark months, comma list");
  roc_cmd->add_option("--horizon", roc.horizon, "Prediction horizon, months");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit);
    if (sim_cmd->parsed()) return cmd_simulate(sim);
    if (cmp_cmd->parsed()) return cmd_compare(fit_dirs);
    if (roc_cmd->parsed()) return cmd_roc(roc);
  } catch (const bsjm::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
