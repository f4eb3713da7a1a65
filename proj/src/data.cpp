#include "bsjm/data.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace bsjm {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& cell, const std::string& file, int row,
                    const std::string& column) {
  try {
    size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    std::ostringstream os;
    os << file << ": row " << row << ", column '" << column
       << "': not a number: '" << cell << "'";
    throw NonNumericField(os.str());
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

int column_index(const std::vector<std::string>& header, const std::string& name,
                 const std::string& file) {
  for (size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return static_cast<int>(k);
  }
  throw MissingColumn(file + ": missing required column '" + name + "'");
}

std::vector<std::string> prefixed_columns(const std::vector<std::string>& header,
                                          const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& h : header) {
    if (h.rfind(prefix, 0) == 0) out.push_back(h);
  }
  return out;
}

}  // namespace

Cohort load_cohort(const std::string& subjects_path,
                   const std::string& measurements_path) {
  const std::vector<std::string> slines = read_lines(subjects_path);
  if (slines.empty()) throw IoError(subjects_path + ": empty file");
  const std::vector<std::string> sheader = split_csv(slines.front());
  const int id_col = column_index(sheader, "id", subjects_path);
  const int time_col = column_index(sheader, "time", subjects_path);
  const int event_col = column_index(sheader, "event", subjects_path);
  const std::vector<std::string> x_names = prefixed_columns(sheader, "x_");
  const std::vector<std::string> z_names = prefixed_columns(sheader, "z_");

  Cohort cohort;
  cohort.p = static_cast<int>(x_names.size());
  cohort.p_z = static_cast<int>(z_names.size());
  cohort.x_names = x_names;
  cohort.z_names = z_names;

  std::map<std::string, size_t> index_of;
  for (size_t r = 1; r < slines.size(); ++r) {
    const std::vector<std::string> cells = split_csv(slines[r]);
    if (cells.size() != sheader.size()) {
      std::ostringstream os;
      os << subjects_path << ": row " << r + 1 << ": expected "
         << sheader.size() << " fields, got " << cells.size();
      throw NonNumericField(os.str());
    }
    SubjectData s;
    s.id = cells[static_cast<size_t>(id_col)];
    if (index_of.count(s.id)) {
      throw UnknownSubject(subjects_path + ": duplicate subject id '" + s.id + "'");
    }
    s.event_time = parse_number(cells[static_cast<size_t>(time_col)], subjects_path,
                                static_cast<int>(r + 1), "time");
    s.event = parse_number(cells[static_cast<size_t>(event_col)], subjects_path,
                           static_cast<int>(r + 1), "event") != 0.0;
    s.x.resize(cohort.p);
    for (int k = 0; k < cohort.p; ++k) {
      s.x[k] = parse_number(cells[static_cast<size_t>(column_index(sheader, x_names[static_cast<size_t>(k)], subjects_path))],
                            subjects_path, static_cast<int>(r + 1), x_names[static_cast<size_t>(k)]);
    }
    s.z.resize(cohort.p_z);
    for (int k = 0; k < cohort.p_z; ++k) {
      s.z[k] = parse_number(cells[static_cast<size_t>(column_index(sheader, z_names[static_cast<size_t>(k)], subjects_path))],
                            subjects_path, static_cast<int>(r + 1), z_names[static_cast<size_t>(k)]);
    }
    index_of[s.id] = cohort.subjects.size();
    cohort.subjects.push_back(std::move(s));
  }

  const std::vector<std::string> mlines = read_lines(measurements_path);
  if (mlines.empty()) throw IoError(measurements_path + ": empty file");
  const std::vector<std::string> mheader = split_csv(mlines.front());
  const int mid_col = column_index(mheader, "id", measurements_path);
  const int mt_col = column_index(mheader, "obs_time", measurements_path);
  const std::vector<std::string> marker_names = prefixed_columns(mheader, "marker_");
  if (marker_names.empty()) {
    throw MissingColumn(measurements_path + ": no marker_* columns");
  }
  cohort.L = static_cast<int>(marker_names.size());
  cohort.marker_names = marker_names;

  std::vector<std::vector<double>> times(cohort.subjects.size());
  std::vector<std::vector<Eigen::VectorXd>> values(cohort.subjects.size());
  for (size_t r = 1; r < mlines.size(); ++r) {
    const std::vector<std::string> cells = split_csv(mlines[r]);
    if (cells.size() != mheader.size()) {
      std::ostringstream os;
      os << measurements_path << ": row " << r + 1 << ": expected "
         << mheader.size() << " fields, got " << cells.size();
      throw NonNumericField(os.str());
    }
    const std::string& id = cells[static_cast<size_t>(mid_col)];
    auto it = index_of.find(id);
    if (it == index_of.end()) {
      std::ostringstream os;
      os << measurements_path << ": row " << r + 1 << ": unknown subject id '"
         << id << "'";
      throw UnknownSubject(os.str());
    }
    const double t = parse_number(cells[static_cast<size_t>(mt_col)], measurements_path,
                                  static_cast<int>(r + 1), "obs_time");
    if (t > cohort.subjects[it->second].event_time) {
      std::ostringstream os;
      os << measurements_path << ": row " << r + 1 << ", column 'obs_time': "
         << "measurement at t = " << t << " postdates subject '" << id
         << "' follow-up end " << cohort.subjects[it->second].event_time;
      throw TimeAfterEvent(os.str());
    }
    Eigen::VectorXd y(cohort.L);
    for (int l = 0; l < cohort.L; ++l) {
      y[l] = parse_number(cells[static_cast<size_t>(column_index(mheader, marker_names[static_cast<size_t>(l)], measurements_path))],
                          measurements_path, static_cast<int>(r + 1),
                          marker_names[static_cast<size_t>(l)]);
    }
    times[it->second].push_back(t);
    values[it->second].push_back(std::move(y));
  }

  double T = 0.0;
  for (size_t i = 0; i < cohort.subjects.size(); ++i) {
    SubjectData& s = cohort.subjects[i];
    if (times[i].empty()) {
      throw InvalidParameter("subject '" + s.id + "' has no measurements (m_i >= 1 required)");
    }
    s.obs_times = Eigen::Map<Eigen::VectorXd>(times[i].data(),
                                              static_cast<Eigen::Index>(times[i].size()));
    s.y.resize(static_cast<Eigen::Index>(values[i].size()), cohort.L);
    for (size_t r = 0; r < values[i].size(); ++r) {
      s.y.row(static_cast<Eigen::Index>(r)) = values[i][r].transpose();
    }
    T = std::max(T, s.event_time);
    T = std::max(T, s.obs_times.maxCoeff());
  }
  cohort.T = T;
  return cohort;
}

SimulatedCohort simulate_cohort(const SimulationTruth& truth, int n_subjects,
                                const std::vector<double>& obs_schedule,
                                double censor_time, RandomStream& rng,
                                double jitter) {
  if (obs_schedule.empty()) throw InvalidParameter("simulate_cohort: empty schedule");
  truth.hazard.validate();
  const int L = static_cast<int>(truth.lp.sigma.rows());
  const int q = truth.basis.q();
  const int p = static_cast<int>(truth.lp.alpha.cols());
  const int p_z = static_cast<int>(truth.link.zeta.size());
  const double T = truth.basis.domain_end();

  SimulatedCohort out;
  out.cohort.L = L;
  out.cohort.p = p;
  out.cohort.p_z = p_z;
  out.cohort.T = T;
  for (int l = 1; l <= L; ++l) out.cohort.marker_names.push_back("marker_" + std::to_string(l));
  for (int k = 1; k <= p; ++k) out.cohort.x_names.push_back("x_" + std::to_string(k));
  for (int k = 1; k <= p_z; ++k) out.cohort.z_names.push_back("z_" + std::to_string(k));

  for (int i = 0; i < n_subjects; ++i) {
    RandomStream sub = rng.substream(static_cast<std::uint64_t>(i));
    SubjectData s;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "s%04d", i + 1);
    s.id = idbuf;
    s.x.resize(p);
    for (int k = 0; k < p; ++k) s.x[k] = sub.uniform() < 0.5 ? 0.0 : 1.0;
    s.z.resize(p_z);
    for (int k = 0; k < p_z; ++k) s.z[k] = sub.uniform() < 0.5 ? 0.0 : 1.0;

    Eigen::MatrixXd beta(L, q);
    for (int l = 0; l < L; ++l) {
      const double shift = p > 0 ? s.x.dot(truth.lp.alpha.row(l)) : 0.0;
      const Eigen::VectorXd mean =
          truth.lp.b0.row(l).transpose() + Eigen::VectorXd::Constant(q, shift);
      beta.row(l) = mvn_draw(mean, truth.lp.v0[static_cast<size_t>(l)], sub).transpose();
    }

    // Invert the cumulative hazard against a unit exponential draw.
    const double target = -std::log(sub.uniform());
    auto cumhaz = [&](double t) {
      return cumulative_hazard_at(t, s, beta, truth.link, truth.hazard,
                                  truth.basis, truth.quad_order);
    };
    const double horizon = std::min(censor_time, T);
    if (cumhaz(horizon) < target) {
      s.event = false;
      s.event_time = horizon;
    } else {
      double lo = 0.0, hi = horizon;
      while (hi - lo > 1e-8) {
        const double mid = 0.5 * (lo + hi);
        (cumhaz(mid) < target ? lo : hi) = mid;
      }
      s.event = true;
      s.event_time = 0.5 * (lo + hi);
    }

    std::vector<double> times;
    for (double t : obs_schedule) {
      double tt = t;
      if (jitter > 0.0 && t > 0.0) tt += jitter * (2.0 * sub.uniform() - 1.0);
      tt = std::clamp(tt, 0.0, T);
      if (tt <= s.event_time && (times.empty() || tt > times.back())) times.push_back(tt);
    }
    if (times.empty()) times.push_back(0.0);
    s.obs_times = Eigen::Map<Eigen::VectorXd>(times.data(),
                                              static_cast<Eigen::Index>(times.size()));
    s.y.resize(s.obs_times.size(), L);
    for (Eigen::Index r = 0; r < s.obs_times.size(); ++r) {
      Eigen::VectorXd psi(L);
      const Eigen::VectorXd row = truth.basis.eval_value(s.obs_times[r]).values;
      for (int l = 0; l < L; ++l) psi[l] = beta.row(l).dot(row);
      s.y.row(r) = mvn_draw(psi, truth.lp.sigma, sub).transpose();
    }
    out.cohort.subjects.push_back(std::move(s));
    out.beta.push_back(std::move(beta));
  }
  return out;
}

void write_cohort(const Cohort& cohort, const std::string& subjects_path,
                  const std::string& measurements_path) {
  std::ofstream sf(subjects_path);
  if (!sf) throw IoError("cannot write " + subjects_path);
  sf << "id,time,event";
  for (const auto& n : cohort.x_names) sf << ',' << n;
  for (const auto& n : cohort.z_names) sf << ',' << n;
  sf << '\n';
  for (const auto& s : cohort.subjects) {
    sf << s.id << ',' << format_double(s.event_time) << ',' << (s.event ? 1 : 0);
    for (int k = 0; k < cohort.p; ++k) sf << ',' << format_double(s.x[k]);
    for (int k = 0; k < cohort.p_z; ++k) sf << ',' << format_double(s.z[k]);
    sf << '\n';
  }
  std::ofstream mf(measurements_path);
  if (!mf) throw IoError("cannot write " + measurements_path);
  mf << "id,obs_time";
  for (const auto& n : cohort.marker_names) mf << ',' << n;
  mf << '\n';
  for (const auto& s : cohort.subjects) {
    for (Eigen::Index r = 0; r < s.obs_times.size(); ++r) {
      mf << s.id << ',' << format_double(s.obs_times[r]);
      for (int l = 0; l < cohort.L; ++l) mf << ',' << format_double(s.y(r, l));
      mf << '\n';
    }
  }
}

void write_samples(const PosteriorSamples& samples, ModelKind kind,
                   const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  const std::vector<std::string> names = parameter_names(samples.dims);
  for (size_t k = 0; k < names.size(); ++k) f << (k ? "," : "") << names[k];
  for (int i = 1; i <= samples.dims.N; ++i) f << ",loglik." << i;
  f << '\n';
  for (size_t g = 0; g < samples.draws.size(); ++g) {
    const Eigen::VectorXd flat = flatten_state(samples.draws[g], samples.dims);
    for (Eigen::Index k = 0; k < flat.size(); ++k) {
      f << (k ? "," : "") << format_double(flat[k]);
    }
    for (int i = 0; i < samples.dims.N; ++i) {
      f << ',' << format_double(samples.subject_loglik(static_cast<Eigen::Index>(g), i));
    }
    f << '\n';
  }

  json meta;
  meta["seed"] = samples.meta.seed;
  meta["iterations"] = samples.meta.iterations;
  meta["burn_in"] = samples.meta.burn_in;
  meta["thin"] = samples.meta.thin;
  meta["chain_id"] = samples.meta.chain_id;
  meta["kind"] = model_kind_name(kind);
  meta["dims"] = {{"N", samples.dims.N}, {"L", samples.dims.L},
                  {"q", samples.dims.q}, {"p", samples.dims.p},
                  {"p_z", samples.dims.p_z}, {"J", samples.dims.J}};
  std::ofstream mf(path + ".meta.json");
  if (!mf) throw IoError("cannot write " + path + ".meta.json");
  mf << meta.dump(2) << '\n';
}

PosteriorSamples read_samples(const std::string& path) {
  std::ifstream mf(path + ".meta.json");
  if (!mf) throw IoError("cannot open " + path + ".meta.json");
  json meta = json::parse(mf);
  PosteriorSamples out;
  out.meta.seed = meta["seed"].get<std::uint64_t>();
  out.meta.iterations = meta["iterations"].get<int>();
  out.meta.burn_in = meta["burn_in"].get<int>();
  out.meta.thin = meta["thin"].get<int>();
  out.meta.chain_id = meta["chain_id"].get<int>();
  out.dims = {meta["dims"]["N"].get<int>(), meta["dims"]["L"].get<int>(),
              meta["dims"]["q"].get<int>(), meta["dims"]["p"].get<int>(),
              meta["dims"]["p_z"].get<int>(), meta["dims"]["J"].get<int>()};
  const ModelKind kind = parse_model_kind(meta["kind"].get<std::string>());

  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw IoError(path + ": empty samples file");
  const int P = out.dims.flat_size();
  const size_t G = lines.size() - 1;
  out.subject_loglik.resize(static_cast<Eigen::Index>(G), out.dims.N);
  for (size_t g = 0; g < G; ++g) {
    const std::vector<std::string> cells = split_csv(lines[g + 1]);
    if (static_cast<int>(cells.size()) != P + out.dims.N) {
      throw NonNumericField(path + ": wrong field count in a sample row");
    }
    Eigen::VectorXd flat(P);
    for (int k = 0; k < P; ++k) {
      flat[k] = parse_number(cells[static_cast<size_t>(k)], path,
                             static_cast<int>(g + 2), "sample");
    }
    out.draws.push_back(unflatten_state(flat, out.dims, kind));
    for (int i = 0; i < out.dims.N; ++i) {
      out.subject_loglik(static_cast<Eigen::Index>(g), i) =
          parse_number(cells[static_cast<size_t>(P + i)], path,
                       static_cast<int>(g + 2), "loglik");
    }
  }
  return out;
}

void write_summary(const std::vector<SummaryRow>& rows,
                   const std::vector<double>& rhats, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "parameter,mean,lower,upper,rhat\n";
  for (size_t k = 0; k < rows.size(); ++k) {
    f << rows[k].name << ',' << format_double(rows[k].mean) << ','
      << format_double(rows[k].lower) << ',' << format_double(rows[k].upper) << ','
      << (k < rhats.size() ? format_double(rhats[k]) : "nan") << '\n';
  }
}

std::vector<SummaryRow> read_summary(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw IoError(path + ": empty summary");
  std::vector<SummaryRow> rows;
  for (size_t r = 1; r < lines.size(); ++r) {
    const std::vector<std::string> cells = split_csv(lines[r]);
    if (cells.size() < 4) throw NonNumericField(path + ": short summary row");
    SummaryRow row;
    row.name = cells[0];
    row.mean = parse_number(cells[1], path, static_cast<int>(r + 1), "mean");
    row.lower = parse_number(cells[2], path, static_cast<int>(r + 1), "lower");
    row.upper = parse_number(cells[3], path, static_cast<int>(r + 1), "upper");
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_fit_stats(const FitStats& stats, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "statistic,value\n";
  f << "DIC," << format_double(stats.dic) << '\n';
  f << "p_D," << format_double(stats.p_d) << '\n';
  f << "mean_deviance," << format_double(stats.mean_deviance) << '\n';
  f << "deviance_at_mean," << format_double(stats.deviance_at_mean) << '\n';
  f << "LPML," << format_double(stats.lpml) << '\n';
  for (Eigen::Index i = 0; i < stats.log_cpo.size(); ++i) {
    f << "log_cpo." << i + 1 << ',' << format_double(stats.log_cpo[i]) << '\n';
  }
}

FitStats read_fit_stats(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  FitStats st;
  std::vector<double> cpo;
  for (size_t r = 1; r < lines.size(); ++r) {
    const std::vector<std::string> cells = split_csv(lines[r]);
    if (cells.size() != 2) throw NonNumericField(path + ": bad stats row");
    const double v = parse_number(cells[1], path, static_cast<int>(r + 1), cells[0]);
    if (cells[0] == "DIC") st.dic = v;
    else if (cells[0] == "p_D") st.p_d = v;
    else if (cells[0] == "mean_deviance") st.mean_deviance = v;
    else if (cells[0] == "deviance_at_mean") st.deviance_at_mean = v;
    else if (cells[0] == "LPML") st.lpml = v;
    else if (cells[0].rfind("log_cpo.", 0) == 0) cpo.push_back(v);
  }
  st.log_cpo = Eigen::Map<Eigen::VectorXd>(cpo.data(), static_cast<Eigen::Index>(cpo.size()));
  return st;
}

void write_roc(const RocResult& roc, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "landmark," << format_double(roc.landmark) << '\n';
  f << "horizon," << format_double(roc.horizon) << '\n';
  f << "n_at_risk," << roc.n_at_risk << '\n';
  f << "degenerate," << (roc.degenerate ? 1 : 0) << '\n';
  f << "AUC," << format_double(roc.auc) << '\n';
  f << "fpr,tpr\n";
  for (const auto& [fpr, tpr] : roc.points) {
    f << format_double(fpr) << ',' << format_double(tpr) << '\n';
  }
}

RocResult read_roc(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  RocResult roc;
  size_t r = 0;
  for (; r < lines.size(); ++r) {
    const std::vector<std::string> cells = split_csv(lines[r]);
    if (cells[0] == "fpr") {
      ++r;
      break;
    }
    const double v = parse_number(cells[1], path, static_cast<int>(r + 1), cells[0]);
    if (cells[0] == "landmark") roc.landmark = v;
    else if (cells[0] == "horizon") roc.horizon = v;
    else if (cells[0] == "n_at_risk") roc.n_at_risk = static_cast<int>(v);
    else if (cells[0] == "degenerate") roc.degenerate = v != 0.0;
    else if (cells[0] == "AUC") roc.auc = v;
  }
  for (; r < lines.size(); ++r) {
    const std::vector<std::string> cells = split_csv(lines[r]);
    roc.points.emplace_back(parse_number(cells[0], path, static_cast<int>(r + 1), "fpr"),
                            parse_number(cells[1], path, static_cast<int>(r + 1), "tpr"));
  }
  return roc;
}

}  // namespace bsjm
