#include "gridsec/dc_sim.hpp"

#include <cstdio>
#include <sstream>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

namespace gridsec {

namespace {

// %.17g round-trips doubles exactly; all numeric output goes through this.
std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Reduced index per bus: -1 at the slack, otherwise the state column.
std::vector<int> reduced_index(const GridCase& gc) {
  std::vector<int> idx(gc.n_buses());
  const int slack = gc.slack_index();
  int k = 0;
  for (int i = 0; i < gc.n_buses(); ++i) idx[i] = (i == slack) ? -1 : k++;
  return idx;
}

}  // namespace

NoiseModel NoiseModel::homoscedastic(int m, double sigma_value) {
  if (sigma_value <= 0.0) throw SimError("sigma must be positive");
  NoiseModel n;
  n.sigma = Eigen::VectorXd::Constant(m, sigma_value);
  return n;
}

JacobianH build_h(const GridCase& gc) {
  validate(gc);
  const auto idx = reduced_index(gc);
  JacobianH h;
  h.matrix = Eigen::MatrixXd::Zero(gc.n_branches(), gc.n_states());
  const int slack = gc.slack_index();
  for (int i = 0; i < gc.n_buses(); ++i) {
    if (i != slack) h.state_bus_ids.push_back(gc.buses[i].id);
  }
  for (int e = 0; e < gc.n_branches(); ++e) {
    const auto& br = gc.branches[e];
    const double b = 1.0 / br.reactance;
    const int fi = idx[gc.bus_index(br.from_bus)];
    const int ti = idx[gc.bus_index(br.to_bus)];
    if (fi >= 0) h.matrix(e, fi) += b;
    if (ti >= 0) h.matrix(e, ti) -= b;
  }
  return h;
}

Eigen::MatrixXd simulate_states(const GridCase& gc, const LoadProfile& profile,
                                int n_steps, double jitter,
                                std::uint64_t seed) {
  if (n_steps < 1) throw SimError("n_steps must be >= 1");
  if (profile.length() < 1) throw SimError("empty load profile");
  if (jitter < 0.0 || jitter >= 1.0) throw SimError("jitter must be in [0, 1)");

  const int n_s = gc.n_states();
  const auto idx = reduced_index(gc);

  // Reduced Laplacian, SPD for a connected graph.
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n_s, n_s);
  for (const auto& br : gc.branches) {
    const double b = 1.0 / br.reactance;
    const int fi = idx[gc.bus_index(br.from_bus)];
    const int ti = idx[gc.bus_index(br.to_bus)];
    if (fi >= 0) lap(fi, fi) += b;
    if (ti >= 0) lap(ti, ti) += b;
    if (fi >= 0 && ti >= 0) {
      lap(fi, ti) -= b;
      lap(ti, fi) -= b;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(lap);
  if (llt.info() != Eigen::Success)
    throw SimError("reduced Laplacian is not positive definite");

  Rng rng(seed);
  Eigen::MatrixXd states(n_s, n_steps);
  Eigen::VectorXd p(n_s);
  for (int t = 0; t < n_steps; ++t) {
    Rng step = rng.substream(static_cast<std::uint64_t>(t));
    const double scale = profile.scale_factors[t % profile.length()];
    for (int i = 0; i < gc.n_buses(); ++i) {
      if (idx[i] < 0) continue;
      const double j =
          jitter > 0.0 ? step.uniform(1.0 - jitter, 1.0 + jitter) : 1.0;
      p[idx[i]] = -gc.buses[i].base_load * scale * j;
    }
    states.col(t) = llt.solve(p);
  }
  return states;
}

MeasurementSeries generate_measurements(const JacobianH& h,
                                        const Eigen::MatrixXd& states,
                                        const NoiseModel& noise,
                                        std::uint64_t seed) {
  const int m = h.n_channels();
  if (states.rows() != h.n_states())
    throw SimError("state dimension does not match Jacobian");
  if (noise.sigma.size() != m)
    throw SimError("noise dimension does not match Jacobian");
  if ((noise.sigma.array() <= 0.0).any())
    throw SimError("sigma must be positive");

  const int n_steps = static_cast<int>(states.cols());
  MeasurementSeries s;
  s.clean = h.matrix * states;
  s.x_true = states;
  s.z = s.clean;
  s.labels.assign(n_steps, false);
  s.sigma = noise.sigma[0];
  s.seed = seed;

  Rng rng(seed);
  for (int t = 0; t < n_steps; ++t) {
    Rng step = rng.substream(static_cast<std::uint64_t>(t));
    for (int e = 0; e < m; ++e) s.z(e, t) += step.gaussian(0.0, noise.sigma[e]);
  }
  return s;
}

Eigen::MatrixXd isotropic_states(int n_states, int n_steps,
                                 std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd states(n_states, n_steps);
  for (int t = 0; t < n_steps; ++t) {
    Rng step = rng.substream(static_cast<std::uint64_t>(t));
    for (int i = 0; i < n_states; ++i) states(i, t) = step.gaussian();
  }
  return states;
}

std::string series_to_csv(const GridCase& gc, const MeasurementSeries& s) {
  if (gc.n_branches() != s.n_channels())
    throw SimError("case does not match series channel count");
  std::ostringstream out;
  for (int e = 0; e < gc.n_branches(); ++e) {
    if (e) out << ',';
    out << "flow_" << gc.branches[e].from_bus << '_' << gc.branches[e].to_bus;
  }
  out << '\n';
  for (int t = 0; t < s.n_steps(); ++t) {
    for (int e = 0; e < s.n_channels(); ++e) {
      if (e) out << ',';
      out << fmt_double(s.z(e, t));
    }
    out << '\n';
  }
  return out.str();
}

std::string series_sidecar_json(const MeasurementSeries& s) {
  nlohmann::json labels = nlohmann::json::array();
  for (bool b : s.labels) labels.push_back(b ? "attacked" : "normal");
  nlohmann::json j{{"seed", s.seed},
                   {"sigma", s.sigma},
                   {"labels", labels},
                   {"case_name", s.case_name}};
  return j.dump(2) + "\n";
}

MeasurementSeries series_from_csv(const std::string& csv_text,
                                  const std::string& sidecar_json) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(csv_text);
  std::string line;
  bool first = true;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (first) {
      first = false;
      continue;  // header
    }
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      std::size_t pos = 0;
      double v;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        throw SimError("bad numeric cell in measurement CSV: " + cell);
      }
      row.push_back(v);
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw SimError("ragged row in measurement CSV");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw SimError("measurement CSV has no data rows");

  MeasurementSeries s;
  s.z.resize(static_cast<int>(width), static_cast<int>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t e = 0; e < width; ++e)
      s.z(static_cast<int>(e), static_cast<int>(t)) = rows[t][e];

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(sidecar_json);
  } catch (const nlohmann::json::exception& ex) {
    throw SimError(std::string("bad sidecar JSON: ") + ex.what());
  }
  s.seed = j.at("seed").get<std::uint64_t>();
  s.sigma = j.at("sigma").get<double>();
  s.case_name = j.value("case_name", std::string{});
  s.labels.clear();
  for (const auto& lab : j.at("labels"))
    s.labels.push_back(lab.get<std::string>() == "attacked");
  if (static_cast<int>(s.labels.size()) != s.n_steps())
    throw SimError("sidecar label count does not match CSV rows");
  return s;
}

}  // namespace gridsec
