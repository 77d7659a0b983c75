#include "pemv/frontdoor.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "pemv/error.hpp"

namespace pemv::frontdoor {

namespace {

constexpr double kRowTolerance = 1e-12;

void check_rows(const Eigen::MatrixXd& m, const std::string& what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(what + " has an entry outside [0, 1]");
    }
    if (std::abs(m.row(r).sum() - 1.0) > kRowTolerance) {
      throw ConfigError(what + " row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

void check_size(Eigen::Index n, const std::string& what) {
  if (n < 1 || n > kMaxDomainSize) {
    throw ConfigError(what + " domain size must be in [1, " + std::to_string(kMaxDomainSize) + "]");
  }
}

Eigen::VectorXd dirichlet_row(Rng& rng, int size) {
  std::exponential_distribution<double> draw(1.0);
  Eigen::VectorXd row(size);
  for (int i = 0; i < size; ++i) row[i] = draw(rng);
  return row / row.sum();
}

Eigen::MatrixXd stochastic_matrix(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) m.row(r) = dirichlet_row(rng, cols).transpose();
  return m;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace

void DiscreteSCM::validate() const {
  check_size(p_u.size(), "U");
  check_size(p_x_given_u.cols(), "X");
  check_size(p_a_given_x.cols(), "A");
  if (p_x_given_u.rows() != p_u.size()) throw ConfigError("p(x|u) needs one row per u");
  if (p_a_given_x.rows() != p_x_given_u.cols()) throw ConfigError("p(a|x) needs one row per x");
  if (static_cast<int>(p_y_given_a_u.size()) != a_size()) throw ConfigError("p(y|a,u) needs one table per a");
  check_size(y_size(), "Y");
  check_rows(p_u.transpose(), "p(u)");
  check_rows(p_x_given_u, "p(x|u)");
  check_rows(p_a_given_x, "p(a|x)");
  for (int a = 0; a < a_size(); ++a) {
    const auto& t = p_y_given_a_u[static_cast<std::size_t>(a)];
    if (t.rows() != u_size() || t.cols() != y_size()) throw ConfigError("p(y|a,u) table has the wrong shape");
    check_rows(t, "p(y|a=" + std::to_string(a) + ",u)");
  }
}

ObservationalTables marginalize(const DiscreteSCM& scm) {
  scm.validate();
  const int nu = scm.u_size(), nx = scm.x_size(), na = scm.a_size(), ny = scm.y_size();

  // p(x, a, y) with U summed out.
  std::vector<Eigen::MatrixXd> xay(static_cast<std::size_t>(na), Eigen::MatrixXd::Zero(nx, ny));
  for (int u = 0; u < nu; ++u) {
    for (int x = 0; x < nx; ++x) {
      const double pux = scm.p_u[u] * scm.p_x_given_u(u, x);
      for (int a = 0; a < na; ++a) {
        const double puxa = pux * scm.p_a_given_x(x, a);
        for (int y = 0; y < ny; ++y) {
          xay[static_cast<std::size_t>(a)](x, y) += puxa * scm.p_y_given_a_u[static_cast<std::size_t>(a)](u, y);
        }
      }
    }
  }

  ObservationalTables obs;
  obs.p_x = Eigen::VectorXd::Zero(nx);
  obs.p_a_given_x = Eigen::MatrixXd::Zero(nx, na);
  obs.p_y_given_a_x.assign(static_cast<std::size_t>(na), Eigen::MatrixXd::Zero(nx, ny));
  obs.x_defined.assign(static_cast<std::size_t>(nx), false);
  obs.ax_defined.assign(static_cast<std::size_t>(na), std::vector<bool>(static_cast<std::size_t>(nx), false));

  Eigen::MatrixXd p_xa(nx, na);
  for (int a = 0; a < na; ++a) p_xa.col(a) = xay[static_cast<std::size_t>(a)].rowwise().sum();
  obs.p_x = p_xa.rowwise().sum();
  obs.p_x /= obs.p_x.sum();

  for (int x = 0; x < nx; ++x) {
    const double px = p_xa.row(x).sum();
    if (px > 0.0) {
      obs.x_defined[static_cast<std::size_t>(x)] = true;
      obs.p_a_given_x.row(x) = p_xa.row(x) / px;
    }
    for (int a = 0; a < na; ++a) {
      const auto& joint = xay[static_cast<std::size_t>(a)];
      const double pxa = joint.row(x).sum();
      if (pxa > 0.0) {
        obs.ax_defined[static_cast<std::size_t>(a)][static_cast<std::size_t>(x)] = true;
        obs.p_y_given_a_x[static_cast<std::size_t>(a)].row(x) = joint.row(x) / pxa;
      }
    }
  }
  return obs;
}

Eigen::VectorXd frontdoor_estimate(const ObservationalTables& obs, int x) {
  const int nx = static_cast<int>(obs.p_x.size());
  const int na = static_cast<int>(obs.p_a_given_x.cols());
  if (x < 0 || x >= nx) throw ConfigError("x = " + std::to_string(x) + " is outside the domain");
  if (!obs.x_defined[static_cast<std::size_t>(x)]) {
    throw Error("p(a | x = " + std::to_string(x) + ") is undefined because p(x) = 0");
  }
  const int ny = static_cast<int>(obs.p_y_given_a_x.front().cols());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(ny);
  for (int a = 0; a < na; ++a) {
    const double pa = obs.p_a_given_x(x, a);
    if (pa == 0.0) continue;
    Eigen::VectorXd inner = Eigen::VectorXd::Zero(ny);
    for (int xp = 0; xp < nx; ++xp) {
      const double pxp = obs.p_x[xp];
      if (pxp == 0.0) continue;
      if (!obs.ax_defined[static_cast<std::size_t>(a)][static_cast<std::size_t>(xp)]) {
        throw Error("p(y | a = " + std::to_string(a) + ", x' = " + std::to_string(xp) +
                    ") is undefined but carries nonzero weight");
      }
      inner += pxp * obs.p_y_given_a_x[static_cast<std::size_t>(a)].row(xp).transpose();
    }
    out += pa * inner;
  }
  return out;
}

Eigen::VectorXd intervene_truth(const DiscreteSCM& scm, int x) {
  scm.validate();
  if (x < 0 || x >= scm.x_size()) throw ConfigError("x = " + std::to_string(x) + " is outside the domain");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(scm.y_size());
  for (int u = 0; u < scm.u_size(); ++u) {
    for (int a = 0; a < scm.a_size(); ++a) {
      out += scm.p_u[u] * scm.p_a_given_x(x, a) *
             scm.p_y_given_a_u[static_cast<std::size_t>(a)].row(u).transpose();
    }
  }
  return out;
}

Eigen::VectorXd observational_conditional(const ObservationalTables& obs, int x) {
  const int na = static_cast<int>(obs.p_a_given_x.cols());
  const int ny = static_cast<int>(obs.p_y_given_a_x.front().cols());
  if (x < 0 || x >= static_cast<int>(obs.p_x.size()) || !obs.x_defined[static_cast<std::size_t>(x)]) {
    throw Error("p(y | x = " + std::to_string(x) + ") is undefined");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(ny);
  for (int a = 0; a < na; ++a) {
    const double pa = obs.p_a_given_x(x, a);
    if (pa == 0.0) continue;
    out += pa * obs.p_y_given_a_x[static_cast<std::size_t>(a)].row(x).transpose();
  }
  return out;
}

DiscreteSCM random_scm(Rng& rng, const DomainRange& range) {
  if (range.min_size < 1 || range.max_size > kMaxDomainSize || range.min_size > range.max_size) {
    throw ConfigError("invalid domain size range");
  }
  std::uniform_int_distribution<int> size(range.min_size, range.max_size);
  const int nu = size(rng), nx = size(rng), na = size(rng), ny = size(rng);
  DiscreteSCM scm;
  scm.p_u = dirichlet_row(rng, nu);
  scm.p_x_given_u = stochastic_matrix(rng, nu, nx);
  scm.p_a_given_x = stochastic_matrix(rng, nx, na);
  for (int a = 0; a < na; ++a) scm.p_y_given_a_u.push_back(stochastic_matrix(rng, nu, ny));
  return scm;
}

DiscreteSCM confounded_scm() {
  DiscreteSCM scm;
  scm.p_u = Eigen::Vector2d(0.5, 0.5);
  scm.p_x_given_u.resize(2, 2);
  scm.p_x_given_u << 0.9, 0.1,
                     0.1, 0.9;
  scm.p_a_given_x.resize(2, 2);
  scm.p_a_given_x << 0.9, 0.1,
                     0.1, 0.9;
  // P(Y = 1 | a, u) = 0.1 + 0.2 a + 0.6 u.
  for (int a = 0; a < 2; ++a) {
    Eigen::MatrixXd t(2, 2);
    for (int u = 0; u < 2; ++u) {
      const double p1 = 0.1 + 0.2 * a + 0.6 * u;
      t(u, 0) = 1.0 - p1;
      t(u, 1) = p1;
    }
    scm.p_y_given_a_u.push_back(t);
  }
  return scm;
}

double max_discrepancy(const DiscreteSCM& scm) {
  const ObservationalTables obs = marginalize(scm);
  double worst = 0.0;
  for (int x = 0; x < scm.x_size(); ++x) {
    worst = std::max(worst, (frontdoor_estimate(obs, x) - intervene_truth(scm, x)).cwiseAbs().maxCoeff());
  }
  return worst;
}

double confounding_gap(const DiscreteSCM& scm) {
  const ObservationalTables obs = marginalize(scm);
  double gap = 0.0;
  for (int x = 0; x < scm.x_size(); ++x) {
    gap = std::max(gap, (observational_conditional(obs, x) - intervene_truth(scm, x)).cwiseAbs().maxCoeff());
  }
  return gap;
}

SoundnessReport run_soundness_suite(int trials, std::uint64_t seed, const DomainRange& range) {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  SoundnessReport report;
  report.seed = seed;
  report.trials = trials;
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    const DiscreteSCM scm = random_scm(rng, range);
    const double d = max_discrepancy(scm);
    if (d > report.worst_discrepancy || report.worst_trial < 0) {
      report.worst_discrepancy = d;
      report.worst_trial = t;
      report.worst_domain = {scm.u_size(), scm.x_size(), scm.a_size(), scm.y_size()};
    }
    const double gap = confounding_gap(scm);
    if (gap > report.best_random_gap) {
      report.best_random_gap = gap;
      report.best_random_gap_trial = t;
    }
  }
  if (report.best_random_gap >= 0.1) {
    report.witness_gap = report.best_random_gap;
    report.witness_from_random = true;
  } else {
    report.witness_gap = confounding_gap(confounded_scm());
  }
  return report;
}

std::string SoundnessReport::text() const {
  std::ostringstream os;
  os << "front-door soundness: " << (sound() ? "PASS" : "FAIL") << "\n";
  os << "  trials            " << trials << " (seed " << seed << ")\n";
  os << "  worst discrepancy " << format_double(worst_discrepancy) << " at trial " << worst_trial;
  if (worst_domain.size() == 4) {
    os << " (|U|=" << worst_domain[0] << " |X|=" << worst_domain[1] << " |A|=" << worst_domain[2]
       << " |Y|=" << worst_domain[3] << ")";
  }
  os << "\n  tolerance         " << format_double(tolerance) << "\n";
  os << "confounding witness: " << (witness_found() ? "FOUND" : "MISSING") << "\n";
  os << "  max |p(y|x) - p(y|do(x))| = " << format_double(witness_gap)
     << (witness_from_random ? " (random trial " + std::to_string(best_random_gap_trial) + ")"
                             : std::string(" (built-in confounded model)"))
     << "\n";
  return os.str();
}

std::string SoundnessReport::json() const {
  const nlohmann::json j = {{"seed", seed},
                            {"trials", trials},
                            {"tolerance", tolerance},
                            {"worst_discrepancy", worst_discrepancy},
                            {"worst_trial", worst_trial},
                            {"sound", sound()},
                            {"witness_gap", witness_gap},
                            {"witness_from_random", witness_from_random},
                            {"witness_found", witness_found()}};
  return j.dump();
}

}  // namespace pemv::frontdoor
