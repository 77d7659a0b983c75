#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "pemv/layers.hpp"

namespace pemv::frontdoor {

inline constexpr int kMaxDomainSize = 8;

// Finite causal model on the front-door graph U -> X, U -> Y, X -> A, A -> Y.
// Conditional tables are row-stochastic; p_y_given_a_u[a] is (|U| x |Y|).
struct DiscreteSCM {
  Eigen::VectorXd p_u;
  Eigen::MatrixXd p_x_given_u;  // |U| x |X|
  Eigen::MatrixXd p_a_given_x;  // |X| x |A|
  std::vector<Eigen::MatrixXd> p_y_given_a_u;

  int u_size() const { return static_cast<int>(p_u.size()); }
  int x_size() const { return static_cast<int>(p_x_given_u.cols()); }
  int a_size() const { return static_cast<int>(p_a_given_x.cols()); }
  int y_size() const {
    return p_y_given_a_u.empty() ? 0 : static_cast<int>(p_y_given_a_u.front().cols());
  }

  // Throws ConfigError on shape, range or normalization (1e-12) violations.
  void validate() const;
};

// Observational quantities obtained by summing the latent U out of the joint.
// Rows whose conditioning event has probability zero are marked undefined.
struct ObservationalTables {
  Eigen::VectorXd p_x;
  Eigen::MatrixXd p_a_given_x;                 // |X| x |A|
  std::vector<Eigen::MatrixXd> p_y_given_a_x;  // [a] : |X| x |Y|
  std::vector<bool> x_defined;                 // p(x) > 0
  std::vector<std::vector<bool>> ax_defined;   // [a][x] : p(a, x) > 0
};

ObservationalTables marginalize(const DiscreteSCM& scm);

// p(y | do(x)) = sum_a p(a|x) sum_x' p(y|a,x') p(x'), from observational tables only.
Eigen::VectorXd frontdoor_estimate(const ObservationalTables& obs, int x);

// Ground truth by graph surgery: sum_u p(u) sum_a p(a|x) p(y|a,u).
Eigen::VectorXd intervene_truth(const DiscreteSCM& scm, int x);

// The plain observational conditional p(y | x).
Eigen::VectorXd observational_conditional(const ObservationalTables& obs, int x);

struct DomainRange {
  int min_size = 2;
  int max_size = 4;
};

// Every table row drawn from a flat Dirichlet.
DiscreteSCM random_scm(Rng& rng, const DomainRange& range = {});

// Binary model with strong U -> X and U -> Y paths; p(y|x) and p(y|do(x))
// differ by well over 0.1 here.
DiscreteSCM confounded_scm();

// max over x, y of |frontdoor_estimate - intervene_truth|.
double max_discrepancy(const DiscreteSCM& scm);
// max over x, y of |p(y|x) - p(y|do(x))|.
double confounding_gap(const DiscreteSCM& scm);

struct SoundnessReport {
  std::uint64_t seed = 0;
  int trials = 0;
  double tolerance = 1e-9;
  double worst_discrepancy = 0.0;
  int worst_trial = -1;
  std::vector<int> worst_domain;  // |U|, |X|, |A|, |Y| of the worst trial
  double best_random_gap = 0.0;
  int best_random_gap_trial = -1;
  double witness_gap = 0.0;
  bool witness_from_random = false;

  bool sound() const { return worst_discrepancy <= tolerance; }
  bool witness_found() const { return witness_gap >= 0.1; }
  std::string text() const;
  std::string json() const;
};

SoundnessReport run_soundness_suite(int trials, std::uint64_t seed, const DomainRange& range = {});

}  // namespace pemv::frontdoor
