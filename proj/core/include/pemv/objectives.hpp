#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "pemv/layers.hpp"
#include "pemv/model.hpp"

namespace pemv {

// Clamp floor applied to probabilities inside logarithms.
inline constexpr double kLogEpsilon = 1e-12;

struct LossConfig {
  double lambda_f = 0.5;  // fusion-loss weight
  double mu_ip = 0.1;     // information-purity weight
  bool enable_lf = true;
  bool enable_ip = true;

  void validate() const;
};

// Logits for a batch (B x C) with one integer label per row.
struct BatchPrediction {
  Eigen::MatrixXd logits;
  std::vector<int> labels;

  int batch_size() const { return static_cast<int>(logits.rows()); }
};

struct ClassificationLoss {
  double value = 0.0;
  Eigen::MatrixXd dlogits;  // B x C, already divided by B
};

// Mean negative log-softmax probability of the true class.
ClassificationLoss loss_classification(const BatchPrediction& batch);

// Inputs of the fusion loss. Row i of corrected_same / corrected_other is the
// anchor's mediator corrected toward its own class prototype / toward the
// other class prototype; row j of globals is the marginal sample x'.
struct FusionBatch {
  Eigen::MatrixXd globals;
  Eigen::MatrixXd corrected_same;
  Eigen::MatrixXd corrected_other;
  std::vector<int> labels;

  int batch_size() const { return static_cast<int>(labels.size()); }
};

struct FusionLoss {
  double value = 0.0;
  std::size_t pairs = 0;
  Eigen::MatrixXd grad_weight;  // C x (d_g + d_A)
  Eigen::VectorXd grad_bias;
  Eigen::MatrixXd grad_globals;  // B x d_g
  Eigen::MatrixXd grad_same;     // B x d_A
  Eigen::MatrixXd grad_other;    // B x d_A
};

struct PairSampling {
  int full_pairing_max_batch = 32;
  int partners_per_anchor = 8;
};

// For every anchor i and marginal partner j:
//   q_s = softmax(f([g_j; A_same_i])),  q_o = softmax(f([g_j; A_other_i]))
//   term = -q_s(y_i) log q_s(y_i) - q_o(1 - y_i) log q_o(1 - y_i)
// averaged over the pairs. Batches up to full_pairing_max_batch use every
// (i, j); larger ones draw partners_per_anchor partners per anchor without
// replacement from `rng`. 0 log 0 is taken as 0.
FusionLoss loss_fusion(const FusionBatch& batch, const Linear& head, Rng* rng = nullptr,
                       const PairSampling& sampling = {});

// The single-pair term above for a probability q; exposed for tests.
double self_weighted_log_term(double q);

struct PurityLoss {
  double value = 0.0;
  Eigen::MatrixXd d_attention;  // K x cells
};

// Mean over views of H(alpha_k) / ln(cells): 1 for uniform, 0 for one-hot.
PurityLoss loss_information_purity(const ViewAttention& attention);

double loss_total(double lo, double lf, double lip, const LossConfig& config);

}  // namespace pemv
