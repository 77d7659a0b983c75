#include "pemv/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pemv/error.hpp"

namespace pemv {

namespace {

void check_label(int y) {
  if (y < 0 || y >= kNumClasses) throw ConfigError("label out of range: " + std::to_string(y));
}

// d/dq of -q log q under the clamp; zero at q == 0 where the term is defined as 0.
double self_weighted_log_grad(double q) {
  if (q <= 0.0) return 0.0;
  return -(std::log(std::max(q, kLogEpsilon)) + 1.0);
}

}  // namespace

void LossConfig::validate() const {
  if (!std::isfinite(lambda_f) || lambda_f < 0.0) throw ConfigError("loss.lambda_f must be finite and >= 0");
  if (!std::isfinite(mu_ip) || mu_ip < 0.0) throw ConfigError("loss.mu_ip must be finite and >= 0");
}

ClassificationLoss loss_classification(const BatchPrediction& batch) {
  const int b = batch.batch_size();
  if (b == 0) throw ShapeError("classification loss on an empty batch");
  if (static_cast<int>(batch.labels.size()) != b) throw ShapeError("one label per logit row required");
  ClassificationLoss out;
  out.dlogits.resize(b, batch.logits.cols());
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    const int y = batch.labels[static_cast<std::size_t>(i)];
    check_label(y);
    const Eigen::VectorXd z = batch.logits.row(i).transpose();
    const double top = z.maxCoeff();
    const double lse = top + std::log((z.array() - top).exp().sum());
    total += lse - z[y];
    Eigen::VectorXd p = (z.array() - lse).exp();
    p[y] -= 1.0;
    out.dlogits.row(i) = p.transpose() / static_cast<double>(b);
  }
  out.value = total / static_cast<double>(b);
  return out;
}

double self_weighted_log_term(double q) {
  if (q <= 0.0) return 0.0;
  return -q * std::log(std::max(q, kLogEpsilon));
}

FusionLoss loss_fusion(const FusionBatch& batch, const Linear& head, Rng* rng,
                       const PairSampling& sampling) {
  const int b = batch.batch_size();
  if (b < 2) throw ShapeError("fusion loss needs a batch of at least 2 samples, got " + std::to_string(b));
  const auto dg = batch.globals.cols();
  const auto da = batch.corrected_same.cols();
  if (batch.globals.rows() != b || batch.corrected_same.rows() != b ||
      batch.corrected_other.rows() != b || batch.corrected_other.cols() != da ||
      head.in_features() != dg + da) {
    throw ShapeError("fusion loss inputs do not match the classifier head");
  }

  FusionLoss out;
  out.grad_weight = Eigen::MatrixXd::Zero(head.out_features(), dg + da);
  out.grad_bias = Eigen::VectorXd::Zero(head.out_features());
  out.grad_globals = Eigen::MatrixXd::Zero(b, dg);
  out.grad_same = Eigen::MatrixXd::Zero(b, da);
  out.grad_other = Eigen::MatrixXd::Zero(b, da);

  const bool subsample = b > sampling.full_pairing_max_batch;
  if (subsample && rng == nullptr) throw ConfigError("pair subsampling requires a random stream");
  const int partners = subsample ? std::min(sampling.partners_per_anchor, b) : b;

  const auto w = head.weight_matrix();
  const auto bias = head.bias_vector();
  std::vector<int> order(static_cast<std::size_t>(b));

  // Per-pair derivative with respect to the logits, accumulated later.
  auto pair_term = [&](const Eigen::VectorXd& z, int cls, double& value) {
    const Eigen::VectorXd q = softmax(w * z + bias);
    value += self_weighted_log_term(q[cls]);
    Eigen::VectorXd du = -q * q[cls];
    du[cls] += q[cls];
    return Eigen::VectorXd(du * self_weighted_log_grad(q[cls]));
  };

  double total = 0.0;
  Eigen::VectorXd z(dg + da);
  for (int i = 0; i < b; ++i) {
    const int y = batch.labels[static_cast<std::size_t>(i)];
    check_label(y);
    std::iota(order.begin(), order.end(), 0);
    if (subsample) {
      for (int s = 0; s < partners; ++s) {
        std::uniform_int_distribution<int> pick(s, b - 1);
        std::swap(order[static_cast<std::size_t>(s)], order[static_cast<std::size_t>(pick(*rng))]);
      }
    }
    for (int s = 0; s < partners; ++s) {
      const int j = order[static_cast<std::size_t>(s)];
      z.head(dg) = batch.globals.row(j).transpose();

      z.tail(da) = batch.corrected_same.row(i).transpose();
      const Eigen::VectorXd du_same = pair_term(z, y, total);
      out.grad_weight.noalias() += du_same * z.transpose();
      out.grad_bias += du_same;
      const Eigen::VectorXd dz_same = w.transpose() * du_same;
      out.grad_globals.row(j) += dz_same.head(dg).transpose();
      out.grad_same.row(i) += dz_same.tail(da).transpose();

      z.tail(da) = batch.corrected_other.row(i).transpose();
      const Eigen::VectorXd du_other = pair_term(z, 1 - y, total);
      out.grad_weight.noalias() += du_other * z.transpose();
      out.grad_bias += du_other;
      const Eigen::VectorXd dz_other = w.transpose() * du_other;
      out.grad_globals.row(j) += dz_other.head(dg).transpose();
      out.grad_other.row(i) += dz_other.tail(da).transpose();
    }
  }

  out.pairs = static_cast<std::size_t>(b) * static_cast<std::size_t>(partners);
  const double scale = 1.0 / static_cast<double>(out.pairs);
  out.value = total * scale;
  out.grad_weight *= scale;
  out.grad_bias *= scale;
  out.grad_globals *= scale;
  out.grad_same *= scale;
  out.grad_other *= scale;
  return out;
}

PurityLoss loss_information_purity(const ViewAttention& attention) {
  const int k = attention.num_views();
  const auto cells = attention.weights.cols();
  PurityLoss out;
  out.d_attention = Eigen::MatrixXd::Zero(k, cells);
  if (k == 0 || cells <= 1) return out;
  const double norm = std::log(static_cast<double>(cells)) * k;
  double total = 0.0;
  for (int v = 0; v < k; ++v) {
    for (Eigen::Index j = 0; j < cells; ++j) {
      const double a = attention.weights(v, j);
      total += self_weighted_log_term(a);
      out.d_attention(v, j) = self_weighted_log_grad(a) / norm;
    }
  }
  out.value = total / norm;
  return out;
}

double loss_total(double lo, double lf, double lip, const LossConfig& config) {
  double total = lo;
  if (config.enable_lf) total += config.lambda_f * lf;
  if (config.enable_ip) total += config.mu_ip * lip;
  return total;
}

}  // namespace pemv
