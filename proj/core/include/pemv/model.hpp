#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pemv/backbone.hpp"
#include "pemv/layers.hpp"
#include "pemv/tensor.hpp"

namespace pemv {

inline constexpr int kNumClasses = 2;

struct ModelConfig {
  int num_views = 3;  // K, the number of attention experts
  int global_dim = 256;
  int view_dim = 128;
  double gamma_align = 0.5;
  double gamma_contrast = 0.1;
  double prototype_momentum = 0.9;
  int num_classes = kNumClasses;
  BackboneConfig backbone;

  // Ablation toggles. Views off means the classifier sees only g.
  bool enable_views = true;
  bool enable_correction = true;

  int mediator_dim() const { return num_views * view_dim; }
  int fused_dim() const { return global_dim + (enable_views ? mediator_dim() : 0); }
  void validate() const;
};

// Backbone output for one image: channels x (height * width), column j is the
// channel vector of spatial cell j (row-major over the grid).
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int height, int width);
  FeatureMap(int height, int width, Eigen::MatrixXd values);

  // Extracts sample n of a channel-major batch.
  static FeatureMap from_batch(const Activation& batch, int n);

  int channels() const { return static_cast<int>(values_.rows()); }
  int height() const { return height_; }
  int width() const { return width_; }
  int cells() const { return height_ * width_; }
  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::MatrixXd& values() { return values_; }
  double at(int c, int y, int x) const { return values_(c, y * width_ + x); }

  // Throws ShapeError on empty dimensions or DataError on non-finite entries.
  void validate() const;

 private:
  int height_ = 0;
  int width_ = 0;
  Eigen::MatrixXd values_;
};

struct GlobalFeature {
  Eigen::VectorXd values;
};

// Per-view spatial distributions, num_views x cells. Rows sum to one.
struct ViewAttention {
  int height = 0;
  int width = 0;
  Eigen::MatrixXd weights;

  int num_views() const { return static_cast<int>(weights.rows()); }
};

// A = [a_1; ...; a_K]. Only the concatenation is stored, so the per-view
// slices can never drift from it.
class Mediator {
 public:
  Mediator() = default;
  Mediator(int view_dim, Eigen::VectorXd concatenated);
  static Mediator from_views(std::span<const Eigen::VectorXd> views);

  int view_dim() const { return view_dim_; }
  int num_views() const { return view_dim_ == 0 ? 0 : static_cast<int>(values_.size()) / view_dim_; }
  int dim() const { return static_cast<int>(values_.size()); }
  const Eigen::VectorXd& concatenated() const { return values_; }
  Eigen::VectorXd view(int k) const { return values_.segment(k * view_dim_, view_dim_); }

 private:
  int view_dim_ = 0;
  Eigen::VectorXd values_;
};

struct CorrectedMediator {
  Eigen::VectorXd values;
};

struct Logits {
  Eigen::VectorXd values;

  Eigen::VectorXd softmax() const;
};

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Affine layer y = W x + b in double precision; W is stored row-major (out x in).
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features);

  // Uniform(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
  void initialize(Rng& rng);

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  // Accumulates parameter gradients and returns dL/dx.
  Eigen::VectorXd backward(const Eigen::VectorXd& x, const Eigen::VectorXd& dy);

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMatrix> weight_matrix() const {
    return {weight_.value.data(), out_, in_};
  }
  Eigen::Map<RowMatrix> weight_matrix() { return {weight_.value.data(), out_, in_}; }
  Eigen::Map<const Eigen::VectorXd> bias_vector() const { return {bias_.value.data(), out_}; }
  Eigen::Map<Eigen::VectorXd> bias_vector() { return {bias_.value.data(), out_}; }
  Eigen::Map<RowMatrix> weight_grad() { return {weight_.grad.data(), out_, in_}; }
  Eigen::Map<Eigen::VectorXd> bias_grad() { return {bias_.grad.data(), out_}; }

  Parameter<double>& weight() { return weight_; }
  Parameter<double>& bias() { return bias_; }

 private:
  int in_ = 0;
  int out_ = 0;
  Parameter<double> weight_;
  Parameter<double> bias_;
};

// g = W * mean_{cells}(F) + b.
class GlobalHead {
 public:
  GlobalHead() = default;
  GlobalHead(int channels, int global_dim);

  void initialize(Rng& rng) { projection_.initialize(rng); }
  GlobalFeature forward(const FeatureMap& fm) const;
  // Returns dL/dF (channels x cells).
  Eigen::MatrixXd backward(const FeatureMap& fm, const Eigen::VectorXd& dg);

  Linear& projection() { return projection_; }
  const Linear& projection() const { return projection_; }

 private:
  Linear projection_;
};

struct ViewForward {
  Mediator mediator;
  ViewAttention attention;
  Eigen::MatrixXd pooled;  // channels x K, attention-weighted channel vectors
};

// K attention experts over a shared feature map. Each expert scores every cell
// with a 1x1 projection, softmaxes the scores over the grid, pools the channel
// vectors with those weights and projects the pooled vector to view_dim.
class ViewExtractor {
 public:
  ViewExtractor() = default;
  ViewExtractor(int channels, int num_views, int view_dim);

  void initialize(Rng& rng);
  ViewForward forward(const FeatureMap& fm) const;
  // d_attention (K x cells) is optional and carries gradients that act on the
  // attention weights directly (the purity regularizer). Returns dL/dF.
  Eigen::MatrixXd backward(const FeatureMap& fm, const ViewForward& fwd,
                           const Eigen::VectorXd& d_mediator,
                           const Eigen::MatrixXd* d_attention);

  int num_views() const { return num_views_; }
  int view_dim() const { return view_dim_; }
  Parameter<double>& score_weight() { return score_weight_; }
  Parameter<double>& score_bias() { return score_bias_; }
  const Parameter<double>& score_weight() const { return score_weight_; }
  std::vector<Linear>& projections() { return projections_; }

 private:
  int channels_ = 0;
  int num_views_ = 0;
  int view_dim_ = 0;
  Parameter<double> score_weight_;  // K x channels
  Parameter<double> score_bias_;    // K
  std::vector<Linear> projections_;
};

// Per-class mediator prototypes maintained by a gradient-free momentum average
// of batch class means. A slot becomes valid the first time its class appears.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  PrototypeBank(int num_classes, int dim, double momentum);

  int num_classes() const { return static_cast<int>(prototypes_.size()); }
  int dim() const { return dim_; }
  double momentum() const { return momentum_; }

  bool initialized(int c) const { return initialized_.at(static_cast<std::size_t>(c)); }
  bool all_initialized() const;
  // nullptr while the slot is uninitialized.
  const Eigen::VectorXd* prototype(int c) const;

  void update(std::span<const Mediator> mediators, std::span<const int> labels);
  void set(int c, Eigen::VectorXd value);

 private:
  int dim_ = 0;
  double momentum_ = 0.9;
  std::vector<Eigen::VectorXd> prototypes_;
  std::vector<bool> initialized_;
};

struct CorrectionParams {
  double gamma_align = 0.5;
  double gamma_contrast = 0.1;

  // dA_hat / dA; the prototypes carry no gradient.
  double mediator_scale() const { return 1.0 - gamma_align + gamma_contrast; }
};

struct CorrectionStats {
  std::uint64_t applied = 0;
  std::uint64_t skipped = 0;
};

// A_hat = A + gamma_align (P_same - A) + gamma_contrast (A - P_other).
// With a missing prototype the mediator passes through unchanged and the
// skip counter is bumped.
CorrectedMediator correct_mediator(const Eigen::VectorXd& mediator,
                                   const Eigen::VectorXd* same, const Eigen::VectorXd* other,
                                   const CorrectionParams& params,
                                   CorrectionStats* stats = nullptr);

struct PrototypePair {
  const Eigen::VectorXd* same = nullptr;
  const Eigen::VectorXd* other = nullptr;
  int same_class = 0;
};

// With a label: (P_label, P_other), or nullopt while either slot is still
// warming up. Without a label: the prototype with the higher cosine
// similarity is treated as same-class (ties go to class 0); throws if the
// bank is not fully initialized.
std::optional<PrototypePair> retrieve_prototypes(const Eigen::VectorXd& mediator,
                                                 const PrototypeBank& bank,
                                                 std::optional<int> label);

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Logits = W [g; A_hat] + b, or W g + b when the head has no mediator input.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(int global_dim, int mediator_dim, int num_classes);

  void initialize(Rng& rng) { fc_.initialize(rng); }
  Eigen::VectorXd fuse(const Eigen::VectorXd& global, const Eigen::VectorXd* mediator) const;
  Logits forward(const Eigen::VectorXd& global, const Eigen::VectorXd* mediator) const;
  Logits forward_fused(const Eigen::VectorXd& fused) const;
  // Accumulates parameter gradients and returns dL/d[g; A_hat].
  Eigen::VectorXd backward(const Eigen::VectorXd& fused, const Eigen::VectorXd& dlogits);

  int global_dim() const { return global_dim_; }
  int mediator_dim() const { return mediator_dim_; }
  Linear& fc() { return fc_; }
  const Linear& fc() const { return fc_; }

 private:
  int global_dim_ = 0;
  int mediator_dim_ = 0;
  Linear fc_;
};

// argmax with ties resolved toward the lower class index (benign).
int predict(const Logits& logits);

FeatureMap backbone_forward(const Backbone& backbone, const Image& image);
GlobalFeature extract_global(const FeatureMap& fm, const GlobalHead& head);
ViewForward extract_views(const FeatureMap& fm, const ViewExtractor& views);
Logits fuse_and_classify(const GlobalFeature& g, const CorrectedMediator* mediator,
                         const ClassifierHead& head);

struct InferenceResult {
  Logits logits;
  int prediction = 0;
};

// The assembled network: backbone, global head, optional views, optional
// prototype correction, fused classifier.
class PemvModel {
 public:
  explicit PemvModel(ModelConfig config, std::uint64_t init_seed = 0);

  const ModelConfig& config() const { return config_; }
  CorrectionParams correction_params() const {
    return {config_.gamma_align, config_.gamma_contrast};
  }

  // Eval-mode forward over a batch of images. Uses running batch-norm
  // statistics and label-free prototype retrieval.
  std::vector<InferenceResult> infer(std::span<const Image> images) const;
  // Head-only inference from a precomputed feature map.
  InferenceResult infer_features(const FeatureMap& fm) const;

  Backbone& backbone() { return backbone_; }
  const Backbone& backbone() const { return backbone_; }
  GlobalHead& global_head() { return global_; }
  const GlobalHead& global_head() const { return global_; }
  ViewExtractor& views() { return views_; }
  const ViewExtractor& views() const { return views_; }
  ClassifierHead& classifier() { return classifier_; }
  const ClassifierHead& classifier() const { return classifier_; }
  PrototypeBank& prototypes() { return bank_; }
  const PrototypeBank& prototypes() const { return bank_; }

  std::vector<Parameter<float>*> backbone_parameters() { return backbone_.parameters(); }
  std::vector<Parameter<double>*> head_parameters();
  void zero_grad();

 private:
  ModelConfig config_;
  Backbone backbone_;
  GlobalHead global_;
  ViewExtractor views_;
  ClassifierHead classifier_;
  PrototypeBank bank_;
};

}  // namespace pemv
