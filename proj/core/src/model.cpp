#include "pemv/model.hpp"

#include <cmath>

#include "pemv/error.hpp"

namespace pemv {

void ModelConfig::validate() const {
  if (num_views < 1) throw ConfigError("model.num_views must be >= 1, got " + std::to_string(num_views));
  if (global_dim < 1) throw ConfigError("model.global_dim must be >= 1");
  if (view_dim < 1) throw ConfigError("model.view_dim must be >= 1");
  auto unit = [](double v, const char* key) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConfigError(std::string(key) + " must lie in [0, 1], got " + std::to_string(v));
    }
  };
  unit(gamma_align, "model.gamma_align");
  unit(gamma_contrast, "model.gamma_contrast");
  unit(prototype_momentum, "model.prototype_momentum");
  if (num_classes != kNumClasses) {
    throw ConfigError("model.num_classes must be 2 (benign / malignant)");
  }
  if (enable_correction && !enable_views) {
    throw ConfigError("prototype correction requires the multi-view mediator");
  }
}

// ---------------------------------------------------------------------------
// FeatureMap

FeatureMap::FeatureMap(int channels, int height, int width)
    : height_(height), width_(width), values_(Eigen::MatrixXd::Zero(channels, height * width)) {
  if (channels < 1 || height < 1 || width < 1) {
    throw ShapeError("feature map dimensions must be >= 1");
  }
}

FeatureMap::FeatureMap(int height, int width, Eigen::MatrixXd values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (values_.rows() < 1 || height < 1 || width < 1 || values_.cols() != height * width) {
    throw ShapeError("feature map values must be channels x (height * width)");
  }
}

FeatureMap FeatureMap::from_batch(const Activation& batch, int n) {
  FeatureMap fm(batch.channels(), batch.height(), batch.width());
  const int cells = batch.spatial();
  for (int c = 0; c < batch.channels(); ++c) {
    const float* row = &batch.at(c, n, 0, 0);
    for (int j = 0; j < cells; ++j) fm.values_(c, j) = row[j];
  }
  return fm;
}

void FeatureMap::validate() const {
  if (values_.rows() < 1 || height_ < 1 || width_ < 1) {
    throw ShapeError("feature map is empty");
  }
  if (!values_.allFinite()) throw DataError("feature map contains non-finite values");
}

// ---------------------------------------------------------------------------
// Small value types

Mediator::Mediator(int view_dim, Eigen::VectorXd concatenated)
    : view_dim_(view_dim), values_(std::move(concatenated)) {
  if (view_dim < 1 || values_.size() % view_dim != 0) {
    throw ShapeError("mediator length must be a multiple of the view dimension");
  }
}

Mediator Mediator::from_views(std::span<const Eigen::VectorXd> views) {
  if (views.empty()) throw ConfigError("a mediator needs at least one view");
  const auto d = views.front().size();
  Eigen::VectorXd joined(d * static_cast<Eigen::Index>(views.size()));
  for (std::size_t k = 0; k < views.size(); ++k) {
    if (views[k].size() != d) throw ShapeError("all views must share one dimension");
    joined.segment(static_cast<Eigen::Index>(k) * d, d) = views[k];
  }
  return Mediator(static_cast<int>(d), std::move(joined));
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - top).exp();
  return e / e.sum();
}

Eigen::VectorXd Logits::softmax() const { return pemv::softmax(values); }

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, int in_features, int out_features)
    : in_(in_features),
      out_(out_features),
      weight_(name + ".weight", static_cast<std::size_t>(in_features) * out_features),
      bias_(name + ".bias", static_cast<std::size_t>(out_features)) {
  if (in_features < 1 || out_features < 1) throw ShapeError(name + ": empty linear layer");
}

void Linear::initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : weight_.value) w = dist(rng);
  for (double& b : bias_.value) b = dist(rng);
}

Eigen::VectorXd Linear::forward(const Eigen::VectorXd& x) const {
  if (x.size() != in_) {
    throw ShapeError(weight_.name + ": expected input of length " + std::to_string(in_) +
                     ", received " + std::to_string(x.size()));
  }
  return weight_matrix() * x + bias_vector();
}

Eigen::VectorXd Linear::backward(const Eigen::VectorXd& x, const Eigen::VectorXd& dy) {
  weight_grad().noalias() += dy * x.transpose();
  bias_grad() += dy;
  return weight_matrix().transpose() * dy;
}

// ---------------------------------------------------------------------------
// Global head

GlobalHead::GlobalHead(int channels, int global_dim) : projection_("global.proj", channels, global_dim) {}

GlobalFeature GlobalHead::forward(const FeatureMap& fm) const {
  fm.validate();
  const Eigen::VectorXd mean = fm.values().rowwise().mean();
  return {projection_.forward(mean)};
}

Eigen::MatrixXd GlobalHead::backward(const FeatureMap& fm, const Eigen::VectorXd& dg) {
  const Eigen::VectorXd mean = fm.values().rowwise().mean();
  const Eigen::VectorXd dmean = projection_.backward(mean, dg);
  return (dmean / static_cast<double>(fm.cells())).replicate(1, fm.cells());
}

GlobalFeature extract_global(const FeatureMap& fm, const GlobalHead& head) {
  return head.forward(fm);
}

// ---------------------------------------------------------------------------
// Views

ViewExtractor::ViewExtractor(int channels, int num_views, int view_dim)
    : channels_(channels),
      num_views_(num_views),
      view_dim_(view_dim),
      score_weight_("views.score.weight", static_cast<std::size_t>(num_views) * channels),
      score_bias_("views.score.bias", static_cast<std::size_t>(num_views)) {
  if (num_views < 1) throw ConfigError("number of views must be >= 1");
  projections_.reserve(static_cast<std::size_t>(num_views));
  for (int k = 0; k < num_views; ++k) {
    projections_.emplace_back("views." + std::to_string(k) + ".proj", channels, view_dim);
  }
}

void ViewExtractor::initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels_));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : score_weight_.value) w = dist(rng);
  for (double& b : score_bias_.value) b = dist(rng);
  for (auto& p : projections_) p.initialize(rng);
}

ViewForward ViewExtractor::forward(const FeatureMap& fm) const {
  fm.validate();
  if (fm.channels() != channels_) {
    throw ShapeError("view extractor expects " + std::to_string(channels_) +
                     " channels, received " + std::to_string(fm.channels()));
  }
  Eigen::Map<const Linear::RowMatrix> w(score_weight_.value.data(), num_views_, channels_);
  Eigen::Map<const Eigen::VectorXd> b(score_bias_.value.data(), num_views_);

  ViewForward out;
  out.attention.height = fm.height();
  out.attention.width = fm.width();
  Eigen::MatrixXd scores = w * fm.values();
  scores.colwise() += b;
  out.attention.weights.resize(num_views_, fm.cells());
  out.pooled.resize(channels_, num_views_);
  std::vector<Eigen::VectorXd> views(static_cast<std::size_t>(num_views_));
  for (int k = 0; k < num_views_; ++k) {
    const Eigen::VectorXd alpha = softmax(scores.row(k).transpose());
    out.attention.weights.row(k) = alpha.transpose();
    out.pooled.col(k) = fm.values() * alpha;
    views[static_cast<std::size_t>(k)] = projections_[static_cast<std::size_t>(k)].forward(out.pooled.col(k));
  }
  out.mediator = Mediator::from_views(views);
  return out;
}

Eigen::MatrixXd ViewExtractor::backward(const FeatureMap& fm, const ViewForward& fwd,
                                        const Eigen::VectorXd& d_mediator,
                                        const Eigen::MatrixXd* d_attention) {
  Eigen::Map<const Linear::RowMatrix> w(score_weight_.value.data(), num_views_, channels_);
  Eigen::Map<Linear::RowMatrix> dw(score_weight_.grad.data(), num_views_, channels_);
  Eigen::MatrixXd dF = Eigen::MatrixXd::Zero(channels_, fm.cells());
  for (int k = 0; k < num_views_; ++k) {
    const Eigen::VectorXd alpha = fwd.attention.weights.row(k).transpose();
    const Eigen::VectorXd dp = projections_[static_cast<std::size_t>(k)].backward(
        fwd.pooled.col(k), d_mediator.segment(static_cast<Eigen::Index>(k) * view_dim_, view_dim_));
    dF.noalias() += dp * alpha.transpose();
    Eigen::VectorXd dalpha = fm.values().transpose() * dp;
    if (d_attention != nullptr) dalpha += d_attention->row(k).transpose();
    const double inner = alpha.dot(dalpha);
    const Eigen::VectorXd ds = alpha.cwiseProduct((dalpha.array() - inner).matrix());
    dw.row(k).noalias() += (fm.values() * ds).transpose();
    score_bias_.grad[static_cast<std::size_t>(k)] += ds.sum();
    dF.noalias() += w.row(k).transpose() * ds.transpose();
  }
  return dF;
}

ViewForward extract_views(const FeatureMap& fm, const ViewExtractor& views) {
  return views.forward(fm);
}

// ---------------------------------------------------------------------------
// Prototypes and correction

PrototypeBank::PrototypeBank(int num_classes, int dim, double momentum)
    : dim_(dim),
      momentum_(momentum),
      prototypes_(static_cast<std::size_t>(num_classes), Eigen::VectorXd::Zero(dim)),
      initialized_(static_cast<std::size_t>(num_classes), false) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("prototype momentum must lie in [0, 1]");
}

bool PrototypeBank::all_initialized() const {
  for (bool f : initialized_) {
    if (!f) return false;
  }
  return !initialized_.empty();
}

const Eigen::VectorXd* PrototypeBank::prototype(int c) const {
  const auto idx = static_cast<std::size_t>(c);
  if (idx >= prototypes_.size()) throw ConfigError("class index out of range: " + std::to_string(c));
  return initialized_[idx] ? &prototypes_[idx] : nullptr;
}

void PrototypeBank::update(std::span<const Mediator> mediators, std::span<const int> labels) {
  if (mediators.size() != labels.size()) {
    throw ShapeError("prototype update needs one label per mediator");
  }
  const std::size_t classes = prototypes_.size();
  std::vector<Eigen::VectorXd> sums(classes, Eigen::VectorXd::Zero(dim_));
  std::vector<int> counts(classes, 0);
  for (std::size_t i = 0; i < mediators.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ConfigError("label out of range in prototype update: " + std::to_string(y));
    }
    if (mediators[i].dim() != dim_) {
      throw ShapeError("mediator dimension " + std::to_string(mediators[i].dim()) +
                       " does not match prototype dimension " + std::to_string(dim_));
    }
    sums[static_cast<std::size_t>(y)] += mediators[i].concatenated();
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) continue;
    const Eigen::VectorXd mean = sums[c] / static_cast<double>(counts[c]);
    if (!initialized_[c]) {
      prototypes_[c] = mean;
      initialized_[c] = true;
    } else {
      prototypes_[c] = momentum_ * prototypes_[c] + (1.0 - momentum_) * mean;
    }
  }
}

void PrototypeBank::set(int c, Eigen::VectorXd value) {
  if (value.size() != dim_) throw ShapeError("prototype dimension mismatch");
  prototypes_.at(static_cast<std::size_t>(c)) = std::move(value);
  initialized_.at(static_cast<std::size_t>(c)) = true;
}

CorrectedMediator correct_mediator(const Eigen::VectorXd& mediator,
                                   const Eigen::VectorXd* same, const Eigen::VectorXd* other,
                                   const CorrectionParams& params, CorrectionStats* stats) {
  if (same == nullptr || other == nullptr) {
    if (stats != nullptr) ++stats->skipped;
    return {mediator};
  }
  if (same->size() != mediator.size() || other->size() != mediator.size()) {
    throw ShapeError("prototype and mediator dimensions differ");
  }
  if (stats != nullptr) ++stats->applied;
  if (params.gamma_align == 0.0 && params.gamma_contrast == 0.0) return {mediator};
  // Expanded form of the update; it reproduces P_same exactly at
  // gamma_align = 1, gamma_contrast = 0.
  return {params.mediator_scale() * mediator + params.gamma_align * *same -
          params.gamma_contrast * *other};
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double denom = a.norm() * b.norm();
  return denom > 0.0 ? a.dot(b) / denom : 0.0;
}

std::optional<PrototypePair> retrieve_prototypes(const Eigen::VectorXd& mediator,
                                                 const PrototypeBank& bank,
                                                 std::optional<int> label) {
  if (label) {
    if (*label < 0 || *label >= kNumClasses) {
      throw ConfigError("label out of range: " + std::to_string(*label));
    }
    const Eigen::VectorXd* same = bank.prototype(*label);
    const Eigen::VectorXd* other = bank.prototype(1 - *label);
    if (same == nullptr || other == nullptr) return std::nullopt;
    return PrototypePair{same, other, *label};
  }
  if (!bank.all_initialized()) {
    throw Error("prototype bank is not initialized; load a trained checkpoint before inference");
  }
  const Eigen::VectorXd* p0 = bank.prototype(0);
  const Eigen::VectorXd* p1 = bank.prototype(1);
  if (cosine_similarity(mediator, *p1) > cosine_similarity(mediator, *p0)) {
    return PrototypePair{p1, p0, 1};
  }
  return PrototypePair{p0, p1, 0};
}

// ---------------------------------------------------------------------------
// Classifier

ClassifierHead::ClassifierHead(int global_dim, int mediator_dim, int num_classes)
    : global_dim_(global_dim),
      mediator_dim_(mediator_dim),
      fc_("classifier", global_dim + mediator_dim, num_classes) {}

Eigen::VectorXd ClassifierHead::fuse(const Eigen::VectorXd& global,
                                     const Eigen::VectorXd* mediator) const {
  const Eigen::Index md = mediator != nullptr ? mediator->size() : 0;
  if (global.size() != global_dim_ || md != mediator_dim_) {
    throw ShapeError("classifier expects [g; A_hat] of " + std::to_string(global_dim_) + " + " +
                     std::to_string(mediator_dim_) + " features, received " +
                     std::to_string(global.size()) + " + " + std::to_string(md));
  }
  Eigen::VectorXd z(global_dim_ + mediator_dim_);
  z.head(global_dim_) = global;
  if (mediator != nullptr) z.tail(mediator_dim_) = *mediator;
  return z;
}

Logits ClassifierHead::forward(const Eigen::VectorXd& global, const Eigen::VectorXd* mediator) const {
  return forward_fused(fuse(global, mediator));
}

Logits ClassifierHead::forward_fused(const Eigen::VectorXd& fused) const {
  return {fc_.forward(fused)};
}

Eigen::VectorXd ClassifierHead::backward(const Eigen::VectorXd& fused, const Eigen::VectorXd& dlogits) {
  return fc_.backward(fused, dlogits);
}

int predict(const Logits& logits) {
  int best = 0;
  for (int c = 1; c < logits.values.size(); ++c) {
    if (logits.values[c] > logits.values[best]) best = c;
  }
  return best;
}

FeatureMap backbone_forward(const Backbone& backbone, const Image& image) {
  return FeatureMap::from_batch(backbone.forward(pack_images(std::span(&image, 1))), 0);
}

Logits fuse_and_classify(const GlobalFeature& g, const CorrectedMediator* mediator,
                         const ClassifierHead& head) {
  return head.forward(g.values, mediator != nullptr ? &mediator->values : nullptr);
}

// ---------------------------------------------------------------------------
// Assembled model

PemvModel::PemvModel(ModelConfig config, std::uint64_t init_seed)
    : config_(std::move(config)), backbone_((config_.validate(), config_.backbone)) {
  const int channels = backbone_.out_channels();
  global_ = GlobalHead(channels, config_.global_dim);
  if (config_.enable_views) views_ = ViewExtractor(channels, config_.num_views, config_.view_dim);
  classifier_ = ClassifierHead(config_.global_dim, config_.enable_views ? config_.mediator_dim() : 0,
                               config_.num_classes);
  bank_ = PrototypeBank(config_.num_classes, config_.mediator_dim(), config_.prototype_momentum);

  Rng rng(init_seed);
  backbone_.initialize(rng);
  global_.initialize(rng);
  if (config_.enable_views) views_.initialize(rng);
  classifier_.initialize(rng);
}

InferenceResult PemvModel::infer_features(const FeatureMap& fm) const {
  const GlobalFeature g = global_.forward(fm);
  InferenceResult out;
  if (!config_.enable_views) {
    out.logits = classifier_.forward(g.values, nullptr);
  } else {
    const ViewForward vf = views_.forward(fm);
    const Eigen::VectorXd& a = vf.mediator.concatenated();
    if (config_.enable_correction) {
      const auto pair = retrieve_prototypes(a, bank_, std::nullopt);
      const CorrectedMediator a_hat = correct_mediator(a, pair->same, pair->other, correction_params());
      out.logits = classifier_.forward(g.values, &a_hat.values);
    } else {
      out.logits = classifier_.forward(g.values, &a);
    }
  }
  out.prediction = predict(out.logits);
  return out;
}

std::vector<InferenceResult> PemvModel::infer(std::span<const Image> images) const {
  const Activation features = backbone_.forward(pack_images(images));
  std::vector<InferenceResult> out;
  out.reserve(images.size());
  for (int n = 0; n < features.batch(); ++n) {
    out.push_back(infer_features(FeatureMap::from_batch(features, n)));
  }
  return out;
}

std::vector<Parameter<double>*> PemvModel::head_parameters() {
  std::vector<Parameter<double>*> out{&global_.projection().weight(), &global_.projection().bias()};
  if (config_.enable_views) {
    out.push_back(&views_.score_weight());
    out.push_back(&views_.score_bias());
    for (auto& p : views_.projections()) {
      out.push_back(&p.weight());
      out.push_back(&p.bias());
    }
  }
  out.push_back(&classifier_.fc().weight());
  out.push_back(&classifier_.fc().bias());
  return out;
}

void PemvModel::zero_grad() {
  for (auto* p : backbone_.parameters()) p->zero_grad();
  for (auto* p : head_parameters()) p->zero_grad();
}

}  // namespace pemv
