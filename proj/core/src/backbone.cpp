#include "pemv/backbone.hpp"

#include "pemv/error.hpp"

namespace pemv {

namespace {

void add_inplace(Activation& dst, const Activation& src) {
  float* d = dst.data();
  const float* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

BasicBlock::BasicBlock(const std::string& name, int in_channels, int out_channels, int stride)
    : conv1_(name + ".conv1", in_channels, out_channels, 3, stride, 1),
      bn1_(name + ".bn1", out_channels),
      conv2_(name + ".conv2", out_channels, out_channels, 3, 1, 1),
      bn2_(name + ".bn2", out_channels) {
  if (stride != 1 || in_channels != out_channels) {
    shortcut_conv_.emplace(name + ".downsample.0", in_channels, out_channels, 1, stride, 0);
    shortcut_bn_.emplace(name + ".downsample.1", out_channels);
  }
}

void BasicBlock::initialize(Rng& rng) {
  conv1_.initialize(rng);
  conv2_.initialize(rng);
  if (shortcut_conv_) shortcut_conv_->initialize(rng);
}

Activation BasicBlock::forward(const Activation& x) const {
  Activation h = bn1_.forward(conv1_.forward(x));
  relu_inplace(h);
  Activation out = bn2_.forward(conv2_.forward(h));
  if (shortcut_conv_) {
    add_inplace(out, shortcut_bn_->forward(shortcut_conv_->forward(x)));
  } else {
    add_inplace(out, x);
  }
  relu_inplace(out);
  return out;
}

Activation BasicBlock::forward_train(const Activation& x, BlockTape& tape) {
  tape.input = x;
  tape.hidden = bn1_.forward_train(conv1_.forward(x), tape.bn1);
  relu_inplace(tape.hidden);
  Activation out = bn2_.forward_train(conv2_.forward(tape.hidden), tape.bn2);
  if (shortcut_conv_) {
    add_inplace(out, shortcut_bn_->forward_train(shortcut_conv_->forward(x), tape.shortcut_bn));
  } else {
    add_inplace(out, x);
  }
  relu_inplace(out);
  tape.output = out;
  return out;
}

Activation BasicBlock::backward(const Activation& dy, const BlockTape& tape) {
  Activation g = dy;
  relu_backward_inplace(tape.output, g);

  Activation dx;
  if (shortcut_conv_) {
    Activation ds = shortcut_bn_->backward(g, tape.shortcut_bn);
    shortcut_conv_->backward(tape.input, ds, &dx);
  } else {
    dx = g;
  }

  Activation dh;
  conv2_.backward(tape.hidden, bn2_.backward(g, tape.bn2), &dh);
  relu_backward_inplace(tape.hidden, dh);
  Activation dmain;
  conv1_.backward(tape.input, bn1_.backward(dh, tape.bn1), &dmain);
  add_inplace(dx, dmain);
  return dx;
}

void BasicBlock::collect_parameters(std::vector<Parameter<float>*>& out) {
  out.push_back(&conv1_.weight());
  out.push_back(&bn1_.gamma());
  out.push_back(&bn1_.beta());
  out.push_back(&conv2_.weight());
  out.push_back(&bn2_.gamma());
  out.push_back(&bn2_.beta());
  if (shortcut_conv_) {
    out.push_back(&shortcut_conv_->weight());
    out.push_back(&shortcut_bn_->gamma());
    out.push_back(&shortcut_bn_->beta());
  }
}

void BasicBlock::collect_state(std::vector<StateEntry>& out) {
  auto add_bn = [&out](BatchNorm2d& bn) {
    out.push_back({bn.gamma().name, &bn.gamma().value});
    out.push_back({bn.beta().name, &bn.beta().value});
    const std::string prefix = bn.gamma().name.substr(0, bn.gamma().name.size() - 7);
    out.push_back({prefix + ".running_mean", &bn.running_mean()});
    out.push_back({prefix + ".running_var", &bn.running_var()});
  };
  out.push_back({conv1_.weight().name, &conv1_.weight().value});
  add_bn(bn1_);
  out.push_back({conv2_.weight().name, &conv2_.weight().value});
  add_bn(bn2_);
  if (shortcut_conv_) {
    out.push_back({shortcut_conv_->weight().name, &shortcut_conv_->weight().value});
    add_bn(*shortcut_bn_);
  }
}

Backbone::Backbone(BackboneConfig config)
    : config_(config),
      stem_conv_("conv1", config.input_channels, config.base_width, 7, 2, 3),
      stem_bn_("bn1", config.base_width) {
  if (config.base_width <= 0 || config.input_channels <= 0 || config.input_size <= 0) {
    throw ConfigError("backbone dimensions must be positive");
  }
  int channels = config.base_width;
  for (int stage = 0; stage < 4; ++stage) {
    const int width = config.base_width << stage;
    for (int b = 0; b < 2; ++b) {
      const int stride = (stage > 0 && b == 0) ? 2 : 1;
      blocks_.emplace_back("layer" + std::to_string(stage + 1) + "." + std::to_string(b),
                           channels, width, stride);
      channels = width;
    }
  }
}

void Backbone::initialize(Rng& rng) {
  stem_conv_.initialize(rng);
  for (auto& block : blocks_) block.initialize(rng);
}

int Backbone::out_size() const {
  int s = stem_conv_.out_size(config_.input_size);
  s = (s + 2 - 3) / 2 + 1;  // max-pool
  for (int stage = 1; stage < 4; ++stage) s = (s + 2 - 3) / 2 + 1;
  return s;
}

void Backbone::check_input(const Activation& images) const {
  if (images.channels() != config_.input_channels || images.height() != config_.input_size ||
      images.width() != config_.input_size) {
    throw ShapeError("backbone expects images of shape (" +
                     std::to_string(config_.input_channels) + ", " +
                     std::to_string(config_.input_size) + ", " +
                     std::to_string(config_.input_size) + "), received (" +
                     std::to_string(images.channels()) + ", " +
                     std::to_string(images.height()) + ", " + std::to_string(images.width()) +
                     ")");
  }
}

Activation Backbone::forward(const Activation& images) const {
  check_input(images);
  Activation x = stem_bn_.forward(stem_conv_.forward(images));
  relu_inplace(x);
  x = max_pool_3x3s2(x, nullptr);
  for (const auto& block : blocks_) x = block.forward(x);
  return x;
}

Activation Backbone::forward_train(const Activation& images, BackboneTape& tape) {
  check_input(images);
  tape.input = images;
  tape.stem_out = stem_bn_.forward_train(stem_conv_.forward(images), tape.stem_bn);
  relu_inplace(tape.stem_out);
  Activation x = max_pool_3x3s2(tape.stem_out, &tape.pool);
  tape.blocks.resize(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) x = blocks_[i].forward_train(x, tape.blocks[i]);
  return x;
}

void Backbone::backward(const Activation& dfeatures, BackboneTape& tape) {
  Activation g = dfeatures;
  for (std::size_t i = blocks_.size(); i-- > 0;) g = blocks_[i].backward(g, tape.blocks[i]);
  g = max_pool_backward(g, tape.pool, stem_conv_.out_channels());
  relu_backward_inplace(tape.stem_out, g);
  stem_conv_.backward(tape.input, stem_bn_.backward(g, tape.stem_bn), nullptr);
}

std::vector<Parameter<float>*> Backbone::parameters() {
  std::vector<Parameter<float>*> out{&stem_conv_.weight(), &stem_bn_.gamma(), &stem_bn_.beta()};
  for (auto& block : blocks_) block.collect_parameters(out);
  return out;
}

std::vector<StateEntry> Backbone::state() {
  std::vector<StateEntry> out{{stem_conv_.weight().name, &stem_conv_.weight().value},
                              {stem_bn_.gamma().name, &stem_bn_.gamma().value},
                              {stem_bn_.beta().name, &stem_bn_.beta().value},
                              {"bn1.running_mean", &stem_bn_.running_mean()},
                              {"bn1.running_var", &stem_bn_.running_var()}};
  for (auto& block : blocks_) block.collect_state(out);
  return out;
}

}  // namespace pemv
