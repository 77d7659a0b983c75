#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pemv/layers.hpp"
#include "pemv/tensor.hpp"

namespace pemv {

struct BackboneConfig {
  int input_channels = 3;
  int input_size = 128;
  // Width of the first residual stage; the last stage has 8x this many channels.
  int base_width = 64;
};

// Named flat buffer exposed for checkpointing (parameters and running stats).
struct StateEntry {
  std::string name;
  std::vector<float>* values;
};

struct BlockTape {
  Activation input;
  BatchNormCache bn1;
  Activation hidden;  // relu(bn1(conv1(input)))
  BatchNormCache bn2;
  BatchNormCache shortcut_bn;
  Activation output;  // relu(bn2(conv2(hidden)) + shortcut)
};

class BasicBlock {
 public:
  BasicBlock(const std::string& name, int in_channels, int out_channels, int stride);

  void initialize(Rng& rng);
  Activation forward(const Activation& x) const;
  Activation forward_train(const Activation& x, BlockTape& tape);
  // Returns the input gradient; accumulates parameter gradients.
  Activation backward(const Activation& dy, const BlockTape& tape);

  void collect_parameters(std::vector<Parameter<float>*>& out);
  void collect_state(std::vector<StateEntry>& out);

 private:
  Conv2d conv1_;
  BatchNorm2d bn1_;
  Conv2d conv2_;
  BatchNorm2d bn2_;
  std::optional<Conv2d> shortcut_conv_;
  std::optional<BatchNorm2d> shortcut_bn_;
};

struct BackboneTape {
  Activation input;
  BatchNormCache stem_bn;
  Activation stem_out;
  MaxPoolCache pool;
  std::vector<BlockTape> blocks;
};

// ResNet-18 trunk up to (and excluding) global pooling: stem conv 7x7/2,
// max-pool 3x3/2, then four stages of two basic blocks, the last three
// downsampling by 2. A 128x128 input yields a (8 * base_width, 4, 4) map.
class Backbone {
 public:
  explicit Backbone(BackboneConfig config = {});

  void initialize(Rng& rng);

  Activation forward(const Activation& images) const;
  Activation forward_train(const Activation& images, BackboneTape& tape);
  void backward(const Activation& dfeatures, BackboneTape& tape);

  std::vector<Parameter<float>*> parameters();
  std::vector<StateEntry> state();

  const BackboneConfig& config() const { return config_; }
  int out_channels() const { return 8 * config_.base_width; }
  int out_size() const;

 private:
  void check_input(const Activation& images) const;

  BackboneConfig config_;
  Conv2d stem_conv_;
  BatchNorm2d stem_bn_;
  std::vector<BasicBlock> blocks_;
};

}  // namespace pemv
