#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "objn/bbox.hpp"
#include "objn/kernel_types.hpp"
#include "objn/tensor.hpp"

namespace objn {

struct ConvSpec {
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 0;
};
struct ReluSpec {};
struct LrnSpec {
  LrnParams params;
};
struct MaxPoolSpec {
  int window = 2;
  int stride = 2;
};
struct DenseSpec {
  int out_features = 1;
};

using LayerSpec = std::variant<ConvSpec, ReluSpec, LrnSpec, MaxPoolSpec, DenseSpec>;

std::string layer_kind(const LayerSpec& spec);

struct ClassificationHead {
  int num_classes = 2;
};
struct BBoxHead {
  BBoxGrid grid;
};
using HeadSpec = std::variant<ClassificationHead, BBoxHead>;

struct NetworkConfig {
  int in_channels = 3;
  int in_h = 32;
  int in_w = 32;
  std::vector<LayerSpec> trunk;
  int feature_dim = 128;
  HeadSpec head = ClassificationHead{};
  std::uint64_t init_seed = 1;
  // Weight init: 0 = zero-mean Gaussian with std sqrt(2/fan_in) per layer;
  // a positive value fixes the std for every layer. At these layer widths a
  // fixed small std collapses the forward signal and training stalls.
  double init_std = 0.0;

  bool is_bbox_head() const { return std::holds_alternative<BBoxHead>(head); }
  int head_size() const;

  // Throws ModelError naming the first offending layer.
  void validate() const;
};

std::string network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const std::string& text);

// The conv/relu/lrn/pool/dense default trunk used by the CLI and tests.
std::vector<LayerSpec> default_trunk();

struct ForwardTrace {
  std::vector<Tensor> layer_inputs;  // input to trunk layer i
  Tensor features;                   // head input [N, feature_dim]
};

class Model {
 public:
  static Model build(const NetworkConfig& cfg);

  const NetworkConfig& config() const { return cfg_; }
  const std::vector<std::string>& param_names() const { return names_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }

  // Head logits for a [N, C, H, W] batch.
  Tensor forward(const Tensor& batch) const;
  Tensor forward(const Tensor& batch, ForwardTrace& trace) const;

  // Gradients w.r.t. every parameter, aligned with params().
  std::vector<Tensor> backward(const ForwardTrace& trace, const Tensor& d_logits) const;

 private:
  Model() = default;
  NetworkConfig cfg_;
  std::vector<std::string> names_;
  std::vector<Tensor> params_;
  // first parameter slot per trunk layer, -1 for parameterless layers;
  // the final two slots are head.weight / head.bias
  std::vector<int> layer_slot_;
};

// Copies the source model's trunk into a freshly built network with the new
// config's head; head parameters are freshly initialized, everything stays
// trainable. The source is not modified.
Model head_swap(const Model& source, const NetworkConfig& new_config);

}  // namespace objn
