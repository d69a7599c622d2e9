#pragma once

// Dynamic observation network: a stride-modified bottleneck ResNet with
// attention blocks after selected stages, GeM pooling over the centre box and
// the surrounding ring, a batch-norm neck and two fully connected layers.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "uavgeo/gem.hpp"
#include "uavgeo/geometry.hpp"
#include "uavgeo/hab.hpp"
#include "uavgeo/image.hpp"
#include "uavgeo/layers.hpp"

namespace uavgeo::net {

enum class Stage { Stage3 = 3, Stage4 = 4, Stage5 = 5 };
enum class DescriptorKind { JointBn, Compressed };

std::string to_string(DescriptorKind kind);
DescriptorKind descriptor_kind_from_string(const std::string& s);

struct ModelConfig {
  int num_classes = 0;
  double gem_p = 3.0;
  bool gem_learnable = false;
  double partition_ratio = 0.5;
  std::set<Stage> hab_stages{Stage::Stage3, Stage::Stage5};
  int input_size = 256;
  int base_width = 64;                    ///< stage-2 bottleneck width; ResNet-50 uses 64
  std::array<int, 4> blocks{3, 4, 6, 3};  ///< bottlenecks per stage 2..5
  DescriptorKind descriptor = DescriptorKind::JointBn;
  std::uint64_t init_seed = 0;

  void validate() const;
  /// Channels of the final feature map (2048 for the ResNet-50 layout).
  int feature_channels() const { return base_width * 8 * nn::Bottleneck::kExpansion; }
  /// Structural fields, as key/value pairs; two models can share weights iff these match.
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
};

/// Everything one forward pass produces, batch-major.
struct ForwardOutput {
  Tensor feature_map;  ///< N x C x h x w after the last stage (and its attention block)
  Tensor center;       ///< N x C
  Tensor surround;     ///< N x C
  Tensor joint;        ///< N x 2C, [center | surround]
  Tensor joint_bn;     ///< N x 2C after the neck batch norm
  Tensor compressed;   ///< N x C
  Tensor logits;       ///< N x num_classes

  const Tensor& retrieval(DescriptorKind kind) const { return kind == DescriptorKind::JointBn ? joint_bn : compressed; }
};

/// Per-image descriptor.
struct Descriptor {
  std::vector<double> center_vec;
  std::vector<double> surround_vec;
  std::vector<double> joint;
  std::vector<double> joint_bn;
  std::vector<double> compressed;

  const std::vector<double>& retrieval(DescriptorKind kind) const {
    return kind == DescriptorKind::JointBn ? joint_bn : compressed;
  }
};

/// ImageNet channel statistics on the [0,1] scale.
inline constexpr std::array<double, 3> kPixelMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kPixelStd{0.229, 0.224, 0.225};

/// Normalises planar [0,255] RGB (3*h*w) in place.
void normalize_planar(std::vector<double>& planar);

/// Resize to size x size and normalise; returns 1 x 3 x size x size.
Tensor image_to_tensor(const RgbImage& image, int size);
Tensor stack_images(const std::vector<std::vector<double>>& planar, int size);

class Model {
 public:
  explicit Model(ModelConfig config);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }

  /// Stem and stages 2..5 with the configured attention blocks; N x 3 x S x S -> N x C x S/16 x S/16.
  Tensor backbone_forward(const Tensor& images, nn::Mode mode);
  ForwardOutput forward(const Tensor& images, nn::Mode mode);

  /// Backpropagates the loss gradients of the most recent forward call.
  /// `d_joint_bn` (may be empty) is the gradient reaching the neck output directly (centre loss),
  /// `d_logits` the gradient of the classification losses.
  void backward(const Tensor& d_joint_bn, const Tensor& d_logits);

  Descriptor embed(const RgbImage& image);
  std::vector<Descriptor> embed_batch(const std::vector<RgbImage>& images, int batch_size = 16);

  /// Affine classifier head on compressed descriptors (N x C) -> logits.
  Tensor classify(const Tensor& compressed);

  nn::StateRefs state();
  std::vector<nn::Parameter*> parameters() { return state().params; }
  void zero_grad();

  nn::Hab* hab(Stage stage);
  nn::Linear& classifier() { return classifier_; }
  nn::Linear& compressor() { return compress_; }
  nn::BatchNorm& neck() { return neck_bn_; }
  double gem_p() const { return gem_center_.p(); }
  /// Keeps learnable GeM exponents at or above `lo` after an optimiser step.
  void clamp_gem_p(double lo) {
    gem_center_.clamp_p(lo);
    gem_surround_.clamp_p(lo);
  }

 private:
  struct StageBlocks {
    std::vector<nn::Bottleneck> blocks;
    std::optional<nn::Hab> hab;
  };

  ModelConfig config_;
  nn::Conv2d stem_conv_;
  nn::BatchNorm stem_bn_;
  nn::Relu stem_relu_;
  nn::MaxPool stem_pool_;
  std::vector<StageBlocks> stages_;
  nn::GemPool gem_center_, gem_surround_;
  nn::BatchNorm neck_bn_;
  nn::Linear compress_;
  nn::Linear classifier_;
  nn::Region center_region_, surround_region_;
  int map_h_ = 0, map_w_ = 0, batch_ = 0;
};

/// Drone and satellite batches through one weight set (the batches are concatenated).
struct SharedOutput {
  ForwardOutput drone;
  ForwardOutput satellite;
};
SharedOutput shared_forward(Model& model, const Tensor& drone_batch, const Tensor& satellite_batch, nn::Mode mode);

/// Checkpoint: a single binary archive holding the model config and every
/// parameter/buffer, plus optional extra named tensors (e.g. class centres).
void save_checkpoint(Model& model, const std::filesystem::path& path,
                     const std::map<std::string, Tensor>& extras = {});

struct LoadedCheckpoint {
  Model model;
  std::map<std::string, Tensor> extras;
};

/// When `expected` is given, its structural fields must match the archived config.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace uavgeo::net
