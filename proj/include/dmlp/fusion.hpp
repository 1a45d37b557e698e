#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmlp/nn/backbones.hpp"
#include "dmlp/nn/layers.hpp"

namespace dmlp::fusion {

enum class Strategy { image_only, concat, addition, multiplication, dynamic };
enum class Variant { A, B, C };

std::string_view to_string(Strategy s);
std::string_view to_string(Variant v);
// Throw ValidationError on unknown names.
Strategy parse_strategy(std::string_view name);
Variant parse_variant(std::string_view name);

struct FusionConfig {
  Strategy strategy = Strategy::dynamic;
  Variant variant = Variant::C;
  std::size_t d = 256;           // reduced image width fed to the dynamic blocks
  std::size_t h = 64;            // bottleneck width of intermediate blocks
  std::size_t num_blocks = 2;    // N
  bool ip_concat = true;         // variant C: image path gets the concatenated embedding
  bool mp_concat = true;         // variant C: weight generator gets the concatenated embedding
  std::size_t num_classes = 2;
  std::size_t static_depth = 1;  // variant B: (linear, LN, relu) stacks per path per block
  bool share_generators = false; // one generator for all blocks (needs equal block shapes)
  std::size_t compensation_width = 0;  // baselines: hidden width of the extra image-path MLP, 0 = off

  // Throws ValidationError naming the offending key.
  void validate() const;
};

struct BlockShape {
  std::size_t in_dim;
  std::size_t out_dim;
  bool operator==(const BlockShape&) const = default;
};

// N = 1: d->d. N >= 2: d->h, h->h (N-2 times), h->d.
std::vector<BlockShape> block_schedule(std::size_t d, std::size_t h, std::size_t num_blocks);

struct ModelConfig {
  nn::ImageEncoderConfig encoder;
  nn::MetadataBackboneConfig metadata;
  FusionConfig fusion;

  void validate() const;
  // Width of the image feature z_i.
  std::size_t image_dim() const { return encoder.output_dim; }
};

// Intermediate values of one forward pass, for tests and analysis exports.
struct FusionTrace {
  ad::Tensor image_feature;       // z_i
  ad::Tensor metadata_feature;    // z_e (undefined for image_only)
  ad::Tensor reduced;             // z_i^0
  ad::Tensor guide;               // generator input fixed across blocks
  std::vector<ad::Tensor> block_inputs;
  std::vector<ad::Tensor> weights;  // per block, [batch, in, out]
  std::vector<ad::Tensor> block_outputs;
  ad::Tensor fused;               // input of the (image) classification head
  ad::Tensor scores;
};

// Learnable map from the guide to a flattened in x out matrix, reshaped row-major.
class WeightGenerator {
 public:
  WeightGenerator() = default;
  WeightGenerator(nn::ParameterStore& store, const std::string& path, std::size_t guide_dim,
                  BlockShape shape);

  // [batch, guide_dim] -> [batch, in, out]
  ad::Tensor generate(ad::Tape& tape, const ad::Tensor& guide) const;

  BlockShape shape() const { return shape_; }
  const nn::Linear& linear() const { return fc_; }

 private:
  BlockShape shape_{};
  nn::Linear fc_;
};

// relu(LN(z W)) per instance: z [batch, in], W [batch, in, out]. `norm` may be
// null for a non-affine layer norm.
ad::Tensor dynamic_projection(ad::Tape& tape, const ad::Tensor& z, const ad::Tensor& weights,
                              const nn::LayerNorm* norm = nullptr);

// (linear, LN, relu) repeated `depth` times at constant width.
class StaticStack {
 public:
  StaticStack() = default;
  StaticStack(nn::ParameterStore& store, const std::string& path, std::size_t width, std::size_t depth);
  ad::Tensor forward(ad::Tape& tape, const ad::Tensor& x) const;

 private:
  std::vector<nn::Linear> linears_;
  std::vector<nn::LayerNorm> norms_;
};

// N recursive dynamic blocks on the reduced image feature, guided by z_e.
class DynamicMLP {
 public:
  struct Block {
    BlockShape shape;
    std::size_t generator = 0;   // index into generators()
    nn::LayerNorm norm;
    StaticStack image_stack;     // variant B only
    StaticStack guide_stack;     // variant B only
  };

  DynamicMLP() = default;
  DynamicMLP(nn::ParameterStore& store, const std::string& path, const FusionConfig& cfg,
             std::size_t guide_dim);

  // [batch, d] x [batch, d_e] -> [batch, d]
  ad::Tensor forward(ad::Tape& tape, const ad::Tensor& reduced, const ad::Tensor& metadata,
                     FusionTrace* trace = nullptr) const;

  // W for block `block_index` (0-based) from the guide seen by that block.
  ad::Tensor generate_weights(ad::Tape& tape, const ad::Tensor& guide, std::size_t block_index) const;

  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<WeightGenerator>& generators() const { return generators_; }
  std::size_t guide_dim() const { return guide_dim_; }

 private:
  FusionConfig cfg_;
  std::size_t guide_dim_ = 0;
  std::vector<WeightGenerator> generators_;
  std::vector<Block> blocks_;
  nn::Linear image_embed_;  // variant C with ip_concat
  nn::Linear guide_embed_;  // variant C with mp_concat
};

// Image encoder + metadata backbone + one of the fusion strategies + head.
//
// forward() returns per-class scores whose softmax is the prediction:
// logits for image_only / concat / addition / dynamic, and the unnormalized
// log of softmax(h_i) * softmax(h_e) for multiplication.
class FusionModel {
 public:
  FusionModel(const ModelConfig& cfg, std::uint64_t seed);

  FusionModel(const FusionModel&) = delete;
  FusionModel& operator=(const FusionModel&) = delete;

  // features [batch, input_dim], encoded metadata [batch, 6] -> scores [batch, C]
  ad::Tensor forward(ad::Tape& tape, const ad::Tensor& features, const ad::Tensor& encoded,
                     const nn::ForwardContext& ctx = {}, FusionTrace* trace = nullptr) const;

  // Fusion and classification from already extracted z_i [batch, d_i] and
  // z_e [batch, d_e] (z_e ignored by image_only).
  ad::Tensor fuse_and_classify(ad::Tape& tape, const ad::Tensor& image_feature,
                               const ad::Tensor& metadata_feature, FusionTrace* trace = nullptr) const;

  // Prediction vector: softmax(scores) for multiplication, scores otherwise.
  ad::Tensor predict(ad::Tape& tape, const ad::Tensor& features, const ad::Tensor& encoded) const;

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  const nn::ImageEncoder& encoder() const { return encoder_; }
  const nn::MetadataBackbone& metadata_backbone() const { return backbone_; }
  const nn::ChannelAdapters& adapters() const { return adapters_; }
  const DynamicMLP& dynamic_mlp() const { return dynamic_; }
  // Head applied to the image-side feature; the classifier whose rows are
  // compared in the weight-distance analysis.
  const nn::Linear& classifier() const { return head_; }
  const nn::Linear& metadata_head() const { return meta_head_; }
  bool uses_metadata() const { return cfg_.fusion.strategy != Strategy::image_only; }

 private:
  ad::Tensor image_path(ad::Tape& tape, const ad::Tensor& image_feature) const;

  ModelConfig cfg_;
  nn::ParameterStore store_;
  nn::ImageEncoder encoder_;
  nn::MetadataBackbone backbone_;
  nn::ChannelAdapters adapters_;
  DynamicMLP dynamic_;
  std::optional<std::pair<nn::Linear, nn::Linear>> compensation_;
  nn::Linear head_;
  nn::Linear meta_head_;
};

}  // namespace dmlp::fusion
