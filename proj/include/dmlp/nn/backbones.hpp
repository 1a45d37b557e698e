#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dmlp/nn/layers.hpp"

namespace dmlp::nn {

// Desk-scale stand-in for the CNN + global-average-pool image path.
struct ImageEncoderConfig {
  enum class Mode { identity, mlp };
  Mode mode = Mode::identity;
  std::size_t input_dim = 64;
  std::size_t output_dim = 64;  // d_i
  std::vector<std::size_t> hidden;

  void validate() const;
};

struct MetadataBackboneConfig {
  std::size_t embed_dim = 256;       // d_e
  std::size_t residual_blocks = 4;
  double dropout_rate = 0.0;

  void validate() const;
};

class ImageEncoder {
 public:
  ImageEncoder() = default;
  ImageEncoder(ParameterStore& store, const std::string& path, const ImageEncoderConfig& cfg);

  // [batch, input_dim] -> [batch, output_dim]
  ad::Tensor forward(ad::Tape& tape, const ad::Tensor& raw) const;

  const std::vector<Linear>& layers() const { return layers_; }

 private:
  ImageEncoderConfig cfg_;
  std::vector<Linear> layers_;
};

// Residual MLP location encoder: relu(Linear 6->d_e), then R blocks
// u + relu(fc2(relu(fc1(u)))).
class MetadataBackbone {
 public:
  struct Block {
    Linear fc1;
    Linear fc2;
  };

  MetadataBackbone() = default;
  MetadataBackbone(ParameterStore& store, const std::string& path, const MetadataBackboneConfig& cfg);

  // [batch, 6] -> [batch, d_e]
  ad::Tensor forward(ad::Tape& tape, const ad::Tensor& encoded, const ForwardContext& ctx = {}) const;

  const Linear& input() const { return input_; }
  const std::vector<Block>& blocks() const { return blocks_; }

 private:
  MetadataBackboneConfig cfg_;
  Linear input_;
  std::vector<Block> blocks_;
};

// Learnable d_i -> d reduction and d -> d_i increase around the dynamic blocks.
class ChannelAdapters {
 public:
  ChannelAdapters() = default;
  // Throws ValidationError when d > d_i.
  ChannelAdapters(ParameterStore& store, const std::string& path, std::size_t image_dim,
                  std::size_t reduced_dim);

  ad::Tensor reduce(ad::Tape& tape, const ad::Tensor& z) const { return reduce_.forward(tape, z); }
  ad::Tensor increase(ad::Tape& tape, const ad::Tensor& z) const { return increase_.forward(tape, z); }

  const Linear& reduction() const { return reduce_; }
  const Linear& increasing() const { return increase_; }

 private:
  Linear reduce_;
  Linear increase_;
};

}  // namespace dmlp::nn
