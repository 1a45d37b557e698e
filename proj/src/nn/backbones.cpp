#include "dmlp/nn/backbones.hpp"

#include "dmlp/errors.hpp"
#include "dmlp/geo_encoding.hpp"

namespace dmlp::nn {

void ImageEncoderConfig::validate() const {
  if (input_dim == 0) throw ValidationError("encoder.input_dim must be positive");
  if (output_dim == 0) throw ValidationError("encoder.output_dim must be positive");
  if (mode == Mode::identity) {
    if (input_dim != output_dim)
      throw ValidationError("encoder.output_dim must equal encoder.input_dim in identity mode");
    if (!hidden.empty()) throw ValidationError("encoder.hidden must be empty in identity mode");
  }
  for (auto w : hidden)
    if (w == 0) throw ValidationError("encoder.hidden widths must be positive");
}

void MetadataBackboneConfig::validate() const {
  if (embed_dim == 0) throw ValidationError("metadata_backbone.embed_dim must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ValidationError("metadata_backbone.dropout_rate must be in [0, 1)");
}

ImageEncoder::ImageEncoder(ParameterStore& store, const std::string& path, const ImageEncoderConfig& cfg)
    : cfg_(cfg) {
  cfg.validate();
  if (cfg.mode == ImageEncoderConfig::Mode::identity) return;
  std::size_t in = cfg.input_dim;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    layers_.emplace_back(store, path + ".layers." + std::to_string(i), in, cfg.hidden[i]);
    in = cfg.hidden[i];
  }
  layers_.emplace_back(store, path + ".layers." + std::to_string(cfg.hidden.size()), in, cfg.output_dim);
}

ad::Tensor ImageEncoder::forward(ad::Tape& tape, const ad::Tensor& raw) const {
  if (raw.rank() != 2 || raw.dim(1) != cfg_.input_dim)
    throw ShapeError("image encoder: expected features [batch, " + std::to_string(cfg_.input_dim) +
                     "], got " + ad::shape_string(raw.shape()));
  if (cfg_.mode == ImageEncoderConfig::Mode::identity) return raw;
  ad::Tensor h = raw;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = ad::relu(tape, layers_[i].forward(tape, h));
  return layers_.back().forward(tape, h);
}

MetadataBackbone::MetadataBackbone(ParameterStore& store, const std::string& path,
                                   const MetadataBackboneConfig& cfg)
    : cfg_(cfg) {
  cfg.validate();
  input_ = Linear(store, path + ".input", geo::kEncodedDim, cfg.embed_dim);
  for (std::size_t i = 0; i < cfg.residual_blocks; ++i) {
    const std::string p = path + ".blocks." + std::to_string(i);
    blocks_.push_back(Block{Linear(store, p + ".fc1", cfg.embed_dim, cfg.embed_dim),
                            Linear(store, p + ".fc2", cfg.embed_dim, cfg.embed_dim)});
  }
}

ad::Tensor MetadataBackbone::forward(ad::Tape& tape, const ad::Tensor& encoded,
                                     const ForwardContext& ctx) const {
  if (encoded.rank() != 2 || encoded.dim(1) != geo::kEncodedDim)
    throw ShapeError("metadata backbone: expected encoding [batch, 6], got " + ad::shape_string(encoded.shape()));
  ad::Tensor u = ad::relu(tape, input_.forward(tape, encoded));
  for (const auto& block : blocks_) {
    ad::Tensor h = ad::relu(tape, block.fc1.forward(tape, u));
    h = dropout(tape, h, cfg_.dropout_rate, ctx);
    h = ad::relu(tape, block.fc2.forward(tape, h));
    u = ad::add(tape, u, h);
  }
  return u;
}

ChannelAdapters::ChannelAdapters(ParameterStore& store, const std::string& path, std::size_t image_dim,
                                 std::size_t reduced_dim) {
  if (reduced_dim == 0) throw ValidationError("fusion.d must be positive");
  if (reduced_dim > image_dim)
    throw ValidationError("fusion.d (" + std::to_string(reduced_dim) + ") must not exceed the image feature width d_i (" +
                          std::to_string(image_dim) + ")");
  reduce_ = Linear(store, path + ".reduce", image_dim, reduced_dim);
  increase_ = Linear(store, path + ".increase", reduced_dim, image_dim);
}

}  // namespace dmlp::nn
