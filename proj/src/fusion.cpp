#include "dmlp/fusion.hpp"

#include <cmath>

#include "dmlp/errors.hpp"

namespace dmlp::fusion {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::image_only: return "image_only";
    case Strategy::concat: return "concat";
    case Strategy::addition: return "addition";
    case Strategy::multiplication: return "multiplication";
    case Strategy::dynamic: return "dynamic";
  }
  return "unknown";
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::A: return "A";
    case Variant::B: return "B";
    case Variant::C: return "C";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::image_only, Strategy::concat, Strategy::addition, Strategy::multiplication,
                 Strategy::dynamic})
    if (to_string(s) == name) return s;
  throw ValidationError("fusion.strategy: unknown strategy \"" + std::string(name) + "\"");
}

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::A, Variant::B, Variant::C})
    if (to_string(v) == name) return v;
  throw ValidationError("fusion.variant: unknown variant \"" + std::string(name) + "\"");
}

void FusionConfig::validate() const {
  if (num_classes < 2) throw ValidationError("fusion.num_classes must be at least 2");
  if (strategy != Strategy::dynamic) return;
  if (d == 0) throw ValidationError("fusion.d must be positive");
  if (h == 0) throw ValidationError("fusion.h must be positive");
  if (h > d) throw ValidationError("fusion.h (" + std::to_string(h) + ") must not exceed fusion.d (" +
                                   std::to_string(d) + ")");
  if (num_blocks < 1) throw ValidationError("fusion.N must be at least 1");
  if (variant == Variant::C && !ip_concat && !mp_concat)
    throw ValidationError("fusion.ip_concat/fusion.mp_concat: variant C needs at least one concatenated input");
  if (variant != Variant::C && (ip_concat || mp_concat))
    throw ValidationError("fusion.ip_concat/fusion.mp_concat: only variant C takes concatenated inputs");
  if (variant == Variant::B && static_depth < 1)
    throw ValidationError("fusion.static_depth must be at least 1 for variant B");
  if (compensation_width != 0)
    throw ValidationError("fusion.compensation_width applies to baseline strategies only");
  if (share_generators) {
    const auto schedule = block_schedule(d, h, num_blocks);
    for (const auto& s : schedule)
      if (s != schedule.front())
        throw ValidationError("fusion.share_generators needs identical block shapes (N = 1 or h = d)");
  }
}

std::vector<BlockShape> block_schedule(std::size_t d, std::size_t h, std::size_t num_blocks) {
  if (num_blocks == 0) throw ValidationError("fusion.N must be at least 1");
  if (num_blocks == 1) return {{d, d}};
  std::vector<BlockShape> schedule;
  schedule.push_back({d, h});
  for (std::size_t i = 0; i + 2 < num_blocks; ++i) schedule.push_back({h, h});
  schedule.push_back({h, d});
  return schedule;
}

void ModelConfig::validate() const {
  encoder.validate();
  metadata.validate();
  fusion.validate();
  if (fusion.strategy == Strategy::dynamic && fusion.d > encoder.output_dim)
    throw ValidationError("fusion.d (" + std::to_string(fusion.d) + ") must not exceed encoder.output_dim (" +
                          std::to_string(encoder.output_dim) + ")");
}

// ---------------------------------------------------------------------------

WeightGenerator::WeightGenerator(nn::ParameterStore& store, const std::string& path, std::size_t guide_dim,
                                 BlockShape shape)
    : shape_(shape), fc_(store, path, guide_dim, shape.in_dim * shape.out_dim) {}

ad::Tensor WeightGenerator::generate(ad::Tape& tape, const ad::Tensor& guide) const {
  if (guide.rank() != 2 || guide.dim(1) != fc_.in_dim())
    throw ShapeError("weight generator: expected guide [batch, " + std::to_string(fc_.in_dim()) + "], got " +
                     ad::shape_string(guide.shape()));
  const ad::Tensor flat = fc_.forward(tape, guide);
  return ad::reshape(tape, flat, {guide.dim(0), shape_.in_dim, shape_.out_dim});
}

ad::Tensor dynamic_projection(ad::Tape& tape, const ad::Tensor& z, const ad::Tensor& weights,
                              const nn::LayerNorm* norm) {
  if (z.rank() != 2 || weights.rank() != 3 || weights.dim(0) != z.dim(0) || weights.dim(1) != z.dim(1))
    throw ShapeError("dynamic projection: feature " + ad::shape_string(z.shape()) + " does not fit weights " +
                     ad::shape_string(weights.shape()));
  const std::size_t batch = z.dim(0), in = z.dim(1), out = weights.dim(2);
  ad::Tensor rows = ad::reshape(tape, z, {batch, 1, in});
  ad::Tensor projected = ad::reshape(tape, ad::matmul(tape, rows, weights), {batch, out});
  ad::Tensor normalized = norm ? norm->forward(tape, projected) : ad::layer_norm(tape, projected);
  return ad::relu(tape, normalized);
}

StaticStack::StaticStack(nn::ParameterStore& store, const std::string& path, std::size_t width,
                         std::size_t depth) {
  for (std::size_t i = 0; i < depth; ++i) {
    const std::string p = path + "." + std::to_string(i);
    linears_.emplace_back(store, p + ".fc", width, width);
    norms_.emplace_back(store, p + ".norm", width);
  }
}

ad::Tensor StaticStack::forward(ad::Tape& tape, const ad::Tensor& x) const {
  ad::Tensor h = x;
  for (std::size_t i = 0; i < linears_.size(); ++i)
    h = ad::relu(tape, norms_[i].forward(tape, linears_[i].forward(tape, h)));
  return h;
}

DynamicMLP::DynamicMLP(nn::ParameterStore& store, const std::string& path, const FusionConfig& cfg,
                       std::size_t guide_dim)
    : cfg_(cfg), guide_dim_(guide_dim) {
  const auto schedule = block_schedule(cfg.d, cfg.h, cfg.num_blocks);
  if (cfg.variant == Variant::C) {
    if (cfg.ip_concat) image_embed_ = nn::Linear(store, path + ".ip_embed", cfg.d + guide_dim, cfg.d);
    if (cfg.mp_concat) guide_embed_ = nn::Linear(store, path + ".mp_embed", cfg.d + guide_dim, guide_dim);
  }
  for (std::size_t n = 0; n < schedule.size(); ++n) {
    const std::string p = path + ".blocks." + std::to_string(n);
    Block block;
    block.shape = schedule[n];
    if (!cfg.share_generators || n == 0)
      generators_.emplace_back(store, p + ".generator", guide_dim, schedule[n]);
    block.generator = generators_.size() - 1;
    block.norm = nn::LayerNorm(store, p + ".norm", schedule[n].out_dim);
    if (cfg.variant == Variant::B) {
      block.image_stack = StaticStack(store, p + ".image_stack", schedule[n].in_dim, cfg.static_depth);
      block.guide_stack = StaticStack(store, p + ".guide_stack", guide_dim, cfg.static_depth);
    }
    blocks_.push_back(std::move(block));
  }
}

ad::Tensor DynamicMLP::generate_weights(ad::Tape& tape, const ad::Tensor& guide, std::size_t block_index) const {
  if (block_index >= blocks_.size())
    throw std::out_of_range("dynamic MLP has " + std::to_string(blocks_.size()) + " blocks, asked for " +
                            std::to_string(block_index));
  return generators_[blocks_[block_index].generator].generate(tape, guide);
}

ad::Tensor DynamicMLP::forward(ad::Tape& tape, const ad::Tensor& reduced, const ad::Tensor& metadata,
                               FusionTrace* trace) const {
  if (reduced.rank() != 2 || reduced.dim(1) != cfg_.d)
    throw ShapeError("dynamic MLP: expected reduced image feature [batch, " + std::to_string(cfg_.d) + "], got " +
                     ad::shape_string(reduced.shape()));
  if (metadata.rank() != 2 || metadata.dim(1) != guide_dim_ || metadata.dim(0) != reduced.dim(0))
    throw ShapeError("dynamic MLP: expected metadata feature [" + std::to_string(reduced.dim(0)) + ", " +
                     std::to_string(guide_dim_) + "], got " + ad::shape_string(metadata.shape()));

  ad::Tensor z = reduced;
  ad::Tensor guide = metadata;
  if (cfg_.variant == Variant::C) {
    const ad::Tensor joint = ad::concat_lastdim(tape, reduced, metadata);
    if (cfg_.ip_concat) z = ad::relu(tape, image_embed_.forward(tape, joint));
    if (cfg_.mp_concat) guide = ad::relu(tape, guide_embed_.forward(tape, joint));
  }
  if (trace) trace->guide = guide;

  for (std::size_t n = 0; n < blocks_.size(); ++n) {
    const Block& block = blocks_[n];
    ad::Tensor block_in = z;
    ad::Tensor block_guide = guide;
    if (cfg_.variant == Variant::B) {
      block_in = block.image_stack.forward(tape, z);
      block_guide = block.guide_stack.forward(tape, guide);
    }
    const ad::Tensor weights = generators_[block.generator].generate(tape, block_guide);
    z = dynamic_projection(tape, block_in, weights, &block.norm);
    if (trace) {
      trace->block_inputs.push_back(block_in);
      trace->weights.push_back(weights);
      trace->block_outputs.push_back(z);
    }
  }
  return z;
}

// ---------------------------------------------------------------------------

FusionModel::FusionModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), store_(seed) {
  cfg.validate();
  const auto& f = cfg.fusion;
  const std::size_t di = cfg.image_dim();
  const std::size_t de = cfg.metadata.embed_dim;
  const std::size_t classes = f.num_classes;

  encoder_ = nn::ImageEncoder(store_, "encoder", cfg.encoder);
  if (uses_metadata()) backbone_ = nn::MetadataBackbone(store_, "metadata_backbone", cfg.metadata);

  if (f.strategy != Strategy::dynamic && f.compensation_width > 0)
    compensation_.emplace(nn::Linear(store_, "compensation.fc1", di, f.compensation_width),
                          nn::Linear(store_, "compensation.fc2", f.compensation_width, di));

  switch (f.strategy) {
    case Strategy::image_only:
      head_ = nn::Linear(store_, "head", di, classes);
      break;
    case Strategy::concat:
      head_ = nn::Linear(store_, "head", di + de, classes);
      break;
    case Strategy::addition:
    case Strategy::multiplication:
      head_ = nn::Linear(store_, "head", di, classes);
      meta_head_ = nn::Linear(store_, "metadata_head", de, classes);
      break;
    case Strategy::dynamic:
      adapters_ = nn::ChannelAdapters(store_, "fusion", di, f.d);
      dynamic_ = DynamicMLP(store_, "fusion.dynamic", f, de);
      head_ = nn::Linear(store_, "head", di, classes);
      break;
  }
}

ad::Tensor FusionModel::image_path(ad::Tape& tape, const ad::Tensor& image_feature) const {
  if (!compensation_) return image_feature;
  const auto& [fc1, fc2] = *compensation_;
  return ad::add(tape, image_feature, fc2.forward(tape, ad::relu(tape, fc1.forward(tape, image_feature))));
}

ad::Tensor FusionModel::fuse_and_classify(ad::Tape& tape, const ad::Tensor& image_feature,
                                          const ad::Tensor& metadata_feature, FusionTrace* trace) const {
  ad::Tensor scores;
  ad::Tensor fused;
  switch (cfg_.fusion.strategy) {
    case Strategy::image_only:
      fused = image_path(tape, image_feature);
      scores = head_.forward(tape, fused);
      break;
    case Strategy::concat:
      fused = ad::concat_lastdim(tape, image_path(tape, image_feature), metadata_feature);
      scores = head_.forward(tape, fused);
      break;
    case Strategy::addition:
      fused = image_path(tape, image_feature);
      scores = ad::add(tape, head_.forward(tape, fused), meta_head_.forward(tape, metadata_feature));
      break;
    case Strategy::multiplication:
      // log softmax(a) + log softmax(b): its softmax is the renormalized product.
      fused = image_path(tape, image_feature);
      scores = ad::add(tape, ad::log_softmax(tape, head_.forward(tape, fused)),
                       ad::log_softmax(tape, meta_head_.forward(tape, metadata_feature)));
      break;
    case Strategy::dynamic: {
      const ad::Tensor reduced = adapters_.reduce(tape, image_feature);
      const ad::Tensor refined = dynamic_.forward(tape, reduced, metadata_feature, trace);
      fused = ad::add(tape, image_feature, adapters_.increase(tape, refined));
      scores = head_.forward(tape, fused);
      if (trace) trace->reduced = reduced;
      break;
    }
  }
  if (trace) {
    trace->fused = fused;
    trace->scores = scores;
  }
  return scores;
}

ad::Tensor FusionModel::forward(ad::Tape& tape, const ad::Tensor& features, const ad::Tensor& encoded,
                                const nn::ForwardContext& ctx, FusionTrace* trace) const {
  if (features.rank() != 2 || encoded.rank() != 2 || features.dim(0) != encoded.dim(0))
    throw ShapeError("model: features " + ad::shape_string(features.shape()) + " and metadata " +
                     ad::shape_string(encoded.shape()) + " disagree on batch size");
  const ad::Tensor image_feature = encoder_.forward(tape, features);
  ad::Tensor metadata_feature;
  if (uses_metadata()) metadata_feature = backbone_.forward(tape, encoded, ctx);
  if (trace) {
    trace->image_feature = image_feature;
    trace->metadata_feature = metadata_feature;
  }
  return fuse_and_classify(tape, image_feature, metadata_feature, trace);
}

ad::Tensor FusionModel::predict(ad::Tape& tape, const ad::Tensor& features, const ad::Tensor& encoded) const {
  const ad::Tensor scores = forward(tape, features, encoded);
  if (cfg_.fusion.strategy == Strategy::multiplication) return ad::softmax(tape, scores);
  return scores;
}

}  // namespace dmlp::fusion
