#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmlp/dataset.hpp"
#include "dmlp/fusion.hpp"
#include "dmlp/training.hpp"

namespace dmlp::analysis {

// Pairwise L2 distances between classifier weight vectors (one per class).
struct DistanceMatrix {
  std::vector<std::size_t> classes;
  std::vector<double> values;  // row-major |classes| x |classes|

  std::size_t size() const { return classes.size(); }
  double at(std::size_t a, std::size_t b) const { return values[a * classes.size() + b]; }
};

// `weight` is a [features, classes] head matrix; the vector of class c is
// column c. Throws ValidationError for an empty subset or unknown class ids.
DistanceMatrix classifier_weight_distances(const ad::Tensor& weight, const std::vector<std::size_t>& subset);
DistanceMatrix classifier_weight_distances(const fusion::FusionModel& model, const std::vector<std::size_t>& subset);

// Header row and column of class ids.
std::string distance_csv(const DistanceMatrix& m);
DistanceMatrix parse_distance_csv(std::string_view text);

enum class TapPoint { pre_fusion, post_fusion };
TapPoint parse_tap_point(std::string_view name);

struct EmbeddingRow {
  std::size_t label = 0;
  bool missing = false;
  std::vector<double> values;
};

// pre_fusion: z_i. post_fusion: the feature entering the (image) head, i.e.
// the skip-connected z_i + increase(...) for the dynamic strategy, the
// concatenation for concat and z_i otherwise.
std::vector<EmbeddingRow> export_embeddings(const fusion::FusionModel& model,
                                            const std::vector<data::LabeledExample>& examples, TapPoint tap);
// label,missing_flag,e0..e{D-1}
std::string embedding_csv(const std::vector<EmbeddingRow>& rows);

struct ClassAccuracy {
  std::size_t label = 0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::optional<double> accuracy;  // undefined when the class has no examples
};

std::vector<ClassAccuracy> per_class_accuracy(const fusion::FusionModel& model,
                                              const std::vector<data::LabeledExample>& examples);
// Same from precomputed per-example scores ([n, C] row-major).
std::vector<ClassAccuracy> per_class_accuracy(std::span<const double> scores, std::size_t num_classes,
                                              const std::vector<std::size_t>& labels);
std::string per_class_csv(const std::vector<ClassAccuracy>& table);

// One strategy of a comparison, e.g. "concat" or "dynamic-B".
struct StrategyEntry {
  std::string name;
  fusion::Strategy strategy = fusion::Strategy::image_only;
  std::optional<fusion::Variant> variant;
};

StrategyEntry parse_strategy_entry(std::string_view name);
// Applies an entry to a base model config (variant C keeps the base
// ip/mp flags when the base is C, otherwise turns both on).
fusion::ModelConfig config_for(const fusion::ModelConfig& base, const StrategyEntry& entry);

std::size_t count_parameters(const fusion::ModelConfig& cfg);
// Hidden width of the image-path compensation MLP that brings a baseline's
// parameter count closest to `target` (0 when already at or above it).
std::size_t compensation_width_for(const fusion::ModelConfig& baseline, std::size_t target);

struct StrategyResult {
  StrategyEntry entry;
  fusion::ModelConfig config;
  std::size_t parameter_count = 0;
  bool failed = false;
  std::string error;
  train::Metrics final_validation;
  std::vector<train::EpochRecord> history;
};

struct ComparisonReport {
  std::uint64_t seed = 0;
  std::string train_hash;
  std::string validation_hash;
  bool equalized = false;
  std::size_t reference_parameters = 0;  // dynamic parameter count used for equalization
  nlohmann::json config_echo;
  std::vector<StrategyResult> results;

  nlohmann::json to_json() const;
};

// Trains each strategy from the same seed on the same split. A failing run
// is marked failed; the others still run.
ComparisonReport compare_strategies(const data::DatasetSplit& split, const fusion::ModelConfig& base,
                                    const train::TrainConfig& train_cfg, const std::vector<StrategyEntry>& strategies,
                                    bool equalize_params, std::uint64_t seed);

nlohmann::json metrics_json(const train::Metrics& m);

}  // namespace dmlp::analysis
