#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmlp/dataset.hpp"
#include "dmlp/fusion.hpp"
#include "dmlp/training.hpp"

namespace dmlp::cli {

// Either a synthetic benchmark or a pair of JSONL files.
struct DatasetSection {
  std::optional<data::SyntheticSpec> synthetic;
  std::filesystem::path train_path;
  std::filesystem::path val_path;
  std::size_t num_classes = 0;  // files only; 0 = infer from labels

  bool from_files() const { return !synthetic; }
  data::DatasetSplit load() const;
};

// One JSON document:
//   {"seed", "output_dir", "dataset", "encoder", "metadata_backbone",
//    "fusion", "training"}
// Absent keys keep their defaults, unknown keys are rejected. The encoder
// widths and the class count may be left out and are then taken from the
// dataset (see resolve()).
struct RunConfig {
  std::uint64_t seed = 17;
  std::filesystem::path output_dir = "runs/default";
  DatasetSection dataset;
  fusion::ModelConfig model;
  train::TrainConfig training;

  // Which of the dataset-derived fields were given explicitly.
  bool has_input_dim = false;
  bool has_output_dim = false;
  bool has_num_classes = false;

  static RunConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  // Fills dataset-derived widths. Explicit values that disagree with the
  // data throw ValidationError naming the key, expected and found values.
  void resolve(std::size_t feature_dim, std::size_t num_classes);
  // Resolution that needs no data: synthetic specs know their shapes.
  void resolve_from_spec();
  // All nested invariants; throws ValidationError naming the key.
  void validate() const;
};

// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
// possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

// Reads the document (or starts from {} when `path` is empty), applies the
// overrides in order and parses it.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

nlohmann::json model_config_json(const fusion::ModelConfig& cfg);
fusion::ModelConfig model_config_from_json(const nlohmann::json& doc);

}  // namespace dmlp::cli
