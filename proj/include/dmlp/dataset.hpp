#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmlp/autodiff/tensor.hpp"
#include "dmlp/geo_encoding.hpp"

namespace dmlp::data {

struct LabeledExample {
  std::vector<double> features;
  geo::MetadataRecord metadata;
  std::size_t label = 0;
};

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> validation;
  std::size_t num_classes = 0;

  std::size_t feature_dim() const;
  // Both splits non-empty, labels < num_classes, finite features of one width,
  // every class present in train. Throws ValidationError.
  void validate() const;
};

// Confusable-genus benchmark: G genera of P classes each. Classes inside a
// genus share a feature distribution up to an offset of size `ambiguity`
// and are told apart by where and when they are observed.
struct SyntheticSpec {
  std::size_t genera = 4;
  std::size_t classes_per_genus = 2;
  std::size_t feature_dim = 16;
  double ambiguity = 0.1;            // delta: norm of the within-genus class offset
  double genus_separation = 5.0;     // scale of the genus feature means
  double geo_spread = 5.0;           // sigma_geo, degrees
  double min_center_separation = 30.0;  // degrees between class centers (6 sigma_geo by default)
  double date_concentration = 4.0;   // larger = tighter seasonal peak
  std::size_t samples_per_class = 300;
  std::size_t val_samples_per_class = 100;
  double missing_metadata_rate = 0.0;
  std::uint64_t seed = 17;

  std::size_t num_classes() const { return genera * classes_per_genus; }
  // Standard deviation (in fractions of a year) of the wrapped date spread.
  double date_spread() const;
  void validate() const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys throw ValidationError.
  static SyntheticSpec from_json(const nlohmann::json& doc);
};

// Per-class generative parameters, exposed for tests.
struct ClassProfile {
  std::size_t genus = 0;
  std::vector<double> feature_mean;
  double center_lat = 0.0;
  double center_lon = 0.0;
  double peak_date = 0.0;
};

std::vector<ClassProfile> synthetic_profiles(const SyntheticSpec& spec);
DatasetSplit generate_synthetic(const SyntheticSpec& spec);

// JSONL, one example per line:
// {"features":[...],"lat":x|null,"lon":x|null,"date":x|"YYYY-MM-DD"|null,"label":k}
std::vector<LabeledExample> load_examples(const std::filesystem::path& path);
// Throws ValidationError with the 1-based line number on malformed input.
std::vector<LabeledExample> parse_examples(std::string_view text);
std::string serialize_examples(const std::vector<LabeledExample>& examples);
void save_examples(const std::filesystem::path& path, const std::vector<LabeledExample>& examples);

// Loads both splits; num_classes = 1 + largest label seen unless given.
DatasetSplit load_dataset(const std::filesystem::path& train_path, const std::filesystem::path& val_path,
                          std::size_t num_classes = 0);

// Hex FNV-1a digest of the serialized examples.
std::string split_hash(const std::vector<LabeledExample>& examples);

// Zero-based day of year over days in that year, e.g. "2021-01-01" -> 0.
double date_fraction(std::string_view iso_date);

// Deterministic per-epoch shuffle: batch index lists covering [0, n), final
// partial batch kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed, std::size_t epoch);
// Same without shuffling.
std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch_size);

struct Batch {
  ad::Tensor features;  // [B, feature_dim]
  ad::Tensor encoded;   // [B, 6]
  std::vector<std::size_t> labels;
  std::vector<bool> missing;
};

Batch make_batch(const std::vector<LabeledExample>& examples, const std::vector<std::size_t>& indices);

}  // namespace dmlp::data
