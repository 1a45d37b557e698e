#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmlp/analysis.hpp"
#include "dmlp/autodiff/gradcheck.hpp"
#include "dmlp/checkpoint.hpp"
#include "dmlp/cli/run_config.hpp"

namespace dmlp::cli {

// DMLP_VERBOSE=1 prints per-epoch progress on stderr; unset or 0 is quiet.
int verbosity();

// train.jsonl, val.jsonl and manifest.json in `out_dir`. Refuses a non-empty
// directory unless `force`.
void cmd_generate(const RunConfig& cfg, const std::filesystem::path& out_dir, bool force);

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  std::filesystem::path resolved_config;
  std::vector<train::EpochRecord> history;  // epochs run by this call
};

// Trains into cfg.output_dir. With `resume`, parameters, optimizer state and
// the epoch counter come from that checkpoint and new metric rows are
// appended; the model and data sections must match it.
TrainOutputs cmd_train(RunConfig cfg, const std::optional<std::filesystem::path>& resume = std::nullopt);

// A checkpoint restored into a model, with the run config it was trained with.
struct LoadedModel {
  RunConfig config;
  std::unique_ptr<fusion::FusionModel> model;
};
LoadedModel load_model(const std::filesystem::path& checkpoint);

// Examples to evaluate or export: the given JSONL file, otherwise the
// validation split of the checkpoint's dataset. Feature width and labels
// are checked against the model.
std::vector<data::LabeledExample> examples_for(const LoadedModel& loaded,
                                               const std::optional<std::filesystem::path>& data_path);

// {"examples", "top<k>"..., "mean_loss"}
nlohmann::json cmd_eval(const std::filesystem::path& checkpoint,
                        const std::optional<std::filesystem::path>& data_path, const std::vector<std::size_t>& ks);

// Writes the report to `out` and returns it.
nlohmann::json cmd_compare(RunConfig cfg, const std::vector<std::string>& strategies, bool equalize_params,
                           const std::filesystem::path& out);

struct ExportOptions {
  std::string what;                       // embeddings | distances | per-class
  analysis::TapPoint tap = analysis::TapPoint::post_fusion;
  std::vector<std::size_t> classes;       // distances: subset, empty = all
};
void cmd_export(const std::filesystem::path& checkpoint, const std::optional<std::filesystem::path>& data_path,
                const ExportOptions& options, const std::filesystem::path& out);

struct GradcheckCase {
  std::string name;
  ad::GradCheckReport report;
  bool passed = false;
};

// Tiny full-model configuration: d = 8, h = 4, N = 2, d_e = 8, C = 5.
fusion::ModelConfig tiny_model_config();
// image_only, concat, addition, multiplication, dynamic-A, dynamic-B, dynamic-C.
std::vector<analysis::StrategyEntry> all_strategy_entries();

// Finite-difference check of every parameter of each configuration on a
// random batch. Widths above 16 are refused. `corrupt_backward` turns on the
// faulty ReLU rule for the duration of the call.
std::vector<GradcheckCase> cmd_gradcheck(const fusion::ModelConfig& base,
                                         const std::vector<analysis::StrategyEntry>& entries,
                                         bool corrupt_backward, std::uint64_t seed, std::size_t batch = 3,
                                         double tolerance = 1e-4);

}  // namespace dmlp::cli
