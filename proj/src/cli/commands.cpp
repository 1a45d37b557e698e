#include "dmlp/cli/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dmlp/autodiff/ops.hpp"
#include "dmlp/errors.hpp"

namespace dmlp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int verbosity() {
  const char* v = std::getenv("DMLP_VERBOSE");
  return v ? std::atoi(v) : 0;
}

namespace {

void prepare_output_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir, ec)) throw ValidationError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir, ec) && !force)
      throw ValidationError(dir.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create " + dir.string() + ": " + ec.message());
}

data::DatasetSplit load_resolved(RunConfig& cfg) {
  cfg.resolve_from_spec();
  if (cfg.dataset.synthetic) cfg.validate();  // before generating anything
  data::DatasetSplit split = cfg.dataset.load();
  cfg.resolve(split.feature_dim(), split.num_classes);
  cfg.validate();
  return split;
}

// Resolved config without the fields a resumed run may change.
json resumable_part(json doc) {
  doc["training"].erase("epochs");
  doc.erase("output_dir");
  return doc;
}

}  // namespace

void cmd_generate(const RunConfig& cfg, const fs::path& out_dir, bool force) {
  if (!cfg.dataset.synthetic) throw ValidationError("generate needs a dataset.synthetic section");
  const data::SyntheticSpec& spec = *cfg.dataset.synthetic;
  spec.validate();
  prepare_output_dir(out_dir, force);
  const data::DatasetSplit split = data::generate_synthetic(spec);
  data::save_examples(out_dir / "train.jsonl", split.train);
  data::save_examples(out_dir / "val.jsonl", split.validation);
  io::write_json_file(out_dir / "manifest.json",
                      {{"spec", spec.to_json()},
                       {"seed", spec.seed},
                       {"num_classes", split.num_classes},
                       {"train_examples", split.train.size()},
                       {"val_examples", split.validation.size()},
                       {"train_hash", data::split_hash(split.train)},
                       {"val_hash", data::split_hash(split.validation)}});
}

TrainOutputs cmd_train(RunConfig cfg, const std::optional<fs::path>& resume) {
  const data::DatasetSplit split = load_resolved(cfg);
  fusion::FusionModel model(cfg.model, cfg.seed);

  train::TrainState state;
  if (resume) {
    const io::Checkpoint ck = io::read_checkpoint(*resume);
    if (resumable_part(ck.config) != resumable_part(cfg.to_json()))
      throw ValidationError("resume: " + resume->string() +
                            " was trained with a different configuration (only training.epochs may change)");
    model.parameters().load_json(ck.parameters);
    state.epochs_completed = ck.epochs_completed;
    state.optimizer.emplace(cfg.training.momentum, cfg.training.weight_decay);
    state.optimizer->load_state(ck.optimizer, model.parameters());
  }

  fs::create_directories(cfg.output_dir);
  TrainOutputs out;
  out.checkpoint = cfg.output_dir / "checkpoint.json";
  out.metrics = cfg.output_dir / "metrics.csv";
  out.resolved_config = cfg.output_dir / "config.resolved.json";
  io::write_json_file(out.resolved_config, cfg.to_json());

  // Keep rows up to the resumed epoch so numbering stays continuous.
  std::string kept = train::metrics_csv_header();
  if (resume && fs::exists(out.metrics)) {
    std::istringstream in(io::read_text_file(out.metrics));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoul(line.substr(0, line.find(','))) <= state.epochs_completed) kept += line + "\n";
    }
  }
  std::ofstream csv(out.metrics, std::ios::binary | std::ios::trunc);
  if (!csv) throw ValidationError("cannot write " + out.metrics.string());
  csv << kept << std::flush;

  const bool verbose = verbosity() > 0;
  out.history = train::train_loop(model, split, cfg.training, state, [&](const train::EpochRecord& r) {
    csv << train::metrics_csv_rows(r) << std::flush;
    if (verbose)
      std::cerr << "epoch " << r.epoch << "/" << cfg.training.epochs << " train_top1 " << r.train.top1()
                << " val_top1 " << r.validation.top1() << " loss " << r.train.mean_loss << "\n";
  });

  io::Checkpoint ck;
  ck.config = cfg.to_json();
  ck.epochs_completed = state.epochs_completed;
  ck.parameters = model.parameters().to_json();
  ck.optimizer = state.optimizer->state_json(model.parameters());
  io::write_checkpoint(out.checkpoint, ck);
  return out;
}

LoadedModel load_model(const fs::path& checkpoint) {
  const io::Checkpoint ck = io::read_checkpoint(checkpoint);
  LoadedModel loaded;
  loaded.config = RunConfig::from_json(ck.config);
  loaded.config.has_input_dim = loaded.config.has_output_dim = loaded.config.has_num_classes = true;
  loaded.config.validate();
  loaded.model = std::make_unique<fusion::FusionModel>(loaded.config.model, loaded.config.seed);
  loaded.model->parameters().load_json(ck.parameters);
  return loaded;
}

std::vector<data::LabeledExample> examples_for(const LoadedModel& loaded, const std::optional<fs::path>& data_path) {
  std::vector<data::LabeledExample> examples =
      data_path ? data::load_examples(*data_path) : loaded.config.dataset.load().validation;
  const auto& m = loaded.config.model;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].features.size() != m.encoder.input_dim)
      throw ValidationError("example " + std::to_string(i + 1) + ": feature width expected " +
                            std::to_string(m.encoder.input_dim) + " (checkpoint encoder.input_dim), found " +
                            std::to_string(examples[i].features.size()));
    if (examples[i].label >= m.fusion.num_classes)
      throw ValidationError("example " + std::to_string(i + 1) + ": label expected below " +
                            std::to_string(m.fusion.num_classes) + " (checkpoint fusion.num_classes), found " +
                            std::to_string(examples[i].label));
  }
  if (examples.empty()) throw ValidationError("no examples to evaluate");
  return examples;
}

json cmd_eval(const fs::path& checkpoint, const std::optional<fs::path>& data_path, const std::vector<std::size_t>& ks) {
  if (ks.empty()) throw ValidationError("--topk needs at least one k");
  for (auto k : ks)
    if (k == 0) throw ValidationError("--topk values must be positive");
  const LoadedModel loaded = load_model(checkpoint);
  const auto examples = examples_for(loaded, data_path);
  const train::Metrics m = train::evaluate(*loaded.model, examples, ks);
  json doc = analysis::metrics_json(m);
  doc["examples"] = examples.size();
  return doc;
}

json cmd_compare(RunConfig cfg, const std::vector<std::string>& strategies, bool equalize_params,
                 const fs::path& out) {
  std::vector<analysis::StrategyEntry> entries;
  for (const auto& s : strategies) entries.push_back(analysis::parse_strategy_entry(s));
  if (entries.empty()) throw ValidationError("--strategies is empty");
  const data::DatasetSplit split = load_resolved(cfg);
  for (const auto& e : entries) analysis::config_for(cfg.model, e).validate();
  analysis::ComparisonReport report =
      analysis::compare_strategies(split, cfg.model, cfg.training, entries, equalize_params, cfg.seed);
  report.config_echo = cfg.to_json();
  const json doc = report.to_json();
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  io::write_json_file(out, doc);
  return doc;
}

void cmd_export(const fs::path& checkpoint, const std::optional<fs::path>& data_path, const ExportOptions& options,
                const fs::path& out) {
  if (options.what != "embeddings" && options.what != "distances" && options.what != "per-class")
    throw ValidationError("--what must be embeddings, distances or per-class (got \"" + options.what + "\")");
  const LoadedModel loaded = load_model(checkpoint);
  std::string text;
  if (options.what == "distances") {
    std::vector<std::size_t> subset = options.classes;
    if (subset.empty())
      for (std::size_t c = 0; c < loaded.config.model.fusion.num_classes; ++c) subset.push_back(c);
    text = analysis::distance_csv(analysis::classifier_weight_distances(*loaded.model, subset));
  } else {
    const auto examples = examples_for(loaded, data_path);
    if (options.what == "embeddings")
      text = analysis::embedding_csv(analysis::export_embeddings(*loaded.model, examples, options.tap));
    else
      text = analysis::per_class_csv(analysis::per_class_accuracy(*loaded.model, examples));
  }
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  io::write_text_file(out, text);
}

// ---------------------------------------------------------------------------

fusion::ModelConfig tiny_model_config() {
  fusion::ModelConfig cfg;
  cfg.encoder.mode = nn::ImageEncoderConfig::Mode::identity;
  cfg.encoder.input_dim = cfg.encoder.output_dim = 8;
  cfg.metadata.embed_dim = 8;
  cfg.metadata.residual_blocks = 2;
  cfg.fusion.d = 8;
  cfg.fusion.h = 4;
  cfg.fusion.num_blocks = 2;
  cfg.fusion.num_classes = 5;
  return cfg;
}

std::vector<analysis::StrategyEntry> all_strategy_entries() {
  std::vector<analysis::StrategyEntry> out;
  for (const char* name :
       {"image_only", "concat", "addition", "multiplication", "dynamic-A", "dynamic-B", "dynamic-C"})
    out.push_back(analysis::parse_strategy_entry(name));
  return out;
}

namespace {

struct CorruptBackwardGuard {
  explicit CorruptBackwardGuard(bool on) : previous(ad::debug::corrupt_relu_backward()) {
    ad::debug::set_corrupt_relu_backward(on);
  }
  ~CorruptBackwardGuard() { ad::debug::set_corrupt_relu_backward(previous); }
  bool previous;
};

std::vector<data::LabeledExample> random_examples(std::size_t n, std::size_t width, std::size_t classes,
                                                  std::uint64_t seed) {
  Rng rng = stream(seed, "gradcheck/batch");
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  std::uniform_int_distribution<std::size_t> label(0, classes - 1);
  std::vector<data::LabeledExample> out(n);
  for (auto& x : out) {
    x.features.resize(width);
    for (auto& f : x.features) f = normal(rng);
    x.metadata.lat = 170.0 * unit(rng) - 85.0;
    x.metadata.lon = 350.0 * unit(rng) - 175.0;
    x.metadata.date = 0.99 * unit(rng);
    x.label = label(rng);
  }
  return out;
}

}  // namespace

std::vector<GradcheckCase> cmd_gradcheck(const fusion::ModelConfig& base,
                                         const std::vector<analysis::StrategyEntry>& entries, bool corrupt_backward,
                                         std::uint64_t seed, std::size_t batch, double tolerance) {
  constexpr std::size_t kMaxWidth = 16;
  if (base.fusion.d > kMaxWidth) throw ValidationError("gradcheck: fusion.d must be at most 16");
  if (base.image_dim() > kMaxWidth) throw ValidationError("gradcheck: encoder.output_dim must be at most 16");
  if (base.metadata.embed_dim > kMaxWidth) throw ValidationError("gradcheck: metadata_backbone.embed_dim must be at most 16");
  if (batch == 0) throw ValidationError("gradcheck: batch must be positive");

  const auto examples = random_examples(batch, base.encoder.input_dim, base.fusion.num_classes, seed);
  std::vector<std::size_t> all(batch);
  for (std::size_t i = 0; i < batch; ++i) all[i] = i;
  const data::Batch b = data::make_batch(examples, all);

  CorruptBackwardGuard guard(corrupt_backward);
  std::vector<GradcheckCase> results;
  for (const auto& entry : entries) {
    fusion::ModelConfig cfg = analysis::config_for(base, entry);
    cfg.metadata.dropout_rate = 0.0;
    fusion::FusionModel model(cfg, seed);
    auto loss = [&](ad::Tape& tape) {
      const ad::Tensor scores = model.forward(tape, b.features, b.encoded);
      return train::smoothed_cross_entropy(tape, scores, b.labels, 0.1);
    };
    GradcheckCase c;
    c.name = entry.name;
    c.report = ad::finite_difference_check(loss, model.parameters().entries(), 1e-6);
    c.passed = c.report.max_relative_error <= tolerance;
    results.push_back(std::move(c));
  }
  return results;
}

}  // namespace dmlp::cli
