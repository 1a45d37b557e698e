#include "dmlp/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>

#include "dmlp/errors.hpp"

namespace dmlp::analysis {

DistanceMatrix classifier_weight_distances(const ad::Tensor& weight, const std::vector<std::size_t>& subset) {
  if (subset.empty()) throw ValidationError("classifier_weight_distances: empty class subset");
  if (weight.rank() != 2) throw ShapeError("classifier weight must be a matrix");
  const std::size_t features = weight.dim(0), classes = weight.dim(1);
  for (auto c : subset)
    if (c >= classes)
      throw ValidationError("classifier_weight_distances: class " + std::to_string(c) + " out of range (" +
                            std::to_string(classes) + " classes)");
  auto w = weight.values();
  DistanceMatrix m;
  m.classes = subset;
  const std::size_t n = subset.size();
  m.values.assign(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      double s = 0.0;
      for (std::size_t f = 0; f < features; ++f) {
        const double d = w[f * classes + subset[a]] - w[f * classes + subset[b]];
        s += d * d;
      }
      m.values[a * n + b] = m.values[b * n + a] = std::sqrt(s);
    }
  return m;
}

DistanceMatrix classifier_weight_distances(const fusion::FusionModel& model, const std::vector<std::size_t>& subset) {
  return classifier_weight_distances(model.classifier().weight(), subset);
}

namespace {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::string distance_csv(const DistanceMatrix& m) {
  std::string out = "class";
  for (auto c : m.classes) out += "," + std::to_string(c);
  out += '\n';
  for (std::size_t a = 0; a < m.size(); ++a) {
    out += std::to_string(m.classes[a]);
    for (std::size_t b = 0; b < m.size(); ++b) out += "," + format_real(m.at(a, b));
    out += '\n';
  }
  return out;
}

DistanceMatrix parse_distance_csv(std::string_view text) {
  std::stringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("distance CSV is empty");
  auto header = split_csv_line(line);
  if (header.empty() || header[0] != "class") throw ValidationError("distance CSV: bad header");
  DistanceMatrix m;
  for (std::size_t i = 1; i < header.size(); ++i) m.classes.push_back(std::stoul(header[i]));
  const std::size_t n = m.classes.size();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != n + 1) throw ValidationError("distance CSV: ragged row");
    for (std::size_t i = 1; i < cells.size(); ++i) m.values.push_back(std::stod(cells[i]));
  }
  if (m.values.size() != n * n) throw ValidationError("distance CSV: expected a square matrix");
  return m;
}

// ---------------------------------------------------------------------------

TapPoint parse_tap_point(std::string_view name) {
  if (name == "pre_fusion") return TapPoint::pre_fusion;
  if (name == "post_fusion") return TapPoint::post_fusion;
  throw ValidationError("unknown tap point \"" + std::string(name) + "\" (expected pre_fusion or post_fusion)");
}

std::vector<EmbeddingRow> export_embeddings(const fusion::FusionModel& model,
                                            const std::vector<data::LabeledExample>& examples, TapPoint tap) {
  std::vector<EmbeddingRow> rows;
  rows.reserve(examples.size());
  for (const auto& idx : data::sequential_batches(examples.size(), 256)) {
    const data::Batch batch = data::make_batch(examples, idx);
    ad::Tape tape = ad::Tape::inference();
    fusion::FusionTrace trace;
    model.forward(tape, batch.features, batch.encoded, {}, &trace);
    const ad::Tensor& feature = tap == TapPoint::pre_fusion ? trace.image_feature : trace.fused;
    const std::size_t width = feature.dim(1);
    auto v = feature.values();
    for (std::size_t r = 0; r < idx.size(); ++r)
      rows.push_back(EmbeddingRow{batch.labels[r], batch.missing[r],
                                  std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(r * width),
                                                      v.begin() + static_cast<std::ptrdiff_t>((r + 1) * width))});
  }
  return rows;
}

std::string embedding_csv(const std::vector<EmbeddingRow>& rows) {
  std::string out = "label,missing_flag";
  const std::size_t width = rows.empty() ? 0 : rows.front().values.size();
  for (std::size_t j = 0; j < width; ++j) out += ",e" + std::to_string(j);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.label) + (r.missing ? ",1" : ",0");
    for (double v : r.values) out += "," + format_real(v);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ClassAccuracy> per_class_accuracy(std::span<const double> scores, std::size_t num_classes,
                                              const std::vector<std::size_t>& labels) {
  if (scores.size() != labels.size() * num_classes) throw ShapeError("per_class_accuracy: score/label mismatch");
  std::vector<ClassAccuracy> table(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) table[c].label = c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw ValidationError("per_class_accuracy: label out of range");
    auto& row = table[labels[i]];
    ++row.total;
    if (train::in_top_k(scores.subspan(i * num_classes, num_classes), labels[i], 1)) ++row.correct;
  }
  for (auto& row : table)
    if (row.total > 0) row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.total);
  return table;
}

std::vector<ClassAccuracy> per_class_accuracy(const fusion::FusionModel& model,
                                              const std::vector<data::LabeledExample>& examples) {
  const std::size_t classes = model.config().fusion.num_classes;
  std::vector<double> scores;
  std::vector<std::size_t> labels;
  for (const auto& idx : data::sequential_batches(examples.size(), 256)) {
    const data::Batch batch = data::make_batch(examples, idx);
    ad::Tape tape = ad::Tape::inference();
    const ad::Tensor s = model.forward(tape, batch.features, batch.encoded);
    scores.insert(scores.end(), s.values().begin(), s.values().end());
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
  }
  return per_class_accuracy(scores, classes, labels);
}

std::string per_class_csv(const std::vector<ClassAccuracy>& table) {
  std::string out = "class,correct,total,top1\n";
  for (const auto& row : table)
    out += std::to_string(row.label) + "," + std::to_string(row.correct) + "," + std::to_string(row.total) + "," +
           (row.accuracy ? format_real(*row.accuracy) : std::string("undefined")) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

StrategyEntry parse_strategy_entry(std::string_view name) {
  StrategyEntry e;
  e.name = std::string(name);
  const auto dash = name.find('-');
  if (dash == std::string_view::npos) {
    e.strategy = fusion::parse_strategy(name);
    return e;
  }
  e.strategy = fusion::parse_strategy(name.substr(0, dash));
  if (e.strategy != fusion::Strategy::dynamic)
    throw ValidationError("strategy \"" + e.name + "\": only dynamic takes a variant suffix");
  e.variant = fusion::parse_variant(name.substr(dash + 1));
  return e;
}

fusion::ModelConfig config_for(const fusion::ModelConfig& base, const StrategyEntry& entry) {
  fusion::ModelConfig cfg = base;
  cfg.fusion.strategy = entry.strategy;
  cfg.fusion.compensation_width = 0;
  if (entry.strategy == fusion::Strategy::dynamic && entry.variant) {
    const bool base_is_c = base.fusion.variant == fusion::Variant::C;
    cfg.fusion.variant = *entry.variant;
    if (*entry.variant == fusion::Variant::C) {
      cfg.fusion.ip_concat = base_is_c ? base.fusion.ip_concat : true;
      cfg.fusion.mp_concat = base_is_c ? base.fusion.mp_concat : true;
    } else {
      cfg.fusion.ip_concat = cfg.fusion.mp_concat = false;
    }
  }
  return cfg;
}

std::size_t count_parameters(const fusion::ModelConfig& cfg) {
  return fusion::FusionModel(cfg, 0).parameters().scalar_count();
}

std::size_t compensation_width_for(const fusion::ModelConfig& baseline, std::size_t target) {
  fusion::ModelConfig cfg = baseline;
  cfg.fusion.compensation_width = 0;
  const std::size_t base = count_parameters(cfg);
  const std::size_t di = cfg.image_dim();
  // Each hidden unit adds fc1 column + bias and fc2 row; fc2's bias is fixed.
  const std::size_t per_unit = 2 * di + 1;
  if (target <= base + di + per_unit / 2) return 0;
  const double exact = static_cast<double>(target - base - di) / static_cast<double>(per_unit);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(exact)));
}

nlohmann::json metrics_json(const train::Metrics& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m.topk) j["top" + std::to_string(k)] = v;
  j["mean_loss"] = m.mean_loss;
  return j;
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json e{{"name", r.entry.name},
                     {"strategy", fusion::to_string(r.config.fusion.strategy)},
                     {"parameters", r.parameter_count},
                     {"failed", r.failed}};
    if (r.config.fusion.strategy == fusion::Strategy::dynamic) {
      e["variant"] = fusion::to_string(r.config.fusion.variant);
      e["ip_concat"] = r.config.fusion.ip_concat;
      e["mp_concat"] = r.config.fusion.mp_concat;
    } else {
      e["compensation_width"] = r.config.fusion.compensation_width;
    }
    if (r.failed) {
      e["error"] = r.error;
    } else {
      e["validation"] = metrics_json(r.final_validation);
      nlohmann::json curve = nlohmann::json::array();
      for (const auto& h : r.history) curve.push_back({{"epoch", h.epoch}, {"val_top1", h.validation.top1()}});
      e["history"] = curve;
    }
    entries.push_back(std::move(e));
  }
  return {{"seed", seed},
          {"train_hash", train_hash},
          {"validation_hash", validation_hash},
          {"equalize_params", equalized},
          {"reference_parameters", reference_parameters},
          {"config", config_echo},
          {"strategies", entries}};
}

ComparisonReport compare_strategies(const data::DatasetSplit& split, const fusion::ModelConfig& base,
                                    const train::TrainConfig& train_cfg, const std::vector<StrategyEntry>& strategies,
                                    bool equalize_params, std::uint64_t seed) {
  if (strategies.empty()) throw ValidationError("compare: no strategies given");
  split.validate();
  ComparisonReport report;
  report.seed = seed;
  report.train_hash = data::split_hash(split.train);
  report.validation_hash = data::split_hash(split.validation);
  report.equalized = equalize_params;

  if (equalize_params) {
    StrategyEntry reference{"dynamic", fusion::Strategy::dynamic, std::nullopt};
    report.reference_parameters = count_parameters(config_for(base, reference));
  }

  for (const auto& entry : strategies) {
    StrategyResult result;
    result.entry = entry;
    try {
      result.config = config_for(base, entry);
      if (equalize_params && entry.strategy != fusion::Strategy::dynamic)
        result.config.fusion.compensation_width = compensation_width_for(result.config, report.reference_parameters);
      fusion::FusionModel model(result.config, seed);
      result.parameter_count = model.parameters().scalar_count();
      result.history = train::train_loop(model, split, train_cfg);
      result.final_validation = result.history.empty() ? train::evaluate(model, split.validation)
                                                       : result.history.back().validation;
    } catch (const std::exception& e) {
      result.failed = true;
      result.error = e.what();
    }
    report.results.push_back(std::move(result));
  }
  return report;
}

}  // namespace dmlp::analysis
