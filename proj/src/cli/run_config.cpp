#include "dmlp/cli/run_config.hpp"

#include <set>

#include "dmlp/checkpoint.hpp"
#include "dmlp/errors.hpp"

namespace dmlp::cli {

using nlohmann::json;

namespace {

void check_object(const json& j, const std::string& section) {
  if (!j.is_object()) throw ValidationError(section + ": expected a JSON object");
}

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  check_object(j, section);
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ValidationError("unknown config key \"" + (section.empty() ? key : section + "." + key) + "\"");
}

std::string qualified(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

void read_size(const json& j, const std::string& section, const std::string& key, std::size_t& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_unsigned())
    throw ValidationError(qualified(section, key) + ": expected a non-negative integer");
  out = v.get<std::size_t>();
}

void read_real(const json& j, const std::string& section, const std::string& key, double& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number()) throw ValidationError(qualified(section, key) + ": expected a number");
  out = v.get<double>();
}

void read_bool(const json& j, const std::string& section, const std::string& key, bool& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw ValidationError(qualified(section, key) + ": expected true or false");
  out = v.get<bool>();
}

std::string read_string(const json& j, const std::string& section, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_string()) throw ValidationError(qualified(section, key) + ": expected a string");
  return v.get<std::string>();
}

nn::ImageEncoderConfig encoder_from_json(const json& j, bool& has_in, bool& has_out) {
  check_keys(j, "encoder", {"mode", "input_dim", "output_dim", "hidden"});
  nn::ImageEncoderConfig c;
  if (j.contains("mode")) {
    const std::string mode = read_string(j, "encoder", "mode");
    if (mode == "identity")
      c.mode = nn::ImageEncoderConfig::Mode::identity;
    else if (mode == "mlp")
      c.mode = nn::ImageEncoderConfig::Mode::mlp;
    else
      throw ValidationError("encoder.mode: unknown mode \"" + mode + "\" (expected identity or mlp)");
  }
  has_in = j.contains("input_dim");
  has_out = j.contains("output_dim");
  read_size(j, "encoder", "input_dim", c.input_dim);
  read_size(j, "encoder", "output_dim", c.output_dim);
  if (j.contains("hidden")) {
    const json& h = j.at("hidden");
    if (!h.is_array()) throw ValidationError("encoder.hidden: expected an array of widths");
    for (const auto& w : h) {
      if (!w.is_number_unsigned()) throw ValidationError("encoder.hidden: expected non-negative integers");
      c.hidden.push_back(w.get<std::size_t>());
    }
  }
  return c;
}

json encoder_to_json(const nn::ImageEncoderConfig& c) {
  return {{"mode", c.mode == nn::ImageEncoderConfig::Mode::identity ? "identity" : "mlp"},
          {"input_dim", c.input_dim},
          {"output_dim", c.output_dim},
          {"hidden", c.hidden}};
}

nn::MetadataBackboneConfig backbone_from_json(const json& j) {
  check_keys(j, "metadata_backbone", {"embed_dim", "residual_blocks", "dropout_rate"});
  nn::MetadataBackboneConfig c;
  read_size(j, "metadata_backbone", "embed_dim", c.embed_dim);
  read_size(j, "metadata_backbone", "residual_blocks", c.residual_blocks);
  read_real(j, "metadata_backbone", "dropout_rate", c.dropout_rate);
  return c;
}

json backbone_to_json(const nn::MetadataBackboneConfig& c) {
  return {{"embed_dim", c.embed_dim}, {"residual_blocks", c.residual_blocks}, {"dropout_rate", c.dropout_rate}};
}

fusion::FusionConfig fusion_from_json(const json& j, bool& has_classes) {
  check_keys(j, "fusion",
             {"strategy", "variant", "d", "h", "N", "ip_concat", "mp_concat", "num_classes", "static_depth",
              "share_generators", "compensation_width"});
  fusion::FusionConfig c;
  if (j.contains("strategy")) c.strategy = fusion::parse_strategy(read_string(j, "fusion", "strategy"));
  if (j.contains("variant")) c.variant = fusion::parse_variant(read_string(j, "fusion", "variant"));
  // Concatenation flags follow the variant unless given.
  c.ip_concat = c.mp_concat = c.variant == fusion::Variant::C;
  read_size(j, "fusion", "d", c.d);
  read_size(j, "fusion", "h", c.h);
  read_size(j, "fusion", "N", c.num_blocks);
  read_bool(j, "fusion", "ip_concat", c.ip_concat);
  read_bool(j, "fusion", "mp_concat", c.mp_concat);
  has_classes = j.contains("num_classes");
  read_size(j, "fusion", "num_classes", c.num_classes);
  read_size(j, "fusion", "static_depth", c.static_depth);
  read_bool(j, "fusion", "share_generators", c.share_generators);
  read_size(j, "fusion", "compensation_width", c.compensation_width);
  return c;
}

json fusion_to_json(const fusion::FusionConfig& c) {
  return {{"strategy", std::string(fusion::to_string(c.strategy))},
          {"variant", std::string(fusion::to_string(c.variant))},
          {"d", c.d},
          {"h", c.h},
          {"N", c.num_blocks},
          {"ip_concat", c.ip_concat},
          {"mp_concat", c.mp_concat},
          {"num_classes", c.num_classes},
          {"static_depth", c.static_depth},
          {"share_generators", c.share_generators},
          {"compensation_width", c.compensation_width}};
}

train::TrainConfig training_from_json(const json& j) {
  check_keys(j, "training",
             {"epochs", "batch_size", "base_lr", "momentum", "weight_decay", "warmup_epochs", "label_smoothing",
              "mixup_alpha"});
  train::TrainConfig c;
  read_size(j, "training", "epochs", c.epochs);
  read_size(j, "training", "batch_size", c.batch_size);
  read_real(j, "training", "base_lr", c.base_lr);
  read_real(j, "training", "momentum", c.momentum);
  read_real(j, "training", "weight_decay", c.weight_decay);
  read_size(j, "training", "warmup_epochs", c.warmup_epochs);
  read_real(j, "training", "label_smoothing", c.label_smoothing);
  read_real(j, "training", "mixup_alpha", c.mixup_alpha);
  return c;
}

json training_to_json(const train::TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"base_lr", c.base_lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"warmup_epochs", c.warmup_epochs},
          {"label_smoothing", c.label_smoothing},
          {"mixup_alpha", c.mixup_alpha}};
}

DatasetSection dataset_from_json(const json& j) {
  check_keys(j, "dataset", {"synthetic", "train_path", "val_path", "num_classes"});
  DatasetSection d;
  const bool files = j.contains("train_path") || j.contains("val_path");
  if (files && j.contains("synthetic"))
    throw ValidationError("dataset: give either dataset.synthetic or dataset.train_path/val_path, not both");
  if (files) {
    if (!j.contains("train_path") || !j.contains("val_path"))
      throw ValidationError("dataset: train_path and val_path must be given together");
    d.train_path = read_string(j, "dataset", "train_path");
    d.val_path = read_string(j, "dataset", "val_path");
    read_size(j, "dataset", "num_classes", d.num_classes);
    return d;
  }
  if (j.contains("num_classes"))
    throw ValidationError("dataset.num_classes applies to file datasets only");
  try {
    d.synthetic = data::SyntheticSpec::from_json(j.value("synthetic", json::object()));
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("dataset.synthetic: ") + e.what());
  }
  return d;
}

json dataset_to_json(const DatasetSection& d) {
  if (d.synthetic) return {{"synthetic", d.synthetic->to_json()}};
  json j{{"train_path", d.train_path.string()}, {"val_path", d.val_path.string()}};
  if (d.num_classes) j["num_classes"] = d.num_classes;
  return j;
}

void check_dim(const char* key, bool explicit_value, std::size_t& value, std::size_t expected,
               const char* what) {
  if (explicit_value && value != expected)
    throw ValidationError(std::string(key) + ": expected " + std::to_string(expected) + " (" + what + "), found " +
                          std::to_string(value));
  value = expected;
}

}  // namespace

data::DatasetSplit DatasetSection::load() const {
  if (synthetic) return data::generate_synthetic(*synthetic);
  return data::load_dataset(train_path, val_path, num_classes);
}

RunConfig RunConfig::from_json(const json& doc) {
  check_keys(doc, "",
             {"seed", "output_dir", "dataset", "encoder", "metadata_backbone", "fusion", "training"});
  RunConfig rc;
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) throw ValidationError("seed: expected a non-negative integer");
    rc.seed = doc.at("seed").get<std::uint64_t>();
  }
  if (doc.contains("output_dir")) rc.output_dir = read_string(doc, "", "output_dir");
  rc.dataset = dataset_from_json(doc.value("dataset", json::object()));
  rc.model.encoder = encoder_from_json(doc.value("encoder", json::object()), rc.has_input_dim, rc.has_output_dim);
  rc.model.metadata = backbone_from_json(doc.value("metadata_backbone", json::object()));
  rc.model.fusion = fusion_from_json(doc.value("fusion", json::object()), rc.has_num_classes);
  rc.training = training_from_json(doc.value("training", json::object()));
  rc.training.seed = rc.seed;
  return rc;
}

json RunConfig::to_json() const {
  return {{"seed", seed},
          {"output_dir", output_dir.string()},
          {"dataset", dataset_to_json(dataset)},
          {"encoder", encoder_to_json(model.encoder)},
          {"metadata_backbone", backbone_to_json(model.metadata)},
          {"fusion", fusion_to_json(model.fusion)},
          {"training", training_to_json(training)}};
}

void RunConfig::resolve(std::size_t feature_dim, std::size_t num_classes) {
  check_dim("encoder.input_dim", has_input_dim, model.encoder.input_dim, feature_dim, "dataset feature width");
  if (!has_output_dim) model.encoder.output_dim = model.encoder.input_dim;
  check_dim("fusion.num_classes", has_num_classes, model.fusion.num_classes, num_classes, "dataset classes");
  has_input_dim = has_output_dim = has_num_classes = true;
}

void RunConfig::resolve_from_spec() {
  if (dataset.synthetic) resolve(dataset.synthetic->feature_dim, dataset.synthetic->num_classes());
}

void RunConfig::validate() const {
  if (dataset.synthetic) dataset.synthetic->validate();
  model.validate();
  training.validate();
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ValidationError("override \"" + std::string(assignment) + "\" must look like key.path=value");
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ValidationError("override \"" + path + "\": empty key segment");
    if (!node->is_object()) {
      if (!node->is_null()) throw ValidationError("override \"" + path + "\": \"" + key + "\" is not inside an object");
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json doc = path.empty() ? json::object() : io::read_json_file(path);
  if (!doc.is_object()) throw ValidationError(path.string() + ": config must be a JSON object");
  for (const auto& o : overrides) apply_override(doc, o);
  return RunConfig::from_json(doc);
}

json model_config_json(const fusion::ModelConfig& cfg) {
  return {{"encoder", encoder_to_json(cfg.encoder)},
          {"metadata_backbone", backbone_to_json(cfg.metadata)},
          {"fusion", fusion_to_json(cfg.fusion)}};
}

fusion::ModelConfig model_config_from_json(const json& doc) {
  check_keys(doc, "model", {"encoder", "metadata_backbone", "fusion"});
  bool unused_a = false, unused_b = false, unused_c = false;
  fusion::ModelConfig cfg;
  cfg.encoder = encoder_from_json(doc.value("encoder", json::object()), unused_a, unused_b);
  cfg.metadata = backbone_from_json(doc.value("metadata_backbone", json::object()));
  cfg.fusion = fusion_from_json(doc.value("fusion", json::object()), unused_c);
  return cfg;
}

}  // namespace dmlp::cli
