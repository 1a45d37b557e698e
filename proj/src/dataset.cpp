#include "dmlp/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "dmlp/errors.hpp"
#include "dmlp/rng.hpp"

namespace dmlp::data {

std::size_t DatasetSplit::feature_dim() const {
  if (!train.empty()) return train.front().features.size();
  if (!validation.empty()) return validation.front().features.size();
  return 0;
}

void DatasetSplit::validate() const {
  if (train.empty()) throw ValidationError("dataset: train split is empty");
  if (validation.empty()) throw ValidationError("dataset: validation split is empty");
  if (num_classes < 2) throw ValidationError("dataset: need at least 2 classes");
  const std::size_t dim = feature_dim();
  if (dim == 0) throw ValidationError("dataset: features must be non-empty");
  std::vector<bool> seen(num_classes, false);
  auto check = [&](const std::vector<LabeledExample>& xs, const char* split) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto& x = xs[i];
      if (x.label >= num_classes)
        throw ValidationError(std::string("dataset: ") + split + " example " + std::to_string(i) + " has label " +
                              std::to_string(x.label) + " >= " + std::to_string(num_classes));
      if (x.features.size() != dim)
        throw ValidationError(std::string("dataset: ") + split + " example " + std::to_string(i) + " has " +
                              std::to_string(x.features.size()) + " features, expected " + std::to_string(dim));
      for (double f : x.features)
        if (!std::isfinite(f))
          throw ValidationError(std::string("dataset: ") + split + " example " + std::to_string(i) +
                                " has a non-finite feature");
      geo::validate_record(x.metadata);
    }
  };
  check(train, "train");
  check(validation, "validation");
  for (const auto& x : train) seen[x.label] = true;
  for (std::size_t c = 0; c < num_classes; ++c)
    if (!seen[c]) throw ValidationError("dataset: class " + std::to_string(c) + " missing from train split");
}

// ---------------------------------------------------------------------------

double SyntheticSpec::date_spread() const {
  return 1.0 / (2.0 * std::numbers::pi * std::sqrt(date_concentration));
}

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ValidationError("dataset.synthetic." + key + " " + why);
  };
  if (genera < 1) fail("genera", "must be at least 1");
  if (classes_per_genus < 1) fail("classes_per_genus", "must be at least 1");
  if (num_classes() < 2) fail("genera", "times classes_per_genus must be at least 2");
  if (feature_dim < 1) fail("feature_dim", "must be positive");
  if (!(ambiguity >= 0.0) || !std::isfinite(ambiguity)) fail("ambiguity", "must be non-negative");
  if (!(genus_separation > 0.0) || !std::isfinite(genus_separation)) fail("genus_separation", "must be positive");
  if (!(geo_spread > 0.0) || !std::isfinite(geo_spread)) fail("geo_spread", "must be positive");
  if (!(min_center_separation >= 0.0)) fail("min_center_separation", "must be non-negative");
  if (!(date_concentration > 0.0) || !std::isfinite(date_concentration))
    fail("date_concentration", "must be positive");
  if (samples_per_class < 1) fail("samples_per_class", "must be positive");
  if (val_samples_per_class < 1) fail("val_samples_per_class", "must be positive");
  if (!(missing_metadata_rate >= 0.0 && missing_metadata_rate <= 1.0))
    fail("missing_metadata_rate", "must be in [0, 1]");
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"genera", genera},
          {"classes_per_genus", classes_per_genus},
          {"feature_dim", feature_dim},
          {"ambiguity", ambiguity},
          {"genus_separation", genus_separation},
          {"geo_spread", geo_spread},
          {"min_center_separation", min_center_separation},
          {"date_concentration", date_concentration},
          {"samples_per_class", samples_per_class},
          {"val_samples_per_class", val_samples_per_class},
          {"missing_metadata_rate", missing_metadata_rate},
          {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("dataset.synthetic must be an object");
  SyntheticSpec spec;
  const nlohmann::json defaults = spec.to_json();
  for (const auto& [key, value] : doc.items()) {
    if (!defaults.contains(key)) throw ValidationError("dataset.synthetic." + key + ": unknown key");
    if (!value.is_number()) throw ValidationError("dataset.synthetic." + key + ": expected a number");
  }
  auto get_size = [&](const char* key, std::size_t& out) {
    if (!doc.contains(key)) return;
    const auto& v = doc.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
      throw ValidationError(std::string("dataset.synthetic.") + key + ": expected a non-negative integer");
    out = v.get<std::size_t>();
  };
  auto get_real = [&](const char* key, double& out) {
    if (doc.contains(key)) out = doc.at(key).get<double>();
  };
  get_size("genera", spec.genera);
  get_size("classes_per_genus", spec.classes_per_genus);
  get_size("feature_dim", spec.feature_dim);
  get_real("ambiguity", spec.ambiguity);
  get_real("genus_separation", spec.genus_separation);
  get_real("geo_spread", spec.geo_spread);
  if (doc.contains("geo_spread") && !doc.contains("min_center_separation"))
    spec.min_center_separation = 6.0 * spec.geo_spread;
  get_real("min_center_separation", spec.min_center_separation);
  get_real("date_concentration", spec.date_concentration);
  get_size("samples_per_class", spec.samples_per_class);
  get_size("val_samples_per_class", spec.val_samples_per_class);
  get_real("missing_metadata_rate", spec.missing_metadata_rate);
  if (doc.contains("seed")) {
    std::size_t seed = 0;
    get_size("seed", seed);
    spec.seed = seed;
  }
  return spec;
}

namespace {

// Class centers are placed inside this box so clipping rarely triggers.
constexpr double kCenterLatLimit = 60.0;
constexpr double kCenterLonLimit = 150.0;
constexpr int kMaxPlacementAttempts = 100000;

double wrap_unit(double x) {
  double w = x - std::floor(x);
  if (w >= 1.0) w = 0.0;
  return w;
}

std::vector<double> gaussian_vector(Rng& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

LabeledExample draw_example(Rng& rng, const ClassProfile& profile, std::size_t label, const SyntheticSpec& spec) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LabeledExample x;
  x.label = label;
  x.features.resize(spec.feature_dim);
  for (std::size_t j = 0; j < spec.feature_dim; ++j) x.features[j] = profile.feature_mean[j] + normal(rng);
  const double lat = std::clamp(profile.center_lat + spec.geo_spread * normal(rng), -90.0, 90.0);
  const double lon = std::clamp(profile.center_lon + spec.geo_spread * normal(rng), -180.0, 180.0);
  const double date = wrap_unit(profile.peak_date + spec.date_spread() * normal(rng));
  // The missing draw is always consumed so the rate does not shift other draws.
  const bool drop = unit(rng) < spec.missing_metadata_rate;
  if (!drop) x.metadata = geo::MetadataRecord{lat, lon, date};
  return x;
}

}  // namespace

std::vector<ClassProfile> synthetic_profiles(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::vector<double>> genus_means;
  for (std::size_t g = 0; g < spec.genera; ++g) {
    auto rng = stream(spec.seed, "genus/" + std::to_string(g));
    auto mean = gaussian_vector(rng, spec.feature_dim);
    for (auto& m : mean) m *= spec.genus_separation;
    genus_means.push_back(std::move(mean));
  }

  auto placement = stream(spec.seed, "centers");
  std::uniform_real_distribution<double> lat_dist(-kCenterLatLimit, kCenterLatLimit);
  std::uniform_real_distribution<double> lon_dist(-kCenterLonLimit, kCenterLonLimit);
  std::uniform_real_distribution<double> day_dist(0.0, 1.0);

  std::vector<ClassProfile> profiles;
  for (std::size_t c = 0; c < spec.num_classes(); ++c) {
    ClassProfile p;
    p.genus = c / spec.classes_per_genus;

    auto rng = stream(spec.seed, "offset/" + std::to_string(c));
    auto direction = gaussian_vector(rng, spec.feature_dim);
    const double norm = std::sqrt(std::inner_product(direction.begin(), direction.end(), direction.begin(), 0.0));
    p.feature_mean = genus_means[p.genus];
    for (std::size_t j = 0; j < spec.feature_dim; ++j)
      p.feature_mean[j] += spec.ambiguity * direction[j] / norm;

    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !placed; ++attempt) {
      p.center_lat = lat_dist(placement);
      p.center_lon = lon_dist(placement);
      placed = std::all_of(profiles.begin(), profiles.end(), [&](const ClassProfile& q) {
        return std::hypot(p.center_lat - q.center_lat, p.center_lon - q.center_lon) >= spec.min_center_separation;
      });
    }
    if (!placed)
      throw ValidationError("dataset.synthetic.min_center_separation: cannot place " +
                            std::to_string(spec.num_classes()) + " class centers that far apart");
    p.peak_date = day_dist(placement);
    profiles.push_back(std::move(p));
  }
  return profiles;
}

DatasetSplit generate_synthetic(const SyntheticSpec& spec) {
  const auto profiles = synthetic_profiles(spec);
  DatasetSplit split;
  split.num_classes = spec.num_classes();
  for (std::size_t c = 0; c < profiles.size(); ++c) {
    auto train_rng = stream(spec.seed, "train/" + std::to_string(c));
    for (std::size_t i = 0; i < spec.samples_per_class; ++i)
      split.train.push_back(draw_example(train_rng, profiles[c], c, spec));
    auto val_rng = stream(spec.seed, "val/" + std::to_string(c));
    for (std::size_t i = 0; i < spec.val_samples_per_class; ++i)
      split.validation.push_back(draw_example(val_rng, profiles[c], c, spec));
  }
  return split;
}

// ---------------------------------------------------------------------------

double date_fraction(std::string_view iso_date) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  const std::string s(iso_date);
  if (std::sscanf(s.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3)
    throw ValidationError("date: expected YYYY-MM-DD, got \"" + s + "\"");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) throw ValidationError("date: invalid calendar date \"" + s + "\"");
  const sys_days start{year{y} / January / 1};
  const sys_days next{year{y + 1} / January / 1};
  const auto day_of_year = (sys_days{ymd} - start).count();
  const auto days_in_year = (next - start).count();
  return static_cast<double>(day_of_year) / static_cast<double>(days_in_year);
}

namespace {

std::optional<double> optional_number(const nlohmann::json& line, const char* key) {
  if (!line.contains(key)) throw ValidationError(std::string("missing field \"") + key + "\"");
  const auto& v = line.at(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number()) throw ValidationError(std::string(key) + " must be a number or null");
  return v.get<double>();
}

LabeledExample parse_line(const nlohmann::json& line) {
  static const std::set<std::string> known{"features", "lat", "lon", "date", "label"};
  if (!line.is_object()) throw ValidationError("expected a JSON object");
  for (const auto& [key, _] : line.items())
    if (!known.count(key)) throw ValidationError("unknown field \"" + key + "\"");

  LabeledExample x;
  if (!line.contains("features") || !line.at("features").is_array())
    throw ValidationError("features must be an array");
  for (const auto& f : line.at("features")) {
    if (!f.is_number()) throw ValidationError("features must be numbers");
    x.features.push_back(f.get<double>());
  }
  if (x.features.empty()) throw ValidationError("features must be non-empty");
  for (double f : x.features)
    if (!std::isfinite(f)) throw ValidationError("features must be finite");

  x.metadata.lat = optional_number(line, "lat");
  x.metadata.lon = optional_number(line, "lon");
  if (!line.contains("date")) throw ValidationError("missing field \"date\"");
  const auto& date = line.at("date");
  if (date.is_string())
    x.metadata.date = date_fraction(date.get<std::string>());
  else
    x.metadata.date = optional_number(line, "date");
  geo::validate_record(x.metadata);

  if (!line.contains("label") || !line.at("label").is_number_integer() || line.at("label").get<long long>() < 0)
    throw ValidationError("label must be a non-negative integer");
  x.label = line.at("label").get<std::size_t>();
  return x;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::vector<LabeledExample> parse_examples(std::string_view text) {
  std::vector<LabeledExample> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    try {
      out.push_back(parse_line(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (end == text.size()) break;
  }
  return out;
}

std::vector<LabeledExample> load_examples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_examples(buffer.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string serialize_examples(const std::vector<LabeledExample>& examples) {
  std::string out;
  for (const auto& x : examples) {
    nlohmann::json line;
    line["features"] = x.features;
    line["lat"] = optional_json(x.metadata.lat);
    line["lon"] = optional_json(x.metadata.lon);
    line["date"] = optional_json(x.metadata.date);
    line["label"] = x.label;
    out += line.dump();
    out += '\n';
  }
  return out;
}

void save_examples(const std::filesystem::path& path, const std::vector<LabeledExample>& examples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write dataset file " + path.string());
  out << serialize_examples(examples);
}

DatasetSplit load_dataset(const std::filesystem::path& train_path, const std::filesystem::path& val_path,
                          std::size_t num_classes) {
  DatasetSplit split;
  split.train = load_examples(train_path);
  split.validation = load_examples(val_path);
  if (num_classes == 0) {
    for (const auto* xs : {&split.train, &split.validation})
      for (const auto& x : *xs) num_classes = std::max(num_classes, x.label + 1);
  }
  split.num_classes = num_classes;
  split.validate();
  return split;
}

std::string split_hash(const std::vector<LabeledExample>& examples) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize_examples(examples))));
  return buf;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw ValidationError("batch_size must be at least 1");
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> b(std::min(batch_size, n - start));
    std::iota(b.begin(), b.end(), start);
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed, std::size_t epoch) {
  if (batch_size == 0) throw ValidationError("batch_size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = stream(shuffle_seed, epoch);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  return batches;
}

Batch make_batch(const std::vector<LabeledExample>& examples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ValidationError("make_batch: empty batch");
  const std::size_t dim = examples.at(indices.front()).features.size();
  std::vector<double> features;
  std::vector<double> encoded;
  features.reserve(indices.size() * dim);
  encoded.reserve(indices.size() * geo::kEncodedDim);
  Batch batch;
  for (std::size_t i : indices) {
    const auto& x = examples.at(i);
    if (x.features.size() != dim) throw ShapeError("make_batch: examples disagree on feature width");
    features.insert(features.end(), x.features.begin(), x.features.end());
    const auto e = geo::encode_record(x.metadata);
    encoded.insert(encoded.end(), e.values.begin(), e.values.end());
    batch.labels.push_back(x.label);
    batch.missing.push_back(e.missing);
  }
  batch.features = ad::Tensor::from_values({indices.size(), dim}, std::move(features));
  batch.encoded = ad::Tensor::from_values({indices.size(), geo::kEncodedDim}, std::move(encoded));
  return batch;
}

}  // namespace dmlp::data
