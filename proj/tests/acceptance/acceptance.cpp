// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "dmlp/analysis.hpp"
#include "dmlp/autodiff/ops.hpp"
#include "dmlp/cli/commands.hpp"
#include "dmlp/nn/layers.hpp"

namespace {

namespace fs = std::filesystem;
using namespace dmlp;
using fusion::Strategy;
using fusion::Variant;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> normals(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shared desk-scale setup: the config, its data, and trained models reused
// by several criteria.
struct Desk {
  cli::RunConfig cfg;
  data::DatasetSplit split;
  std::unique_ptr<fusion::FusionModel> dynamic;
  std::unique_ptr<fusion::FusionModel> image_only;

  Desk() {
    cfg = cli::load_run_config(fs::path(DMLP_SOURCE_DIR) / "configs" / "desk.json", {});
    cfg.resolve_from_spec();
    split = cfg.dataset.load();
  }

  std::unique_ptr<fusion::FusionModel> trained(Strategy s) const {
    auto model_cfg = analysis::config_for(
        cfg.model, analysis::StrategyEntry{"", s, s == Strategy::dynamic ? std::optional(Variant::C) : std::nullopt});
    auto model = std::make_unique<fusion::FusionModel>(model_cfg, cfg.seed);
    train::train_loop(*model, split, cfg.training);
    return model;
  }
};

Desk& desk() {
  static Desk d;
  return d;
}

const fusion::FusionModel& desk_dynamic() {
  auto& d = desk();
  if (!d.dynamic) d.dynamic = d.trained(Strategy::dynamic);
  return *d.dynamic;
}

const fusion::FusionModel& desk_image_only() {
  auto& d = desk();
  if (!d.image_only) d.image_only = d.trained(Strategy::image_only);
  return *d.image_only;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const auto results = cli::cmd_gradcheck(cli::tiny_model_config(), cli::all_strategy_entries(), false, 17, 3);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  bool ok = results.size() == 7;
  std::string worst_name;
  for (const auto& r : results) {
    ok = ok && r.report.max_relative_error <= 1e-4;
    if (r.report.max_relative_error >= worst) {
      worst = r.report.max_relative_error;
      worst_name = r.name;
    }
  }
  ok = ok && secs < 120.0;
  return {ok, fmt("%zu configs, worst max rel err %.2e (%s), %.1f s", results.size(), worst, worst_name.c_str(), secs)};
}

Outcome padding_identity() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t di = uniform_int(rng, 1, 16), de = uniform_int(rng, 1, 16), c = uniform_int(rng, 2, 8);
    fusion::ModelConfig cfg;
    cfg.encoder.input_dim = cfg.encoder.output_dim = di;
    cfg.metadata.embed_dim = de;
    cfg.metadata.residual_blocks = 0;
    cfg.fusion.strategy = Strategy::concat;
    cfg.fusion.num_classes = c;
    fusion::FusionModel model(cfg, static_cast<std::uint64_t>(trial));
    const auto w = normals((di + de) * c, rng), b = normals(c, rng);
    nn::assign(model.classifier().weight(), w);
    nn::assign(model.classifier().bias(), b);
    const auto zi = normals(di, rng, 3.0), ze = normals(de, rng, 3.0);

    ad::Tape tape = ad::Tape::inference();
    const auto scores = model.fuse_and_classify(tape, ad::Tensor::from_values({1, di}, zi),
                                                ad::Tensor::from_values({1, de}, ze));
    // z'_i = [z_i, 0], z'_e = [0, z_e]; h(z'_i + z'_e).
    std::vector<double> padded(di + de, 0.0);
    for (std::size_t p = 0; p < di; ++p) padded[p] += zi[p];
    for (std::size_t p = 0; p < de; ++p) padded[di + p] += ze[p];
    for (std::size_t j = 0; j < c; ++j) {
      double s = b[j];
      for (std::size_t p = 0; p < di + de; ++p) s += padded[p] * w[p * c + j];
      worst = std::max(worst, std::abs(scores.at(j) - s));
    }
  }
  return {worst <= 1e-12, fmt("1000 triples, max |diff| %.2e", worst)};
}

Outcome log_exp_identity() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  auto softmax = [](const std::vector<double>& x) {
    const double mx = *std::max_element(x.begin(), x.end());
    std::vector<double> e(x.size());
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) z += e[i] = std::exp(x[i] - mx);
    for (auto& v : e) v /= z;
    return e;
  };
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t di = uniform_int(rng, 1, 8), de = uniform_int(rng, 1, 8), c = uniform_int(rng, 2, 12);
    fusion::ModelConfig cfg;
    cfg.encoder.input_dim = cfg.encoder.output_dim = di;
    cfg.metadata.embed_dim = de;
    cfg.metadata.residual_blocks = 0;
    cfg.fusion.strategy = Strategy::multiplication;
    cfg.fusion.num_classes = c;
    fusion::FusionModel model(cfg, static_cast<std::uint64_t>(trial));
    const auto wi = normals(di * c, rng, 2.0), we = normals(de * c, rng, 2.0);
    nn::assign(model.classifier().weight(), wi);
    nn::assign(model.metadata_head().weight(), we);
    const auto zi = normals(di, rng, 2.0), ze = normals(de, rng, 2.0);

    ad::Tape tape = ad::Tape::inference();
    const auto scores = model.fuse_and_classify(tape, ad::Tensor::from_values({1, di}, zi),
                                                ad::Tensor::from_values({1, de}, ze));
    const auto via_log = ad::exp(tape, scores);
    std::vector<double> a(c, 0.0), b(c, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t p = 0; p < di; ++p) a[j] += zi[p] * wi[p * c + j];
      for (std::size_t p = 0; p < de; ++p) b[j] += ze[p] * we[p * c + j];
    }
    const auto sa = softmax(a), sb = softmax(b);
    for (std::size_t j = 0; j < c; ++j) worst = std::max(worst, std::abs(via_log.at(j) - sa[j] * sb[j]));
  }
  return {worst <= 1e-12, fmt("1000 logit pairs, max |diff| %.2e", worst)};
}

struct RowStats {
  double worst_mean = 0.0;
  double worst_var = 0.0;
  std::size_t rows = 0;
  std::size_t constant_rows = 0;
  double min_input_var = std::numeric_limits<double>::infinity();

  void check(const std::vector<double>& x, std::size_t cols) {
    ad::Tape tape = ad::Tape::inference();
    const std::size_t n = x.size() / cols;
    const auto y = ad::layer_norm(tape, ad::Tensor::from_values({n, cols}, x));
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = std::span<const double>(x).subspan(r * cols, cols);
      if (std::all_of(row.begin(), row.end(), [&](double v) { return v == row[0]; })) {
        ++constant_rows;
        continue;
      }
      double in_mean = 0.0, in_var = 0.0;
      for (double v : row) in_mean += v;
      in_mean /= static_cast<double>(cols);
      for (double v : row) in_var += (v - in_mean) * (v - in_mean);
      min_input_var = std::min(min_input_var, in_var / static_cast<double>(cols));

      double m = 0.0, v = 0.0;
      for (std::size_t j = 0; j < cols; ++j) m += y.at(r * cols + j);
      m /= static_cast<double>(cols);
      for (std::size_t j = 0; j < cols; ++j) v += (y.at(r * cols + j) - m) * (y.at(r * cols + j) - m);
      v /= static_cast<double>(cols);
      worst_mean = std::max(worst_mean, std::abs(m));
      worst_var = std::max(worst_var, std::abs(v - 1.0));
      ++rows;
    }
  }
};

Outcome layer_norm_contract() {
  RowStats random_rows, model_rows;
  std::mt19937_64 rng(303);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t cols = uniform_int(rng, 4, 256);
    const double sd = std::uniform_real_distribution<double>(0.5, 10.0)(rng);
    const double offset = std::uniform_real_distribution<double>(-50.0, 50.0)(rng);
    auto x = normals(cols, rng, sd);
    for (auto& v : x) v += offset;
    random_rows.check(x, cols);
  }

  // Pre-normalization activations of every dynamic block of the trained model.
  const auto& model = desk_dynamic();
  const auto& val = desk().split.validation;
  std::vector<std::size_t> idx(val.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto batch = data::make_batch(val, idx);
  ad::Tape tape = ad::Tape::inference();
  fusion::FusionTrace trace;
  model.forward(tape, batch.features, batch.encoded, {}, &trace);
  for (std::size_t n = 0; n < trace.weights.size(); ++n) {
    const auto& w = trace.weights[n];
    const std::size_t b = w.dim(0), in = w.dim(1), out = w.dim(2);
    const auto z = ad::reshape(tape, trace.block_inputs[n], {b, 1, in});
    const auto pre = ad::matmul(tape, z, w);
    model_rows.check({pre.values().begin(), pre.values().end()}, out);
  }

  const bool ok = random_rows.worst_mean <= 1e-10 && random_rows.worst_var <= 1e-4 &&
                  model_rows.worst_mean <= 1e-10 && model_rows.worst_var <= 1e-4 && model_rows.rows > 0;
  return {ok, fmt("random rows %zu: |mean| %.1e |var-1| %.1e; model rows %zu (+%zu constant, min input var %.3g): "
                  "|mean| %.1e |var-1| %.1e",
                  random_rows.rows, random_rows.worst_mean, random_rows.worst_var, model_rows.rows,
                  model_rows.constant_rows, model_rows.min_input_var, model_rows.worst_mean, model_rows.worst_var)};
}

Outcome bottleneck_schedule() {
  bool ok = true;
  std::string detail;
  std::mt19937_64 rng(404);
  for (std::size_t n = 1; n <= 4; ++n) {
    fusion::ModelConfig cfg;
    cfg.encoder.input_dim = cfg.encoder.output_dim = 256;
    cfg.metadata.embed_dim = 8;
    cfg.metadata.residual_blocks = 1;
    cfg.fusion.d = 256;
    cfg.fusion.h = 64;
    cfg.fusion.num_blocks = n;
    cfg.fusion.num_classes = 5;
    fusion::FusionModel model(cfg, n);
    ad::Tape tape = ad::Tape::inference();
    fusion::FusionTrace trace;
    model.forward(tape, ad::Tensor::from_values({2, 256}, normals(512, rng)),
                  ad::Tensor::from_values({2, 6}, normals(12, rng)), {}, &trace);
    std::string widths;
    for (std::size_t b = 0; b < trace.block_outputs.size(); ++b) {
      const std::size_t w = trace.block_outputs[b].dim(1);
      widths += (b ? "," : "") + std::to_string(w);
      const bool last = b + 1 == trace.block_outputs.size();
      ok = ok && w == (last ? 256u : 64u) && trace.block_inputs[b].dim(1) == (b == 0 ? 256u : 64u);
    }
    ok = ok && trace.block_outputs.size() == n;
    detail += fmt("N=%zu [%s] ", n, widths.c_str());
  }
  return {ok, detail};
}

Outcome core_phenomenon() {
  auto& d = desk();
  const auto t0 = Clock::now();
  std::vector<analysis::StrategyEntry> entries;
  for (const char* name : {"image_only", "concat", "dynamic-C"}) entries.push_back(analysis::parse_strategy_entry(name));
  const auto report = analysis::compare_strategies(d.split, d.cfg.model, d.cfg.training, entries, false, d.cfg.seed);
  const double secs = seconds_since(t0);
  double top[3];
  bool failed = false;
  for (int i = 0; i < 3; ++i) {
    failed = failed || report.results[static_cast<std::size_t>(i)].failed;
    top[i] = failed ? 0.0 : report.results[static_cast<std::size_t>(i)].final_validation.top1();
  }
  const bool ok = !failed && top[0] <= 0.60 && top[2] >= 0.90 && top[2] >= top[1] - 0.01 && secs <= 600.0;
  return {ok, fmt("top-1 image_only %.1f%%, concat %.1f%%, dynamic-C %.1f%%, %.1f s", 100 * top[0], 100 * top[1],
                  100 * top[2], secs)};
}

Outcome metadata_sensitivity() {
  const auto& dyn = desk_dynamic();
  const auto& img = desk_image_only();
  const auto& val = desk().split.validation;
  const std::size_t n = std::min<std::size_t>(100, val.size());
  double min_delta = std::numeric_limits<double>::infinity();
  bool image_identical = true;
  for (std::size_t i = 0; i < n; ++i) {
    data::LabeledExample moved = val[i];
    // Mirror to the other hemisphere and half a turn of longitude away.
    moved.metadata.lat = -*moved.metadata.lat;
    double lon = *moved.metadata.lon + 180.0;
    if (lon > 180.0) lon -= 360.0;
    moved.metadata.lon = lon;
    const auto a = data::make_batch({val[i]}, {0});
    const auto b = data::make_batch({moved}, {0});
    ad::Tape tape = ad::Tape::inference();
    const auto pa = dyn.predict(tape, a.features, a.encoded), pb = dyn.predict(tape, b.features, b.encoded);
    double delta = 0.0;
    for (std::size_t j = 0; j < pa.numel(); ++j) delta = std::max(delta, std::abs(pa.at(j) - pb.at(j)));
    min_delta = std::min(min_delta, delta);
    const auto qa = img.predict(tape, a.features, a.encoded), qb = img.predict(tape, b.features, b.encoded);
    for (std::size_t j = 0; j < qa.numel(); ++j) image_identical = image_identical && qa.at(j) == qb.at(j);
  }
  return {min_delta > 1e-6 && image_identical,
          fmt("%zu examples moved: dynamic min max-delta %.3g, image_only bit-identical: %s", n, min_delta,
              image_identical ? "yes" : "no")};
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "dmlp_acceptance_determinism";
  fs::remove_all(root);
  cli::RunConfig cfg = desk().cfg;
  cfg.output_dir = root / "run";
  cli::cmd_train(cfg);
  const std::string ck1 = slurp(root / "run" / "checkpoint.json"), csv1 = slurp(root / "run" / "metrics.csv");
  fs::remove_all(root / "run");
  cli::cmd_train(cfg);
  const std::string ck2 = slurp(root / "run" / "checkpoint.json"), csv2 = slurp(root / "run" / "metrics.csv");
  fs::remove_all(root);
  const bool ok = !ck1.empty() && ck1 == ck2 && !csv1.empty() && csv1 == csv2;
  return {ok, fmt("checkpoint %zu bytes %s, metrics %zu bytes %s", ck1.size(), ck1 == ck2 ? "identical" : "DIFFER",
                  csv1.size(), csv1 == csv2 ? "identical" : "DIFFER")};
}

Outcome missing_metadata() {
  auto& d = desk();
  std::vector<data::LabeledExample> val = d.split.validation;
  for (auto& x : val) x.metadata = {};
  std::vector<std::size_t> idx(val.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto batch = data::make_batch(val, idx);

  std::size_t evaluated = 0;
  std::string weights_note;
  bool ok = true;
  for (const auto& entry : cli::all_strategy_entries()) {
    std::vector<fusion::ModelConfig> configs{analysis::config_for(d.cfg.model, entry)};
    if (entry.variant == Variant::C) {
      auto ip_only = configs.front();
      ip_only.fusion.mp_concat = false;
      configs.push_back(ip_only);
    }
    for (const auto& mc : configs) {
      fusion::FusionModel model(mc, d.cfg.seed);
      train::evaluate(model, val);
      ++evaluated;
      if (mc.fusion.strategy != Strategy::dynamic) continue;

      ad::Tape tape = ad::Tape::inference();
      fusion::FusionTrace trace;
      model.forward(tape, batch.features, batch.encoded, {}, &trace);
      const std::size_t b = trace.metadata_feature.dim(0), de = trace.metadata_feature.dim(1);
      // z_e of the zero input, the same for every example.
      const auto ze0 = model.metadata_backbone().forward(tape, ad::Tensor::zeros({1, 6}));
      for (std::size_t r = 0; r < b; ++r)
        for (std::size_t j = 0; j < de; ++j) ok = ok && trace.metadata_feature.at(r * de + j) == ze0.at(j);

      const bool guide_is_metadata = !(mc.fusion.variant == Variant::C && mc.fusion.mp_concat);
      const std::string name = std::string(fusion::to_string(mc.fusion.variant)) +
                               (mc.fusion.variant == Variant::C ? (mc.fusion.mp_concat ? "(ip+mp)" : "(ip)") : "");
      if (!guide_is_metadata) {
        // The generator reads concat(z_i0, z_e): image dependent by construction.
        weights_note += name + ": z_e identical; ";
        continue;
      }
      std::size_t blocks_checked = 0;
      for (std::size_t n = 0; n < trace.weights.size(); ++n) {
        const auto& w = trace.weights[n];
        const std::size_t per = w.numel() / b;
        // Variant B passes the guide through a static stack first; its
        // reference is then the first example's matrix.
        const ad::Tensor ref = mc.fusion.variant == Variant::B
                                   ? ad::Tensor::from_values({per}, {w.values().begin(), w.values().begin() + static_cast<std::ptrdiff_t>(per)})
                                   : model.dynamic_mlp().generate_weights(tape, ze0, n);
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t k = 0; k < per; ++k) ok = ok && w.at(r * per + k) == ref.at(k);
        ++blocks_checked;
      }
      weights_note += name + ": " + std::to_string(blocks_checked) + " blocks identical; ";
    }
  }
  return {ok, fmt("%zu configs evaluated on %zu fully-missing examples; %s", evaluated, val.size(),
                  weights_note.c_str())};
}

Outcome analysis_exports() {
  const auto& model = desk_dynamic();
  const auto& val = desk().split.validation;
  const std::size_t c = model.config().fusion.num_classes;
  std::vector<std::size_t> all(c);
  std::iota(all.begin(), all.end(), 0);
  const auto dist = analysis::parse_distance_csv(analysis::distance_csv(analysis::classifier_weight_distances(model, all)));
  bool symmetric = dist.size() == c;
  for (std::size_t a = 0; a < dist.size(); ++a) {
    symmetric = symmetric && dist.at(a, a) == 0.0;
    for (std::size_t b = 0; b < dist.size(); ++b) symmetric = symmetric && dist.at(a, b) == dist.at(b, a);
  }
  const std::string emb = analysis::embedding_csv(analysis::export_embeddings(model, val, analysis::TapPoint::post_fusion));
  const std::size_t emb_rows = static_cast<std::size_t>(std::count(emb.begin(), emb.end(), '\n')) - 1;
  const auto table = analysis::per_class_accuracy(model, val);
  const std::string pc = analysis::per_class_csv(table);
  const std::size_t pc_rows = static_cast<std::size_t>(std::count(pc.begin(), pc.end(), '\n')) - 1;
  const bool ok = symmetric && emb_rows == val.size() && table.size() == c && pc_rows == c;
  return {ok, fmt("distance %zux%zu symmetric/zero-diagonal: %s; embedding rows %zu of %zu; per-class rows %zu of %zu",
                  dist.size(), dist.size(), symmetric ? "yes" : "no", emb_rows, val.size(), pc_rows, c)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"concat padding identity", padding_identity},
      {"product log-exp identity", log_exp_identity},
      {"layer norm contract", layer_norm_contract},
      {"bottleneck schedule", bottleneck_schedule},
      {"desk-scale fusion ordering", core_phenomenon},
      {"metadata sensitivity", metadata_sensitivity},
      {"determinism", determinism},
      {"missing metadata compensation", missing_metadata},
      {"analysis exports", analysis_exports},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s criterion %zu: %s -- %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
