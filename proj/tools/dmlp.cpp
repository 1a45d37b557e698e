// dmlp: generate, train, eval, compare, export, gradcheck.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure
// (including a failed gradient check).

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "dmlp/cli/commands.hpp"
#include "dmlp/errors.hpp"

namespace fs = std::filesystem;
using namespace dmlp;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", path, "Run config JSON");
    app->add_option("--set", overrides, "Override a config key, e.g. --set fusion.h=32")->take_all();
  }
  cli::RunConfig load() const { return cli::load_run_config(path, overrides); }
};

std::optional<fs::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

int run(int argc, char** argv) {
  CLI::App app{"Dynamic MLP multimodal fusion toolkit"};
  app.require_subcommand(1);

  ConfigArgs gen_cfg;
  std::string gen_out;
  bool gen_force = false;
  auto* gen = app.add_subcommand("generate", "Write a synthetic benchmark as JSONL plus a manifest");
  gen_cfg.attach(gen);
  gen->add_option("-o,--out", gen_out, "Output directory")->required();
  gen->add_flag("--force", gen_force, "Overwrite a non-empty output directory");

  ConfigArgs train_cfg;
  std::string resume;
  auto* tr = app.add_subcommand("train", "Train a model; writes checkpoint, metrics CSV and resolved config");
  train_cfg.attach(tr);
  tr->add_option("--resume", resume, "Continue from this checkpoint");

  std::string eval_ck, eval_data;
  std::vector<std::size_t> eval_k{1, 5};
  auto* ev = app.add_subcommand("eval", "Print top-k and loss of a checkpoint as JSON");
  ev->add_option("--checkpoint", eval_ck, "Checkpoint JSON")->required();
  ev->add_option("--data", eval_data, "JSONL examples (default: validation split of the checkpoint's dataset)");
  ev->add_option("--topk", eval_k, "Comma-separated k values")->delimiter(',');

  ConfigArgs cmp_cfg;
  std::vector<std::string> cmp_strategies;
  bool cmp_equalize = false;
  std::string cmp_out;
  auto* cmp = app.add_subcommand("compare", "Train several fusion strategies under one budget");
  cmp_cfg.attach(cmp);
  cmp->add_option("--strategies", cmp_strategies, "e.g. image_only,concat,dynamic-C")->delimiter(',')->required();
  cmp->add_flag("--equalize-params", cmp_equalize, "Pad baselines to the dynamic model's parameter count");
  cmp->add_option("-o,--out", cmp_out, "Report path (default: <output_dir>/compare.json)");

  std::string exp_ck, exp_data, exp_what, exp_tap = "post_fusion", exp_out;
  std::vector<std::size_t> exp_classes;
  auto* ex = app.add_subcommand("export", "Write analysis tables as CSV");
  ex->add_option("--checkpoint", exp_ck, "Checkpoint JSON")->required();
  ex->add_option("--data", exp_data, "JSONL examples (default: validation split)");
  ex->add_option("--what", exp_what, "embeddings, distances or per-class")->required();
  ex->add_option("--tap", exp_tap, "pre_fusion or post_fusion (embeddings)");
  ex->add_option("--classes", exp_classes, "Class subset (distances)")->delimiter(',');
  ex->add_option("-o,--out", exp_out, "CSV path")->required();

  ConfigArgs gc_cfg;
  std::string gc_strategy = "dynamic", gc_variant = "C";
  bool gc_all = false, gc_corrupt = false;
  std::uint64_t gc_seed = 17;
  std::size_t gc_batch = 3;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full model at tiny widths");
  gc_cfg.attach(gc);
  gc->add_option("--strategy", gc_strategy, "Fusion strategy");
  gc->add_option("--variant", gc_variant, "Dynamic variant A, B or C");
  gc->add_flag("--all", gc_all, "Check all seven strategy configurations");
  gc->add_flag("--corrupt-backward", gc_corrupt, "Use a deliberately wrong ReLU backward rule");
  gc->add_option("--seed", gc_seed, "Seed for parameters and the random batch");
  gc->add_option("--batch", gc_batch, "Batch size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      cli::cmd_generate(gen_cfg.load(), gen_out, gen_force);
      std::cout << "wrote " << (fs::path(gen_out) / "train.jsonl").string() << ", "
                << (fs::path(gen_out) / "val.jsonl").string() << ", "
                << (fs::path(gen_out) / "manifest.json").string() << "\n";
    } else if (*tr) {
      const auto out = cli::cmd_train(train_cfg.load(), optional_path(resume));
      std::cout << "wrote " << out.checkpoint.string() << ", " << out.metrics.string() << ", "
                << out.resolved_config.string() << "\n";
      if (!out.history.empty())
        std::cout << "final val top1 " << out.history.back().validation.top1() << "\n";
    } else if (*ev) {
      std::cout << cli::cmd_eval(eval_ck, optional_path(eval_data), eval_k).dump(2) << "\n";
    } else if (*cmp) {
      cli::RunConfig cfg = cmp_cfg.load();
      const fs::path out = cmp_out.empty() ? cfg.output_dir / "compare.json" : fs::path(cmp_out);
      const auto report = cli::cmd_compare(cfg, cmp_strategies, cmp_equalize, out);
      for (const auto& s : report.at("strategies")) {
        std::cout << s.at("name").get<std::string>() << " params " << s.at("parameters").get<std::size_t>();
        if (s.at("failed").get<bool>())
          std::cout << " FAILED: " << s.at("error").get<std::string>() << "\n";
        else
          std::cout << " val top1 " << s.at("validation").at("top1").get<double>() << "\n";
      }
      std::cout << "wrote " << out.string() << "\n";
    } else if (*ex) {
      cli::ExportOptions options{exp_what, analysis::parse_tap_point(exp_tap), exp_classes};
      cli::cmd_export(exp_ck, optional_path(exp_data), options, exp_out);
      std::cout << "wrote " << exp_out << "\n";
    } else if (*gc) {
      fusion::ModelConfig base = cli::tiny_model_config();
      if (!gc_cfg.path.empty() || !gc_cfg.overrides.empty()) {
        cli::RunConfig cfg = gc_cfg.load();
        cfg.resolve_from_spec();
        base = cfg.model;
      }
      std::vector<analysis::StrategyEntry> entries;
      if (gc_all) {
        entries = cli::all_strategy_entries();
      } else {
        const std::string name = gc_strategy == "dynamic" ? "dynamic-" + gc_variant : gc_strategy;
        entries.push_back(analysis::parse_strategy_entry(name));
      }
      const auto results = cli::cmd_gradcheck(base, entries, gc_corrupt, gc_seed, gc_batch);
      bool ok = true;
      for (const auto& r : results) {
        std::printf("%-16s max_rel_err %.3e  worst %s[%zu]  coords %zu  %s\n", r.name.c_str(),
                    r.report.max_relative_error, r.report.worst_parameter.c_str(), r.report.worst_index,
                    r.report.coordinates_checked, r.passed ? "PASS" : "FAIL");
        ok = ok && r.passed;
      }
      return ok ? 0 : 2;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
