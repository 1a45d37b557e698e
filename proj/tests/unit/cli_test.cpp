#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmlp/cli/commands.hpp"
#include "dmlp/errors.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dmlp;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("dmlp_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    config_ = dir_ / "tiny.json";
    std::ofstream(config_) << json{
        {"seed", 5},
        {"output_dir", (dir_ / "run").string()},
        {"dataset",
         {{"synthetic",
           {{"genera", 2}, {"classes_per_genus", 2}, {"feature_dim", 8}, {"samples_per_class", 16},
            {"val_samples_per_class", 6}, {"seed", 5}}}}},
        {"encoder", {{"mode", "identity"}}},
        {"metadata_backbone", {{"embed_dim", 8}, {"residual_blocks", 1}}},
        {"fusion", {{"strategy", "dynamic"}, {"variant", "C"}, {"d", 8}, {"h", 4}, {"N", 2}}},
        {"training", {{"epochs", 2}, {"batch_size", 16}}}}
                                  .dump(2);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the binary; stdout goes to dir_/stdout.txt, stderr to dir_/stderr.txt.
  int run(const std::string& args) {
    const std::string cmd = std::string(DMLP_BINARY) + " " + args + " > " + (dir_ / "stdout.txt").string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string out() const { return slurp(dir_ / "stdout.txt"); }
  std::string err() const { return slurp(dir_ / "stderr.txt"); }
  std::string cfg() const { return "--config " + config_.string(); }
  fs::path ckpt() const { return dir_ / "run" / "checkpoint.json"; }

  fs::path dir_;
  fs::path config_;
};

TEST_F(Cli, GenerateIsReproducibleAndGuarded) {
  const auto a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run("generate " + cfg() + " -o " + a.string()), 0) << err();
  ASSERT_EQ(run("generate " + cfg() + " -o " + b.string()), 0) << err();
  for (const char* f : {"train.jsonl", "val.jsonl", "manifest.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  const auto manifest = json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(manifest.at("seed").get<int>(), 5);
  EXPECT_EQ(lines(slurp(a / "train.jsonl")), 64u);
  EXPECT_EQ(run("generate " + cfg() + " -o " + a.string()), 1);
  EXPECT_EQ(run("generate " + cfg() + " -o " + a.string() + " --force"), 0) << err();
}

TEST_F(Cli, GenerateWithoutConfigUsesDefaults) {
  ASSERT_EQ(run("generate -o " + (dir_ / "d").string()), 0) << err();
  const auto manifest = json::parse(slurp(dir_ / "d" / "manifest.json"));
  EXPECT_EQ(manifest.at("seed").get<int>(), 17);
  EXPECT_EQ(lines(slurp(dir_ / "d" / "train.jsonl")), 2400u);
}

TEST_F(Cli, TrainEvalResume) {
  ASSERT_EQ(run("train " + cfg()), 0) << err();
  ASSERT_TRUE(fs::exists(ckpt()));
  const std::string csv = slurp(dir_ / "run" / "metrics.csv");
  EXPECT_EQ(lines(csv), 5u);  // header + 2 epochs x 2 splits

  ASSERT_EQ(run("eval --checkpoint " + ckpt().string()), 0) << err();
  const auto metrics = json::parse(out());
  // Last validation row of the CSV.
  std::istringstream in(csv);
  std::string line, last_val;
  while (std::getline(in, line))
    if (line.find(",val,") != std::string::npos) last_val = line;
  std::istringstream fields(last_val);
  std::vector<std::string> cols;
  while (std::getline(fields, line, ',')) cols.push_back(line);
  EXPECT_DOUBLE_EQ(metrics.at("top1").get<double>(), std::stod(cols[2]));
  EXPECT_DOUBLE_EQ(metrics.at("top5").get<double>(), std::stod(cols[3]));
  EXPECT_DOUBLE_EQ(metrics.at("mean_loss").get<double>(), std::stod(cols[4]));
  EXPECT_EQ(metrics.at("examples").get<int>(), 24);

  ASSERT_EQ(run("eval --checkpoint " + ckpt().string() + " --topk 1,3"), 0) << err();
  const auto k13 = json::parse(out());
  EXPECT_TRUE(k13.contains("top1") && k13.contains("top3"));

  ASSERT_EQ(run("train " + cfg() + " --set training.epochs=3 --resume " + ckpt().string()), 0) << err();
  const std::string resumed = slurp(dir_ / "run" / "metrics.csv");
  EXPECT_EQ(lines(resumed), 7u);
  EXPECT_NE(resumed.find("\n3,train,"), std::string::npos);
  EXPECT_EQ(resumed.rfind(csv, 0), 0u);

  // A changed model section cannot resume.
  EXPECT_EQ(run("train " + cfg() + " --set training.epochs=4 --set fusion.h=2 --resume " + ckpt().string()), 1);
}

TEST_F(Cli, InvalidInputsExitOne) {
  EXPECT_EQ(run("train " + cfg() + " --set fusion.h=16"), 1);
  EXPECT_NE(err().find("h"), std::string::npos);
  EXPECT_FALSE(fs::exists(ckpt()));
  EXPECT_EQ(run("train " + cfg() + " --set fusion.colour=1"), 1);
  EXPECT_NE(err().find("colour"), std::string::npos);
  EXPECT_EQ(run("train " + cfg() + " --set encoder.input_dim=9"), 1);
  EXPECT_NE(err().find("expected 8"), std::string::npos) << err();
  EXPECT_NE(run("eval --checkpoint " + (dir_ / "missing.json").string()), 0);
  EXPECT_EQ(run("frobnicate"), 1);
}

TEST_F(Cli, CompareEchoesSeedAndHashes) {
  const auto report_path = dir_ / "cmp.json";
  ASSERT_EQ(run("compare " + cfg() + " --set training.epochs=1 --strategies image_only,concat,dynamic-C -o " +
                report_path.string()),
            0)
      << err();
  const auto report = json::parse(slurp(report_path));
  EXPECT_EQ(report.at("seed").get<int>(), 5);
  EXPECT_FALSE(report.at("train_hash").get<std::string>().empty());
  EXPECT_FALSE(report.at("validation_hash").get<std::string>().empty());
  ASSERT_EQ(report.at("strategies").size(), 3u);
  for (const auto& s : report.at("strategies")) EXPECT_FALSE(s.at("failed").get<bool>());
}

TEST_F(Cli, CompareEqualizesParameters) {
  const auto report_path = dir_ / "cmp.json";
  ASSERT_EQ(run("compare " + cfg() + " --set training.epochs=1 --strategies concat,dynamic-C --equalize-params -o " +
                report_path.string()),
            0)
      << err();
  const auto s = json::parse(slurp(report_path)).at("strategies");
  const double concat = s[0].at("parameters").get<double>(), dyn = s[1].at("parameters").get<double>();
  EXPECT_LE(std::abs(concat - dyn) / dyn, 0.02);
}

TEST_F(Cli, Exports) {
  ASSERT_EQ(run("train " + cfg() + " --set training.epochs=1"), 0) << err();
  const auto emb = dir_ / "emb.csv", dist = dir_ / "dist.csv", pc = dir_ / "pc.csv";
  ASSERT_EQ(run("export --checkpoint " + ckpt().string() + " --what embeddings --tap pre_fusion -o " + emb.string()), 0)
      << err();
  EXPECT_EQ(lines(slurp(emb)), 24u + 1u);
  ASSERT_EQ(run("export --checkpoint " + ckpt().string() + " --what distances -o " + dist.string()), 0) << err();
  const auto m = analysis::parse_distance_csv(slurp(dist));
  ASSERT_EQ(m.size(), 4u);
  for (std::size_t a = 0; a < 4; ++a) {
    EXPECT_EQ(m.at(a, a), 0.0);
    for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(m.at(a, b), m.at(b, a));
  }
  ASSERT_EQ(run("export --checkpoint " + ckpt().string() + " --what distances --classes 1,3 -o " + dist.string()), 0);
  EXPECT_EQ(analysis::parse_distance_csv(slurp(dist)).size(), 2u);
  ASSERT_EQ(run("export --checkpoint " + ckpt().string() + " --what per-class -o " + pc.string()), 0) << err();
  EXPECT_EQ(lines(slurp(pc)), 4u + 1u);
  EXPECT_EQ(run("export --checkpoint " + ckpt().string() + " --what pictures -o " + pc.string()), 1);
}

TEST_F(Cli, ExternalDataForEval) {
  ASSERT_EQ(run("train " + cfg() + " --set training.epochs=1"), 0) << err();
  ASSERT_EQ(run("generate " + cfg() + " -o " + (dir_ / "data").string()), 0) << err();
  ASSERT_EQ(run("eval --checkpoint " + ckpt().string() + " --data " + (dir_ / "data" / "val.jsonl").string()), 0)
      << err();
  EXPECT_EQ(json::parse(out()).at("examples").get<int>(), 24);
  std::ofstream(dir_ / "wide.jsonl") << R"({"features":[1,2,3],"lat":0,"lon":0,"date":0.5,"label":0})" << "\n";
  EXPECT_EQ(run("eval --checkpoint " + ckpt().string() + " --data " + (dir_ / "wide.jsonl").string()), 1);
}

TEST_F(Cli, Gradcheck) {
  EXPECT_EQ(run("gradcheck"), 0) << out() << err();
  EXPECT_NE(out().find("PASS"), std::string::npos);
  EXPECT_EQ(run("gradcheck --corrupt-backward"), 2);
  EXPECT_NE(out().find("FAIL"), std::string::npos);
  EXPECT_EQ(run("gradcheck --all"), 0) << out();
  EXPECT_EQ(lines(out()), 7u);
  EXPECT_EQ(run("gradcheck --set fusion.d=64 --set fusion.h=4"), 1);
}

TEST(CliInProcess, OverridesParseJsonOrString) {
  json doc = json::object();
  cli::apply_override(doc, "fusion.h=32");
  cli::apply_override(doc, "fusion.strategy=concat");
  cli::apply_override(doc, "fusion.ip_concat=false");
  EXPECT_EQ(doc.at("fusion").at("h").get<int>(), 32);
  EXPECT_EQ(doc.at("fusion").at("strategy").get<std::string>(), "concat");
  EXPECT_FALSE(doc.at("fusion").at("ip_concat").get<bool>());
  EXPECT_THROW(cli::apply_override(doc, "no_equals_sign"), ValidationError);
}

TEST(CliInProcess, RunConfigRoundTrip) {
  auto cfg = cli::load_run_config(fs::path(DMLP_SOURCE_DIR) / "configs" / "desk.json", {});
  const auto again = cli::RunConfig::from_json(cfg.to_json());
  EXPECT_EQ(again.to_json(), cfg.to_json());
  EXPECT_EQ(cfg.model.fusion.d, 16u);
}

}  // namespace
