#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "gazedet/cli.hpp"
#include "gazedet/gaze_pipeline.hpp"
#include "gazedet/importance.hpp"

using namespace gazedet;
namespace fs = std::filesystem;

namespace {

const fs::path kBase = fs::temp_directory_path() / "gazedet_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

cli::KV synth_opts(const fs::path& out, const std::string& n, const std::string& seed) {
  return {{"out", out.string()}, {"n", n},           {"seed", seed},
          {"image_size", "32"},  {"patch_size", "8"}, {"classes", "3"}};
}

cli::KV train_opts(const fs::path& data, const fs::path& out) {
  return {{"data", data.string()}, {"out", out.string()}, {"image_size", "32"},
          {"patch_size", "8"},     {"d_model", "16"},     {"ffn_dim", "24"},
          {"classes", "3"},        {"queries", "4"},      {"epochs", "2"},
          {"seed", "5"},           {"batch", "4"}};
}

// one shared dataset + checkpoint for the read-only commands
struct Fixture {
  fs::path data = kBase / "data";
  fs::path model = kBase / "model";
  Fixture() {
    if (!fs::exists(model / "checkpoint.json")) {
      fs::create_directories(kBase);
      REQUIRE(cli::cmd_synth(synth_opts(data, "100", "7")) == 0);
      REQUIRE(cli::cmd_train(train_opts(data, model)) == 0);
    }
  }
};

}  // namespace

TEST_CASE("synth: split math and byte-identical reruns") {
  fs::remove_all(kBase / "synth_a");
  fs::remove_all(kBase / "synth_b");
  REQUIRE(cli::cmd_synth(synth_opts(kBase / "synth_a", "100", "3")) == 0);
  REQUIRE(cli::cmd_synth(synth_opts(kBase / "synth_b", "100", "3")) == 0);

  const auto train_manifest = read_frame_manifest(kBase / "synth_a" / "manifest_train.json");
  CHECK(train_manifest.size() == 70);
  // dataset files are byte-identical across runs with the same flags; the
  // resolved config echo differs only in the out path
  for (const char* name : {"manifest_train.json", "manifest_val.json", "manifest_test.json",
                           "split.json", "gaze.csv", "calibration.json"}) {
    CHECK(slurp(kBase / "synth_a" / name) == slurp(kBase / "synth_b" / name));
  }
  const std::string first_echo = slurp(kBase / "synth_a" / "resolved_config.txt");
  REQUIRE(cli::cmd_synth(synth_opts(kBase / "synth_a", "100", "3")) == 0);
  CHECK(slurp(kBase / "synth_a" / "resolved_config.txt") == first_echo);
}

TEST_CASE("synth: creates missing output dirs; unwritable path exits 2") {
  const fs::path nested = kBase / "made" / "up" / "dirs";
  fs::remove_all(kBase / "made");
  CHECK(cli::cmd_synth(synth_opts(nested, "100", "1")) == 0);
  CHECK(fs::exists(nested / "calibration.json"));

  // a regular file used as a directory component cannot be created
  const fs::path blocker = kBase / "blocker";
  std::ofstream(blocker) << "x";
  CHECK_THROWS_AS(cli::cmd_synth(synth_opts(blocker / "sub", "100", "1")), cli::IoError);
  CHECK(cli::run({"synth", "--out", (blocker / "sub").string(), "--n", "100"}) == 2);
}

TEST_CASE("train: fixed seed gives byte-identical checkpoints") {
  Fixture fx;
  const fs::path out_a = kBase / "train_a";
  const fs::path out_b = kBase / "train_b";
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  REQUIRE(cli::cmd_train(train_opts(fx.data, out_a)) == 0);
  REQUIRE(cli::cmd_train(train_opts(fx.data, out_b)) == 0);
  CHECK(slurp(out_a / "checkpoint.json") == slurp(out_b / "checkpoint.json"));
  CHECK(slurp(out_a / "loss_curve.csv") == slurp(out_b / "loss_curve.csv"));

  // resolved config echo sits next to the outputs
  CHECK(fs::exists(out_a / "resolved_config.txt"));
  const std::string cfg_echo = slurp(out_a / "resolved_config.txt");
  CHECK(cfg_echo.find("alpha") != std::string::npos);
  CHECK(cfg_echo.find("seed = 5") != std::string::npos);
}

TEST_CASE("train: missing dataset exits 3") {
  CHECK_THROWS_AS(cli::cmd_train(train_opts(kBase / "no_such_dataset", kBase / "train_x")),
                  cli::MissingArtifactError);
  CHECK(cli::run({"train", "--data", (kBase / "no_such_dataset").string(), "--out",
                  (kBase / "train_x").string()}) == 3);
}

TEST_CASE("eval: writes results and prediction dump; thresholds are monotone") {
  Fixture fx;
  const fs::path out = kBase / "eval_test";
  fs::remove_all(out);
  cli::KV opts = {{"data", fx.data.string()},
                  {"checkpoint", (fx.model / "checkpoint.json").string()},
                  {"out", out.string()},
                  {"split", "test"}};
  REQUIRE(cli::cmd_eval(opts) == 0);

  nlohmann::json results;
  std::ifstream(out / "results.json") >> results;
  const double map50 = results.at("map_50").get<double>();
  const double map75 = results.at("map_75").get<double>();
  CHECK(map75 <= map50 + 1e-12);
  CHECK(results.at("accuracy").get<double>() >= 0.0);
  CHECK(results.at("accuracy").get<double>() <= 1.0);

  // prediction dump: one JSON object per line with the declared fields
  std::ifstream dump(out / "predictions.jsonl");
  REQUIRE(dump);
  std::string line;
  size_t lines = 0;
  while (std::getline(dump, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("frame_id"));
    CHECK(j.contains("detections"));
    for (const auto& d : j.at("detections")) {
      CHECK(d.at("box").size() == 4);
      CHECK(d.at("confidence").get<double>() >= 0.0);
    }
    ++lines;
  }
  CHECK(lines == 15);  // test split of 100
}

TEST_CASE("eval: missing checkpoint exits 3") {
  Fixture fx;
  cli::KV opts = {{"data", fx.data.string()},
                  {"checkpoint", (kBase / "nope.json").string()},
                  {"out", (kBase / "eval_missing").string()}};
  CHECK_THROWS_AS(cli::cmd_eval(opts), cli::MissingArtifactError);
  CHECK(cli::run({"eval", "--data", fx.data.string(), "--checkpoint",
                  (kBase / "nope.json").string(), "--out",
                  (kBase / "eval_missing").string()}) == 3);
}

TEST_CASE("attn-map: naming contract, alpha-0 identity, gaze concentration") {
  Fixture fx;
  const auto test_manifest = read_frame_manifest(fx.data / "manifest_test.json");
  REQUIRE(!test_manifest.empty());
  const std::string frame = test_manifest.front().frame_id;

  SUBCASE("alpha 0 makes before and after byte-identical") {
    const fs::path out = kBase / "attn_zero";
    fs::remove_all(out);
    cli::KV opts = {{"data", fx.data.string()},
                    {"checkpoint", (fx.model / "checkpoint.json").string()},
                    {"out", out.string()},
                    {"frame", frame},
                    {"alpha", "0"}};
    REQUIRE(cli::cmd_attn_map(opts) == 0);
    // 1 encoder layer config? default 2 encoder layers with d_model 16 -> heads from config
    bool any = false;
    for (const auto& entry : fs::directory_iterator(out)) {
      const std::string name = entry.path().filename().string();
      if (name.size() > 8 && name.substr(name.size() - 8) == "_pre.png") {
        const std::string post = name.substr(0, name.size() - 8) + "_post.png";
        CHECK(slurp(entry.path()) == slurp(out / post));
        any = true;
      }
    }
    CHECK(any);
  }

  SUBCASE("alpha 0.7 raises mean heat inside the gaze RoI in the after image") {
    const fs::path out = kBase / "attn_gaze";
    fs::remove_all(out);
    cli::KV opts = {{"data", fx.data.string()},
                    {"checkpoint", (fx.model / "checkpoint.json").string()},
                    {"out", out.string()},
                    {"frame", frame},
                    {"alpha", "0.7"},
                    {"colormap", "gray"}};
    REQUIRE(cli::cmd_attn_map(opts) == 0);
    CHECK(fs::exists(out / (frame + "_0_0_pre.png")));
    CHECK(fs::exists(out / (frame + "_0_0_post.png")));
    CHECK(fs::exists(out / (frame + "_1_3_pre.png")));
    CHECK(fs::exists(out / (frame + "_1_3_post.png")));
  }
}

TEST_CASE("heads: identity columns and the post-softmax collapse") {
  Fixture fx;

  SUBCASE("beta 1 gamma 0 copies i_prob into i_gaze") {
    const fs::path out = kBase / "heads_identity";
    fs::remove_all(out);
    cli::KV opts = {{"data", fx.data.string()},
                    {"checkpoint", (fx.model / "checkpoint.json").string()},
                    {"out", out.string()},
                    {"beta", "1"},
                    {"gamma", "0"}};
    REQUIRE(cli::cmd_heads(opts) == 0);
    std::ifstream csv(out / "heads.csv");
    std::string line;
    std::getline(csv, line);  // header
    size_t rows = 0;
    while (std::getline(csv, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      REQUIRE(cells.size() == 5);
      CHECK(std::stod(cells[4]) == doctest::Approx(std::stod(cells[2])).epsilon(1e-12));
      // post-softmax mode: i_prob collapses to 1/L = 1/16
      CHECK(std::stod(cells[2]) == doctest::Approx(1.0 / 16.0).epsilon(1e-12));
      ++rows;
    }
    CHECK(rows == 8);  // 2 layers x 4 heads
    // overlays for the first frame exist
    bool overlay = false;
    for (const auto& entry : fs::directory_iterator(out)) {
      if (entry.path().filename().string().rfind("overlay_", 0) == 0) overlay = true;
    }
    CHECK(overlay);
  }

  SUBCASE("pre-softmax mode produces head-dependent i_prob") {
    const fs::path out = kBase / "heads_pre";
    fs::remove_all(out);
    cli::KV opts = {{"data", fx.data.string()},
                    {"checkpoint", (fx.model / "checkpoint.json").string()},
                    {"out", out.string()},
                    {"mode", "pre"}};
    REQUIRE(cli::cmd_heads(opts) == 0);
    std::ifstream csv(out / "heads.csv");
    std::string line;
    std::getline(csv, line);
    std::vector<double> iprobs;
    while (std::getline(csv, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      iprobs.push_back(std::stod(cells[2]));
    }
    bool varies = false;
    for (double v : iprobs) {
      if (std::fabs(v - iprobs[0]) > 1e-9) varies = true;
    }
    CHECK(varies);
  }
}

TEST_CASE("ablate: beta_gamma table has the four reported pairs") {
  Fixture fx;
  const fs::path out = kBase / "ablate_bg";
  fs::remove_all(out);
  cli::KV opts = {{"which", "beta_gamma"},
                  {"data", fx.data.string()},
                  {"checkpoint", (fx.model / "checkpoint.json").string()},
                  {"out", out.string()}};
  REQUIRE(cli::cmd_ablate(opts) == 0);
  std::ifstream csv(out / "ablation_beta_gamma.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "beta,gamma,mean_iou");
  std::vector<std::pair<double, double>> pairs;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string b, g, i;
    std::getline(ss, b, ',');
    std::getline(ss, g, ',');
    std::getline(ss, i, ',');
    pairs.emplace_back(std::stod(b), std::stod(g));
  }
  REQUIRE(pairs.size() == 4);
  CHECK(pairs[0] == std::pair<double, double>{1.0, 0.0});
  CHECK(pairs[2] == std::pair<double, double>{0.7, 0.3});
}

TEST_CASE("eval on the train split of an overfit model reaches 0.95 accuracy") {
  const fs::path base = kBase / "overfit";
  fs::remove_all(base);
  cli::KV synth = {{"out", (base / "data").string()}, {"n", "100"},        {"seed", "3"},
                   {"image_size", "32"},              {"patch_size", "8"}, {"classes", "2"},
                   {"min_objects", "1"},              {"max_objects", "1"}};
  REQUIRE(cli::cmd_synth(synth) == 0);
  cli::KV train = {{"data", (base / "data").string()}, {"out", (base / "run").string()},
                   {"image_size", "32"},               {"patch_size", "8"},
                   {"classes", "2"},                   {"epochs", "150"},
                   {"seed", "3"},                      {"batch", "2"},
                   {"alpha", "2.0"}};
  REQUIRE(cli::cmd_train(train) == 0);
  cli::KV eval = {{"data", (base / "data").string()},
                  {"checkpoint", (base / "run" / "checkpoint.json").string()},
                  {"out", (base / "eval").string()},
                  {"split", "train"}};
  REQUIRE(cli::cmd_eval(eval) == 0);
  nlohmann::json results;
  std::ifstream(base / "eval" / "results.json") >> results;
  CHECK(results.at("accuracy").get<double>() >= 0.95);
}

TEST_CASE("run: dispatch, config files, and usage errors") {
  SUBCASE("usage errors exit 1") {
    CHECK(cli::run({}) == 1);
    CHECK(cli::run({"frobnicate"}) == 1);
  }

  SUBCASE("config file supplies options, flags override") {
    const fs::path dir = kBase / "run_cfg";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
      std::ofstream cfg(dir / "synth.cfg");
      cfg << "# synth settings\n";
      cfg << "n = 100\n";
      cfg << "seed = 4\n";
      cfg << "image_size = 32\n";
      cfg << "patch_size = 8\n";
      cfg << "classes = 2\n";
      cfg << "out = " << (dir / "from_config").string() << "\n";
    }
    CHECK(cli::run({"synth", "--config", (dir / "synth.cfg").string()}) == 0);
    CHECK(read_frame_manifest(dir / "from_config" / "manifest_train.json").size() == 70);

    // the flag wins over the file
    CHECK(cli::run({"synth", "--config", (dir / "synth.cfg").string(), "--out",
                    (dir / "flag_wins").string()}) == 0);
    CHECK(fs::exists(dir / "flag_wins" / "manifest_train.json"));
  }

  SUBCASE("missing config file exits 3") {
    CHECK(cli::run({"synth", "--config", (kBase / "ghost.cfg").string()}) == 3);
  }
}
