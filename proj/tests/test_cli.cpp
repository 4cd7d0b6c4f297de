#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "pipeline_config.hpp"
#include "rework/simulator.hpp"

namespace fs = std::filesystem;

namespace {

int reworkd(const std::string& args) {
  const std::string cmd = std::string(REWORKD_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  const auto p = dir / "config.in.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("simulate then estimate through the binary") {
  const auto dir = testing::temp_dir("cli_chain");
  const auto cfg = write_config(dir, testing::quick_config());
  const auto run = dir / "run";
  CHECK(reworkd("simulate --config " + cfg.string() + " --out " + run.string()) == 0);
  CHECK(fs::exists(run / "data.csv"));
  CHECK(reworkd("estimate --in " + run.string()) == 0);
  std::ifstream in(run / "effects.json");
  const auto effects = nlohmann::json::parse(in);
  CHECK(effects.at("ate").contains("coef"));
  CHECK_FALSE(fs::exists(run / rework::kLockName));

  // evaluate before policy is a dependency error
  CHECK(reworkd("evaluate --in " + run.string()) == 1);
  fs::remove_all(dir);
}

TEST_CASE("invalid input exits with status one") {
  const auto dir = testing::temp_dir("cli_bad");
  std::ofstream(dir / "bad.json") << R"({"k_folds": 1})";
  CHECK(reworkd("run --config " + (dir / "bad.json").string() + " --out " + (dir / "o").string()) == 1);
  std::ofstream(dir / "unknown.json") << R"({"colour": "blue"})";
  CHECK(reworkd("run --config " + (dir / "unknown.json").string() + " --out " + (dir / "o").string()) == 1);
  CHECK(reworkd("run --config " + (dir / "missing.json").string()) == 1);
  CHECK(reworkd("frobnicate") == 1);
  CHECK(reworkd("estimate") == 1);
  CHECK(reworkd("run --stage nope --out " + (dir / "o").string()) == 1);
  CHECK(reworkd("--help") == 0);
  fs::remove_all(dir);
}

TEST_CASE("a locked output directory is refused") {
  const auto dir = testing::temp_dir("cli_lock");
  std::ofstream(dir / rework::kLockName) << "";
  const auto cfg = write_config(dir, testing::quick_config());
  CHECK(reworkd("simulate --config " + cfg.string() + " --out " + dir.string()) == 1);
  CHECK_FALSE(fs::exists(dir / "data.csv"));
  fs::remove_all(dir);
}

TEST_CASE("estimation failures exit with status two") {
  const auto dir = testing::temp_dir("cli_est");
  rework::SimConfig sc;
  sc.n_lots = 400;
  auto [records, oracle] = rework::simulate_records(sc);
  for (auto& r : records) r.treatment = 0;  // nobody reworked: no effect is identified
  rework::write_lot_csv(dir / "lots.csv", records);
  auto cfg = testing::quick_config();
  cfg.input = (dir / "lots.csv").string();
  const auto path = write_config(dir, cfg);
  CHECK(reworkd("run --config " + path.string() + " --out " + (dir / "o").string()) == 2);
  fs::remove_all(dir);
}
