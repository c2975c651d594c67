#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(GREENLAB_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("greenlab_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::string kConfigs = GREENLAB_CONFIG_DIR;

}  // namespace

TEST_CASE("solve run writes identical reports twice") {
  const auto dir = scratch("solve");
  const std::string args = "solve --config " + kConfigs + "/solve.toml --out " + dir.string();
  REQUIRE(run(args, dir / "log1") == 0);
  std::string json_name;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("solve_", 0) == 0 && name.size() == 6 + 16 + 5 && e.path().extension() == ".json") json_name = name;
  }
  REQUIRE_FALSE(json_name.empty());
  const std::string first = slurp(dir / json_name);
  const std::string csv_name = json_name.substr(0, json_name.size() - 5) + ".csv";
  const std::string first_csv = slurp(dir / csv_name);
  REQUIRE(run(args, dir / "log2") == 0);
  CHECK(slurp(dir / json_name) == first);
  CHECK(slurp(dir / csv_name) == first_csv);
  CHECK(first.find("\"seed\": 7") != std::string::npos);
}

TEST_CASE("seed override changes the config hash") {
  const auto dir = scratch("seed");
  REQUIRE(run("solve --config " + kConfigs + "/solve.toml --seed 11 --out " + dir.string(), dir / "log") == 0);
  bool found = false;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json" && e.path().string().find(".timing") == std::string::npos)
      found = found || slurp(e.path()).find("\"seed\": 11") != std::string::npos;
  CHECK(found);
}

TEST_CASE("missing block exits 2 and names the block") {
  const auto dir = scratch("missing");
  std::ofstream(dir / "bad.toml") << "seed = 1\n[grid]\nn = 3\ncells = 8\n[domain]\nkind = \"box\"\n[solver]\ntol = 1e-10\n";
  CHECK(run("solve --config " + (dir / "bad.toml").string() + " --out " + dir.string(), dir / "log") == 2);
  CHECK(slurp(dir / "log").find("[coefficients]") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
  const auto dir = scratch("usage");
  CHECK(run("solve", dir / "log") == 2);
  CHECK(run("solve --config " + kConfigs + "/does-not-exist.toml", dir / "log") == 2);
  CHECK(run("plot --config " + kConfigs + "/solve.toml", dir / "log") == 2);
}

TEST_CASE("solver failure exits 3") {
  const auto dir = scratch("solverfail");
  CHECK(run("solve --config " + kConfigs + "/solve.toml --tol 1e-12 --max-iter 2 --restart 2 --out " + dir.string(), dir / "log") == 3);
}

TEST_CASE("thread count does not change the report") {
  const auto dir = scratch("threads");
  const std::string args = "vmo-modulus --config " + kConfigs + "/vmo-modulus.toml --out ";
  REQUIRE(run(args + (dir / "one").string(), dir / "log") == 0);
  setenv("GREENLAB_THREADS", "3", 1);
  REQUIRE(run(args + (dir / "two").string(), dir / "log") == 0);
  unsetenv("GREENLAB_THREADS");
  for (const auto& e : fs::directory_iterator(dir / "one")) {
    const auto name = e.path().filename().string();
    if (name.find(".timing") != std::string::npos || name.find(".solves") != std::string::npos) continue;
    CHECK(slurp(e.path()) == slurp(dir / "two" / name));
  }
}
