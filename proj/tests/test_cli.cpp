#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = LCPH_CLI_PATH;

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("lcph_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args) {
  const int status = std::system((kCli + " " + args).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help exits cleanly") { CHECK(run("--help > /dev/null") == 0); }

TEST_CASE("malformed input exits with status 2") {
  Scratch s;
  std::ofstream(s / "empty.csv").close();
  CHECK(run("--seed 1 fit " + (s / "empty.csv") + " 2> /dev/null") == 2);
  std::ofstream(s / "bad.csv") << "time,status,x\n1,1,0\n2,yes,1\n";
  CHECK(run("--seed 1 fit " + (s / "bad.csv") + " 2> " + (s / "err.txt")) == 2);
  CHECK(slurp(s / "err.txt").find(":3") != std::string::npos);
  CHECK(run("--seed 1 simulate --scenario VI 2> /dev/null > /dev/null") == 2);
  CHECK(run("--seed 1 fit 2> /dev/null") == 2);
}

TEST_CASE("same seed gives the same fit") {
  Scratch s;
  REQUIRE(run("--seed 3 simulate --scenario I -n 150 -o " + (s / "d.csv")) == 0);
  REQUIRE(run("--seed 3 fit " + (s / "d.csv") + " -o " + (s / "a.json")) == 0);
  REQUIRE(run("--seed 3 fit " + (s / "d.csv") + " -o " + (s / "b.json")) == 0);
  auto a = nlohmann::json::parse(slurp(s / "a.json"));
  auto b = nlohmann::json::parse(slurp(s / "b.json"));
  CHECK(a.at("seed") == 3);
  a.erase("timestamp");
  b.erase("timestamp");
  CHECK(a.dump() == b.dump());
  CHECK(a.at("estimates").size() == 8);
  CHECK(a.at("convergence").at("converged") == true);
}

TEST_CASE("fit, predict, select and cv-brier end to end") {
  Scratch s;
  REQUIRE(run("--seed 4 simulate --scenario IV -n 200 -o " + (s / "d.csv")) == 0);
  REQUIRE(run("--seed 4 fit " + (s / "d.csv") + " --no-se -o " + (s / "m.json")) == 0);
  REQUIRE(run("predict " + (s / "m.json") + " " + (s / "d.csv") + " -t 0,1,2 -o " + (s / "p.csv")) == 0);
  std::istringstream pred(slurp(s / "p.csv"));
  std::string line;
  std::getline(pred, line);
  int rows = 0;
  while (std::getline(pred, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 600);

  REQUIRE(run("--seed 4 select " + (s / "d.csv") + " --candidates 1,2 -o " + (s / "c.csv")) == 0);
  CHECK(slurp(s / "c.csv").find("bic") != std::string::npos);

  REQUIRE(run("--seed 4 cv-brier " + (s / "d.csv") + " --horizon 4 --step 1 -o " + (s / "b.csv")) == 0);
  CHECK(slurp(s / "b.csv").find("mean") != std::string::npos);
}

}
