#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

using nlohmann::json;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  std::string out_file = "/tmp/rpos_cli_test_out.txt";
  std::string cmd = std::string(RPOS_CLI_PATH) + " " + args + " > " + out_file + " 2>/dev/null";
  int rc = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream f(out_file);
  r.out.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  return r;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

// published report schema: fixed top-level keys, fixed key sets per block;
// unknown fields are forbidden
void check_schema(const json& j, const std::string& command) {
  std::set<std::string> top;
  for (auto it = j.begin(); it != j.end(); ++it) top.insert(it.key());
  std::set<std::string> expect{"schema", "tool", "command", "input", "params", "seed", "result"};
  CHECK(top == expect);
  CHECK(j["schema"] == 1);
  CHECK(j["command"] == command);
  CHECK(j["input"].is_object());
  std::set<std::string> in_keys;
  for (auto it = j["input"].begin(); it != j["input"].end(); ++it) in_keys.insert(it.key());
  if (j["input"]["kind"] == "model") {
    CHECK(in_keys == std::set<std::string>{"kind", "describe", "model"});
  } else {
    CHECK(in_keys == std::set<std::string>{"kind", "path", "states", "entries"});
  }
  std::set<std::string> par;
  for (auto it = j["params"].begin(); it != j["params"].end(); ++it) par.insert(it.key());
  CHECK(par == std::set<std::string>{"tol", "z"});
}

}  // namespace

TEST_CASE("rho on a model matches the binomial-series value") {
  RunResult r = run_cli("rho --model '{\"family\":\"srw\",\"p\":0.3}' --tol 1e-6");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  check_schema(j, "rho");
  double truth = 0.916515138991168;  // 2 sqrt(0.21)
  CHECK(double(j["result"]["rho"][0]) <= truth);
  CHECK(double(j["result"]["rho"][1]) >= truth);
  CHECK(double(j["result"]["rho"][1]) - double(j["result"]["rho"][0]) <= 1e-6);
}

TEST_CASE("rho on the two-cycle matrix file") {
  write_file("/tmp/rpos_cyc.tsv", "a\tb\t1\nb\ta\t1\n");
  RunResult r = run_cli("rho /tmp/rpos_cyc.tsv --tol 1e-10");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  CHECK(double(j["result"]["rho"][0]) >= 1.0 - 1e-10);
  CHECK(double(j["result"]["rho"][1]) <= 1.0 + 1e-10);
}

TEST_CASE("malformed input exits 2, bad preconditions exit 3") {
  write_file("/tmp/rpos_bad.tsv", "a;b;1\n");
  CHECK(run_cli("rho /tmp/rpos_bad.tsv").exit_code == 2);
  CHECK(run_cli("rho --model 'not json'").exit_code == 2);
  CHECK(run_cli("rho --model '{\"family\":\"srw\",\"p\":0.3,\"bogus\":1}'").exit_code == 2);
  CHECK(run_cli("rho --model '{\"family\":\"srw\",\"p\":1.5}'").exit_code == 3);
  write_file("/tmp/rpos_red.tsv", "a\tb\t1\n");  // not irreducible
  CHECK(run_cli("rho /tmp/rpos_red.tsv").exit_code == 3);
  CHECK(run_cli("certify /tmp/rpos_red.tsv").exit_code == 3);
}

TEST_CASE("classify: verdicts and the undecided-success contract") {
  RunResult srw = run_cli("classify --model '{\"family\":\"srw\",\"p\":0.5}'");
  REQUIRE(srw.exit_code == 0);
  json js = json::parse(srw.out);
  check_schema(js, "classify");
  CHECK(js["result"]["verdict"] == "R-null-recurrent");
  CHECK(js["result"]["certified"] == true);

  RunResult pin = run_cli(
      "classify --model '{\"family\":\"pinning\",\"alpha\":1.5,\"gamma\":0.5,"
      "\"beta_over_bc\":2.0}'");
  REQUIRE(pin.exit_code == 0);
  CHECK(json::parse(pin.out)["result"]["verdict"] == "strongly-R-positive");

  RunResult fr = run_cli("classify --model '{\"family\":\"finite_random\",\"seed\":7,\"size\":6}'");
  REQUIRE(fr.exit_code == 0);
  CHECK(json::parse(fr.out)["result"]["verdict"] == "strongly-R-positive");

  // black-box generator: undecided is still a successful run
  RunResult bd = run_cli("classify --model '{\"family\":\"birth_death\",\"p\":0.5}'");
  REQUIRE(bd.exit_code == 0);
  json jb = json::parse(bd.out);
  CHECK(jb["result"]["verdict"] == "undecided");
  CHECK(jb["result"]["undecided"] == true);
}

TEST_CASE("psi table: closed form on the single loop, divergence flags") {
  write_file("/tmp/rpos_loop.tsv", "a\ta\t2\n");
  RunResult r = run_cli("psi /tmp/rpos_loop.tsv --grid=-1:0:11");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  check_schema(j, "psi");
  for (const auto& row : j["result"]["rows"]) {
    double lam = row["lambda"];
    CHECK(double(row["psi_lo"]) == doctest::Approx(lam + std::log(2.0)).epsilon(1e-10));
    CHECK(row["divergent"] == false);
  }

  // a grid crossing lambda_plus picks up divergence markers
  write_file("/tmp/rpos_3st.tsv", "a\tb\t1\nb\tc\t1\nc\ta\t1\nb\tb\t1\n");
  RunResult r2 = run_cli("psi /tmp/rpos_3st.tsv --z a --grid=-2:1:13");
  REQUIRE(r2.exit_code == 0);
  json j2 = json::parse(r2.out);
  bool divergent_seen = false;
  for (const auto& row : j2["result"]["rows"])
    if (row["divergent"] == true) divergent_seen = true;
  CHECK(divergent_seen);

  RunResult miss = run_cli("psi /tmp/rpos_loop.tsv --grid=1:2:3");
  CHECK(miss.exit_code == 3);  // NoSignChange: caller must widen
}

TEST_CASE("simulate: identical seeds give identical reports") {
  std::string cmd =
      "simulate --model '{\"family\":\"pinning\",\"alpha\":1.5,\"gamma\":0.5,"
      "\"beta_over_bc\":2.0,\"htransform\":true}' --samples 500 --horizon 5000 --seed 31";
  RunResult a = run_cli(cmd);
  RunResult b = run_cli(cmd);
  REQUIRE(a.exit_code == 0);
  CHECK(a.out == b.out);
  json j = json::parse(a.out);
  check_schema(j, "simulate");
  CHECK(j["result"]["censored"] == 0);
}

TEST_CASE("certify and perturb round out the command set") {
  RunResult c = run_cli(
      "certify --model '{\"family\":\"pinning\",\"alpha\":1.5,\"gamma\":0.5,"
      "\"beta_over_bc\":2.0,\"htransform\":true}' --window 48");
  REQUIRE(c.exit_code == 0);
  json jc = json::parse(c.out);
  check_schema(jc, "certify");
  CHECK(jc["result"]["found"] == true);
  CHECK(double(jc["result"]["epsilon"]) > 0.0);
  CHECK(jc["result"]["verified"] == true);

  write_file("/tmp/rpos_ones.tsv", "0\t0\t1\n0\t1\t1\n1\t0\t1\n1\t1\t1\n");
  RunResult p = run_cli("perturb /tmp/rpos_ones.tsv --lower 0,0,0.5");
  REQUIRE(p.exit_code == 0);
  json jp = json::parse(p.out);
  check_schema(jp, "perturb");
  CHECK(jp["result"]["certified_drop"] == true);
  CHECK(double(jp["result"]["drop_lower_bound"]) > 0.1);
}

TEST_CASE("thread cap does not change the report bytes") {
  std::string base =
      "simulate --model '{\"family\":\"pinning\",\"alpha\":1.5,\"gamma\":0.5,"
      "\"beta_over_bc\":2.0,\"htransform\":true}' --samples 400 --horizon 4000 --seed 3";
  RunResult one = run_cli(base + " --threads 1");
  RunResult four = run_cli(base + " --threads 4");
  REQUIRE(one.exit_code == 0);
  CHECK(one.out == four.out);
}

TEST_CASE("json output file matches stdout bytes") {
  std::string cmd = "rho --model '{\"family\":\"srw\",\"p\":0.4}' --json /tmp/rpos_rho.json";
  RunResult r = run_cli(cmd);
  REQUIRE(r.exit_code == 0);
  std::ifstream f("/tmp/rpos_rho.json");
  std::string file_text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(file_text == r.out);
}
