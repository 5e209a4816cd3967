#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nhk/cli.hpp"

using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
  json report() const { return json::parse(out); }
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = nhk::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("check reports pass and fail through the exit code") {
  Run ok = run({"check", "free_particle", "--json"});
  CHECK(ok.code == 0);
  json r = ok.report();
  CHECK(r["schema"] == nhk::cli::kSchema);
  CHECK(r["command"] == "check");
  CHECK(r["verdict"] == "pass");
  CHECK(r["exit_code"] == 0);
  CHECK(r["reports"][0]["families"][0].contains("worst_point"));

  Run bad = run({"check", "free_particle", "--f", "1", "--json"});
  CHECK(bad.code == 1);
  CHECK(bad.report()["verdict"] == "fail");
}

TEST_CASE("configuration errors exit with 2 and a JSON error") {
  Run r = run({"check", "nosuch", "--json"});
  CHECK(r.code == 2);
  json j = r.report();
  CHECK(j["error"]["type"] == "config");
  CHECK(j["exit_code"] == 2);
  CHECK(run({"solve2dof", "iliyev"}).code == 2);
  CHECK(run({"check", "free_particle", "--f", "x +"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
}

TEST_CASE("solve2dof and fit") {
  Run s = run({"solve2dof", "snakeboard", "--reduce", "--lambda", "0.5", "--json"});
  CHECK(s.code == 0);
  CHECK(s.out.find("tan(phi)") != std::string::npos);
  Run f = run({"fit", "iliyev", "--basis", "log(cos(q1))", "--json"});
  CHECK(f.code == 0);
  CHECK(f.report()["coefficients"][0]["coefficient"].get<double>() == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("compare, measure and jacobi") {
  Run c = run({"compare", "free_particle", "--f", "auto", "--t", "10", "--json"});
  CHECK(c.code == 0);
  CHECK(c.report()["max_deviation"].get<double>() <= 1e-6);
  CHECK(c.report()["tau_monotone"] == true);
  CHECK(run({"compare", "chaplygin_sleigh", "--f", "1"}).code == 0);
  CHECK(run({"measure", "chaplygin_sleigh"}).code == 1);
  CHECK(run({"measure", "iliyev"}).code == 0);
  CHECK(run({"jacobi", "free_particle", "--samples", "10"}).code == 0);
  CHECK(run({"condvar", "vertical_disk", "--t", "2"}).code == 0);
}

TEST_CASE("simulate writes plot-ready CSV") {
  Run r = run({"simulate", "vertical_disk", "--flow", "lda", "--t", "1", "--dt", "0.1"});
  CHECK(r.code == 0);
  std::istringstream in(r.out);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,theta,phi,p_theta,p_phi");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 11);

  const std::string path = "test_cli_tmp.csv";
  Run w = run({"simulate", "vertical_disk", "--t", "1", "--dt", "0.1", "--out", path, "--json"});
  CHECK(w.code == 0);
  std::ifstream file(path);
  std::getline(file, header);
  CHECK(header == "t,theta,phi,p_theta,p_phi");
  std::remove(path.c_str());
}

TEST_CASE("reports are deterministic for a fixed seed") {
  for (auto args : std::vector<std::vector<std::string>>{{"check", "iliyev", "--seed", "7", "--json"},
                                                        {"reduce", "snakeboard", "--json"},
                                                        {"simulate", "free_particle", "--t", "1"}}) {
    Run a = run(args), b = run(args);
    CHECK(a.code == b.code);
    CHECK(a.out == b.out);
  }
  CHECK(run({"check", "iliyev", "--seed", "7", "--json"}).out != run({"check", "iliyev", "--seed", "8", "--json"}).out);
}
