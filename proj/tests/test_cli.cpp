#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

const fs::path kDir = fs::temp_directory_path() / "ges_test_cli";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args) {
  fs::create_directories(kDir);
  const fs::path err = kDir / "stderr.txt";
  const std::string cmd = std::string(GESSEG_BIN) + " " + args + " 2>" + err.string();
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

}  // namespace

TEST_CASE("errors are reported as json on stderr with a nonzero exit") {
  auto r = run("segment --mode nonsense");
  CHECK(r.code != 0);
  auto j = json::parse(r.err);
  CHECK(j["error"] == "invalid_input");
  CHECK(j["message"].get<std::string>().find("nonsense") != std::string::npos);

  r = run("eval-pq --gt /nonexistent/a.json --pred /nonexistent/b.json");
  CHECK(r.code != 0);
  CHECK(json::parse(r.err)["error"] == "io_error");

  r = run("no-such-command");
  CHECK(r.code != 0);
  CHECK(json::parse(r.err)["error"] == "usage");

  r = run("demo-modularity --alphabet 0");
  CHECK(r.code != 0);
  CHECK(json::parse(r.err)["error"] == "invalid_input");
}

TEST_CASE("synth, eval-pq and eval-parts") {
  const fs::path d = kDir / "synth";
  fs::remove_all(d);
  auto r = run("synth --seed 3 -n 4 --size 48 -o " + d.string());
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["images"] == 4);
  CHECK(fs::exists(d / "panoptic.json"));
  CHECK(fs::exists(d / "parts.json"));
  CHECK(fs::exists(d / "images" / "1.png"));

  const std::string ann = (d / "panoptic.json").string();
  r = run("eval-pq --gt " + ann + " --gt-maps " + (d / "panoptic").string() + " --pred " + ann +
          " --pred-maps " + (d / "panoptic").string() + " -o " + (d / "pq.json").string());
  REQUIRE(r.code == 0);
  CHECK(json::parse(slurp(d / "pq.json"))["all"]["pq"] == 1.0);

  const std::string parts = (d / "parts.json").string();
  r = run("eval-parts --gt " + parts + " --pred " + parts + " -o " + (d / "parts_eval.json").string());
  REQUIRE(r.code == 0);
  CHECK(json::parse(slurp(d / "parts_eval.json"))["overall"]["iou"] == 1.0);
}

TEST_CASE("segment writes predictions, traces and overlays") {
  const fs::path d = kDir / "segment";
  fs::remove_all(d);
  const fs::path cfg = kDir / "segment.json";
  std::ofstream(cfg) << R"({"dataset": {"synthetic": {"image_count": 2, "width": 48, "height": 48}}})";
  auto r = run("segment -c " + cfg.string() + " --overlays -o " + d.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("100.0") != std::string::npos);
  CHECK(fs::exists(d / "prediction.json"));
  CHECK(fs::exists(d / "traces.jsonl"));
  CHECK(fs::exists(d / "overlays" / "1.png"));
  CHECK(json::parse(slurp(d / "pq.json"))["all"]["pq"] == 1.0);
}

TEST_CASE("ablate and segment-parts") {
  const fs::path d = kDir / "ablate";
  fs::remove_all(d);
  const fs::path cfg = kDir / "ablate.json";
  std::ofstream(cfg) << R"({"dataset": {"synthetic": {"width": 48, "height": 48}},
                            "noise": {"jitter_sigma": 1.0, "score_sigma": 0.2},
                            "modes": ["full", "no_evaluator"]})";
  auto r = run("ablate -c " + cfg.string() + " -t 2 -w 2 --seed 5 -o " + d.string());
  REQUIRE(r.code == 0);
  const json report = json::parse(slurp(d / "report.json"));
  CHECK(report["modes"].size() == 2);
  CHECK(report["trials"] == 2);
  CHECK(report["seed"] == 5);

  r = run("segment-parts -c " + cfg.string() + " -o " + d.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("with evaluator") != std::string::npos);
  CHECK(json::parse(slurp(d / "parts_report.json")).contains("without_evaluator"));
}

TEST_CASE("demo-modularity") {
  auto r = run("demo-modularity -a 9 -k 1000 -t 50 --seed 2");
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["log10_monolithic_guesses"].get<double>() == doctest::Approx(954.2425));
  CHECK(j["expected_guesses"] == 9000.0);
}
