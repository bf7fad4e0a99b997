#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "reflectsim/scene.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "reflectsim_cli_test";

struct Run {
  int code;
  std::string err;
};

Run cli(const std::string& args) {
  static int counter = 0;
  fs::create_directories(kRoot);
  const fs::path err = kRoot / ("stderr_" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(REFLECTSIM_CLI) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  std::ifstream f(err);
  std::stringstream s;
  s << f.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string out(const std::string& name) {
  const fs::path p = kRoot / name;
  fs::remove_all(p);
  return p.string();
}

std::string drop_runtime(const std::string& json) {
  std::istringstream in(json);
  std::string line, kept;
  while (std::getline(in, line))
    if (line.find("\"runtime_ms\"") == std::string::npos) kept += line + "\n";
  return kept;
}

void check_manifest(const fs::path& dir) {
  int manifests = 0;
  std::size_t others = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename() == "manifest.json") ++manifests;
    else ++others;
  }
  CHECK(manifests == 1);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(m["files"].size() == others);
  for (const auto& f : m["files"]) CHECK(fs::exists(dir / f.get<std::string>()));
  CHECK(m["scene_hash"].get<std::string>().size() == 16);
}

}  // namespace

TEST_CASE("predict reruns are byte-identical and the manifest lists every file") {
  const std::string args = " predict --eps-real 8 --thickness-mm 20 --workers 1";
  const std::string a = out("pred_a"), b = out("pred_b");
  REQUIRE(cli(args + " --out " + a).code == 0);
  REQUIRE(cli(args + " --out " + b + " --workers 3").code == 0);
  const std::string ta = slurp(fs::path(a) / "trace.csv");
  CHECK(ta == slurp(fs::path(b) / "trace.csv"));
  CHECK(ta.find('\r') == std::string::npos);
  CHECK(ta.rfind("focus_z_mm,re,im,magnitude,phase_deg\n", 0) == 0);
  check_manifest(a);
}

TEST_CASE("synthetic estimate is reproducible for a fixed seed") {
  const std::string args =
      " estimate --synthetic pa66 --synthetic-model go --noise-snr-db 20 --seed 7"
      " --eps-real 2:4:0.5 --eps-imag 0:0.1:0.05 --thickness 30:44:1";
  const std::string a = out("est_a"), b = out("est_b"), c = out("est_c");
  REQUIRE(cli(args + " --out " + a).code == 0);
  REQUIRE(cli(args + " --out " + b).code == 0);
  for (const char* f : {"measurements.csv", "error_surface.csv"})
    CHECK(slurp(fs::path(a) / f) == slurp(fs::path(b) / f));
  CHECK(drop_runtime(slurp(fs::path(a) / "result.json")) == drop_runtime(slurp(fs::path(b) / "result.json")));
  check_manifest(a);

  // another seed changes the data
  REQUIRE(cli(args + " --seed 8 --out " + c).code == 0);
  CHECK(slurp(fs::path(a) / "measurements.csv") != slurp(fs::path(c) / "measurements.csv"));

  // and the written measurement file round-trips through --measurements
  const std::string d = out("est_d");
  REQUIRE(cli(" estimate --measurements " + (fs::path(a) / "measurements.csv").string() +
              " --gap-mm 1 --eps-real 2:4:0.5 --eps-imag 0:0.1:0.05 --thickness 30:44:1 --out " + d)
              .code == 0);
  // values went through 9-digit CSV, so only the argmin has to agree
  const auto ja = nlohmann::json::parse(slurp(fs::path(a) / "result.json"));
  const auto jd = nlohmann::json::parse(slurp(fs::path(d) / "result.json"));
  CHECK(ja["estimate"] == jd["estimate"]);
  CHECK(jd["min_error"].get<double>() == doctest::Approx(ja["min_error"].get<double>()).epsilon(1e-6));
}

TEST_CASE("exit codes") {
  SUBCASE("missing config is an I/O error") {
    const Run r = cli(" psf --config /nonexistent/scene.json --out " + out("x1"));
    CHECK(r.code == 2);
    CHECK(r.err.find("/nonexistent/scene.json") != std::string::npos);
  }
  SUBCASE("focus outside the RoI names the bound") {
    const Run r = cli(" psf --focus 500,920,1500 --out " + out("x2"));
    CHECK(r.code == 1);
    CHECK(r.err.find("z > ") != std::string::npos);
  }
  SUBCASE("bad arguments are validation errors") {
    CHECK(cli(" predict --dz-mm 0 --out " + out("x3")).code == 1);
    CHECK(cli(" estimate --out " + out("x4")).code == 1);
    CHECK(cli(" estimate --synthetic object9 --out " + out("x5")).code == 1);
    CHECK(cli(" psf --scale huge --out " + out("x6")).code == 1);
    CHECK(cli(" estimate --synthetic object1 --eps-real 2:10 --out " + out("x7")).code == 1);
  }
  SUBCASE("non-numeric measurement field cites the line") {
    const fs::path bad = kRoot / "bad.csv";
    std::ofstream(bad) << "x_mm,y_mm,z_mm,re,im\n500,920,770,1,0\n500,920,780,abc,0\n500,920,800,1,0,cal\n";
    const Run r = cli(" estimate --measurements " + bad.string() + " --out " + out("x8"));
    CHECK(r.code == 2);
    CHECK(r.err.find("line 3") != std::string::npos);
  }
  SUBCASE("bad worker env") {
    const Run r = cli("predict --out " + out("x9") + " REFLECTSIM_WORKERS=0");  // extra arg is rejected
    CHECK(r.code == 1);
    setenv("REFLECTSIM_WORKERS", "zero", 1);
    CHECK(cli(" predict --out " + out("x10")).code == 1);
    setenv("REFLECTSIM_WORKERS", "2", 1);
    CHECK(cli(" predict --out " + out("x11")).code == 0);
    unsetenv("REFLECTSIM_WORKERS");
  }
}

TEST_CASE("image of the bare plate is flat at z_bg") {
  const fs::path cfg = kRoot / "bare.json";
  fs::create_directories(kRoot);
  std::ofstream(cfg) << reflectsim::serialize(reflectsim::without_target(reflectsim::default_config()));
  const std::string o = out("img");
  REQUIRE(cli(" image --config " + cfg.string() + " --x-range 480:520:20 --z-min 780 --z-max 820 --out " + o).code == 0);
  std::ifstream f(fs::path(o) / "profile.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line == "x_mm,y_mm,z_imaging_mm,peak_magnitude");
  int rows = 0;
  while (std::getline(f, line)) {
    std::istringstream in(line);
    std::string x, y, z;
    std::getline(in, x, ',');
    std::getline(in, y, ',');
    std::getline(in, z, ',');
    CHECK(std::stod(z) == doctest::Approx(800.0));
    ++rows;
  }
  CHECK(rows == 3);
  check_manifest(o);
  const auto m = nlohmann::json::parse(slurp(fs::path(o) / "manifest.json"));
  CHECK(m["config"] == cfg.string());
  CHECK(m["scene_hash"] == reflectsim::scene_hash(reflectsim::without_target(reflectsim::default_config())));
}
