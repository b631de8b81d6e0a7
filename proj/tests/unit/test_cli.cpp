#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& work() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "sculpt_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Runs the CLI with `args` (already shell-quoted) and an optional
// environment prefix.
Run sculpt(const std::string& args, const std::string& env = "") {
  const fs::path out = work() / "stdout.txt", err = work() / "stderr.txt";
  const std::string cmd = env + " '" + std::string(SCULPT_CLI) + "' " + args + " >'" + out.string() + "' 2>'" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string golden(const std::string& rel) { return slurp(fs::path(SCULPT_SOURCE_DIR) / "tests" / "golden" / rel); }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help output matches the golden files") {
    const Run top = sculpt("--help");
    CHECK(top.code == 0);
    CHECK(top.out == golden("help/sculpt.txt"));
    for (const char* sub : {"toybody", "unpose", "synth", "render", "camera", "train-geo", "train-tex", "label",
                            "datagen-geo", "datagen-tex", "validate", "ablation", "config"}) {
      CAPTURE(sub);
      const Run r = sculpt(std::string(sub) + " --help");
      CHECK(r.code == 0);
      CHECK(r.out == golden("help/" + std::string(sub) + ".txt"));
    }
  }

  TEST_CASE("label prints the prompt template and one-hot code") {
    const Run r = sculpt("label --upper red --lower blue --ctype long-long");
    REQUIRE(r.code == 0);
    const json j = json::parse(r.out);
    CHECK(j["prompt"].get<std::string>() + "\n" == golden("color_prompt.txt"));
    CHECK(j["c_g"] == json::array({0, 0, 1, 0, 0, 0}));
    CHECK(j["c_t"].size() == 512);
  }

  TEST_CASE("validate exits 0 for good data and 1 for bad data") {
    const fs::path data = work() / "geo";
    REQUIRE(sculpt("datagen-geo --count 4 --resolution 16 --out '" + data.string() + "'").code == 0);
    CHECK(sculpt("validate --data '" + data.string() + "'").code == 0);
    {
      std::ofstream idx(data / "index.jsonl", std::ios::app);
      idx << "{\"dispmap\": \"maps/none.png\", \"theta\": [], \"c_g\": [1, 1, 0, 0, 0, 0]}\n";
    }
    const Run bad = sculpt("validate --data '" + data.string() + "'");
    CHECK(bad.code == 1);
  }

  TEST_CASE("errors use exit code 2 and optional JSON on stderr") {
    const Run missing = sculpt("validate --data /nonexistent/sculpt");
    CHECK(missing.code == 2);
    CHECK(missing.err.find("sculpt:") == 0);
    const Run js = sculpt("--json validate --data /nonexistent/sculpt");
    CHECK(js.code == 2);
    CHECK(js.out.empty());
    const json e = json::parse(js.err);
    CHECK(e.contains("error"));
    CHECK(sculpt("label --upper red").code == 2);  // missing required flag
    CHECK(sculpt("no-such-command").code == 2);
    CHECK(sculpt("label --upper red --lower blue --ctype 9").code == 2);
  }

  TEST_CASE("output does not depend on the worker count") {
    const fs::path a = work() / "threads1", b = work() / "threads3";
    REQUIRE(sculpt("datagen-geo --count 6 --resolution 16 --seed 3 --out '" + a.string() + "'", "SCULPT_THREADS=1")
                .code == 0);
    REQUIRE(sculpt("datagen-geo --count 6 --resolution 16 --seed 3 --out '" + b.string() + "'", "SCULPT_THREADS=3")
                .code == 0);
    CHECK(slurp(a / "index.jsonl") == slurp(b / "index.jsonl"));
    for (const auto& entry : fs::directory_iterator(a / "maps"))
      CHECK(slurp(entry.path()) == slurp(b / "maps" / entry.path().filename()));
  }

  TEST_CASE("toy body, synthesis and render work end to end") {
    const fs::path dir = work() / "e2e";
    fs::create_directories(dir);
    REQUIRE(sculpt("toybody --out '" + (dir / "body").string() + "'").code == 0);
    REQUIRE(sculpt("datagen-geo --count 4 --resolution 16 --out '" + (dir / "geo").string() + "'").code == 0);
    const fs::path cfg = dir / "cfg.json";
    {
      json c = json::parse(sculpt("config").out);
      c["generator"]["resolution"] = 16;
      c["generator"]["channels"] = {8, 8, 8};
      c["generator"]["style_dim"] = 16;
      c["discriminator"]["channels"] = {8, 8, 8};
      c["batch_size"] = 2;
      c["steps"] = 2;
      c["fd_every"] = 0;
      c["fd_samples"] = 2;
      std::ofstream(cfg) << c.dump(2);
    }
    REQUIRE(sculpt("train-geo --config '" + cfg.string() + "' --data '" + (dir / "geo").string() + "' --out '" +
                   (dir / "run").string() + "' --log-every 0")
                .code == 0);
    CHECK(fs::exists(dir / "run" / "metrics.csv"));
    const Run s = sculpt("synth --model '" + (dir / "body").string() + "' --ckpt '" +
                         (dir / "run" / "checkpoint").string() + "' --ctype 2 --out '" + (dir / "out.obj").string() +
                         "'");
    REQUIRE(s.code == 0);
    CHECK(fs::exists(dir / "out.obj"));
    CHECK(fs::exists(dir / "out.mtl"));
    CHECK(fs::exists(dir / "out.png"));
    REQUIRE(sculpt("camera --width 32 --height 32 --out '" + (dir / "cam.json").string() + "'").code == 0);
    const Run r = sculpt("render --mesh '" + (dir / "out.obj").string() + "' --texture '" + (dir / "out.png").string() +
                         "' --camera '" + (dir / "cam.json").string() + "' --out '" + (dir / "img.png").string() + "'");
    CHECK(r.code == 0);
    CHECK(fs::file_size(dir / "img.png") > 0);
    const Run ab = sculpt("ablation --out '" + (dir / "abl").string() + "'");
    CHECK(ab.code == 0);
    for (const char* k : {"a", "b", "c", "d", "e", "f"}) CHECK(fs::exists(dir / "abl" / (std::string(k) + ".json")));
  }
}
