#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "sculpt/sculpt.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sculpt_test_capi_" + name);
  fs::remove_all(p);
  return p;
}

std::string take(sculpt_text* t) {
  std::string s(sculpt_text_data(t), sculpt_text_size(t));
  sculpt_text_free(t);
  return s;
}

// Rodrigues rotation, kept local so the test does not reach into the core.
void rotate(const double aa[3], const double p[3], double out[3]) {
  const double th = std::sqrt(aa[0] * aa[0] + aa[1] * aa[1] + aa[2] * aa[2]);
  const double k[3] = {aa[0] / th, aa[1] / th, aa[2] / th};
  const double c = std::cos(th), s = std::sin(th);
  const double kp = k[0] * p[0] + k[1] * p[1] + k[2] * p[2];
  const double kx[3] = {k[1] * p[2] - k[2] * p[1], k[2] * p[0] - k[0] * p[2], k[0] * p[1] - k[1] * p[0]};
  for (int i = 0; i < 3; ++i) out[i] = p[i] * c + kx[i] * s + k[i] * kp * (1 - c);
}

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("status names and version") {
    CHECK(std::strlen(sculpt_version()) > 0);
    CHECK(std::string(sculpt_status_name(SCULPT_OK)) == "ok");
    for (int s = SCULPT_OK; s <= SCULPT_ERR_INTERNAL; ++s)
      CHECK(std::strlen(sculpt_status_name(static_cast<sculpt_status>(s))) > 0);
    sculpt_text_free(nullptr);
    sculpt_body_free(nullptr);
    sculpt_checkpoint_free(nullptr);
    CHECK(std::string(sculpt_text_data(nullptr)).empty());
  }

  TEST_CASE("NULL arguments are rejected with a message") {
    CHECK(sculpt_toybody_create(32, nullptr) == SCULPT_ERR_INVALID_ARGUMENT);
    CHECK(std::strlen(sculpt_last_error()) > 0);
    sculpt_body_info info{};
    CHECK(sculpt_body_get_info(nullptr, &info) == SCULPT_ERR_INVALID_ARGUMENT);
    CHECK(sculpt_label(nullptr, "red", "blue", nullptr) == SCULPT_ERR_INVALID_ARGUMENT);
    sculpt_body* body = nullptr;
    CHECK(sculpt_toybody_create(-4, &body) != SCULPT_OK);
    CHECK(body == nullptr);
  }

  TEST_CASE("toy body poses at rest and rotates equivariantly") {
    sculpt_body* body = nullptr;
    REQUIRE(sculpt_toybody_create(32, &body) == SCULPT_OK);
    CHECK(std::string(sculpt_last_error()).empty());
    sculpt_body_info info{};
    REQUIRE(sculpt_body_get_info(body, &info) == SCULPT_OK);
    CHECK(info.vertices > 0);
    CHECK(info.faces > 0);
    CHECK(info.joints == 3);

    std::vector<double> rest(3 * info.vertices), rot(3 * info.vertices);
    REQUIRE(sculpt_body_pose(body, nullptr, nullptr, nullptr, nullptr, rest.data()) == SCULPT_OK);
    const double aa[3] = {0.3, -0.5, 0.2};
    REQUIRE(sculpt_body_pose(body, nullptr, nullptr, aa, nullptr, rot.data()) == SCULPT_OK);
    // A root rotation is rigid about the root joint, so vertex differences
    // rotate exactly.
    double worst = 0.0;
    for (int v = 1; v < info.vertices; ++v) {
      double d[3], q[3];
      for (int i = 0; i < 3; ++i) d[i] = rest[3 * v + i] - rest[i];
      rotate(aa, d, q);
      for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(q[i] - (rot[3 * v + i] - rot[i])));
    }
    CHECK(worst < 1e-9);

    const double t[3] = {1.0, -2.0, 0.5};
    REQUIRE(sculpt_body_pose(body, nullptr, nullptr, nullptr, t, rot.data()) == SCULPT_OK);
    for (int v = 0; v < info.vertices; ++v)
      for (int i = 0; i < 3; ++i) CHECK(std::abs(rot[3 * v + i] - rest[3 * v + i] - t[i]) < 1e-12);

    const fs::path dir = scratch("body");
    REQUIRE(sculpt_body_save(body, dir.c_str()) == SCULPT_OK);
    sculpt_body* back = nullptr;
    REQUIRE(sculpt_body_load(dir.c_str(), &back) == SCULPT_OK);
    sculpt_body_info info2{};
    REQUIRE(sculpt_body_get_info(back, &info2) == SCULPT_OK);
    CHECK(info2.vertices == info.vertices);
    CHECK(info2.faces == info.faces);
    CHECK(sculpt_body_load((dir / "absent").c_str(), &back) == SCULPT_ERR_IO);
    sculpt_body_free(back);
    sculpt_body_free(body);
    fs::remove_all(dir);
  }

  TEST_CASE("labels, prompts and one-hot codes") {
    sculpt_text* t = nullptr;
    REQUIRE(sculpt_color_prompt("red", "blue", &t) == SCULPT_OK);
    CHECK(take(t) == "The color of the upper body clothing is red and the color of the pants is blue");
    REQUIRE(sculpt_label("long-long", "red", "blue", &t) == SCULPT_OK);
    const json j = json::parse(take(t));
    CHECK(j["c_g"] == json::array({0, 0, 1, 0, 0, 0}));
    CHECK(j["c_t"].size() == 512);
    double oh[6];
    REQUIRE(sculpt_clothing_one_hot("4", oh) == SCULPT_OK);
    for (int i = 0; i < 6; ++i) CHECK(oh[i] == (i == 4 ? 1.0 : 0.0));
    CHECK(sculpt_clothing_one_hot("kilt", oh) == SCULPT_ERR_INVALID_ARGUMENT);
    CHECK(sculpt_color_prompt("", "blue", &t) == SCULPT_ERR_INVALID_ARGUMENT);
  }

  TEST_CASE("dataset generation and validation status codes") {
    const fs::path dir = scratch("geo");
    sculpt_geometry_data_options opt;
    sculpt_geometry_data_defaults(&opt);
    opt.count = 4;
    opt.resolution = 16;
    REQUIRE(sculpt_datagen_geometry(dir.c_str(), &opt) == SCULPT_OK);
    sculpt_text* report = nullptr;
    REQUIRE(sculpt_validate_dataset(dir.c_str(), &report) == SCULPT_OK);
    CHECK(json::parse(take(report))["ok"] == true);
    {
      std::ofstream idx(dir / "index.jsonl", std::ios::app);
      idx << "{\"dispmap\": \"maps/none.png\", \"theta\": [], \"c_g\": [1, 1, 0, 0, 0, 0]}\n";
    }
    CHECK(sculpt_validate_dataset(dir.c_str(), &report) == SCULPT_ERR_VALIDATION);
    CHECK(json::parse(take(report))["ok"] == false);
    CHECK(sculpt_validate_dataset((dir / "absent").c_str(), nullptr) == SCULPT_ERR_IO);
    fs::remove_all(dir);
  }

  TEST_CASE("default config is valid JSON and ablations write six files") {
    sculpt_text* t = nullptr;
    REQUIRE(sculpt_default_config(&t) == SCULPT_OK);
    const json cfg = json::parse(take(t));
    CHECK(cfg.contains("generator"));
    const fs::path dir = scratch("ablation");
    REQUIRE(sculpt_write_ablation(nullptr, dir.c_str()) == SCULPT_OK);
    for (const char* k : {"a", "b", "c", "d", "e", "f"}) CHECK(fs::exists(dir / (std::string(k) + ".json")));
    CHECK(sculpt_checkpoint_load((dir / "absent").c_str(), nullptr) == SCULPT_ERR_INVALID_ARGUMENT);
    sculpt_checkpoint* ck = nullptr;
    CHECK(sculpt_checkpoint_load((dir / "absent").c_str(), &ck) == SCULPT_ERR_IO);
    fs::remove_all(dir);
  }

  TEST_CASE("pose sidecars read through the C interface") {
    const fs::path dir = scratch("pose");
    fs::create_directories(dir);
    json j;
    std::vector<double> body(69, 0.0);
    body[5] = 0.5;
    j["pose"] = body;
    j["root_orient"] = {0.1, 0.2, 0.3};
    j["translation"] = {1.0, 2.0, 3.0};
    std::ofstream(dir / "p.json") << j.dump();
    double pose[69], ro[3], tr[3];
    REQUIRE(sculpt_read_pose((dir / "p.json").c_str(), pose, ro, tr) == SCULPT_OK);
    CHECK(pose[5] == 0.5);
    CHECK(ro[2] == 0.3);
    CHECK(tr[0] == 1.0);
    std::ofstream(dir / "bad.json") << "{\"pose\": [1, 2]}";
    CHECK(sculpt_read_pose((dir / "bad.json").c_str(), pose, ro, tr) != SCULPT_OK);
    fs::remove_all(dir);
  }
}
