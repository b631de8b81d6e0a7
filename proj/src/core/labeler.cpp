#include "labeler.hpp"

#include <cmath>

#include "container.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace sculpt {

namespace {

struct TypeInfo {
  const char* name;
  const char* alias;
  const char* description;
};

constexpr TypeInfo kTypes[kNumClothingTypes] = {
    {"short-sleeve-tshirt/short-trouser", "short-short", "short sleeve T-shirt-short trouser"},
    {"short-sleeve-tshirt/long-trouser", "short-long", "short sleeve T-shirt-long trouser"},
    {"long-sleeve-tshirt/long-trouser", "long-long", "long sleeve T-shirt-long trouser"},
    {"long-sleeve-tshirt/short-trouser", "long-short", "long sleeve T-shirt-short trouser"},
    {"shirt/long-trouser", "shirt-long", "shirt-long trouser"},
    {"shirt/short-trouser", "shirt-short", "shirt-short trouser"},
};

const TypeInfo& info(ClothingType t) {
  const int code = static_cast<int>(t);
  require(code >= 0 && code < kNumClothingTypes, Errc::invalid_argument, "invalid clothing type code");
  return kTypes[code];
}

}  // namespace

std::string_view clothing_type_name(ClothingType t) { return info(t).name; }
std::string_view clothing_type_alias(ClothingType t) { return info(t).alias; }
std::string_view clothing_type_description(ClothingType t) { return info(t).description; }

ClothingType clothing_type_from_code(int code) {
  require(code >= 0 && code < kNumClothingTypes, Errc::invalid_argument,
          "clothing type code must be in 0..5, got " + std::to_string(code));
  return static_cast<ClothingType>(code);
}

ClothingType parse_clothing_type(std::string_view text) {
  for (int i = 0; i < kNumClothingTypes; ++i)
    if (text == kTypes[i].name || text == kTypes[i].alias) return static_cast<ClothingType>(i);
  if (text.size() == 1 && text[0] >= '0' && text[0] <= '5') return static_cast<ClothingType>(text[0] - '0');
  fail(Errc::invalid_argument, "unknown clothing type '" + std::string(text) + "'");
}

std::array<double, kNumClothingTypes> encode_clothing_type(ClothingType t) {
  std::array<double, kNumClothingTypes> v{};
  v[static_cast<std::size_t>(clothing_type_from_code(static_cast<int>(t)))] = 1.0;
  return v;
}

ClothingType decode_clothing_type(std::span<const double> one_hot) {
  require(one_hot.size() == kNumClothingTypes, Errc::invalid_argument, "c_g must have 6 entries");
  int hot = -1;
  for (int i = 0; i < kNumClothingTypes; ++i) {
    if (one_hot[i] == 1.0) {
      require(hot < 0, Errc::invalid_argument, "c_g has more than one active entry");
      hot = i;
    } else {
      require(one_hot[i] == 0.0, Errc::invalid_argument, "c_g entries must be 0 or 1");
    }
  }
  require(hot >= 0, Errc::invalid_argument, "c_g has no active entry");
  return static_cast<ClothingType>(hot);
}

std::string clothing_type_prompt(ClothingType t) {
  return "the person is wearing a " + std::string(clothing_type_description(t));
}

ClothingType select_clothing_type(std::span<const double> scores) {
  require(scores.size() == kNumClothingTypes, Errc::invalid_argument, "need one score per clothing type");
  int best = 0;
  for (int i = 1; i < kNumClothingTypes; ++i)
    if (scores[i] > scores[best]) best = i;
  return static_cast<ClothingType>(best);
}

ColorPrompt build_color_prompt(const std::string& upper, const std::string& lower) {
  require(!upper.empty() && !lower.empty(), Errc::invalid_argument, "color prompt needs nonempty upper and lower colors");
  return {upper, lower,
          "The color of the upper body clothing is " + upper + " and the color of the pants is " + lower};
}

std::vector<double> mock_text_encoder(std::string_view prompt) {
  Rng rng(fnv1a64(prompt));
  std::vector<double> v(kTextDim);
  double norm2 = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

EmbeddingTable import_embeddings(const std::filesystem::path& path, bool renormalize) {
  const Container c = Container::read(path);
  std::vector<std::string> prompts;
  try {
    prompts = c.fields().at("prompts").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(Errc::format, path.string() + ": embeddings manifest lacks prompts: " + e.what());
  }
  const auto& shape = c.shape("embeddings");
  require(shape.size() == 2, Errc::format, "embeddings must be count×dim");
  require(shape[1] == kTextDim, Errc::format,
          "embeddings have dimension " + std::to_string(shape[1]) + ", expected 512");
  require(shape[0] == static_cast<std::int64_t>(prompts.size()), Errc::format,
          "embeddings row count does not match prompt list");
  const auto values = c.get_f32("embeddings");
  EmbeddingTable table;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    std::vector<double> row(values.begin() + static_cast<std::ptrdiff_t>(i * kTextDim),
                            values.begin() + static_cast<std::ptrdiff_t>((i + 1) * kTextDim));
    if (renormalize) {
      double n2 = 0.0;
      for (double x : row) n2 += x * x;
      require(n2 > 0.0, Errc::format, "cannot renormalize a zero embedding");
      for (double& x : row) x /= std::sqrt(n2);
    }
    require(table.emplace(prompts[i], std::move(row)).second, Errc::format, "duplicate prompt '" + prompts[i] + "'");
  }
  return table;
}

void export_embeddings(const EmbeddingTable& table, const std::filesystem::path& dir) {
  Container c("embeddings");
  std::vector<std::string> prompts;
  std::vector<double> values;
  for (const auto& [prompt, vec] : table) {
    require(vec.size() == kTextDim, Errc::invalid_argument, "embedding for '" + prompt + "' is not 512-dimensional");
    prompts.push_back(prompt);
    values.insert(values.end(), vec.begin(), vec.end());
  }
  c.fields()["prompts"] = prompts;
  c.fields()["dim"] = kTextDim;
  c.put_f32("embeddings", {static_cast<std::int64_t>(prompts.size()), kTextDim}, std::span<const double>(values));
  c.write(dir);
}

const std::vector<NamedColor>& color_lexicon() {
  static const std::vector<NamedColor> lexicon = [] {
    const std::pair<const char*, std::array<int, 3>> raw[] = {
        {"red", {204, 32, 32}},     {"green", {40, 160, 64}},   {"blue", {32, 64, 200}},
        {"yellow", {230, 210, 40}}, {"orange", {240, 140, 30}}, {"purple", {120, 50, 160}},
        {"pink", {240, 150, 190}},  {"brown", {120, 75, 40}},   {"black", {20, 20, 20}},
        {"white", {240, 240, 240}}, {"gray", {128, 128, 128}},  {"navy", {20, 30, 90}},
        {"beige", {220, 200, 160}}, {"maroon", {110, 20, 40}},  {"olive", {110, 120, 40}},
        {"teal", {30, 130, 130}},
    };
    std::vector<NamedColor> out;
    for (const auto& [name, rgb] : raw)
      out.push_back({name, {rgb[0] / 255.0, rgb[1] / 255.0, rgb[2] / 255.0}});
    return out;
  }();
  return lexicon;
}

const NamedColor& lookup_color(std::string_view name) {
  for (const auto& c : color_lexicon())
    if (c.name == name) return c;
  fail(Errc::invalid_argument, "unknown color '" + std::string(name) + "' (not in the 16-color lexicon)");
}

std::string color_lexicon_json() {
  json arr = json::array();
  for (const auto& c : color_lexicon()) {
    json rgb = json::array();
    for (double x : c.rgb) rgb.push_back(static_cast<int>(std::lround(x * 255.0)));
    arr.push_back({{"name", c.name}, {"rgb8", rgb}});
  }
  return json{{"colors", arr}}.dump(2) + "\n";
}

}  // namespace sculpt
