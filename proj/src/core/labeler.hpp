#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sculpt {

inline constexpr int kNumClothingTypes = 6;
inline constexpr int kTextDim = 512;

// Stable codes 0–5.
enum class ClothingType : int {
  short_sleeve_short_trouser = 0,
  short_sleeve_long_trouser = 1,
  long_sleeve_long_trouser = 2,
  long_sleeve_short_trouser = 3,
  shirt_long_trouser = 4,
  shirt_short_trouser = 5,
};

// "short-sleeve-tshirt/short-trouser", ...
std::string_view clothing_type_name(ClothingType t);
// Short alias: "short-short", "short-long", ...
std::string_view clothing_type_alias(ClothingType t);
// Human-readable form, e.g. "short sleeve T-shirt-short trouser".
std::string_view clothing_type_description(ClothingType t);

// Accepts the canonical name, the alias or the integer code. Throws
// Errc::invalid_argument otherwise.
ClothingType parse_clothing_type(std::string_view text);
ClothingType clothing_type_from_code(int code);

std::array<double, kNumClothingTypes> encode_clothing_type(ClothingType t);
// Inverse of encode_clothing_type; throws unless exactly one entry is 1 and
// the rest 0.
ClothingType decode_clothing_type(std::span<const double> one_hot);

// Text prompts for scoring the six categories with an external image-text
// model, and the argmax over its scores.
std::string clothing_type_prompt(ClothingType t);
ClothingType select_clothing_type(std::span<const double> scores);

struct ColorPrompt {
  std::string upper_color;
  std::string lower_color;
  std::string text;
};

// "The color of the upper body clothing is <upper> and the color of the
// pants is <lower>". Inputs are used verbatim; empty strings are rejected.
ColorPrompt build_color_prompt(const std::string& upper, const std::string& lower);

// Stand-in text encoder: FNV-1a of the prompt seeds a PRNG whose 512 normal
// draws are scaled to unit length.
std::vector<double> mock_text_encoder(std::string_view prompt);

using EmbeddingTable = std::map<std::string, std::vector<double>>;

// Container of kind "embeddings": field "prompts" lists the keys, array
// `embeddings` is count×512 (row i belongs to prompts[i]).
EmbeddingTable import_embeddings(const std::filesystem::path& path, bool renormalize = false);
void export_embeddings(const EmbeddingTable& table, const std::filesystem::path& dir);

struct NamedColor {
  std::string name;
  std::array<double, 3> rgb;  // [0,1], multiples of 1/255
};

// The 16 built-in color words.
const std::vector<NamedColor>& color_lexicon();
const NamedColor& lookup_color(std::string_view name);
std::string color_lexicon_json();

}  // namespace sculpt
