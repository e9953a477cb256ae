#include "oodf/labels.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <utility>

#include "oodf/error.hpp"

namespace oodf {

namespace {

constexpr std::array<std::pair<std::string_view, std::string_view>, 7> kRaceHarmonization{{
    {"White", "White"},
    {"Black", "Black"},
    {"Indian", "Indian"},
    {"East Asian", "Asian"},
    {"Southeast Asian", "Asian"},
    {"Middle Eastern", "White"},
    {"Latino_Hispanic", "Other"},
}};

std::optional<int> parse_int(std::string_view text) {
  int value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<std::size_t> index_of(const LabelSchema& schema, std::string_view name) {
  auto it = std::find(schema.class_names.begin(), schema.class_names.end(), name);
  if (it == schema.class_names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - schema.class_names.begin());
}

}  // namespace

std::string_view LabelSchema::column() const noexcept {
  switch (attribute) {
    case Attribute::kGender: return "gender";
    case Attribute::kRace: return "race";
    case Attribute::kAge: return "age";
  }
  return "";
}

LabelSchema LabelSchema::gender() { return {Attribute::kGender, {"Male", "Female"}}; }

LabelSchema LabelSchema::race() {
  return {Attribute::kRace, {"White", "Black", "Asian", "Indian", "Other"}};
}

LabelSchema LabelSchema::age() {
  return {Attribute::kAge,
          {"0-2", "3-9", "10-19", "20-29", "30-39", "40-49", "50-59", "60-69", "more than 70"}};
}

LabelSchema LabelSchema::from_name(std::string_view attribute) {
  if (attribute == "gender") return gender();
  if (attribute == "race") return race();
  if (attribute == "age") return age();
  throw ValueError("unknown label attribute '" + std::string(attribute) +
                   "' (expected gender, race or age)");
}

std::size_t age_bucket(int age) {
  if (age < 0) throw ValueError("negative age " + std::to_string(age));
  if (age <= 2) return 0;
  if (age <= 9) return 1;
  if (age >= 70) return 8;
  return static_cast<std::size_t>(age / 10) + 1;
}

std::optional<FilenameLabels> parse_face_filename(std::string_view filename, std::string* reason) {
  const auto fail = [&](std::string why) -> std::optional<FilenameLabels> {
    if (reason) *reason = std::move(why);
    return std::nullopt;
  };
  const auto dot = filename.rfind('.');
  if (dot == std::string_view::npos) return fail("no file extension");
  const std::string_view ext = filename.substr(dot + 1);
  if (ext != "png" && ext != "jpg" && ext != "raw") {
    return fail("unsupported extension '" + std::string(ext) + "'");
  }
  const std::string_view stem = filename.substr(0, dot);
  std::array<std::string_view, 3> fields;
  std::size_t pos = 0;
  for (auto& field : fields) {
    const auto us = stem.find('_', pos);
    if (us == std::string_view::npos) return fail("expected <age>_<gender>_<race>_<free>");
    field = stem.substr(pos, us - pos);
    pos = us + 1;
  }
  if (pos >= stem.size()) return fail("empty trailing field");
  const auto age = parse_int(fields[0]);
  const auto gender = parse_int(fields[1]);
  const auto race = parse_int(fields[2]);
  if (!age || *age < 0) return fail("age field is not a non-negative integer");
  if (!gender || *gender < 0 || *gender > 1) return fail("gender field must be 0 or 1");
  if (!race || *race < 0 || *race > 4) return fail("race field must be in 0-4");
  return FilenameLabels{*age, static_cast<std::size_t>(*gender), static_cast<std::size_t>(*race),
                        std::string(ext)};
}

std::size_t label_for(const LabelSchema& schema, const FilenameLabels& fields) {
  switch (schema.attribute) {
    case Attribute::kGender: return fields.gender;
    case Attribute::kRace: return fields.race;
    case Attribute::kAge: return age_bucket(fields.age);
  }
  return 0;
}

std::string harmonize_race(std::string_view label) {
  for (const auto& [from, to] : kRaceHarmonization) {
    if (label == from) return std::string(to);
  }
  throw ValueError("unknown race label '" + std::string(label) + "'");
}

std::size_t parse_label_cell(const LabelSchema& schema, std::string_view raw) {
  const std::string_view cell = trim(raw);
  if (const auto code = parse_int(cell)) {
    if (schema.attribute == Attribute::kAge) return age_bucket(*code);
    if (*code >= 0 && static_cast<std::size_t>(*code) < schema.num_classes()) {
      return static_cast<std::size_t>(*code);
    }
    throw ValueError("label code " + std::string(cell) + " outside [0, " +
                     std::to_string(schema.num_classes()) + ")");
  }
  if (auto idx = index_of(schema, cell)) return *idx;
  if (schema.attribute == Attribute::kRace) {
    if (auto idx = index_of(schema, harmonize_race(cell))) return *idx;
  }
  throw ValueError("unrecognized " + std::string(schema.column()) + " label '" +
                   std::string(cell) + "'");
}

}  // namespace oodf
