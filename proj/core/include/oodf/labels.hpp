#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oodf {

enum class Attribute { kGender, kRace, kAge };

/// Class vocabulary for one labelled attribute. Indices are dense in [0, K).
struct LabelSchema {
  Attribute attribute = Attribute::kGender;
  std::vector<std::string> class_names;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::string_view column() const noexcept;

  /// 0 male, 1 female.
  static LabelSchema gender();
  /// 0 White, 1 Black, 2 Asian, 3 Indian, 4 Other.
  static LabelSchema race();
  /// Age buckets 0-2, 3-9, 10-19, ..., 60-69, more than 70.
  static LabelSchema age();
  static LabelSchema from_name(std::string_view attribute);
};

/// Fields encoded in `<age>_<gender>_<race>_<free>.<ext>` file names.
struct FilenameLabels {
  int age = 0;
  std::size_t gender = 0;
  std::size_t race = 0;
  std::string extension;
};

/// Parses a bare file name. On failure returns nullopt and, if given, sets
/// `reason`.
std::optional<FilenameLabels> parse_face_filename(std::string_view filename,
                                                  std::string* reason = nullptr);

std::size_t label_for(const LabelSchema& schema, const FilenameLabels& fields);

/// Maps the seven-category race vocabulary onto the five-category one:
/// Middle Eastern -> White, East/Southeast Asian -> Asian,
/// Latino_Hispanic -> Other, others unchanged.
std::string harmonize_race(std::string_view seven_category_label);

/// Class index for one CSV cell: accepts numeric codes, the five-category
/// race names, the seven-category names (harmonized), Male/Female, and age
/// buckets or integer ages.
std::size_t parse_label_cell(const LabelSchema& schema, std::string_view cell);

std::size_t age_bucket(int age);

}  // namespace oodf
