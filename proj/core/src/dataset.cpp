#include "oodf/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "oodf/error.hpp"
#include "oodf/image_io.hpp"

namespace oodf {

namespace fs = std::filesystem;

std::string_view role_name(Role role) noexcept {
  switch (role) {
    case Role::kTrain: return "train";
    case Role::kTest: return "test";
    case Role::kOutlierExposure: return "outlier_exposure";
  }
  return "unknown";
}

Tensor Dataset::inputs(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ValueError("dataset: no samples selected");
  const Shape& item = samples.at(indices.front()).input.shape();
  Shape shape{indices.size()};
  shape.insert(shape.end(), item.begin(), item.end());
  Tensor out(shape);
  const std::size_t stride = shape_size(item);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Tensor& src = samples.at(indices[i]).input;
    if (src.shape() != item) {
      throw ShapeError("dataset: sample '" + samples[indices[i]].id + "' has shape " +
                       shape_string(src.shape()) + ", expected " + shape_string(item));
    }
    std::copy(src.data().begin(), src.data().end(), out.raw() + i * stride);
  }
  return out;
}

Tensor Dataset::inputs() const {
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return inputs(all);
}

std::vector<std::size_t> Dataset::labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const Sample& s = samples.at(i);
    if (!s.label) throw ValueError("dataset: sample '" + s.id + "' has no label");
    out.push_back(*s.label);
  }
  return out;
}

std::vector<std::size_t> Dataset::labels() const {
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return labels(all);
}

std::vector<std::size_t> Dataset::class_counts(std::size_t num_classes) const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const Sample& s : samples) {
    if (!s.label) continue;
    if (*s.label >= num_classes) {
      throw ValueError("dataset: label " + std::to_string(*s.label) + " of '" + s.id +
                       "' outside [0, " + std::to_string(num_classes) + ")");
    }
    ++counts[*s.label];
  }
  return counts;
}

void Dataset::set_role(Role role) {
  for (Sample& s : samples) s.role = role;
}

Dataset Dataset::subset(std::span<const std::string> ids) const {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) index.emplace(samples[i].id, i);
  Dataset out;
  for (const std::string& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw ValueError("dataset: no sample with identifier '" + id + "'");
    out.samples.push_back(samples[it->second]);
  }
  return out;
}

void Dataset::sort_by_id() {
  std::sort(samples.begin(), samples.end(),
            [](const Sample& a, const Sample& b) { return a.id < b.id; });
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw ValueError("batches: batch_size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(n, begin + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::vector<std::size_t>> batches(const Dataset& dataset, std::size_t batch_size,
                                              std::uint64_t seed, std::size_t epoch) {
  return batches(dataset.size(), batch_size, seed, epoch);
}

Dataset load_image_dir(const fs::path& dir, const LabelSchema& schema, Role role,
                       std::size_t side) {
  if (!fs::is_directory(dir)) throw IoError("image directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  Dataset out;
  for (const fs::path& file : files) {
    const std::string name = file.filename().string();
    std::string reason;
    const auto fields = parse_face_filename(name, &reason);
    if (!fields) {
      out.skipped.push_back({name, reason});
      continue;
    }
    try {
      out.samples.push_back({name, preprocess(read_image(file), side), label_for(schema, *fields),
                             role});
    } catch (const Error& e) {
      out.skipped.push_back({name, e.what()});
    }
  }
  if (out.samples.empty()) {
    throw IoError("no usable images in '" + dir.string() + "' (" +
                  std::to_string(out.skipped.size()) + " skipped)");
  }
  return out;
}

Dataset load_outlier_dir(const fs::path& dir, const LabelSchema& schema, std::size_t side) {
  if (!fs::is_directory(dir)) throw IoError("image directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  Dataset out;
  for (const fs::path& file : files) {
    const std::string name = file.filename().string();
    std::optional<std::size_t> label;
    if (const auto fields = parse_face_filename(name)) label = label_for(schema, *fields);
    try {
      out.samples.push_back(
          {name, preprocess(read_image(file), side), label, Role::kOutlierExposure});
    } catch (const Error& e) {
      out.skipped.push_back({name, e.what()});
    }
  }
  if (out.samples.empty()) throw IoError("no usable images in '" + dir.string() + "'");
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else if (c != '\r') {
      cells.back() += c;
    }
  }
  if (quoted) cells.clear();
  return cells;
}

}  // namespace

Dataset load_csv_labels(const fs::path& image_dir, const fs::path& csv_path,
                        const LabelSchema& schema, Role role, std::size_t side) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open label file '" + csv_path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError(csv_path.string() + ":1: missing header");
  const auto header = split_csv_line(line);
  const auto column = [&](std::string_view name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw IoError(csv_path.string() + ":1: header lacks column '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t file_col = column("file");
  const std::size_t label_col = column(schema.column());

  Dataset out;
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    const std::string where = csv_path.string() + ":" + std::to_string(line_no) + ": ";
    if (cells.size() != header.size()) {
      throw IoError(where + "expected " + std::to_string(header.size()) + " fields, found " +
                    std::to_string(cells.size()));
    }
    const std::string& file = cells[file_col];
    if (!seen.insert(file).second) throw IoError(where + "duplicate row for '" + file + "'");
    std::size_t label = 0;
    try {
      label = parse_label_cell(schema, cells[label_col]);
    } catch (const ValueError& e) {
      throw IoError(where + e.what());
    }
    const fs::path path = image_dir / file;
    if (!fs::is_regular_file(path)) {
      out.skipped.push_back({file, "missing file"});
      continue;
    }
    try {
      out.samples.push_back({file, preprocess(read_image(path), side), label, role});
    } catch (const Error& e) {
      out.skipped.push_back({file, e.what()});
    }
  }
  if (out.samples.empty()) {
    throw IoError("no usable images listed in '" + csv_path.string() + "'");
  }
  out.sort_by_id();
  return out;
}

void write_skip_report(const fs::path& path, std::span<const SkipEntry> skipped) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write skip report '" + path.string() + "'");
  for (const SkipEntry& e : skipped) out << e.identifier << '\t' << e.reason << '\n';
}

}  // namespace oodf
