#include "oodf/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "oodf/error.hpp"

namespace oodf {

namespace {

constexpr std::array<char, 4> kMagic{'O', 'O', 'D', 'F'};

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw IoError(std::string("checkpoint: truncated while reading ") + what);
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParameterSet& params) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  for (const Parameter& p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put_le<std::uint64_t>(out, d);
    for (double v : p.value.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw IoError("checkpoint: write failed");
}

void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, params);
}

ParameterSet read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kMagic) throw IoError("checkpoint: bad magic bytes");
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  ParameterSet params;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto name_len = get_le<std::uint32_t>(in, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len)) {
      throw IoError("checkpoint: truncated parameter name");
    }
    const auto rank = get_le<std::uint32_t>(in, "rank");
    if (rank > 8) throw IoError("checkpoint: implausible rank for '" + name + "'");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get_le<std::uint64_t>(in, "dims"));
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(in, "payload"));
    params.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return params;
}

ParameterSet read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path.string() + "'");
  return read_checkpoint(in);
}

void load_values(ParameterSet& target, const ParameterSet& source) {
  if (target.size() != source.size()) {
    throw ShapeError("checkpoint: expected " + std::to_string(target.size()) +
                     " parameters, found " + std::to_string(source.size()));
  }
  for (Parameter& p : target) {
    const Parameter* src = source.find(p.name);
    if (!src) throw ShapeError("checkpoint: missing parameter '" + p.name + "'");
    if (src->value.shape() != p.value.shape()) {
      throw ShapeError("checkpoint: parameter '" + p.name + "' has shape " +
                       shape_string(src->value.shape()) + ", expected " +
                       shape_string(p.value.shape()));
    }
    p.value = src->value;
  }
}

}  // namespace oodf
