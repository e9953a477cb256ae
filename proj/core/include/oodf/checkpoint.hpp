#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "oodf/graph.hpp"

namespace oodf {

/// Parameter checkpoint layout (all integers little-endian):
///
///   "OODF"                      4 bytes
///   version                     u32 (kCheckpointVersion)
///   repeated until end of file:
///     name length               u32
///     name                      UTF-8 bytes
///     rank                      u32
///     dims                      rank x u64
///     payload                   prod(dims) x f64 (IEEE-754, little-endian)
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ParameterSet& params);
void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params);

ParameterSet read_checkpoint(std::istream& in);
ParameterSet read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into `target`, which must hold the same names
/// and shapes.
void load_values(ParameterSet& target, const ParameterSet& source);

}  // namespace oodf
