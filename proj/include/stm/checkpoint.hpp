#pragma once

// Named-array checkpoints:
//   "STMW" | u32 version (1) | u32 count |
//   per array: u32 name length | name bytes | u32 rank | u32 dims[rank] | f32 data
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace stm::nn {

struct NamedArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path);

}  // namespace stm::nn
