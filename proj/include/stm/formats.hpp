#pragma once

// File formats: OFF meshes, IDX (MNIST), binary PGM/PPM and the SPHS
// spherical-signal container.
//
// SPHS layout, little-endian:
//   "SPHS" | u8 version (1) | u8 dtype (0 f32, 1 u8 labels) | u16 reserved (0) |
//   u32 level | u32 channels | n_pixels * channels values, pixel-major, nested order

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stm/mesh.hpp"
#include "stm/transformer.hpp"

namespace stm::io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// OFF

struct OffMesh {
  TriMesh mesh;
  std::size_t polygons = 0;        // faces listed in the file
  std::size_t dropped_faces = 0;   // zero-area triangles removed after the fan split
};

// ASCII OFF. Accepts the header glued to the counts ("OFF8 6 0"), '#' comments and
// trailing per-element color values. Polygons are fan-triangulated.
// Throws ParseError carrying the line number.
OffMesh parse_off(std::string_view text);
OffMesh load_off(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// IDX

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
  std::uint32_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols

  // Image i scaled to [0, 1].
  std::vector<float> image(std::size_t i) const;
};

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> format_idx_images(const IdxImages& images);
std::vector<std::uint8_t> format_idx_labels(std::span<const std::uint8_t> labels);

// ---------------------------------------------------------------------------
// PGM / PPM

struct Image {
  int width = 0, height = 0, channels = 1;  // 1 for P5, 3 for P6
  std::vector<std::uint8_t> data;           // row-major, channels interleaved

  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Binary P5/P6 with maxval 255. Other variants throw ParseError.
Image parse_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> format_pnm(const Image& image);
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Image& image);

// ---------------------------------------------------------------------------
// SPHS

enum class SphsType : std::uint8_t { F32 = 0, U8 = 1 };

struct SphsFile {
  healpix::Level level{0};
  std::uint32_t channels = 1;
  SphsType dtype = SphsType::F32;
  std::vector<float> values;          // F32 payload
  std::vector<std::uint8_t> labels;   // U8 payload

  SphericalSignal signal() const;     // labels are widened to float
};

void write_sphs(std::ostream& out, const SphericalSignal& signal);
void write_sphs_labels(std::ostream& out, healpix::Level level, std::span<const std::uint8_t> labels);
std::vector<std::uint8_t> format_sphs(const SphsFile& file);
SphsFile parse_sphs(std::span<const std::uint8_t> bytes);
SphsFile read_sphs(std::istream& in);

void save_sphs(const std::filesystem::path& path, const SphericalSignal& signal);
void save_sphs_labels(const std::filesystem::path& path, healpix::Level level, std::span<const std::uint8_t> labels);
SphsFile load_sphs(const std::filesystem::path& path);

}  // namespace stm::io
