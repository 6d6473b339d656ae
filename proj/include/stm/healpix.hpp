#pragma once

// HEALPix pixelization of the unit sphere, nested ordering only.
//
// Faces are the 12 base pixels. Inside a face a pixel is addressed by local
// integer coordinates (ix, iy) in [0, nside); the nested index interleaves the
// bits of ix (even positions) and iy (odd positions) below the face number.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "stm/vec3.hpp"

namespace stm::healpix {

inline constexpr int kMaxLevel = 13;

// Subdivision depth; nside = 2^level.
class Level {
 public:
  explicit Level(int level);

  int value() const { return level_; }
  int nside() const { return 1 << level_; }
  std::int64_t n_pixels() const { return std::int64_t{12} << (2 * level_); }

  Level coarser() const;  // throws DomainError at level 0
  Level finer() const;    // throws DomainError at kMaxLevel

  bool operator==(const Level&) const = default;

 private:
  int level_;
};

// Neighbor slots, in the order used by every neighbor table in this project.
enum class Direction : int { SW = 0, W = 1, NW = 2, N = 3, NE = 4, E = 5, SE = 6, S = 7 };
inline constexpr int kNeighborSlots = 8;

using Neighbors = std::array<std::int32_t, kNeighborSlots>;

std::int64_t n_pixels(Level level);

struct FaceCoords {
  int ix = 0;
  int iy = 0;
  int face = 0;
};

FaceCoords nest_to_xyf(Level level, std::int64_t pix);
std::int64_t xyf_to_nest(Level level, const FaceCoords& c);

// Point on face `face` at continuous face coordinates (x, y) in [0, 1]^2.
// (0, 0) is the southern corner, (1, 1) the northern one.
Vec3 face_point(int face, double x, double y);

Vec3 pix2vec(Level level, std::int64_t pix);
std::int64_t vec2pix(Level level, const Vec3& dir);

// Vertices of a pixel's cell in N, W, S, E order.
std::array<Vec3, 4> pixel_corners(Level level, std::int64_t pix);

std::int64_t parent(Level level, std::int64_t pix);
std::array<std::int64_t, 4> children(Level level, std::int64_t pix);

Neighbors neighbors(Level level, std::int64_t pix);

// pi with pix2vec(pi[p]) == Rz(90 deg * quarter_turns) * pix2vec(p).
std::vector<std::int32_t> z_rotation_permutation(Level level, int quarter_turns);

// Immutable per-level tables. Shared read-only across threads.
class GridLevel {
 public:
  explicit GridLevel(Level level);

  // Process-wide cache; tables are built on first use.
  static std::shared_ptr<const GridLevel> get(Level level);

  Level level() const { return level_; }
  std::int64_t n_pix() const { return n_pix_; }
  const Vec3& center(std::int64_t pix) const { return centers_[static_cast<std::size_t>(pix)]; }
  std::span<const Vec3> centers() const { return centers_; }
  std::span<const std::int32_t, kNeighborSlots> neighbors(std::int64_t pix) const;
  std::span<const std::int32_t> neighbor_table() const { return neighbor_table_; }
  int base_region(std::int64_t pix) const { return static_cast<int>(pix >> (2 * level_.value())); }

  // Rows of the neighbor table that contain at least one -1.
  std::int64_t count_incomplete_rows() const;

 private:
  Level level_;
  std::int64_t n_pix_;
  std::vector<Vec3> centers_;
  std::vector<std::int32_t> neighbor_table_;
};

}  // namespace stm::healpix
