#include "stm/healpix.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include "stm/errors.hpp"

namespace stm::healpix {
namespace {

constexpr int kJrll[12] = {2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4};
constexpr int kJpll[12] = {1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7};

// Spread the low 16 bits of v to the even bit positions.
std::uint32_t spread_bits(std::uint32_t v) {
  v &= 0xffffu;
  v = (v | (v << 8)) & 0x00ff00ffu;
  v = (v | (v << 4)) & 0x0f0f0f0fu;
  v = (v | (v << 2)) & 0x33333333u;
  v = (v | (v << 1)) & 0x55555555u;
  return v;
}

std::uint32_t compress_bits(std::uint32_t v) {
  v &= 0x55555555u;
  v = (v | (v >> 1)) & 0x33333333u;
  v = (v | (v >> 2)) & 0x0f0f0f0fu;
  v = (v | (v >> 4)) & 0x00ff00ffu;
  v = (v | (v >> 8)) & 0x0000ffffu;
  return v;
}

void check_pixel(Level level, std::int64_t pix) {
  if (pix < 0 || pix >= level.n_pixels()) {
    throw IndexError("pixel " + std::to_string(pix) + " out of range at level " +
                     std::to_string(level.value()));
  }
}

// Face lookup for neighbors that fall off the current face, indexed by
// [offset class][face]; offset class 4 is "same face".
constexpr int kFaceArray[9][12] = {
    {8, 9, 10, 11, -1, -1, -1, -1, 10, 11, 8, 9},  // S
    {5, 6, 7, 4, 8, 9, 10, 11, 9, 10, 11, 8},      // SE
    {-1, -1, -1, -1, 5, 6, 7, 4, -1, -1, -1, -1},  // E
    {4, 5, 6, 7, 11, 8, 9, 10, 11, 8, 9, 10},      // SW
    {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11},        // center
    {1, 2, 3, 0, 0, 1, 2, 3, 5, 6, 7, 4},          // NE
    {-1, -1, -1, -1, 7, 4, 5, 6, -1, -1, -1, -1},  // W
    {3, 0, 1, 2, 3, 0, 1, 2, 4, 5, 6, 7},          // NW
    {2, 3, 0, 1, -1, -1, -1, -1, 0, 1, 2, 3}};     // N

// Coordinate fix-ups when crossing into the neighboring face:
// bit 0 flips x, bit 1 flips y, bit 2 swaps x and y.
constexpr int kSwapArray[9][12] = {
    {0, 0, 0, 0, 0, 0, 0, 0, 3, 3, 3, 3}, {0, 0, 0, 0, 0, 0, 0, 0, 6, 6, 6, 6},
    {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 0, 0, 0, 5, 5, 5, 5},
    {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, {5, 5, 5, 5, 0, 0, 0, 0, 0, 0, 0, 0},
    {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, {6, 6, 6, 6, 0, 0, 0, 0, 0, 0, 0, 0},
    {3, 3, 3, 3, 0, 0, 0, 0, 0, 0, 0, 0}};

// Offsets matching Direction: SW, W, NW, N, NE, E, SE, S.
constexpr int kDx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kDy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

}  // namespace

Level::Level(int level) : level_(level) {
  if (level < 0 || level > kMaxLevel) {
    throw IndexError("level " + std::to_string(level) + " outside [0, " +
                     std::to_string(kMaxLevel) + "]");
  }
}

Level Level::coarser() const {
  if (level_ == 0) throw DomainError("level 0 has no coarser level");
  return Level(level_ - 1);
}

Level Level::finer() const {
  if (level_ == kMaxLevel) throw DomainError("level cap reached");
  return Level(level_ + 1);
}

std::int64_t n_pixels(Level level) { return level.n_pixels(); }

FaceCoords nest_to_xyf(Level level, std::int64_t pix) {
  check_pixel(level, pix);
  const int shift = 2 * level.value();
  const auto local = static_cast<std::uint32_t>(pix & ((std::int64_t{1} << shift) - 1));
  return {static_cast<int>(compress_bits(local)), static_cast<int>(compress_bits(local >> 1)),
          static_cast<int>(pix >> shift)};
}

std::int64_t xyf_to_nest(Level level, const FaceCoords& c) {
  const std::int64_t local =
      spread_bits(static_cast<std::uint32_t>(c.ix)) |
      (std::int64_t{spread_bits(static_cast<std::uint32_t>(c.iy))} << 1);
  return (std::int64_t{c.face} << (2 * level.value())) + local;
}

Vec3 face_point(int face, double x, double y) {
  const double jr = kJrll[face] - x - y;
  double nr = 1.0;
  double z = 0.0;
  double sth = 0.0;
  if (jr < 1.0) {
    nr = jr;
    const double tmp = nr * nr / 3.0;
    z = 1.0 - tmp;
    sth = std::sqrt(tmp * (2.0 - tmp));
  } else if (jr > 3.0) {
    nr = 4.0 - jr;
    const double tmp = nr * nr / 3.0;
    z = tmp - 1.0;
    sth = std::sqrt(tmp * (2.0 - tmp));
  } else {
    z = (2.0 - jr) * 2.0 / 3.0;
    sth = std::sqrt((1.0 - z) * (1.0 + z));
  }
  double t = kJpll[face] * nr + x - y;
  if (t < 0) t += 8.0;
  if (t >= 8.0) t -= 8.0;
  const double phi = nr < 1e-15 ? 0.0 : 0.25 * std::numbers::pi * t / nr;
  return {sth * std::cos(phi), sth * std::sin(phi), z};
}

Vec3 pix2vec(Level level, std::int64_t pix) {
  const FaceCoords c = nest_to_xyf(level, pix);
  const double inv = 1.0 / level.nside();
  return face_point(c.face, (c.ix + 0.5) * inv, (c.iy + 0.5) * inv);
}

std::int64_t vec2pix(Level level, const Vec3& dir) {
  const double len = norm(dir);
  if (!(len > 0.0) || !std::isfinite(len)) throw DomainError("vec2pix: zero or non-finite vector");
  const int nside = level.nside();
  const double z = dir.z / len;
  const double za = std::abs(z);
  const double sth = std::hypot(dir.x, dir.y) / len;
  double tt = std::atan2(dir.y, dir.x) * (2.0 / std::numbers::pi);
  tt = std::fmod(tt, 4.0);
  if (tt < 0) tt += 4.0;
  if (tt >= 4.0) tt = 0.0;

  FaceCoords c;
  if (za <= 2.0 / 3.0) {
    const double t1 = nside * (0.5 + tt);
    const double t2 = nside * z * 0.75;
    const int jp = static_cast<int>(t1 - t2);  // ascending edge line
    const int jm = static_cast<int>(t1 + t2);  // descending edge line
    const int ifp = jp >> level.value();
    const int ifm = jm >> level.value();
    if (ifp == ifm) {
      c.face = ifp | 4;
    } else if (ifp < ifm) {
      c.face = ifp;
    } else {
      c.face = ifm + 8;
    }
    c.ix = jm & (nside - 1);
    c.iy = nside - (jp & (nside - 1)) - 1;
  } else {
    const int ntt = std::min(3, static_cast<int>(tt));
    const double tp = tt - ntt;
    // nside * sqrt(3 (1 - |z|)), written to stay accurate near the poles.
    const double tmp = nside * sth * std::sqrt(3.0 / (1.0 + za));
    int jp = static_cast<int>(tp * tmp);
    int jm = static_cast<int>((1.0 - tp) * tmp);
    jp = std::min(jp, nside - 1);
    jm = std::min(jm, nside - 1);
    if (z >= 0) {
      c.face = ntt;
      c.ix = nside - jm - 1;
      c.iy = nside - jp - 1;
    } else {
      c.face = ntt + 8;
      c.ix = jp;
      c.iy = jm;
    }
  }
  return xyf_to_nest(level, c);
}

std::array<Vec3, 4> pixel_corners(Level level, std::int64_t pix) {
  const FaceCoords c = nest_to_xyf(level, pix);
  const double inv = 1.0 / level.nside();
  const double x0 = c.ix * inv, x1 = (c.ix + 1) * inv;
  const double y0 = c.iy * inv, y1 = (c.iy + 1) * inv;
  return {face_point(c.face, x1, y1), face_point(c.face, x0, y1), face_point(c.face, x0, y0),
          face_point(c.face, x1, y0)};
}

std::int64_t parent(Level level, std::int64_t pix) {
  check_pixel(level, pix);
  if (level.value() == 0) throw DomainError("parent: level 0 pixels have no parent");
  return pix >> 2;
}

std::array<std::int64_t, 4> children(Level level, std::int64_t pix) {
  check_pixel(level, pix);
  if (level.value() == kMaxLevel) throw DomainError("children: level cap reached");
  return {4 * pix, 4 * pix + 1, 4 * pix + 2, 4 * pix + 3};
}

Neighbors neighbors(Level level, std::int64_t pix) {
  const FaceCoords c = nest_to_xyf(level, pix);
  const int nside = level.nside();
  Neighbors out;
  const bool interior = c.ix > 0 && c.ix < nside - 1 && c.iy > 0 && c.iy < nside - 1;
  for (int m = 0; m < kNeighborSlots; ++m) {
    int x = c.ix + kDx[m];
    int y = c.iy + kDy[m];
    if (interior) {
      out[m] = static_cast<std::int32_t>(xyf_to_nest(level, {x, y, c.face}));
      continue;
    }
    int nb = 4;
    if (x < 0) {
      x += nside;
      nb -= 1;
    } else if (x >= nside) {
      x -= nside;
      nb += 1;
    }
    if (y < 0) {
      y += nside;
      nb -= 3;
    } else if (y >= nside) {
      y -= nside;
      nb += 3;
    }
    const int f = kFaceArray[nb][c.face];
    if (f < 0) {
      out[m] = -1;
      continue;
    }
    const int bits = kSwapArray[nb][c.face];
    if (bits & 1) x = nside - x - 1;
    if (bits & 2) y = nside - y - 1;
    if (bits & 4) std::swap(x, y);
    out[m] = static_cast<std::int32_t>(xyf_to_nest(level, {x, y, f}));
  }
  return out;
}

std::vector<std::int32_t> z_rotation_permutation(Level level, int quarter_turns) {
  if (quarter_turns < 0 || quarter_turns > 3) {
    throw DomainError("quarter_turns must be in {0,1,2,3}");
  }
  const std::int64_t n = level.n_pixels();
  std::vector<std::int32_t> perm(static_cast<std::size_t>(n));
  for (std::int64_t p = 0; p < n; ++p) {
    FaceCoords c = nest_to_xyf(level, p);
    // Faces come in rows of four spaced 90 degrees apart in longitude.
    c.face = (c.face & ~3) | ((c.face + quarter_turns) & 3);
    perm[static_cast<std::size_t>(p)] = static_cast<std::int32_t>(xyf_to_nest(level, c));
  }
  return perm;
}

GridLevel::GridLevel(Level level) : level_(level), n_pix_(level.n_pixels()) {
  centers_.resize(static_cast<std::size_t>(n_pix_));
  neighbor_table_.resize(static_cast<std::size_t>(n_pix_) * kNeighborSlots);
  for (std::int64_t p = 0; p < n_pix_; ++p) {
    centers_[static_cast<std::size_t>(p)] = pix2vec(level, p);
    const Neighbors nb = healpix::neighbors(level, p);
    std::copy(nb.begin(), nb.end(),
              neighbor_table_.begin() + static_cast<std::ptrdiff_t>(p * kNeighborSlots));
  }
}

std::shared_ptr<const GridLevel> GridLevel::get(Level level) {
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const GridLevel>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[level.value()];
  if (!slot) slot = std::make_shared<const GridLevel>(level);
  return slot;
}

std::span<const std::int32_t, kNeighborSlots> GridLevel::neighbors(std::int64_t pix) const {
  check_pixel(level_, pix);
  return std::span<const std::int32_t, kNeighborSlots>(
      neighbor_table_.data() + pix * kNeighborSlots, kNeighborSlots);
}

std::int64_t GridLevel::count_incomplete_rows() const {
  std::int64_t count = 0;
  for (std::int64_t p = 0; p < n_pix_; ++p) {
    for (int m = 0; m < kNeighborSlots; ++m) {
      if (neighbor_table_[static_cast<std::size_t>(p * kNeighborSlots + m)] < 0) {
        ++count;
        break;
      }
    }
  }
  return count;
}

}  // namespace stm::healpix
