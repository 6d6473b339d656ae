#pragma once

// Spherical signals from meshes, panoramas and planar digits.
//
// Depth: one ray per pixel from the pixel center toward the origin, first hit
// recorded as (distance, sin, cos). Rendering: 12 Lambert-shaded views, one per
// base region, re-projected onto the ray hit points.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stm/healpix.hpp"
#include "stm/mesh.hpp"
#include "stm/transformer.hpp"

namespace stm::projection {

inline constexpr double kMissDistance = 2.0;   // longest chord of the unit sphere
inline constexpr double kParallelEps = 1e-9;   // |det| below this: ray parallel to the triangle
inline constexpr double kDepthTolerance = 1e-2;

struct RayHit {
  double t = 0.0;
  std::int32_t face = -1;
};

// Moller-Trumbore. Returns the ray parameter of the hit, if any, with t > 0.
std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                         const Vec3& c);

// Every triangle, nearest t in (0, t_max]; equal t resolves to the lower face index.
std::optional<RayHit> intersect_brute_force(const TriMesh& mesh, const Vec3& origin, const Vec3& dir,
                                            double t_max);

// Bounding volume hierarchy over a mesh. The mesh must outlive the caster.
class RayCaster {
 public:
  explicit RayCaster(const TriMesh& mesh);

  // Same contract as intersect_brute_force.
  std::optional<RayHit> intersect(const Vec3& origin, const Vec3& dir, double t_max) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Vec3 lo, hi;
    std::int32_t left = -1;   // inner node: children left, left + 1
    std::int32_t first = 0;   // leaf: faces order_[first, first + count)
    std::int32_t count = 0;
  };
  void build(const std::vector<Vec3>& centroids);

  const TriMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<std::int32_t> order_;
};

// First hit of the ray from pix2vec(p) toward the origin, for every pixel.
std::vector<std::optional<RayHit>> cast_pixel_rays(const TriMesh& mesh, healpix::Level level);

// Channels (t, sin, cos) with cos = |n . d|; misses are (2, 0, 0).
SphericalSignal64 raycast_depth(const TriMesh& mesh, healpix::Level level);

// Triangulated convex hull with outward normals; interior points are dropped.
// Throws DegenerateInputError for fewer than 4 points or coplanar input.
TriMesh convex_hull(std::span<const Vec3> points);

// raycast_depth of the mesh, then of its convex hull: 6 channels.
SphericalSignal64 depth_channels(const TriMesh& mesh, healpix::Level level);

// Sum over the six lights at +-2 on each axis of max(0, n . l) / 6, clamped to [0, 1].
// The normal is flipped to face `viewer` first.
double lambert_gray(const Vec3& point, const Vec3& normal, const Vec3& viewer);

struct RenderConfig {
  int resolution = 128;
  double distance = 3.0;
  double fov_degrees = 40.0;  // vertical and horizontal
};

// Pinhole camera looking at the origin. Image rows run top to bottom along -up,
// columns left to right along +right; pixel (i, j) has its center at (i + 0.5, j + 0.5).
struct Camera {
  Vec3 position;
  Vec3 forward, right, up;
  double fov_degrees = 40.0;
  int resolution = 128;

  // Camera at distance along `direction`. The up hint is +z, or +x when looking nearly along z.
  static Camera looking_at_origin(const Vec3& direction, double distance, double fov_degrees, int resolution);

  double focal() const;  // pixels
  // Continuous image coordinates and camera depth (distance along forward).
  std::array<double, 3> project(const Vec3& point) const;
  // Ray direction through image point (sx, sy), scaled so its forward component is 1.
  Vec3 ray(double sx, double sy) const;
};

struct RenderView {
  Camera camera;
  std::vector<double> gray;          // R x R, row-major, background 0
  std::vector<double> depth;         // camera depth, +inf on background
  std::vector<std::int32_t> face;    // -1 on background
};

struct RenderSet {
  int resolution = 0;
  std::vector<RenderView> views;     // one per base region
};

// Z-buffered rasterization; depth per pixel from the intersection of the pixel ray with the
// triangle's plane. Throws ConfigError when resolution < 16.
RenderView render_view(const TriMesh& mesh, const Camera& camera);

// Camera r sits along the normalized mean of base pixel r's corners.
Vec3 region_direction(int region);
RenderSet render_views(const TriMesh& mesh, const RenderConfig& config = {});

struct ReprojectionStats {
  std::int64_t hits = 0;
  std::int64_t sampled = 0;    // gray interpolated from the render
  std::int64_t fallback = 0;   // no usable tap: shaded directly
  std::int64_t misses = 0;
};

// Gray per pixel: hit point projected into its region's render, bilinear over the taps whose depth
// is within kDepthTolerance and whose surface orientation matches the hit face; otherwise direct
// Lambert shading. Misses are 0. Throws ContractError on a malformed render set.
SphericalSignal64 render_projection(const TriMesh& mesh, healpix::Level level, const RenderSet& renders,
                                    ReprojectionStats* stats = nullptr);

struct EquirectImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;  // (v * width + u) * channels + c

  double at(int u, int v, int c) const {
    return data[(static_cast<std::size_t>(v) * static_cast<std::size_t>(width) + static_cast<std::size_t>(u)) *
                    static_cast<std::size_t>(channels) +
                static_cast<std::size_t>(c)];
  }
};

enum class Interpolation { Bilinear, Nearest };
Interpolation parse_interpolation(const std::string& name);  // ConfigError when unknown

// Column u covers longitude 2 pi (u + 0.5) / W - pi, row v colatitude pi (v + 0.5) / H.
SphericalSignal64 equirect_resample(const EquirectImage& img, healpix::Level level, Interpolation mode);

inline constexpr int kDigitSide = 28;
inline constexpr double kDigitCapDegrees = 60.0;

// Gnomonic projection of a 28 x 28 image (row 0 on top) onto the cap around +z; the image square
// spans [-tan 60, tan 60] on the tangent plane. Bilinear with zero padding; 0 beyond the cap.
SphericalSignal64 project_digit(std::span<const float> image, healpix::Level level);

}  // namespace stm::projection
