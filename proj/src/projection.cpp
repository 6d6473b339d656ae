#include "stm/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "stm/errors.hpp"

namespace stm::projection {

namespace {

// Lets a ray through a shared edge or vertex hit at least one of the adjacent triangles.
constexpr double kBarycentricSlack = 1e-12;

// Taps of a render count for a hit point only when their surface is this close in orientation.
constexpr double kNormalMatch = 0.9;

constexpr double kInf = std::numeric_limits<double>::infinity();

bool closer(const RayHit& a, const RayHit& b) { return a.t < b.t || (a.t == b.t && a.face < b.face); }

const Vec3& vertex(const TriMesh& mesh, std::int32_t face, int k) {
  return mesh.vertices[static_cast<std::size_t>(mesh.faces[static_cast<std::size_t>(face)][k])];
}

}  // namespace

std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                         const Vec3& c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = cross(dir, e2);
  const double det = dot(e1, p);
  if (std::abs(det) < kParallelEps) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = dot(s, p) * inv;
  if (u < -kBarycentricSlack || u > 1.0 + kBarycentricSlack) return std::nullopt;
  const Vec3 q = cross(s, e1);
  const double v = dot(dir, q) * inv;
  if (v < -kBarycentricSlack || u + v > 1.0 + kBarycentricSlack) return std::nullopt;
  const double t = dot(e2, q) * inv;
  if (!(t > 0.0)) return std::nullopt;
  return t;
}

std::optional<RayHit> intersect_brute_force(const TriMesh& mesh, const Vec3& origin, const Vec3& dir,
                                            double t_max) {
  std::optional<RayHit> best;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto face = static_cast<std::int32_t>(f);
    const auto t = intersect_triangle(origin, dir, vertex(mesh, face, 0), vertex(mesh, face, 1),
                                      vertex(mesh, face, 2));
    if (!t || *t > t_max) continue;
    const RayHit hit{*t, face};
    if (!best || closer(hit, *best)) best = hit;
  }
  return best;
}

// ---------------------------------------------------------------------------------------------
// BVH

RayCaster::RayCaster(const TriMesh& mesh) : mesh_(&mesh) {
  const auto n = static_cast<std::int32_t>(mesh.faces.size());
  order_.resize(static_cast<std::size_t>(n));
  std::vector<Vec3> centroids(static_cast<std::size_t>(n));
  for (std::int32_t f = 0; f < n; ++f) {
    order_[static_cast<std::size_t>(f)] = f;
    centroids[static_cast<std::size_t>(f)] =
        (vertex(mesh, f, 0) + vertex(mesh, f, 1) + vertex(mesh, f, 2)) / 3.0;
  }
  if (n == 0) return;
  nodes_.reserve(static_cast<std::size_t>(2 * n));
  build(centroids);
}

// Median split on the longest centroid axis; siblings are stored next to each other.
void RayCaster::build(const std::vector<Vec3>& centroids) {
  struct Task {
    std::int32_t node, first, count;
  };
  nodes_.emplace_back();
  std::vector<Task> stack{{0, 0, static_cast<std::int32_t>(order_.size())}};
  while (!stack.empty()) {
    const Task task = stack.back();
    stack.pop_back();
    Vec3 lo{kInf, kInf, kInf}, hi{-kInf, -kInf, -kInf};
    Vec3 clo = lo, chi = hi;
    for (std::int32_t i = task.first; i < task.first + task.count; ++i) {
      const auto f = order_[static_cast<std::size_t>(i)];
      for (int k = 0; k < 3; ++k) {
        const Vec3& v = vertex(*mesh_, f, k);
        lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
        hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
      }
      const Vec3& c = centroids[static_cast<std::size_t>(f)];
      clo = {std::min(clo.x, c.x), std::min(clo.y, c.y), std::min(clo.z, c.z)};
      chi = {std::max(chi.x, c.x), std::max(chi.y, c.y), std::max(chi.z, c.z)};
    }
    const Vec3 pad = (hi - lo) * 1e-9 + Vec3{1e-12, 1e-12, 1e-12};
    Node& node = nodes_[static_cast<std::size_t>(task.node)];
    node.lo = lo - pad;
    node.hi = hi + pad;
    if (task.count <= 4) {
      node.first = task.first;
      node.count = task.count;
      continue;
    }
    const Vec3 extent = chi - clo;
    const int axis = extent.x >= extent.y && extent.x >= extent.z ? 0 : (extent.y >= extent.z ? 1 : 2);
    const std::int32_t half = task.count / 2;
    auto begin = order_.begin() + task.first;
    std::nth_element(begin, begin + half, begin + task.count, [&](std::int32_t a, std::int32_t b) {
      const double ca = centroids[static_cast<std::size_t>(a)][axis];
      const double cb = centroids[static_cast<std::size_t>(b)][axis];
      return ca < cb || (ca == cb && a < b);
    });
    const auto left = static_cast<std::int32_t>(nodes_.size());
    nodes_[static_cast<std::size_t>(task.node)].left = left;
    nodes_.emplace_back();
    nodes_.emplace_back();
    stack.push_back({left, task.first, half});
    stack.push_back({left + 1, task.first + half, task.count - half});
  }
}

namespace {

bool slab(const Vec3& lo, const Vec3& hi, const Vec3& o, const Vec3& d, double t_max) {
  double t0 = 0.0, t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return false;
      continue;
    }
    const double inv = 1.0 / d[a];
    double ta = (lo[a] - o[a]) * inv;
    double tb = (hi[a] - o[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

std::optional<RayHit> RayCaster::intersect(const Vec3& origin, const Vec3& dir, double t_max) const {
  std::optional<RayHit> best;
  if (nodes_.empty()) return best;
  std::int32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
    const double limit = best ? best->t : t_max;
    if (!slab(node.lo, node.hi, origin, dir, limit)) continue;
    if (node.left < 0) {
      for (std::int32_t i = node.first; i < node.first + node.count; ++i) {
        const auto f = order_[static_cast<std::size_t>(i)];
        const auto t = intersect_triangle(origin, dir, vertex(*mesh_, f, 0), vertex(*mesh_, f, 1),
                                          vertex(*mesh_, f, 2));
        if (!t || *t > t_max) continue;
        const RayHit hit{*t, f};
        if (!best || closer(hit, *best)) best = hit;
      }
      continue;
    }
    stack[top++] = node.left;
    stack[top++] = node.left + 1;
  }
  return best;
}

// ---------------------------------------------------------------------------------------------
// Depth

std::vector<std::optional<RayHit>> cast_pixel_rays(const TriMesh& mesh, healpix::Level level) {
  const auto grid = healpix::GridLevel::get(level);
  const RayCaster caster(mesh);
  const std::int64_t n = grid->n_pix();
  std::vector<std::optional<RayHit>> hits(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < n; ++p) {
    const Vec3& o = grid->center(p);
    hits[static_cast<std::size_t>(p)] = caster.intersect(o, -o, kMissDistance);
  }
  return hits;
}

SphericalSignal64 raycast_depth(const TriMesh& mesh, healpix::Level level) {
  const auto grid = healpix::GridLevel::get(level);
  const auto hits = cast_pixel_rays(mesh, level);
  SphericalSignal64 out(level, 3);
  for (std::int64_t p = 0; p < grid->n_pix(); ++p) {
    const auto& hit = hits[static_cast<std::size_t>(p)];
    if (!hit) {
      out.at(p, 0) = kMissDistance;
      continue;
    }
    const Vec3 d = -grid->center(p);
    const double c = std::min(1.0, std::abs(dot(mesh.face_normals[static_cast<std::size_t>(hit->face)], d)));
    out.at(p, 0) = hit->t;
    out.at(p, 1) = std::sqrt(std::max(0.0, 1.0 - c * c));
    out.at(p, 2) = c;
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Convex hull, incremental

namespace {

struct HullFace {
  std::array<std::int32_t, 3> v;
  Vec3 n;
  double d = 0.0;
  bool alive = true;
};

std::uint64_t edge_key(std::int32_t a, std::int32_t b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

TriMesh convex_hull(std::span<const Vec3> points) {
  const auto n = static_cast<std::int32_t>(points.size());
  if (n < 4) throw DegenerateInputError("convex hull needs at least 4 points");
  const auto box = bounding_box(points);
  const Vec3 ext = box[1] - box[0];
  const double scale = std::max({ext.x, ext.y, ext.z});
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DegenerateInputError("convex hull: coincident points");
  const double eps = 1e-10 * scale;
  const double flat = 1e-9 * scale;
  const auto P = [&](std::int32_t i) -> const Vec3& { return points[static_cast<std::size_t>(i)]; };

  // Initial tetrahedron from extreme points.
  std::int32_t i0 = 0;
  for (std::int32_t i = 1; i < n; ++i) {
    if (P(i).x < P(i0).x) i0 = i;
  }
  std::int32_t i1 = i0;
  double best = 0.0;
  for (std::int32_t i = 0; i < n; ++i) {
    const double d = norm(P(i) - P(i0));
    if (d > best) best = d, i1 = i;
  }
  if (best <= flat) throw DegenerateInputError("convex hull: coincident points");
  const Vec3 axis = normalized(P(i1) - P(i0));
  std::int32_t i2 = i0;
  best = 0.0;
  for (std::int32_t i = 0; i < n; ++i) {
    const double d = norm(cross(P(i) - P(i0), axis));
    if (d > best) best = d, i2 = i;
  }
  if (best <= flat) throw DegenerateInputError("convex hull: collinear points");
  const Vec3 pn = normalized(cross(P(i1) - P(i0), P(i2) - P(i0)));
  std::int32_t i3 = i0;
  best = 0.0;
  for (std::int32_t i = 0; i < n; ++i) {
    const double d = std::abs(dot(P(i) - P(i0), pn));
    if (d > best) best = d, i3 = i;
  }
  if (best <= flat) throw DegenerateInputError("convex hull: coplanar points");

  std::vector<HullFace> faces;
  std::unordered_map<std::uint64_t, std::int32_t> edges;  // directed edge -> face
  const auto add_face = [&](std::int32_t a, std::int32_t b, std::int32_t c) {
    HullFace f;
    f.v = {a, b, c};
    const Vec3 cr = cross(P(b) - P(a), P(c) - P(a));
    const double len = norm(cr);
    f.n = len > 0.0 ? cr / len : Vec3{};
    f.d = dot(f.n, P(a));
    const auto id = static_cast<std::int32_t>(faces.size());
    faces.push_back(f);
    edges[edge_key(a, b)] = id;
    edges[edge_key(b, c)] = id;
    edges[edge_key(c, a)] = id;
  };
  const std::array<std::int32_t, 4> tet{i0, i1, i2, i3};
  for (int k = 0; k < 4; ++k) {
    std::array<std::int32_t, 3> f{};
    int m = 0;
    for (int j = 0; j < 4; ++j) {
      if (j != k) f[static_cast<std::size_t>(m++)] = tet[static_cast<std::size_t>(j)];
    }
    if (dot(cross(P(f[1]) - P(f[0]), P(f[2]) - P(f[0])), P(tet[static_cast<std::size_t>(k)]) - P(f[0])) > 0) {
      std::swap(f[1], f[2]);
    }
    add_face(f[0], f[1], f[2]);
  }

  std::vector<std::int32_t> visible;
  std::vector<std::array<std::int32_t, 2>> horizon;
  for (std::int32_t p = 0; p < n; ++p) {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    visible.clear();
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (faces[f].alive && dot(faces[f].n, P(p)) - faces[f].d > eps) visible.push_back(static_cast<std::int32_t>(f));
    }
    if (visible.empty()) continue;
    for (const auto f : visible) faces[static_cast<std::size_t>(f)].alive = false;
    horizon.clear();
    for (const auto f : visible) {
      const auto& v = faces[static_cast<std::size_t>(f)].v;
      for (int k = 0; k < 3; ++k) {
        const std::int32_t a = v[static_cast<std::size_t>(k)];
        const std::int32_t b = v[static_cast<std::size_t>((k + 1) % 3)];
        const auto twin = edges.find(edge_key(b, a));
        if (twin != edges.end() && faces[static_cast<std::size_t>(twin->second)].alive) horizon.push_back({a, b});
      }
    }
    for (const auto f : visible) {
      const auto& v = faces[static_cast<std::size_t>(f)].v;
      for (int k = 0; k < 3; ++k) {
        const auto it = edges.find(edge_key(v[static_cast<std::size_t>(k)], v[static_cast<std::size_t>((k + 1) % 3)]));
        if (it != edges.end() && it->second == f) edges.erase(it);
      }
    }
    for (const auto& e : horizon) add_face(e[0], e[1], p);
  }

  std::vector<std::int32_t> remap(static_cast<std::size_t>(n), -1);
  std::vector<Vec3> verts;
  std::vector<Face> tris;
  for (const auto& f : faces) {
    if (!f.alive) continue;
    Face tri{};
    for (int k = 0; k < 3; ++k) {
      auto& r = remap[static_cast<std::size_t>(f.v[static_cast<std::size_t>(k)])];
      if (r < 0) {
        r = static_cast<std::int32_t>(verts.size());
        verts.push_back(P(f.v[static_cast<std::size_t>(k)]));
      }
      tri[static_cast<std::size_t>(k)] = r;
    }
    tris.push_back(tri);
  }
  return make_mesh(std::move(verts), std::move(tris));
}

SphericalSignal64 depth_channels(const TriMesh& mesh, healpix::Level level) {
  const auto model = raycast_depth(mesh, level);
  const auto hull = raycast_depth(convex_hull(mesh.vertices), level);
  SphericalSignal64 out(level, 6);
  for (std::int64_t p = 0; p < out.n_pix(); ++p) {
    for (int c = 0; c < 3; ++c) {
      out.at(p, c) = model.at(p, c);
      out.at(p, c + 3) = hull.at(p, c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Rendering

double lambert_gray(const Vec3& point, const Vec3& normal, const Vec3& viewer) {
  const Vec3 n = dot(normal, viewer - point) < 0.0 ? -normal : normal;
  double sum = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    for (const double s : {2.0, -2.0}) {
      Vec3 light{};
      if (axis == 0) light.x = s;
      if (axis == 1) light.y = s;
      if (axis == 2) light.z = s;
      const Vec3 l = light - point;
      const double len = norm(l);
      if (len > 0.0) sum += std::max(0.0, dot(n, l) / len);
    }
  }
  return std::clamp(sum / 6.0, 0.0, 1.0);
}

Camera Camera::looking_at_origin(const Vec3& direction, double distance, double fov_degrees, int resolution) {
  Camera cam;
  const Vec3 c = normalized(direction);
  cam.position = c * distance;
  cam.forward = -c;
  const Vec3 hint = std::abs(c.z) > 0.99 ? Vec3{1, 0, 0} : Vec3{0, 0, 1};
  cam.right = normalized(cross(cam.forward, hint));
  cam.up = cross(cam.right, cam.forward);
  cam.fov_degrees = fov_degrees;
  cam.resolution = resolution;
  return cam;
}

double Camera::focal() const {
  return 0.5 * resolution / std::tan(0.5 * fov_degrees * std::numbers::pi / 180.0);
}

std::array<double, 3> Camera::project(const Vec3& point) const {
  const Vec3 v = point - position;
  const double z = dot(v, forward);
  const double f = focal();
  const double half = 0.5 * resolution;
  return {half + f * dot(v, right) / z, half - f * dot(v, up) / z, z};
}

Vec3 Camera::ray(double sx, double sy) const {
  const double f = focal();
  const double half = 0.5 * resolution;
  return forward + right * ((sx - half) / f) - up * ((sy - half) / f);
}

RenderView render_view(const TriMesh& mesh, const Camera& camera) {
  const int R = camera.resolution;
  if (R < 16) throw ConfigError("render resolution must be at least 16, got " + std::to_string(R));
  if (!(camera.fov_degrees > 0.0 && camera.fov_degrees < 180.0)) {
    throw ConfigError("field of view must be in (0, 180) degrees");
  }
  const auto size = static_cast<std::size_t>(R) * static_cast<std::size_t>(R);
  RenderView view{camera, std::vector<double>(size, 0.0), std::vector<double>(size, kInf),
                  std::vector<std::int32_t>(size, -1)};

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto face = static_cast<std::int32_t>(f);
    std::array<std::array<double, 3>, 3> s{};
    bool behind = false;
    for (int k = 0; k < 3; ++k) {
      s[static_cast<std::size_t>(k)] = camera.project(vertex(mesh, face, k));
      behind = behind || !(s[static_cast<std::size_t>(k)][2] > 1e-9);
    }
    if (behind) continue;
    const auto edge = [](const std::array<double, 3>& a, const std::array<double, 3>& b, double x, double y) {
      return (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
    };
    const double area = edge(s[0], s[1], s[2][0], s[2][1]);
    if (std::abs(area) < 1e-18) continue;
    const double slack = -1e-9 * std::abs(area);
    const double xmin = std::min({s[0][0], s[1][0], s[2][0]}), xmax = std::max({s[0][0], s[1][0], s[2][0]});
    const double ymin = std::min({s[0][1], s[1][1], s[2][1]}), ymax = std::max({s[0][1], s[1][1], s[2][1]});
    const int i_lo = std::max(0, static_cast<int>(std::floor(xmin - 0.5)));
    const int i_hi = std::min(R - 1, static_cast<int>(std::ceil(xmax - 0.5)));
    const int j_lo = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
    const int j_hi = std::min(R - 1, static_cast<int>(std::ceil(ymax - 0.5)));
    const Vec3& n = mesh.face_normals[f];
    const double plane = dot(n, vertex(mesh, face, 0) - camera.position);
    for (int j = j_lo; j <= j_hi; ++j) {
      for (int i = i_lo; i <= i_hi; ++i) {
        const double x = i + 0.5, y = j + 0.5;
        const double w0 = edge(s[1], s[2], x, y) * (area > 0 ? 1 : -1);
        const double w1 = edge(s[2], s[0], x, y) * (area > 0 ? 1 : -1);
        const double w2 = edge(s[0], s[1], x, y) * (area > 0 ? 1 : -1);
        if (w0 < slack || w1 < slack || w2 < slack) continue;
        const double denom = dot(n, camera.ray(x, y));
        if (std::abs(denom) < 1e-15) continue;
        const double t = plane / denom;
        const auto idx = static_cast<std::size_t>(j) * static_cast<std::size_t>(R) + static_cast<std::size_t>(i);
        if (t > 0.0 && t < view.depth[idx]) {
          view.depth[idx] = t;
          view.face[idx] = face;
        }
      }
    }
  }
  for (int j = 0; j < R; ++j) {
    for (int i = 0; i < R; ++i) {
      const auto idx = static_cast<std::size_t>(j) * static_cast<std::size_t>(R) + static_cast<std::size_t>(i);
      if (view.face[idx] < 0) continue;
      const Vec3 x = camera.position + camera.ray(i + 0.5, j + 0.5) * view.depth[idx];
      view.gray[idx] = lambert_gray(x, mesh.face_normals[static_cast<std::size_t>(view.face[idx])], camera.position);
    }
  }
  return view;
}

Vec3 region_direction(int region) {
  if (region < 0 || region >= 12) throw IndexError("base region " + std::to_string(region) + " out of range");
  const auto corners = healpix::pixel_corners(healpix::Level(0), region);
  return normalized(corners[0] + corners[1] + corners[2] + corners[3]);
}

RenderSet render_views(const TriMesh& mesh, const RenderConfig& config) {
  if (config.resolution < 16) {
    throw ConfigError("render resolution must be at least 16, got " + std::to_string(config.resolution));
  }
  if (!(config.distance > 1.0)) throw ConfigError("camera distance must exceed the unit sphere");
  RenderSet set;
  set.resolution = config.resolution;
  set.views.resize(12);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < 12; ++r) {
    const auto cam = Camera::looking_at_origin(region_direction(r), config.distance, config.fov_degrees,
                                               config.resolution);
    set.views[static_cast<std::size_t>(r)] = render_view(mesh, cam);
  }
  return set;
}

SphericalSignal64 render_projection(const TriMesh& mesh, healpix::Level level, const RenderSet& renders,
                                    ReprojectionStats* stats) {
  const int R = renders.resolution;
  if (renders.views.size() != 12) throw ContractError("render set needs 12 views");
  const auto size = static_cast<std::size_t>(R) * static_cast<std::size_t>(R);
  for (const auto& v : renders.views) {
    if (v.camera.resolution != R || v.gray.size() != size || v.depth.size() != size || v.face.size() != size) {
      throw ContractError("render view does not match the set resolution " + std::to_string(R));
    }
  }
  const auto grid = healpix::GridLevel::get(level);
  const auto hits = cast_pixel_rays(mesh, level);
  SphericalSignal64 out(level, 1);
  std::int64_t n_hit = 0, n_sampled = 0, n_fallback = 0;
  const std::int64_t n = grid->n_pix();
#pragma omp parallel for schedule(static) reduction(+ : n_hit, n_sampled, n_fallback)
  for (std::int64_t p = 0; p < n; ++p) {
    const auto& hit = hits[static_cast<std::size_t>(p)];
    if (!hit) continue;
    ++n_hit;
    const Vec3& o = grid->center(p);
    const Vec3 x = o - o * hit->t;
    const Vec3& nrm = mesh.face_normals[static_cast<std::size_t>(hit->face)];
    const auto& view = renders.views[static_cast<std::size_t>(grid->base_region(p))];
    const auto s = view.camera.project(x);
    const double u = s[0] - 0.5, v = s[1] - 0.5;
    const double i0 = std::floor(u), j0 = std::floor(v);
    const double fu = u - i0, fv = v - j0;
    double acc = 0.0, wsum = 0.0;
    for (int dj = 0; dj < 2; ++dj) {
      for (int di = 0; di < 2; ++di) {
        const double i = i0 + di, j = j0 + dj;
        if (!(i >= 0 && j >= 0 && i < R && j < R)) continue;
        const auto idx = static_cast<std::size_t>(j) * static_cast<std::size_t>(R) + static_cast<std::size_t>(i);
        const auto f = view.face[idx];
        if (f < 0 || std::abs(view.depth[idx] - s[2]) > kDepthTolerance) continue;
        if (std::abs(dot(mesh.face_normals[static_cast<std::size_t>(f)], nrm)) < kNormalMatch) continue;
        const double w = (di ? fu : 1.0 - fu) * (dj ? fv : 1.0 - fv);
        acc += w * view.gray[idx];
        wsum += w;
      }
    }
    if (wsum > 0.0) {
      out.at(p, 0) = acc / wsum;
      ++n_sampled;
    } else {
      out.at(p, 0) = lambert_gray(x, nrm, o);
      ++n_fallback;
    }
  }
  if (stats) *stats = {n_hit, n_sampled, n_fallback, n - n_hit};
  return out;
}

// ---------------------------------------------------------------------------------------------
// Equirectangular

Interpolation parse_interpolation(const std::string& name) {
  if (name == "bilinear") return Interpolation::Bilinear;
  if (name == "nearest") return Interpolation::Nearest;
  throw ConfigError("unknown interpolation mode '" + name + "' (bilinear or nearest)");
}

SphericalSignal64 equirect_resample(const EquirectImage& img, healpix::Level level, Interpolation mode) {
  if (img.width < 1 || img.height < 1 || img.channels < 1 ||
      img.data.size() != static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) *
                             static_cast<std::size_t>(img.channels)) {
    throw ContractError("equirectangular image has inconsistent dimensions");
  }
  const auto grid = healpix::GridLevel::get(level);
  const int W = img.width, H = img.height, C = img.channels;
  SphericalSignal64 out(level, C);
  const std::int64_t n = grid->n_pix();
  const double pi = std::numbers::pi;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < n; ++p) {
    const Vec3& d = grid->center(p);
    const double lambda = std::atan2(d.y, d.x);
    const double theta = std::acos(std::clamp(d.z, -1.0, 1.0));
    const double uc = (lambda + pi) * W / (2 * pi) - 0.5;
    const double vc = theta * H / pi - 0.5;
    if (mode == Interpolation::Nearest) {
      const int u = ((static_cast<int>(std::floor(uc + 0.5)) % W) + W) % W;
      const int v = std::clamp(static_cast<int>(std::floor(vc + 0.5)), 0, H - 1);
      for (int c = 0; c < C; ++c) out.at(p, c) = img.at(u, v, c);
      continue;
    }
    const double uf = std::floor(uc), vf = std::floor(vc);
    const double a = uc - uf, b = vc - vf;
    const int u0 = ((static_cast<int>(uf) % W) + W) % W;
    const int u1 = (u0 + 1) % W;
    const int v0 = std::clamp(static_cast<int>(vf), 0, H - 1);
    const int v1 = std::clamp(static_cast<int>(vf) + 1, 0, H - 1);
    for (int c = 0; c < C; ++c) {
      out.at(p, c) = (1 - a) * (1 - b) * img.at(u0, v0, c) + a * (1 - b) * img.at(u1, v0, c) +
                     (1 - a) * b * img.at(u0, v1, c) + a * b * img.at(u1, v1, c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Digits

SphericalSignal64 project_digit(std::span<const float> image, healpix::Level level) {
  if (image.size() != static_cast<std::size_t>(kDigitSide * kDigitSide)) {
    throw ContractError("digit image must be 28 x 28, got " + std::to_string(image.size()) + " values");
  }
  const auto grid = healpix::GridLevel::get(level);
  const double half_extent = std::tan(kDigitCapDegrees * std::numbers::pi / 180.0);
  const double z_min = std::cos(kDigitCapDegrees * std::numbers::pi / 180.0);
  const double half = 0.5 * kDigitSide;
  const auto px = [&](int r, int c) -> double {
    if (r < 0 || c < 0 || r >= kDigitSide || c >= kDigitSide) return 0.0;
    return image[static_cast<std::size_t>(r * kDigitSide + c)];
  };
  SphericalSignal64 out(level, 1);
  const std::int64_t n = grid->n_pix();
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < n; ++p) {
    const Vec3& d = grid->center(p);
    if (d.z < z_min) continue;
    const double X = d.x / d.z, Y = d.y / d.z;
    const double cc = (X / half_extent + 1.0) * half - 0.5;
    const double rr = (1.0 - Y / half_extent) * half - 0.5;
    const double c0 = std::floor(cc), r0 = std::floor(rr);
    const double a = cc - c0, b = rr - r0;
    const int ic = static_cast<int>(c0), ir = static_cast<int>(r0);
    out.at(p, 0) = (1 - a) * (1 - b) * px(ir, ic) + a * (1 - b) * px(ir, ic + 1) + (1 - a) * b * px(ir + 1, ic) +
                   a * b * px(ir + 1, ic + 1);
  }
  return out;
}

}  // namespace stm::projection
