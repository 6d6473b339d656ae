#include "stm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "stm/errors.hpp"

namespace stm {

std::array<Vec3, 2> bounding_box(std::span<const Vec3> points) {
  if (points.empty()) return {Vec3{}, Vec3{}};
  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  return {lo, hi};
}

TriMesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces, std::size_t* dropped) {
  TriMesh mesh;
  mesh.vertices = std::move(vertices);
  const auto n = static_cast<std::int64_t>(mesh.vertices.size());
  std::size_t skipped = 0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& face = faces[f];
    for (const auto i : face) {
      if (i < 0 || i >= n) {
        throw IndexError("face " + std::to_string(f) + " references vertex " + std::to_string(i) + " of " +
                         std::to_string(n));
      }
    }
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(face[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(face[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(face[2])];
    const Vec3 area = cross(b - a, c - a);
    const double len = norm(area);
    // Relative to the longest edge so the test does not depend on model units.
    const double scale = std::max({dot(b - a, b - a), dot(c - a, c - a), dot(c - b, c - b)});
    if (!(len > 1e-14 * scale) || !std::isfinite(len)) {
      ++skipped;
      continue;
    }
    mesh.faces.push_back(face);
    mesh.face_normals.push_back(area / len);
  }
  if (dropped) *dropped = skipped;
  return mesh;
}

void validate_mesh(const TriMesh& mesh) {
  if (mesh.faces.size() != mesh.face_normals.size()) throw ContractError("mesh: one normal per face required");
  const auto n = static_cast<std::int64_t>(mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (const auto i : mesh.faces[f]) {
      if (i < 0 || i >= n) throw ContractError("mesh: face " + std::to_string(f) + " index out of range");
    }
    if (std::abs(norm(mesh.face_normals[f]) - 1.0) > 1e-9) {
      throw ContractError("mesh: normal of face " + std::to_string(f) + " is not unit length");
    }
  }
}

TriMesh normalize_mesh(const TriMesh& mesh) {
  if (mesh.vertices.size() < 3) throw DegenerateInputError("normalize_mesh: need at least 3 vertices");
  const auto [lo, hi] = bounding_box(mesh.vertices);
  const Vec3 center = (lo + hi) * 0.5;
  double max_norm = 0.0;
  for (const auto& v : mesh.vertices) max_norm = std::max(max_norm, norm(v - center));
  if (!(max_norm > 0.0) || !std::isfinite(max_norm)) {
    throw DegenerateInputError("normalize_mesh: all vertices coincide");
  }
  TriMesh out = mesh;
  for (auto& v : out.vertices) v = (v - center) / max_norm;
  return out;
}

TriMesh make_box(const Vec3& lo, const Vec3& hi) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) v.push_back({i & 1 ? hi.x : lo.x, i & 2 ? hi.y : lo.y, i & 4 ? hi.z : lo.z});
  // Quads listed counter-clockwise seen from outside.
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  std::vector<Face> f;
  for (const auto& q : quads) {
    f.push_back({q[0], q[1], q[2]});
    f.push_back({q[0], q[2], q[3]});
  }
  return make_mesh(std::move(v), std::move(f));
}

TriMesh make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p = normalized(p);
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                         {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    const auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back(normalized(v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]));
      const int idx = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  for (auto& p : v) p = p * radius;
  return make_mesh(std::move(v), std::move(f));
}

TriMesh make_torus(double major_radius, double minor_radius, int segments_major, int segments_minor) {
  std::vector<Vec3> v;
  std::vector<Face> f;
  for (int i = 0; i < segments_major; ++i) {
    const double u = 2 * std::numbers::pi * i / segments_major;
    for (int j = 0; j < segments_minor; ++j) {
      const double w = 2 * std::numbers::pi * j / segments_minor;
      const double r = major_radius + minor_radius * std::cos(w);
      v.push_back({r * std::cos(u), r * std::sin(u), minor_radius * std::sin(w)});
    }
  }
  const auto at = [&](int i, int j) { return (i % segments_major) * segments_minor + (j % segments_minor); };
  for (int i = 0; i < segments_major; ++i) {
    for (int j = 0; j < segments_minor; ++j) {
      f.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      f.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  }
  return make_mesh(std::move(v), std::move(f));
}

TriMesh make_l_bracket() {
  // L-shaped outline in the xy-plane, counter-clockwise.
  const double outline[6][2] = {{-0.6, -0.6}, {0.6, -0.6}, {0.6, -0.1}, {-0.1, -0.1}, {-0.1, 0.6}, {-0.6, 0.6}};
  std::vector<Vec3> v;
  for (const double z : {-0.3, 0.3}) {
    for (const auto& p : outline) v.push_back({p[0], p[1], z});
  }
  std::vector<Face> f;
  // Caps: split the L into two convex quads.
  const int cap[2][4] = {{0, 1, 2, 3}, {0, 3, 4, 5}};
  for (const auto& q : cap) {
    f.push_back({q[0], q[2], q[1]});  // bottom faces -z
    f.push_back({q[0], q[3], q[2]});
    f.push_back({q[0] + 6, q[1] + 6, q[2] + 6});  // top faces +z
    f.push_back({q[0] + 6, q[2] + 6, q[3] + 6});
  }
  for (int i = 0; i < 6; ++i) {
    const int j = (i + 1) % 6;
    f.push_back({i, j, j + 6});
    f.push_back({i, j + 6, i + 6});
  }
  return make_mesh(std::move(v), std::move(f));
}

}  // namespace stm
