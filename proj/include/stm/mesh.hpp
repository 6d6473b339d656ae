#pragma once

// Indexed triangle meshes and a few procedural shapes.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "stm/vec3.hpp"

namespace stm {

using Face = std::array<std::int32_t, 3>;

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec3> face_normals;  // unit, right-handed from the face winding

  std::size_t n_vertices() const { return vertices.size(); }
  std::size_t n_faces() const { return faces.size(); }
};

// Builds a mesh and its normals. Zero-area faces are dropped and counted in
// `dropped`; out-of-range indices throw IndexError.
TriMesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces, std::size_t* dropped = nullptr);

// Throws ContractError when indices, normals or face areas break the mesh invariants.
void validate_mesh(const TriMesh& mesh);

// Translate by minus the bounding-box center, then scale so the largest vertex norm is 1.
// Throws DegenerateInputError for fewer than 3 vertices or all-coincident vertices.
TriMesh normalize_mesh(const TriMesh& mesh);

// Axis-aligned box [lo, hi] as 12 outward-wound triangles.
TriMesh make_box(const Vec3& lo, const Vec3& hi);

// Subdivided icosahedron with vertices on the sphere of the given radius.
TriMesh make_icosphere(int subdivisions, double radius = 1.0);

// Torus around the z axis.
TriMesh make_torus(double major_radius, double minor_radius, int segments_major, int segments_minor);

// Non-convex L-shaped prism: two unit-ish boxes sharing a face, extruded along z.
TriMesh make_l_bracket();

// Axis-aligned bounds.
std::array<Vec3, 2> bounding_box(std::span<const Vec3> points);

}  // namespace stm
