#pragma once

// Indexed triangle mesh plus the derived topology the energies need:
// undirected edges with their dihedral stencils and per-vertex one-rings.

#include "drape/common.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <vector>

namespace drape {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces; // CCW winding

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }
};

/// Undirected edge with the apex vertices of its incident faces.
/// Interior edges have two apexes; boundary edges one (opposite1 == -1).
/// Apexes are ordered by ascending vertex index so the stencil does not
/// depend on face ordering.
struct EdgeStencil {
    int v0 = -1;
    int v1 = -1; // v0 < v1
    int opposite0 = -1;
    int opposite1 = -1;

    bool interior() const { return opposite1 >= 0; }
};

/// Vertices sharing an edge with `center`, sorted ascending. When the ring
/// is closed the center itself is part of `members`.
struct OneRing {
    int center = -1;
    std::vector<int> members;
};

struct MeshTopology {
    std::vector<EdgeStencil> edges; // sorted by (v0, v1)
    std::vector<OneRing> rings;     // one per vertex
    bool closed_rings = true;

    int interior_edge_count() const {
        int n = 0;
        for (const auto& e : edges)
            if (e.interior()) ++n;
        return n;
    }
    int boundary_edge_count() const {
        return static_cast<int>(edges.size()) - interior_edge_count();
    }
};

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

/// Index bounds, distinct corners and nonzero area for every face.
inline void validate_mesh(const TriMesh& mesh, double min_area = 0.0) {
    const int nv = mesh.vertex_count();
    for (int f = 0; f < mesh.face_count(); ++f) {
        const auto& fc = mesh.faces[f];
        for (int k = 0; k < 3; ++k) {
            if (fc[k] < 0 || fc[k] >= nv)
                throw MeshError(msg("face ", f, " references vertex ", fc[k],
                                    " outside [0, ", nv, ")"));
        }
        if (fc[0] == fc[1] || fc[1] == fc[2] || fc[0] == fc[2])
            throw MeshError(msg("face ", f, " has repeated vertex indices"));
        if (min_area > 0.0) {
            const double a =
                triangle_area(mesh.vertices[fc[0]], mesh.vertices[fc[1]], mesh.vertices[fc[2]]);
            if (a <= min_area)
                throw MeshError(msg("face ", f, " is degenerate (area ", a, ")"));
        }
    }
}

/// Builds edge stencils and one-rings. Throws on edges with more than two
/// incident faces. Output ordering is deterministic: edges ascend by
/// (v0, v1) pair, ring members ascend by index.
inline MeshTopology build_topology(const TriMesh& mesh, bool closed_rings = true) {
    validate_mesh(mesh);

    std::map<std::pair<int, int>, std::array<int, 2>> apex; // edge -> up to 2 apexes
    for (int f = 0; f < mesh.face_count(); ++f) {
        const auto& fc = mesh.faces[f];
        for (int k = 0; k < 3; ++k) {
            const int a = fc[k];
            const int b = fc[(k + 1) % 3];
            const int c = fc[(k + 2) % 3];
            const auto key = std::minmax(a, b);
            auto [it, fresh] = apex.try_emplace(key, std::array<int, 2>{-1, -1});
            auto& slots = it->second;
            if (slots[0] < 0) {
                slots[0] = c;
            } else if (slots[1] < 0) {
                slots[1] = c;
            } else {
                throw MeshError(msg("non-manifold edge (", key.first, ", ", key.second,
                                    ") has more than two incident faces"));
            }
            (void)fresh;
        }
    }

    MeshTopology topo;
    topo.closed_rings = closed_rings;
    topo.edges.reserve(apex.size());
    for (const auto& [key, slots] : apex) {
        EdgeStencil e;
        e.v0 = key.first;
        e.v1 = key.second;
        if (slots[1] < 0) {
            e.opposite0 = slots[0];
        } else {
            e.opposite0 = std::min(slots[0], slots[1]);
            e.opposite1 = std::max(slots[0], slots[1]);
        }
        topo.edges.push_back(e);
    }

    topo.rings.resize(mesh.vertex_count());
    for (int v = 0; v < mesh.vertex_count(); ++v)
        topo.rings[v].center = v;
    for (const auto& e : topo.edges) {
        topo.rings[e.v0].members.push_back(e.v1);
        topo.rings[e.v1].members.push_back(e.v0);
    }
    for (auto& ring : topo.rings) {
        if (closed_rings) ring.members.push_back(ring.center);
        std::sort(ring.members.begin(), ring.members.end());
    }
    return topo;
}

/// Rings of a garment template must span a plane: at least two distinct
/// neighbors besides the center.
inline void validate_garment_template(const TriMesh& mesh, const MeshTopology& topo) {
    validate_mesh(mesh, 1e-14);
    for (const auto& ring : topo.rings) {
        const int neighbors =
            static_cast<int>(ring.members.size()) - (topo.closed_rings ? 1 : 0);
        if (neighbors < 2)
            throw MeshError(msg("vertex ", ring.center, " has only ", neighbors,
                                " one-ring neighbors; template is not a surface there"));
    }
}

} // namespace drape
