#include "drape/mesh.hpp"
#include "drape/obj_io.hpp"
#include "drape/fixtures.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace drape;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "drape_mesh_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

TriMesh unit_square() {
    TriMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
    m.faces = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

TriMesh icosahedron() {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh m;
    m.vertices = {Vec3(-1, phi, 0), Vec3(1, phi, 0),   Vec3(-1, -phi, 0), Vec3(1, -phi, 0),
                  Vec3(0, -1, phi), Vec3(0, 1, phi),   Vec3(0, -1, -phi), Vec3(0, 1, -phi),
                  Vec3(phi, 0, -1), Vec3(phi, 0, 1),   Vec3(-phi, 0, -1), Vec3(-phi, 0, 1)};
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
               {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
               {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
               {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    return m;
}

} // namespace

TEST_CASE("load_obj reads a minimal file") {
    const auto path = temp_file("minimal.obj");
    write_text(path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    const TriMesh m = load_obj(path.string());
    REQUIRE(m.vertex_count() == 3);
    REQUIRE(m.face_count() == 1);
    CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("load_obj ignores normals, UVs and slash forms") {
    const auto path = temp_file("slashes.obj");
    write_text(path, "vn 0 0 1\nvt 0 0\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/1 3/3/1\n");
    const TriMesh m = load_obj(path.string());
    REQUIRE(m.face_count() == 1);
    CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("load_obj rejects a quad face with its line number") {
    const auto path = temp_file("quad.obj");
    write_text(path, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
    CHECK_THROWS_WITH(load_obj(path.string()),
                      Catch::Matchers::ContainsSubstring("non-triangle face at line 5"));
}

TEST_CASE("load_obj rejects out-of-range indices") {
    const auto path = temp_file("oob.obj");
    write_text(path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
    CHECK_THROWS_AS(load_obj(path.string()), IoError);
}

TEST_CASE("unit square topology: 5 edges, 1 interior") {
    const TriMesh m = unit_square();
    const MeshTopology topo = build_topology(m);
    CHECK(topo.edges.size() == 5);
    CHECK(topo.interior_edge_count() == 1);
    for (const auto& e : topo.edges) {
        if (e.interior()) {
            // diagonal (0,2); apexes are the two off-diagonal corners
            CHECK(e.v0 == 0);
            CHECK(e.v1 == 2);
            CHECK(e.opposite0 == 1);
            CHECK(e.opposite1 == 3);
        } else {
            CHECK(e.opposite1 == -1);
            CHECK(e.opposite0 >= 0);
        }
    }
}

TEST_CASE("single triangle: 3 boundary edges") {
    TriMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    m.faces = {{0, 1, 2}};
    const MeshTopology topo = build_topology(m);
    CHECK(topo.edges.size() == 3);
    CHECK(topo.interior_edge_count() == 0);
}

TEST_CASE("icosahedron: Euler characteristic and one-ring valence") {
    const TriMesh m = icosahedron();
    const MeshTopology topo = build_topology(m);
    CHECK(topo.edges.size() == 30);
    CHECK(m.vertex_count() - static_cast<int>(topo.edges.size()) + m.face_count() == 2);
    CHECK(topo.interior_edge_count() == 30);
    for (const auto& ring : topo.rings)
        CHECK(ring.members.size() == 6); // 5 neighbors + center
}

TEST_CASE("one-ring symmetry and closed/open variants") {
    const TriMesh m = make_grid_cloth(6, 1.0);
    const MeshTopology closed = build_topology(m, true);
    const MeshTopology open = build_topology(m, false);
    for (const auto& ring : closed.rings) {
        CHECK(std::count(ring.members.begin(), ring.members.end(), ring.center) == 1);
        for (int j : ring.members) {
            if (j == ring.center) continue;
            const auto& other = closed.rings[j].members;
            CHECK(std::count(other.begin(), other.end(), ring.center) == 1);
        }
    }
    for (const auto& ring : open.rings)
        CHECK(std::count(ring.members.begin(), ring.members.end(), ring.center) == 0);
}

TEST_CASE("topology is invariant under face permutation") {
    TriMesh a = icosahedron();
    TriMesh b = a;
    std::mt19937_64 rng(7);
    std::shuffle(b.faces.begin(), b.faces.end(), rng);
    const MeshTopology ta = build_topology(a);
    const MeshTopology tb = build_topology(b);
    REQUIRE(ta.edges.size() == tb.edges.size());
    for (size_t e = 0; e < ta.edges.size(); ++e) {
        CHECK(ta.edges[e].v0 == tb.edges[e].v0);
        CHECK(ta.edges[e].v1 == tb.edges[e].v1);
        CHECK(ta.edges[e].opposite0 == tb.edges[e].opposite0);
        CHECK(ta.edges[e].opposite1 == tb.edges[e].opposite1);
    }
    for (size_t v = 0; v < ta.rings.size(); ++v)
        CHECK(ta.rings[v].members == tb.rings[v].members);
}

TEST_CASE("non-manifold edge is rejected") {
    TriMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(0, -1, 0)};
    m.faces = {{0, 1, 2}, {0, 1, 3}, {0, 1, 4}};
    CHECK_THROWS_AS(build_topology(m), MeshError);
}

TEST_CASE("save/load round trip preserves geometry") {
    const auto path = temp_file("roundtrip.obj");

    SECTION("unit square") {
        const TriMesh m = unit_square();
        save_obj(m, path.string());
        const TriMesh r = load_obj(path.string());
        REQUIRE(r.vertex_count() == m.vertex_count());
        REQUIRE(r.faces == m.faces);
        for (int i = 0; i < m.vertex_count(); ++i)
            CHECK((r.vertices[i] - m.vertices[i]).norm() < 1e-6);
    }

    SECTION("empty mesh") {
        save_obj(TriMesh{}, path.string());
        const TriMesh r = load_obj(path.string());
        CHECK(r.vertex_count() == 0);
        CHECK(r.face_count() == 0);
    }

    SECTION("large grid, bitwise faces and exact positions") {
        const TriMesh m = make_grid_cloth(100, 2.0, 0.37); // 10k vertices
        save_obj(m, path.string());
        const TriMesh r = load_obj(path.string());
        REQUIRE(r.faces == m.faces);
        for (int i = 0; i < m.vertex_count(); ++i)
            CHECK(r.vertices[i] == m.vertices[i]); // %.17g round-trips doubles
    }
}

TEST_CASE("grid fixture counts") {
    const TriMesh g = make_grid_cloth(10, 1.0);
    CHECK(g.vertex_count() == 100);
    CHECK(g.face_count() == 162);
}

TEST_CASE("degenerate and out-of-range faces are rejected") {
    TriMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    m.faces = {{0, 1, 1}};
    CHECK_THROWS_AS(validate_mesh(m), MeshError);
    m.faces = {{0, 1, 5}};
    CHECK_THROWS_AS(validate_mesh(m), MeshError);
}
