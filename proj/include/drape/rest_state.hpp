#pragma once

// Everything the energies need from the garment template, computed once:
// one-ring covariance spectra, per-face material frames, rest lengths,
// areas and dihedrals, the per-edge bending balance, and lumped masses.

#include "drape/common.hpp"
#include "drape/mesh.hpp"
#include "drape/sdf.hpp"

#include <Eigen/Eigenvalues>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace drape {

struct GarmentRestState {
    TriMesh template_mesh;
    MeshTopology topology;

    std::vector<Vec3> covariance_sigma;      // per vertex, descending
    std::vector<Mat2> material_inverse;      // per face
    std::vector<double> rest_area;           // per face
    std::vector<double> rest_edge_length;    // per edge
    std::vector<double> rest_dihedral;       // per edge, 0 for boundary
    std::vector<double> bending_alpha;       // per edge, in [0, 1]
    std::vector<double> bending_stencil_area; // per edge: sum of both rest face areas
    std::vector<double> vertex_mass;         // kg
    double areal_density = 0.0;

    int vertex_count() const { return template_mesh.vertex_count(); }
    int face_count() const { return template_mesh.face_count(); }
    int edge_count() const { return static_cast<int>(topology.edges.size()); }

    double total_mass() const {
        double m = 0.0;
        for (double v : vertex_mass) m += v;
        return m;
    }
};

/// Mean-centered second-moment matrix of a one-ring; `members` must be the
/// ring ordering used for both template and deformed evaluations.
inline Mat3 one_ring_covariance(const std::vector<Vec3>& x, const std::vector<int>& members) {
    const double n = static_cast<double>(members.size());
    Vec3 mean = Vec3::Zero();
    for (int j : members) mean += x[j];
    mean /= n;
    Mat3 c = Mat3::Zero();
    for (int j : members) {
        const Vec3 u = x[j] - mean;
        c += u * u.transpose();
    }
    return c / n;
}

/// Signed dihedral across edge (x0, x1) with apexes xa, xb. Zero when flat;
/// sign follows the (na x nb) . edge convention, used identically for rest
/// and deformed configurations.
inline double dihedral_angle(const Vec3& x0, const Vec3& x1, const Vec3& xa, const Vec3& xb) {
    const Vec3 e = x1 - x0;
    const Vec3 na = e.cross(xa - x0);
    const Vec3 nb = (xb - x0).cross(e);
    const double elen = e.norm();
    if (elen < 1e-18) return 0.0;
    const double s = na.cross(nb).dot(e) / elen;
    const double c = na.dot(nb);
    return std::atan2(s, c);
}

inline constexpr std::uint32_t kRestCacheVersion = 1;

inline GarmentRestState precompute_rest(const TriMesh& tmpl, const TriMesh* body_rest,
                                        double areal_density, bool closed_rings = true) {
    GarmentRestState rest;
    rest.template_mesh = tmpl;
    rest.topology = build_topology(tmpl, closed_rings);
    validate_garment_template(tmpl, rest.topology);
    rest.areal_density = areal_density;

    const auto& x = tmpl.vertices;

    // one-ring covariance spectra
    rest.covariance_sigma.resize(tmpl.vertex_count());
    for (int i = 0; i < tmpl.vertex_count(); ++i) {
        const Mat3 c = one_ring_covariance(x, rest.topology.rings[i].members);
        Eigen::SelfAdjointEigenSolver<Mat3> eig(c);
        if (eig.info() != Eigen::Success)
            throw NumericalError(msg("covariance eigensolve failed at vertex ", i));
        Vec3 sigma = eig.eigenvalues().reverse(); // descending
        sigma = sigma.cwiseMax(0.0);
        if (sigma[0] <= 1e-18)
            throw NumericalError(
                msg("one-ring of vertex ", i, " is rank zero (all members coincide)"));
        rest.covariance_sigma[i] = sigma;
    }

    // per-face tangent frames and areas
    rest.material_inverse.resize(tmpl.face_count());
    rest.rest_area.resize(tmpl.face_count());
    for (int f = 0; f < tmpl.face_count(); ++f) {
        const auto& fc = tmpl.faces[f];
        const Vec3 e1 = x[fc[1]] - x[fc[0]];
        const Vec3 e2 = x[fc[2]] - x[fc[0]];
        const Vec3 n = e1.cross(e2);
        const double area = 0.5 * n.norm();
        if (area <= 1e-14)
            throw MeshError(msg("template face ", f, " is degenerate (area ", area, ")"));
        rest.rest_area[f] = area;
        const Vec3 t1 = e1.normalized();
        const Vec3 t2 = n.normalized().cross(t1);
        Mat2 dm;
        dm << e1.dot(t1), e2.dot(t1), 0.0, e2.dot(t2);
        rest.material_inverse[f] = dm.inverse();
    }

    // lumped masses: a third of each incident face
    rest.vertex_mass.assign(tmpl.vertex_count(), 0.0);
    for (int f = 0; f < tmpl.face_count(); ++f)
        for (int k = 0; k < 3; ++k)
            rest.vertex_mass[tmpl.faces[f][k]] += areal_density * rest.rest_area[f] / 3.0;

    // per-edge rest quantities
    std::map<std::pair<int, int>, std::array<double, 2>> face_area_of_edge;
    for (int f = 0; f < tmpl.face_count(); ++f) {
        for (int k = 0; k < 3; ++k) {
            const auto key = std::minmax(tmpl.faces[f][k], tmpl.faces[f][(k + 1) % 3]);
            auto [it, fresh] = face_area_of_edge.try_emplace(key, std::array<double, 2>{0.0, 0.0});
            it->second[fresh ? 0 : 1] = rest.rest_area[f];
        }
    }

    const int ne = rest.edge_count();
    rest.rest_edge_length.resize(ne);
    rest.rest_dihedral.assign(ne, 0.0);
    rest.bending_stencil_area.assign(ne, 0.0);
    rest.bending_alpha.assign(ne, 1.0);
    for (int e = 0; e < ne; ++e) {
        const auto& st = rest.topology.edges[e];
        rest.rest_edge_length[e] = (x[st.v1] - x[st.v0]).norm();
        if (!st.interior()) continue;
        rest.rest_dihedral[e] = dihedral_angle(x[st.v0], x[st.v1], x[st.opposite0], x[st.opposite1]);
        const auto areas = face_area_of_edge.at({st.v0, st.v1});
        rest.bending_stencil_area[e] = areas[0] + areas[1];
    }

    // bending balance: distance from each edge midpoint to the body in the
    // shared rest frame, normalized by the garment's largest such distance.
    // Loose regions get alpha near 1 (template coherence), tight regions
    // fall back to the flatness prior. Without a body everything is 1.
    if (body_rest && body_rest->face_count() > 0) {
        CollisionMesh probe(*body_rest, /*require_watertight=*/false);
        std::vector<double> dist(ne, 0.0);
        double dmax = 0.0;
        for (int e = 0; e < ne; ++e) {
            const auto& st = rest.topology.edges[e];
            const Vec3 mid = 0.5 * (x[st.v0] + x[st.v1]);
            dist[e] = probe.closest_point(mid).distance;
            dmax = std::max(dmax, dist[e]);
        }
        if (dmax > 0.0)
            for (int e = 0; e < ne; ++e)
                rest.bending_alpha[e] = std::clamp(dist[e] / dmax, 0.0, 1.0);
    }

    return rest;
}

/// Replace per-edge bending balance values from "v0 v1 alpha" lines.
inline void apply_alpha_override(GarmentRestState& rest, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(msg("cannot open alpha override '", path, "'"));
    std::map<std::pair<int, int>, int> edge_index;
    for (int e = 0; e < rest.edge_count(); ++e)
        edge_index[{rest.topology.edges[e].v0, rest.topology.edges[e].v1}] = e;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        int a, b;
        double alpha;
        if (!(ls >> a)) continue;
        if (!(ls >> b >> alpha))
            throw IoError(msg(path, ":", lineno, ": expected 'v0 v1 alpha'"));
        const auto it = edge_index.find(std::minmax(a, b));
        if (it == edge_index.end())
            throw IoError(msg(path, ":", lineno, ": no edge (", a, ", ", b, ") in template"));
        if (alpha < 0.0 || alpha > 1.0)
            throw IoError(msg(path, ":", lineno, ": alpha ", alpha, " outside [0, 1]"));
        rest.bending_alpha[it->second] = alpha;
    }
}

// ---------------------------------------------------------------------------
// Binary cache. Self-contained: embeds the template mesh and the density so
// a simulation can start from the cache alone. Little-endian doubles, fixed
// field order, so identical inputs produce identical bytes.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_bytes(std::FILE* f, const void* p, size_t n, const std::string& path) {
    if (std::fwrite(p, 1, n, f) != n) throw IoError(msg("write failure on '", path, "'"));
}

inline void get_bytes(std::FILE* f, void* p, size_t n, const std::string& path) {
    if (std::fread(p, 1, n, f) != n) throw IoError(msg("truncated rest cache '", path, "'"));
}

template <typename T>
void put_pod(std::FILE* f, const T& v, const std::string& path) {
    put_bytes(f, &v, sizeof(T), path);
}

template <typename T>
T get_pod(std::FILE* f, const std::string& path) {
    T v;
    get_bytes(f, &v, sizeof(T), path);
    return v;
}

} // namespace detail

inline void save_rest_cache(const GarmentRestState& rest, const std::string& path) {
    std::FILE* out = std::fopen(path.c_str(), "wb");
    if (!out) throw IoError(msg("cannot open '", path, "' for writing"));
    const char magic[8] = {'D', 'R', 'A', 'P', 'R', 'E', 'S', 'T'};
    detail::put_bytes(out, magic, 8, path);
    detail::put_pod(out, kRestCacheVersion, path);
    detail::put_pod<std::uint32_t>(out, rest.topology.closed_rings ? 1 : 0, path);
    detail::put_pod<std::int64_t>(out, rest.vertex_count(), path);
    detail::put_pod<std::int64_t>(out, rest.face_count(), path);
    detail::put_pod<std::int64_t>(out, rest.edge_count(), path);
    detail::put_pod(out, rest.areal_density, path);
    for (const auto& v : rest.template_mesh.vertices)
        detail::put_bytes(out, v.data(), 3 * sizeof(double), path);
    for (const auto& f : rest.template_mesh.faces) {
        const std::int32_t idx[3] = {f[0], f[1], f[2]};
        detail::put_bytes(out, idx, sizeof(idx), path);
    }
    for (const auto& s : rest.covariance_sigma)
        detail::put_bytes(out, s.data(), 3 * sizeof(double), path);
    for (const auto& m : rest.material_inverse)
        detail::put_bytes(out, m.data(), 4 * sizeof(double), path);
    auto put_scalars = [&](const std::vector<double>& v) {
        detail::put_bytes(out, v.data(), v.size() * sizeof(double), path);
    };
    put_scalars(rest.rest_area);
    put_scalars(rest.rest_edge_length);
    put_scalars(rest.rest_dihedral);
    put_scalars(rest.bending_alpha);
    put_scalars(rest.bending_stencil_area);
    put_scalars(rest.vertex_mass);
    if (std::fclose(out) != 0) throw IoError(msg("write failure on '", path, "'"));
}

inline GarmentRestState load_rest_cache(const std::string& path) {
    std::FILE* in = std::fopen(path.c_str(), "rb");
    if (!in) throw IoError(msg("cannot open rest cache '", path, "'"));
    struct Closer {
        std::FILE* f;
        ~Closer() { std::fclose(f); }
    } closer{in};

    char magic[8];
    detail::get_bytes(in, magic, 8, path);
    if (std::string(magic, 8) != "DRAPREST")
        throw IoError(msg(path, ": not a drape rest cache"));
    const auto version = detail::get_pod<std::uint32_t>(in, path);
    if (version != kRestCacheVersion)
        throw IoError(msg(path, ": unsupported cache version ", version));
    const bool closed = detail::get_pod<std::uint32_t>(in, path) != 0;
    const auto nv = detail::get_pod<std::int64_t>(in, path);
    const auto nf = detail::get_pod<std::int64_t>(in, path);
    const auto ne = detail::get_pod<std::int64_t>(in, path);

    GarmentRestState rest;
    rest.areal_density = detail::get_pod<double>(in, path);
    rest.template_mesh.vertices.resize(nv);
    for (auto& v : rest.template_mesh.vertices)
        detail::get_bytes(in, v.data(), 3 * sizeof(double), path);
    rest.template_mesh.faces.resize(nf);
    for (auto& f : rest.template_mesh.faces) {
        std::int32_t idx[3];
        detail::get_bytes(in, idx, sizeof(idx), path);
        f = {idx[0], idx[1], idx[2]};
    }
    rest.topology = build_topology(rest.template_mesh, closed);
    if (rest.edge_count() != ne)
        throw IoError(msg(path, ": edge count mismatch (cache ", ne, ", rebuilt ",
                          rest.edge_count(), ")"));
    rest.covariance_sigma.resize(nv);
    for (auto& s : rest.covariance_sigma)
        detail::get_bytes(in, s.data(), 3 * sizeof(double), path);
    rest.material_inverse.resize(nf);
    for (auto& m : rest.material_inverse)
        detail::get_bytes(in, m.data(), 4 * sizeof(double), path);
    auto get_scalars = [&](std::vector<double>& v, std::int64_t n) {
        v.resize(n);
        detail::get_bytes(in, v.data(), n * sizeof(double), path);
    };
    get_scalars(rest.rest_area, nf);
    get_scalars(rest.rest_edge_length, ne);
    get_scalars(rest.rest_dihedral, ne);
    get_scalars(rest.bending_alpha, ne);
    get_scalars(rest.bending_stencil_area, ne);
    get_scalars(rest.vertex_mass, nv);
    return rest;
}

} // namespace drape
