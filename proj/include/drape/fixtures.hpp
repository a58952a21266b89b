#pragma once

// Procedural test assets: grid cloth, watertight sphere and capsule bodies
// with small skeletons, a loose annulus skirt, and canned pose sequences.
// Everything is closed-form, so regeneration is deterministic.

#include "drape/body.hpp"
#include "drape/common.hpp"
#include "drape/mesh.hpp"
#include "drape/obj_io.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace drape {

/// n x n vertices spanning side x side in the xy-plane at height z,
/// centered on the origin. 2 (n-1)^2 faces.
inline TriMesh make_grid_cloth(int n, double side, double z = 0.0) {
    if (n < 2) throw MeshError("grid cloth needs at least 2 vertices per side");
    TriMesh mesh;
    const double h = side / (n - 1);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            mesh.vertices.emplace_back(-side / 2 + c * h, -side / 2 + r * h, z);
    for (int r = 0; r + 1 < n; ++r) {
        for (int c = 0; c + 1 < n; ++c) {
            const int i00 = r * n + c;
            const int i01 = r * n + c + 1;
            const int i10 = (r + 1) * n + c;
            const int i11 = (r + 1) * n + c + 1;
            mesh.faces.push_back({i00, i01, i11});
            mesh.faces.push_back({i00, i11, i10});
        }
    }
    return mesh;
}

/// Watertight UV sphere, CCW outward. `rings` latitudinal bands (>= 3),
/// `segments` around (>= 3).
inline TriMesh make_uv_sphere(double radius, int rings, int segments,
                              const Vec3& center = Vec3::Zero()) {
    if (rings < 3 || segments < 3) throw MeshError("sphere needs rings >= 3 and segments >= 3");
    TriMesh mesh;
    const double pi = std::numbers::pi;
    mesh.vertices.push_back(center + Vec3(0, 0, radius)); // top pole
    for (int r = 1; r < rings; ++r) {
        const double phi = pi * r / rings;
        for (int s = 0; s < segments; ++s) {
            const double theta = 2.0 * pi * s / segments;
            mesh.vertices.push_back(center + radius * Vec3(std::sin(phi) * std::cos(theta),
                                                           std::sin(phi) * std::sin(theta),
                                                           std::cos(phi)));
        }
    }
    mesh.vertices.push_back(center + Vec3(0, 0, -radius)); // bottom pole
    const int bottom = mesh.vertex_count() - 1;
    auto ring_vertex = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };

    for (int s = 0; s < segments; ++s)
        mesh.faces.push_back({0, ring_vertex(1, s), ring_vertex(1, s + 1)});
    for (int r = 1; r + 1 < rings; ++r) {
        for (int s = 0; s < segments; ++s) {
            const int a = ring_vertex(r, s);
            const int b = ring_vertex(r, s + 1);
            const int c = ring_vertex(r + 1, s);
            const int d = ring_vertex(r + 1, s + 1);
            mesh.faces.push_back({a, c, d});
            mesh.faces.push_back({a, d, b});
        }
    }
    for (int s = 0; s < segments; ++s)
        mesh.faces.push_back({bottom, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s)});
    return mesh;
}

/// Single-joint body: a sphere rigidly bound to one joint at its center.
inline SkinnedBody make_sphere_body(double radius, int rings, int segments,
                                    const Vec3& center = Vec3::Zero()) {
    SkinnedBody body;
    body.rest_mesh = make_uv_sphere(radius, rings, segments, center);
    body.skeleton.parent = {-1};
    body.skeleton.rest_joint = {center};
    body.weights = Eigen::MatrixXd::Ones(body.rest_mesh.vertex_count(), 1);
    body.validate();
    return body;
}

/// Capsule along z: hemispherical caps at z = +-half_length, radius r.
/// Built from a UV sphere with the hemispheres pushed apart, so it stays
/// watertight. Root joint at the bottom cap center, second joint at the
/// origin; weights blend linearly across the middle half of the shaft, so
/// rotating joint 1 swings the upper half like a limb.
inline SkinnedBody make_capsule_body(double radius, double half_length, int rings, int segments) {
    if (rings % 2 != 0) throw MeshError("capsule needs an even ring count");
    SkinnedBody body;
    body.rest_mesh = make_uv_sphere(radius, rings, segments);
    for (auto& v : body.rest_mesh.vertices)
        v.z() += v.z() >= 0.0 ? half_length : -half_length;
    body.skeleton.parent = {-1, 0};
    body.skeleton.rest_joint = {Vec3(0, 0, -half_length), Vec3(0, 0, 0)};

    const int nb = body.rest_mesh.vertex_count();
    body.weights = Eigen::MatrixXd::Zero(nb, 2);
    const double blend_halfwidth = 0.5 * half_length;
    for (int i = 0; i < nb; ++i) {
        const double z = body.rest_mesh.vertices[i].z();
        const double t =
            std::clamp((z + blend_halfwidth) / (2.0 * blend_halfwidth), 0.0, 1.0);
        body.weights(i, 0) = 1.0 - t;
        body.weights(i, 1) = t;
    }
    body.validate();
    return body;
}

/// Open annulus skirt: `rings` horizontal loops from (top_radius, top_z)
/// to (bottom_radius, bottom_z), `segments` around. Boundary rims at both
/// ends, every interior vertex has full one-rings.
inline TriMesh make_skirt_garment(double top_radius, double bottom_radius, double top_z,
                                  double bottom_z, int rings, int segments) {
    if (rings < 2 || segments < 3) throw MeshError("skirt needs rings >= 2 and segments >= 3");
    TriMesh mesh;
    const double pi = std::numbers::pi;
    for (int r = 0; r < rings; ++r) {
        const double t = static_cast<double>(r) / (rings - 1);
        const double radius = top_radius + t * (bottom_radius - top_radius);
        const double z = top_z + t * (bottom_z - top_z);
        for (int s = 0; s < segments; ++s) {
            const double theta = 2.0 * pi * s / segments;
            mesh.vertices.emplace_back(radius * std::cos(theta), radius * std::sin(theta), z);
        }
    }
    auto at = [&](int r, int s) { return r * segments + (s % segments); };
    for (int r = 0; r + 1 < rings; ++r) {
        for (int s = 0; s < segments; ++s) {
            const int a = at(r, s);
            const int b = at(r, s + 1);
            const int c = at(r + 1, s);
            const int d = at(r + 1, s + 1);
            mesh.faces.push_back({a, d, b});
            mesh.faces.push_back({a, c, d});
        }
    }
    return mesh;
}

inline std::vector<Pose> make_identity_sequence(int joints, int frames) {
    return std::vector<Pose>(frames, Pose::identity(joints));
}

/// Root translated by `step` each frame (cumulative).
inline std::vector<Pose> make_root_drop_sequence(int joints, int frames, const Vec3& step) {
    std::vector<Pose> out;
    out.reserve(frames);
    for (int f = 0; f < frames; ++f) {
        Pose p = Pose::identity(joints);
        p.root_translation = step * static_cast<double>(f + 1);
        out.push_back(std::move(p));
    }
    return out;
}

/// Sinusoidal swing of one joint about `axis`.
inline std::vector<Pose> make_limb_swing_sequence(int joints, int frames, int joint,
                                                  const Vec3& axis, double amplitude,
                                                  double period_frames) {
    if (joint < 0 || joint >= joints) throw MeshError("swing joint out of range");
    std::vector<Pose> out;
    out.reserve(frames);
    const Vec3 unit = axis.normalized();
    for (int f = 0; f < frames; ++f) {
        Pose p = Pose::identity(joints);
        const double angle =
            amplitude * std::sin(2.0 * std::numbers::pi * (f + 1) / period_frames);
        p.joint_rotation[joint] = angle * unit;
        out.push_back(std::move(p));
    }
    return out;
}

/// Writes the full fixture set used by the tests and the examples in the
/// README: grid cloth, sphere and capsule bodies, skirt garment, and three
/// pose sequences.
inline void write_fixture_set(const std::string& dir, int grid_n = 10) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto path = [&](const std::string& name) { return (fs::path(dir) / name).string(); };

    save_obj(make_grid_cloth(grid_n, 2.4, 1.05), path("grid_cloth.obj"));

    const SkinnedBody sphere = make_sphere_body(1.0, 24, 32);
    save_obj(sphere.rest_mesh, path("sphere_body.obj"));
    save_body_file(sphere, path("sphere_body.txt"), "sphere_body.obj");

    const SkinnedBody capsule = make_capsule_body(0.12, 0.35, 16, 24);
    save_obj(capsule.rest_mesh, path("capsule_body.obj"));
    save_body_file(capsule, path("capsule_body.txt"), "capsule_body.obj");

    save_obj(make_skirt_garment(0.2, 0.55, 0.3, -0.45, 12, 32), path("skirt_garment.obj"));

    save_pose_sequence(make_identity_sequence(1, 60), path("poses_identity.txt"));
    save_pose_sequence(make_root_drop_sequence(1, 60, Vec3(0, 0, -0.005)),
                       path("poses_root_drop.txt"));
    save_pose_sequence(make_limb_swing_sequence(2, 60, 1, Vec3(1, 0, 0), 0.6, 30.0),
                       path("poses_limb_swing.txt"));
}

} // namespace drape
