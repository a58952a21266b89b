#pragma once

// Evaluation metrics: mean percent edge-length deviation, mean percent
// face-area deviation (both against the template), and the percentage of
// garment vertices strictly inside the body.

#include "drape/common.hpp"
#include "drape/mesh.hpp"
#include "drape/parallel.hpp"
#include "drape/rest_state.hpp"
#include "drape/sdf.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace drape {

struct FrameMetrics {
    double eps_edge = 0.0;      // %
    double eps_area = 0.0;      // %
    double eps_collision = 0.0; // % of vertices with d < 0
    long frame = 0;
};

struct SequenceMetrics {
    std::vector<FrameMetrics> frames;
    FrameMetrics mean;
    FrameMetrics stddev; // population standard deviation
};

/// Per-frame metrics. `signed_mean` switches the edge/area deviations from
/// mean absolute percent to mean signed percent. Collision counts strict
/// penetration (d < 0), not the solver's contact margin, so a garment
/// resting on the surface scores zero.
inline FrameMetrics frame_metrics(const TriMesh& draped, const GarmentRestState& rest,
                                  const CollisionMesh* body, bool signed_mean = false) {
    if (draped.vertex_count() != rest.vertex_count() ||
        draped.faces != rest.template_mesh.faces)
        throw MeshError("draped mesh topology does not match the template");

    FrameMetrics m;
    const auto& x = draped.vertices;

    if (rest.edge_count() > 0) {
        double sum = 0.0;
        for (int e = 0; e < rest.edge_count(); ++e) {
            const auto& st = rest.topology.edges[e];
            const double l = (x[st.v1] - x[st.v0]).norm();
            const double rel = 100.0 * (l - rest.rest_edge_length[e]) / rest.rest_edge_length[e];
            sum += signed_mean ? rel : std::abs(rel);
        }
        m.eps_edge = sum / rest.edge_count();
    }

    if (rest.face_count() > 0) {
        double sum = 0.0;
        for (int f = 0; f < rest.face_count(); ++f) {
            const auto& fc = draped.faces[f];
            const double a = triangle_area(x[fc[0]], x[fc[1]], x[fc[2]]);
            const double rel = 100.0 * (a - rest.rest_area[f]) / rest.rest_area[f];
            sum += signed_mean ? rel : std::abs(rel);
        }
        m.eps_area = sum / rest.face_count();
    }

    if (body && draped.vertex_count() > 0) {
        const int n = draped.vertex_count();
        std::vector<double> dist(n, 0.0);
        parallel_for(n, [&](int i) { dist[i] = body->signed_distance(x[i]).distance; });
        int inside = 0;
        for (int i = 0; i < n; ++i)
            if (dist[i] < 0.0) ++inside;
        m.eps_collision = 100.0 * inside / n;
    }
    return m;
}

inline SequenceMetrics sequence_metrics(const std::vector<FrameMetrics>& frames) {
    SequenceMetrics s;
    s.frames = frames;
    if (frames.empty()) return s;
    const double n = static_cast<double>(frames.size());
    for (const auto& f : frames) {
        s.mean.eps_edge += f.eps_edge;
        s.mean.eps_area += f.eps_area;
        s.mean.eps_collision += f.eps_collision;
    }
    s.mean.eps_edge /= n;
    s.mean.eps_area /= n;
    s.mean.eps_collision /= n;
    for (const auto& f : frames) {
        const double de = f.eps_edge - s.mean.eps_edge;
        const double da = f.eps_area - s.mean.eps_area;
        const double dc = f.eps_collision - s.mean.eps_collision;
        s.stddev.eps_edge += de * de;
        s.stddev.eps_area += da * da;
        s.stddev.eps_collision += dc * dc;
    }
    s.stddev.eps_edge = std::sqrt(s.stddev.eps_edge / n);
    s.stddev.eps_area = std::sqrt(s.stddev.eps_area / n);
    s.stddev.eps_collision = std::sqrt(s.stddev.eps_collision / n);
    return s;
}

/// CSV: header row, one row per frame, then mean and std summary rows.
inline void write_metrics_csv(const SequenceMetrics& s, const std::string& path) {
    std::FILE* out = std::fopen(path.c_str(), "wb");
    if (!out) throw IoError(msg("cannot open '", path, "' for writing"));
    std::fprintf(out, "frame,eps_e,eps_a,eps_c\n");
    for (const auto& f : s.frames)
        std::fprintf(out, "%ld,%.17g,%.17g,%.17g\n", f.frame, f.eps_edge, f.eps_area,
                     f.eps_collision);
    std::fprintf(out, "mean,%.17g,%.17g,%.17g\n", s.mean.eps_edge, s.mean.eps_area,
                 s.mean.eps_collision);
    std::fprintf(out, "std,%.17g,%.17g,%.17g\n", s.stddev.eps_edge, s.stddev.eps_area,
                 s.stddev.eps_collision);
    if (std::fclose(out) != 0) throw IoError(msg("write failure on '", path, "'"));
}

} // namespace drape
