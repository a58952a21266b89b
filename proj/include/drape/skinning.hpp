#pragma once

// Garment blend weights. The primary scheme spreads each garment vertex's
// joint weights over a body neighborhood via a Gaussian RBF participation
// measure whose width tracks how far the vertex sits from the body, so
// loose regions average over many body vertices while tight regions follow
// their nearest one. Nearest-vertex and inverse-distance k-nearest schemes
// are kept as baselines.

#include "drape/body.hpp"
#include "drape/common.hpp"
#include "drape/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace drape {

enum class WeightScheme { Rbf, Nearest, Knn };

inline const char* weight_scheme_name(WeightScheme s) {
    switch (s) {
        case WeightScheme::Rbf: return "rbf";
        case WeightScheme::Nearest: return "nearest";
        case WeightScheme::Knn: return "knn";
    }
    return "?";
}

inline WeightScheme weight_scheme_from_name(const std::string& name) {
    if (name == "rbf") return WeightScheme::Rbf;
    if (name == "nearest") return WeightScheme::Nearest;
    if (name == "knn") return WeightScheme::Knn;
    throw IoError(msg("unknown skinning scheme '", name, "' (rbf|nearest|knn)"));
}

struct GarmentWeights {
    Eigen::MatrixXd weights; // N_g x J, rows sum to 1
    WeightScheme scheme = WeightScheme::Rbf;
    double rbf_k = 0.5;
};

/// Gaussian kernel exp(-r^2 / (k m^2)). phi(0) = 1 for any width.
inline double rbf_kernel(double r, double m_i, double k) {
    return std::exp(-(r * r) / (k * m_i * m_i));
}

/// Participation of each body vertex in each garment vertex. Rows are kept
/// sparse: with the default width the kernel decays below 1e-12 within a
/// few multiples of the nearest-body distance, so dropped entries change
/// the final weights by less than 1e-9 per row.
struct ParticipationMatrix {
    std::vector<std::vector<std::pair<int, double>>> rows; // (body vertex, value)
    std::vector<double> nearest_distance;                  // m_i after flooring
    int body_count = 0;
    double k = 0.5;

    Eigen::MatrixXd to_dense() const {
        Eigen::MatrixXd dense =
            Eigen::MatrixXd::Zero(static_cast<long>(rows.size()), body_count);
        for (size_t i = 0; i < rows.size(); ++i)
            for (const auto& [j, v] : rows[i]) dense(static_cast<long>(i), j) = v;
        return dense;
    }
};

inline constexpr double kNearestDistanceFloor = 1e-4; // m, keeps the kernel finite on contact
inline constexpr double kParticipationDropTol = 1e-12;

inline ParticipationMatrix participation_matrix(const TriMesh& garment, const TriMesh& body,
                                                double k, double drop_tol = kParticipationDropTol) {
    if (body.vertex_count() == 0) throw MeshError("participation matrix needs a non-empty body");
    if (k <= 0.0) throw NumericalError("RBF width factor k must be positive");

    const int ng = garment.vertex_count();
    const int nb = body.vertex_count();
    ParticipationMatrix P;
    P.rows.resize(ng);
    P.nearest_distance.resize(ng);
    P.body_count = nb;
    P.k = k;

    std::vector<double> dist(nb);
    for (int i = 0; i < ng; ++i) {
        double nearest = std::numeric_limits<double>::infinity();
        for (int j = 0; j < nb; ++j) {
            dist[j] = (garment.vertices[i] - body.vertices[j]).norm();
            nearest = std::min(nearest, dist[j]);
        }
        // the kernel argument keeps the raw minimum (the nearest vertex gets
        // exactly phi(0) = 1); only the width is floored to stay finite on
        // contact
        const double width = std::max(nearest, kNearestDistanceFloor);
        P.nearest_distance[i] = width;
        auto& row = P.rows[i];
        for (int j = 0; j < nb; ++j) {
            const double p = rbf_kernel(dist[j] - nearest, width, k);
            if (p >= drop_tol) row.emplace_back(j, p);
        }
    }
    return P;
}

namespace detail {

inline void normalize_rows(Eigen::MatrixXd& w) {
    for (long i = 0; i < w.rows(); ++i) {
        const double sum = w.row(i).sum();
        if (sum <= 0.0)
            throw NumericalError(msg("garment weight row ", i, " sums to ", sum));
        w.row(i) /= sum;
    }
}

/// Body vertices sorted by (distance to point, index).
inline std::vector<std::pair<double, int>> sorted_body_distances(const Vec3& p,
                                                                 const TriMesh& body) {
    std::vector<std::pair<double, int>> d(body.vertex_count());
    for (int j = 0; j < body.vertex_count(); ++j)
        d[j] = {(p - body.vertices[j]).norm(), j};
    std::sort(d.begin(), d.end());
    return d;
}

} // namespace detail

inline GarmentWeights garment_weights_rbf(const ParticipationMatrix& P,
                                          const Eigen::MatrixXd& body_weights) {
    if (body_weights.rows() != P.body_count)
        throw MeshError(msg("participation matrix covers ", P.body_count,
                            " body vertices but body has ", body_weights.rows(), " weight rows"));
    GarmentWeights gw;
    gw.scheme = WeightScheme::Rbf;
    gw.rbf_k = P.k;
    gw.weights = Eigen::MatrixXd::Zero(static_cast<long>(P.rows.size()), body_weights.cols());
    for (size_t i = 0; i < P.rows.size(); ++i)
        for (const auto& [j, p] : P.rows[i])
            gw.weights.row(static_cast<long>(i)) += p * body_weights.row(j);
    detail::normalize_rows(gw.weights);
    return gw;
}

inline GarmentWeights garment_weights_nearest(const TriMesh& garment, const TriMesh& body,
                                              const Eigen::MatrixXd& body_weights) {
    if (body_weights.rows() != body.vertex_count())
        throw MeshError("body weight rows do not match body vertex count");
    GarmentWeights gw;
    gw.scheme = WeightScheme::Nearest;
    gw.weights.resize(garment.vertex_count(), body_weights.cols());
    for (int i = 0; i < garment.vertex_count(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int pick = -1;
        for (int j = 0; j < body.vertex_count(); ++j) {
            const double d = (garment.vertices[i] - body.vertices[j]).norm();
            if (d < best) { // ties keep the lowest index
                best = d;
                pick = j;
            }
        }
        gw.weights.row(i) = body_weights.row(pick);
    }
    return gw;
}

inline GarmentWeights garment_weights_knn(const TriMesh& garment, const TriMesh& body,
                                          const Eigen::MatrixXd& body_weights, int k_nearest) {
    if (body_weights.rows() != body.vertex_count())
        throw MeshError("body weight rows do not match body vertex count");
    if (k_nearest < 1 || k_nearest > body.vertex_count())
        throw MeshError(msg("k-nearest count ", k_nearest, " out of range [1, ",
                            body.vertex_count(), "]"));
    GarmentWeights gw;
    gw.scheme = WeightScheme::Knn;
    gw.weights = Eigen::MatrixXd::Zero(garment.vertex_count(), body_weights.cols());
    std::vector<bool> copied(garment.vertex_count(), false);
    for (int i = 0; i < garment.vertex_count(); ++i) {
        const auto sorted = detail::sorted_body_distances(garment.vertices[i], body);
        // K = 1 reduces to the nearest scheme bit for bit; an exact hit
        // takes its row outright for any K
        if (k_nearest == 1 || sorted[0].first < 1e-15) {
            gw.weights.row(i) = body_weights.row(sorted[0].second);
            copied[i] = true;
            continue;
        }
        for (int n = 0; n < k_nearest; ++n)
            gw.weights.row(i) += (1.0 / sorted[n].first) * body_weights.row(sorted[n].second);
    }
    for (int i = 0; i < garment.vertex_count(); ++i) {
        if (copied[i]) continue;
        const double sum = gw.weights.row(i).sum();
        if (sum <= 0.0) throw NumericalError(msg("garment weight row ", i, " sums to ", sum));
        gw.weights.row(i) /= sum;
    }
    return gw;
}

inline TriMesh skin_garment(const TriMesh& unposed, const GarmentWeights& weights,
                            const Skeleton& skeleton, const Pose& pose) {
    const JointTransforms xf = pose_transforms(skeleton, pose);
    TriMesh posed;
    posed.vertices = lbs_apply(unposed.vertices, weights.weights, xf);
    posed.faces = unposed.faces;
    return posed;
}

// ---------------------------------------------------------------------------
// Weight cache: text, bit-exact round trip at 17 significant digits.
//   drape-weights v1
//   vertices <N_g> joints <J> scheme <name> k <value>
//   <J doubles per row>
// ---------------------------------------------------------------------------

inline void save_weight_cache(const GarmentWeights& gw, const std::string& path) {
    std::FILE* out = std::fopen(path.c_str(), "wb");
    if (!out) throw IoError(msg("cannot open '", path, "' for writing"));
    std::fprintf(out, "drape-weights v1\n");
    std::fprintf(out, "vertices %ld joints %ld scheme %s k %.17g\n",
                 static_cast<long>(gw.weights.rows()), static_cast<long>(gw.weights.cols()),
                 weight_scheme_name(gw.scheme), gw.rbf_k);
    for (long i = 0; i < gw.weights.rows(); ++i) {
        for (long j = 0; j < gw.weights.cols(); ++j)
            std::fprintf(out, "%s%.17g", j == 0 ? "" : " ", gw.weights(i, j));
        std::fprintf(out, "\n");
    }
    if (std::fclose(out) != 0) throw IoError(msg("write failure on '", path, "'"));
}

inline GarmentWeights load_weight_cache(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(msg("cannot open weight cache '", path, "'"));
    std::string line;
    if (!std::getline(in, line) || line != "drape-weights v1")
        throw IoError(msg(path, ": not a drape-weights v1 file"));
    if (!std::getline(in, line)) throw IoError(msg(path, ": missing header"));
    std::istringstream hs(line);
    std::string t_vertices, t_joints, t_scheme, t_k, scheme_name;
    long ng = 0, joints = 0;
    double k = 0.0;
    if (!(hs >> t_vertices >> ng >> t_joints >> joints >> t_scheme >> scheme_name >> t_k >> k) ||
        t_vertices != "vertices" || t_joints != "joints" || t_scheme != "scheme" || t_k != "k")
        throw IoError(msg(path, ": malformed header '", line, "'"));
    GarmentWeights gw;
    gw.scheme = weight_scheme_from_name(scheme_name);
    gw.rbf_k = k;
    gw.weights.resize(ng, joints);
    for (long i = 0; i < ng; ++i) {
        if (!std::getline(in, line)) throw IoError(msg(path, ": truncated at row ", i));
        std::istringstream ls(line);
        for (long j = 0; j < joints; ++j)
            if (!(ls >> gw.weights(i, j)))
                throw IoError(msg(path, ": malformed weight row ", i));
    }
    return gw;
}

} // namespace drape
