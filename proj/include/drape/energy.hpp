#pragma once

// Scalar energy terms with analytic gradients in the garment vertex
// positions: membrane strain, gravity, body collision, dihedral bending,
// inertia for the variational time step, and the covariance-based
// inextensibility residual with its per-vertex extension relaxation. The
// naive per-edge length constraint is kept as a diagnostic baseline only.
//
// Every term accumulates into the caller's gradient buffer and reduces in a
// fixed element order, so repeated evaluations are bitwise identical.

#include "drape/common.hpp"
#include "drape/mesh.hpp"
#include "drape/parallel.hpp"
#include "drape/rest_state.hpp"
#include "drape/sdf.hpp"

#include <cmath>
#include <vector>

namespace drape {

struct EnergyParams {
    double lame_mu = 0.0;            // Pa*m (plane stress, thickness-integrated)
    double lame_lambda = 0.0;        // Pa*m
    double bending_stiffness = 0.0;  // k_b, J
    double collision_stiffness = 0.0; // k_c, J/m^3
    double collision_margin = 0.0;   // m
    double inext_weight = 0.0;       // k_i
    Vec3 gravity = Vec3::Zero();     // m/s^2
    double timestep = 1.0 / 30.0;    // s
    double areal_density = 0.20;     // kg/m^2

    // extension ramp: k_ext = 1 + min(ramp_rate * d_c, ramp_clamp) * min(e, ramp_cap)
    double ramp_rate = 10.0;  // 1/m
    double ramp_clamp = 0.03;
    double ramp_cap = 100.0;

    /// Plane-stress Lame coefficients from Young's modulus and Poisson ratio.
    void set_elastic(double youngs, double poisson) {
        lame_mu = youngs / (2.0 * (1.0 + poisson));
        lame_lambda = youngs * poisson / (1.0 - poisson * poisson);
    }
};

struct EnergyBreakdown {
    double strain = 0.0;
    double gravity = 0.0;
    double collision = 0.0;
    double bending = 0.0;
    double inertia = 0.0;
    double inextensibility = 0.0;
    double total = 0.0;
    std::vector<Vec3> gradient;
};

namespace detail {

/// ddet/dA for a 3x3 matrix (cofactor matrix). Symmetric for symmetric A.
inline Mat3 cofactor_matrix(const Mat3& a) {
    Mat3 c;
    c(0, 0) = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
    c(0, 1) = a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2);
    c(0, 2) = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
    c(1, 0) = a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2);
    c(1, 1) = a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0);
    c(1, 2) = a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1);
    c(2, 0) = a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1);
    c(2, 1) = a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2);
    c(2, 2) = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    return c;
}

inline void check_sizes(const std::vector<Vec3>& x, const GarmentRestState& rest) {
    if (static_cast<int>(x.size()) != rest.vertex_count())
        throw MeshError(msg("position array has ", x.size(), " entries for a template with ",
                            rest.vertex_count(), " vertices"));
}

} // namespace detail

/// Characteristic-polynomial inextensibility: for every vertex the template
/// covariance spectrum must stay a set of eigenvalues of the deformed
/// one-ring covariance. Residual per vertex is sum_j |det(C - k_ext sigma_j I)|,
/// scaled by k_i. k_ext >= 1 relaxes the constraint locally; nullptr means 1
/// everywhere. |det| contributes a zero subgradient exactly at det = 0.
inline double inext_energy(const std::vector<Vec3>& x, const GarmentRestState& rest,
                           const std::vector<double>* k_ext, double k_i,
                           std::vector<Vec3>* grad) {
    detail::check_sizes(x, rest);
    if (k_ext && static_cast<int>(k_ext->size()) != rest.vertex_count())
        throw MeshError("extension factor array does not match vertex count");
    if (k_i == 0.0) return 0.0;

    double energy = 0.0;
    for (int i = 0; i < rest.vertex_count(); ++i) {
        const auto& members = rest.topology.rings[i].members;
        const double n = static_cast<double>(members.size());
        Vec3 mean = Vec3::Zero();
        for (int j : members) mean += x[j];
        mean /= n;
        Mat3 cov = Mat3::Zero();
        for (int j : members) {
            const Vec3 u = x[j] - mean;
            cov += u * u.transpose();
        }
        cov /= n;

        const double scale = k_ext ? (*k_ext)[i] : 1.0;
        for (int s = 0; s < 3; ++s) {
            Mat3 a = cov;
            const double shift = scale * rest.covariance_sigma[i][s];
            a(0, 0) -= shift;
            a(1, 1) -= shift;
            a(2, 2) -= shift;
            const double det = a.determinant();
            // determinants at roundoff scale sit on the |det| kink: their
            // sign is noise, so both the value and the subgradient are
            // taken as zero, keeping energy and gradient consistent for
            // the line search
            const double ring_scale = std::max(cov.trace() / 3.0, shift);
            const double det_tol = 1e-12 * ring_scale * ring_scale * ring_scale;
            if (std::abs(det) <= det_tol) continue;
            energy += k_i * std::abs(det);
            if (!grad) continue;
            const Mat3 g = (det > 0.0 ? 1.0 : -1.0) * detail::cofactor_matrix(a);
            const double w = 2.0 * k_i / n;
            for (int j : members) (*grad)[j] += w * (g * (x[j] - mean));
        }
    }
    return energy;
}

/// Per-edge squared length deviation, counted once from each endpoint.
/// Diagnostic only; never part of the solved objective.
inline double naive_edge_energy(const std::vector<Vec3>& x, const GarmentRestState& rest,
                                std::vector<Vec3>* grad) {
    detail::check_sizes(x, rest);
    double energy = 0.0;
    for (int e = 0; e < rest.edge_count(); ++e) {
        const auto& st = rest.topology.edges[e];
        const Vec3 d = x[st.v0] - x[st.v1];
        const double len = d.norm();
        const double diff = rest.rest_edge_length[e] - len;
        energy += 2.0 * diff * diff;
        if (grad && len > 1e-18) {
            const Vec3 g = (-4.0 * diff / len) * d;
            (*grad)[st.v0] += g;
            (*grad)[st.v1] -= g;
        }
    }
    return energy;
}

/// Saint-Venant-Kirchhoff membrane, 3x2 deformation gradient against the
/// rest tangent frame, integrated by rest area.
inline double strain_energy(const std::vector<Vec3>& x, const GarmentRestState& rest,
                            const EnergyParams& p, std::vector<Vec3>* grad) {
    detail::check_sizes(x, rest);
    if (p.lame_mu == 0.0 && p.lame_lambda == 0.0) return 0.0;
    double energy = 0.0;
    for (int f = 0; f < rest.face_count(); ++f) {
        const auto& fc = rest.template_mesh.faces[f];
        Eigen::Matrix<double, 3, 2> ds;
        ds.col(0) = x[fc[1]] - x[fc[0]];
        ds.col(1) = x[fc[2]] - x[fc[0]];
        const Eigen::Matrix<double, 3, 2> F = ds * rest.material_inverse[f];
        const Mat2 green = 0.5 * (F.transpose() * F - Mat2::Identity());
        const double tr = green.trace();
        const double area = rest.rest_area[f];
        energy += area * (p.lame_mu * green.squaredNorm() + 0.5 * p.lame_lambda * tr * tr);
        if (!grad) continue;
        const Mat2 stress = 2.0 * p.lame_mu * green + p.lame_lambda * tr * Mat2::Identity();
        const Eigen::Matrix<double, 3, 2> dE_ds =
            area * (F * stress) * rest.material_inverse[f].transpose();
        (*grad)[fc[1]] += dE_ds.col(0);
        (*grad)[fc[2]] += dE_ds.col(1);
        (*grad)[fc[0]] -= dE_ds.col(0) + dE_ds.col(1);
    }
    return energy;
}

/// Potential energy -sum m g.x.
inline double gravity_energy(const std::vector<Vec3>& x, const GarmentRestState& rest,
                             const EnergyParams& p, std::vector<Vec3>* grad) {
    detail::check_sizes(x, rest);
    if (p.gravity.isZero()) return 0.0;
    double energy = 0.0;
    for (int i = 0; i < rest.vertex_count(); ++i) {
        const double m = rest.vertex_mass[i];
        energy += -m * p.gravity.dot(x[i]);
        if (grad) (*grad)[i] += -m * p.gravity;
    }
    return energy;
}

/// Cubic penetration penalty k_c * max(margin - d, 0)^3 per vertex. `depth`
/// (when given) receives the clamped penetration d_c used by the extension
/// ramp. Distance queries fan out across threads; the reduction is serial.
inline double collision_energy(const std::vector<Vec3>& x, const CollisionMesh* body,
                               const EnergyParams& p, std::vector<Vec3>* grad,
                               std::vector<double>* depth) {
    if (depth) depth->assign(x.size(), 0.0);
    if (!body || p.collision_stiffness == 0.0) return 0.0;
    const int n = static_cast<int>(x.size());
    std::vector<SignedDistanceResult> hits(n);
    parallel_for(n, [&](int i) { hits[i] = body->signed_distance(x[i]); });
    double energy = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dc = std::max(p.collision_margin - hits[i].distance, 0.0);
        if (depth) (*depth)[i] = dc;
        if (dc <= 0.0) continue;
        energy += p.collision_stiffness * dc * dc * dc;
        if (grad) (*grad)[i] += -3.0 * p.collision_stiffness * dc * dc * hits[i].normal;
    }
    return energy;
}

/// d theta / d (x0, x1, xa, xb) for the signed dihedral of dihedral_angle().
inline void dihedral_gradient(const Vec3& x0, const Vec3& x1, const Vec3& xa, const Vec3& xb,
                              Vec3 out[4]) {
    const Vec3 e = x1 - x0;
    const double elen = e.norm();
    const Vec3 na = e.cross(xa - x0);
    const Vec3 nb = (xb - x0).cross(e);
    const double na2 = na.squaredNorm();
    const double nb2 = nb.squaredNorm();
    if (elen < 1e-18 || na2 < 1e-36 || nb2 < 1e-36) {
        out[0] = out[1] = out[2] = out[3] = Vec3::Zero();
        return;
    }
    const Vec3 ehat = e / elen;
    const Vec3 ga = na / na2;
    const Vec3 gb = nb / nb2;
    out[2] = -elen * ga;
    out[3] = -elen * gb;
    out[0] = -(xa - x1).dot(ehat) * ga - (xb - x1).dot(ehat) * gb;
    out[1] = (xa - x0).dot(ehat) * ga + (xb - x0).dot(ehat) * gb;
}

/// Per interior edge k_b l^2/(8a) (alpha (theta - theta_rest)^2 +
/// (1 - alpha) theta^2), rest length and stencil area from the template.
inline double bending_energy(const std::vector<Vec3>& x, const GarmentRestState& rest,
                             const EnergyParams& p, std::vector<Vec3>* grad) {
    detail::check_sizes(x, rest);
    if (p.bending_stiffness == 0.0) return 0.0;
    double energy = 0.0;
    for (int e = 0; e < rest.edge_count(); ++e) {
        const auto& st = rest.topology.edges[e];
        if (!st.interior()) continue;
        const double a = rest.bending_stencil_area[e];
        if (a <= 0.0) continue;
        const double l = rest.rest_edge_length[e];
        const double coeff = p.bending_stiffness * l * l / (8.0 * a);
        const double theta = dihedral_angle(x[st.v0], x[st.v1], x[st.opposite0], x[st.opposite1]);
        const double dev = theta - rest.rest_dihedral[e];
        const double alpha = rest.bending_alpha[e];
        energy += coeff * (alpha * dev * dev + (1.0 - alpha) * theta * theta);
        if (!grad) continue;
        const double dE_dtheta = coeff * (2.0 * alpha * dev + 2.0 * (1.0 - alpha) * theta);
        Vec3 dtheta[4];
        dihedral_gradient(x[st.v0], x[st.v1], x[st.opposite0], x[st.opposite1], dtheta);
        (*grad)[st.v0] += dE_dtheta * dtheta[0];
        (*grad)[st.v1] += dE_dtheta * dtheta[1];
        (*grad)[st.opposite0] += dE_dtheta * dtheta[2];
        (*grad)[st.opposite1] += dE_dtheta * dtheta[3];
    }
    return energy;
}

/// Variational implicit-Euler inertia about the prediction
/// x_prev + dt v_prev; the previous state enters as constants.
inline double inertia_energy(const std::vector<Vec3>& x, const std::vector<Vec3>& x_prev,
                             const std::vector<Vec3>& v_prev, const GarmentRestState& rest,
                             const EnergyParams& p, std::vector<Vec3>* grad) {
    detail::check_sizes(x, rest);
    if (x_prev.size() != x.size() || v_prev.size() != x.size())
        throw MeshError("previous state arrays do not match vertex count");
    const double inv_dt2 = 1.0 / (p.timestep * p.timestep);
    double energy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double m = rest.vertex_mass[i];
        const Vec3 dev = x[i] - x_prev[i] - p.timestep * v_prev[i];
        energy += 0.5 * m * inv_dt2 * dev.squaredNorm();
        if (grad) (*grad)[i] += m * inv_dt2 * dev;
    }
    return energy;
}

/// Extension ramp: unit factor away from contact, growing with both the
/// lagged penetration depth and the ramp counter, with both contributions
/// capped.
inline std::vector<double> extension_factors(const std::vector<double>& depth,
                                             double ramp_counter, const EnergyParams& p) {
    std::vector<double> k(depth.size());
    const double counter = std::min(ramp_counter, p.ramp_cap);
    for (size_t i = 0; i < depth.size(); ++i)
        k[i] = 1.0 + std::min(p.ramp_rate * depth[i], p.ramp_clamp) * counter;
    return k;
}

/// All terms of the per-frame objective. `x_prev`/`v_prev` may be null to
/// drop inertia (static mode); `body` may be null when no collision body is
/// present; `k_ext` null means fully inextensible.
inline EnergyBreakdown total_energy(const std::vector<Vec3>& x, const std::vector<Vec3>* x_prev,
                                    const std::vector<Vec3>* v_prev,
                                    const GarmentRestState& rest, const CollisionMesh* body,
                                    const EnergyParams& p, const std::vector<double>* k_ext,
                                    std::vector<double>* depth = nullptr) {
    EnergyBreakdown out;
    out.gradient.assign(x.size(), Vec3::Zero());
    out.strain = strain_energy(x, rest, p, &out.gradient);
    out.gravity = gravity_energy(x, rest, p, &out.gradient);
    out.collision = collision_energy(x, body, p, &out.gradient, depth);
    out.bending = bending_energy(x, rest, p, &out.gradient);
    if (x_prev && v_prev)
        out.inertia = inertia_energy(x, *x_prev, *v_prev, rest, p, &out.gradient);
    out.inextensibility = inext_energy(x, rest, k_ext, p.inext_weight, &out.gradient);
    out.total =
        out.strain + out.gravity + out.collision + out.bending + out.inertia + out.inextensibility;
    return out;
}

} // namespace drape
