#pragma once

// Per-frame variational integrator. Each frame minimizes the total energy
// over the unposed garment by gradient descent with backtracking line
// search, then skins the minimizer into world space. Collision and the
// other world-space terms are pulled back through the per-vertex affine
// blend of joint transforms. A static mode drops inertia and advances the
// extension ramp per outer round instead of per frame.

#include "drape/body.hpp"
#include "drape/common.hpp"
#include "drape/energy.hpp"
#include "drape/mesh.hpp"
#include "drape/rest_state.hpp"
#include "drape/sdf.hpp"
#include "drape/skinning.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace drape {

struct SimState {
    std::vector<Vec3> world;       // posed garment positions x
    std::vector<Vec3> velocity;    // world velocities v
    std::vector<Vec3> unposed;     // deformed unposed garment (solver variable)
    long frame = 0;
    double ramp_counter = 0.0;     // extension ramp e
    std::vector<double> penetration; // previous-frame d_c per vertex

    void validate(int vertex_count) const {
        const size_t n = static_cast<size_t>(vertex_count);
        if (world.size() != n || velocity.size() != n || unposed.size() != n ||
            penetration.size() != n)
            throw MeshError("simulation state arrays do not match garment vertex count");
        for (const auto& v : world)
            if (!v.allFinite()) throw NumericalError("non-finite position in state");
        for (const auto& v : velocity)
            if (!v.allFinite()) throw NumericalError("non-finite velocity in state");
    }
};

inline SimState initial_state(const TriMesh& garment) {
    SimState s;
    s.world = garment.vertices;
    s.unposed = garment.vertices;
    s.velocity.assign(garment.vertices.size(), Vec3::Zero());
    s.penetration.assign(garment.vertices.size(), 0.0);
    return s;
}

struct SolverConfig {
    enum class Mode { Dynamic, Static };

    int max_iterations = 200;
    double gradient_tolerance = 1e-6; // N, Euclidean norm of the masked gradient
    double line_search_shrink = 0.5;  // backtracking factor, in (0, 1)
    double line_search_slope = 1e-4;  // sufficient-decrease constant
    int max_line_search_steps = 60;
    Mode mode = Mode::Dynamic;
    int static_rounds = 40; // outer ramp rounds in static mode
    bool extension_schedule = true; // false pins k_ext = 1 everywhere

    void validate() const {
        if (gradient_tolerance <= 0.0) throw IoError("solver tolerance must be positive");
        if (line_search_shrink <= 0.0 || line_search_shrink >= 1.0)
            throw IoError("line search shrink factor must lie in (0, 1)");
        if (max_iterations < 1) throw IoError("solver needs at least one iteration");
    }
};

/// Vertices frozen at fixed unposed coordinates.
struct PinSet {
    std::vector<int> index;
    std::vector<Vec3> target;

    void validate(int vertex_count) const {
        if (index.size() != target.size()) throw MeshError("pin index/target size mismatch");
        for (int i : index)
            if (i < 0 || i >= vertex_count)
                throw MeshError(msg("pin index ", i, " out of range"));
    }
};

inline void apply_pins(std::vector<Vec3>& x, const PinSet& pins) {
    for (size_t k = 0; k < pins.index.size(); ++k) x[pins.index[k]] = pins.target[k];
}

struct FrameReport {
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = false;
    bool line_search_failed = false;
    EnergyBreakdown energy;            // at the accepted minimizer
    std::vector<double> energy_trace;  // objective after each accepted step
};

namespace detail {

/// Per-vertex affine map u -> world from the blended joint transforms.
struct SkinMap {
    bool identity = true;
    std::vector<Mat3> linear;
    std::vector<Vec3> offset;

    std::vector<Vec3> apply(const std::vector<Vec3>& u) const {
        if (identity) return u;
        std::vector<Vec3> y(u.size());
        for (size_t i = 0; i < u.size(); ++i) y[i] = linear[i] * u[i] + offset[i];
        return y;
    }

    /// Pull a world-space gradient back to the unposed variables.
    void pull_back(std::vector<Vec3>& grad) const {
        if (identity) return;
        for (size_t i = 0; i < grad.size(); ++i)
            grad[i] = linear[i].transpose() * grad[i];
    }
};

inline SkinMap make_skin_map(const GarmentWeights* weights, const Skeleton* skeleton,
                             const Pose* pose, int vertex_count) {
    SkinMap map;
    if (!weights || !skeleton || !pose) return map;
    const JointTransforms xf = pose_transforms(*skeleton, *pose);
    if (weights->weights.rows() != vertex_count)
        throw MeshError("garment weight rows do not match garment vertex count");
    map.identity = false;
    map.linear.resize(vertex_count);
    map.offset.resize(vertex_count);
    // displacement blend, matching lbs_apply: exact identity at rest pose
    for (int i = 0; i < vertex_count; ++i) {
        Mat3 b = Mat3::Identity();
        Vec3 c = Vec3::Zero();
        for (int j = 0; j < weights->weights.cols(); ++j) {
            const double w = weights->weights(i, j);
            if (w == 0.0) continue;
            b += w * (xf.rotation[j] - Mat3::Identity());
            c += w * xf.translation[j];
        }
        map.linear[i] = b;
        map.offset[i] = c;
    }
    return map;
}

struct Objective {
    std::function<double(const std::vector<Vec3>&, std::vector<Vec3>*)> eval;
};

/// Gradient descent with Armijo backtracking. The trial step reuses a
/// safeguarded Barzilai-Borwein estimate once history exists. Pinned
/// coordinates are projected before the first evaluation and their gradient
/// entries masked, so every iterate satisfies the pins exactly.
inline void minimize(std::vector<Vec3>& u, const Objective& objective, const PinSet* pins,
                     const SolverConfig& cfg, FrameReport& report) {
    const int n = static_cast<int>(u.size());
    if (pins) apply_pins(u, *pins);

    std::vector<Vec3> grad(n, Vec3::Zero());
    auto eval = [&](const std::vector<Vec3>& pos, std::vector<Vec3>* g) {
        if (g) g->assign(n, Vec3::Zero());
        const double f = objective.eval(pos, g);
        if (!std::isfinite(f)) throw NumericalError("objective is not finite");
        if (g) {
            for (const auto& v : *g)
                if (!v.allFinite()) throw NumericalError("gradient is not finite");
            if (pins)
                for (int idx : pins->index) (*g)[idx] = Vec3::Zero();
        }
        return f;
    };

    double f = eval(u, &grad);
    report.energy_trace.push_back(f);

    // mesh-scale displacement cap for the very first trial step
    double scale = 0.0;
    for (const auto& p : u) scale = std::max(scale, p.cwiseAbs().maxCoeff());
    scale = std::max(scale, 1e-3);

    std::vector<Vec3> u_prev, g_prev;
    std::vector<Vec3> trial(n);
    double step = 0.0;
    int stagnant = 0;

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        double gnorm2 = 0.0;
        for (const auto& v : grad) gnorm2 += v.squaredNorm();
        report.gradient_norm = std::sqrt(gnorm2);
        if (report.gradient_norm <= cfg.gradient_tolerance) {
            report.converged = true;
            break;
        }

        // trial step: Barzilai-Borwein estimate, but never below twice the
        // last accepted step. Kink crossings in the nonsmooth terms inflate
        // the BB curvature estimate arbitrarily; letting the trial regrow
        // keeps the walk at the rate the backtracking actually permits.
        if (!u_prev.empty()) {
            double ss = 0.0, sy = 0.0;
            for (int i = 0; i < n; ++i) {
                const Vec3 s = u[i] - u_prev[i];
                const Vec3 y = grad[i] - g_prev[i];
                ss += s.squaredNorm();
                sy += s.dot(y);
            }
            const double bb = sy > 1e-300 ? ss / sy : step * 2.0;
            step = std::max(bb, 2.0 * step);
        } else {
            double gmax = 0.0;
            for (const auto& v : grad) gmax = std::max(gmax, v.cwiseAbs().maxCoeff());
            step = 0.05 * scale / std::max(gmax, 1e-12);
        }
        step = std::clamp(step, 1e-16, 1e16);

        const double slope = -gnorm2; // d = -grad
        bool accepted = false;
        for (int ls = 0; ls < cfg.max_line_search_steps; ++ls) {
            for (int i = 0; i < n; ++i) trial[i] = u[i] - step * grad[i];
            if (pins) apply_pins(trial, *pins);
            const double f_trial = eval(trial, nullptr);
            if (f_trial <= f + cfg.line_search_slope * step * slope) {
                u_prev = u;
                g_prev = grad;
                u.swap(trial);
                stagnant = f - f_trial <= 1e-15 * (1.0 + std::abs(f)) ? stagnant + 1 : 0;
                f = f_trial;
                accepted = true;
                break;
            }
            step *= cfg.line_search_shrink;
        }
        report.iterations = iter + 1;
        if (!accepted) {
            report.line_search_failed = true; // keep best-so-far iterate
            break;
        }
        report.energy_trace.push_back(f);
        if (stagnant >= 25) break; // decreases are below float resolution
        f = eval(u, &grad);
    }
}

inline std::vector<double> collision_depths(const std::vector<Vec3>& world,
                                            const CollisionMesh* body, const EnergyParams& p) {
    std::vector<double> depth(world.size(), 0.0);
    if (!body) return depth;
    const int n = static_cast<int>(world.size());
    std::vector<double> dist(n, 0.0);
    parallel_for(n, [&](int i) { dist[i] = body->signed_distance(world[i]).distance; });
    for (int i = 0; i < n; ++i) depth[i] = std::max(p.collision_margin - dist[i], 0.0);
    return depth;
}

} // namespace detail

/// One dynamic frame: pose the body, relax the extension factors from the
/// lagged penetration, minimize the full objective in unposed space, skin,
/// and update velocities. The previous frame's positions and velocities
/// enter the inertia term as constants.
inline SimState step_frame(const SimState& state, const Pose& pose, const GarmentRestState& rest,
                           const SkinnedBody* body, const GarmentWeights* weights,
                           const EnergyParams& params, const SolverConfig& cfg,
                           const PinSet* pins = nullptr, FrameReport* report_out = nullptr) {
    state.validate(rest.vertex_count());
    if (pins) pins->validate(rest.vertex_count());
    cfg.validate();

    std::optional<CollisionMesh> posed_body;
    if (body) posed_body.emplace(pose_body(*body, pose));
    const CollisionMesh* collider = posed_body ? &*posed_body : nullptr;

    const detail::SkinMap map = detail::make_skin_map(
        weights, body ? &body->skeleton : nullptr, &pose, rest.vertex_count());

    std::vector<double> k_ext;
    if (cfg.extension_schedule)
        k_ext = extension_factors(state.penetration, state.ramp_counter, params);
    else
        k_ext.assign(rest.vertex_count(), 1.0);

    const std::vector<Vec3>& x_prev = state.world;
    const std::vector<Vec3>& v_prev = state.velocity;

    detail::Objective objective;
    objective.eval = [&](const std::vector<Vec3>& u, std::vector<Vec3>* grad) {
        const std::vector<Vec3> y = map.apply(u);
        const EnergyBreakdown e =
            total_energy(y, &x_prev, &v_prev, rest, collider, params, &k_ext);
        if (grad) {
            *grad = e.gradient;
            map.pull_back(*grad);
        }
        return e.total;
    };

    SimState next = state;
    FrameReport report;
    detail::minimize(next.unposed, objective, pins, cfg, report);

    next.world = map.apply(next.unposed);
    for (size_t i = 0; i < next.world.size(); ++i)
        next.velocity[i] = (next.world[i] - x_prev[i]) / params.timestep;
    next.penetration = detail::collision_depths(next.world, collider, params);
    next.ramp_counter = state.ramp_counter + 1.0;
    next.frame = state.frame + 1;

    if (report_out) {
        report.energy = total_energy(next.world, &x_prev, &v_prev, rest, collider, params, &k_ext);
        *report_out = std::move(report);
    }
    return next;
}

/// Equilibrium drape: inertia dropped, extension ramp advanced once per
/// outer round so penetrating regions loosen progressively. Returns the
/// relaxed state with zero velocity.
inline SimState static_drape(const std::vector<Vec3>& initial, const Pose& pose,
                             const GarmentRestState& rest, const SkinnedBody* body,
                             const GarmentWeights* weights, const EnergyParams& params,
                             const SolverConfig& cfg, const PinSet* pins = nullptr,
                             FrameReport* report_out = nullptr) {
    if (static_cast<int>(initial.size()) != rest.vertex_count())
        throw MeshError("initial positions do not match garment vertex count");
    if (pins) pins->validate(rest.vertex_count());
    cfg.validate();

    std::optional<CollisionMesh> posed_body;
    if (body) posed_body.emplace(pose_body(*body, pose));
    const CollisionMesh* collider = posed_body ? &*posed_body : nullptr;

    const detail::SkinMap map = detail::make_skin_map(
        weights, body ? &body->skeleton : nullptr, &pose, rest.vertex_count());

    SimState state;
    state.unposed = initial;
    state.world = map.apply(state.unposed);
    state.velocity.assign(initial.size(), Vec3::Zero());
    state.penetration = detail::collision_depths(state.world, collider, params);

    FrameReport report;
    const int rounds = std::max(1, cfg.static_rounds);
    for (int round = 0; round < rounds; ++round) {
        std::vector<double> k_ext;
        if (cfg.extension_schedule)
            k_ext = extension_factors(state.penetration, state.ramp_counter, params);
        else
            k_ext.assign(rest.vertex_count(), 1.0);

        detail::Objective objective;
        objective.eval = [&](const std::vector<Vec3>& u, std::vector<Vec3>* grad) {
            const std::vector<Vec3> y = map.apply(u);
            const EnergyBreakdown e =
                total_energy(y, nullptr, nullptr, rest, collider, params, &k_ext);
            if (grad) {
                *grad = e.gradient;
                map.pull_back(*grad);
            }
            return e.total;
        };

        FrameReport round_report;
        detail::minimize(state.unposed, objective, pins, cfg, round_report);
        state.world = map.apply(state.unposed);
        state.penetration = detail::collision_depths(state.world, collider, params);
        state.ramp_counter += 1.0;

        report.iterations += round_report.iterations;
        report.gradient_norm = round_report.gradient_norm;
        report.converged = round_report.converged;
        report.line_search_failed = report.line_search_failed || round_report.line_search_failed;
        report.energy_trace.insert(report.energy_trace.end(), round_report.energy_trace.begin(),
                                   round_report.energy_trace.end());
    }

    if (report_out) {
        std::vector<double> k_ext(rest.vertex_count(), 1.0);
        report.energy = total_energy(state.world, nullptr, nullptr, rest, collider, params, &k_ext);
        *report_out = std::move(report);
    }
    return state;
}

} // namespace drape
