#pragma once

// Command implementations behind the CLI: precompute, weights, simulate,
// drape, metrics, gradcheck, make-fixtures. Each command validates its
// configuration and inputs fully before writing anything, then emits its
// outputs plus a resolved_config.txt for provenance.

#include "drape/body.hpp"
#include "drape/common.hpp"
#include "drape/config.hpp"
#include "drape/energy.hpp"
#include "drape/fixtures.hpp"
#include "drape/metrics.hpp"
#include "drape/obj_io.hpp"
#include "drape/parallel.hpp"
#include "drape/rest_state.hpp"
#include "drape/sdf.hpp"
#include "drape/skinning.hpp"
#include "drape/solver.hpp"

#include <cstdio>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace drape {

namespace pipeline_detail {

inline void require_keys(const RunConfig& cfg, const std::vector<std::string>& keys,
                         const std::string& command) {
    for (const auto& key : keys)
        if (cfg.get(key).empty())
            throw IoError(msg(command, " requires config key '", key, "'"));
    cfg.validate_all();
}

inline void require_file(const std::string& path, const std::string& key) {
    if (!std::filesystem::exists(path))
        throw IoError(msg("config key '", key, "' points to missing file '", path, "'"));
}

inline std::string frame_obj_name(long frame) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05ld.obj", frame);
    return buf;
}

inline void setup_threads(const RunConfig& cfg) {
    set_thread_count(env_thread_override(cfg.get_int("run.threads")));
}

} // namespace pipeline_detail

/// Loads the rest cache when configured and present, otherwise recomputes
/// from the garment template (and body, for the bending balance).
inline GarmentRestState obtain_rest_state(const RunConfig& cfg) {
    const std::string cache = cfg.get("paths.rest_cache");
    if (!cache.empty() && std::filesystem::exists(cache)) return load_rest_cache(cache);

    const std::string garment_path = cfg.get("paths.garment");
    if (garment_path.empty())
        throw IoError("paths.garment is required when no rest cache is available");
    pipeline_detail::require_file(garment_path, "paths.garment");
    const TriMesh garment = load_obj(garment_path);

    std::optional<SkinnedBody> body;
    const std::string body_path = cfg.get("paths.body");
    if (!body_path.empty()) {
        pipeline_detail::require_file(body_path, "paths.body");
        body = load_body_file(body_path);
    }

    GarmentRestState rest =
        precompute_rest(garment, body ? &body->rest_mesh : nullptr,
                        cfg.get_double("material.areal_density"), cfg.get_bool("inext.closed_rings"));
    const std::string alpha = cfg.get("paths.alpha_override");
    if (!alpha.empty()) {
        pipeline_detail::require_file(alpha, "paths.alpha_override");
        apply_alpha_override(rest, alpha);
    }
    return rest;
}

inline GarmentWeights obtain_weights(const RunConfig& cfg, const TriMesh& garment,
                                     const SkinnedBody& body) {
    const std::string cache = cfg.get("paths.weight_cache");
    if (!cache.empty() && std::filesystem::exists(cache)) {
        GarmentWeights gw = load_weight_cache(cache);
        if (gw.weights.rows() != garment.vertex_count())
            throw MeshError(msg("weight cache covers ", gw.weights.rows(),
                                " vertices but garment has ", garment.vertex_count()));
        if (gw.weights.cols() != body.skeleton.joint_count())
            throw MeshError("weight cache joint count does not match body");
        return gw;
    }
    switch (cfg.skinning_scheme()) {
        case WeightScheme::Rbf: {
            const ParticipationMatrix P =
                participation_matrix(garment, body.rest_mesh, cfg.get_double("skinning.rbf_k"));
            return garment_weights_rbf(P, body.weights);
        }
        case WeightScheme::Nearest:
            return garment_weights_nearest(garment, body.rest_mesh, body.weights);
        case WeightScheme::Knn:
            return garment_weights_knn(garment, body.rest_mesh, body.weights,
                                       cfg.get_int("skinning.knn_k"));
    }
    throw IoError("unreachable skinning scheme");
}

// ---------------------------------------------------------------------------

struct PrecomputeResult {
    int vertices = 0;
    int edges = 0;
    double total_mass = 0.0;
};

inline PrecomputeResult cmd_precompute(const RunConfig& cfg) {
    pipeline_detail::require_keys(cfg, {"paths.garment", "paths.rest_cache"}, "precompute");
    pipeline_detail::setup_threads(cfg);

    RunConfig pure = cfg;
    pure.set("paths.rest_cache", ""); // force recomputation even if the cache exists
    const GarmentRestState rest = obtain_rest_state(pure);
    save_rest_cache(rest, cfg.get("paths.rest_cache"));

    PrecomputeResult r;
    r.vertices = rest.vertex_count();
    r.edges = rest.edge_count();
    r.total_mass = rest.total_mass();
    return r;
}

struct WeightsResult {
    double max_row_sum_deviation = 0.0;
    int rows = 0;
};

inline WeightsResult cmd_weights(const RunConfig& cfg) {
    pipeline_detail::require_keys(cfg, {"paths.garment", "paths.body", "paths.weight_cache"},
                                  "weights");
    pipeline_detail::setup_threads(cfg);
    pipeline_detail::require_file(cfg.get("paths.garment"), "paths.garment");
    pipeline_detail::require_file(cfg.get("paths.body"), "paths.body");

    const TriMesh garment = load_obj(cfg.get("paths.garment"));
    const SkinnedBody body = load_body_file(cfg.get("paths.body"));

    RunConfig pure = cfg;
    pure.set("paths.weight_cache", "");
    const GarmentWeights gw = obtain_weights(pure, garment, body);
    save_weight_cache(gw, cfg.get("paths.weight_cache"));

    WeightsResult r;
    r.rows = static_cast<int>(gw.weights.rows());
    for (long i = 0; i < gw.weights.rows(); ++i)
        r.max_row_sum_deviation =
            std::max(r.max_row_sum_deviation, std::abs(gw.weights.row(i).sum() - 1.0));
    return r;
}

// ---------------------------------------------------------------------------

struct SimulateResult {
    SequenceMetrics metrics;
    long frames = 0;
    SimState final_state;
};

/// Runs the pose sequence through the integrator, writing one OBJ per frame,
/// a run log line per frame, metrics.csv and resolved_config.txt into the
/// output directory.
inline SimulateResult cmd_simulate(const RunConfig& cfg) {
    pipeline_detail::require_keys(
        cfg, {"paths.garment", "paths.body", "paths.poses", "paths.output"}, "simulate");
    pipeline_detail::setup_threads(cfg);
    pipeline_detail::require_file(cfg.get("paths.garment"), "paths.garment");
    pipeline_detail::require_file(cfg.get("paths.body"), "paths.body");
    pipeline_detail::require_file(cfg.get("paths.poses"), "paths.poses");

    const TriMesh garment = load_obj(cfg.get("paths.garment"));
    const SkinnedBody body = load_body_file(cfg.get("paths.body"));
    const std::vector<Pose> poses =
        load_pose_sequence(cfg.get("paths.poses"), body.skeleton.joint_count());
    if (poses.empty()) throw IoError("pose sequence is empty");

    const GarmentRestState rest = obtain_rest_state(cfg);
    if (rest.vertex_count() != garment.vertex_count())
        throw MeshError("rest cache does not match the garment template");
    const GarmentWeights weights = obtain_weights(cfg, garment, body);
    const EnergyParams params = cfg.energy_params();
    SolverConfig solver = cfg.solver_config();
    const bool signed_metrics = cfg.get_bool("metrics.signed_deviation");

    namespace fs = std::filesystem;
    const fs::path out_dir(cfg.get("paths.output"));
    fs::create_directories(out_dir);
    cfg.write_resolved((out_dir / "resolved_config.txt").string());

    std::FILE* log = std::fopen((out_dir / "run.log").string().c_str(), "wb");
    if (!log) throw IoError("cannot open run.log for writing");
    struct LogCloser {
        std::FILE* f;
        ~LogCloser() { std::fclose(f); }
    } closer{log};

    SimulateResult result;
    SimState state = initial_state(garment);
    std::vector<FrameMetrics> per_frame;

    for (size_t f = 0; f < poses.size(); ++f) {
        FrameReport report;
        if (solver.mode == SolverConfig::Mode::Dynamic) {
            state = step_frame(state, poses[f], rest, &body, &weights, params, solver, nullptr,
                               &report);
        } else {
            SolverConfig per_frame_cfg = solver;
            per_frame_cfg.static_rounds = 1;
            const SimState relaxed =
                static_drape(state.unposed, poses[f], rest, &body, &weights, params,
                             per_frame_cfg, nullptr, &report);
            state.unposed = relaxed.unposed;
            state.world = relaxed.world;
            state.velocity.assign(state.world.size(), Vec3::Zero());
            state.penetration = relaxed.penetration;
            state.ramp_counter += 1.0;
            state.frame += 1;
        }

        TriMesh draped = garment;
        draped.vertices = state.world;
        save_obj(draped, (out_dir / pipeline_detail::frame_obj_name(state.frame - 1)).string());

        const CollisionMesh posed(pose_body(body, poses[f]));
        FrameMetrics metrics = frame_metrics(draped, rest, &posed, signed_metrics);
        metrics.frame = state.frame - 1;
        per_frame.push_back(metrics);

        const auto& e = report.energy;
        std::fprintf(log,
                     "frame=%ld iters=%d total=%.9e strain=%.9e gravity=%.9e collision=%.9e "
                     "bending=%.9e inertia=%.9e inext=%.9e eps_c=%.6f%s\n",
                     state.frame - 1, report.iterations, e.total, e.strain, e.gravity, e.collision,
                     e.bending, e.inertia, e.inextensibility, metrics.eps_collision,
                     report.line_search_failed ? " line_search=failed" : "");
        std::fflush(log);
    }

    result.metrics = sequence_metrics(per_frame);
    write_metrics_csv(result.metrics, (out_dir / "metrics.csv").string());
    result.frames = static_cast<long>(poses.size());
    result.final_state = std::move(state);
    return result;
}

/// Static drape: one equilibrium solve against the first pose (or identity
/// when no sequence is given). Writes drape.obj, metrics.csv, run.log.
inline SimulateResult cmd_drape(const RunConfig& cfg) {
    pipeline_detail::require_keys(cfg, {"paths.garment", "paths.body", "paths.output"}, "drape");
    pipeline_detail::setup_threads(cfg);
    pipeline_detail::require_file(cfg.get("paths.garment"), "paths.garment");
    pipeline_detail::require_file(cfg.get("paths.body"), "paths.body");

    const TriMesh garment = load_obj(cfg.get("paths.garment"));
    const SkinnedBody body = load_body_file(cfg.get("paths.body"));

    Pose pose = Pose::identity(body.skeleton.joint_count());
    if (!cfg.get("paths.poses").empty()) {
        pipeline_detail::require_file(cfg.get("paths.poses"), "paths.poses");
        const auto poses = load_pose_sequence(cfg.get("paths.poses"), body.skeleton.joint_count());
        if (!poses.empty()) pose = poses.front();
    }

    const GarmentRestState rest = obtain_rest_state(cfg);
    if (rest.vertex_count() != garment.vertex_count())
        throw MeshError("rest cache does not match the garment template");
    const GarmentWeights weights = obtain_weights(cfg, garment, body);
    const EnergyParams params = cfg.energy_params();
    const SolverConfig solver = cfg.solver_config();

    namespace fs = std::filesystem;
    const fs::path out_dir(cfg.get("paths.output"));
    fs::create_directories(out_dir);
    cfg.write_resolved((out_dir / "resolved_config.txt").string());

    FrameReport report;
    const SimState state =
        static_drape(garment.vertices, pose, rest, &body, &weights, params, solver, nullptr,
                     &report);

    TriMesh draped = garment;
    draped.vertices = state.world;
    save_obj(draped, (out_dir / "drape.obj").string());

    const CollisionMesh posed(pose_body(body, pose));
    FrameMetrics metrics =
        frame_metrics(draped, rest, &posed, cfg.get_bool("metrics.signed_deviation"));
    SimulateResult result;
    result.metrics = sequence_metrics({metrics});
    write_metrics_csv(result.metrics, (out_dir / "metrics.csv").string());

    std::FILE* log = std::fopen((out_dir / "run.log").string().c_str(), "wb");
    if (!log) throw IoError("cannot open run.log for writing");
    const auto& e = report.energy;
    std::fprintf(log,
                 "drape iters=%d total=%.9e strain=%.9e gravity=%.9e collision=%.9e bending=%.9e "
                 "inertia=%.9e inext=%.9e eps_c=%.6f%s\n",
                 report.iterations, e.total, e.strain, e.gravity, e.collision, e.bending, e.inertia,
                 e.inextensibility, metrics.eps_collision,
                 report.line_search_failed ? " line_search=failed" : "");
    std::fclose(log);

    result.frames = 1;
    result.final_state = state;
    return result;
}

/// Recomputes metrics for frame OBJs already on disk in paths.output.
inline SequenceMetrics cmd_metrics(const RunConfig& cfg) {
    pipeline_detail::require_keys(cfg, {"paths.body", "paths.poses", "paths.output"}, "metrics");
    pipeline_detail::setup_threads(cfg);
    pipeline_detail::require_file(cfg.get("paths.body"), "paths.body");
    pipeline_detail::require_file(cfg.get("paths.poses"), "paths.poses");

    const SkinnedBody body = load_body_file(cfg.get("paths.body"));
    const std::vector<Pose> poses =
        load_pose_sequence(cfg.get("paths.poses"), body.skeleton.joint_count());
    const GarmentRestState rest = obtain_rest_state(cfg);
    const bool signed_metrics = cfg.get_bool("metrics.signed_deviation");

    namespace fs = std::filesystem;
    const fs::path out_dir(cfg.get("paths.output"));
    std::vector<FrameMetrics> per_frame;
    for (size_t f = 0; f < poses.size(); ++f) {
        const fs::path obj = out_dir / pipeline_detail::frame_obj_name(static_cast<long>(f));
        if (!fs::exists(obj)) break; // allow interrupted runs: stop at the first gap
        const TriMesh draped = load_obj(obj.string());
        const CollisionMesh posed(pose_body(body, poses[f]));
        FrameMetrics m = frame_metrics(draped, rest, &posed, signed_metrics);
        m.frame = static_cast<long>(f);
        per_frame.push_back(m);
    }
    if (per_frame.empty()) throw IoError("no frame OBJs found in the output directory");
    const SequenceMetrics metrics = sequence_metrics(per_frame);
    write_metrics_csv(metrics, (out_dir / "metrics.csv").string());
    return metrics;
}

// ---------------------------------------------------------------------------
// Gradient verification: analytic gradients against central finite
// differences on randomly perturbed states, skipping probes near the known
// non-smooth loci (contact margin kink, |det| sign changes, dihedrals at
// +-pi).
// ---------------------------------------------------------------------------

struct GradcheckTerm {
    std::string term;
    double max_rel_error = 0.0;
    int probes = 0;
    int excluded = 0;
    bool pass = true;
};

struct GradcheckReport {
    std::vector<GradcheckTerm> terms;
    bool all_pass = true;
    double tolerance = 1e-4;
};

namespace pipeline_detail {

struct GradProbeContext {
    const GarmentRestState* rest;
    const CollisionMesh* body;
    const EnergyParams* params;
    const std::vector<double>* k_ext;
    const std::vector<Vec3>* x_prev;
    const std::vector<Vec3>* v_prev;
};

using TermEnergy =
    std::function<double(const std::vector<Vec3>&, const GradProbeContext&, std::vector<Vec3>*)>;

/// Vertices whose probes would straddle a kink for the given term.
inline std::vector<bool> excluded_vertices(const std::string& term, const std::vector<Vec3>& x,
                                           const GradProbeContext& ctx, double locus_tol) {
    std::vector<bool> excluded(x.size(), false);
    if (term == "collision" && ctx.body) {
        for (size_t i = 0; i < x.size(); ++i) {
            const double d = ctx.body->signed_distance(x[i]).distance;
            if (std::abs(d - ctx.params->collision_margin) < locus_tol ||
                std::abs(d) < locus_tol)
                excluded[i] = true;
        }
    } else if (term == "bending") {
        const auto& topo = ctx.rest->topology;
        for (int e = 0; e < ctx.rest->edge_count(); ++e) {
            const auto& st = topo.edges[e];
            if (!st.interior()) continue;
            const double theta =
                dihedral_angle(x[st.v0], x[st.v1], x[st.opposite0], x[st.opposite1]);
            const double pi = std::acos(-1.0);
            if (pi - std::abs(theta) < locus_tol) {
                excluded[st.v0] = excluded[st.v1] = true;
                excluded[st.opposite0] = excluded[st.opposite1] = true;
            }
        }
    } else if (term == "inext") {
        for (size_t i = 0; i < x.size(); ++i) {
            const auto& members = ctx.rest->topology.rings[i].members;
            const Mat3 cov = one_ring_covariance(x, members);
            for (int s = 0; s < 3; ++s) {
                const double shift = (*ctx.k_ext)[i] * ctx.rest->covariance_sigma[i][s];
                const double det = (cov - shift * Mat3::Identity()).determinant();
                if (std::abs(det) < 1e-12)
                    for (int j : members) excluded[j] = true;
            }
        }
    }
    return excluded;
}

} // namespace pipeline_detail

/// Checks one term on `trials` perturbed states around the template.
/// Probes `coords_per_state` random coordinates with central differences.
inline GradcheckTerm gradcheck_term(const std::string& term, const GarmentRestState& rest,
                                    const CollisionMesh* body, const EnergyParams& params,
                                    int trials, std::uint64_t seed, int coords_per_state = 36,
                                    double fd_step = 1e-6, double tolerance = 1e-4) {
    using pipeline_detail::GradProbeContext;
    pipeline_detail::TermEnergy eval;
    if (term == "strain") {
        eval = [](const std::vector<Vec3>& x, const GradProbeContext& c, std::vector<Vec3>* g) {
            return strain_energy(x, *c.rest, *c.params, g);
        };
    } else if (term == "gravity") {
        eval = [](const std::vector<Vec3>& x, const GradProbeContext& c, std::vector<Vec3>* g) {
            return gravity_energy(x, *c.rest, *c.params, g);
        };
    } else if (term == "collision") {
        eval = [](const std::vector<Vec3>& x, const GradProbeContext& c, std::vector<Vec3>* g) {
            return collision_energy(x, c.body, *c.params, g, nullptr);
        };
    } else if (term == "bending") {
        eval = [](const std::vector<Vec3>& x, const GradProbeContext& c, std::vector<Vec3>* g) {
            return bending_energy(x, *c.rest, *c.params, g);
        };
    } else if (term == "inertia") {
        eval = [](const std::vector<Vec3>& x, const GradProbeContext& c, std::vector<Vec3>* g) {
            return inertia_energy(x, *c.x_prev, *c.v_prev, *c.rest, *c.params, g);
        };
    } else if (term == "inext") {
        eval = [](const std::vector<Vec3>& x, const GradProbeContext& c, std::vector<Vec3>* g) {
            return inext_energy(x, *c.rest, c.k_ext, c.params->inext_weight, g);
        };
    } else if (term == "edge") {
        eval = [](const std::vector<Vec3>& x, const GradProbeContext& c, std::vector<Vec3>* g) {
            return naive_edge_energy(x, *c.rest, g);
        };
    } else {
        throw IoError(msg("unknown gradcheck term '", term, "'"));
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> ext(1.0, 1.4);

    double scale = 0.0;
    for (const auto& p : rest.template_mesh.vertices)
        scale = std::max(scale, p.cwiseAbs().maxCoeff());
    scale = std::max(scale, 1e-3);
    const double locus_tol = 1e-5;

    GradcheckTerm result;
    result.term = term;

    for (int trial = 0; trial < trials; ++trial) {
        std::vector<Vec3> x = rest.template_mesh.vertices;
        const double amplitude = 0.02 * scale;
        for (auto& p : x) p += amplitude * Vec3(noise(rng), noise(rng), noise(rng));

        std::vector<Vec3> x_prev = rest.template_mesh.vertices;
        std::vector<Vec3> v_prev(x.size());
        for (auto& v : v_prev) v = 0.5 * Vec3(noise(rng), noise(rng), noise(rng));
        std::vector<double> k_ext(x.size());
        for (auto& k : k_ext) k = ext(rng);

        GradProbeContext ctx{&rest, body, &params, &k_ext, &x_prev, &v_prev};

        std::vector<Vec3> grad(x.size(), Vec3::Zero());
        eval(x, ctx, &grad);
        double gmax = 0.0;
        for (const auto& g : grad) gmax = std::max(gmax, g.cwiseAbs().maxCoeff());
        const double floor = 1e-9 * std::max(1.0, gmax);

        const auto excluded = pipeline_detail::excluded_vertices(term, x, ctx, locus_tol);

        std::uniform_int_distribution<int> pick_vertex(0, static_cast<int>(x.size()) - 1);
        std::uniform_int_distribution<int> pick_axis(0, 2);
        for (int probe = 0; probe < coords_per_state; ++probe) {
            const int v = pick_vertex(rng);
            const int axis = pick_axis(rng);
            if (excluded[v]) {
                ++result.excluded;
                continue;
            }
            std::vector<Vec3> xp = x;
            xp[v][axis] += fd_step;
            const double fp = eval(xp, ctx, nullptr);
            xp[v][axis] -= 2.0 * fd_step;
            const double fm = eval(xp, ctx, nullptr);
            const double fd = (fp - fm) / (2.0 * fd_step);
            const double analytic = grad[v][axis];
            const double rel =
                std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), floor});
            result.max_rel_error = std::max(result.max_rel_error, rel);
            ++result.probes;
        }
    }
    result.pass = result.max_rel_error < tolerance;
    return result;
}

/// Runs the gradient suite for the selected term ("all" for every term) on
/// fixtures derived from the config paths.
inline GradcheckReport cmd_gradcheck(const RunConfig& cfg, const std::string& term_selector,
                                     int trials, std::uint64_t seed) {
    pipeline_detail::require_keys(cfg, {"paths.garment"}, "gradcheck");
    pipeline_detail::setup_threads(cfg);
    pipeline_detail::require_file(cfg.get("paths.garment"), "paths.garment");

    const TriMesh garment = load_obj(cfg.get("paths.garment"));
    std::optional<SkinnedBody> body;
    std::optional<CollisionMesh> collider;
    if (!cfg.get("paths.body").empty()) {
        pipeline_detail::require_file(cfg.get("paths.body"), "paths.body");
        body = load_body_file(cfg.get("paths.body"));
        collider.emplace(pose_body(*body, Pose::identity(body->skeleton.joint_count())));
    }

    RunConfig pure = cfg;
    pure.set("paths.rest_cache", "");
    const GarmentRestState rest = obtain_rest_state(pure);
    EnergyParams params = cfg.energy_params();
    if (params.lame_mu == 0.0) params.set_elastic(5000.0, 0.25);
    if (params.bending_stiffness == 0.0) params.bending_stiffness = 1e-5;
    if (params.collision_stiffness == 0.0) params.collision_stiffness = 1000.0;

    std::vector<std::string> terms;
    if (term_selector == "all")
        terms = {"strain", "gravity", "collision", "bending", "inertia", "inext", "edge"};
    else
        terms = {term_selector};

    GradcheckReport report;
    std::uint64_t term_seed = seed;
    for (const auto& term : terms) {
        if (term == "collision" && !collider) continue; // needs a body
        // linear terms admit any step, and a large one drowns the roundoff
        // of differencing two O(1) energies
        const double fd_step = term == "gravity" ? 1e-2 : 1e-6;
        GradcheckTerm t = gradcheck_term(term, rest, collider ? &*collider : nullptr, params,
                                         trials, term_seed++, 36, fd_step);
        report.all_pass = report.all_pass && t.pass;
        report.terms.push_back(std::move(t));
    }
    return report;
}

inline void cmd_make_fixtures(const std::string& out_dir, int grid_n) {
    write_fixture_set(out_dir, grid_n);
}

} // namespace drape
