// Acceptance suite. Each criterion prints exactly one PASS/FAIL line; the
// binary exits nonzero if any criterion fails.

#include "drape/pipeline.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

using namespace drape;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& name, const std::string& detail) {
    std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path work_dir() {
    const auto dir = fs::temp_directory_path() / "drape_acceptance";
    fs::create_directories(dir);
    return dir;
}

std::string file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

EnergyParams drape_params() {
    EnergyParams p;
    p.set_elastic(500.0, 0.25);
    p.bending_stiffness = 1e-6;
    p.collision_stiffness = 1000.0;
    p.collision_margin = 0.004;
    p.inext_weight = 2e8;
    p.gravity = Vec3(0, 0, -9.81);
    p.timestep = 1.0 / 30.0;
    p.areal_density = 0.30;
    return p;
}

// ---------------------------------------------------------------------------

void criterion_1_gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    const TriMesh cloth = make_grid_cloth(20, 2.4, 1.05);
    const SkinnedBody sphere = make_sphere_body(1.0, 20, 28);
    const GarmentRestState rest = precompute_rest(cloth, &sphere.rest_mesh, 0.2);
    const CollisionMesh collider(sphere.rest_mesh);

    EnergyParams params = drape_params();
    std::string detail;
    bool pass = true;
    for (const std::string term : {"strain", "gravity", "collision", "bending", "inertia",
                                   "inext"}) {
        const GradcheckTerm r =
            gradcheck_term(term, rest, &collider, params, /*trials=*/20, /*seed=*/1234);
        pass = pass && r.pass;
        detail += msg(term, "=", r.max_rel_error, " ");
    }
    const double elapsed = seconds_since(t0);
    pass = pass && elapsed < 60.0;
    report(1, pass, "gradient suite vs central differences",
           msg(detail, "runtime=", elapsed, "s"));
}

void criterion_2_rigid_invariance() {
    const TriMesh cloth = make_grid_cloth(12, 1.4);
    const GarmentRestState rest = precompute_rest(cloth, nullptr, 0.2);
    EnergyParams p = drape_params();

    // a stretched copy keeps all three energies strictly positive so the
    // relative change is well defined; the template itself is covered by
    // criterion 3
    std::vector<Vec3> stretched = cloth.vertices;
    for (auto& v : stretched) v *= 1.05;
    const double inext0 = inext_energy(stretched, rest, nullptr, 1.0, nullptr);
    const double edge0 = naive_edge_energy(stretched, rest, nullptr);
    const double strain0 = strain_energy(stretched, rest, p, nullptr);

    std::mt19937_64 rng(777);
    double worst = 0.0;
    bool pass = inext0 > 0.0 && edge0 > 0.0 && strain0 > 0.0;
    for (int t = 0; t < 100; ++t) {
        const auto motion = oracles::random_rigid_motion(rng);
        const auto moved = motion.apply(stretched);
        worst = std::max(worst,
                         std::abs(inext_energy(moved, rest, nullptr, 1.0, nullptr) - inext0) /
                             inext0);
        worst = std::max(worst, std::abs(naive_edge_energy(moved, rest, nullptr) - edge0) / edge0);
        worst = std::max(worst,
                         std::abs(strain_energy(moved, rest, p, nullptr) - strain0) / strain0);
    }
    pass = pass && worst < 1e-8;

    // gravity changes by exactly -(total mass) g.t under pure translation
    double worst_gravity = 0.0;
    const double mass = rest.total_mass();
    for (int t = 0; t < 100; ++t) {
        std::normal_distribution<double> nd(0.0, 1.0);
        const Vec3 shift(nd(rng), nd(rng), nd(rng));
        std::vector<Vec3> moved = stretched;
        for (auto& v : moved) v += shift;
        const double delta = gravity_energy(moved, rest, p, nullptr) -
                             gravity_energy(stretched, rest, p, nullptr);
        const double expected = -mass * p.gravity.dot(shift);
        worst_gravity =
            std::max(worst_gravity, std::abs(delta - expected) / std::max(1e-12, std::abs(expected)));
    }
    pass = pass && worst_gravity < 1e-9;
    report(2, pass, "rigid invariance of inext/edge/strain, gravity linearity",
           msg("max_rel_change=", worst, " gravity_rel=", worst_gravity));
}

void criterion_3_spectrum_identity() {
    const TriMesh cloth = make_grid_cloth(16, 1.8);
    const GarmentRestState rest = precompute_rest(cloth, nullptr, 0.2);
    const double k_i = 2e8;

    const double at_template = inext_energy(cloth.vertices, rest, nullptr, k_i, nullptr);
    bool pass = at_template < 1e-10 * k_i;

    std::vector<Vec3> scaled = cloth.vertices;
    for (auto& v : scaled) v *= 1.05;
    const double scaled_energy = inext_energy(scaled, rest, nullptr, k_i, nullptr);
    pass = pass && scaled_energy > 0.0;

    TriMesh deformed = cloth;
    deformed.vertices = scaled;
    std::vector<std::vector<int>> rings;
    for (const auto& ring : rest.topology.rings) rings.push_back(ring.members);
    const std::vector<double> ones(cloth.vertex_count(), 1.0);
    const double oracle =
        k_i * oracles::inext_residual_brute_force(deformed, rings, rest.covariance_sigma, ones);
    const double rel = std::abs(scaled_energy - oracle) / oracle;
    pass = pass && rel < 1e-8;

    report(3, pass, "covariance spectrum identity at the template",
           msg("template=", at_template / k_i, " scaled_rel_vs_oracle=", rel));
}

void criterion_4_skinning_algebra() {
    const TriMesh skirt = make_skirt_garment(0.2, 0.55, 0.3, -0.45, 12, 32);
    const SkinnedBody capsule = make_capsule_body(0.12, 0.35, 16, 24);

    const ParticipationMatrix P = participation_matrix(skirt, capsule.rest_mesh, 0.5);
    const GarmentWeights rbf = garment_weights_rbf(P, capsule.weights);
    const GarmentWeights nearest =
        garment_weights_nearest(skirt, capsule.rest_mesh, capsule.weights);
    const GarmentWeights knn1 = garment_weights_knn(skirt, capsule.rest_mesh, capsule.weights, 1);

    double worst_sum = 0.0;
    for (const auto* gw : {&rbf, &nearest, &knn1})
        for (long i = 0; i < gw->weights.rows(); ++i)
            worst_sum = std::max(worst_sum, std::abs(gw->weights.row(i).sum() - 1.0));
    bool pass = worst_sum < 1e-6;

    // tight limit: a garment vertex on the body with everything else far away
    const TriMesh tight_garment = [] {
        TriMesh m;
        m.vertices = {Vec3(0, 0, 0)};
        return m;
    }();
    const TriMesh tight_body = [] {
        TriMesh m;
        m.vertices = {Vec3(0, 0, 0), Vec3(10, 0, 0), Vec3(0, 10, 0)};
        return m;
    }();
    Eigen::MatrixXd W(3, 2);
    W << 0.6, 0.4, 0.1, 0.9, 0.8, 0.2;
    const GarmentWeights tight_rbf =
        garment_weights_rbf(participation_matrix(tight_garment, tight_body, 0.5), W);
    const GarmentWeights tight_near = garment_weights_nearest(tight_garment, tight_body, W);
    const double tight_diff =
        (tight_rbf.weights.row(0) - tight_near.weights.row(0)).cwiseAbs().maxCoeff();
    pass = pass && tight_diff < 1e-6;

    const double knn_vs_near = (knn1.weights - nearest.weights).cwiseAbs().maxCoeff();
    pass = pass && knn_vs_near == 0.0;

    report(4, pass, "skinning algebra on the skirt fixture",
           msg("max_row_sum_dev=", worst_sum, " tight_limit_diff=", tight_diff,
               " knn1_vs_nearest=", knn_vs_near));
}

struct DrapeOutcome {
    double eps_e = 0.0;
    double eps_c = 0.0;
    double runtime = 0.0;
};

/// Dynamic drop of the grid(30) cloth onto the unit sphere. The
/// inextensibility weight is scale-matched to this mesh resolution (the
/// one-ring covariance determinants scale with the sixth power of the
/// edge length, so the dimensionless weight must follow the mesh).
DrapeOutcome run_sphere_drop(bool schedule, bool with_inext) {
    const TriMesh cloth = make_grid_cloth(30, 2.6, 1.03);
    const SkinnedBody sphere = make_sphere_body(1.0, 24, 32);
    const GarmentRestState rest = precompute_rest(cloth, &sphere.rest_mesh, 0.30);
    const GarmentWeights weights{Eigen::MatrixXd::Ones(cloth.vertex_count(), 1),
                                 WeightScheme::Nearest, 0.5};
    EnergyParams p = drape_params();
    p.set_elastic(30.0, 0.25);
    p.collision_stiffness = 4e6;
    p.inext_weight = with_inext ? 4000.0 : 0.0;

    SolverConfig cfg;
    cfg.max_iterations = 50;
    cfg.gradient_tolerance = 1e-7;
    cfg.extension_schedule = schedule;

    const auto t0 = std::chrono::steady_clock::now();
    SimState state = initial_state(cloth);
    const Pose pose = Pose::identity(1);
    for (int f = 0; f < 90; ++f)
        state = step_frame(state, pose, rest, &sphere, &weights, p, cfg);

    const CollisionMesh posed(pose_body(sphere, pose));
    TriMesh draped = cloth;
    draped.vertices = state.world;
    const FrameMetrics m = frame_metrics(draped, rest, &posed);

    DrapeOutcome out;
    out.eps_e = m.eps_edge;
    out.eps_c = m.eps_collision;
    out.runtime = seconds_since(t0);
    return out;
}

/// Static sphere drape for the collision-awareness ablation: the cloth is
/// pinned by its corners below the sphere top and starts from a slightly
/// pre-stretched taut span, so covering the intruding sphere demands local
/// stretch. With the extension pinned at 1 the inextensibility term holds
/// the sheet inside the body; the schedule lets penetrating regions grow
/// their covariance targets and climb out.
DrapeOutcome run_tent_drape(bool schedule) {
    const int n = 30;
    const TriMesh cloth = make_grid_cloth(n, 2.6, 0.0);
    const SkinnedBody sphere = make_sphere_body(1.0, 24, 32);
    const GarmentRestState rest = precompute_rest(cloth, &sphere.rest_mesh, 0.30);
    const GarmentWeights weights{Eigen::MatrixXd::Ones(cloth.vertex_count(), 1),
                                 WeightScheme::Nearest, 0.5};
    EnergyParams p = drape_params();
    p.set_elastic(30.0, 0.25);
    p.collision_stiffness = 2e4;
    p.inext_weight = 2e8;

    std::vector<Vec3> init = cloth.vertices;
    for (auto& v : init) {
        v.x() *= 1.05;
        v.y() *= 1.05;
        v.z() = 0.45;
    }
    PinSet pins;
    for (const int idx : {0, n - 1, n * (n - 1), n * n - 1}) {
        pins.index.push_back(idx);
        pins.target.push_back(init[idx]);
    }

    SolverConfig cfg;
    cfg.max_iterations = 60;
    cfg.gradient_tolerance = 1e-7;
    cfg.extension_schedule = schedule;
    cfg.static_rounds = 100;
    cfg.mode = SolverConfig::Mode::Static;

    const auto t0 = std::chrono::steady_clock::now();
    const Pose pose = Pose::identity(1);
    const SimState state =
        static_drape(init, pose, rest, &sphere, &weights, p, cfg, &pins, nullptr);

    const CollisionMesh posed(pose_body(sphere, pose));
    TriMesh draped = cloth;
    draped.vertices = state.world;
    const FrameMetrics m = frame_metrics(draped, rest, &posed);

    DrapeOutcome out;
    out.eps_e = m.eps_edge;
    out.eps_c = m.eps_collision;
    out.runtime = seconds_since(t0);
    return out;
}

void criteria_5_6_sphere_drape() {
    const DrapeOutcome full = run_sphere_drop(true, true);
    const bool pass5 = full.eps_c < 0.5 && full.eps_e < 4.0 && full.runtime < 300.0;
    report(5, pass5, "sphere drape end-to-end",
           msg("eps_c=", full.eps_c, "% eps_e=", full.eps_e, "% runtime=", full.runtime, "s"));

    // collision-awareness direction on the pinned static drape, where
    // covering the sphere requires stretch; inextensibility direction on
    // the dynamic drop, where the hanging cloth is what stretches
    const DrapeOutcome tent_scheduled = run_tent_drape(true);
    const DrapeOutcome tent_fixed = run_tent_drape(false);
    const DrapeOutcome no_inext = run_sphere_drop(true, false);
    const bool pass6 = tent_fixed.eps_c > tent_scheduled.eps_c && no_inext.eps_e >= full.eps_e;
    report(6, pass6, "ablation directions",
           msg("eps_c scheduled=", tent_scheduled.eps_c, "% fixed=", tent_fixed.eps_c,
               "% | eps_e full=", full.eps_e, "% no_inext=", no_inext.eps_e, "%"));
}

void criterion_7_metrics_arithmetic() {
    const TriMesh cloth = make_grid_cloth(12, 1.7);
    const GarmentRestState rest = precompute_rest(cloth, nullptr, 0.2);

    TriMesh scaled = cloth;
    for (auto& v : scaled.vertices) v *= 1.05;
    const FrameMetrics ms = frame_metrics(scaled, rest, nullptr);
    const FrameMetrics mi = frame_metrics(cloth, rest, nullptr);
    const bool pass = std::abs(ms.eps_edge - 5.0) < 1e-9 && std::abs(ms.eps_area - 10.25) < 1e-9 &&
                      mi.eps_edge == 0.0 && mi.eps_area == 0.0 && mi.eps_collision == 0.0;
    report(7, pass, "metrics arithmetic",
           msg("eps_e=", ms.eps_edge, " eps_a=", ms.eps_area, " identity=(", mi.eps_edge, ",",
               mi.eps_area, ",", mi.eps_collision, ")"));
}

void criterion_8_determinism() {
    const auto dir = work_dir() / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_fixture_set(dir.string(), 10);

    RunConfig cfg = RunConfig::defaults();
    cfg.set("paths.garment", (dir / "grid_cloth.obj").string());
    cfg.set("paths.body", (dir / "sphere_body.txt").string());
    cfg.set("paths.poses", (dir / "poses_identity.txt").string());
    cfg.set("solver.max_iterations", "30");

    const auto poses = load_pose_sequence((dir / "poses_identity.txt").string(), 1);
    save_pose_sequence(std::vector<Pose>(poses.begin(), poses.begin() + 10),
                       (dir / "poses_short.txt").string());
    cfg.set("paths.poses", (dir / "poses_short.txt").string());

    cfg.set("paths.output", (dir / "a").string());
    cmd_simulate(cfg);
    cfg.set("paths.output", (dir / "b").string());
    cmd_simulate(cfg);

    bool pass = true;
    std::string first_diff = "none";
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        const auto name = entry.path().filename();
        if (name == "resolved_config.txt") continue; // embeds the output path
        if (file_bytes(entry.path()) != file_bytes(dir / "b" / name)) {
            pass = false;
            first_diff = name.string();
        }
    }
    report(8, pass, "byte-identical repeated simulate runs", msg("first_diff=", first_diff));
}

void criterion_9_free_fall() {
    const TriMesh cloth = make_grid_cloth(10, 1.2, 3.0);
    const GarmentRestState rest = precompute_rest(cloth, nullptr, 0.2);
    EnergyParams p;
    p.gravity = Vec3(0, 0, -9.81);
    p.timestep = 1.0 / 30.0;

    SolverConfig cfg;
    cfg.max_iterations = 600;
    cfg.gradient_tolerance = 1e-12;

    SimState state = initial_state(cloth);
    Vec3 oracle_pos(0, 0, 3.0);
    Vec3 oracle_vel = Vec3::Zero();
    double worst = 0.0;
    for (int f = 0; f < 60; ++f) {
        state = step_frame(state, Pose::identity(1), rest, nullptr, nullptr, p, cfg);
        oracle_vel += p.timestep * p.gravity;
        oracle_pos += p.timestep * oracle_vel;
        Vec3 centroid = Vec3::Zero();
        for (const auto& v : state.world) centroid += v;
        centroid /= state.world.size();
        worst = std::max(worst, (centroid - oracle_pos).norm());
    }
    report(9, worst < 1e-6, "free fall vs single-particle implicit Euler",
           msg("max_centroid_error=", worst));
}

} // namespace

int main() {
    criterion_1_gradient_suite();
    criterion_2_rigid_invariance();
    criterion_3_spectrum_identity();
    criterion_4_skinning_algebra();
    criteria_5_6_sphere_drape();
    criterion_7_metrics_arithmetic();
    criterion_8_determinism();
    criterion_9_free_fall();

    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
