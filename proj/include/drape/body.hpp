#pragma once

// Skeletal body: rest mesh, joint hierarchy and blend weights, posed by
// linear blend skinning. The same per-joint affine transforms drive the
// garment (see skinning.hpp).

#include "drape/common.hpp"
#include "drape/mesh.hpp"
#include "drape/obj_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace drape {

struct Skeleton {
    std::vector<int> parent;      // parent[0] == -1; parent[j] < j
    std::vector<Vec3> rest_joint; // world-space joint positions in the rest pose

    int joint_count() const { return static_cast<int>(parent.size()); }

    void validate() const {
        if (parent.empty()) throw MeshError("skeleton has no joints");
        if (parent[0] != -1) throw MeshError("joint 0 must be the root (parent -1)");
        for (int j = 1; j < joint_count(); ++j)
            if (parent[j] < 0 || parent[j] >= j)
                throw MeshError(msg("joint ", j, " has invalid parent ", parent[j],
                                    " (joints must be listed parent-first)"));
    }
};

struct Pose {
    std::vector<Vec3> joint_rotation; // axis-angle, radians
    Vec3 root_translation = Vec3::Zero();

    static Pose identity(int joints) {
        Pose p;
        p.joint_rotation.assign(joints, Vec3::Zero());
        return p;
    }
};

inline Mat3 axis_angle_to_matrix(const Vec3& aa) {
    const double angle = aa.norm();
    if (angle < 1e-12) return Mat3::Identity();
    return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

/// World transform per joint mapping rest-pose points rigidly attached to
/// that joint into the posed world (root translation folded in).
struct JointTransforms {
    std::vector<Mat3> rotation;
    std::vector<Vec3> translation;

    int joint_count() const { return static_cast<int>(rotation.size()); }

    Vec3 apply(int j, const Vec3& p) const { return rotation[j] * p + translation[j]; }
};

inline JointTransforms pose_transforms(const Skeleton& skeleton, const Pose& pose) {
    const int joints = skeleton.joint_count();
    if (static_cast<int>(pose.joint_rotation.size()) != joints)
        throw MeshError(msg("pose has ", pose.joint_rotation.size(), " rotations, skeleton has ",
                            joints, " joints"));
    for (const auto& aa : pose.joint_rotation)
        if (!aa.allFinite()) throw NumericalError("pose rotation is not finite");
    if (!pose.root_translation.allFinite())
        throw NumericalError("pose root translation is not finite");

    // global rigs composed down the hierarchy; each joint rotates about its
    // rest position within its parent's frame. Joint positions are tracked
    // as offsets from their rest locations so the identity pose maps to
    // exactly zero translations.
    std::vector<Mat3> grot(joints);
    std::vector<Vec3> goff(joints); // posed joint position minus rest position
    JointTransforms out;
    out.rotation.resize(joints);
    out.translation.resize(joints);
    for (int j = 0; j < joints; ++j) {
        const Mat3 local = axis_angle_to_matrix(pose.joint_rotation[j]);
        if (j == 0) {
            grot[0] = local;
            goff[0] = Vec3::Zero();
        } else {
            const int p = skeleton.parent[j];
            grot[j] = grot[p] * local;
            const Vec3 d = skeleton.rest_joint[j] - skeleton.rest_joint[p];
            goff[j] = grot[p] * d - d + goff[p];
        }
        out.rotation[j] = grot[j];
        out.translation[j] = goff[j] + (skeleton.rest_joint[j] - grot[j] * skeleton.rest_joint[j]) +
                             pose.root_translation;
    }
    return out;
}

/// Blend of per-joint transforms, one weight row per vertex. Blends the
/// per-joint displacements rather than absolute positions, so the identity
/// pose is the identity map exactly, whatever the weights.
inline std::vector<Vec3> lbs_apply(const std::vector<Vec3>& points,
                                   const Eigen::MatrixXd& weights,
                                   const JointTransforms& xf) {
    const int n = static_cast<int>(points.size());
    if (weights.rows() != n)
        throw MeshError(msg("weight matrix has ", weights.rows(), " rows for ", n, " vertices"));
    if (weights.cols() != xf.joint_count())
        throw MeshError(msg("weight matrix has ", weights.cols(), " columns for ",
                            xf.joint_count(), " joints"));
    std::vector<Vec3> out(n);
    for (int i = 0; i < n; ++i) {
        Vec3 acc = points[i];
        for (int j = 0; j < weights.cols(); ++j) {
            const double w = weights(i, j);
            if (w == 0.0) continue;
            acc += w * (xf.apply(j, points[i]) - points[i]);
        }
        out[i] = acc;
    }
    return out;
}

struct SkinnedBody {
    TriMesh rest_mesh;
    Skeleton skeleton;
    Eigen::MatrixXd weights; // N_b x J, rows nonnegative, sum to 1

    void validate() const {
        skeleton.validate();
        validate_mesh(rest_mesh);
        if (weights.rows() != rest_mesh.vertex_count())
            throw MeshError(msg("body has ", rest_mesh.vertex_count(), " vertices but ",
                                weights.rows(), " weight rows"));
        if (weights.cols() != skeleton.joint_count())
            throw MeshError(msg("body weights have ", weights.cols(), " columns but skeleton has ",
                                skeleton.joint_count(), " joints"));
        for (int i = 0; i < weights.rows(); ++i) {
            double sum = 0.0;
            for (int j = 0; j < weights.cols(); ++j) {
                if (weights(i, j) < 0.0)
                    throw MeshError(msg("negative blend weight at body vertex ", i));
                sum += weights(i, j);
            }
            if (std::abs(sum - 1.0) > 1e-6)
                throw MeshError(msg("body weight row ", i, " sums to ", sum, ", expected 1"));
        }
    }
};

inline TriMesh pose_body(const SkinnedBody& body, const Pose& pose) {
    const JointTransforms xf = pose_transforms(body.skeleton, pose);
    TriMesh posed;
    posed.vertices = lbs_apply(body.rest_mesh.vertices, body.weights, xf);
    posed.faces = body.rest_mesh.faces;
    return posed;
}

// ---------------------------------------------------------------------------
// Body file: plain text.
//   mesh <obj path, relative to the body file>
//   joints <J>
//   <index> <parent> <x> <y> <z>          (J lines, parent -1 for the root)
//   weights <N_b> <J>
//   <J floats>                            (N_b lines)
// '#' starts a comment.
// ---------------------------------------------------------------------------

inline SkinnedBody load_body_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(msg("cannot open body file '", path, "'"));

    auto next_line = [&in](std::string& line) -> bool {
        while (std::getline(in, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream probe(line);
            std::string tok;
            if (probe >> tok) return true;
        }
        return false;
    };

    SkinnedBody body;
    std::string line, tag;

    if (!next_line(line)) throw IoError(msg(path, ": missing 'mesh' record"));
    {
        std::istringstream ls(line);
        std::string mesh_path;
        if (!(ls >> tag >> mesh_path) || tag != "mesh")
            throw IoError(msg(path, ": expected 'mesh <obj>' first, got '", line, "'"));
        std::filesystem::path obj(mesh_path);
        if (obj.is_relative()) obj = std::filesystem::path(path).parent_path() / obj;
        body.rest_mesh = load_obj(obj.string());
    }

    int joints = 0;
    if (!next_line(line)) throw IoError(msg(path, ": missing 'joints' record"));
    {
        std::istringstream ls(line);
        if (!(ls >> tag >> joints) || tag != "joints" || joints <= 0)
            throw IoError(msg(path, ": expected 'joints <count>', got '", line, "'"));
    }
    body.skeleton.parent.resize(joints);
    body.skeleton.rest_joint.resize(joints);
    for (int j = 0; j < joints; ++j) {
        if (!next_line(line)) throw IoError(msg(path, ": truncated joint table"));
        std::istringstream ls(line);
        int idx, parent;
        Vec3 p;
        if (!(ls >> idx >> parent >> p.x() >> p.y() >> p.z()) || idx != j)
            throw IoError(msg(path, ": malformed joint row '", line, "' (expected index ", j, ")"));
        body.skeleton.parent[j] = parent;
        body.skeleton.rest_joint[j] = p;
    }

    long nb = 0;
    int jcols = 0;
    if (!next_line(line)) throw IoError(msg(path, ": missing 'weights' record"));
    {
        std::istringstream ls(line);
        if (!(ls >> tag >> nb >> jcols) || tag != "weights")
            throw IoError(msg(path, ": expected 'weights <rows> <cols>', got '", line, "'"));
        if (jcols != joints)
            throw IoError(msg(path, ": weight matrix has ", jcols, " columns but ", joints,
                              " joints are declared"));
    }
    body.weights.resize(nb, jcols);
    for (long i = 0; i < nb; ++i) {
        if (!next_line(line)) throw IoError(msg(path, ": truncated weight matrix"));
        std::istringstream ls(line);
        for (int j = 0; j < jcols; ++j)
            if (!(ls >> body.weights(i, j)))
                throw IoError(msg(path, ": malformed weight row ", i));
    }

    body.validate();
    return body;
}

inline void save_body_file(const SkinnedBody& body, const std::string& path,
                           const std::string& mesh_relpath) {
    std::FILE* out = std::fopen(path.c_str(), "wb");
    if (!out) throw IoError(msg("cannot open '", path, "' for writing"));
    std::fprintf(out, "mesh %s\n", mesh_relpath.c_str());
    std::fprintf(out, "joints %d\n", body.skeleton.joint_count());
    for (int j = 0; j < body.skeleton.joint_count(); ++j) {
        const Vec3& p = body.skeleton.rest_joint[j];
        std::fprintf(out, "%d %d %.17g %.17g %.17g\n", j, body.skeleton.parent[j], p.x(), p.y(),
                     p.z());
    }
    std::fprintf(out, "weights %ld %d\n", static_cast<long>(body.weights.rows()),
                 static_cast<int>(body.weights.cols()));
    for (long i = 0; i < body.weights.rows(); ++i) {
        for (int j = 0; j < body.weights.cols(); ++j)
            std::fprintf(out, "%s%.17g", j == 0 ? "" : " ", body.weights(i, j));
        std::fprintf(out, "\n");
    }
    if (std::fclose(out) != 0) throw IoError(msg("write failure on '", path, "'"));
}

// Pose sequence: one frame per line, root translation then J axis-angle
// triples, whitespace separated.

inline std::vector<Pose> load_pose_sequence(const std::string& path, int joint_count) {
    std::ifstream in(path);
    if (!in) throw IoError(msg("cannot open pose sequence '", path, "'"));
    std::vector<Pose> frames;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<double> vals;
        double v;
        while (ls >> v) vals.push_back(v);
        if (vals.empty()) continue;
        if (static_cast<int>(vals.size()) != 3 + 3 * joint_count)
            throw IoError(msg(path, ":", lineno, ": frame has ", vals.size(),
                              " numbers, expected ", 3 + 3 * joint_count, " for ", joint_count,
                              " joints"));
        Pose pose;
        pose.root_translation = Vec3(vals[0], vals[1], vals[2]);
        pose.joint_rotation.resize(joint_count);
        for (int j = 0; j < joint_count; ++j)
            pose.joint_rotation[j] = Vec3(vals[3 + 3 * j], vals[4 + 3 * j], vals[5 + 3 * j]);
        frames.push_back(std::move(pose));
    }
    return frames;
}

inline void save_pose_sequence(const std::vector<Pose>& frames, const std::string& path) {
    std::FILE* out = std::fopen(path.c_str(), "wb");
    if (!out) throw IoError(msg("cannot open '", path, "' for writing"));
    for (const auto& pose : frames) {
        std::fprintf(out, "%.17g %.17g %.17g", pose.root_translation.x(),
                     pose.root_translation.y(), pose.root_translation.z());
        for (const auto& aa : pose.joint_rotation)
            std::fprintf(out, " %.17g %.17g %.17g", aa.x(), aa.y(), aa.z());
        std::fprintf(out, "\n");
    }
    if (std::fclose(out) != 0) throw IoError(msg("write failure on '", path, "'"));
}

} // namespace drape
