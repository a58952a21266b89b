#pragma once

// Signed distance queries against a posed body mesh.
//
// Distances come from a closest-point AABB tree; the inside/outside decision
// comes from the generalized winding number. Far subtrees are approximated
// by their area-weighted dipole, near ones fall back to exact per-triangle
// solid angles, so queries stay cheap without giving up the robustness of
// the winding test near grazing features.

#include "drape/common.hpp"
#include "drape/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <vector>

namespace drape {

struct SignedDistanceResult {
    double distance = 0.0; // negative inside the body
    Vec3 closest_point = Vec3::Zero();
    Vec3 normal = Vec3::Zero(); // outward unit normal at the closest point
    int triangle = -1;
};

/// Closest point on triangle (a, b, c) to p. Ericson-style barycentric
/// region walk.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                      const Vec3& c) {
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;

    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return a + v * ab;
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return a + w * ac;
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + w * (c - b);
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom;
    const double w = vc * denom;
    return a + ab * v + ac * w;
}

/// Solid angle of triangle (a, b, c) seen from q, van Oosterom-Strackee.
inline double triangle_solid_angle(const Vec3& q, const Vec3& a, const Vec3& b,
                                   const Vec3& c) {
    const Vec3 ra = a - q;
    const Vec3 rb = b - q;
    const Vec3 rc = c - q;
    const double la = ra.norm();
    const double lb = rb.norm();
    const double lc = rc.norm();
    const double numer = ra.dot(rb.cross(rc));
    const double denom =
        la * lb * lc + ra.dot(rb) * lc + rb.dot(rc) * la + rc.dot(ra) * lb;
    return 2.0 * std::atan2(numer, denom);
}

class CollisionMesh {
public:
    explicit CollisionMesh(const TriMesh& mesh, bool require_watertight = true)
        : vertices_(mesh.vertices), faces_(mesh.faces) {
        validate_mesh(mesh);
        watertight_ = audit_edges();
        if (require_watertight && !watertight_)
            throw MeshError("collision body is not watertight (boundary or non-manifold edges present)");
        if (!faces_.empty()) build();
    }

    bool watertight() const { return watertight_; }

    struct ClosestHit {
        double distance = std::numeric_limits<double>::infinity();
        Vec3 point = Vec3::Zero();
        int triangle = -1;
    };

    /// Unsigned closest point on the surface. Safe to call concurrently.
    ClosestHit closest_point(const Vec3& q) const {
        ClosestHit best;
        if (nodes_.empty()) return best;
        descend_closest(0, q, best);
        return best;
    }

    /// Generalized winding number, dipole-accelerated.
    double winding_number(const Vec3& q) const {
        if (nodes_.empty()) return 0.0;
        return accumulate_winding(0, q) / (4.0 * std::numbers::pi);
    }

    /// Exact winding number by summation over every triangle. Reference
    /// path for tests and near-threshold cross-checks.
    double winding_number_exact(const Vec3& q) const {
        double omega = 0.0;
        for (const auto& f : faces_)
            omega += triangle_solid_angle(q, vertices_[f[0]], vertices_[f[1]], vertices_[f[2]]);
        return omega / (4.0 * std::numbers::pi);
    }

    /// Angle-weighted pseudo-normal sign at the closest point; cross-check
    /// against the winding decision.
    bool inside_by_pseudo_normal(const Vec3& q) const {
        const ClosestHit hit = closest_point(q);
        if (hit.triangle < 0) return false;
        // Gather every face whose closest feature matches, weight normals by
        // incident angle at the feature. For the common face-interior case a
        // single face normal decides.
        Vec3 n = Vec3::Zero();
        const double feature_tol = 1e-12 * (1.0 + hit.point.norm());
        for (const auto& f : faces_) {
            const Vec3 cp = closest_point_on_triangle(
                hit.point, vertices_[f[0]], vertices_[f[1]], vertices_[f[2]]);
            if ((cp - hit.point).norm() > feature_tol) continue;
            const Vec3 a = vertices_[f[0]], b = vertices_[f[1]], c = vertices_[f[2]];
            Vec3 fn = (b - a).cross(c - a);
            const double l = fn.norm();
            if (l <= 0.0) continue;
            fn /= l;
            n += angle_at(hit.point, a, b, c) * fn;
        }
        return n.dot(q - hit.point) < 0.0;
    }

    SignedDistanceResult signed_distance(const Vec3& q) const {
        SignedDistanceResult r;
        const ClosestHit hit = closest_point(q);
        if (hit.triangle < 0) {
            r.distance = std::numeric_limits<double>::infinity();
            return r;
        }
        const bool inside = winding_number(q) > 0.5;
        r.closest_point = hit.point;
        r.triangle = hit.triangle;
        r.distance = inside ? -hit.distance : hit.distance;
        if (hit.distance > 1e-12) {
            r.normal = (q - hit.point) / hit.distance;
            if (inside) r.normal = -r.normal;
        } else {
            const auto& f = faces_[hit.triangle];
            const Vec3 fn = (vertices_[f[1]] - vertices_[f[0]])
                                .cross(vertices_[f[2]] - vertices_[f[0]]);
            r.normal = fn.normalized();
        }
        return r;
    }

    int face_count() const { return static_cast<int>(faces_.size()); }

private:
    struct Node {
        Vec3 lo, hi;        // tight AABB over triangles
        Vec3 dipole;        // sum of triangle area vectors
        Vec3 mass_center;   // area-weighted centroid
        double radius = 0.0; // bound of |x - mass_center| over node triangles
        int left = -1, right = -1;
        int begin = 0, end = 0; // leaf triangle range in order_
    };

    std::vector<Vec3> vertices_;
    std::vector<std::array<int, 3>> faces_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    bool watertight_ = false;

    static constexpr int kLeafSize = 4;
    static constexpr double kFarFieldBeta = 2.0;

    bool audit_edges() const {
        std::map<std::pair<int, int>, int> incidence;
        for (const auto& f : faces_)
            for (int k = 0; k < 3; ++k)
                ++incidence[std::minmax(f[k], f[(k + 1) % 3])];
        for (const auto& [e, n] : incidence)
            if (n != 2) return false;
        return !faces_.empty();
    }

    static double angle_at(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
        // angle of the triangle corner nearest to p; interior closest points
        // get the full turn so a single face dominates
        const double tol = 1e-10;
        const Vec3* corner = nullptr;
        if ((p - a).norm() < tol) corner = &a;
        else if ((p - b).norm() < tol) corner = &b;
        else if ((p - c).norm() < tol) corner = &c;
        if (!corner) return 1.0;
        const Vec3& u = *corner;
        const Vec3 e1 = (&a == corner ? b : a) - u;
        const Vec3 e2 = (&c == corner ? b : c) - u;
        const double cosang =
            std::clamp(e1.normalized().dot(e2.normalized()), -1.0, 1.0);
        return std::acos(cosang);
    }

    Vec3 face_centroid(int f) const {
        const auto& fc = faces_[f];
        return (vertices_[fc[0]] + vertices_[fc[1]] + vertices_[fc[2]]) / 3.0;
    }

    void build() {
        order_.resize(faces_.size());
        for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
        nodes_.reserve(2 * faces_.size());
        build_node(0, static_cast<int>(order_.size()));
    }

    int build_node(int begin, int end) {
        const int self = static_cast<int>(nodes_.size());
        nodes_.emplace_back();

        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
        Vec3 hi = -lo;
        Vec3 dipole = Vec3::Zero();
        Vec3 weighted = Vec3::Zero();
        double area_sum = 0.0;
        Vec3 clo = lo, chi = hi; // centroid bounds for the split
        for (int i = begin; i < end; ++i) {
            const auto& f = faces_[order_[i]];
            const Vec3& a = vertices_[f[0]];
            const Vec3& b = vertices_[f[1]];
            const Vec3& c = vertices_[f[2]];
            lo = lo.cwiseMin(a).cwiseMin(b).cwiseMin(c);
            hi = hi.cwiseMax(a).cwiseMax(b).cwiseMax(c);
            const Vec3 av = 0.5 * (b - a).cross(c - a);
            const double area = av.norm();
            dipole += av;
            weighted += area * (a + b + c) / 3.0;
            area_sum += area;
            const Vec3 cen = (a + b + c) / 3.0;
            clo = clo.cwiseMin(cen);
            chi = chi.cwiseMax(cen);
        }
        const Vec3 mass_center =
            area_sum > 0.0 ? Vec3(weighted / area_sum) : Vec3(0.5 * (lo + hi));
        double radius = 0.0;
        for (int i = begin; i < end; ++i) {
            const auto& f = faces_[order_[i]];
            for (int k = 0; k < 3; ++k)
                radius = std::max(radius, (vertices_[f[k]] - mass_center).norm());
        }

        Node& node = nodes_[self];
        node.lo = lo;
        node.hi = hi;
        node.dipole = dipole;
        node.mass_center = mass_center;
        node.radius = radius;
        node.begin = begin;
        node.end = end;

        if (end - begin <= kLeafSize) return self;

        int axis = 0;
        const Vec3 extent = chi - clo;
        if (extent.y() > extent.x()) axis = 1;
        if (extent.z() > extent[axis]) axis = 2;
        const int mid = (begin + end) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](int fa, int fb) {
                             const double ca = face_centroid(fa)[axis];
                             const double cb = face_centroid(fb)[axis];
                             return ca < cb || (ca == cb && fa < fb);
                         });
        if (mid == begin || mid == end) return self; // degenerate: keep as leaf

        const int left = build_node(begin, mid);
        const int right = build_node(mid, end);
        nodes_[self].left = left;
        nodes_[self].right = right;
        return self;
    }

    static double box_distance_sq(const Node& n, const Vec3& q) {
        const Vec3 d = (n.lo - q).cwiseMax(Vec3::Zero()).cwiseMax(q - n.hi);
        return d.squaredNorm();
    }

    void descend_closest(int idx, const Vec3& q, ClosestHit& best) const {
        const Node& node = nodes_[idx];
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int f = order_[i];
                const auto& fc = faces_[f];
                const Vec3 cp = closest_point_on_triangle(q, vertices_[fc[0]],
                                                          vertices_[fc[1]], vertices_[fc[2]]);
                const double d = (cp - q).norm();
                if (d < best.distance || (d == best.distance && f < best.triangle)) {
                    best.distance = d;
                    best.point = cp;
                    best.triangle = f;
                }
            }
            return;
        }
        const double dl = box_distance_sq(nodes_[node.left], q);
        const double dr = box_distance_sq(nodes_[node.right], q);
        const int first = dl <= dr ? node.left : node.right;
        const int second = dl <= dr ? node.right : node.left;
        const double dfirst = std::min(dl, dr);
        const double dsecond = std::max(dl, dr);
        if (dfirst < best.distance * best.distance) descend_closest(first, q, best);
        if (dsecond < best.distance * best.distance) descend_closest(second, q, best);
    }

    double accumulate_winding(int idx, const Vec3& q) const {
        const Node& node = nodes_[idx];
        const Vec3 r = node.mass_center - q;
        const double dist = r.norm();
        if (dist > kFarFieldBeta * node.radius && dist > 0.0) {
            // first-order multipole: the node acts as a single dipole patch
            return node.dipole.dot(r) / (dist * dist * dist);
        }
        if (node.left < 0) {
            double omega = 0.0;
            for (int i = node.begin; i < node.end; ++i) {
                const auto& fc = faces_[order_[i]];
                omega += triangle_solid_angle(q, vertices_[fc[0]], vertices_[fc[1]],
                                              vertices_[fc[2]]);
            }
            return omega;
        }
        return accumulate_winding(node.left, q) + accumulate_winding(node.right, q);
    }
};

} // namespace drape
