#include "skelpose/skinning.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "skelpose/errors.h"

namespace skelpose {

void SkinnedMesh::validate(int num_bones) const {
    if (weights.size() != vertices.size())
        throw Error(ErrorKind::Validation, "skinned mesh: one weight row per vertex required");
    for (const VertexWeights &row : weights) {
        if (row.size() > static_cast<std::size_t>(kMaxInfluences))
            throw Error(ErrorKind::Validation, "skinned mesh: too many influences on a vertex");
        double s = 0.0;
        for (const auto &[bone, w] : row) {
            if (bone < 0 || bone >= num_bones || !(w >= 0.0))
                throw Error(ErrorKind::Validation, "skinned mesh: bad weight entry");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw Error(ErrorKind::Validation, "skinned mesh: vertex weights do not sum to one");
    }
    const int nv = static_cast<int>(vertices.size());
    for (const Face &f : faces) {
        for (int i : f) {
            if (i < 0 || i >= nv)
                throw Error(ErrorKind::Validation, "skinned mesh: face index out of range");
        }
    }
}

std::vector<Vec3> skin(const SkinnedMesh &mesh, const Skeleton &skel, const FinalPose &pose) {
    const std::size_t n = static_cast<std::size_t>(skel.num_bones());
    const std::size_t m = static_cast<std::size_t>(skel.num_joints());
    if (pose.absolute.size() != n || pose.joints.size() != m || mesh.bind_pose.absolute.size() != n ||
        mesh.bind_pose.joints.size() != m || mesh.weights.size() != mesh.vertices.size())
        throw Error(ErrorKind::BindMismatch, "skin: pose does not match the mesh binding");

    std::vector<Mat3> rot(n);
    std::vector<Vec3> offset(n);
    for (std::size_t b = 0; b < n; ++b) {
        const int p = skel.bone(static_cast<int>(b)).parent;
        rot[b] = pose.absolute[b].matrix() * mesh.bind_pose.absolute[b].matrix().transpose();
        offset[b] = pose.joints[p] - rot[b] * mesh.bind_pose.joints[p];
    }
    std::vector<Vec3> out(mesh.vertices.size(), Vec3::Zero());
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        for (const auto &[bone, w] : mesh.weights[v]) {
            if (bone < 0 || static_cast<std::size_t>(bone) >= n)
                throw Error(ErrorKind::BindMismatch, "skin: weight references unknown bone");
            out[v] += w * (rot[bone] * mesh.vertices[v] + offset[bone]);
        }
    }
    return out;
}

namespace {

double segment_distance(const Vec3 &p, const Vec3 &a, const Vec3 &b) {
    const Vec3 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

} // namespace

std::vector<VertexWeights> auto_weights(const std::vector<Vec3> &vertices, const Skeleton &skel,
                                        const Joints &bind_joints) {
    if (vertices.empty())
        throw Error(ErrorKind::Validation, "auto_weights: no vertices");
    if (static_cast<int>(bind_joints.size()) != skel.num_joints())
        throw Error(ErrorKind::LengthMismatch, "auto_weights: joint count does not match skeleton");
    std::vector<VertexWeights> out;
    out.reserve(vertices.size());
    std::vector<std::pair<double, int>> dist(skel.num_bones());
    for (const Vec3 &v : vertices) {
        for (int b = 0; b < skel.num_bones(); ++b)
            dist[b] = {segment_distance(v, bind_joints[skel.bone(b).parent], bind_joints[skel.bone(b).child]), b};
        std::partial_sort(dist.begin(), dist.begin() + std::min<std::size_t>(2, dist.size()), dist.end());
        if (dist.size() == 1 || dist[0].first < 1e-9) {
            out.push_back({{dist[0].second, 1.0}});
            continue;
        }
        const double w0 = 1.0 / dist[0].first, w1 = 1.0 / dist[1].first;
        out.push_back({{dist[0].second, w0 / (w0 + w1)}, {dist[1].second, w1 / (w0 + w1)}});
    }
    return out;
}

SkinnedMesh make_demo_body(const Skeleton &skel, double radius, int sides, int rings) {
    SkinnedMesh mesh;
    const Joints bind = integrate_bones(skel, std::vector<Mat3>(skel.num_bones(), Mat3::Identity()));
    for (int b = 0; b < skel.num_bones(); ++b) {
        const Vec3 a = bind[skel.bone(b).parent], c = bind[skel.bone(b).child];
        const Vec3 axis = (c - a).normalized();
        const Vec3 helper = std::abs(axis.y()) < 0.9 ? Vec3::UnitY() : Vec3::UnitX();
        const Vec3 u = axis.cross(helper).normalized();
        const Vec3 w = axis.cross(u);
        const int base = static_cast<int>(mesh.vertices.size());
        for (int r = 0; r <= rings; ++r) {
            const Vec3 center = a + (c - a) * (static_cast<double>(r) / rings);
            for (int s = 0; s < sides; ++s) {
                const double phi = 2.0 * std::numbers::pi * s / sides;
                mesh.vertices.push_back(center + radius * (std::cos(phi) * u + std::sin(phi) * w));
            }
        }
        for (int r = 0; r < rings; ++r) {
            for (int s = 0; s < sides; ++s) {
                const int i0 = base + r * sides + s, i1 = base + r * sides + (s + 1) % sides;
                const int j0 = i0 + sides, j1 = i1 + sides;
                mesh.faces.push_back({i0, i1, j1});
                mesh.faces.push_back({i0, j1, j0});
            }
        }
    }
    mesh.weights = auto_weights(mesh.vertices, skel, bind);
    mesh.bind_pose.global = RotationMatrix::identity();
    mesh.bind_pose.absolute.assign(skel.num_bones(), RotationMatrix::identity());
    mesh.bind_pose.joints = bind;
    return mesh;
}

std::string obj_string(const std::vector<Vec3> &vertices, const std::vector<Face> &faces) {
    std::ostringstream os;
    os << "# skelpose mesh\n";
    char buf[128];
    for (const Vec3 &v : vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        os << buf;
    }
    for (const Face &f : faces)
        os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    return os.str();
}

void export_obj(const std::vector<Vec3> &vertices, const std::vector<Face> &faces, const std::string &path) {
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::IO, "cannot open " + path + " for writing");
    out << obj_string(vertices, faces);
    if (!out)
        throw Error(ErrorKind::IO, "write failed: " + path);
}

ObjMesh read_obj(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::IO, "cannot open " + path);
    ObjMesh mesh;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 v;
            ls >> v.x() >> v.y() >> v.z();
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            Face f;
            for (int &i : f) {
                std::string tok;
                ls >> tok;
                i = std::stoi(tok.substr(0, tok.find('/'))) - 1;
            }
            mesh.faces.push_back(f);
        }
        if (!ls && !ls.eof())
            throw Error(ErrorKind::Validation, "read_obj: malformed line: " + line);
    }
    return mesh;
}

} // namespace skelpose
