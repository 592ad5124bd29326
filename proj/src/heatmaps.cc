#include "skelpose/heatmaps.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "skelpose/errors.h"

namespace skelpose {

bool CrossHeatmap::well_formed() const {
    if (xy.size() != zy.size())
        return false;
    for (std::size_t j = 0; j < xy.size(); ++j) {
        if (xy[j].rows() != rows() || xy[j].cols() != cols() || zy[j].rows() != rows() || zy[j].cols() != cols())
            return false;
    }
    return true;
}

VolumeBounds VolumeBounds::cube(const Vec3 &center, double side) {
    return VolumeBounds{center - Vec3::Constant(side / 2), center + Vec3::Constant(side / 2)};
}

bool VolumeBounds::contains(const Vec3 &p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

double world_to_pixel(double v, double lo, double hi, int cells) { return (v - lo) / (hi - lo) * cells; }

double pixel_to_world(double p, double lo, double hi, int cells) { return lo + p / cells * (hi - lo); }

Heatmap render_gaussian(const Vec2 &center, int rows, int cols, double sigma) {
    if (!(sigma > 0.0))
        throw Error(ErrorKind::Validation, "render_gaussian: sigma must be positive");
    const double inv = 1.0 / (2.0 * sigma * sigma);
    // Separable: exp(-(dc² + dr²)/2σ²) = exp(-dc²/2σ²)·exp(-dr²/2σ²).
    Eigen::VectorXd gr(rows), gc(cols);
    for (int r = 0; r < rows; ++r)
        gr[r] = std::exp(-(r - center.y()) * (r - center.y()) * inv);
    for (int c = 0; c < cols; ++c)
        gc[c] = std::exp(-(c - center.x()) * (c - center.x()) * inv);
    return gr * gc.transpose();
}

Vec2 render_gaussian_backward(const Vec2 &center, double sigma, const Heatmap &upstream) {
    const Heatmap g = render_gaussian(center, static_cast<int>(upstream.rows()), static_cast<int>(upstream.cols()), sigma);
    const double inv_s2 = 1.0 / (sigma * sigma);
    Vec2 out = Vec2::Zero();
    for (int r = 0; r < g.rows(); ++r) {
        for (int c = 0; c < g.cols(); ++c) {
            const double w = upstream(r, c) * g(r, c) * inv_s2;
            out.x() += w * (c - center.x());
            out.y() += w * (r - center.y());
        }
    }
    return out;
}

EncodedCross encode_cross(const Joints &joints, const VolumeBounds &bounds, int grid, double sigma) {
    if (grid < 2)
        throw Error(ErrorKind::Validation, "encode_cross: grid must be >= 2");
    EncodedCross out;
    out.maps.xy.reserve(joints.size());
    out.maps.zy.reserve(joints.size());
    const double hi = grid - 1;
    for (const Vec3 &p : joints) {
        const double px = world_to_pixel(p.x(), bounds.min.x(), bounds.max.x(), grid);
        const double py = world_to_pixel(p.y(), bounds.min.y(), bounds.max.y(), grid);
        const double pz = world_to_pixel(p.z(), bounds.min.z(), bounds.max.z(), grid);
        const bool oob = !(px >= 0.0 && px <= hi && py >= 0.0 && py <= hi && pz >= 0.0 && pz <= hi);
        out.out_of_bounds.push_back(oob);
        const double cx = std::clamp(px, 0.0, hi), cy = std::clamp(py, 0.0, hi), cz = std::clamp(pz, 0.0, hi);
        out.maps.xy.push_back(render_gaussian(Vec2(cx, cy), grid, grid, sigma));
        out.maps.zy.push_back(render_gaussian(Vec2(cz, cy), grid, grid, sigma));
    }
    return out;
}

namespace {

struct SoftmaxWeights {
    Heatmap e;        // exp((h - max)/τ)
    double floor = 0; // exp((min - max)/τ)
    double z = 0;     // Σ (e - floor)
    Eigen::Index min_r = 0, min_c = 0;
    bool uniform = false;
};

SoftmaxWeights softmax_weights(const Heatmap &h, double temperature) {
    if (h.size() == 0)
        throw Error(ErrorKind::ShapeMismatch, "soft_argmax2d: empty heatmap");
    if (!(temperature > 0.0))
        throw Error(ErrorKind::Validation, "soft_argmax2d: temperature must be positive");
    if (!h.allFinite())
        throw Error(ErrorKind::DegenerateInput, "soft_argmax2d: non-finite heatmap");
    SoftmaxWeights w;
    const double mx = h.maxCoeff();
    const double mn = h.minCoeff(&w.min_r, &w.min_c);
    if (mx - mn < 1e-12) {
        w.uniform = true;
        return w;
    }
    w.e = ((h.array() - mx) / temperature).exp().matrix();
    w.floor = std::exp((mn - mx) / temperature);
    w.z = w.e.sum() - w.floor * static_cast<double>(h.size());
    return w;
}

} // namespace

SoftArgmax soft_argmax2d(const Heatmap &h, double temperature) {
    const SoftmaxWeights w = softmax_weights(h, temperature);
    SoftArgmax out;
    if (w.uniform) {
        out.uv = Vec2((h.cols() - 1) / 2.0, (h.rows() - 1) / 2.0);
        out.uniform = true;
        return out;
    }
    const Eigen::ArrayXXd wt = w.e.array() - w.floor;
    const Eigen::VectorXd col_mass = wt.colwise().sum().transpose();
    const Eigen::VectorXd row_mass = wt.rowwise().sum();
    const Eigen::VectorXd cidx = Eigen::VectorXd::LinSpaced(h.cols(), 0.0, h.cols() - 1.0);
    const Eigen::VectorXd ridx = Eigen::VectorXd::LinSpaced(h.rows(), 0.0, h.rows() - 1.0);
    out.uv = Vec2(col_mass.dot(cidx) / w.z, row_mass.dot(ridx) / w.z);
    return out;
}

Heatmap soft_argmax2d_backward(const Heatmap &h, double temperature, const Vec2 &upstream) {
    const SoftmaxWeights w = softmax_weights(h, temperature);
    Heatmap grad = Heatmap::Zero(h.rows(), h.cols());
    if (w.uniform)
        return grad;
    const Vec2 uv = soft_argmax2d(h, temperature).uv;
    // u = Σ w_i c_i / Σ w_i with w_i = e_i − floor; ∂e_i/∂h_i = e_i/τ and every
    // w_i depends on the minimum pixel through −floor.
    double cross_sum = 0.0;
    for (int r = 0; r < h.rows(); ++r) {
        for (int c = 0; c < h.cols(); ++c) {
            const double d = upstream.x() * (c - uv.x()) + upstream.y() * (r - uv.y());
            grad(r, c) = d * w.e(r, c) / (temperature * w.z);
            cross_sum += d;
        }
    }
    grad(w.min_r, w.min_c) -= w.floor / (temperature * w.z) * cross_sum;
    return grad;
}

DecodedCross decode_cross(const CrossHeatmap &ch, const VolumeBounds &bounds, double temperature) {
    if (!ch.well_formed())
        throw Error(ErrorKind::ShapeMismatch, "decode_cross: xy and zy stacks disagree");
    DecodedCross out;
    const int rows = ch.rows(), cols = ch.cols();
    for (int j = 0; j < ch.num_joints(); ++j) {
        const SoftArgmax a = soft_argmax2d(ch.xy[j], temperature);
        const SoftArgmax b = soft_argmax2d(ch.zy[j], temperature);
        const double py = 0.5 * (a.uv.y() + b.uv.y());
        out.joints.emplace_back(pixel_to_world(a.uv.x(), bounds.min.x(), bounds.max.x(), cols),
                                pixel_to_world(py, bounds.min.y(), bounds.max.y(), rows),
                                pixel_to_world(b.uv.x(), bounds.min.z(), bounds.max.z(), cols));
        out.degenerate.push_back(a.uniform || b.uniform);
    }
    return out;
}

namespace {

struct PlaneFrame {
    Eigen::Index xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    double cx = 0, cy = 0, extent = 0, scale = 0;
    bool x_dominant = true;
};

PlaneFrame plane_frame(const Joints &joints, double target_width) {
    if (joints.empty())
        throw Error(ErrorKind::Validation, "project_to_plane: no joints");
    Eigen::VectorXd xs(joints.size()), ys(joints.size());
    for (std::size_t j = 0; j < joints.size(); ++j) {
        xs[j] = joints[j].x();
        ys[j] = joints[j].y();
    }
    PlaneFrame f;
    const double x_lo = xs.minCoeff(&f.xmin), x_hi = xs.maxCoeff(&f.xmax);
    const double y_lo = ys.minCoeff(&f.ymin), y_hi = ys.maxCoeff(&f.ymax);
    const double bx = x_hi - x_lo, by = y_hi - y_lo;
    f.x_dominant = bx >= by;
    f.extent = std::max(bx, by);
    if (f.extent < 1e-12)
        throw Error(ErrorKind::DegenerateInput, "project_to_plane: joints project to a single point");
    f.cx = 0.5 * (x_lo + x_hi);
    f.cy = 0.5 * (y_lo + y_hi);
    f.scale = 0.9 * target_width / f.extent;
    return f;
}

} // namespace

std::vector<Vec2> project_to_plane(const Joints &joints, double target_width) {
    const PlaneFrame f = plane_frame(joints, target_width);
    std::vector<Vec2> out;
    out.reserve(joints.size());
    const double mid = 0.5 * target_width;
    for (const Vec3 &p : joints)
        out.emplace_back(mid + (p.x() - f.cx) * f.scale, mid + (p.y() - f.cy) * f.scale);
    return out;
}

Joints project_to_plane_backward(const Joints &joints, double target_width, const std::vector<Vec2> &upstream) {
    if (upstream.size() != joints.size())
        throw Error(ErrorKind::LengthMismatch, "project_to_plane_backward: gradient count mismatch");
    const PlaneFrame f = plane_frame(joints, target_width);
    Joints grad(joints.size(), Vec3::Zero());
    double g_cx = 0.0, g_cy = 0.0, g_scale = 0.0;
    for (std::size_t j = 0; j < joints.size(); ++j) {
        grad[j].x() += f.scale * upstream[j].x();
        grad[j].y() += f.scale * upstream[j].y();
        g_cx -= f.scale * upstream[j].x();
        g_cy -= f.scale * upstream[j].y();
        g_scale += upstream[j].x() * (joints[j].x() - f.cx) + upstream[j].y() * (joints[j].y() - f.cy);
    }
    grad[f.xmin].x() += 0.5 * g_cx;
    grad[f.xmax].x() += 0.5 * g_cx;
    grad[f.ymin].y() += 0.5 * g_cy;
    grad[f.ymax].y() += 0.5 * g_cy;
    const double g_extent = -g_scale * f.scale / f.extent;
    if (f.x_dominant) {
        grad[f.xmax].x() += g_extent;
        grad[f.xmin].x() -= g_extent;
    } else {
        grad[f.ymax].y() += g_extent;
        grad[f.ymin].y() -= g_extent;
    }
    return grad;
}

namespace {

void put_u32(std::vector<unsigned char> &buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::vector<unsigned char> &buf, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(buf[off + i]) << (8 * i);
    return v;
}

void put_stack(std::vector<unsigned char> &buf, const std::vector<Heatmap> &maps) {
    for (const Heatmap &h : maps) {
        for (int r = 0; r < h.rows(); ++r) {
            for (int c = 0; c < h.cols(); ++c)
                put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(h(r, c))));
        }
    }
}

} // namespace

std::vector<unsigned char> serialize_cross_heatmap(const CrossHeatmap &ch) {
    if (!ch.well_formed())
        throw Error(ErrorKind::ShapeMismatch, "serialize_cross_heatmap: malformed cross heatmap");
    std::vector<unsigned char> buf = {'C', 'H', 'M', '1'};
    put_u32(buf, static_cast<std::uint32_t>(ch.num_joints()));
    put_u32(buf, static_cast<std::uint32_t>(ch.rows()));
    put_u32(buf, static_cast<std::uint32_t>(ch.cols()));
    buf.reserve(buf.size() + 4 * cross_heatmap_values(ch.num_joints(), ch.rows(), ch.cols()));
    put_stack(buf, ch.xy);
    put_stack(buf, ch.zy);
    return buf;
}

CrossHeatmap deserialize_cross_heatmap(const std::vector<unsigned char> &bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "CHM1", 4) != 0)
        throw Error(ErrorKind::Validation, "cross heatmap: bad magic");
    const std::uint32_t m = get_u32(bytes, 4), rows = get_u32(bytes, 8), cols = get_u32(bytes, 12);
    const std::size_t n = cross_heatmap_values(m, rows, cols);
    if (bytes.size() != 16 + 4 * n)
        throw Error(ErrorKind::Validation, "cross heatmap: payload size does not match header");
    CrossHeatmap ch;
    std::size_t off = 16;
    for (auto *stack : {&ch.xy, &ch.zy}) {
        for (std::uint32_t j = 0; j < m; ++j) {
            Heatmap h(rows, cols);
            for (std::uint32_t r = 0; r < rows; ++r) {
                for (std::uint32_t c = 0; c < cols; ++c, off += 4)
                    h(r, c) = std::bit_cast<float>(get_u32(bytes, off));
            }
            stack->push_back(std::move(h));
        }
    }
    return ch;
}

void write_cross_heatmap(const CrossHeatmap &ch, const std::string &path) {
    const std::vector<unsigned char> buf = serialize_cross_heatmap(ch);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::IO, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out)
        throw Error(ErrorKind::IO, "write failed: " + path);
}

CrossHeatmap read_cross_heatmap(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::IO, "cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_cross_heatmap(buf);
}

} // namespace skelpose
