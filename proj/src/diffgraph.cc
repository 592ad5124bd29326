#include "skelpose/diffgraph.h"

#include <algorithm>
#include <cmath>

#include "skelpose/errors.h"
#include "skelpose/rotations.h"

namespace skelpose {

using Eigen::MatrixXd;

NodeId Graph::leaf(const MatrixXd &value) { return add_node(value, {}, nullptr); }

NodeId Graph::constant(const MatrixXd &value) {
    const NodeId id = add_node(value, {}, nullptr);
    nodes_[id].constant = true;
    return id;
}

NodeId Graph::add_node(MatrixXd value, std::vector<NodeId> inputs, Backward backward) {
    const NodeId id = size();
    for (NodeId in : inputs) {
        if (in < 0 || in >= id)
            throw Error(ErrorKind::GraphCycle, "node input " + std::to_string(in) + " does not precede node " +
                                                   std::to_string(id));
    }
    Node n;
    n.grad = MatrixXd::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return id;
}

const Graph::Node &Graph::node(NodeId id) const {
    if (id < 0 || id >= size())
        throw Error(ErrorKind::Validation, "unknown node " + std::to_string(id));
    return nodes_[id];
}

const MatrixXd &Graph::value(NodeId id) const { return node(id).value; }
const MatrixXd &Graph::grad(NodeId id) const { return node(id).grad; }
const std::vector<NodeId> &Graph::inputs(NodeId id) const { return node(id).inputs; }

void Graph::accumulate(NodeId id, const MatrixXd &g) {
    Node &n = nodes_.at(id);
    if (n.constant)
        return;
    if (g.rows() != n.grad.rows() || g.cols() != n.grad.cols())
        throw Error(ErrorKind::ShapeMismatch, "gradient shape does not match node " + std::to_string(id));
    n.grad += g;
}

void Graph::zero_grad() {
    for (Node &n : nodes_)
        n.grad.setZero();
}

void Graph::backward(NodeId loss) {
    if (value(loss).size() != 1)
        throw Error(ErrorKind::ShapeMismatch, "backward needs a scalar loss");
    zero_grad();
    nodes_[loss].grad(0, 0) = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        if (nodes_[id].backward && nodes_[id].grad.any())
            nodes_[id].backward(*this, id);
    }
}

MatrixXd joints_to_matrix(const Joints &joints) {
    MatrixXd m(joints.size(), 3);
    for (std::size_t j = 0; j < joints.size(); ++j)
        m.row(j) = joints[j].transpose();
    return m;
}

Joints matrix_to_joints(const MatrixXd &m) {
    if (m.cols() != 3)
        throw Error(ErrorKind::ShapeMismatch, "joint matrix must have 3 columns");
    Joints out(m.rows());
    for (Eigen::Index j = 0; j < m.rows(); ++j)
        out[j] = m.row(j).transpose();
    return out;
}

namespace ops {

namespace {

void same_shape(const MatrixXd &a, const MatrixXd &b, const char *what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": operand shapes differ");
}

Mat3 as_mat3(const MatrixXd &m, const char *what) {
    if (m.rows() != 3 || m.cols() != 3)
        throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": expected a 3x3 matrix");
    return m;
}

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

} // namespace

NodeId add(Graph &g, NodeId a, NodeId b) {
    same_shape(g.value(a), g.value(b), "add");
    return g.add_node(g.value(a) + g.value(b), {a, b}, [a, b](Graph &gr, NodeId self) {
        gr.accumulate(a, gr.grad(self));
        gr.accumulate(b, gr.grad(self));
    });
}

NodeId sub(Graph &g, NodeId a, NodeId b) {
    same_shape(g.value(a), g.value(b), "sub");
    return g.add_node(g.value(a) - g.value(b), {a, b}, [a, b](Graph &gr, NodeId self) {
        gr.accumulate(a, gr.grad(self));
        gr.accumulate(b, -gr.grad(self));
    });
}

NodeId scale(Graph &g, NodeId a, double s) {
    return g.add_node(s * g.value(a), {a}, [a, s](Graph &gr, NodeId self) { gr.accumulate(a, s * gr.grad(self)); });
}

NodeId matmul(Graph &g, NodeId a, NodeId b) {
    if (g.value(a).cols() != g.value(b).rows())
        throw Error(ErrorKind::ShapeMismatch, "matmul: inner dimensions differ");
    return g.add_node(g.value(a) * g.value(b), {a, b}, [a, b](Graph &gr, NodeId self) {
        const MatrixXd &up = gr.grad(self);
        gr.accumulate(a, up * gr.value(b).transpose());
        gr.accumulate(b, gr.value(a).transpose() * up);
    });
}

NodeId tanh(Graph &g, NodeId a) {
    MatrixXd v = g.value(a).array().tanh().matrix();
    return g.add_node(std::move(v), {a}, [a](Graph &gr, NodeId self) {
        const MatrixXd &y = gr.value(self);
        gr.accumulate(a, (gr.grad(self).array() * (1.0 - y.array().square())).matrix());
    });
}

NodeId softmax(Graph &g, NodeId logits) {
    const MatrixXd &l = g.value(logits);
    if (l.cols() != 1)
        throw Error(ErrorKind::ShapeMismatch, "softmax: expected a column vector");
    std::vector<double> lv(l.data(), l.data() + l.size());
    const ClassProbabilities p = ClassProbabilities::softmax(lv);
    MatrixXd v = Eigen::Map<const Eigen::VectorXd>(p.values().data(), p.size());
    return g.add_node(std::move(v), {logits}, [logits](Graph &gr, NodeId self) {
        const MatrixXd &p = gr.value(self);
        const MatrixXd &up = gr.grad(self);
        const double dot = p.cwiseProduct(up).sum();
        gr.accumulate(logits, (p.array() * (up.array() - dot)).matrix());
    });
}

NodeId block(Graph &g, NodeId a, int row, int col, int rows, int cols) {
    const MatrixXd &v = g.value(a);
    if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > v.rows() || col + cols > v.cols())
        throw Error(ErrorKind::ShapeMismatch, "block: out of range");
    return g.add_node(v.block(row, col, rows, cols), {a}, [a, row, col, rows, cols](Graph &gr, NodeId self) {
        MatrixXd full = MatrixXd::Zero(gr.value(a).rows(), gr.value(a).cols());
        full.block(row, col, rows, cols) = gr.grad(self);
        gr.accumulate(a, full);
    });
}

NodeId reshape(Graph &g, NodeId a, int rows, int cols) {
    const MatrixXd &v = g.value(a);
    if (static_cast<Eigen::Index>(rows) * cols != v.size())
        throw Error(ErrorKind::ShapeMismatch, "reshape: size changes");
    const Eigen::Index r0 = v.rows(), c0 = v.cols();
    MatrixXd out = Eigen::Map<const MatrixXd>(v.data(), rows, cols);
    return g.add_node(std::move(out), {a}, [a, r0, c0](Graph &gr, NodeId self) {
        const MatrixXd &up = gr.grad(self);
        gr.accumulate(a, Eigen::Map<const MatrixXd>(up.data(), r0, c0));
    });
}

NodeId stop_gradient(Graph &g, NodeId a) { return g.constant(g.value(a)); }

NodeId sum(Graph &g, NodeId a) {
    return g.add_node(scalar(g.value(a).sum()), {a}, [a](Graph &gr, NodeId self) {
        gr.accumulate(a, MatrixXd::Constant(gr.value(a).rows(), gr.value(a).cols(), gr.grad(self)(0, 0)));
    });
}

NodeId weighted_sum(Graph &g, const std::vector<NodeId> &scalars, const std::vector<double> &weights) {
    if (scalars.size() != weights.size())
        throw Error(ErrorKind::LengthMismatch, "weighted_sum: one weight per term");
    double v = 0.0;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        if (g.value(scalars[i]).size() != 1)
            throw Error(ErrorKind::ShapeMismatch, "weighted_sum: terms must be scalars");
        v += weights[i] * g.value(scalars[i])(0, 0);
    }
    return g.add_node(scalar(v), scalars, [scalars, weights](Graph &gr, NodeId self) {
        for (std::size_t i = 0; i < scalars.size(); ++i)
            gr.accumulate(scalars[i], scalar(weights[i] * gr.grad(self)(0, 0)));
    });
}

NodeId gram_schmidt(Graph &g, NodeId m) {
    const Mat3 v = as_mat3(g.value(m), "gram_schmidt");
    return g.add_node(skelpose::gram_schmidt(v).matrix(), {m}, [m](Graph &gr, NodeId self) {
        gr.accumulate(m, gram_schmidt_backward(gr.value(m), gr.grad(self)));
    });
}

NodeId blend(Graph &g, const RotationCodebook &cb, NodeId p) {
    const MatrixXd &pv = g.value(p);
    if (pv.cols() != 1 || pv.rows() != cb.size())
        throw Error(ErrorKind::ShapeMismatch, "blend: probability vector does not match codebook");
    Mat3 v = Mat3::Zero();
    for (int k = 0; k < cb.size(); ++k)
        v += pv(k, 0) * cb.centers[k];
    return g.add_node(v, {p}, [p, cb](Graph &gr, NodeId self) {
        const std::vector<double> d = blend_backward(cb, gr.grad(self));
        gr.accumulate(p, Eigen::Map<const Eigen::VectorXd>(d.data(), d.size()));
    });
}

NodeId integrate_bones(Graph &g, const Skeleton &skel, const std::vector<NodeId> &absolute) {
    if (static_cast<int>(absolute.size()) != skel.num_bones())
        throw Error(ErrorKind::LengthMismatch, "integrate_bones: one rotation per bone");
    std::vector<Mat3> a;
    for (NodeId id : absolute)
        a.push_back(as_mat3(g.value(id), "integrate_bones"));
    return g.add_node(joints_to_matrix(skelpose::integrate_bones(skel, a)), absolute,
                      [absolute, skel](Graph &gr, NodeId self) {
                          const std::vector<Mat3> d = integrate_bones_backward(skel, matrix_to_joints(gr.grad(self)));
                          for (std::size_t b = 0; b < absolute.size(); ++b)
                              gr.accumulate(absolute[b], d[b]);
                      });
}

NodeId forward_kinematics(Graph &g, const Skeleton &skel, NodeId global, const std::vector<NodeId> &bone_rel) {
    if (static_cast<int>(bone_rel.size()) != skel.num_bones())
        throw Error(ErrorKind::LengthMismatch, "forward_kinematics: one rotation per bone");
    const Mat3 gv = as_mat3(g.value(global), "forward_kinematics");
    std::vector<Mat3> a;
    for (NodeId id : bone_rel)
        a.push_back(gv * as_mat3(g.value(id), "forward_kinematics"));
    std::vector<NodeId> inputs{global};
    inputs.insert(inputs.end(), bone_rel.begin(), bone_rel.end());
    return g.add_node(joints_to_matrix(skelpose::integrate_bones(skel, a)), inputs,
                      [global, bone_rel, skel](Graph &gr, NodeId self) {
                          const std::vector<Mat3> d = integrate_bones_backward(skel, matrix_to_joints(gr.grad(self)));
                          const Mat3 gv = gr.value(global);
                          Mat3 dg = Mat3::Zero();
                          for (std::size_t b = 0; b < bone_rel.size(); ++b) {
                              dg += d[b] * gr.value(bone_rel[b]).transpose();
                              gr.accumulate(bone_rel[b], gv.transpose() * d[b]);
                          }
                          gr.accumulate(global, dg);
                      });
}

NodeId render_gaussian(Graph &g, NodeId center, int rows, int cols, double sigma) {
    const MatrixXd &c = g.value(center);
    if (c.size() != 2)
        throw Error(ErrorKind::ShapeMismatch, "render_gaussian: center must have 2 entries");
    const Vec2 cv(c(0), c(1));
    return g.add_node(skelpose::render_gaussian(cv, rows, cols, sigma), {center},
                      [center, sigma](Graph &gr, NodeId self) {
                          const MatrixXd &c = gr.value(center);
                          const Vec2 d = render_gaussian_backward(Vec2(c(0), c(1)), sigma, gr.grad(self));
                          gr.accumulate(center, Eigen::Map<const MatrixXd>(d.data(), c.rows(), c.cols()));
                      });
}

NodeId soft_argmax(Graph &g, NodeId map, double temperature) {
    const SoftArgmax s = soft_argmax2d(g.value(map), temperature);
    return g.add_node(MatrixXd(s.uv), {map}, [map, temperature](Graph &gr, NodeId self) {
        const MatrixXd &up = gr.grad(self);
        gr.accumulate(map, soft_argmax2d_backward(gr.value(map), temperature, Vec2(up(0), up(1))));
    });
}

NodeId project_to_plane(Graph &g, NodeId joints, double target_width) {
    const std::vector<Vec2> p = skelpose::project_to_plane(matrix_to_joints(g.value(joints)), target_width);
    MatrixXd v(p.size(), 2);
    for (std::size_t j = 0; j < p.size(); ++j)
        v.row(j) = p[j].transpose();
    return g.add_node(std::move(v), {joints}, [joints, target_width](Graph &gr, NodeId self) {
        const MatrixXd &up = gr.grad(self);
        std::vector<Vec2> u(up.rows());
        for (Eigen::Index j = 0; j < up.rows(); ++j)
            u[j] = up.row(j).transpose();
        gr.accumulate(joints, joints_to_matrix(project_to_plane_backward(matrix_to_joints(gr.value(joints)),
                                                                         target_width, u)));
    });
}

MatrixXd stack_cross(const CrossHeatmap &ch) {
    const int m = ch.num_joints(), h = ch.rows();
    MatrixXd out(2 * m * h, ch.cols());
    for (int j = 0; j < m; ++j) {
        out.middleRows(j * h, h) = ch.xy[j];
        out.middleRows((m + j) * h, h) = ch.zy[j];
    }
    return out;
}

CrossHeatmap unstack_cross(const MatrixXd &stacked, int num_joints) {
    if (num_joints <= 0 || stacked.rows() % (2 * num_joints) != 0)
        throw Error(ErrorKind::ShapeMismatch, "unstack_cross: row count is not a multiple of 2m");
    const Eigen::Index h = stacked.rows() / (2 * num_joints);
    CrossHeatmap ch;
    for (int j = 0; j < num_joints; ++j) {
        ch.xy.push_back(stacked.middleRows(j * h, h));
        ch.zy.push_back(stacked.middleRows((num_joints + j) * h, h));
    }
    return ch;
}

namespace {

struct PixelCoords {
    Eigen::MatrixX3d p;     // pixel coordinate per joint and axis, clamped
    Eigen::MatrixX3d live;  // 1 where the clamp was inactive
    Vec3 per_mm;            // d pixel / d mm per axis
};

PixelCoords pixel_coords(const MatrixXd &joints, const VolumeBounds &b, int grid) {
    PixelCoords out;
    out.p.resize(joints.rows(), 3);
    out.live.resize(joints.rows(), 3);
    out.per_mm = (grid / b.extent().array()).matrix();
    for (Eigen::Index j = 0; j < joints.rows(); ++j) {
        for (int a = 0; a < 3; ++a) {
            const double px = world_to_pixel(joints(j, a), b.min[a], b.max[a], grid);
            out.p(j, a) = std::clamp(px, 0.0, grid - 1.0);
            out.live(j, a) = (px >= 0.0 && px <= grid - 1.0) ? 1.0 : 0.0;
        }
    }
    return out;
}

} // namespace

NodeId render_cross(Graph &g, NodeId joints, const VolumeBounds &bounds, int grid, double sigma) {
    const MatrixXd &jv = g.value(joints);
    if (jv.cols() != 3)
        throw Error(ErrorKind::ShapeMismatch, "render_cross: joints must be m x 3");
    const int m = static_cast<int>(jv.rows());
    const PixelCoords pc = pixel_coords(jv, bounds, grid);
    MatrixXd out(2 * m * grid, grid);
    for (int j = 0; j < m; ++j) {
        out.middleRows(j * grid, grid) = skelpose::render_gaussian(Vec2(pc.p(j, 0), pc.p(j, 1)), grid, grid, sigma);
        out.middleRows((m + j) * grid, grid) =
            skelpose::render_gaussian(Vec2(pc.p(j, 2), pc.p(j, 1)), grid, grid, sigma);
    }
    return g.add_node(std::move(out), {joints}, [joints, bounds, grid, sigma, m](Graph &gr, NodeId self) {
        const PixelCoords pc = pixel_coords(gr.value(joints), bounds, grid);
        const MatrixXd &up = gr.grad(self);
        MatrixXd d = MatrixXd::Zero(m, 3);
        for (int j = 0; j < m; ++j) {
            const Vec2 a = render_gaussian_backward(Vec2(pc.p(j, 0), pc.p(j, 1)), sigma, up.middleRows(j * grid, grid));
            const Vec2 b =
                render_gaussian_backward(Vec2(pc.p(j, 2), pc.p(j, 1)), sigma, up.middleRows((m + j) * grid, grid));
            d(j, 0) = a.x();
            d(j, 1) = a.y() + b.y();
            d(j, 2) = b.x();
        }
        for (int a = 0; a < 3; ++a)
            d.col(a) = d.col(a).cwiseProduct(pc.live.col(a)) * pc.per_mm[a];
        gr.accumulate(joints, d);
    });
}

NodeId decode_cross(Graph &g, NodeId stacked, const VolumeBounds &bounds, double temperature) {
    const MatrixXd &s = g.value(stacked);
    const Eigen::Index w = s.cols();
    if (w == 0 || s.rows() % (2 * w) != 0)
        throw Error(ErrorKind::ShapeMismatch, "decode_cross: expected square maps stacked xy then zy");
    const int m = static_cast<int>(s.rows() / (2 * w));
    const DecodedCross d = skelpose::decode_cross(unstack_cross(s, m), bounds, temperature);
    return g.add_node(joints_to_matrix(d.joints), {stacked}, [stacked, bounds, temperature, m](Graph &gr,
                                                                                              NodeId self) {
        const MatrixXd &s = gr.value(stacked);
        const Eigen::Index h = s.rows() / (2 * m), w = s.cols();
        const MatrixXd &up = gr.grad(self);
        MatrixXd d = MatrixXd::Zero(s.rows(), s.cols());
        const Vec3 mm_per_px = (bounds.extent().array() / Eigen::Array3d(w, h, w)).matrix();
        for (int j = 0; j < m; ++j) {
            // x = col(xy), y = mean of rows, z = col(zy), all linear in pixel units.
            const Vec2 g_xy(up(j, 0) * mm_per_px.x(), 0.5 * up(j, 1) * mm_per_px.y());
            const Vec2 g_zy(up(j, 2) * mm_per_px.z(), 0.5 * up(j, 1) * mm_per_px.y());
            d.middleRows(j * h, h) = soft_argmax2d_backward(s.middleRows(j * h, h), temperature, g_xy);
            d.middleRows((m + j) * h, h) = soft_argmax2d_backward(s.middleRows((m + j) * h, h), temperature, g_zy);
        }
        gr.accumulate(stacked, d);
    });
}

NodeId loss_rotg(Graph &g, NodeId p, int label) {
    const MatrixXd &pv = g.value(p);
    const ClassProbabilities probs(std::vector<double>(pv.data(), pv.data() + pv.size()));
    const ClassLoss l = skelpose::loss_rotg(probs, label);
    return g.add_node(scalar(l.value), {p}, [p, grad = l.grad](Graph &gr, NodeId self) {
        gr.accumulate(p, gr.grad(self)(0, 0) * Eigen::Map<const Eigen::VectorXd>(grad.data(), grad.size()));
    });
}

NodeId loss_rot_mse(Graph &g, const std::vector<NodeId> &pred, const std::vector<Mat3> &gt) {
    std::vector<Mat3> pv;
    for (NodeId id : pred)
        pv.push_back(as_mat3(g.value(id), "loss_rot_mse"));
    const MatrixLoss l = skelpose::loss_rot_mse(pv, gt);
    return g.add_node(scalar(l.value), pred, [pred, grad = l.grad](Graph &gr, NodeId self) {
        for (std::size_t i = 0; i < pred.size(); ++i)
            gr.accumulate(pred[i], gr.grad(self)(0, 0) * grad[i]);
    });
}

NodeId loss_pos(Graph &g, NodeId joints, const Joints &gt) {
    const PositionLoss l = skelpose::loss_pos(matrix_to_joints(g.value(joints)), gt);
    return g.add_node(scalar(l.value), {joints}, [joints, grad = joints_to_matrix(l.grad)](Graph &gr, NodeId self) {
        gr.accumulate(joints, gr.grad(self)(0, 0) * grad);
    });
}

NodeId loss_hm(Graph &g, NodeId stacked, const CrossHeatmap &gt, const SupervisionMask &mask) {
    const HeatmapLoss l = skelpose::loss_hm(unstack_cross(g.value(stacked), gt.num_joints()), gt, mask);
    return g.add_node(scalar(l.value), {stacked}, [stacked, grad = stack_cross(l.grad)](Graph &gr, NodeId self) {
        gr.accumulate(stacked, gr.grad(self)(0, 0) * grad);
    });
}

} // namespace ops

GradcheckResult gradcheck(const std::function<NodeId(Graph &, const std::vector<NodeId> &)> &f,
                          const std::vector<MatrixXd> &inputs, double eps, double tol) {
    if (!(eps >= 1e-8 && eps <= 1e-4))
        throw Error(ErrorKind::Validation, "gradcheck: eps must lie in [1e-8, 1e-4]");

    auto evaluate = [&](const std::vector<MatrixXd> &in, Graph &g, std::vector<NodeId> &ids) {
        ids.clear();
        for (const MatrixXd &m : in)
            ids.push_back(g.leaf(m));
        const NodeId out = f(g, ids);
        if (g.value(out).size() != 1)
            throw Error(ErrorKind::ShapeMismatch, "gradcheck: function must return a scalar");
        return out;
    };

    Graph g;
    std::vector<NodeId> ids;
    const NodeId out = evaluate(inputs, g, ids);
    g.backward(out);

    GradcheckResult res;
    std::vector<MatrixXd> work = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const MatrixXd analytic = g.grad(ids[i]);
        MatrixXd numeric(analytic.rows(), analytic.cols());
        for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
            const double x0 = inputs[i](k);
            Graph gp, gm;
            std::vector<NodeId> tmp;
            work[i](k) = x0 + eps;
            const double fp = gp.value(evaluate(work, gp, tmp))(0, 0);
            work[i](k) = x0 - eps;
            const double fm = gm.value(evaluate(work, gm, tmp))(0, 0);
            work[i](k) = x0;
            numeric(k) = (fp - fm) / (2.0 * eps);
        }
        const double floor = 1e-3 * numeric.cwiseAbs().maxCoeff() + 1e-12;
        for (Eigen::Index k = 0; k < numeric.size(); ++k) {
            const double a = analytic(k), n = numeric(k);
            const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
            res.max_relative_error = std::max(res.max_relative_error, rel);
            ++res.entries;
        }
    }
    res.passed = res.max_relative_error <= tol;
    return res;
}

} // namespace skelpose
