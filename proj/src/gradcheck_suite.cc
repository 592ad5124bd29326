#include "skelpose/gradcheck_suite.h"

#include <algorithm>
#include <chrono>
#include <functional>
#include <random>

#include <Eigen/Dense>

#include "skelpose/diffgraph.h"

namespace skelpose {

using Eigen::MatrixXd;

namespace {

using Builder = std::function<NodeId(Graph &, const std::vector<NodeId> &)>;

struct Instance {
    Builder f;
    std::vector<MatrixXd> inputs;
};

MatrixXd gaussian(std::mt19937_64 &rng, int rows, int cols, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m(i) = n(rng);
    return m;
}

MatrixXd well_conditioned(std::mt19937_64 &rng) {
    for (;;) {
        const MatrixXd m = gaussian(rng, 3, 3);
        const Eigen::Vector3d sv = Eigen::JacobiSVD<Mat3>(Mat3(m)).singularValues();
        if (sv[2] > 0.2)
            return m;
    }
}

// A bump plus noise. The soft-argmax has a kink where the minimum pixel
// changes, so the two smallest values are kept well apart.
MatrixXd random_heatmap(std::mt19937_64 &rng, int rows, int cols) {
    std::uniform_real_distribution<double> u(2.0, cols - 3.0);
    for (;;) {
        const Vec2 c(u(rng), std::uniform_real_distribution<double>(2.0, rows - 3.0)(rng));
        MatrixXd h = render_gaussian(c, rows, cols, 1.5);
        h += gaussian(rng, rows, cols, 0.02);
        std::vector<double> v(h.data(), h.data() + h.size());
        std::partial_sort(v.begin(), v.begin() + 2, v.end());
        if (v[1] - v[0] > 1e-3)
            return h;
    }
}

Joints random_joints(std::mt19937_64 &rng, int m, double sd) {
    const MatrixXd x = gaussian(rng, m, 3, sd);
    return matrix_to_joints(x);
}

} // namespace

std::vector<LayerCheck> run_gradcheck_suite(int instances, std::uint64_t seed, double tol, double eps) {
    std::mt19937_64 rng(seed);
    const Skeleton skel = default_skeleton();
    const int n = skel.num_bones();

    struct Layer {
        std::string name;
        std::function<Instance()> make;
    };
    std::vector<Layer> layers;

    layers.push_back({"gram_schmidt", [&] {
                          return Instance{[](Graph &g, const std::vector<NodeId> &in) {
                                              return ops::sum(g, ops::gram_schmidt(g, in[0]));
                                          },
                                          {well_conditioned(rng)}};
                      }});
    layers.push_back({"gram_schmidt_weighted", [&] {
                          const MatrixXd w = gaussian(rng, 3, 3);
                          return Instance{[w](Graph &g, const std::vector<NodeId> &in) {
                                              const NodeId r = ops::gram_schmidt(g, in[0]);
                                              const NodeId c = g.constant(w);
                                              return ops::sum(g, ops::matmul(g, ops::reshape(g, r, 1, 9),
                                                                             ops::reshape(g, c, 9, 1)));
                                          },
                                          {well_conditioned(rng)}};
                      }});
    layers.push_back({"forward_kinematics", [&] {
                          std::vector<MatrixXd> in{gaussian(rng, 3, 3)};
                          for (int b = 0; b < n; ++b)
                              in.push_back(gaussian(rng, 3, 3));
                          const MatrixXd w = gaussian(rng, skel.num_joints(), 3);
                          return Instance{[&skel, n, w](Graph &g, const std::vector<NodeId> &ids) {
                                              std::vector<NodeId> bones(ids.begin() + 1, ids.begin() + 1 + n);
                                              const NodeId x = ops::forward_kinematics(g, skel, ids[0], bones);
                                              const NodeId c = g.constant(w);
                                              return ops::sum(g, ops::matmul(
                                                                     g, ops::reshape(g, x, 1, 3 * skel.num_joints()),
                                                                     ops::reshape(g, c, 3 * skel.num_joints(), 1)));
                                          },
                                          in};
                      }});
    layers.push_back({"soft_argmax", [&] {
                          const MatrixXd w = gaussian(rng, 1, 2);
                          return Instance{[w](Graph &g, const std::vector<NodeId> &in) {
                                              const NodeId uv = ops::soft_argmax(g, in[0], kDefaultTemperature);
                                              return ops::sum(g, ops::matmul(g, g.constant(w), uv));
                                          },
                                          {random_heatmap(rng, 16, 20)}};
                      }});
    layers.push_back({"blend", [&] {
                          RotationCodebook cb;
                          for (int k = 0; k < 5; ++k)
                              cb.centers.push_back(gaussian(rng, 3, 3));
                          const MatrixXd w = gaussian(rng, 1, 9);
                          return Instance{[cb, w](Graph &g, const std::vector<NodeId> &in) {
                                              const NodeId b = ops::blend(g, cb, ops::softmax(g, in[0]));
                                              return ops::sum(g, ops::matmul(g, g.constant(w),
                                                                             ops::reshape(g, b, 9, 1)));
                                          },
                                          {gaussian(rng, 5, 1)}};
                      }});
    layers.push_back({"loss_rotg", [&] {
                          const int label = std::uniform_int_distribution<int>(0, 7)(rng);
                          return Instance{[label](Graph &g, const std::vector<NodeId> &in) {
                                              return ops::loss_rotg(g, ops::softmax(g, in[0]), label);
                                          },
                                          {gaussian(rng, 8, 1, 2.0)}};
                      }});
    auto matrix_loss = [&] {
        std::vector<MatrixXd> in;
        std::vector<Mat3> gt;
        for (int b = 0; b < n; ++b) {
            in.push_back(gaussian(rng, 3, 3));
            gt.push_back(gaussian(rng, 3, 3));
        }
        return Instance{[gt](Graph &g, const std::vector<NodeId> &ids) { return ops::loss_rot_mse(g, ids, gt); },
                        in};
    };
    layers.push_back({"loss_rotb", matrix_loss});
    layers.push_back({"loss_rot", [&] {
                          // Through the product dR·R^g·R^b as in the network.
                          const Mat3 d_r = from_axis_angle(Vec3(gaussian(rng, 3, 1)), 0.3).matrix();
                          const Mat3 gt = from_axis_angle(Vec3(gaussian(rng, 3, 1)), 1.0).matrix();
                          return Instance{[d_r, gt](Graph &g, const std::vector<NodeId> &in) {
                                              const NodeId a = ops::matmul(g, ops::gram_schmidt(g, in[0]),
                                                                           ops::gram_schmidt(g, in[1]));
                                              const NodeId r = ops::matmul(g, g.constant(d_r), a);
                                              return ops::loss_rot_mse(g, {r}, {gt});
                                          },
                                          {well_conditioned(rng), well_conditioned(rng)}};
                      }});
    layers.push_back({"loss_pos", [&] {
                          const Joints gt = random_joints(rng, skel.num_joints(), 0.5);
                          return Instance{[gt](Graph &g, const std::vector<NodeId> &in) {
                                              return ops::loss_pos(g, in[0], gt);
                                          },
                                          {gaussian(rng, skel.num_joints(), 3, 0.5)}};
                      }});
    layers.push_back({"loss_hm", [&] {
                          const int m = 4, h = 10;
                          CrossHeatmap gt;
                          for (int j = 0; j < m; ++j) {
                              gt.xy.push_back(random_heatmap(rng, h, h));
                              gt.zy.push_back(random_heatmap(rng, h, h));
                          }
                          SupervisionMask mask;
                          mask.hm_zy = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
                          return Instance{[gt, mask](Graph &g, const std::vector<NodeId> &in) {
                                              return ops::loss_hm(g, in[0], gt, mask);
                                          },
                                          {gaussian(rng, 2 * m * h, h, 0.3)}};
                      }});
    layers.push_back({"render_gaussian", [&] {
                          const MatrixXd w = gaussian(rng, 12, 14);
                          std::uniform_real_distribution<double> u(1.0, 11.0);
                          MatrixXd c(2, 1);
                          c << u(rng), u(rng);
                          return Instance{[w](Graph &g, const std::vector<NodeId> &in) {
                                              const NodeId map = ops::render_gaussian(g, in[0], 12, 14, 1.0);
                                              return ops::sum(g, ops::matmul(g, ops::reshape(g, map, 1, 168),
                                                                             ops::reshape(g, g.constant(w), 168, 1)));
                                          },
                                          {c}};
                      }});
    layers.push_back({"project_to_plane", [&] {
                          const MatrixXd w = gaussian(rng, 1, 2 * skel.num_joints());
                          return Instance{[w, m = skel.num_joints()](Graph &g, const std::vector<NodeId> &in) {
                                              const NodeId p = ops::project_to_plane(g, in[0], 16.0);
                                              return ops::sum(
                                                  g, ops::matmul(g, g.constant(w), ops::reshape(g, p, 2 * m, 1)));
                                          },
                                          {joints_to_matrix(random_joints(rng, skel.num_joints(), 1.0))}};
                      }});

    std::vector<LayerCheck> out;
    for (const Layer &layer : layers) {
        LayerCheck lc;
        lc.layer = layer.name;
        const auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < instances; ++i) {
            const Instance inst = layer.make();
            const GradcheckResult r = gradcheck(inst.f, inst.inputs, eps, tol);
            lc.max_relative_error = std::max(lc.max_relative_error, r.max_relative_error);
            ++lc.instances;
        }
        lc.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        lc.passed = lc.instances > 0 && lc.max_relative_error <= tol;
        out.push_back(lc);
    }
    return out;
}

} // namespace skelpose
