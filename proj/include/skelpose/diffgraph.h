#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "skelpose/codebook.h"
#include "skelpose/heatmaps.h"
#include "skelpose/objectives.h"
#include "skelpose/skeleton.h"

namespace skelpose {

using NodeId = int;

// Reverse-mode tape. Nodes are appended in evaluation order and every node's
// inputs must already exist, so the tape is acyclic by construction.
class Graph {
  public:
    // Receives the graph and the id of the node being differentiated; reads
    // grad(self) and accumulates into its inputs.
    using Backward = std::function<void(Graph &, NodeId)>;

    NodeId leaf(const Eigen::MatrixXd &value);
    NodeId constant(const Eigen::MatrixXd &value);
    NodeId add_node(Eigen::MatrixXd value, std::vector<NodeId> inputs, Backward backward);

    const Eigen::MatrixXd &value(NodeId id) const;
    const Eigen::MatrixXd &grad(NodeId id) const;
    const std::vector<NodeId> &inputs(NodeId id) const;
    void accumulate(NodeId id, const Eigen::MatrixXd &g);
    int size() const { return static_cast<int>(nodes_.size()); }

    // Seeds d(loss)/d(loss) = 1 on a 1x1 node and runs the tape backwards.
    void backward(NodeId loss);
    void zero_grad();

  private:
    struct Node {
        Eigen::MatrixXd value;
        Eigen::MatrixXd grad;
        std::vector<NodeId> inputs;
        Backward backward;
        bool constant = false;
    };
    const Node &node(NodeId id) const;
    std::vector<Node> nodes_;
};

namespace ops {

NodeId add(Graph &g, NodeId a, NodeId b);
NodeId sub(Graph &g, NodeId a, NodeId b);
NodeId scale(Graph &g, NodeId a, double s);
NodeId matmul(Graph &g, NodeId a, NodeId b);
NodeId tanh(Graph &g, NodeId a);
// Column-vector softmax.
NodeId softmax(Graph &g, NodeId logits);
NodeId block(Graph &g, NodeId a, int row, int col, int rows, int cols);
// Column-major reshape.
NodeId reshape(Graph &g, NodeId a, int rows, int cols);
// Value copied, gradient dropped.
NodeId stop_gradient(Graph &g, NodeId a);
NodeId sum(Graph &g, NodeId a);
NodeId weighted_sum(Graph &g, const std::vector<NodeId> &scalars, const std::vector<double> &weights);

NodeId gram_schmidt(Graph &g, NodeId m);
// p: K x 1 probabilities.
NodeId blend(Graph &g, const RotationCodebook &cb, NodeId p);
// Joints as an m x 3 matrix, one row per joint.
NodeId forward_kinematics(Graph &g, const Skeleton &skel, NodeId global, const std::vector<NodeId> &bone_rel);
NodeId integrate_bones(Graph &g, const Skeleton &skel, const std::vector<NodeId> &absolute);

// center: 2 x 1 (column, row).
NodeId render_gaussian(Graph &g, NodeId center, int rows, int cols, double sigma);
// 2 x 1 (column, row).
NodeId soft_argmax(Graph &g, NodeId map, double temperature);
// m x 3 joints -> m x 2 plane coordinates.
NodeId project_to_plane(Graph &g, NodeId joints, double target_width);

// Cross heatmaps stacked vertically: xy maps of joints 0..m-1, then zy maps,
// giving a (2 m H) x W matrix.
NodeId render_cross(Graph &g, NodeId joints, const VolumeBounds &bounds, int grid, double sigma);
NodeId decode_cross(Graph &g, NodeId stacked, const VolumeBounds &bounds, double temperature);
Eigen::MatrixXd stack_cross(const CrossHeatmap &ch);
CrossHeatmap unstack_cross(const Eigen::MatrixXd &stacked, int num_joints);

NodeId loss_rotg(Graph &g, NodeId p, int label);
NodeId loss_rot_mse(Graph &g, const std::vector<NodeId> &pred, const std::vector<Mat3> &gt);
NodeId loss_pos(Graph &g, NodeId joints, const Joints &gt);
NodeId loss_hm(Graph &g, NodeId stacked, const CrossHeatmap &gt, const SupervisionMask &mask);

} // namespace ops

Eigen::MatrixXd joints_to_matrix(const Joints &joints);
Joints matrix_to_joints(const Eigen::MatrixXd &m);

struct GradcheckResult {
    double max_relative_error = 0.0;
    int entries = 0;
    bool passed = false;
};

// Builds f on fresh leaves, backpropagates, and compares every input entry's
// gradient with a central difference. Relative error per entry is
// |a − n| / max(|a|, |n|, 1e-3·max|n| + 1e-12). eps must lie in [1e-8, 1e-4].
GradcheckResult gradcheck(const std::function<NodeId(Graph &, const std::vector<NodeId> &)> &f,
                          const std::vector<Eigen::MatrixXd> &inputs, double eps = 1e-6, double tol = 1e-4);

} // namespace skelpose
