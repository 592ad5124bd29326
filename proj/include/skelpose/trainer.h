#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "skelpose/codebook.h"
#include "skelpose/diffgraph.h"
#include "skelpose/heatmaps.h"
#include "skelpose/objectives.h"
#include "skelpose/skeleton.h"

namespace skelpose {

inline constexpr int kToyGrid = 32;

struct ToySample {
    Eigen::VectorXd features;
    Pose pose;
    CrossHeatmap heatmap; // ground truth on the toy grid
    int label = 0;        // codebook class of the global rotation
    SupervisionMask mask;
};

struct SyntheticOptions {
    double max_global_jitter_deg = 5.0; // around the cluster center
    double max_bone_deg = 15.0;
    int grid = kToyGrid;
    double sigma = kDefaultSigma;
    VolumeBounds bounds;
};

// Random poses around the codebook's centers with small bone rotations.
// Features are the joints' (x, y) and (z, y) coordinates in meters plus
// Gaussian noise (`noise`, meters).
std::vector<ToySample> make_synthetic_dataset(int n, const Skeleton &skel, const RotationCodebook &cb, double noise,
                                              std::uint64_t seed, const SyntheticOptions &opt = {});

Eigen::VectorXd toy_features(const Joints &joints);

// Left/right mirror through the x = 0 plane with joint names swapped.
Pose flip_pose(const Skeleton &skel, const Pose &pose);
ToySample flip_sample(const Skeleton &skel, const RotationCodebook &cb, const ToySample &s,
                      const SyntheticOptions &opt = {});

// tanh hidden layer, then K class logits and 9 entries per bone.
struct ToyModel {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;
    Eigen::MatrixXd w3;
    Eigen::VectorXd b3;
    Eigen::MatrixXd residual; // learned heatmap offset, stacked cross layout

    static ToyModel init(int features, int hidden, int classes, int bones, int joints, int grid, std::uint64_t seed);
    bool finite() const;
};

struct ToyLoss {
    double total = 0.0;
    double rotg = 0.0;
    double rotb = 0.0;
    double rot = 0.0;
    double pos = 0.0;
    double hm = 0.0;
};

struct TrainOptions {
    int epochs = 50;
    double lr = 0.05;
    int batch_size = 8;
    int hidden = 32;
    std::uint64_t seed = 0;
    VolumeBounds bounds;
    double temperature = kDefaultTemperature;
    double sigma = kDefaultSigma;
};

struct TrainResult {
    std::vector<ToyLoss> curve; // per-epoch mean over samples
    ToyModel model;
    bool diverged = false;
};

TrainResult train_toy(const std::vector<ToySample> &data, const Skeleton &skel, const RotationCodebook &cb,
                      const LossWeights &w, const TrainOptions &opt);

// Continues from an existing model.
TrainResult train_toy(const std::vector<ToySample> &data, const Skeleton &skel, const RotationCodebook &cb,
                      const LossWeights &w, const TrainOptions &opt, ToyModel model);

// One forward pass on a fresh tape; fills `params` with the parameter leaves
// in model order and returns the loss components (total is the scalar node).
struct ToyGraph {
    std::vector<NodeId> params;
    NodeId total = -1;
    ToyLoss loss;
};
ToyGraph build_toy_graph(Graph &g, const ToyModel &model, const ToySample &s, const Skeleton &skel,
                         const RotationCodebook &cb, const LossWeights &w, const TrainOptions &opt);

ToyLoss evaluate_toy(const ToyModel &model, const ToySample &s, const Skeleton &skel, const RotationCodebook &cb,
                     const LossWeights &w, const TrainOptions &opt);

int predict_class(const ToyModel &model, const Eigen::VectorXd &features);
double classification_accuracy(const ToyModel &model, const std::vector<ToySample> &data);

void write_loss_csv(const std::vector<ToyLoss> &curve, const std::string &path);
std::string loss_csv(const std::vector<ToyLoss> &curve);
void write_checkpoint(const ToyModel &model, const std::string &path);
ToyModel read_checkpoint(const std::string &path);

} // namespace skelpose
