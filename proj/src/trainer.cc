#include "skelpose/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "skelpose/assembly.h"
#include "skelpose/errors.h"
#include "skelpose/serialization.h"

namespace skelpose {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

RotationMatrix random_small_rotation(std::mt19937_64 &rng, double max_deg) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vec3 axis(normal(rng), normal(rng), normal(rng));
    const double angle = unit(rng) * max_deg * std::numbers::pi / 180.0;
    return from_axis_angle(axis, angle);
}

const Mat3 kMirror = Vec3(-1.0, 1.0, 1.0).asDiagonal();

} // namespace

VectorXd toy_features(const Joints &joints) {
    const Eigen::Index m = static_cast<Eigen::Index>(joints.size());
    VectorXd f(4 * m);
    for (Eigen::Index j = 0; j < m; ++j) {
        f.segment<2>(2 * j) = Vec2(joints[j].x(), joints[j].y()) / 1000.0;
        f.segment<2>(2 * m + 2 * j) = Vec2(joints[j].z(), joints[j].y()) / 1000.0;
    }
    return f;
}

std::vector<ToySample> make_synthetic_dataset(int n, const Skeleton &skel, const RotationCodebook &cb, double noise,
                                              std::uint64_t seed, const SyntheticOptions &opt) {
    if (n < 1)
        throw Error(ErrorKind::Validation, "make_synthetic_dataset: need at least one sample");
    if (cb.size() < 1)
        throw Error(ErrorKind::Validation, "make_synthetic_dataset: empty codebook");
    if (noise < 0.0)
        throw Error(ErrorKind::Validation, "make_synthetic_dataset: negative noise");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, cb.size() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<ToySample> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        const int k = pick(rng);
        const RotationMatrix g = gram_schmidt(cb.centers[k]) * random_small_rotation(rng, opt.max_global_jitter_deg);
        std::vector<RotationMatrix> rel;
        for (int b = 0; b < skel.num_bones(); ++b)
            rel.push_back(random_small_rotation(rng, opt.max_bone_deg));
        ToySample s;
        s.pose = forward_kinematics(skel, g, rel);
        s.features = toy_features(s.pose.joints);
        if (noise > 0.0) {
            for (Eigen::Index f = 0; f < s.features.size(); ++f)
                s.features[f] += noise * normal(rng);
        }
        s.heatmap = encode_cross(s.pose.joints, opt.bounds, opt.grid, opt.sigma).maps;
        s.label = classify(cb, g.matrix()).index;
        out.push_back(std::move(s));
    }
    return out;
}

Pose flip_pose(const Skeleton &skel, const Pose &pose) {
    const int n = skel.num_bones();
    const RotationMatrix g = RotationMatrix::unchecked(kMirror * pose.global.matrix() * kMirror);
    std::vector<RotationMatrix> rel(n);
    for (int b = 0; b < n; ++b) {
        const int mb = skel.bone_of_joint(skel.mirror_joint(skel.bone(b).child));
        rel[mb] = RotationMatrix::unchecked(kMirror * pose.bone_rel[b].matrix() * kMirror);
    }
    return forward_kinematics(skel, g, rel);
}

ToySample flip_sample(const Skeleton &skel, const RotationCodebook &cb, const ToySample &s,
                      const SyntheticOptions &opt) {
    ToySample out;
    out.pose = flip_pose(skel, s.pose);
    out.features = toy_features(out.pose.joints);
    out.heatmap = encode_cross(out.pose.joints, opt.bounds, opt.grid, opt.sigma).maps;
    out.label = classify(cb, out.pose.global.matrix()).index;
    out.mask = s.mask;
    return out;
}

ToyModel ToyModel::init(int features, int hidden, int classes, int bones, int joints, int grid, std::uint64_t seed) {
    if (features < 1 || hidden < 1 || classes < 1 || bones < 1 || joints < 1 || grid < 2)
        throw Error(ErrorKind::Validation, "ToyModel::init: dimensions must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto random = [&](int r, int c, double sd) {
        MatrixXd m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m(i) = sd * normal(rng);
        return m;
    };
    ToyModel m;
    m.w1 = random(hidden, features, 1.0 / std::sqrt(static_cast<double>(features)));
    m.b1 = VectorXd::Zero(hidden);
    m.w2 = random(classes, hidden, 0.1 / std::sqrt(static_cast<double>(hidden)));
    m.b2 = VectorXd::Zero(classes);
    m.w3 = MatrixXd::Zero(9 * bones, hidden);
    m.b3.resize(9 * bones);
    const Mat3 id = Mat3::Identity();
    for (int b = 0; b < bones; ++b)
        m.b3.segment<9>(9 * b) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(id.data());
    m.residual = MatrixXd::Zero(2 * joints * grid, grid);
    return m;
}

bool ToyModel::finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() && w3.allFinite() &&
           b3.allFinite() && residual.allFinite();
}

ToyGraph build_toy_graph(Graph &g, const ToyModel &model, const ToySample &s, const Skeleton &skel,
                         const RotationCodebook &cb, const LossWeights &w, const TrainOptions &opt) {
    using namespace ops;
    const int n = skel.num_bones();
    if (model.w3.rows() != 9 * n || model.w2.rows() != cb.size())
        throw Error(ErrorKind::ShapeMismatch, "toy model does not match skeleton or codebook");
    if (s.features.size() != model.w1.cols())
        throw Error(ErrorKind::ShapeMismatch, "feature length does not match toy model");

    ToyGraph tg;
    tg.params = {g.leaf(model.w1), g.leaf(model.b1), g.leaf(model.w2), g.leaf(model.b2),
                 g.leaf(model.w3), g.leaf(model.b3), g.leaf(model.residual)};
    const NodeId f = g.constant(s.features);
    const NodeId h = tanh(g, add(g, matmul(g, tg.params[0], f), tg.params[1]));
    const NodeId logits = add(g, matmul(g, tg.params[2], h), tg.params[3]);
    const NodeId p = softmax(g, logits);
    const NodeId r_g = gram_schmidt(g, blend(g, cb, p));
    const NodeId bone_out = add(g, matmul(g, tg.params[4], h), tg.params[5]);

    std::vector<NodeId> r_b(n), r_init(n);
    for (int b = 0; b < n; ++b) {
        r_b[b] = gram_schmidt(g, reshape(g, block(g, bone_out, 9 * b, 0, 9, 1), 3, 3));
        r_init[b] = matmul(g, r_g, r_b[b]);
    }
    const NodeId x_init = integrate_bones(g, skel, r_init);

    // Stand-in for the refinement network: ground-truth maps pulled toward the
    // initial pose's maps, plus a learned offset.
    const int grid = static_cast<int>(model.residual.cols());
    const NodeId gt_maps = g.constant(stack_cross(s.heatmap));
    if (g.value(gt_maps).rows() != model.residual.rows() || g.value(gt_maps).cols() != grid)
        throw Error(ErrorKind::ShapeMismatch, "ground-truth heatmaps do not match the toy grid");
    const NodeId init_maps = render_cross(g, x_init, opt.bounds, grid, opt.sigma);
    const NodeId maps = add(g, add(g, scale(g, gt_maps, 0.5), scale(g, init_maps, 0.5)), tg.params[6]);
    const NodeId x_final = decode_cross(g, maps, opt.bounds, opt.temperature);

    // dR is not differentiated through.
    std::vector<RotationMatrix> d_r;
    try {
        d_r = alignment_rotations(matrix_to_joints(g.value(x_init)), matrix_to_joints(g.value(x_final)), skel);
    } catch (const Error &) {
        d_r.assign(n, RotationMatrix::identity());
    }
    std::vector<NodeId> r(n);
    for (int b = 0; b < n; ++b)
        r[b] = matmul(g, g.constant(d_r[b].matrix()), r_init[b]);

    std::vector<Mat3> gt_rel, gt_abs;
    for (int b = 0; b < n; ++b) {
        gt_rel.push_back(s.pose.bone_rel[b].matrix());
        gt_abs.push_back(s.pose.absolute[b].matrix());
    }
    Joints gt_m = s.pose.joints;
    for (Vec3 &x : gt_m)
        x /= 1000.0;

    const NodeId l_rotg = loss_rotg(g, p, s.label);
    const NodeId l_rotb = loss_rot_mse(g, r_b, gt_rel);
    const NodeId l_rot = loss_rot_mse(g, r, gt_abs);
    const NodeId l_pos = loss_pos(g, scale(g, x_final, 1e-3), gt_m);
    const NodeId l_hm = loss_hm(g, maps, s.heatmap, s.mask);
    tg.total = weighted_sum(g, {l_rotg, l_rotb, l_rot, l_pos, l_hm},
                            {1.0, w.alpha, s.mask.rot ? w.beta : 0.0, s.mask.pos ? w.gamma : 0.0, w.lambda});
    tg.loss = {g.value(tg.total)(0, 0),  g.value(l_rotg)(0, 0), g.value(l_rotb)(0, 0),
               g.value(l_rot)(0, 0),    g.value(l_pos)(0, 0),  g.value(l_hm)(0, 0)};
    return tg;
}

ToyLoss evaluate_toy(const ToyModel &model, const ToySample &s, const Skeleton &skel, const RotationCodebook &cb,
                     const LossWeights &w, const TrainOptions &opt) {
    Graph g;
    return build_toy_graph(g, model, s, skel, cb, w, opt).loss;
}

TrainResult train_toy(const std::vector<ToySample> &data, const Skeleton &skel, const RotationCodebook &cb,
                      const LossWeights &w, const TrainOptions &opt) {
    if (data.empty())
        throw Error(ErrorKind::InsufficientData, "train_toy: empty dataset");
    const int grid = data.front().heatmap.cols();
    ToyModel model = ToyModel::init(static_cast<int>(data.front().features.size()), opt.hidden, cb.size(),
                                    skel.num_bones(), skel.num_joints(), grid, opt.seed);
    return train_toy(data, skel, cb, w, opt, std::move(model));
}

TrainResult train_toy(const std::vector<ToySample> &data, const Skeleton &skel, const RotationCodebook &cb,
                      const LossWeights &w, const TrainOptions &opt, ToyModel model) {
    if (data.empty())
        throw Error(ErrorKind::InsufficientData, "train_toy: empty dataset");
    if (opt.epochs < 0 || opt.batch_size < 1 || !(opt.lr >= 0.0))
        throw Error(ErrorKind::Validation, "train_toy: epochs >= 0, batch_size >= 1, lr >= 0 required");
    w.validate();

    TrainResult res;
    std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<ToyLoss> per_sample(data.size());

    for (int epoch = 0; epoch < opt.epochs && !res.diverged; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
            std::vector<MatrixXd> grads;
            for (std::size_t i = start; i < end; ++i) {
                Graph g;
                ToyGraph tg;
                try {
                    tg = build_toy_graph(g, model, data[order[i]], skel, cb, w, opt);
                } catch (const Error &e) {
                    if (e.kind() != ErrorKind::DegenerateInput)
                        throw;
                    res.diverged = true;
                    break;
                }
                per_sample[order[i]] = tg.loss;
                if (!std::isfinite(tg.loss.total)) {
                    res.diverged = true;
                    break;
                }
                g.backward(tg.total);
                if (grads.empty()) {
                    for (NodeId id : tg.params)
                        grads.push_back(g.grad(id));
                } else {
                    for (std::size_t k = 0; k < grads.size(); ++k)
                        grads[k] += g.grad(tg.params[k]);
                }
            }
            if (res.diverged)
                break;
            const double step = opt.lr / static_cast<double>(end - start);
            model.w1 -= step * grads[0];
            model.b1 -= step * grads[1];
            model.w2 -= step * grads[2];
            model.b2 -= step * grads[3];
            model.w3 -= step * grads[4];
            model.b3 -= step * grads[5];
            model.residual -= step * grads[6];
            if (!model.finite()) {
                res.diverged = true;
                break;
            }
        }
        if (res.diverged)
            break;
        ToyLoss mean;
        for (const ToyLoss &l : per_sample) {
            mean.total += l.total;
            mean.rotg += l.rotg;
            mean.rotb += l.rotb;
            mean.rot += l.rot;
            mean.pos += l.pos;
            mean.hm += l.hm;
        }
        const double inv = 1.0 / static_cast<double>(per_sample.size());
        mean = {mean.total * inv, mean.rotg * inv, mean.rotb * inv, mean.rot * inv, mean.pos * inv, mean.hm * inv};
        res.curve.push_back(mean);
    }
    res.model = std::move(model);
    return res;
}

int predict_class(const ToyModel &model, const VectorXd &features) {
    if (features.size() != model.w1.cols())
        throw Error(ErrorKind::ShapeMismatch, "feature length does not match toy model");
    const VectorXd h = (model.w1 * features + model.b1).array().tanh().matrix();
    const VectorXd logits = model.w2 * h + model.b2;
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.size(); ++k) {
        if (logits[k] > logits[best])
            best = k;
    }
    return static_cast<int>(best);
}

double classification_accuracy(const ToyModel &model, const std::vector<ToySample> &data) {
    if (data.empty())
        return 0.0;
    int hits = 0;
    for (const ToySample &s : data)
        hits += predict_class(model, s.features) == s.label ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::string loss_csv(const std::vector<ToyLoss> &curve) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,total,rotg,rotb,rot,pos,hm\n";
    for (std::size_t e = 0; e < curve.size(); ++e) {
        const ToyLoss &l = curve[e];
        out << e << ',' << l.total << ',' << l.rotg << ',' << l.rotb << ',' << l.rot << ',' << l.pos << ','
            << l.hm << '\n';
    }
    return out.str();
}

void write_loss_csv(const std::vector<ToyLoss> &curve, const std::string &path) {
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::IO, "cannot write " + path);
    out << loss_csv(curve);
}

namespace {

json matrix_json(const MatrixXd &m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

MatrixXd matrix_from(const json &j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty())
        return {};
    MatrixXd m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != static_cast<std::size_t>(m.cols()))
            throw Error(ErrorKind::ShapeMismatch, "checkpoint: ragged matrix");
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            m(r, c) = rows[r][c];
    }
    return m;
}

json vector_json(const VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd vector_from(const json &j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(v.data(), v.size());
}

} // namespace

void write_checkpoint(const ToyModel &m, const std::string &path) {
    write_json_file({{"w1", matrix_json(m.w1)},
                     {"b1", vector_json(m.b1)},
                     {"w2", matrix_json(m.w2)},
                     {"b2", vector_json(m.b2)},
                     {"w3", matrix_json(m.w3)},
                     {"b3", vector_json(m.b3)},
                     {"residual", matrix_json(m.residual)}},
                    path);
}

ToyModel read_checkpoint(const std::string &path) {
    const json j = read_json_file(path);
    ToyModel m;
    try {
        m.w1 = matrix_from(j.at("w1"));
        m.b1 = vector_from(j.at("b1"));
        m.w2 = matrix_from(j.at("w2"));
        m.b2 = vector_from(j.at("b2"));
        m.w3 = matrix_from(j.at("w3"));
        m.b3 = vector_from(j.at("b3"));
        m.residual = matrix_from(j.at("residual"));
    } catch (const json::exception &e) {
        throw Error(ErrorKind::Validation, std::string("checkpoint: ") + e.what());
    }
    if (!m.finite())
        throw Error(ErrorKind::Validation, "checkpoint: non-finite parameters");
    return m;
}

} // namespace skelpose
