#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"

#include "skelpose/assembly.h"
#include "skelpose/errors.h"
#include "skelpose/gradcheck_suite.h"
#include "skelpose/heatmaps.h"
#include "skelpose/lifting.h"
#include "skelpose/objectives.h"
#include "skelpose/review.h"
#include "skelpose/review_service.h"
#include "skelpose/serialization.h"
#include "skelpose/skinning.h"
#include "skelpose/trainer.h"

using namespace skelpose;
namespace fs = std::filesystem;

namespace {

struct Config {
    std::string skeleton;
    std::string codebook;
    std::string bounds;
    std::string weights;
    std::uint64_t seed = 0;
};

Skeleton load_skeleton(const Config &c) { return c.skeleton.empty() ? default_skeleton() : read_skeleton(c.skeleton); }

std::vector<double> parse_numbers(const std::string &s, std::size_t expected, const char *flag) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size())
                throw std::invalid_argument(tok);
        } catch (const std::exception &) {
            throw Error(ErrorKind::Usage, std::string(flag) + ": not a number: " + tok);
        }
    }
    if (out.size() != expected)
        throw Error(ErrorKind::Usage,
                    std::string(flag) + ": expected " + std::to_string(expected) + " comma-separated numbers");
    return out;
}

// min_x,min_y,min_z,max_x,max_y,max_z in mm.
VolumeBounds load_bounds(const Config &c) {
    if (c.bounds.empty())
        return {};
    const auto v = parse_numbers(c.bounds, 6, "--bounds");
    VolumeBounds b;
    b.min = Vec3(v[0], v[1], v[2]);
    b.max = Vec3(v[3], v[4], v[5]);
    if (!(b.max.array() > b.min.array()).all())
        throw Error(ErrorKind::Validation, "--bounds: max must exceed min on every axis");
    return b;
}

LossWeights load_weights(const Config &c) {
    LossWeights w;
    if (!c.weights.empty()) {
        const auto v = parse_numbers(c.weights, 4, "--weights");
        w = {v[0], v[1], v[2], v[3]};
    }
    w.validate();
    return w;
}

json joints_json(const Joints &x) {
    json a = json::array();
    for (const Vec3 &p : x)
        a.push_back(vec_to_json(p));
    return a;
}

Joints joints_from(const json &j) {
    const json &a = j.is_object() ? j.at("x") : j;
    if (!a.is_array())
        throw Error(ErrorKind::Validation, "expected an array of joints");
    Joints out;
    for (const json &p : a)
        out.push_back(vec3_from_json(p));
    return out;
}

void print(const json &j) { std::cout << j.dump(2) << '\n'; }

std::vector<fs::path> json_files(const std::string &dir) {
    if (!fs::is_directory(dir))
        throw Error(ErrorKind::IO, "not a directory: " + dir);
    std::vector<fs::path> out;
    for (const auto &e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json")
            out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Three well-separated global-rotation clusters for the toy trainer.
RotationCodebook toy_clusters() {
    RotationCodebook cb;
    cb.centers.push_back(Mat3::Identity());
    cb.centers.push_back(from_axis_angle(Vec3::UnitY(), 100.0 * std::numbers::pi / 180.0).matrix());
    cb.centers.push_back(from_axis_angle(Vec3::UnitX(), 70.0 * std::numbers::pi / 180.0).matrix());
    return cb;
}

int run(int argc, char **argv) {
    CLI::App app{"Skeleton pose toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Config cfg;
    app.add_option("--skeleton", cfg.skeleton, "skeleton JSON (default: built-in 16-joint skeleton)");
    app.add_option("--codebook", cfg.codebook, "rotation codebook JSON");
    app.add_option("--bounds", cfg.bounds, "volume bounds min_x,min_y,min_z,max_x,max_y,max_z (mm)");
    app.add_option("--seed", cfg.seed, "random seed");
    app.add_option("--weights", cfg.weights, "loss weights alpha,beta,gamma,lambda");

    std::string pose_file, out_file, heatmap_file, pred_dir, gt_dir, keypoints_file, basis_file, out_dir,
        targets_file, mesh_file, skin_weights_file, batch_dir, static_dir, csv_file, checkpoint_file, poses_file;
    int grid = kDefaultGrid, components = 10, port = 8080, instances = 100, k = 200, samples = 200, epochs = 40;
    double sigma = kDefaultSigma, temperature = kDefaultTemperature, lr = 0.05, noise = 0.0, l_ave = 0.0;

    auto *skeleton_cmd = app.add_subcommand("skeleton", "print the skeleton as JSON");

    auto *fk = app.add_subcommand("fk", "forward kinematics of a pose");
    fk->add_option("pose", pose_file)->required();

    auto *encode = app.add_subcommand("encode", "pose -> cross heatmaps (CHM1)");
    encode->add_option("pose", pose_file)->required();
    encode->add_option("-o,--out", out_file)->required();
    encode->add_option("--grid", grid);
    encode->add_option("--sigma", sigma);

    auto *decode = app.add_subcommand("decode", "cross heatmaps -> joints");
    decode->add_option("heatmap", heatmap_file)->required();
    decode->add_option("--temperature", temperature);

    auto *eval = app.add_subcommand("eval", "metrics of predicted poses against ground truth");
    eval->add_option("pred_dir", pred_dir)->required();
    eval->add_option("gt_dir", gt_dir)->required();
    eval->add_option("--l-ave", l_ave, "bone-length sum for normalization (default: skeleton rest sum)");

    auto *lift = app.add_subcommand("lift", "lift 2D keypoints and fit the skeleton");
    lift->add_option("keypoints", keypoints_file, "JSONL, one {id, keypoints} per line")->required();
    lift->add_option("basis", basis_file)->required();
    lift->add_option("-o,--out", out_dir)->required();
    lift->add_option("--components", components);

    auto *fit = app.add_subcommand("fit", "fit the skeleton to 3D joint targets");
    fit->add_option("targets", targets_file)->required();

    auto *train = app.add_subcommand("train-toy", "train the toy network on synthetic data");
    train->add_option("--samples", samples);
    train->add_option("--epochs", epochs);
    train->add_option("--lr", lr);
    train->add_option("--noise", noise, "feature noise (m)");
    train->add_option("--csv", csv_file)->required();
    train->add_option("--checkpoint", checkpoint_file)->required();

    auto *gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of every layer");
    gradcheck_cmd->add_option("--instances", instances);

    auto *skin_cmd = app.add_subcommand("skin", "skin a mesh to a pose, write OBJ");
    skin_cmd->add_option("pose", pose_file)->required();
    skin_cmd->add_option("-o,--out", out_file)->required();
    skin_cmd->add_option("--mesh", mesh_file, "bind-pose OBJ (default: built-in tube body)");
    skin_cmd->add_option("--skin-weights", skin_weights_file, "per-vertex weights JSON (default: automatic)");

    auto *serve = app.add_subcommand("serve", "HTTP review service over an annotated batch");
    serve->add_option("batch_dir", batch_dir)->required();
    serve->add_option("--port", port);
    serve->add_option("--static", static_dir);

    auto *build_cb = app.add_subcommand("build-codebook", "k-means over global rotations of poses");
    build_cb->add_option("poses", poses_file, "JSONL of poses")->required();
    build_cb->add_option("-k", k);

    auto *build_basis = app.add_subcommand("build-basis", "PCA basis from 3D joints");
    build_basis->add_option("poses", poses_file, "JSONL, one {x: [[x,y,z], ...]} per line")->required();
    build_basis->add_option("--components", components);

    auto *synth = app.add_subcommand("synth", "synthetic poses (JSONL of {global, bones, x})");
    synth->add_option("--samples", samples);
    synth->add_option("-o,--out", out_file)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        throw Error(ErrorKind::Usage, e.what());
    }
    load_bounds(cfg);
    load_weights(cfg);

    if (*skeleton_cmd) {
        print(skeleton_to_json(load_skeleton(cfg)));
    } else if (*fk) {
        const Skeleton skel = load_skeleton(cfg);
        const Pose p = pose_from_json(read_json_file(pose_file), skel);
        print({{"x", joints_json(p.joints)}});
    } else if (*encode) {
        const Skeleton skel = load_skeleton(cfg);
        const json j = read_json_file(pose_file);
        const Joints x = j.contains("x") ? final_pose_from_json(j, skel).joints : pose_from_json(j, skel).joints;
        const EncodedCross e = encode_cross(x, load_bounds(cfg), grid, sigma);
        write_cross_heatmap(e.maps, out_file);
        print({{"out_of_bounds", e.out_of_bounds}});
    } else if (*decode) {
        const DecodedCross d = decode_cross(read_cross_heatmap(heatmap_file), load_bounds(cfg), temperature);
        print({{"x", joints_json(d.joints)}, {"degenerate", d.degenerate}});
    } else if (*eval) {
        const Skeleton skel = load_skeleton(cfg);
        const double lave = l_ave > 0.0 ? l_ave : skel.total_rest_length();
        std::vector<SampleMetrics> rows;
        for (const fs::path &gp : json_files(gt_dir)) {
            const fs::path pp = fs::path(pred_dir) / gp.filename();
            if (!fs::exists(pp))
                throw Error(ErrorKind::IO, "missing prediction: " + pp.string());
            const FinalPose gt = final_pose_from_json(read_json_file(gp.string()), skel);
            const FinalPose pred = final_pose_from_json(read_json_file(pp.string()), skel);
            rows.push_back(evaluate_sample(gp.stem().string(), pred, gt, skel, lave));
        }
        if (rows.empty())
            throw Error(ErrorKind::InsufficientData, "no ground-truth poses in " + gt_dir);
        print(metrics_report(rows));
    } else if (*lift) {
        const Skeleton skel = load_skeleton(cfg);
        AnnotateOptions opt;
        opt.max_components = components;
        const auto results =
            annotate_batch(keypoints_file, pca_basis_from_json(read_json_file(basis_file)), skel, out_dir, opt);
        json summary = json::array();
        for (const AnnotatedSample &a : results)
            summary.push_back({{"id", a.id},
                               {"reprojection_error", a.lift.reprojection_error},
                               {"components", a.lift.coefficients.size()},
                               {"converged", a.lift.converged && a.fit_converged}});
        print({{"samples", summary}});
    } else if (*fit) {
        const Skeleton skel = load_skeleton(cfg);
        const FitResult r = fit_skeleton(joints_from(read_json_file(targets_file)), skel);
        json out = final_pose_to_json(final_pose_from(r.pose));
        out["energy"] = r.energy;
        out["converged"] = r.converged;
        print(out);
    } else if (*train) {
        const Skeleton skel = load_skeleton(cfg);
        const RotationCodebook cb = cfg.codebook.empty() ? toy_clusters()
                                                         : codebook_from_json(read_json_file(cfg.codebook));
        SyntheticOptions so;
        so.bounds = load_bounds(cfg);
        const auto data = make_synthetic_dataset(samples, skel, cb, noise, cfg.seed, so);
        TrainOptions to;
        to.epochs = epochs;
        to.lr = lr;
        to.seed = cfg.seed;
        to.bounds = so.bounds;
        const TrainResult r = train_toy(data, skel, cb, load_weights(cfg), to);
        write_loss_csv(r.curve, csv_file);
        write_checkpoint(r.model, checkpoint_file);
        print({{"epochs", r.curve.size()},
               {"initial_loss", r.curve.empty() ? 0.0 : r.curve.front().total},
               {"final_loss", r.curve.empty() ? 0.0 : r.curve.back().total},
               {"accuracy", classification_accuracy(r.model, data)},
               {"diverged", r.diverged}});
        if (r.diverged)
            return 3;
    } else if (*gradcheck_cmd) {
        const auto rows = run_gradcheck_suite(instances, cfg.seed);
        bool ok = true;
        std::printf("%-24s %9s %14s %8s  %s\n", "layer", "instances", "max_rel_err", "seconds", "result");
        for (const LayerCheck &r : rows) {
            std::printf("%-24s %9d %14.3e %8.2f  %s\n", r.layer.c_str(), r.instances, r.max_relative_error,
                        r.seconds, r.passed ? "PASS" : "FAIL");
            ok = ok && r.passed;
        }
        return ok ? 0 : 1;
    } else if (*skin_cmd) {
        const Skeleton skel = load_skeleton(cfg);
        const json j = read_json_file(pose_file);
        const FinalPose pose = j.contains("x") ? final_pose_from_json(j, skel) : final_pose_from(pose_from_json(j, skel));
        SkinnedMesh mesh;
        if (mesh_file.empty()) {
            mesh = make_demo_body(skel);
        } else {
            const ObjMesh obj = read_obj(mesh_file);
            mesh.vertices = obj.vertices;
            mesh.faces = obj.faces;
            mesh.bind_pose = final_pose_from(forward_kinematics(skel, RotationMatrix::identity(),
                                                                std::vector<RotationMatrix>(skel.num_bones())));
            mesh.weights = auto_weights(mesh.vertices, skel, mesh.bind_pose.joints);
        }
        if (!skin_weights_file.empty())
            mesh.weights = skin_weights_from_json(read_json_file(skin_weights_file));
        mesh.validate(skel.num_bones());
        export_obj(skin(mesh, skel, pose), mesh.faces, out_file);
    } else if (*serve) {
        ReviewStore store(batch_dir);
        ReviewService service(store, static_dir);
        const int bound = service.bind("127.0.0.1", port);
        if (bound < 0)
            throw Error(ErrorKind::IO, "cannot bind port " + std::to_string(port));
        std::cerr << "serving " << store.size() << " items on http://127.0.0.1:" << bound << '\n';
        service.listen_after_bind();
    } else if (*build_cb) {
        const Skeleton skel = load_skeleton(cfg);
        std::ifstream in(poses_file);
        if (!in)
            throw Error(ErrorKind::IO, "cannot open " + poses_file);
        std::vector<RotationMatrix> globals;
        std::string line;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                globals.push_back(rotation_from_json(json::parse(line).at("global")));
        }
        print(codebook_to_json(build_codebook(globals, k, cfg.seed)));
    } else if (*build_basis) {
        const Skeleton skel = load_skeleton(cfg);
        std::ifstream in(poses_file);
        if (!in)
            throw Error(ErrorKind::IO, "cannot open " + poses_file);
        std::vector<Joints> poses;
        std::string line;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                poses.push_back(joints_from(json::parse(line)));
        }
        print(pca_basis_to_json(build_pca_basis(poses, components, skel.root())));
    } else if (*synth) {
        const Skeleton skel = load_skeleton(cfg);
        const RotationCodebook cb = cfg.codebook.empty() ? toy_clusters()
                                                         : codebook_from_json(read_json_file(cfg.codebook));
        SyntheticOptions so;
        so.max_bone_deg = 30.0;
        const auto data = make_synthetic_dataset(samples, skel, cb, 0.0, cfg.seed, so);
        std::ofstream out(out_file);
        if (!out)
            throw Error(ErrorKind::IO, "cannot write " + out_file);
        for (const ToySample &s : data)
            out << final_pose_to_json(final_pose_from(s.pose)).dump() << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    try {
        return run(argc, argv);
    } catch (const Error &e) {
        std::cerr << json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump() << '\n';
        return e.kind() == ErrorKind::Usage ? 2 : 1;
    } catch (const json::exception &e) {
        std::cerr << json{{"error", "Validation"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    } catch (const std::exception &e) {
        std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
}
