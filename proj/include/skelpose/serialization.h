#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "skelpose/assembly.h"
#include "skelpose/codebook.h"
#include "skelpose/lifting.h"
#include "skelpose/objectives.h"
#include "skelpose/skeleton.h"
#include "skelpose/skinning.h"

namespace skelpose {

using json = nlohmann::json;

json read_json_file(const std::string &path);
void write_json_file(const json &j, const std::string &path);

// Rotations are stored as 9 numbers, row-major.
json matrix_to_json(const Mat3 &m);
Mat3 matrix_from_json(const json &j);
RotationMatrix rotation_from_json(const json &j); // validated
json vec_to_json(const Vec3 &v);
Vec3 vec3_from_json(const json &j);

// {"joints": [{"name", "parent", "rest": [x, y, z]}, ...]}
json skeleton_to_json(const Skeleton &skel);
Skeleton skeleton_from_json(const json &j);
Skeleton read_skeleton(const std::string &path);

// {"global": [9], "bones": [[9], ...]}
json pose_to_json(const Pose &pose);
Pose pose_from_json(const json &j, const Skeleton &skel);

// Pose fields plus "x": [[3], ...].
json final_pose_to_json(const FinalPose &pose);
FinalPose final_pose_from_json(const json &j, const Skeleton &skel);

// {"K", "centers": [[9], ...]}
json codebook_to_json(const RotationCodebook &cb);
RotationCodebook codebook_from_json(const json &j);

json pca_basis_to_json(const PCABasis &basis);
PCABasis pca_basis_from_json(const json &j);

json lift_result_to_json(const LiftResult &r);

// {"id", "keypoints": [[u, v], ...]}
json keypoint_sample_to_json(const KeypointSample &s);
KeypointSample keypoint_sample_from_json(const json &j);

json annotated_sample_to_json(const AnnotatedSample &a);

// [[[bone, w], ...], ...], one entry per vertex.
json skin_weights_to_json(const std::vector<VertexWeights> &w);
std::vector<VertexWeights> skin_weights_from_json(const json &j);

json metrics_to_json(const SampleMetrics &m);
// {"samples": [...], "aggregate": {...}}
json metrics_report(const std::vector<SampleMetrics> &samples);

} // namespace skelpose
