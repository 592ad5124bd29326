#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "skelpose/skeleton.h"

namespace skelpose {

// H x W grid indexed (row, col); row is the vertical image axis.
using Heatmap = Eigen::MatrixXd;

inline constexpr int kDefaultGrid = 64;
inline constexpr double kDefaultSigma = 1.0;
inline constexpr double kDefaultTemperature = 0.1;
inline constexpr double kDefaultVolumeSide = 2200.0; // mm
inline constexpr double kDefaultProjectionWidth = 16.0;

// Per-joint xy maps (x on columns, y on rows) and zy maps (z on columns,
// y on rows); both stacks share the vertical axis.
struct CrossHeatmap {
    std::vector<Heatmap> xy;
    std::vector<Heatmap> zy;

    int num_joints() const { return static_cast<int>(xy.size()); }
    int rows() const { return xy.empty() ? 0 : static_cast<int>(xy.front().rows()); }
    int cols() const { return xy.empty() ? 0 : static_cast<int>(xy.front().cols()); }
    bool well_formed() const;
};

// Axis-aligned box in mm mapped linearly onto the pixel grid: the min corner
// lands on pixel 0 and the box center on pixel W/2.
struct VolumeBounds {
    Vec3 min = Vec3::Constant(-kDefaultVolumeSide / 2);
    Vec3 max = Vec3::Constant(kDefaultVolumeSide / 2);

    static VolumeBounds cube(const Vec3 &center, double side = kDefaultVolumeSide);
    Vec3 extent() const { return max - min; }
    bool contains(const Vec3 &p) const;
};

// Pixel coordinate of a world coordinate along one axis of the grid.
double world_to_pixel(double v, double lo, double hi, int cells);
double pixel_to_world(double p, double lo, double hi, int cells);

Heatmap render_gaussian(const Vec2 &center, int rows, int cols, double sigma);
// ∂L/∂center given ∂L/∂map.
Vec2 render_gaussian_backward(const Vec2 &center, double sigma, const Heatmap &upstream);

struct EncodedCross {
    CrossHeatmap maps;
    std::vector<bool> out_of_bounds;
};

EncodedCross encode_cross(const Joints &joints, const VolumeBounds &bounds, int grid = kDefaultGrid,
                          double sigma = kDefaultSigma);

struct SoftArgmax {
    Vec2 uv = Vec2::Zero(); // (column, row), subpixel
    bool uniform = false;   // map was flat; uv is the grid center
};

// Expected pixel coordinate under the spatial softmax of h / τ. The softmax
// weight of the map minimum is subtracted from every pixel, so flat background
// carries no weight and does not bias the estimate toward the grid center.
SoftArgmax soft_argmax2d(const Heatmap &h, double temperature = kDefaultTemperature);
Heatmap soft_argmax2d_backward(const Heatmap &h, double temperature, const Vec2 &upstream);

struct DecodedCross {
    Joints joints;
    std::vector<bool> degenerate;
};

// x from the xy map, z from the zy map, y the mean of both maps' row estimate.
DecodedCross decode_cross(const CrossHeatmap &ch, const VolumeBounds &bounds,
                          double temperature = kDefaultTemperature);

// Orthographic xy projection centred on the joints' bounding box and scaled so
// the larger box side spans 90% of target_width.
std::vector<Vec2> project_to_plane(const Joints &joints, double target_width = kDefaultProjectionWidth);
Joints project_to_plane_backward(const Joints &joints, double target_width, const std::vector<Vec2> &upstream);

inline std::size_t cross_heatmap_values(std::size_t joints, std::size_t rows, std::size_t cols) {
    return 2 * joints * rows * cols;
}
inline std::size_t volumetric_heatmap_values(std::size_t joints, std::size_t rows, std::size_t cols,
                                             std::size_t depth) {
    return joints * rows * cols * depth;
}

// "CHM1" little-endian binary: magic, u32 m, u32 H, u32 W, then 2·m·H·W
// float32 row-major values (xy stack then zy stack).
void write_cross_heatmap(const CrossHeatmap &ch, const std::string &path);
CrossHeatmap read_cross_heatmap(const std::string &path);
std::vector<unsigned char> serialize_cross_heatmap(const CrossHeatmap &ch);
CrossHeatmap deserialize_cross_heatmap(const std::vector<unsigned char> &bytes);

} // namespace skelpose
