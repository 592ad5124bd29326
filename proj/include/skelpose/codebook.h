#pragma once

#include <cstdint>
#include <vector>

#include "skelpose/rotations.h"

namespace skelpose {

// Probability vector over codebook classes; validated to be nonnegative and
// sum to one within 1e-9.
class ClassProbabilities {
  public:
    explicit ClassProbabilities(std::vector<double> p);

    static ClassProbabilities one_hot(int k, int num_classes);
    static ClassProbabilities uniform(int num_classes);
    static ClassProbabilities softmax(const std::vector<double> &logits);

    const std::vector<double> &values() const { return p_; }
    int size() const { return static_cast<int>(p_.size()); }
    double operator[](int k) const { return p_[k]; }

  private:
    std::vector<double> p_;
};

// Cluster centers of global rotations in the 9-dimensional Frobenius
// embedding. Centers are plain means and are not re-orthonormalized.
struct RotationCodebook {
    std::vector<LinearTransform> centers;
    int size() const { return static_cast<int>(centers.size()); }
};

struct KMeansOptions {
    int max_iterations = 100;
};

// k-means with k-means++ seeding; deterministic given the seed.
RotationCodebook build_codebook(const std::vector<RotationMatrix> &rotations, int k, std::uint64_t seed,
                                const KMeansOptions &opt = {});

// Σ_k p_k C_k.
LinearTransform blend(const RotationCodebook &cb, const ClassProbabilities &p);
// ∂L/∂p_k = <C_k, ∂L/∂R'>_F.
std::vector<double> blend_backward(const RotationCodebook &cb, const Mat3 &upstream);

struct Classification {
    int index = 0;
    ClassProbabilities probabilities;
};

// Nearest center in Frobenius distance; ties resolve to the lowest index.
Classification classify(const RotationCodebook &cb, const Mat3 &r);

// Sum over samples of the squared distance to the assigned center.
double within_cluster_ss(const RotationCodebook &cb, const std::vector<RotationMatrix> &rotations);

} // namespace skelpose
