#include "skelpose/codebook.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "skelpose/errors.h"

namespace skelpose {

ClassProbabilities::ClassProbabilities(std::vector<double> p) : p_(std::move(p)) {
    if (p_.empty())
        throw Error(ErrorKind::Validation, "class probabilities: empty");
    double s = 0.0;
    for (double v : p_) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw Error(ErrorKind::Validation, "class probabilities: negative or non-finite entry");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
        throw Error(ErrorKind::Validation, "class probabilities: do not sum to one");
}

ClassProbabilities ClassProbabilities::one_hot(int k, int num_classes) {
    std::vector<double> p(num_classes, 0.0);
    p.at(k) = 1.0;
    return ClassProbabilities(std::move(p));
}

ClassProbabilities ClassProbabilities::uniform(int num_classes) {
    return ClassProbabilities(std::vector<double>(num_classes, 1.0 / num_classes));
}

ClassProbabilities ClassProbabilities::softmax(const std::vector<double> &logits) {
    if (logits.empty())
        throw Error(ErrorKind::Validation, "softmax: empty logits");
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        s += p[i];
    }
    for (double &v : p)
        v /= s;
    return ClassProbabilities(std::move(p));
}

namespace {

int nearest_center(const std::vector<LinearTransform> &centers, const Mat3 &r, double *dist2 = nullptr) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centers.size(); ++k) {
        const double d = (centers[k] - r).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(k);
        }
    }
    if (dist2)
        *dist2 = best_d;
    return best;
}

} // namespace

RotationCodebook build_codebook(const std::vector<RotationMatrix> &rotations, int k, std::uint64_t seed,
                                const KMeansOptions &opt) {
    if (k < 1)
        throw Error(ErrorKind::Validation, "build_codebook: K must be >= 1");
    if (static_cast<int>(rotations.size()) < k)
        throw Error(ErrorKind::InsufficientData, "build_codebook: fewer samples than clusters");

    const std::size_t n = rotations.size();
    std::mt19937_64 rng(seed);

    // k-means++ seeding.
    std::vector<LinearTransform> centers;
    centers.reserve(k);
    centers.push_back(rotations[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)].matrix());
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest_center(centers, rotations[i].matrix(), &d2[i]);
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total <= 0.0) {
            // All samples coincide with existing centers.
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        } else {
            double target = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (pick = 0; pick + 1 < n; ++pick) {
                target -= d2[pick];
                if (target < 0.0)
                    break;
            }
        }
        centers.push_back(rotations[pick].matrix());
    }

    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const int c = nearest_center(centers, rotations[i].matrix());
            if (c != assign[i]) {
                assign[i] = c;
                changed = true;
            }
        }
        if (!changed)
            break;

        std::vector<Mat3> sums(k, Mat3::Zero());
        std::vector<int> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums[assign[i]] += rotations[i].matrix();
            ++counts[assign[i]];
        }
        for (int c = 0; c < k; ++c) {
            // An emptied cluster keeps its previous center.
            if (counts[c] > 0)
                centers[c] = sums[c] / counts[c];
        }
    }
    return RotationCodebook{std::move(centers)};
}

LinearTransform blend(const RotationCodebook &cb, const ClassProbabilities &p) {
    if (p.size() != cb.size())
        throw Error(ErrorKind::LengthMismatch, "blend: probability count does not match codebook size");
    Mat3 out = Mat3::Zero();
    for (int k = 0; k < cb.size(); ++k)
        out += p[k] * cb.centers[k];
    return out;
}

std::vector<double> blend_backward(const RotationCodebook &cb, const Mat3 &upstream) {
    std::vector<double> g(cb.size());
    for (int k = 0; k < cb.size(); ++k)
        g[k] = cb.centers[k].cwiseProduct(upstream).sum();
    return g;
}

Classification classify(const RotationCodebook &cb, const Mat3 &r) {
    if (cb.centers.empty())
        throw Error(ErrorKind::Validation, "classify: empty codebook");
    const int k = nearest_center(cb.centers, r);
    return Classification{k, ClassProbabilities::one_hot(k, cb.size())};
}

double within_cluster_ss(const RotationCodebook &cb, const std::vector<RotationMatrix> &rotations) {
    double s = 0.0;
    for (const RotationMatrix &r : rotations) {
        double d = 0.0;
        nearest_center(cb.centers, r.matrix(), &d);
        s += d;
    }
    return s;
}

} // namespace skelpose
