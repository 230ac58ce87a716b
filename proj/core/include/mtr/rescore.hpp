#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mtr/eval.hpp"
#include "mtr/geometry.hpp"

namespace mtr {

struct LinearSvm {
    std::vector<double> weights;
    double bias = 0.0;
    double C = 1.0;
    std::uint64_t seed = 0;

    friend bool operator==(const LinearSvm&, const LinearSvm&) = default;
};

struct SvmTrainConfig {
    double C = 1.0;
    std::size_t iterations = 10000;
    std::uint64_t seed = 0;
    // Problems up to this size use exact full-batch subgradients; larger ones
    // sample minibatches of this size.
    std::size_t batch_size = 512;
};

struct SvmTrainResult {
    LinearSvm model;
    std::vector<double> objective_trace;  // best objective so far, at each checkpoint
};

/// Minimizes 0.5 * ||w||^2 + C * sum_i max(0, 1 - y_i (w . x_i + b)).
///
/// Projected subgradient steps on w (step 1 / (lambda t) on the rescaled
/// objective, lambda = 1 / (C n)) with the bias solved exactly for the
/// current w; suffix-averaged iterates. Requires both labels present.
SvmTrainResult svm_train_traced(std::span<const std::vector<double>> features, std::span<const int> labels,
                                const SvmTrainConfig& cfg = {});
LinearSvm svm_train(std::span<const std::vector<double>> features, std::span<const int> labels,
                    const SvmTrainConfig& cfg = {});

double svm_score(const LinearSvm& model, std::span<const double> feature);

double svm_objective(const LinearSvm& model, std::span<const std::vector<double>> features,
                     std::span<const int> labels);

/// Bias minimizing the hinge sum for fixed margins m_i = w . x_i (midpoint of
/// the optimal interval).
double optimal_bias(std::span<const double> margins, std::span<const int> labels);

// Versioned binary: "MTRSVM\0\0", u32 version, u64 count, then per model
// u64 dim, f64 weights..., f64 bias, f64 C, u64 seed.
inline constexpr std::uint32_t kSvmFileVersion = 1;
std::string encode_svm_set(std::span<const LinearSvm> models);
std::vector<LinearSvm> decode_svm_set(const std::string& bytes);
void save_svm_set(const std::filesystem::path& path, std::span<const LinearSvm> models);
std::vector<LinearSvm> load_svm_set(const std::filesystem::path& path);

// --- per-keypoint confidence ------------------------------------------------

struct KeypointRegion {
    std::size_t image_id = 0;
    std::vector<Keypoint> predicted;  // image coordinates, one per keypoint type
};

struct KeypointSvmSet {
    std::vector<std::size_t> positives;  // region indices
    std::vector<std::size_t> negatives;
};

/// Per keypoint type: regions whose prediction lies within alpha * H of a
/// visible ground-truth keypoint (of any instance with a torso height) are
/// positives, every other region is a negative.
std::vector<KeypointSvmSet> build_keypoint_svm_sets(std::span<const KeypointRegion> regions,
                                                    const GroundTruthInstances& gts, double alpha = 0.2);

// --- context rescoring ------------------------------------------------------

struct ObjectDetection {
    Box box;
    std::size_t object_class = 0;
    double score = 0.0;
};

struct ContextFeature {
    double own_score = 0.0;
    std::vector<double> others_max;  // per action, over the other people in the image
    std::vector<double> object_max;  // per context object, over detections overlapping the region

    std::vector<double> to_vector() const;
};

inline constexpr double kContextObjectOverlap = 0.1;

/// Missing context (no other people, no overlapping objects) is filled with 0.
ContextFeature build_context_feature(const Box& region, double own_score,
                                     std::span<const std::vector<double>> other_instance_scores,
                                     std::span<const ObjectDetection> objects, std::size_t num_actions,
                                     std::size_t num_objects);

/// features[box][action] -> rescored[box][action] = margin of the action's SVM.
std::vector<std::vector<double>> rescore_actions(const std::vector<std::vector<ContextFeature>>& features,
                                                 std::span<const LinearSvm> per_action);

}  // namespace mtr
