#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mtr/geometry.hpp"
#include "mtr/labeling.hpp"

namespace mtr {

struct TaskWeights {
    double detection = 0.0;
    double pose = 0.0;
    double action = 0.0;

    bool trainable() const noexcept;
    void validate() const;

    friend bool operator==(const TaskWeights&, const TaskWeights&) = default;
};

TaskWeights operator*(double a, const TaskWeights& w);

enum class FeatureLayer { Fc6, Fc7, Softmax };

/// Result of one network forward pass.
struct HeadOutputs {
    std::array<double, 2> det_probs{0.5, 0.5};  // (p0, p1)
    std::vector<double> pose_coords;            // x0, y0, x1, y1, ... normalized to the region
    std::vector<double> action_probs;
    std::vector<double> fc6;
    std::vector<double> fc7;

    double person_prob() const noexcept { return det_probs[1]; }

    /// Feature vector for SVM rescoring; Softmax concatenates both heads' probabilities.
    std::vector<double> feature(FeatureLayer layer) const;

    std::vector<NormalizedKeypoint> keypoints() const;
};

inline constexpr double kLogClamp = 1e-12;

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

struct LossValue {
    double value = 0.0;
    std::vector<double> grad;  // w.r.t. pre-softmax logits for the classification heads
    bool clamped = false;
};

LossValue loss_detection(std::span<const double, 2> det_probs, int label);
LossValue loss_pose(std::span<const double> pose_coords, std::span<const NormalizedKeypoint> targets);
LossValue loss_action(std::span<const double> action_probs, std::optional<std::size_t> label);

struct HeadGradients {
    std::array<double, 2> det_logits{0.0, 0.0};
    std::vector<double> pose;
    std::vector<double> action_logits;
};

struct TotalLoss {
    double total = 0.0;
    double detection = 0.0;  // unweighted per-head values
    double pose = 0.0;
    double action = 0.0;
    HeadGradients grads;  // already scaled by the task weights
    std::size_t clamp_count = 0;
};

/// lambda_D * loss_D + lambda_P * loss_P + lambda_A * loss_A. Heads with an
/// inactive label (ignore band, no pose targets, no action label) contribute
/// an exact zero to both the value and the gradients, as do zero weights.
TotalLoss loss_total(const HeadOutputs& outputs, const RegionSample& sample, const TaskWeights& weights);

}  // namespace mtr
