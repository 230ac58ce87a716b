#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mtr/geometry.hpp"

namespace mtr {

/// Ground-truth person. Keypoints, when present, follow the 13-keypoint
/// schema; action is a zero-based index into the action vocabulary.
struct Instance {
    Box box;
    std::optional<std::vector<Keypoint>> keypoints;
    std::optional<std::size_t> action;
};

/// Throws std::invalid_argument if the instance breaks its invariants.
void validate_instance(const Instance& instance, std::size_t num_actions);

enum class DetLabel { Negative, Positive, Ignore };

struct RegionSample {
    Box region;
    DetLabel det_label = DetLabel::Negative;
    std::optional<std::vector<NormalizedKeypoint>> pose_targets;
    std::optional<std::size_t> action_label;
    std::optional<std::size_t> matched_instance;

    bool pose_active() const noexcept { return pose_targets.has_value(); }
    bool action_active() const noexcept { return action_label.has_value(); }
};

// Overlap thresholds. All comparisons are strict: an IoU equal to a
// threshold never satisfies it.
struct LabelThresholds {
    double det_positive = 0.5;  // positive iff max IoU > this
    double det_negative = 0.3;  // negative iff max IoU < this
    double pose = 0.5;
    double action = 0.7;
};

struct InstanceMatch {
    std::size_t index;
    double iou;
};

/// Max-IoU instance for `region`; lowest index wins exact ties.
std::optional<InstanceMatch> best_match(const Box& region, std::span<const Instance> instances);

DetLabel label_detection(const Box& region, std::span<const Instance> instances, const LabelThresholds& t = {});

struct PoseLabel {
    std::size_t instance;
    std::vector<NormalizedKeypoint> targets;
};

std::optional<PoseLabel> label_pose(const Box& region, std::span<const Instance> instances,
                                    const LabelThresholds& t = {});

std::optional<std::size_t> label_action(const Box& region, std::span<const Instance> instances,
                                        const LabelThresholds& t = {});

struct JitterRange {
    double center = 0.2;     // center shift as a fraction of width / height
    double log_scale = 0.2;  // half-width of the uniform log-scale perturbation
};

/// `count` perturbed copies of `box`, each with iou(copy, box) >= min_iou.
///
/// Rejection sampling over uniform center and log-scale perturbations.
/// Throws std::runtime_error after 10000 * count rejected draws.
std::vector<Box> jitter_augment(const Box& box, std::size_t count, double min_iou, std::uint64_t seed,
                                const JitterRange& range = {});

RegionSample label_region(const Box& region, std::span<const Instance> instances, const LabelThresholds& t = {});

std::vector<RegionSample> build_samples(std::span<const Box> proposals, std::span<const Instance> instances,
                                        const LabelThresholds& t = {});

}  // namespace mtr
