#include "mtr/labeling.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace mtr {

void validate_instance(const Instance& instance, std::size_t num_actions) {
    if (instance.keypoints && instance.keypoints->size() != kNumKeypoints) {
        throw std::invalid_argument("Instance: expected 13 keypoints, got " +
                                    std::to_string(instance.keypoints->size()));
    }
    if (instance.action && *instance.action >= num_actions) {
        throw std::invalid_argument("Instance: action index " + std::to_string(*instance.action) +
                                    " outside vocabulary of " + std::to_string(num_actions));
    }
}

std::optional<InstanceMatch> best_match(const Box& region, std::span<const Instance> instances) {
    std::optional<InstanceMatch> best;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const double o = iou(region, instances[i].box);
        if (!best || o > best->iou) best = InstanceMatch{i, o};
    }
    return best;
}

DetLabel label_detection(const Box& region, std::span<const Instance> instances, const LabelThresholds& t) {
    const auto m = best_match(region, instances);
    const double o = m ? m->iou : 0.0;
    if (o > t.det_positive) return DetLabel::Positive;
    if (o < t.det_negative) return DetLabel::Negative;
    return DetLabel::Ignore;
}

std::optional<PoseLabel> label_pose(const Box& region, std::span<const Instance> instances,
                                    const LabelThresholds& t) {
    const auto m = best_match(region, instances);
    if (!m || !(m->iou > t.pose)) return std::nullopt;
    const auto& inst = instances[m->index];
    if (!inst.keypoints) return std::nullopt;
    return PoseLabel{m->index, normalize_keypoints(*inst.keypoints, region)};
}

std::optional<std::size_t> label_action(const Box& region, std::span<const Instance> instances,
                                        const LabelThresholds& t) {
    const auto m = best_match(region, instances);
    if (!m || !(m->iou > t.action)) return std::nullopt;
    return instances[m->index].action;
}

std::vector<Box> jitter_augment(const Box& box, std::size_t count, double min_iou, std::uint64_t seed,
                                const JitterRange& range) {
    if (!(min_iou > 0.0 && min_iou < 1.0)) throw std::invalid_argument("jitter_augment: min_iou must lie in (0,1)");
    if (count == 0) throw std::invalid_argument("jitter_augment: count must be positive");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<Box> out;
    out.reserve(count);
    const std::size_t budget = 10000 * count;
    for (std::size_t draws = 0; out.size() < count; ++draws) {
        if (draws >= budget) {
            throw std::runtime_error("jitter_augment: min_iou " + std::to_string(min_iou) +
                                     " unreachable within the perturbation range");
        }
        const double cx = box.center_x() + range.center * box.width() * unit(rng);
        const double cy = box.center_y() + range.center * box.height() * unit(rng);
        const double w = box.width() * std::exp(range.log_scale * unit(rng));
        const double h = box.height() * std::exp(range.log_scale * unit(rng));
        Box candidate = Box::from_center(cx, cy, w, h);
        if (iou(candidate, box) >= min_iou) out.push_back(candidate);
    }
    return out;
}

RegionSample label_region(const Box& region, std::span<const Instance> instances, const LabelThresholds& t) {
    RegionSample s{region};
    const auto m = best_match(region, instances);
    const double o = m ? m->iou : 0.0;
    s.det_label = o > t.det_positive ? DetLabel::Positive : (o < t.det_negative ? DetLabel::Negative : DetLabel::Ignore);
    if (!m) return s;
    const auto& inst = instances[m->index];
    if (o > t.pose && inst.keypoints) s.pose_targets = normalize_keypoints(*inst.keypoints, region);
    if (o > t.action && inst.action) s.action_label = inst.action;
    if (s.det_label == DetLabel::Positive || s.pose_active() || s.action_active()) s.matched_instance = m->index;
    return s;
}

std::vector<RegionSample> build_samples(std::span<const Box> proposals, std::span<const Instance> instances,
                                        const LabelThresholds& t) {
    std::vector<RegionSample> out;
    out.reserve(proposals.size());
    for (const auto& p : proposals) out.push_back(label_region(p, instances, t));
    return out;
}

}  // namespace mtr
