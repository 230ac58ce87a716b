#include "mtr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mtr {

namespace {

double clamped_log(double p, bool& clamped) {
    if (p < kLogClamp) {
        clamped = true;
        return std::log(kLogClamp);
    }
    return std::log(p);
}

}  // namespace

bool TaskWeights::trainable() const noexcept { return detection > 0.0 || pose > 0.0 || action > 0.0; }

void TaskWeights::validate() const {
    if (!(detection >= 0.0 && pose >= 0.0 && action >= 0.0)) {
        throw std::invalid_argument("TaskWeights: weights must be non-negative");
    }
}

TaskWeights operator*(double a, const TaskWeights& w) { return {a * w.detection, a * w.pose, a * w.action}; }

std::vector<double> HeadOutputs::feature(FeatureLayer layer) const {
    switch (layer) {
        case FeatureLayer::Fc6:
            return fc6;
        case FeatureLayer::Fc7:
            return fc7;
        case FeatureLayer::Softmax: {
            std::vector<double> f(det_probs.begin(), det_probs.end());
            f.insert(f.end(), action_probs.begin(), action_probs.end());
            return f;
        }
    }
    return {};
}

std::vector<NormalizedKeypoint> HeadOutputs::keypoints() const {
    std::vector<NormalizedKeypoint> out(pose_coords.size() / 2);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = {pose_coords[2 * k], pose_coords[2 * k + 1], true};
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

LossValue loss_detection(std::span<const double, 2> det_probs, int label) {
    if (label != 0 && label != 1) throw std::invalid_argument("loss_detection: label must be 0 or 1");
    LossValue out;
    out.value = -clamped_log(det_probs[static_cast<std::size_t>(label)], out.clamped);
    out.grad = {det_probs[0] - (label == 0 ? 1.0 : 0.0), det_probs[1] - (label == 1 ? 1.0 : 0.0)};
    return out;
}

LossValue loss_pose(std::span<const double> pose_coords, std::span<const NormalizedKeypoint> targets) {
    if (pose_coords.size() != 2 * targets.size()) {
        throw std::invalid_argument("loss_pose: expected 2|K| coordinates for |K| targets");
    }
    LossValue out;
    out.grad.assign(pose_coords.size(), 0.0);
    if (targets.empty()) return out;
    const double inv_k = 1.0 / static_cast<double>(targets.size());
    for (std::size_t k = 0; k < targets.size(); ++k) {
        if (!targets[k].visible) continue;
        const double dx = pose_coords[2 * k] - targets[k].x;
        const double dy = pose_coords[2 * k + 1] - targets[k].y;
        out.value += dx * dx + dy * dy;
        out.grad[2 * k] = 2.0 * dx * inv_k;
        out.grad[2 * k + 1] = 2.0 * dy * inv_k;
    }
    out.value *= inv_k;
    return out;
}

LossValue loss_action(std::span<const double> action_probs, std::optional<std::size_t> label) {
    LossValue out;
    out.grad.assign(action_probs.size(), 0.0);
    if (!label) return out;
    if (*label >= action_probs.size()) throw std::invalid_argument("loss_action: label outside action vocabulary");
    out.value = -clamped_log(action_probs[*label], out.clamped);
    for (std::size_t a = 0; a < action_probs.size(); ++a) out.grad[a] = action_probs[a] - (a == *label ? 1.0 : 0.0);
    return out;
}

TotalLoss loss_total(const HeadOutputs& outputs, const RegionSample& sample, const TaskWeights& weights) {
    TotalLoss t;
    t.grads.pose.assign(outputs.pose_coords.size(), 0.0);
    t.grads.action_logits.assign(outputs.action_probs.size(), 0.0);

    // Heads outside the objective report 0 so loss traces show only the
    // terms that are actually optimized.
    if (weights.detection != 0.0 && sample.det_label != DetLabel::Ignore) {
        const auto d = loss_detection(outputs.det_probs, sample.det_label == DetLabel::Positive ? 1 : 0);
        t.detection = d.value;
        t.clamp_count += d.clamped ? 1 : 0;
        t.grads.det_logits = {weights.detection * d.grad[0], weights.detection * d.grad[1]};
    }
    if (weights.pose != 0.0 && sample.pose_targets) {
        const auto p = loss_pose(outputs.pose_coords, *sample.pose_targets);
        t.pose = p.value;
        for (std::size_t i = 0; i < p.grad.size(); ++i) t.grads.pose[i] = weights.pose * p.grad[i];
    }
    if (weights.action != 0.0 && sample.action_label) {
        const auto a = loss_action(outputs.action_probs, sample.action_label);
        t.action = a.value;
        t.clamp_count += a.clamped ? 1 : 0;
        for (std::size_t i = 0; i < a.grad.size(); ++i) t.grads.action_logits[i] = weights.action * a.grad[i];
    }
    t.total = weights.detection * t.detection + weights.pose * t.pose + weights.action * t.action;
    return t;
}

}  // namespace mtr
