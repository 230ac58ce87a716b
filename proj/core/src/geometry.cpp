#include "mtr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mtr {

namespace {

constexpr std::array<std::string_view, kNumKeypoints> kKeypointNames = {
    "Nose",    "R_Shoulder", "R_Elbow", "R_Wrist", "L_Shoulder", "L_Elbow", "L_Wrist",
    "R_Hip",   "R_Knee",     "R_Ankle", "L_Hip",   "L_Knee",     "L_Ankle",
};

}  // namespace

Box::Box(double x_min, double y_min, double x_max, double y_max)
    : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
    if (!(std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) && std::isfinite(y_max))) {
        throw std::invalid_argument("Box: non-finite coordinate");
    }
    if (!(x_min < x_max) || !(y_min < y_max)) {
        throw std::invalid_argument("Box: degenerate box (" + std::to_string(x_min) + ", " + std::to_string(y_min) +
                                    ", " + std::to_string(x_max) + ", " + std::to_string(y_max) + ")");
    }
}

Box Box::translated(double dx, double dy) const { return {x_min_ + dx, y_min_ + dy, x_max_ + dx, y_max_ + dy}; }

Box Box::scaled(double s) const {
    if (!(s > 0.0)) throw std::invalid_argument("Box::scaled: scale must be positive");
    return {x_min_ * s, y_min_ * s, x_max_ * s, y_max_ * s};
}

Box Box::from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::optional<Box> Box::intersect(const Box& other) const {
    const double x0 = std::max(x_min_, other.x_min_);
    const double y0 = std::max(y_min_, other.y_min_);
    const double x1 = std::min(x_max_, other.x_max_);
    const double y1 = std::min(y_max_, other.y_max_);
    if (!(x0 < x1) || !(y0 < y1)) return std::nullopt;
    return Box(x0, y0, x1, y1);
}

std::string_view keypoint_name(std::size_t index) {
    if (index >= kNumKeypoints) throw std::out_of_range("keypoint_name: index out of range");
    return kKeypointNames[index];
}

double iou(const Box& a, const Box& b) noexcept {
    if (a == b) return 1.0;
    const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
    const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<NormalizedKeypoint> normalize_keypoints(std::span<const Keypoint> keypoints, const Box& region) {
    std::vector<NormalizedKeypoint> out;
    out.reserve(keypoints.size());
    const double cx = region.center_x();
    const double cy = region.center_y();
    const double w = region.width();
    const double h = region.height();
    for (const auto& k : keypoints) {
        out.push_back({(k.x - cx) / w, (k.y - cy) / h, k.visible});
    }
    return out;
}

std::vector<Keypoint> denormalize_keypoints(std::span<const NormalizedKeypoint> keypoints, const Box& region) {
    std::vector<Keypoint> out;
    out.reserve(keypoints.size());
    const double cx = region.center_x();
    const double cy = region.center_y();
    const double w = region.width();
    const double h = region.height();
    for (const auto& k : keypoints) {
        out.push_back({k.x * w + cx, k.y * h + cy, k.visible});
    }
    return out;
}

std::optional<double> torso_height(std::span<const Keypoint> keypoints) {
    if (keypoints.size() != kNumKeypoints) return std::nullopt;
    const auto& rs = keypoints[kp(KeypointId::RShoulder)];
    const auto& ls = keypoints[kp(KeypointId::LShoulder)];
    const auto& rh = keypoints[kp(KeypointId::RHip)];
    const auto& lh = keypoints[kp(KeypointId::LHip)];
    if (!(rs.visible && ls.visible && rh.visible && lh.visible)) return std::nullopt;
    const double dx = 0.5 * (rs.x + ls.x) - 0.5 * (rh.x + lh.x);
    const double dy = 0.5 * (rs.y + ls.y) - 0.5 * (rh.y + lh.y);
    const double h = std::hypot(dx, dy);
    if (!(h > 0.0)) return std::nullopt;
    return h;
}

}  // namespace mtr
