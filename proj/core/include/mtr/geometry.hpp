#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace mtr {

/// Axis-aligned rectangle in continuous image coordinates.
///
/// Boxes are half-open with area (x_max - x_min) * (y_max - y_min); there is
/// no +1 pixel convention. Degenerate boxes are rejected at construction so
/// every Box in the system has positive area.
class Box {
public:
    Box(double x_min, double y_min, double x_max, double y_max);

    double x_min() const noexcept { return x_min_; }
    double y_min() const noexcept { return y_min_; }
    double x_max() const noexcept { return x_max_; }
    double y_max() const noexcept { return y_max_; }

    double width() const noexcept { return x_max_ - x_min_; }
    double height() const noexcept { return y_max_ - y_min_; }
    double area() const noexcept { return width() * height(); }
    double center_x() const noexcept { return 0.5 * (x_min_ + x_max_); }
    double center_y() const noexcept { return 0.5 * (y_min_ + y_max_); }

    Box translated(double dx, double dy) const;
    Box scaled(double s) const;  // about the origin

    static Box from_center(double cx, double cy, double w, double h);

    /// Intersection with `other`, or nullopt when the overlap has zero area.
    std::optional<Box> intersect(const Box& other) const;

    std::array<double, 4> as_array() const noexcept { return {x_min_, y_min_, x_max_, y_max_}; }

    friend bool operator==(const Box&, const Box&) = default;

private:
    double x_min_;
    double y_min_;
    double x_max_;
    double y_max_;
};

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    bool visible = false;

    friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

/// Keypoint expressed relative to a region: (x - cx) / w, (y - cy) / h.
struct NormalizedKeypoint {
    double x = 0.0;
    double y = 0.0;
    bool visible = false;

    friend bool operator==(const NormalizedKeypoint&, const NormalizedKeypoint&) = default;
};

// Canonical keypoint order (the columns of the keypoint AP table).
enum class KeypointId : std::size_t {
    Nose = 0,
    RShoulder,
    RElbow,
    RWrist,
    LShoulder,
    LElbow,
    LWrist,
    RHip,
    RKnee,
    RAnkle,
    LHip,
    LKnee,
    LAnkle,
};

inline constexpr std::size_t kNumKeypoints = 13;

std::string_view keypoint_name(std::size_t index);

constexpr std::size_t kp(KeypointId id) noexcept { return static_cast<std::size_t>(id); }

double iou(const Box& a, const Box& b) noexcept;

std::vector<NormalizedKeypoint> normalize_keypoints(std::span<const Keypoint> keypoints, const Box& region);
std::vector<Keypoint> denormalize_keypoints(std::span<const NormalizedKeypoint> keypoints, const Box& region);

/// Distance between the shoulder midpoint and the hip midpoint.
///
/// Returns nullopt when any of the four anchor keypoints is invisible, when
/// the sequence does not follow the 13-keypoint schema, or when the distance
/// is not strictly positive.
std::optional<double> torso_height(std::span<const Keypoint> keypoints);

}  // namespace mtr
