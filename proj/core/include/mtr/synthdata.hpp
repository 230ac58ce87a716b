#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mtr/geometry.hpp"
#include "mtr/labeling.hpp"
#include "mtr/vocabulary.hpp"

namespace mtr {

/// Render channels of the procedural canvas.
enum class Channel : std::size_t { Torso = 0, RightLimbs = 1, LeftLimbs = 2, Objects = 3 };
inline constexpr std::size_t kCanvasChannels = 4;

struct SceneSpec {
    std::size_t canvas_width = 96;
    std::size_t canvas_height = 96;
    std::size_t min_persons = 1;
    std::size_t max_persons = 3;
    double min_person_height = 36.0;
    double max_person_height = 52.0;

    std::array<double, kNumActions> action_prior{1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
    /// P(object o is rendered around a person doing action a).
    std::array<std::array<double, kNumContextObjects>, kNumActions> cooccurrence = default_cooccurrence();
    bool pose_by_action = true;     // false renders every action with the same neutral pose
    double pose_variation = 0.015;  // per-keypoint std, as a fraction of person height
    double occlusion_rate = 0.05;   // per-keypoint probability of v = 0 (torso anchors excluded)
    double noise = 0.05;
    double distractor_rate = 0.3;  // expected free-standing context objects per scene
    std::size_t clutter_strokes = 2;

    std::size_t proposals_per_instance = 12;
    std::size_t background_proposals = 8;

    std::uint64_t seed = 0;

    static std::array<std::array<double, kNumContextObjects>, kNumActions> default_cooccurrence();
    void validate() const;
};

struct ContextObject {
    Box box;
    std::size_t object_class = 0;
};

/// Canvas stored as quantized planes [channel][y][x]; intensity = value / 255.
struct Canvas {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    double at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return pixels[(c * height + y) * width + x] * (1.0 / 255.0);
    }
    friend bool operator==(const Canvas&, const Canvas&) = default;
};

struct Scene {
    std::uint64_t seed = 0;
    Canvas canvas;
    std::vector<Instance> instances;
    std::vector<ContextObject> objects;
    std::vector<Box> proposals;
};

/// Per-scene seed derived from the master seed and the scene index.
std::uint64_t scene_seed(std::uint64_t master, std::uint64_t index);

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed);

/// Deterministic per seed; scene i is generated from scene_seed(spec.seed, first_index + i).
std::vector<Scene> generate_dataset(const SceneSpec& spec, std::size_t n_scenes, std::size_t first_index = 0,
                                    std::size_t threads = 1);

/// Per instance, boxes stratified over the IoU bands [0.05,0.3), [0.3,0.5],
/// (0.5,0.7], (0.7,1) (cycling through bands), plus uniform background boxes.
std::vector<Box> generate_proposals(const Scene& scene, std::size_t n_per_instance, std::size_t n_background,
                                    std::uint64_t seed);
/// Same sampling around arbitrary target boxes on a canvas of the given size.
std::vector<Box> generate_proposals(std::span<const Box> targets, std::size_t canvas_width, std::size_t canvas_height,
                                    std::size_t n_per_instance, std::size_t n_background, std::uint64_t seed);

/// Crop-and-rescale of `region` to channels x size x size (2x2 supersampled
/// bilinear; zero outside the canvas).
void render_region(const Canvas& canvas, const Box& region, std::size_t size, std::span<double> out);
std::vector<double> render_region(const Canvas& canvas, const Box& region, std::size_t size);

}  // namespace mtr
