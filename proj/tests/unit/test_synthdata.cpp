#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mtr/synthdata.hpp"

using namespace mtr;

namespace {

const std::vector<Scene>& sample_scenes() {
    static const auto scenes = generate_dataset(SceneSpec{}, 60, 0, 2);
    return scenes;
}

}  // namespace

TEST_CASE("scenes are reproducible from their seed") {
    SceneSpec spec;
    const auto a = generate_scene(spec, 123);
    const auto b = generate_scene(spec, 123);
    CHECK(a.canvas == b.canvas);
    CHECK(a.proposals == b.proposals);
    REQUIRE(a.instances.size() == b.instances.size());
    for (std::size_t i = 0; i < a.instances.size(); ++i) {
        CHECK(a.instances[i].box == b.instances[i].box);
        CHECK(*a.instances[i].keypoints == *b.instances[i].keypoints);
    }
    CHECK_FALSE(generate_scene(spec, 124).canvas == a.canvas);
}

TEST_CASE("dataset generation does not depend on the thread count") {
    SceneSpec spec;
    spec.seed = 77;
    const auto one = generate_dataset(spec, 12, 5, 1);
    const auto many = generate_dataset(spec, 12, 5, 4);
    for (std::size_t i = 0; i < one.size(); ++i) {
        CHECK(one[i].canvas == many[i].canvas);
        CHECK(one[i].seed == scene_seed(77, 5 + i));
    }
}

TEST_CASE("scene invariants") {
    SceneSpec spec;
    for (const auto& s : sample_scenes()) {
        CHECK(s.canvas.width == spec.canvas_width);
        CHECK(s.canvas.pixels.size() == kCanvasChannels * spec.canvas_width * spec.canvas_height);
        CHECK(s.instances.size() <= spec.max_persons);
        for (std::size_t i = 0; i < s.instances.size(); ++i) {
            const auto& inst = s.instances[i];
            validate_instance(inst, kNumActions);
            REQUIRE(inst.keypoints);
            REQUIRE(inst.action);
            CHECK(inst.box.x_min() >= 0.0);
            CHECK(inst.box.y_min() >= 0.0);
            CHECK(inst.box.x_max() <= static_cast<double>(spec.canvas_width));
            CHECK(inst.box.y_max() <= static_cast<double>(spec.canvas_height));
            CHECK(torso_height(*inst.keypoints));
            for (const auto& k : *inst.keypoints) {
                CHECK(k.x >= inst.box.x_min());
                CHECK(k.x <= inst.box.x_max());
                CHECK(k.y >= inst.box.y_min());
                CHECK(k.y <= inst.box.y_max());
            }
            for (std::size_t j = i + 1; j < s.instances.size(); ++j) CHECK(iou(inst.box, s.instances[j].box) <= 0.05);
        }
        for (const auto& o : s.objects) CHECK(o.object_class < kNumContextObjects);
    }
}

TEST_CASE("most scenes hold the minimum number of people") {
    std::size_t total = 0;
    for (const auto& s : sample_scenes()) total += s.instances.size();
    CHECK(total >= sample_scenes().size());
}

TEST_CASE("action prior and co-occurrence are respected") {
    SceneSpec spec;
    spec.action_prior = {0, 0, 0, 0, 1, 1, 0, 0, 0, 0};
    for (auto& row : spec.cooccurrence) row = {0, 0, 0, 0};
    spec.cooccurrence[4] = {0, 1, 0, 0};  // ridingbike -> bicycle, always
    spec.distractor_rate = 0.0;
    const auto scenes = generate_dataset(spec, 20);
    std::set<std::size_t> seen;
    for (const auto& s : scenes) {
        std::size_t bikes = 0;
        for (const auto& inst : s.instances) {
            seen.insert(*inst.action);
            bikes += *inst.action == 4 ? 1 : 0;
        }
        CHECK(s.objects.size() == bikes);
        for (const auto& o : s.objects) CHECK(o.object_class == 1);
    }
    CHECK(seen == std::set<std::size_t>{4, 5});
}

TEST_CASE("poses differ by action unless disabled") {
    SceneSpec spec;
    spec.min_persons = spec.max_persons = 1;
    spec.pose_variation = 0.0;
    spec.occlusion_rate = 0.0;
    auto relative_pose = [](const Instance& inst) {
        std::vector<double> v;
        const auto& k = *inst.keypoints;
        for (const auto& p : k) {
            v.push_back((p.x - k[0].x) / inst.box.height());
            v.push_back((p.y - k[0].y) / inst.box.height());
        }
        return v;
    };
    spec.action_prior = {1, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    const auto jumping = generate_scene(spec, 1);
    spec.action_prior = {0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
    const auto walking = generate_scene(spec, 1);
    REQUIRE(jumping.instances.size() == 1);
    REQUIRE(walking.instances.size() == 1);
    const auto a = relative_pose(jumping.instances[0]);
    const auto b = relative_pose(walking.instances[0]);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
    CHECK(diff > 0.1);

    spec.pose_by_action = false;
    spec.action_prior = {1, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    const auto n1 = generate_scene(spec, 1);
    spec.action_prior = {0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
    const auto n2 = generate_scene(spec, 1);
    const auto c = relative_pose(n1.instances[0]);
    const auto d = relative_pose(n2.instances[0]);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(d[i]).epsilon(1e-9));
}

TEST_CASE("proposals cover every overlap band around each person") {
    std::array<std::size_t, 5> bands{};
    for (const auto& s : sample_scenes()) {
        CHECK(s.proposals.size() <= s.instances.size() * 12 + 8);
        CHECK(s.proposals.size() >= 8);
        for (const auto& p : s.proposals) {
            double best = 0.0;
            for (const auto& inst : s.instances) best = std::max(best, iou(p, inst.box));
            const std::size_t band = best < 0.05 ? 0 : best < 0.3 ? 1 : best <= 0.5 ? 2 : best <= 0.7 ? 3 : 4;
            ++bands[band];
        }
    }
    for (std::size_t b = 1; b < bands.size(); ++b) CHECK(bands[b] > 20);
}

TEST_CASE("proposals around arbitrary targets") {
    const std::vector<Box> targets = {Box(10, 10, 40, 50)};
    const auto p = generate_proposals(targets, 96, 96, 8, 3, 4);
    REQUIRE(p.size() == 11);
    for (std::size_t j = 0; j < 8; ++j) CHECK(iou(p[j], targets[0]) >= 0.05);
    CHECK(p == generate_proposals(targets, 96, 96, 8, 3, 4));
}

TEST_CASE("render_region resamples the canvas and pads with zero") {
    Canvas c{4, 4, std::vector<std::uint8_t>(kCanvasChannels * 16, 0)};
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 4; ++x) c.pixels[y * 4 + x] = 255;  // channel 0 fully on
    }
    const auto same = render_region(c, Box(0, 0, 4, 4), 4);
    // interior pixels equal the constant canvas
    CHECK(same[1 * 4 + 1] == doctest::Approx(1.0));
    CHECK(same[16 + 5] == 0.0);
    const auto outside = render_region(c, Box(100, 100, 120, 120), 3);
    for (double v : outside) CHECK(v == 0.0);
    std::vector<double> wrong(5);
    CHECK_THROWS_AS(render_region(c, Box(0, 0, 4, 4), 4, wrong), std::invalid_argument);

    const auto& s = sample_scenes().front();
    const auto crop = render_region(s.canvas, Box(0, 0, 96, 96), 24);
    CHECK(crop.size() == 4 * 24 * 24);
    for (double v : crop) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("person pixels are brighter than the background") {
    double inside = 0.0, outside = 0.0;
    std::size_t n_in = 0, n_out = 0;
    for (const auto& s : sample_scenes()) {
        for (std::size_t y = 0; y < s.canvas.height; ++y) {
            for (std::size_t x = 0; x < s.canvas.width; ++x) {
                bool in = false;
                for (const auto& inst : s.instances) {
                    in = in || (x >= inst.box.x_min() && x < inst.box.x_max() && y >= inst.box.y_min() &&
                                y < inst.box.y_max());
                }
                const double v = s.canvas.at(0, y, x);
                (in ? inside : outside) += v;
                (in ? n_in : n_out) += 1;
            }
        }
    }
    CHECK(inside / static_cast<double>(n_in) > 2.0 * outside / static_cast<double>(n_out));
}

TEST_CASE("scene settings validation") {
    SceneSpec spec;
    spec.min_persons = 4;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = SceneSpec{};
    spec.action_prior.fill(0.0);
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = SceneSpec{};
    spec.cooccurrence[0] = {0.6, 0.6, 0, 0};
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = SceneSpec{};
    spec.max_person_height = 200.0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    CHECK_THROWS_AS(generate_dataset(SceneSpec{}, 0), std::invalid_argument);
}

TEST_CASE("scene seeds are well spread") {
    std::set<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(scene_seed(0, i));
    CHECK(seeds.size() == 1000);
    CHECK(scene_seed(0, 1) != scene_seed(1, 0));
}
