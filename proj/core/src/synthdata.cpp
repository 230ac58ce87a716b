#include "mtr/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "mtr/parallel.hpp"

namespace mtr {

namespace {

struct Offset {
    double u;  // horizontal offset from the person center, in person heights
    double v;  // vertical offset from the head top, in person heights
};

using Pose = std::array<Offset, kNumKeypoints>;

// Limb joints per action: RElbow, RWrist, LElbow, LWrist, RKnee, RAnkle, LKnee, LAnkle.
using LimbPose = std::array<Offset, 8>;

constexpr LimbPose kNeutralLimbs = {{{-0.16, 0.37}, {-0.18, 0.52}, {0.16, 0.37}, {0.18, 0.52},
                                     {-0.09, 0.77}, {-0.10, 0.98}, {0.09, 0.77}, {0.10, 0.98}}};

constexpr std::array<LimbPose, kNumActions> kActionLimbs = {{
    // jumping
    {{{-0.22, 0.10}, {-0.26, -0.04}, {0.22, 0.10}, {0.26, -0.04}, {-0.15, 0.70}, {-0.10, 0.86}, {0.15, 0.70}, {0.10, 0.86}}},
    // phoning
    {{{-0.20, 0.30}, {-0.05, 0.12}, {0.16, 0.37}, {0.18, 0.52}, {-0.09, 0.77}, {-0.10, 0.98}, {0.09, 0.77}, {0.10, 0.98}}},
    // playinginstrument
    {{{-0.20, 0.35}, {0.02, 0.36}, {0.22, 0.30}, {0.34, 0.26}, {-0.09, 0.77}, {-0.10, 0.98}, {0.09, 0.77}, {0.10, 0.98}}},
    // reading
    {{{-0.17, 0.40}, {-0.05, 0.30}, {0.17, 0.40}, {0.05, 0.30}, {-0.09, 0.77}, {-0.10, 0.98}, {0.09, 0.77}, {0.10, 0.98}}},
    // ridingbike
    {{{-0.02, 0.34}, {0.20, 0.36}, {0.18, 0.33}, {0.30, 0.36}, {0.10, 0.62}, {0.06, 0.85}, {0.18, 0.64}, {0.14, 0.88}}},
    // ridinghorse
    {{{-0.14, 0.38}, {-0.03, 0.48}, {0.14, 0.38}, {0.03, 0.48}, {-0.22, 0.68}, {-0.24, 0.88}, {0.22, 0.68}, {0.24, 0.88}}},
    // running
    {{{-0.22, 0.30}, {-0.28, 0.18}, {0.18, 0.42}, {0.28, 0.52}, {-0.22, 0.72}, {-0.34, 0.90}, {0.10, 0.76}, {0.12, 0.98}}},
    // takingphoto
    {{{-0.20, 0.22}, {-0.05, 0.10}, {0.20, 0.22}, {0.05, 0.10}, {-0.09, 0.77}, {-0.10, 0.98}, {0.09, 0.77}, {0.10, 0.98}}},
    // usingcomputer
    {{{0.02, 0.40}, {0.22, 0.45}, {0.20, 0.40}, {0.34, 0.45}, {0.14, 0.64}, {0.12, 0.90}, {0.20, 0.64}, {0.20, 0.90}}},
    // walking
    {{{-0.14, 0.38}, {-0.12, 0.53}, {0.17, 0.36}, {0.22, 0.50}, {-0.14, 0.77}, {-0.20, 0.98}, {0.06, 0.77}, {0.10, 0.98}}},
}};

constexpr double kHeadRadius = 0.065;
constexpr double kBoxMargin = 0.05;

Pose pose_template(std::size_t action, bool by_action) {
    const LimbPose& limbs = by_action ? kActionLimbs[action] : kNeutralLimbs;
    Pose p{};
    p[kp(KeypointId::Nose)] = {0.0, 0.08};
    p[kp(KeypointId::RShoulder)] = {-0.12, 0.20};
    p[kp(KeypointId::LShoulder)] = {0.12, 0.20};
    p[kp(KeypointId::RHip)] = {-0.08, 0.55};
    p[kp(KeypointId::LHip)] = {0.08, 0.55};
    p[kp(KeypointId::RElbow)] = limbs[0];
    p[kp(KeypointId::RWrist)] = limbs[1];
    p[kp(KeypointId::LElbow)] = limbs[2];
    p[kp(KeypointId::LWrist)] = limbs[3];
    p[kp(KeypointId::RKnee)] = limbs[4];
    p[kp(KeypointId::RAnkle)] = limbs[5];
    p[kp(KeypointId::LKnee)] = limbs[6];
    p[kp(KeypointId::LAnkle)] = limbs[7];
    return p;
}

bool is_torso_anchor(std::size_t k) {
    return k == kp(KeypointId::RShoulder) || k == kp(KeypointId::LShoulder) || k == kp(KeypointId::RHip) ||
           k == kp(KeypointId::LHip);
}

class Painter {
public:
    Painter(std::size_t w, std::size_t h) : w_(w), h_(h), buf_(kCanvasChannels * w * h, 0.0) {}

    void segment(Channel ch, double x0, double y0, double x1, double y1, double radius, double intensity) {
        const double pad = radius + 1.0;
        const long xa = std::max(0L, static_cast<long>(std::floor(std::min(x0, x1) - pad)));
        const long xb = std::min(static_cast<long>(w_) - 1, static_cast<long>(std::ceil(std::max(x0, x1) + pad)));
        const long ya = std::max(0L, static_cast<long>(std::floor(std::min(y0, y1) - pad)));
        const long yb = std::min(static_cast<long>(h_) - 1, static_cast<long>(std::ceil(std::max(y0, y1) + pad)));
        const double dx = x1 - x0, dy = y1 - y0;
        const double len2 = dx * dx + dy * dy;
        for (long y = ya; y <= yb; ++y) {
            for (long x = xa; x <= xb; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                double t = len2 > 0.0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double d = std::hypot(px - (x0 + t * dx), py - (y0 + t * dy));
                const double v = std::clamp(radius + 0.5 - d, 0.0, 1.0) * intensity;
                auto& cell = at(ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
                cell = std::max(cell, v);
            }
        }
    }

    void disc(Channel ch, double cx, double cy, double radius, double intensity) {
        segment(ch, cx, cy, cx, cy, radius, intensity);
    }

    void rectangle(Channel ch, const Box& b, double radius, double intensity) {
        segment(ch, b.x_min(), b.y_min(), b.x_max(), b.y_min(), radius, intensity);
        segment(ch, b.x_max(), b.y_min(), b.x_max(), b.y_max(), radius, intensity);
        segment(ch, b.x_max(), b.y_max(), b.x_min(), b.y_max(), radius, intensity);
        segment(ch, b.x_min(), b.y_max(), b.x_min(), b.y_min(), radius, intensity);
    }

    Canvas finish(double noise, std::mt19937_64& rng) {
        Canvas c{w_, h_, std::vector<std::uint8_t>(buf_.size())};
        std::normal_distribution<double> n(0.0, 1.0);
        for (std::size_t i = 0; i < buf_.size(); ++i) {
            const double v = noise > 0.0 ? buf_[i] + noise * n(rng) : buf_[i];
            c.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
        return c;
    }

private:
    double& at(Channel ch, std::size_t y, std::size_t x) {
        return buf_[(static_cast<std::size_t>(ch) * h_ + y) * w_ + x];
    }
    std::size_t w_, h_;
    std::vector<double> buf_;
};

void draw_person(Painter& painter, const std::vector<Keypoint>& k, double height) {
    const double r = std::max(0.7, 0.025 * height);
    auto seg = [&](Channel ch, KeypointId a, KeypointId b) {
        painter.segment(ch, k[kp(a)].x, k[kp(a)].y, k[kp(b)].x, k[kp(b)].y, r, 1.0);
    };
    const auto& nose = k[kp(KeypointId::Nose)];
    painter.disc(Channel::Torso, nose.x, nose.y, kHeadRadius * height, 1.0);
    const double neck_x = 0.5 * (k[kp(KeypointId::RShoulder)].x + k[kp(KeypointId::LShoulder)].x);
    const double neck_y = 0.5 * (k[kp(KeypointId::RShoulder)].y + k[kp(KeypointId::LShoulder)].y);
    painter.segment(Channel::Torso, nose.x, nose.y, neck_x, neck_y, r, 1.0);
    seg(Channel::Torso, KeypointId::RShoulder, KeypointId::LShoulder);
    seg(Channel::Torso, KeypointId::RHip, KeypointId::LHip);
    seg(Channel::Torso, KeypointId::RShoulder, KeypointId::RHip);
    seg(Channel::Torso, KeypointId::LShoulder, KeypointId::LHip);

    seg(Channel::RightLimbs, KeypointId::RShoulder, KeypointId::RElbow);
    seg(Channel::RightLimbs, KeypointId::RElbow, KeypointId::RWrist);
    seg(Channel::RightLimbs, KeypointId::RHip, KeypointId::RKnee);
    seg(Channel::RightLimbs, KeypointId::RKnee, KeypointId::RAnkle);
    seg(Channel::LeftLimbs, KeypointId::LShoulder, KeypointId::LElbow);
    seg(Channel::LeftLimbs, KeypointId::LElbow, KeypointId::LWrist);
    seg(Channel::LeftLimbs, KeypointId::LHip, KeypointId::LKnee);
    seg(Channel::LeftLimbs, KeypointId::LKnee, KeypointId::LAnkle);

    // Joint markers; extremities are drawn larger than elbows and knees.
    const std::array<std::pair<KeypointId, Channel>, 8> joints = {{
        {KeypointId::RElbow, Channel::RightLimbs},
        {KeypointId::RWrist, Channel::RightLimbs},
        {KeypointId::RKnee, Channel::RightLimbs},
        {KeypointId::RAnkle, Channel::RightLimbs},
        {KeypointId::LElbow, Channel::LeftLimbs},
        {KeypointId::LWrist, Channel::LeftLimbs},
        {KeypointId::LKnee, Channel::LeftLimbs},
        {KeypointId::LAnkle, Channel::LeftLimbs},
    }};
    for (const auto& [id, ch] : joints) {
        const bool extremity = id == KeypointId::RWrist || id == KeypointId::LWrist || id == KeypointId::RAnkle ||
                               id == KeypointId::LAnkle;
        if (!k[kp(id)].visible) continue;
        painter.disc(ch, k[kp(id)].x, k[kp(id)].y, r * (extremity ? 1.9 : 1.4), 1.0);
    }
}

constexpr std::array<double, kNumContextObjects> kObjectIntensity = {0.4, 0.6, 0.8, 1.0};

Box clip_to_canvas(const Box& b, std::size_t w, std::size_t h) {
    const auto c = b.intersect(Box(0.0, 0.0, static_cast<double>(w), static_cast<double>(h)));
    return c ? *c : b;
}

}  // namespace

std::array<std::array<double, kNumContextObjects>, kNumActions> SceneSpec::default_cooccurrence() {
    std::array<std::array<double, kNumContextObjects>, kNumActions> t{};
    for (auto& row : t) row = {0.02, 0.02, 0.02, 0.02};
    t[4] = {0.0, 0.8, 0.15, 0.0};   // ridingbike: bicycle, sometimes motorbike
    t[5] = {0.9, 0.0, 0.0, 0.0};    // ridinghorse: horse
    t[8] = {0.0, 0.0, 0.0, 0.85};   // usingcomputer: tvmonitor
    return t;
}

void SceneSpec::validate() const {
    if (canvas_width < 16 || canvas_height < 16) throw std::invalid_argument("SceneSpec: canvas too small");
    if (min_persons > max_persons) throw std::invalid_argument("SceneSpec: min_persons exceeds max_persons");
    if (!(min_person_height > 4.0 && min_person_height <= max_person_height)) {
        throw std::invalid_argument("SceneSpec: bad person height range");
    }
    if (max_person_height * 1.15 > static_cast<double>(std::min(canvas_width, canvas_height))) {
        throw std::invalid_argument("SceneSpec: persons do not fit the canvas");
    }
    double prior_sum = 0.0;
    for (double p : action_prior) {
        if (!(p >= 0.0)) throw std::invalid_argument("SceneSpec: action prior must be non-negative");
        prior_sum += p;
    }
    if (!(prior_sum > 0.0)) throw std::invalid_argument("SceneSpec: action prior must not be all zero");
    for (const auto& row : cooccurrence) {
        double s = 0.0;
        for (double p : row) {
            if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("SceneSpec: co-occurrence outside [0,1]");
            s += p;
        }
        if (s > 1.0 + 1e-12) throw std::invalid_argument("SceneSpec: co-occurrence row sums above 1");
    }
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(occlusion_rate)) throw std::invalid_argument("SceneSpec: occlusion rate outside [0,1]");
    if (!(noise >= 0.0) || !(pose_variation >= 0.0) || !(distractor_rate >= 0.0)) {
        throw std::invalid_argument("SceneSpec: negative noise parameter");
    }
}

std::uint64_t scene_seed(std::uint64_t master, std::uint64_t index) {
    // splitmix64 finalizer over the combined inputs.
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::discrete_distribution<std::size_t> action_dist(spec.action_prior.begin(), spec.action_prior.end());

    Scene scene;
    scene.seed = seed;
    const double W = static_cast<double>(spec.canvas_width);
    const double H = static_cast<double>(spec.canvas_height);
    Painter painter(spec.canvas_width, spec.canvas_height);

    const std::size_t n_persons = std::uniform_int_distribution<std::size_t>(spec.min_persons, spec.max_persons)(rng);
    struct Placed {
        std::vector<Keypoint> keypoints;
        double height;
    };
    std::vector<Placed> placed;
    for (std::size_t p = 0; p < n_persons; ++p) {
        const std::size_t action = action_dist(rng);
        const double h = uniform(spec.min_person_height, spec.max_person_height);
        const Pose tmpl = pose_template(action, spec.pose_by_action);
        std::array<Offset, kNumKeypoints> offs{};
        for (std::size_t k = 0; k < kNumKeypoints; ++k) {
            offs[k] = {tmpl[k].u + spec.pose_variation * gauss(rng), tmpl[k].v + spec.pose_variation * gauss(rng)};
        }
        double u0 = -kHeadRadius, u1 = kHeadRadius, v0 = 0.08 - kHeadRadius, v1 = 0.08 + kHeadRadius;
        for (const auto& o : offs) {
            u0 = std::min(u0, o.u);
            u1 = std::max(u1, o.u);
            v0 = std::min(v0, o.v);
            v1 = std::max(v1, o.v);
        }
        u0 -= kBoxMargin, u1 += kBoxMargin, v0 -= kBoxMargin, v1 += kBoxMargin;
        if ((u1 - u0) * h >= W || (v1 - v0) * h >= H) continue;

        std::optional<Box> box;
        double cx = 0.0, top = 0.0;
        for (int attempt = 0; attempt < 50 && !box; ++attempt) {
            cx = uniform(-u0 * h, W - u1 * h);
            top = uniform(-v0 * h, H - v1 * h);
            Box candidate(cx + u0 * h, top + v0 * h, cx + u1 * h, top + v1 * h);
            const bool clear = std::none_of(scene.instances.begin(), scene.instances.end(),
                                            [&](const Instance& i) { return iou(i.box, candidate) > 0.05; });
            if (clear) box = candidate;
        }
        if (!box) continue;

        std::vector<Keypoint> kps(kNumKeypoints);
        for (std::size_t k = 0; k < kNumKeypoints; ++k) {
            const bool occluded = !is_torso_anchor(k) && unit(rng) < spec.occlusion_rate;
            kps[k] = {cx + offs[k].u * h, top + offs[k].v * h, !occluded};
        }
        scene.instances.push_back(Instance{*box, kps, action});
        placed.push_back({std::move(kps), h});

        // Context object framing the person.
        const double u = unit(rng);
        double cum = 0.0;
        for (std::size_t o = 0; o < kNumContextObjects; ++o) {
            cum += spec.cooccurrence[action][o];
            if (u < cum) {
                const double s = uniform(1.7, 2.0);
                const double ocx = box->center_x() + uniform(-0.05, 0.05) * box->width();
                const double ocy = box->center_y() + uniform(-0.05, 0.05) * box->height();
                const Box obj = clip_to_canvas(Box::from_center(ocx, ocy, s * box->width(), s * box->height()),
                                               spec.canvas_width, spec.canvas_height);
                scene.objects.push_back({obj, o});
                break;
            }
        }
    }

    const std::size_t n_distractors = std::poisson_distribution<std::size_t>(spec.distractor_rate)(rng);
    for (std::size_t d = 0; d < n_distractors; ++d) {
        const double w = uniform(20.0, 0.6 * W), h = uniform(20.0, 0.6 * H);
        const double x = uniform(0.0, W - w), y = uniform(0.0, H - h);
        scene.objects.push_back({Box(x, y, x + w, y + h),
                                 std::uniform_int_distribution<std::size_t>(0, kNumContextObjects - 1)(rng)});
    }
    for (std::size_t s = 0; s < spec.clutter_strokes; ++s) {
        const double x0 = uniform(0.0, W), y0 = uniform(0.0, H);
        const double len = uniform(6.0, 18.0), ang = uniform(0.0, 2.0 * 3.141592653589793);
        const auto ch = static_cast<Channel>(std::uniform_int_distribution<std::size_t>(0, 2)(rng));
        painter.segment(ch, x0, y0, x0 + len * std::cos(ang), y0 + len * std::sin(ang), 0.8, 0.7);
    }

    for (const auto& obj : scene.objects) {
        painter.rectangle(Channel::Objects, obj.box, 1.0, kObjectIntensity[obj.object_class]);
    }
    for (const auto& p : placed) draw_person(painter, p.keypoints, p.height);
    scene.canvas = painter.finish(spec.noise, rng);
    scene.proposals =
        generate_proposals(scene, spec.proposals_per_instance, spec.background_proposals, scene_seed(seed, 0x5eed));
    return scene;
}

std::vector<Scene> generate_dataset(const SceneSpec& spec, std::size_t n_scenes, std::size_t first_index,
                                    std::size_t threads) {
    if (n_scenes < 1) throw std::invalid_argument("generate_dataset: need at least one scene");
    spec.validate();
    std::vector<Scene> scenes(n_scenes);
    parallel_for(n_scenes, threads,
                 [&](std::size_t i) { scenes[i] = generate_scene(spec, scene_seed(spec.seed, first_index + i)); });
    return scenes;
}

std::vector<Box> generate_proposals(const Scene& scene, std::size_t n_per_instance, std::size_t n_background,
                                    std::uint64_t seed) {
    std::vector<Box> targets;
    for (const auto& inst : scene.instances) targets.push_back(inst.box);
    return generate_proposals(targets, scene.canvas.width, scene.canvas.height, n_per_instance, n_background, seed);
}

std::vector<Box> generate_proposals(std::span<const Box> targets, std::size_t canvas_width, std::size_t canvas_height,
                                    std::size_t n_per_instance, std::size_t n_background, std::uint64_t seed) {
    struct Band {
        double lo;
        double hi;
        bool lo_inclusive;
        bool hi_inclusive;
        double spread;
    };
    constexpr std::array<Band, 4> bands = {{
        {0.05, 0.3, true, false, 0.8},
        {0.3, 0.5, true, true, 0.5},
        {0.5, 0.7, false, true, 0.35},
        {0.7, 1.0, false, false, 0.2},
    }};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Box> out;
    for (const Box& g : targets) {
        for (std::size_t j = 0; j < n_per_instance; ++j) {
            const Band& band = bands[j % bands.size()];
            std::optional<Box> chosen;
            for (int attempt = 0; attempt < 5000 && !chosen; ++attempt) {
                const double cx = g.center_x() + band.spread * g.width() * sym(rng);
                const double cy = g.center_y() + band.spread * g.height() * sym(rng);
                const double w = g.width() * std::exp(band.spread * sym(rng));
                const double h = g.height() * std::exp(band.spread * sym(rng));
                const Box c = Box::from_center(cx, cy, w, h);
                const double o = iou(c, g);
                const bool above = band.lo_inclusive ? o >= band.lo : o > band.lo;
                const bool below = band.hi_inclusive ? o <= band.hi : o < band.hi;
                if (above && below) chosen = c;
            }
            if (chosen) out.push_back(*chosen);
        }
    }
    const double W = static_cast<double>(canvas_width);
    const double H = static_cast<double>(canvas_height);
    for (std::size_t j = 0; j < n_background; ++j) {
        const double h = (0.3 + 0.4 * unit(rng)) * H;
        const double w = std::min(W * 0.95, h * (0.4 + 0.6 * unit(rng)));
        const double x = unit(rng) * (W - w);
        const double y = unit(rng) * (H - h);
        out.emplace_back(x, y, x + w, y + h);
    }
    return out;
}

void render_region(const Canvas& canvas, const Box& region, std::size_t size, std::span<double> out) {
    if (out.size() != kCanvasChannels * size * size) throw std::invalid_argument("render_region: output size mismatch");
    const double sx = region.width() / static_cast<double>(size);
    const double sy = region.height() / static_cast<double>(size);
    const long W = static_cast<long>(canvas.width), H = static_cast<long>(canvas.height);
    auto tap = [&](std::size_t c, long y, long x) -> double {
        if (x < 0 || y < 0 || x >= W || y >= H) return 0.0;
        return canvas.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    };
    for (std::size_t c = 0; c < kCanvasChannels; ++c) {
        for (std::size_t i = 0; i < size; ++i) {
            for (std::size_t j = 0; j < size; ++j) {
                double acc = 0.0;
                for (int sub_y = 0; sub_y < 2; ++sub_y) {
                    for (int sub_x = 0; sub_x < 2; ++sub_x) {
                        const double x = region.x_min() + (static_cast<double>(j) + 0.25 + 0.5 * sub_x) * sx - 0.5;
                        const double y = region.y_min() + (static_cast<double>(i) + 0.25 + 0.5 * sub_y) * sy - 0.5;
                        const double fx = std::floor(x), fy = std::floor(y);
                        const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
                        const double ax = x - fx, ay = y - fy;
                        acc += (1 - ay) * ((1 - ax) * tap(c, y0, x0) + ax * tap(c, y0, x0 + 1)) +
                               ay * ((1 - ax) * tap(c, y0 + 1, x0) + ax * tap(c, y0 + 1, x0 + 1));
                    }
                }
                out[(c * size + i) * size + j] = 0.25 * acc;
            }
        }
    }
}

std::vector<double> render_region(const Canvas& canvas, const Box& region, std::size_t size) {
    std::vector<double> out(kCanvasChannels * size * size);
    render_region(canvas, region, size, out);
    return out;
}

}  // namespace mtr
