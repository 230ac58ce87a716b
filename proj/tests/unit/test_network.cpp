#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <random>

#include "mtr/network.hpp"
#include "oracles.hpp"

using namespace mtr;

namespace {

NetworkConfig tiny_config(Activation act = Activation::Relu) {
    NetworkConfig c;
    c.input = {2, 8, 8};
    c.conv = {{3, 3, 2, act}, {4, 3, 1, act}};
    c.fc6_width = 6;
    c.fc7_width = 5;
    c.fc_activation = act;
    c.num_keypoints = 13;
    c.num_actions = 4;
    return c;
}

std::vector<double> random_input(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(n);
    for (auto& v : x) v = u(rng);
    return x;
}

RegionSample full_sample(std::mt19937_64& rng, std::size_t num_actions) {
    std::normal_distribution<double> n(0.0, 0.3);
    RegionSample s{Box(0, 0, 1, 1)};
    s.det_label = DetLabel::Positive;
    std::vector<NormalizedKeypoint> t(13);
    for (auto& k : t) k = {n(rng), n(rng), rng() % 4 != 0};
    s.pose_targets = t;
    s.action_label = rng() % num_actions;
    return s;
}

// Linearly separable toy problem: class decided by which half is bright.
InMemoryRegions toy_regions(const NetworkConfig& c, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 0.2);
    InMemoryRegions data;
    for (std::size_t i = 0; i < n; ++i) {
        const bool pos = i % 2 == 0;
        std::vector<double> x(c.input.size());
        for (std::size_t ch = 0; ch < c.input.channels; ++ch) {
            for (std::size_t y = 0; y < c.input.height; ++y) {
                for (std::size_t xx = 0; xx < c.input.width; ++xx) {
                    const bool left = xx < c.input.width / 2;
                    x[(ch * c.input.height + y) * c.input.width + xx] = u(rng) + ((left == pos) ? 0.8 : 0.0);
                }
            }
        }
        RegionSample s{Box(0, 0, 1, 1)};
        s.det_label = pos ? DetLabel::Positive : DetLabel::Negative;
        if (pos) {
            s.action_label = i % 4 == 0 ? 0 : 1;
            std::vector<NormalizedKeypoint> t(13, NormalizedKeypoint{0.1, -0.2, true});
            s.pose_targets = t;
        }
        data.add(std::move(x), s);
    }
    return data;
}

}  // namespace

TEST_CASE("default architecture shapes") {
    NetworkConfig c;
    const auto shapes = c.conv_output_shapes();
    REQUIRE(shapes.size() == 3);
    CHECK(shapes[0] == TensorShape{8, 12, 12});
    CHECK(shapes[1] == TensorShape{16, 6, 6});
    CHECK(shapes[2] == TensorShape{32, 3, 3});
    MultitaskNet net(c);
    const auto p = net.zero_params();
    CHECK(p.block("fc6.weight").shape == std::vector<std::size_t>{64, 288});
    CHECK(p.block("pose.weight").shape == std::vector<std::size_t>{26, 64});
    CHECK(p.block("action.weight").shape == std::vector<std::size_t>{10, 64});
    CHECK(p.block("det.weight").shape == std::vector<std::size_t>{2, 64});
    std::size_t total = 0;
    for (const auto& b : p.blocks) {
        CHECK(b.offset == total);
        total += b.size;
    }
    CHECK(total == p.count());
}

TEST_CASE("invalid configurations are rejected") {
    NetworkConfig c;
    c.fc6_width = 0;
    CHECK_THROWS_AS(MultitaskNet{c}, ConfigError);
    c = NetworkConfig{};
    c.conv = {{8, 0, 1}};
    CHECK_THROWS_AS(MultitaskNet{c}, ConfigError);
    c = NetworkConfig{};
    c.num_actions = 0;
    CHECK_THROWS_AS(MultitaskNet{c}, ConfigError);
    MultitaskNet net{NetworkConfig{}};
    CHECK_THROWS_AS(net.forward(net.zero_params(), std::vector<double>(10)), ConfigError);
    MultitaskNet small{tiny_config()};
    CHECK_THROWS_AS(net.forward(small.zero_params(), std::vector<double>(4 * 24 * 24)), ConfigError);
}

TEST_CASE("forward outputs are well formed") {
    MultitaskNet net{NetworkConfig{}};
    const auto p = net.init_params(1);
    std::mt19937_64 rng(1);
    const auto out = net.forward(p, random_input(rng, 4 * 24 * 24));
    CHECK(out.det_probs[0] + out.det_probs[1] == doctest::Approx(1.0));
    CHECK(out.pose_coords.size() == 26);
    REQUIRE(out.action_probs.size() == 10);
    double sum = 0.0;
    for (double v : out.action_probs) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(sum == doctest::Approx(1.0));
    CHECK(out.fc6.size() == 64);
    CHECK(out.fc7.size() == 64);
    CHECK(out.keypoints().size() == 13);
    // same parameters and input give the same outputs
    std::mt19937_64 rng2(1);
    const auto again = net.forward(p, random_input(rng2, 4 * 24 * 24));
    CHECK(again.fc7 == out.fc7);
}

TEST_CASE("init_params is seeded and leaves biases at zero") {
    MultitaskNet net{NetworkConfig{}};
    CHECK(net.init_params(3) == net.init_params(3));
    CHECK_FALSE(net.init_params(3) == net.init_params(4));
    for (double v : net.init_params(3).view("fc6.bias")) CHECK(v == 0.0);
}

TEST_CASE("every parameter gradient matches central differences on a small network") {
    for (Activation act : {Activation::Tanh, Activation::Relu}) {
        MultitaskNet net{tiny_config(act)};
        std::mt19937_64 rng(21);
        auto params = net.init_params(5);
        // non-zero biases so ReLU kinks are unlikely to sit on a probe
        std::normal_distribution<double> n(0.0, 0.05);
        for (auto& v : params.values) v += n(rng);
        const auto x = random_input(rng, net.config().input.size());
        const auto s = full_sample(rng, 4);
        const TaskWeights w{1.0, 0.7, 1.3};
        const auto g = net.backward(params, x, s, w);

        auto f = [&](std::span<const double> theta) {
            NetworkParams q = params;
            q.values.assign(theta.begin(), theta.end());
            return loss_total(net.forward(q, x), s, w).total;
        };
        std::size_t bad = 0;
        for (std::size_t i = 0; i < params.count(); ++i) {
            const double num = oracle::central_difference(f, params.values, i, 1e-6);
            if (oracle::relative_error(g.grads.values[i], num, 1e-7) > 1e-4) ++bad;
        }
        CHECK(bad == 0);
        CHECK(g.loss.total == doctest::Approx(f(params.values)));
    }
}

TEST_CASE("zero task weight gives exactly zero head gradient") {
    MultitaskNet net{tiny_config()};
    std::mt19937_64 rng(2);
    const auto params = net.init_params(2);
    const auto x = random_input(rng, net.config().input.size());
    const auto s = full_sample(rng, 4);
    const auto g = net.backward(params, x, s, {1.0, 0.0, 1.0});
    for (const auto& name : head_block_names(Head::Pose)) {
        for (double v : g.grads.view(name)) CHECK(v == 0.0);
    }
    const auto g2 = net.backward(params, x, s, {0.0, 1.0, 0.0});
    for (const auto& name : head_block_names(Head::Detection)) {
        for (double v : g2.grads.view(name)) CHECK(v == 0.0);
    }
    for (const auto& name : head_block_names(Head::Action)) {
        for (double v : g2.grads.view(name)) CHECK(v == 0.0);
    }
}

TEST_CASE("training lowers the loss and separates the toy classes") {
    const auto c = tiny_config();
    MultitaskNet net{c};
    const auto data = toy_regions(c, 64, 3);
    TrainConfig cfg;
    cfg.iterations = 200;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    cfg.positive_fraction = 0.5;
    cfg.weights = {1.0, 1.0, 1.0};
    const auto r = train(net, data, cfg);
    REQUIRE(r.trace.size() == 200);
    double early = 0.0, late = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
        early += r.trace[i].total;
        late += r.trace[180 + i].total;
    }
    CHECK(late < 0.5 * early);
    std::vector<double> x(c.input.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        data.render(i, x);
        const bool pos = net.forward(r.state.params, x).person_prob() > 0.5;
        correct += pos == (data.sample(i).det_label == DetLabel::Positive) ? 1 : 0;
    }
    CHECK(correct >= 60);
}

TEST_CASE("training is deterministic and independent of the thread count") {
    const auto c = tiny_config();
    MultitaskNet net{c};
    const auto data = toy_regions(c, 40, 4);
    TrainConfig cfg;
    cfg.iterations = 25;
    cfg.batch_size = 8;
    cfg.seed = 9;
    cfg.threads = 1;
    const auto a = train(net, data, cfg);
    const auto b = train(net, data, cfg);
    cfg.threads = 3;
    const auto d = train(net, data, cfg);
    CHECK(a.state.params == b.state.params);
    CHECK(a.state.params == d.state.params);
    CHECK(a.state.velocity == d.state.velocity);
}

TEST_CASE("heads outside the objective keep their parameters bit for bit") {
    const auto c = tiny_config();
    MultitaskNet net{c};
    const auto data = toy_regions(c, 40, 5);
    for (const TaskWeights w : {TaskWeights{0, 1, 0}, TaskWeights{0, 0, 1}, TaskWeights{1, 0, 0}, TaskWeights{1, 0, 1}}) {
        TrainConfig cfg;
        cfg.iterations = 30;
        cfg.batch_size = 8;
        cfg.weights = w;
        cfg.seed = 1;
        const auto before = net.init_params(cfg.seed);
        const auto r = train(net, data, cfg);
        const std::pair<Head, double> heads[] = {{Head::Detection, w.detection}, {Head::Pose, w.pose},
                                                 {Head::Action, w.action}};
        for (const auto& [head, lambda] : heads) {
            for (const auto& name : head_block_names(head)) {
                const auto b = before.view(name);
                const auto a = r.state.params.view(name);
                const bool same = std::equal(a.begin(), a.end(), b.begin());
                CHECK(same == (lambda == 0.0));
            }
        }
        for (const auto& p : r.trace) {
            if (w.detection == 0.0) CHECK(p.detection == 0.0);
            if (w.pose == 0.0) CHECK(p.pose == 0.0);
            if (w.action == 0.0) CHECK(p.action == 0.0);
        }
    }
}

TEST_CASE("resume continues from the saved state") {
    const auto c = tiny_config();
    MultitaskNet net{c};
    const auto data = toy_regions(c, 40, 6);
    TrainConfig cfg;
    cfg.iterations = 10;
    cfg.batch_size = 8;
    const auto first = train(net, data, cfg);
    const auto second = train(net, data, cfg, first.state);
    CHECK(second.state.iterations_done == 20);
    CHECK(second.trace.front().iteration == 10);
    CHECK_FALSE(second.state.params == first.state.params);

    MultitaskNet other{NetworkConfig{}};
    CHECK_THROWS_AS(train(other, data, cfg, first.state), ConfigError);
}

TEST_CASE("divergence is reported") {
    const auto c = tiny_config();
    MultitaskNet net{c};
    const auto data = toy_regions(c, 20, 7);
    TrainConfig cfg;
    cfg.iterations = 5;
    cfg.batch_size = 4;
    cfg.max_loss = 1e-9;
    CHECK_THROWS_AS(train(net, data, cfg), TrainingDiverged);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.positive_fraction = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.weights = {-1, 0, 0};
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("action detection scores") {
    HeadOutputs o;
    o.det_probs = {0.2, 0.8};
    o.action_probs = {0.5, 0.25, 0.25};
    const auto prod = score_action_detection(o);
    CHECK(prod[0] == doctest::Approx(0.4));
    CHECK(score_action_detection(o, ActionScoreMode::ActionOnly) == o.action_probs);
}
