#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "mtr/rescore.hpp"
#include "oracles.hpp"

using namespace mtr;

namespace {

struct Problem {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
};

Problem blobs(std::mt19937_64& rng, std::size_t n, std::size_t dim, double separation) {
    std::normal_distribution<double> g(0.0, 1.0);
    Problem p;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i % 2 == 0 ? 1 : -1;
        std::vector<double> v(dim);
        for (auto& c : v) c = g(rng);
        v[0] += label * separation;
        p.x.push_back(v);
        p.y.push_back(label);
    }
    return p;
}

Instance torso_person(double x0) {
    std::vector<Keypoint> kps(13, Keypoint{x0 + 1, 2, true});
    kps[1] = {x0, 0, true};
    kps[4] = {x0 + 2, 0, true};
    kps[7] = {x0, 5, true};
    kps[10] = {x0 + 2, 5, true};
    return {Box(x0 - 1, -1, x0 + 3, 8), kps, std::nullopt};
}

}  // namespace

TEST_CASE("optimal bias minimizes the hinge sum") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 2 + rng() % 12;
        std::vector<double> m(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = g(rng);
            y[i] = i == 0 ? 1 : (i == 1 ? -1 : (rng() % 2 ? 1 : -1));
        }
        auto hinge = [&](double b) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += std::max(0.0, 1.0 - y[i] * (m[i] + b));
            return s;
        };
        const double b = optimal_bias(m, y);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) best = std::min(best, hinge(y[i] - m[i]));
        CHECK(hinge(b) <= best + 1e-12);
    }
    CHECK_THROWS_AS(optimal_bias(std::vector<double>{1.0}, std::vector<int>{1}), std::invalid_argument);
}

TEST_CASE("SVM objective lands within 1% of the dual optimum") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 10; ++t) {
        const auto p = blobs(rng, 20, 2 + t % 4, 1.0);
        const double C = std::pow(10.0, -1.0 + 0.2 * t);
        const auto ref = oracle::smo_dual(p.x, p.y, C);
        CHECK(ref.primal_objective - ref.dual_objective <= 1e-6 * ref.dual_objective);
        SvmTrainConfig cfg;
        cfg.C = C;
        const auto model = svm_train(p.x, p.y, cfg);
        const double obj = svm_objective(model, p.x, p.y);
        CHECK(obj <= 1.01 * ref.dual_objective);
    }
}

TEST_CASE("objective trace never increases and ends at the returned model") {
    std::mt19937_64 rng(3);
    const auto p = blobs(rng, 60, 3, 0.8);
    SvmTrainConfig cfg;
    cfg.iterations = 2000;
    const auto r = svm_train_traced(p.x, p.y, cfg);
    REQUIRE_FALSE(r.objective_trace.empty());
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
        CHECK(r.objective_trace[i] <= r.objective_trace[i - 1]);
    }
    CHECK(r.objective_trace.back() == doctest::Approx(svm_objective(r.model, p.x, p.y)).epsilon(1e-9));
}

TEST_CASE("SVM training is seeded and handles minibatches") {
    std::mt19937_64 rng(4);
    const auto p = blobs(rng, 300, 4, 2.0);
    SvmTrainConfig cfg;
    cfg.batch_size = 64;
    cfg.iterations = 3000;
    cfg.seed = 5;
    const auto a = svm_train(p.x, p.y, cfg);
    CHECK(a == svm_train(p.x, p.y, cfg));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < p.x.size(); ++i) correct += (svm_score(a, p.x[i]) > 0) == (p.y[i] > 0) ? 1 : 0;
    CHECK(correct >= 270);
}

TEST_CASE("SVM input validation") {
    const std::vector<std::vector<double>> x = {{1.0}, {2.0}};
    CHECK_THROWS_AS(svm_train(x, std::vector<int>{1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(svm_train(x, std::vector<int>{1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(svm_train(x, std::vector<int>{1}), std::invalid_argument);
    const std::vector<std::vector<double>> ragged = {{1.0}, {2.0, 3.0}};
    CHECK_THROWS_AS(svm_train(ragged, std::vector<int>{1, -1}), std::invalid_argument);
    SvmTrainConfig cfg;
    cfg.C = 0.0;
    CHECK_THROWS_AS(svm_train(x, std::vector<int>{1, -1}, cfg), std::invalid_argument);
}

TEST_CASE("SVM sets round-trip through their file format") {
    const std::vector<LinearSvm> models = {{{0.5, -1.25, 3.0}, 0.125, 2.0, 9}, {{}, -1.0, 0.5, 0}};
    CHECK(decode_svm_set(encode_svm_set(models)) == models);
    const auto path = std::filesystem::temp_directory_path() / "mtr_test_svms.bin";
    save_svm_set(path, models);
    CHECK(load_svm_set(path) == models);
    std::filesystem::remove(path);
    auto bytes = encode_svm_set(models);
    bytes[0] = 'X';
    CHECK_THROWS(decode_svm_set(bytes));
    CHECK_THROWS(decode_svm_set(encode_svm_set(models).substr(0, 20)));
}

TEST_CASE("keypoint SVM sets use the strict distance rule") {
    // H = 5, alpha * H = 1; ground truth nose at (1, 2)
    const GroundTruthInstances gt = {{0, {torso_person(0.0)}}};
    std::vector<KeypointRegion> regions(3);
    for (auto& r : regions) r.predicted.assign(13, Keypoint{100, 100, true});
    regions[0].predicted[0] = {1.5, 2.0, true};
    regions[1].predicted[0] = {2.0, 2.0, true};  // exactly alpha * H away
    regions[2].image_id = 1;
    regions[2].predicted[0] = {1.0, 2.0, true};  // right spot, wrong image
    const auto sets = build_keypoint_svm_sets(regions, gt);
    REQUIRE(sets.size() == 13);
    CHECK(sets[0].positives == std::vector<std::size_t>{0});
    CHECK(sets[0].negatives == std::vector<std::size_t>{1, 2});
    CHECK(sets[5].positives.empty());
}

TEST_CASE("context feature: own score, other people, overlapping objects") {
    const Box region(0, 0, 10, 10);
    const std::vector<std::vector<double>> others = {{0.1, 0.7, 0.2}, {0.5, 0.3, 0.0}};
    const std::vector<ObjectDetection> objects = {
        {Box(0, 0, 10, 10), 1, 0.4},
        {Box(0, 0, 10, 10), 1, 0.9},
        {Box(0, 0, 1, 10), 0, 0.8},    // IoU exactly 0.1: not overlapping
        {Box(50, 50, 60, 60), 2, 0.99},
    };
    const auto f = build_context_feature(region, 0.6, others, objects, 3, 4);
    CHECK(f.own_score == 0.6);
    CHECK(f.others_max == std::vector<double>{0.5, 0.7, 0.2});
    CHECK(f.object_max == std::vector<double>{0.0, 0.9, 0.0, 0.0});
    CHECK(f.to_vector().size() == 1 + 3 + 4);

    const auto alone = build_context_feature(region, 0.2, {}, {}, 3, 4);
    for (double v : alone.others_max) CHECK(v == 0.0);
    for (double v : alone.object_max) CHECK(v == 0.0);
    CHECK_THROWS_AS(build_context_feature(region, 0.2, std::vector<std::vector<double>>{{0.1}}, {}, 3, 4),
                    std::invalid_argument);
}

TEST_CASE("rescore_actions applies one model per action") {
    ContextFeature f;
    f.own_score = 1.0;
    f.others_max = {0.0, 2.0};
    f.object_max = {3.0};
    const std::vector<LinearSvm> svms = {{{1, 0, 0, 0}, 0.5}, {{0, 1, 1, 1}, 0.0}};
    const auto s = rescore_actions({{f, f}}, svms);
    CHECK(s[0][0] == 1.5);
    CHECK(s[0][1] == 5.0);
    CHECK_THROWS_AS(rescore_actions({{f}}, svms), std::invalid_argument);
}
