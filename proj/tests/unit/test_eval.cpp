#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <random>

#include "mtr/eval.hpp"
#include "oracles.hpp"

using namespace mtr;

namespace {

ScoredPrediction det(std::size_t image, double score, Box b, std::size_t label = 0) {
    return {image, score, BoxPayload{b, label}};
}

ScoredPrediction kpt(std::size_t image, double score, double x, double y, std::size_t k) {
    return {image, score, KeypointPayload{x, y, k}};
}

// Torso height 5: shoulders at y = 0, hips at y = 5.
Instance person(const Box& box, double dx = 0.0, std::optional<std::size_t> action = std::nullopt) {
    std::vector<Keypoint> kps(13, Keypoint{dx + 1, 2, true});
    kps[1] = {dx + 0, 0, true};
    kps[4] = {dx + 2, 0, true};
    kps[7] = {dx + 0, 5, true};
    kps[10] = {dx + 2, 5, true};
    return {box, kps, action};
}

PRCurve curve_of(std::initializer_list<bool> ranked, std::size_t positives) {
    std::vector<ScoredOutcome> o;
    double s = 1.0;
    for (bool tp : ranked) {
        o.push_back({s, tp});
        s -= 0.1;
    }
    return pr_curve(o, positives);
}

}  // namespace

TEST_CASE("average precision: perfect, empty and hand-enumerated rankings") {
    CHECK(average_precision(curve_of({true, true, true}, 3)) == 1.0);
    CHECK(average_precision(curve_of({false, false}, 2)) == 0.0);

    // TP, FP, TP, TP over 3 positives: precisions at the hits are 1, 2/3, 3/4
    const auto c = curve_of({true, false, true, true}, 3);
    CHECK(average_precision(c, ApInterpolation::NonInterpolated) ==
          doctest::Approx((1.0 + 2.0 / 3.0 + 0.75) / 3.0).epsilon(1e-12));
    CHECK(average_precision(c, ApInterpolation::NonInterpolated) == doctest::Approx(0.8056).epsilon(1e-4));
    // the envelope lifts the 2/3 point to the 3/4 reached later
    CHECK(average_precision(c, ApInterpolation::AllPoints) == doctest::Approx((1.0 + 0.75 + 0.75) / 3.0));
    CHECK(average_precision(c, ApInterpolation::ElevenPoint) == doctest::Approx((4 * 1.0 + 7 * 0.75) / 11.0));
}

TEST_CASE("zero positives give AP 0 and a warning") {
    const auto r = evaluate_detection(std::vector<ScoredPrediction>{det(0, 0.9, Box(0, 0, 1, 1))}, {});
    CHECK(r.ap[0] == 0.0);
    CHECK(r.mean_ap == 0.0);
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("no positives") != std::string::npos);
}

TEST_CASE("pr curve invariants") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 300; ++i) {
        const auto c = oracle::random_eval_case(rng, i % 2 == 0);
        const auto curve = pr_curve(c.ranking, c.ranking_positives);
        double prev = 0.0;
        for (const auto& p : curve.points) {
            CHECK(p.recall >= prev);
            CHECK(p.recall <= 1.0);
            CHECK(p.precision >= 0.0);
            CHECK(p.precision <= 1.0);
            prev = p.recall;
        }
        for (auto mode : {ApInterpolation::AllPoints, ApInterpolation::ElevenPoint, ApInterpolation::NonInterpolated}) {
            const double ap = average_precision(curve, mode);
            CHECK(ap >= 0.0);
            CHECK(ap <= 1.0);
        }
        // the envelope never lies below the raw precision
        CHECK(average_precision(curve) >= average_precision(curve, ApInterpolation::NonInterpolated) - 1e-15);
    }
}

TEST_CASE("tied scores enter the curve together") {
    const std::vector<ScoredOutcome> a = {{0.5, true}, {0.5, false}, {0.2, true}};
    const std::vector<ScoredOutcome> b = {{0.5, false}, {0.5, true}, {0.2, true}};
    const auto ca = pr_curve(a, 2), cb = pr_curve(b, 2);
    REQUIRE(ca.points.size() == 2);
    CHECK(ca.points[0].precision == 0.5);
    CHECK(average_precision(ca) == average_precision(cb));
    CHECK_THROWS_AS(pr_curve(std::vector<ScoredOutcome>{{NAN, true}}, 1), std::invalid_argument);
}

TEST_CASE("AP is invariant under strictly monotone score transforms") {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 100; ++i) {
        const auto c = oracle::random_eval_case(rng, i % 2 == 1);
        auto mapped = c.ranking;
        for (auto& o : mapped) o.score = std::exp(3.0 * o.score) - 7.0;
        CHECK(average_precision(pr_curve(mapped, c.ranking_positives)) ==
              average_precision(pr_curve(c.ranking, c.ranking_positives)));
    }
}

TEST_CASE("detection matching") {
    const GroundTruthBoxes gt = {{0, {Box(0, 0, 10, 10)}}};
    SUBCASE("exact box") {
        const auto m = match_detections(std::vector{det(0, 0.9, Box(0, 0, 10, 10))}, gt);
        REQUIRE(m.curve.points.size() == 1);
        CHECK(m.curve.points[0].recall == 1.0);
        CHECK(m.curve.points[0].precision == 1.0);
    }
    SUBCASE("duplicates: the higher score wins") {
        const auto m = match_detections(std::vector{det(0, 0.4, Box(0, 0, 10, 10)), det(0, 0.8, Box(0, 0, 9, 10))}, gt);
        CHECK(m.true_positive == std::vector<bool>{false, true});
    }
    SUBCASE("IoU exactly 0.5 is a false positive") {
        const auto m = match_detections(std::vector{det(0, 0.9, Box(0, 0, 5, 10))}, gt);
        CHECK_FALSE(m.true_positive[0]);
    }
    SUBCASE("other images do not match") {
        const auto m = match_detections(std::vector{det(1, 0.9, Box(0, 0, 10, 10))}, gt);
        CHECK_FALSE(m.true_positive[0]);
        CHECK(m.curve.total_positives == 1);
    }
    CHECK_THROWS_AS(match_detections(std::vector<ScoredPrediction>{}, gt, 0.0), std::invalid_argument);
}

TEST_CASE("a prediction claims the highest-overlap free ground truth") {
    const GroundTruthBoxes gt = {{0, {Box(0, 0, 10, 10), Box(1, 0, 11, 10)}}};
    const auto m = match_detections(std::vector{det(0, 0.9, Box(1, 0, 11, 10)), det(0, 0.8, Box(0, 0, 10, 10))}, gt);
    CHECK(m.matched[0] == std::optional<std::size_t>{1});
    CHECK(m.matched[1] == std::optional<std::size_t>{0});
}

TEST_CASE("matching and AP agree with exhaustive enumeration") {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 400; ++i) {
        const auto c = oracle::random_eval_case(rng, i % 2 == 0);
        const auto m = match_detections(c.detections, c.boxes);
        CHECK(m.true_positive == oracle::exhaustive_box_matching(c.detections, c.boxes, 0.5));
        CHECK(evaluate_detection(c.detections, c.boxes).ap[0] == oracle::exhaustive_detection_ap(c.detections, c.boxes));
        for (auto mode : {ApInterpolation::AllPoints, ApInterpolation::ElevenPoint, ApInterpolation::NonInterpolated}) {
            CHECK(average_precision(pr_curve(c.ranking, c.ranking_positives), mode) ==
                  oracle::threshold_ap(c.ranking, c.ranking_positives, mode));
        }
        const auto apk = evaluate_apk(c.keypoints, c.instances);
        const auto ref = oracle::exhaustive_apk(c.keypoints, c.instances);
        CHECK(apk.ap == ref.ap);
        const auto ad = evaluate_action_detection(c.action_detections, c.instances, 3);
        CHECK(ad.ap == oracle::exhaustive_action_detection(c.action_detections, c.instances, 3));
    }
}

TEST_CASE("APK: exact keypoints score 1, distance exactly 0.2 H does not count") {
    const GroundTruthInstances gt = {{0, {person(Box(-1, -1, 3, 8))}}};
    std::vector<ScoredPrediction> exact;
    for (std::size_t k = 0; k < 13; ++k) {
        const auto& g = (*gt.at(0)[0].keypoints)[k];
        exact.push_back(kpt(0, 1.0 - 0.01 * static_cast<double>(k), g.x, g.y, k));
    }
    const auto r = evaluate_apk(exact, gt);
    for (double ap : r.ap) CHECK(ap == 1.0);
    CHECK(r.mean_ap == 1.0);

    // H = 5, alpha * H = 1
    const auto edge = evaluate_apk(std::vector{kpt(0, 0.9, 1.0, 0.0, 0)}, GroundTruthInstances{
        {0, {[] {
             auto p = person(Box(-1, -1, 3, 8));
             (*p.keypoints)[0] = {0.0, 0.0, true};
             return p;
         }()}}});
    CHECK(edge.ap[0] == 0.0);
    const auto inside = evaluate_apk(std::vector{kpt(0, 0.9, 0.999, 0.0, 0)}, GroundTruthInstances{
        {0, {[] {
             auto p = person(Box(-1, -1, 3, 8));
             (*p.keypoints)[0] = {0.0, 0.0, true};
             return p;
         }()}}});
    CHECK(inside.ap[0] == 1.0);
}

TEST_CASE("APK: two predictions near one keypoint, only the higher score counts") {
    const GroundTruthInstances gt = {{0, {person(Box(-1, -1, 3, 8))}}};
    const auto r = evaluate_apk(std::vector{kpt(0, 0.3, 1.0, 2.1, 0), kpt(0, 0.7, 1.1, 2.0, 0)}, gt);
    REQUIRE(r.curves[0].points.size() == 2);
    CHECK(r.curves[0].points[0].precision == 1.0);
    CHECK(r.curves[0].points[1].precision == 0.5);
}

TEST_CASE("APK excludes instances without a torso height") {
    auto p = person(Box(0, 0, 4, 8));
    (*p.keypoints)[7].visible = false;
    const GroundTruthInstances gt = {{0, {p, person(Box(10, 0, 14, 8), 10.0)}}};
    const auto r = evaluate_apk(std::vector<ScoredPrediction>{}, gt);
    CHECK(r.excluded_instances == 1);
    CHECK(r.positives[0] == 1);
    CHECK_FALSE(r.warnings.empty());
    CHECK_THROWS_AS(evaluate_apk(std::vector{kpt(0, 1, 0, 0, 13)}, gt), std::invalid_argument);
}

TEST_CASE("action classification ranks every box per action") {
    const std::vector<ClassifiedBox> boxes = {{0, {0.9, 0.1}}, {1, {0.2, 0.8}}, {1, {0.6, 0.4}}};
    const auto r = evaluate_action_classification(boxes, 2);
    CHECK(r.ap[0] == 1.0);
    CHECK(r.positives[1] == 2);
    // action 1 ranking: 0.8 (TP), 0.4 (TP), 0.1 (FP)
    CHECK(r.ap[1] == 1.0);
    CHECK(r.mean_ap == 1.0);
    CHECK(r.class_names[0] == "jumping");
    CHECK_THROWS_AS(evaluate_action_classification(std::vector<ClassifiedBox>{{0, {0.5}}}, 2), std::invalid_argument);
    CHECK_THROWS_AS(evaluate_action_classification(std::vector<ClassifiedBox>{{2, {0.5, 0.5}}}, 2),
                    std::invalid_argument);
}

TEST_CASE("mean AP is the arithmetic mean of the per-class values") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ClassifiedBox> boxes;
    for (int i = 0; i < 40; ++i) boxes.push_back({static_cast<std::size_t>(i % 4), {u(rng), u(rng), u(rng), u(rng)}});
    const auto r = evaluate_action_classification(boxes, 4);
    double sum = 0.0;
    for (double a : r.ap) sum += a;
    CHECK(r.mean_ap == doctest::Approx(sum / 4.0).epsilon(1e-15));
}

TEST_CASE("action detection needs both the box and the label") {
    const GroundTruthInstances gt = {{0, {person(Box(0, 0, 10, 10), 0.0, std::size_t{1})}}};
    const auto r = evaluate_action_detection(
        std::vector{det(0, 0.9, Box(0, 0, 10, 10), 0), det(0, 0.8, Box(0, 0, 10, 10), 1)}, gt, 2);
    CHECK(r.positives == std::vector<std::size_t>{0, 1});
    CHECK(r.ap[0] == 0.0);
    CHECK(r.ap[1] == 1.0);
}

TEST_CASE("tied predictions are counted") {
    const auto r = evaluate_detection(
        std::vector{det(0, 0.5, Box(0, 0, 1, 1)), det(0, 0.5, Box(2, 2, 3, 3)), det(0, 0.1, Box(4, 4, 5, 5))},
        {{0, {Box(0, 0, 1, 1)}}});
    CHECK(r.tied_predictions == 2);
}

TEST_CASE("non-maximum suppression") {
    const std::vector<ScoredPrediction> p = {
        det(0, 0.5, Box(0, 0, 10, 10)), det(0, 0.9, Box(1, 0, 11, 10)), det(0, 0.7, Box(20, 0, 30, 10)),
        det(1, 0.6, Box(0, 0, 10, 10)), det(0, 0.8, Box(0, 0, 10, 10), 3),
    };
    const auto kept = non_max_suppression_indices(p, 0.3);
    CHECK(kept == std::vector<std::size_t>{1, 4, 2, 3});
    const auto boxes = non_max_suppression(p, 0.3);
    REQUIRE(boxes.size() == 4);
    CHECK(boxes[0].score == 0.9);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        for (std::size_t j = i + 1; j < kept.size(); ++j) {
            const auto& a = p[kept[i]];
            const auto& b = p[kept[j]];
            if (a.image_id == b.image_id && a.box().label == b.box().label) {
                CHECK(iou(a.box().box, b.box().box) <= 0.3);
            }
        }
    }
    // overlap exactly at the threshold survives
    const auto edge = non_max_suppression(std::vector{det(0, 0.9, Box(0, 0, 10, 1)), det(0, 0.5, Box(0, 0, 3, 1))}, 0.3);
    CHECK(edge.size() == 2);
}

TEST_CASE("rank_descending is stable") {
    const std::vector<double> s = {0.2, 0.9, 0.2, 0.5};
    CHECK(rank_descending(s) == std::vector<std::size_t>{1, 3, 0, 2});
}
