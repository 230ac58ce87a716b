#pragma once

// Slow reference implementations the library is checked against. None of
// these call into the code under test except for plain data types.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "mtr/eval.hpp"
#include "mtr/geometry.hpp"
#include "mtr/labeling.hpp"

namespace oracle {

// Fraction of grid cell centers (spacing `step`) covered by both boxes over
// those covered by either.
double raster_iou(const mtr::Box& a, const mtr::Box& b, double step = 0.01);

// Exact IoU from the coordinates, written out independently.
double plain_iou(const mtr::Box& a, const mtr::Box& b);

double plain_torso_height(std::span<const mtr::Keypoint> kps, bool& ok);

// AP by enumerating every distinct score threshold: for each threshold t the
// point is (recall, precision) of the set {score >= t}.
double threshold_ap(std::span<const mtr::ScoredOutcome> outcomes, std::size_t positives,
                    mtr::ApInterpolation mode = mtr::ApInterpolation::AllPoints);

// Enumerates every injective assignment of predictions to ground truths and
// returns the true-positive flags of the assignment whose per-prediction
// sequence (matched, quality, -gt index), taken in score order, is
// lexicographically largest.
std::vector<bool> exhaustive_box_matching(std::span<const mtr::ScoredPrediction> preds,
                                          const mtr::GroundTruthBoxes& gts, double threshold);

std::vector<bool> exhaustive_keypoint_matching(std::span<const mtr::ScoredPrediction> preds,
                                               const mtr::GroundTruthInstances& gts, std::size_t keypoint,
                                               double alpha);

double exhaustive_detection_ap(std::span<const mtr::ScoredPrediction> preds, const mtr::GroundTruthBoxes& gts,
                               double threshold = 0.5);

struct ApkOracle {
    std::vector<double> ap;
    double mean_ap = 0.0;
};
ApkOracle exhaustive_apk(std::span<const mtr::ScoredPrediction> preds, const mtr::GroundTruthInstances& gts,
                         double alpha = 0.2);

std::vector<double> exhaustive_action_detection(std::span<const mtr::ScoredPrediction> preds,
                                                const mtr::GroundTruthInstances& gts, std::size_t num_actions,
                                                double threshold = 0.5);

// Linear soft-margin SVM solved in the dual by SMO with maximal-violating
// pair selection.
struct DualSolution {
    std::vector<double> alpha;
    std::vector<double> w;
    double b = 0.0;
    double dual_objective = 0.0;
    double primal_objective = 0.0;  // 0.5|w|^2 + C sum hinge, with the best bias for w
    std::size_t iterations = 0;
};
DualSolution smo_dual(std::span<const std::vector<double>> x, std::span<const int> y, double C,
                      double tol = 1e-12, std::size_t max_iter = 2000000);

double primal_objective(std::span<const double> w, double b, std::span<const std::vector<double>> x,
                        std::span<const int> y, double C);

// Central difference of f at x along coordinate i.
double central_difference(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                          std::size_t i, double h = 1e-5);

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-8);

// --- random fixtures ----------------------------------------------------------

mtr::Box random_box(std::mt19937_64& rng, double extent, bool integer_grid);

// A small evaluation problem: at most 6 predictions and 4 ground truths per
// task, spread over one or two images. Integer-grid cases produce exact ties
// in scores and overlaps.
struct EvalCase {
    mtr::GroundTruthBoxes boxes;
    mtr::GroundTruthInstances instances;
    std::vector<mtr::ScoredPrediction> detections;
    std::vector<mtr::ScoredPrediction> keypoints;
    std::vector<mtr::ScoredPrediction> action_detections;
    std::vector<mtr::ScoredOutcome> ranking;
    std::size_t ranking_positives = 0;
};
EvalCase random_eval_case(std::mt19937_64& rng, bool integer_grid);
std::vector<mtr::Keypoint> random_keypoints(std::mt19937_64& rng, const mtr::Box& box, double visible_rate);

}  // namespace oracle
