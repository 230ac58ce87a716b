#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mtr/geometry.hpp"
#include "mtr/labeling.hpp"

namespace mtr {

struct BoxPayload {
    Box box;
    std::size_t label = 0;  // class: person = 0, or an action / object index
};

struct KeypointPayload {
    double x = 0.0;
    double y = 0.0;
    std::size_t keypoint = 0;
};

struct ScoredPrediction {
    std::size_t image_id = 0;
    double score = 0.0;
    std::variant<BoxPayload, KeypointPayload> payload;

    const BoxPayload& box() const { return std::get<BoxPayload>(payload); }
    const KeypointPayload& keypoint() const { return std::get<KeypointPayload>(payload); }
    bool has_box() const noexcept { return std::holds_alternative<BoxPayload>(payload); }
};

struct PRPoint {
    double recall = 0.0;
    double precision = 0.0;
};

/// One point per distinct score threshold, in descending score order.
/// Predictions with equal scores enter the curve together, so the curve is
/// independent of the input order of tied predictions.
struct PRCurve {
    std::vector<PRPoint> points;
    std::size_t total_positives = 0;
};

struct ScoredOutcome {
    double score = 0.0;
    bool true_positive = false;
};

PRCurve pr_curve(std::span<const ScoredOutcome> outcomes, std::size_t total_positives);

enum class ApInterpolation {
    AllPoints,        // area under the monotone precision envelope (VOC 2010+)
    ElevenPoint,      // VOC 2007 style
    NonInterpolated,  // sum of recall steps times raw precision
};

/// AP of a curve; 0 when the curve has no positives.
double average_precision(const PRCurve& curve, ApInterpolation mode = ApInterpolation::AllPoints);

using GroundTruthBoxes = std::map<std::size_t, std::vector<Box>>;
using GroundTruthInstances = std::map<std::size_t, std::vector<Instance>>;

struct DetectionMatch {
    PRCurve curve;
    std::vector<bool> true_positive;                  // per input prediction
    std::vector<std::optional<std::size_t>> matched;  // GT index within the prediction's image
};

/// Greedy matching in descending score order (stable on ties). A prediction
/// is a true positive iff some still-unmatched GT in its image has
/// IoU > iou_threshold; it claims the one with the highest IoU (lowest index
/// on ties).
DetectionMatch match_detections(std::span<const ScoredPrediction> preds, const GroundTruthBoxes& gts,
                                double iou_threshold = 0.5);

struct APResult {
    std::vector<std::string> class_names;
    std::vector<double> ap;
    std::vector<std::size_t> positives;
    std::vector<PRCurve> curves;
    double mean_ap = 0.0;
    std::size_t excluded_instances = 0;  // GT instances that could not anchor a match
    std::size_t tied_predictions = 0;    // predictions sharing their score with another in the same class
    std::vector<std::string> warnings;
};

struct EvalOptions {
    ApInterpolation interpolation = ApInterpolation::AllPoints;
    double iou_threshold = 0.5;
    double apk_alpha = 0.2;
};

/// Person detection AP (one class).
APResult evaluate_detection(std::span<const ScoredPrediction> preds, const GroundTruthBoxes& gts,
                            const EvalOptions& opts = {});

/// Keypoint AP per keypoint type. A prediction is correct iff an unmatched
/// instance with that keypoint visible lies at distance < alpha * H, where H
/// is that instance's torso height. Instances without a torso height are
/// excluded and counted.
APResult evaluate_apk(std::span<const ScoredPrediction> preds, const GroundTruthInstances& gts,
                      const EvalOptions& opts = {});

struct ClassifiedBox {
    std::size_t true_action = 0;
    std::vector<double> scores;  // one per action
};

/// Action classification on ground-truth boxes: per action, rank every box
/// by its score for that action.
APResult evaluate_action_classification(std::span<const ClassifiedBox> boxes, std::size_t num_actions,
                                        const EvalOptions& opts = {});

/// Action detection: each (person, action) pair is a detection class matched
/// at IoU > threshold against instances annotated with that action.
APResult evaluate_action_detection(std::span<const ScoredPrediction> preds, const GroundTruthInstances& gts,
                                   std::size_t num_actions, const EvalOptions& opts = {});

/// Greedy NMS within each (image, label) group; returns kept predictions in
/// descending score order.
std::vector<ScoredPrediction> non_max_suppression(std::span<const ScoredPrediction> preds, double iou_threshold = 0.3);
/// Same as non_max_suppression, returning indices into `preds`.
std::vector<std::size_t> non_max_suppression_indices(std::span<const ScoredPrediction> preds,
                                                     double iou_threshold = 0.3);

/// Indices of `scores` in descending order, stable on ties.
std::vector<std::size_t> rank_descending(std::span<const double> scores);

}  // namespace mtr
